//! Exact opportunity-cost laboratory for accept/reject demand management
//! with a single vehicle on a line.
//!
//! Every instance is small enough (one potential request per epoch, ten
//! epochs) to solve the full MDP by backward recursion over order sets. On
//! top of the optimal policy the crate solves two restricted policies that
//! see only the displacement cost (`Dpc`) or only the marginal cost to serve
//! (`Mcts`), a myopic insertion-cost benchmark, and the state-level error and
//! regret metrics that compare any policy against the optimum.

pub mod aggregate;
pub mod domain;
pub mod dp;
pub mod error;
pub mod format;
pub mod instgen;
pub mod metrics;
pub mod policies;
pub mod routing;
pub mod viz;

pub use domain::{
    enumerate_settings, Constraint, ConstraintKind, Customer, Instance, LocationDist, OrderSet, Profitability,
    RevenueDist, Setting, TableKind, ValueTable,
};
pub use dp::{decompose_optimal, evaluate_policy, solve_dpc, solve_mcts, solve_optimal, PolicyKind, PolicySolution};
pub use error::{Error, Result};
pub use policies::{as_rule, myopic_rule, DecisionRule};
