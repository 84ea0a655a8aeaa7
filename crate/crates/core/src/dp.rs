//! Exact backward recursion over order sets.
//!
//! With one potential customer per epoch (customer `t` requests in epoch `t`
//! with probability 1/2) and all routing cost realised after the booking
//! horizon, every solver here is an instance of
//!
//! ```text
//! W_T(A)     = terminal(A)
//! W_{t-1}(A) = 1/2 * g * step(r_t, ΔW) + W_t(A),   ΔW = W_t(A) - W_t(A ∪ {t})
//! ```
//!
//! over feasible `A ⊆ {1..t-1}`, where `g = 0` whenever `A ∪ {t}` is infeasible.

use crate::domain::{Instance, OrderSet, TableKind, ValueTable};
use crate::policies::{Choice, DecisionRule};
use crate::routing::TourCache;

/// Probability that the epoch's customer requests.
pub const ARRIVAL_PROBABILITY: f64 = 0.5;

/// Accept when `r - oc >= -ACCEPT_TOLERANCE`.
pub const ACCEPT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Optimal,
    Dpc,
    Mcts,
    Myopic,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Optimal,
        PolicyKind::Dpc,
        PolicyKind::Mcts,
        PolicyKind::Myopic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Dpc => "dpc",
            PolicyKind::Mcts => "mcts",
            PolicyKind::Myopic => "myopic",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        PolicyKind::ALL.into_iter().find(|k| k.label() == label)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Standard threshold rule shared by every policy.
pub fn accepts(revenue: f64, oc: f64) -> bool {
    revenue - oc >= -ACCEPT_TOLERANCE
}

#[derive(Debug, Clone)]
pub struct PolicySolution {
    pub kind: PolicyKind,
    /// V for the optimal policy, R̃ for DPC, F̃ for MCTS.
    pub table: ValueTable,
    pub rule: DecisionRule,
    /// Value of the empty state at epoch 0 under this solver's own recursion.
    pub root_value: f64,
}

impl PolicySolution {
    pub fn decision(&self, epoch: usize, state: OrderSet) -> bool {
        self.rule.decide(epoch, state)
    }

    pub fn oc_estimate(&self, epoch: usize, state: OrderSet) -> Option<f64> {
        self.rule.oc(epoch, state)
    }
}

fn backward(
    instance: &Instance,
    cache: &TourCache,
    kind: TableKind,
    terminal: impl Fn(OrderSet) -> f64,
    step: impl Fn(f64, f64) -> f64,
) -> (ValueTable, Vec<Vec<Option<Choice>>>) {
    let horizon = instance.horizon();
    let mut table = ValueTable::new(kind, horizon);
    let mut choices: Vec<Vec<Option<Choice>>> = (0..=horizon)
        .map(|t| if t == 0 { Vec::new() } else { vec![None; 1 << (t - 1)] })
        .collect();
    for mask in 0..(1u32 << horizon) {
        let set = OrderSet(mask);
        if cache.feasible(set) {
            table.set(horizon, set, terminal(set));
        }
    }
    for t in (1..=horizon).rev() {
        let revenue = instance.revenue(t);
        for mask in 0..(1u32 << (t - 1)) {
            let rejected = OrderSet(mask);
            if !cache.feasible(rejected) {
                continue;
            }
            let accepted = rejected.with(t);
            let w_reject = table.value(t, rejected);
            let (choice, value) = if cache.feasible(accepted) {
                let oc = w_reject - table.value(t, accepted);
                let accept = accepts(revenue, oc);
                let gain = if accept { step(revenue, oc) } else { 0.0 };
                (Choice { oc: Some(oc), accept }, ARRIVAL_PROBABILITY * gain + w_reject)
            } else {
                (
                    Choice {
                        oc: None,
                        accept: false,
                    },
                    w_reject,
                )
            };
            choices[t][mask as usize] = Some(choice);
            table.set(t - 1, rejected, value);
        }
    }
    (table, choices)
}

fn terminal_cost<'a>(instance: &Instance, cache: &'a TourCache) -> impl Fn(OrderSet) -> f64 + 'a {
    let cf = instance.cost_factor();
    move |set| -cf * cache.length(set)
}

fn finish(
    kind: PolicyKind,
    instance: &Instance,
    table: ValueTable,
    choices: Vec<Vec<Option<Choice>>>,
) -> PolicySolution {
    let root_value = table.value(0, OrderSet::EMPTY);
    PolicySolution {
        kind,
        rule: DecisionRule::from_choices(kind.label(), instance.horizon(), choices),
        table,
        root_value,
    }
}

/// True optimal values V and decisions g*; `oc` is ΔV.
pub fn solve_optimal(instance: &Instance) -> PolicySolution {
    solve_optimal_with(instance, &TourCache::new(instance))
}

pub fn solve_optimal_with(instance: &Instance, cache: &TourCache) -> PolicySolution {
    let (table, choices) = backward(
        instance,
        cache,
        TableKind::Optimal,
        terminal_cost(instance, cache),
        |r, oc| r - oc,
    );
    finish(PolicyKind::Optimal, instance, table, choices)
}

/// Revenue-only recursion: fulfillment cost is ignored, feasibility is not.
pub fn solve_dpc(instance: &Instance) -> PolicySolution {
    solve_dpc_with(instance, &TourCache::new(instance))
}

pub fn solve_dpc_with(instance: &Instance, cache: &TourCache) -> PolicySolution {
    let (table, choices) = backward(instance, cache, TableKind::DpcR, |_| 0.0, |r, oc| r - oc);
    finish(PolicyKind::Dpc, instance, table, choices)
}

/// Cost-only recursion: revenue drives the decision but never enters the value.
pub fn solve_mcts(instance: &Instance) -> PolicySolution {
    solve_mcts_with(instance, &TourCache::new(instance))
}

pub fn solve_mcts_with(instance: &Instance, cache: &TourCache) -> PolicySolution {
    let (table, choices) = backward(
        instance,
        cache,
        TableKind::MctsF,
        terminal_cost(instance, cache),
        |_, oc| -oc,
    );
    finish(PolicyKind::Mcts, instance, table, choices)
}

#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub table: ValueTable,
    /// Expected true profit of following the rule from the empty state.
    pub value: f64,
    /// Number of `(t, A)` where the rule accepted an infeasible request.
    /// Such acceptances are treated as rejections.
    pub infeasible_accepts: usize,
}

/// Expected true profit of `rule` under the real dynamics and costs.
pub fn evaluate_policy(rule: &DecisionRule, instance: &Instance) -> PolicyEvaluation {
    evaluate_policy_with(rule, instance, &TourCache::new(instance))
}

pub fn evaluate_policy_with(rule: &DecisionRule, instance: &Instance, cache: &TourCache) -> PolicyEvaluation {
    let horizon = instance.horizon();
    let cf = instance.cost_factor();
    let mut table = ValueTable::new(TableKind::PolicyValue, horizon);
    let mut infeasible_accepts = 0;
    for mask in 0..(1u32 << horizon) {
        let set = OrderSet(mask);
        if cache.feasible(set) {
            table.set(horizon, set, -cf * cache.length(set));
        }
    }
    for t in (1..=horizon).rev() {
        let revenue = instance.revenue(t);
        for mask in 0..(1u32 << (t - 1)) {
            let rejected = OrderSet(mask);
            if !cache.feasible(rejected) {
                continue;
            }
            let accepted = rejected.with(t);
            let u_reject = table.value(t, rejected);
            let mut value = u_reject;
            if rule.decide(t, rejected) {
                if cache.feasible(accepted) {
                    value += ARRIVAL_PROBABILITY * (revenue + table.value(t, accepted) - u_reject);
                } else {
                    infeasible_accepts += 1;
                }
            }
            table.set(t - 1, rejected, value);
        }
    }
    if infeasible_accepts > 0 {
        log::warn!(
            "rule {} accepted {infeasible_accepts} infeasible requests; treated as rejections",
            rule.name()
        );
    }
    PolicyEvaluation {
        value: table.value(0, OrderSet::EMPTY),
        table,
        infeasible_accepts,
    }
}

/// Splits V into revenue (R*) and cost (F*) earned along the optimal decisions.
pub fn decompose_optimal(optimal: &PolicySolution, instance: &Instance) -> (ValueTable, ValueTable) {
    decompose_optimal_with(optimal, instance, &TourCache::new(instance))
}

pub fn decompose_optimal_with(
    optimal: &PolicySolution,
    instance: &Instance,
    cache: &TourCache,
) -> (ValueTable, ValueTable) {
    let horizon = instance.horizon();
    let cf = instance.cost_factor();
    let mut revenue_share = ValueTable::new(TableKind::RevenueShare, horizon);
    let mut cost_share = ValueTable::new(TableKind::CostShare, horizon);
    for mask in 0..(1u32 << horizon) {
        let set = OrderSet(mask);
        if cache.feasible(set) {
            revenue_share.set(horizon, set, 0.0);
            cost_share.set(horizon, set, -cf * cache.length(set));
        }
    }
    for t in (1..=horizon).rev() {
        let revenue = instance.revenue(t);
        for mask in 0..(1u32 << (t - 1)) {
            let rejected = OrderSet(mask);
            if !cache.feasible(rejected) {
                continue;
            }
            let accepted = rejected.with(t);
            let r0 = revenue_share.value(t, rejected);
            let f0 = cost_share.value(t, rejected);
            let (mut r, mut f) = (r0, f0);
            if optimal.decision(t, rejected) {
                r += ARRIVAL_PROBABILITY * (revenue + revenue_share.value(t, accepted) - r0);
                f += ARRIVAL_PROBABILITY * (cost_share.value(t, accepted) - f0);
            }
            revenue_share.set(t - 1, rejected, r);
            cost_share.set(t - 1, rejected, f);
        }
    }
    (revenue_share, cost_share)
}

/// CSV dump `kind,epoch,mask,value` of one or more tables.
pub fn tables_csv(tables: &[&ValueTable]) -> String {
    let mut out = String::from("kind,epoch,mask,value\n");
    for table in tables {
        table.write_csv_rows(&mut out);
    }
    out
}
