//! Materialised decision rules and the myopic benchmark.

use crate::domain::{Instance, OrderSet};
use crate::dp::{accepts, PolicyKind, PolicySolution};
use crate::routing::TourCache;

/// Decision for one `(epoch, state)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    /// Opportunity-cost estimate; `None` when accepting is infeasible.
    pub oc: Option<f64>,
    pub accept: bool,
}

/// A policy as a table over every feasible `(t, A)` with `A ⊆ {1..t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRule {
    name: String,
    horizon: usize,
    /// `choices[t][A]`; index 0 unused.
    choices: Vec<Vec<Option<Choice>>>,
}

impl DecisionRule {
    pub(crate) fn from_choices(name: &str, horizon: usize, choices: Vec<Vec<Option<Choice>>>) -> Self {
        debug_assert_eq!(choices.len(), horizon + 1);
        DecisionRule {
            name: name.to_owned(),
            horizon,
            choices,
        }
    }

    fn tabulate(name: &str, instance: &Instance, mut f: impl FnMut(usize, OrderSet, bool) -> Option<Choice>) -> Self {
        let horizon = instance.horizon();
        let cache = TourCache::new(instance);
        let choices = (0..=horizon)
            .map(|t| {
                if t == 0 {
                    return Vec::new();
                }
                (0..(1u32 << (t - 1)))
                    .map(|m| {
                        let s = OrderSet(m);
                        if cache.feasible(s) {
                            f(t, s, cache.feasible(s.with(t)))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        DecisionRule::from_choices(name, horizon, choices)
    }

    /// Rule from an opportunity-cost function with the standard threshold.
    /// `oc` is only queried where accepting is feasible.
    pub fn from_oc(name: &str, instance: &Instance, mut oc: impl FnMut(usize, OrderSet) -> f64) -> Self {
        DecisionRule::tabulate(name, instance, |t, s, feasible| {
            Some(if feasible {
                let oc = oc(t, s);
                Choice {
                    oc: Some(oc),
                    accept: accepts(instance.revenue(t), oc),
                }
            } else {
                Choice {
                    oc: None,
                    accept: false,
                }
            })
        })
    }

    /// Rule from raw decisions, without an opportunity cost. Decisions are
    /// stored as given, so a rule may (incorrectly) accept infeasible requests.
    pub fn from_decisions(name: &str, instance: &Instance, mut decide: impl FnMut(usize, OrderSet) -> bool) -> Self {
        DecisionRule::tabulate(name, instance, |t, s, _| {
            Some(Choice {
                oc: None,
                accept: decide(t, s),
            })
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Panics if `(epoch, state)` is not a feasible decision point.
    pub fn choice(&self, epoch: usize, state: OrderSet) -> Choice {
        self.try_choice(epoch, state).unwrap_or_else(|| {
            panic!(
                "rule {} has no decision for epoch {epoch}, state {}",
                self.name,
                state.bitstring(self.horizon)
            )
        })
    }

    pub fn try_choice(&self, epoch: usize, state: OrderSet) -> Option<Choice> {
        self.choices
            .get(epoch)
            .and_then(|row| row.get(state.0 as usize))
            .copied()
            .flatten()
    }

    pub fn oc(&self, epoch: usize, state: OrderSet) -> Option<f64> {
        self.choice(epoch, state).oc
    }

    pub fn decide(&self, epoch: usize, state: OrderSet) -> bool {
        self.choice(epoch, state).accept
    }
}

/// Insertion cost into the confirmed-order tour, re-optimised.
pub fn myopic_rule(instance: &Instance) -> DecisionRule {
    let cache = TourCache::new(instance);
    let cf = instance.cost_factor();
    DecisionRule::from_oc(PolicyKind::Myopic.label(), instance, |t, s| {
        cf * (cache.length(s.with(t)) - cache.length(s))
    })
}

pub fn as_rule(solution: &PolicySolution) -> DecisionRule {
    solution.rule.clone()
}
