//! Error magnitude, single-decision regret, decision rates and the
//! weighted error ratio of an approximate policy against the optimum.

use rand::Rng;

use crate::aggregate::capacity_pct_with;
use crate::domain::{Instance, OrderSet};
use crate::dp::{PolicySolution, ARRIVAL_PROBABILITY};
use crate::format::real17;
use crate::policies::DecisionRule;
use crate::routing::TourCache;

/// Error magnitudes at or below this count as zero when gating regret.
pub const ERROR_TOLERANCE: f64 = 1e-9;

/// Floor of the optimality-gap denominator.
pub const GAP_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    pub state: OrderSet,
    pub capacity_pct: f64,
    /// Whether accepting the epoch's request is feasible in `state`. When it
    /// is not, both policies must reject and every error/regret field is 0.
    pub acceptable: bool,
    pub true_oc: Option<f64>,
    pub approx_oc: Option<f64>,
    pub optimal_accept: bool,
    pub approx_accept: bool,
    /// `approx_oc - true_oc`.
    pub signed_error: f64,
    pub e_over: f64,
    pub e_under: f64,
    pub regret: f64,
    pub regret_over: f64,
    pub regret_under: f64,
    /// Probability that the approximate policy faces this request in this state.
    pub decision_rate: f64,
}

/// Exact decision rates `P(A, t)` by forward propagation of state mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRates {
    /// `rates[t][A]`; index 0 unused.
    rates: Vec<Vec<f64>>,
}

impl DecisionRates {
    pub fn horizon(&self) -> usize {
        self.rates.len() - 1
    }

    pub fn get(&self, epoch: usize, state: OrderSet) -> f64 {
        self.rates
            .get(epoch)
            .and_then(|row| row.get(state.0 as usize))
            .copied()
            .unwrap_or(0.0)
    }

    /// Non-zero `(t, A, P)` entries in epoch-then-mask order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, OrderSet, f64)> + '_ {
        self.rates.iter().enumerate().flat_map(|(t, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(move |(m, &p)| (t, OrderSet(m as u32), p))
        })
    }

    pub fn epoch_total(&self, epoch: usize) -> f64 {
        self.rates[epoch].iter().sum()
    }
}

pub fn decision_rates(rule: &DecisionRule, instance: &Instance) -> DecisionRates {
    decision_rates_with(rule, instance, &TourCache::new(instance))
}

pub fn decision_rates_with(rule: &DecisionRule, instance: &Instance, cache: &TourCache) -> DecisionRates {
    let horizon = instance.horizon();
    let mut rates = vec![Vec::new()];
    // mass[A] over A ⊆ {1..t-1} before epoch t.
    let mut mass = vec![1.0_f64];
    for t in 1..=horizon {
        let mut next = vec![0.0_f64; 1 << t];
        let mut row = vec![0.0_f64; 1 << (t - 1)];
        for (m, &w) in mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let state = OrderSet(m as u32);
            let arrival = ARRIVAL_PROBABILITY * w;
            row[m] = arrival;
            next[m] += w - arrival;
            let accepted = state.with(t);
            if rule.decide(t, state) && cache.feasible(accepted) {
                next[accepted.0 as usize] += arrival;
            } else {
                next[m] += arrival;
            }
        }
        rates.push(row);
        mass = next;
    }
    DecisionRates { rates }
}

/// Monte-Carlo estimate of the decision rates from `paths` simulated
/// booking horizons.
pub fn sampled_decision_rates<R: Rng + ?Sized>(
    rule: &DecisionRule,
    instance: &Instance,
    paths: u64,
    rng: &mut R,
) -> DecisionRates {
    let horizon = instance.horizon();
    let cache = TourCache::new(instance);
    let mut counts: Vec<Vec<u64>> = (0..=horizon)
        .map(|t| if t == 0 { Vec::new() } else { vec![0; 1 << (t - 1)] })
        .collect();
    for _ in 0..paths {
        let mut state = OrderSet::EMPTY;
        for (t, row) in counts.iter_mut().enumerate().skip(1) {
            if !rng.random_bool(ARRIVAL_PROBABILITY) {
                continue;
            }
            row[state.0 as usize] += 1;
            let accepted = state.with(t);
            if rule.decide(t, state) && cache.feasible(accepted) {
                state = accepted;
            }
        }
    }
    let n = paths.max(1) as f64;
    DecisionRates {
        rates: counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / n).collect())
            .collect(),
    }
}

/// One record per decision point reachable under the approximate policy or
/// under the optimal policy.
pub fn compute_errors(optimal: &PolicySolution, approx: &DecisionRule, instance: &Instance) -> Vec<MetricRecord> {
    compute_errors_with(optimal, approx, instance, &TourCache::new(instance))
}

pub fn compute_errors_with(
    optimal: &PolicySolution,
    approx: &DecisionRule,
    instance: &Instance,
    cache: &TourCache,
) -> Vec<MetricRecord> {
    let approx_rates = decision_rates_with(approx, instance, cache);
    compute_errors_from_rates(optimal, approx, instance, cache, &approx_rates)
}

/// As [`compute_errors_with`] but weighting by the supplied decision rates,
/// e.g. Monte-Carlo estimates from [`sampled_decision_rates`].
pub fn compute_errors_from_rates(
    optimal: &PolicySolution,
    approx: &DecisionRule,
    instance: &Instance,
    cache: &TourCache,
    approx_rates: &DecisionRates,
) -> Vec<MetricRecord> {
    let optimal_rates = decision_rates_with(&optimal.rule, instance, cache);
    let mut records = Vec::new();
    for t in 1..=instance.horizon() {
        let revenue = instance.revenue(t);
        for m in 0..(1u32 << (t - 1)) {
            let state = OrderSet(m);
            let p = approx_rates.get(t, state);
            if p == 0.0 && optimal_rates.get(t, state) == 0.0 {
                continue;
            }
            let opt = optimal.rule.choice(t, state);
            let apx = approx.choice(t, state);
            let acceptable = cache.feasible(state.with(t));
            let mut rec = MetricRecord {
                epoch: t,
                state,
                capacity_pct: capacity_pct_with(state, instance, cache),
                acceptable,
                true_oc: opt.oc,
                approx_oc: apx.oc,
                optimal_accept: opt.accept,
                approx_accept: apx.accept && acceptable,
                signed_error: 0.0,
                e_over: 0.0,
                e_under: 0.0,
                regret: 0.0,
                regret_over: 0.0,
                regret_under: 0.0,
                decision_rate: p,
            };
            if let (Some(dv), true) = (opt.oc, acceptable) {
                if let Some(approx_oc) = apx.oc {
                    rec.signed_error = approx_oc - dv;
                    rec.e_over = rec.signed_error.max(0.0);
                    rec.e_under = (-rec.signed_error).max(0.0);
                }
                let g_opt = f64::from(u8::from(rec.optimal_accept));
                let g_apx = f64::from(u8::from(rec.approx_accept));
                // Ties within the acceptance tolerance count as zero regret.
                rec.regret = ((g_opt - g_apx) * (revenue - dv)).max(0.0);
                if rec.e_over > ERROR_TOLERANCE {
                    rec.regret_over = rec.regret;
                }
                if rec.e_under > ERROR_TOLERANCE {
                    rec.regret_under = rec.regret;
                }
            }
            records.push(rec);
        }
    }
    records
}

/// Numerator and denominator of the weighted error ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RegretSums {
    pub over: f64,
    pub total: f64,
}

impl RegretSums {
    pub fn from_records(records: &[MetricRecord]) -> Self {
        records.iter().fold(RegretSums::default(), |acc, r| RegretSums {
            over: acc.over + r.regret_over * r.decision_rate,
            total: acc.total + (r.regret_over + r.regret_under) * r.decision_rate,
        })
    }

    pub fn merge(self, other: RegretSums) -> Self {
        RegretSums {
            over: self.over + other.over,
            total: self.total + other.total,
        }
    }

    /// `None` when no rate-weighted regret exists.
    pub fn ratio(self) -> Option<f64> {
        (self.total > 0.0).then(|| self.over / self.total)
    }
}

/// Share of rate-weighted regret caused by overestimation.
pub fn weighted_error_ratio(records: &[MetricRecord]) -> Option<f64> {
    RegretSums::from_records(records).ratio()
}

pub fn optimality_gap(j_star: f64, j_pi: f64) -> f64 {
    (j_star - j_pi) / j_star.abs().max(GAP_EPSILON)
}

pub const RECORDS_CSV_HEADER: &str =
    "policy,t,mask,capacity_pct,signed_error,e_over,e_under,regret,regret_over,regret_under,P,acceptable\n";

pub fn records_csv(policy: &str, horizon: usize, records: &[MetricRecord]) -> String {
    let mut out = String::from(RECORDS_CSV_HEADER);
    for r in records {
        out.push_str(&format!(
            "{policy},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.state.bitstring(horizon),
            real17(r.capacity_pct),
            real17(r.signed_error),
            real17(r.e_over),
            real17(r.e_under),
            real17(r.regret),
            real17(r.regret_over),
            real17(r.regret_under),
            real17(r.decision_rate),
            u8::from(r.acceptable)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Constraint;
    use crate::dp::{solve_dpc, solve_optimal};
    use crate::policies::myopic_rule;

    fn toy() -> Instance {
        Instance::custom(&[(10.0, 15.0)], 0.6, Constraint::Dist(50.0)).unwrap()
    }

    fn sample() -> Instance {
        let locs = [
            (10.0, 15.0),
            (-20.0, 25.0),
            (5.0, 15.0),
            (22.0, 15.0),
            (-3.0, 25.0),
            (-12.5, 15.0),
        ];
        Instance::custom(&locs, 1.0, Constraint::Load(3)).unwrap()
    }

    #[test]
    fn toy_dpc_error_without_regret() {
        let inst = toy();
        let opt = solve_optimal(&inst);
        let dpc = solve_dpc(&inst);
        let recs = compute_errors(&opt, &dpc.rule, &inst);
        assert_eq!(recs.len(), 1);
        let r = recs[0];
        assert!((r.signed_error + 12.0).abs() < 1e-12);
        assert!((r.e_under - 12.0).abs() < 1e-12);
        assert_eq!(r.e_over, 0.0);
        assert_eq!(r.regret, 0.0);
        assert_eq!(r.decision_rate, 0.5);
    }

    #[test]
    fn optimal_against_itself() {
        let inst = sample();
        let opt = solve_optimal(&inst);
        let recs = compute_errors(&opt, &opt.rule, &inst);
        assert!(!recs.is_empty());
        for r in &recs {
            assert_eq!(r.signed_error, 0.0);
            assert_eq!(r.regret, 0.0);
        }
        assert_eq!(weighted_error_ratio(&recs), None);
    }

    #[test]
    fn differing_decisions_cost_the_margin() {
        let inst = sample();
        let opt = solve_optimal(&inst);
        let rule = myopic_rule(&inst);
        for r in compute_errors(&opt, &rule, &inst) {
            if r.acceptable && r.optimal_accept != r.approx_accept {
                let margin = (inst.revenue(r.epoch) - r.true_oc.unwrap()).abs();
                assert!((r.regret - margin).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rates_of_simple_rules() {
        let inst = sample();
        let reject = DecisionRule::from_decisions("reject", &inst, |_, _| false);
        let rates = decision_rates(&reject, &inst);
        for t in 1..=6 {
            assert_eq!(rates.get(t, OrderSet::EMPTY), 0.5);
            assert_eq!(rates.epoch_total(t), 0.5);
        }
        let two = Instance::custom(&[(1.0, 15.0), (2.0, 15.0)], 0.2, Constraint::Load(3)).unwrap();
        let greedy = DecisionRule::from_decisions("greedy", &two, |_, _| true);
        let rates = decision_rates(&greedy, &two);
        assert_eq!(rates.get(2, OrderSet::from_customers([1])), 0.25);
        assert_eq!(rates.get(2, OrderSet::EMPTY), 0.25);
    }

    #[test]
    fn ratio_extremes() {
        let base = MetricRecord {
            epoch: 1,
            state: OrderSet::EMPTY,
            capacity_pct: 0.0,
            acceptable: true,
            true_oc: Some(1.0),
            approx_oc: Some(2.0),
            optimal_accept: true,
            approx_accept: false,
            signed_error: 1.0,
            e_over: 1.0,
            e_under: 0.0,
            regret: 3.0,
            regret_over: 3.0,
            regret_under: 0.0,
            decision_rate: 0.5,
        };
        assert_eq!(weighted_error_ratio(&[base]), Some(1.0));
        let under = MetricRecord {
            regret_over: 0.0,
            regret_under: 3.0,
            ..base
        };
        assert_eq!(weighted_error_ratio(&[under]), Some(0.0));
        assert_eq!(weighted_error_ratio(&[base, under]), Some(0.5));
    }

    #[test]
    fn gap_examples() {
        assert_eq!(optimality_gap(1.5, 1.5), 0.0);
        assert_eq!(optimality_gap(1.5, 0.0), 1.0);
        assert!(optimality_gap(-2.0, -3.0) > 0.0);
        assert!(optimality_gap(0.0, -1e-7) > 0.0);
    }

    #[test]
    fn csv_layout() {
        let inst = toy();
        let opt = solve_optimal(&inst);
        let csv = records_csv("optimal", 1, &compute_errors(&opt, &opt.rule, &inst));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), RECORDS_CSV_HEADER.trim_end());
        assert!(lines.next().unwrap().starts_with("optimal,1,0,0.0000000000000000,"));
        assert!(!csv.contains('\r'));
    }
}
