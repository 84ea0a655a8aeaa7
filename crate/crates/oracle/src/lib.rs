//! Brute-force reference computations.
//!
//! Everything here is written from first principles and shares no code with
//! the main library: tours are found by trying every visiting order, and the
//! optimal expected profit is found by maximising over the full tree of
//! arrival histories rather than over order sets. The point is to be slow and
//! obviously right.

use std::collections::HashMap;

/// Probability that the single customer of an epoch sends a request.
pub const ARRIVAL_PROBABILITY: f64 = 0.5;

/// Capacity limit of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    /// At most this many orders.
    Orders(usize),
    /// Route length at most this value.
    Length(f64),
}

/// A customer stream in plain numbers. Customer `t` (1-based) may request in
/// epoch `t` only.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub locations: Vec<f64>,
    pub revenues: Vec<f64>,
    pub cost_factor: f64,
    pub limit: Limit,
}

/// Shortest closed route from the depot at 0 through `locations`, found by
/// enumerating every visiting order.
pub fn permutation_tour_length(locations: &[f64]) -> f64 {
    fn search(pos: f64, so_far: f64, rest: &mut Vec<f64>, best: &mut f64) {
        if rest.is_empty() {
            let total = so_far + (pos - 0.0).abs();
            if total < *best {
                *best = total;
            }
            return;
        }
        for i in 0..rest.len() {
            let next = rest.swap_remove(i);
            search(next, so_far + (next - pos).abs(), rest, best);
            rest.push(next);
            let last = rest.len() - 1;
            rest.swap(i, last);
        }
    }
    let mut best = f64::INFINITY;
    search(0.0, 0.0, &mut locations.to_vec(), &mut best);
    best
}

impl Problem {
    pub fn horizon(&self) -> usize {
        self.locations.len()
    }

    fn tour(&self, accepted: &[usize]) -> f64 {
        let locs: Vec<f64> = accepted.iter().map(|&c| self.locations[c - 1]).collect();
        permutation_tour_length(&locs)
    }

    /// Whether the accepted customers (1-based) can be served together.
    pub fn feasible(&self, accepted: &[usize]) -> bool {
        match self.limit {
            Limit::Orders(max) => accepted.len() <= max,
            Limit::Length(max) => self.tour(accepted) <= max,
        }
    }

    /// Profit realised at the end of the horizon for the accepted set.
    fn terminal(&self, accepted: &[usize], tours: &mut HashMap<Vec<usize>, f64>) -> f64 {
        let len = *tours.entry(accepted.to_vec()).or_insert_with(|| self.tour(accepted));
        -self.cost_factor * len
    }
}

/// Best expected profit over every history-dependent accept/reject policy.
///
/// The recursion branches on every arrival outcome and every decision, so a
/// policy may condition on the complete history. Only feasible acceptances
/// are allowed. Exponential in the horizon; intended for horizons up to 6.
pub fn best_policy_value(problem: &Problem) -> f64 {
    fn go(p: &Problem, t: usize, accepted: &mut Vec<usize>, tours: &mut HashMap<Vec<usize>, f64>) -> f64 {
        if t > p.horizon() {
            let revenue: f64 = accepted.iter().map(|&c| p.revenues[c - 1]).sum();
            return revenue + p.terminal(accepted, tours);
        }
        let quiet = go(p, t + 1, accepted, tours);
        let reject = go(p, t + 1, accepted, tours);
        accepted.push(t);
        let accept = if p.feasible(accepted) {
            Some(go(p, t + 1, accepted, tours))
        } else {
            None
        };
        accepted.pop();
        let on_request = accept.map_or(reject, |a| a.max(reject));
        (1.0 - ARRIVAL_PROBABILITY) * quiet + ARRIVAL_PROBABILITY * on_request
    }
    go(problem, 1, &mut Vec::new(), &mut HashMap::new())
}

/// All 2^T arrival patterns with their probabilities; bit `t - 1` set means
/// customer `t` requests.
fn arrival_patterns(horizon: usize) -> impl Iterator<Item = (u32, f64)> {
    let p = ARRIVAL_PROBABILITY.powi(horizon as i32);
    (0..(1u32 << horizon)).map(move |m| (m, p))
}

/// Expected profit of a deterministic policy, by enumerating every arrival
/// pattern. `decide(t, accepted)` is only consulted when accepting is
/// feasible; infeasible requests are rejected.
pub fn policy_value(problem: &Problem, mut decide: impl FnMut(usize, &[usize]) -> bool) -> f64 {
    let mut tours = HashMap::new();
    let mut total = 0.0;
    for (pattern, prob) in arrival_patterns(problem.horizon()) {
        let mut accepted = Vec::new();
        let mut revenue = 0.0;
        for t in 1..=problem.horizon() {
            if pattern & (1 << (t - 1)) == 0 {
                continue;
            }
            accepted.push(t);
            if problem.feasible(&accepted) && decide(t, &accepted[..accepted.len() - 1]) {
                revenue += problem.revenues[t - 1];
            } else {
                accepted.pop();
            }
        }
        total += prob * (revenue + problem.terminal(&accepted, &mut tours));
    }
    total
}

/// Probability that a request of customer `t` meets the policy in each
/// accepted set, keyed by `(t, mask)` with customer `c` on bit `c - 1`.
pub fn decision_rates(
    problem: &Problem,
    mut decide: impl FnMut(usize, &[usize]) -> bool,
) -> HashMap<(usize, u32), f64> {
    let mut rates = HashMap::new();
    for (pattern, prob) in arrival_patterns(problem.horizon()) {
        let mut accepted: Vec<usize> = Vec::new();
        for t in 1..=problem.horizon() {
            if pattern & (1 << (t - 1)) == 0 {
                continue;
            }
            let mask = accepted.iter().fold(0u32, |m, &c| m | 1 << (c - 1));
            *rates.entry((t, mask)).or_insert(0.0) += prob;
            accepted.push(t);
            if !(problem.feasible(&accepted) && decide(t, &accepted[..accepted.len() - 1])) {
                accepted.pop();
            }
        }
    }
    rates
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Problem {
        Problem {
            locations: vec![10.0],
            revenues: vec![15.0],
            cost_factor: 0.6,
            limit: Limit::Length(50.0),
        }
    }

    #[test]
    fn tour_of_nothing_is_zero() {
        assert_eq!(permutation_tour_length(&[]), 0.0);
    }

    #[test]
    fn tour_on_both_sides() {
        assert_eq!(permutation_tour_length(&[-3.0, 5.0, 2.0]), 16.0);
    }

    #[test]
    fn toy_value_by_hand() {
        // Accept when asked: 0.5 * (15 - 0.6 * 20).
        assert!((best_policy_value(&toy()) - 1.5).abs() < 1e-12);
        assert!((policy_value(&toy(), |_, _| true) - 1.5).abs() < 1e-12);
        assert_eq!(policy_value(&toy(), |_, _| false), 0.0);
    }

    #[test]
    fn unprofitable_customer_is_refused() {
        let p = Problem {
            cost_factor: 1.0,
            ..toy()
        };
        assert_eq!(best_policy_value(&p), 0.0);
    }

    #[test]
    fn load_limit_binds() {
        let p = Problem {
            locations: vec![1.0, 1.0],
            revenues: vec![10.0, 10.0],
            cost_factor: 0.0,
            limit: Limit::Orders(1),
        };
        // First request always taken; the second only when the first never came.
        assert!((best_policy_value(&p) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn rates_sum_to_arrival_probability() {
        let p = Problem {
            locations: vec![1.0, -4.0, 7.0],
            revenues: vec![15.0, 25.0, 15.0],
            cost_factor: 0.6,
            limit: Limit::Orders(2),
        };
        let rates = decision_rates(&p, |_, _| true);
        for t in 1..=3 {
            let total: f64 = rates.iter().filter(|((e, _), _)| *e == t).map(|(_, v)| v).sum();
            assert_eq!(total, 0.5);
        }
    }
}
