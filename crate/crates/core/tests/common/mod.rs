//! Helpers shared by the integration tests.

#![allow(dead_code)]

use dmvrpx::{Constraint, Instance, OrderSet};
use dmvrpx_oracle::{Limit, Problem};
use rand::seq::index::sample;
use rand::Rng;

/// The instance as plain numbers for the brute-force oracles.
pub fn to_problem(instance: &Instance) -> Problem {
    Problem {
        locations: instance.customers.iter().map(|c| c.location).collect(),
        revenues: instance.customers.iter().map(|c| c.revenue).collect(),
        cost_factor: instance.cost_factor(),
        limit: match instance.constraint() {
            Constraint::Load(n) => Limit::Orders(n as usize),
            Constraint::Dist(d) => Limit::Length(d),
        },
    }
}

pub fn mask_of(accepted: &[usize]) -> OrderSet {
    OrderSet::from_customers(accepted.iter().copied())
}

/// A shorter stream cut from `instance`: `horizon` customers picked at random,
/// kept in their original order, with the same cost factor and constraint.
pub fn sub_instance<R: Rng + ?Sized>(instance: &Instance, horizon: usize, rng: &mut R) -> Instance {
    let mut picks = sample(rng, instance.horizon(), horizon).into_vec();
    picks.sort_unstable();
    let customers: Vec<(f64, f64)> = picks
        .iter()
        .map(|&i| (instance.customers[i].location, instance.customers[i].revenue))
        .collect();
    Instance::custom(&customers, instance.cost_factor(), instance.constraint()).expect("valid sub-instance")
}

/// A location on the 2^-20 grid inside the segment, so sums of a handful of
/// them are exact in f64.
pub fn dyadic_location<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    const SCALE: f64 = (1u64 << 20) as f64;
    let k: i64 = rng.random_range(-25 * (1i64 << 20)..=25 * (1i64 << 20));
    k as f64 / SCALE
}
