//! Single-vehicle tours on the line with the depot at the origin.

use crate::domain::{Constraint, Instance, OrderSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TourResult {
    pub length: f64,
    pub feasible: bool,
}

/// Shortest closed depot tour through `locations`: sweep out to the
/// farthest point on one side, back through the depot, out to the other.
pub fn optimal_tour_length<I: IntoIterator<Item = f64>>(locations: I) -> f64 {
    let (lo, hi) = locations
        .into_iter()
        .fold((0.0_f64, 0.0_f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    2.0 * (hi - lo)
}

fn within(constraint: Constraint, size: usize, length: f64) -> bool {
    match constraint {
        Constraint::Load(cap) => size <= cap as usize,
        Constraint::Dist(limit) => length <= limit,
    }
}

pub fn tour(set: OrderSet, instance: &Instance) -> TourResult {
    let length = optimal_tour_length(instance.locations(set));
    TourResult {
        length,
        feasible: within(instance.constraint(), set.len(), length),
    }
}

pub fn is_feasible(set: OrderSet, instance: &Instance) -> bool {
    tour(set, instance).feasible
}

/// Tour length and feasibility for every subset of an instance's customers.
#[derive(Debug, Clone)]
pub struct TourCache {
    horizon: usize,
    lengths: Vec<f64>,
    feasible: Vec<bool>,
}

impl TourCache {
    pub fn new(instance: &Instance) -> Self {
        let horizon = instance.horizon();
        let n = 1usize << horizon;
        let mut lo = vec![0.0_f64; n];
        let mut hi = vec![0.0_f64; n];
        let mut lengths = vec![0.0_f64; n];
        let mut feasible = vec![true; n];
        let constraint = instance.constraint();
        for mask in 1..n {
            // Extend the subset without the highest customer by that customer.
            let top = usize::BITS - 1 - mask.leading_zeros();
            let rest = mask & !(1 << top);
            let x = instance.customers[top as usize].location;
            lo[mask] = lo[rest].min(x);
            hi[mask] = hi[rest].max(x);
            lengths[mask] = 2.0 * (hi[mask] - lo[mask]);
            feasible[mask] = within(constraint, mask.count_ones() as usize, lengths[mask]);
        }
        TourCache {
            horizon,
            lengths,
            feasible,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn length(&self, set: OrderSet) -> f64 {
        self.lengths[set.0 as usize]
    }

    pub fn feasible(&self, set: OrderSet) -> bool {
        self.feasible[set.0 as usize]
    }
}
