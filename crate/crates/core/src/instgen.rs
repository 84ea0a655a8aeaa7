//! Seeded customer-stream generation.
//!
//! Every instance owns a ChaCha8 stream seeded from a SplitMix64 mix of
//! `(root_seed, setting ordinal, instance_id)`, so any single instance can be
//! regenerated without replaying the others.

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::domain::{
    Customer, Instance, LocationDist, RevenueDist, Setting, HIGH_REVENUE, HORIZON, LOW_REVENUE, SEGMENT_HALF_WIDTH,
};
use crate::error::{Error, Result};

pub const NEAR_CLUSTER_MEAN: f64 = -10.0;
pub const DISTANT_CLUSTER_MEAN: f64 = 20.0;
pub const CLUSTER_STD_DEV: f64 = 2.5;
pub const CLUSTER_SIZE: usize = HORIZON / 2;
/// 30% of a stream of 10.
pub const HIGH_REVENUE_COUNT: usize = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix(splitmix(splitmix(root) ^ ordinal) ^ instance_id)`.
pub fn derive_seed(root_seed: u64, setting_ordinal: usize, instance_id: u32) -> u64 {
    let h = splitmix64(root_seed);
    let h = splitmix64(h ^ setting_ordinal as u64);
    splitmix64(h ^ u64::from(instance_id))
}

/// Portable per-instance random stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    pub root_seed: u64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl StreamRng {
    pub fn for_instance(root_seed: u64, setting_ordinal: usize, instance_id: u32) -> Self {
        let seed = derive_seed(root_seed, setting_ordinal, instance_id);
        StreamRng {
            root_seed,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        StreamRng {
            root_seed: seed,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Which generator produced a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationSource {
    Uniform,
    NearCluster,
    DistantCluster,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationDraw {
    pub location: f64,
    pub source: LocationSource,
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let normal = Normal::new(mean, CLUSTER_STD_DEV).expect("positive standard deviation");
    loop {
        let x = normal.sample(rng);
        if (-SEGMENT_HALF_WIDTH..=SEGMENT_HALF_WIDTH).contains(&x) {
            return x;
        }
    }
}

pub fn sample_locations<R: Rng + ?Sized>(setting: &Setting, rng: &mut R) -> Vec<LocationDraw> {
    match setting.location_dist {
        LocationDist::Unif => {
            let uniform = Uniform::new_inclusive(-SEGMENT_HALF_WIDTH, SEGMENT_HALF_WIDTH).expect("non-empty segment");
            (0..HORIZON)
                .map(|_| LocationDraw {
                    location: uniform.sample(rng),
                    source: LocationSource::Uniform,
                })
                .collect()
        }
        LocationDist::Clust | LocationDist::ClustSort => {
            let mut draws = Vec::with_capacity(2 * CLUSTER_SIZE);
            for (mean, source) in [
                (NEAR_CLUSTER_MEAN, LocationSource::NearCluster),
                (DISTANT_CLUSTER_MEAN, LocationSource::DistantCluster),
            ] {
                for _ in 0..CLUSTER_SIZE {
                    draws.push(LocationDraw {
                        location: truncated_normal(rng, mean),
                        source,
                    });
                }
            }
            draws.shuffle(rng);
            draws
        }
    }
}

pub fn assign_revenues<R: Rng + ?Sized>(
    setting: &Setting,
    locations: &[LocationDraw],
    rng: &mut R,
) -> Result<Vec<f64>> {
    setting.validate()?;
    let mut revenues = vec![LOW_REVENUE; locations.len()];
    if setting.revenue_dist == RevenueDist::Homog {
        return Ok(revenues);
    }
    let candidates: Vec<usize> = match setting.location_dist {
        LocationDist::ClustSort => locations
            .iter()
            .enumerate()
            .filter(|(_, d)| d.source == LocationSource::DistantCluster)
            .map(|(i, _)| i)
            .collect(),
        _ => (0..locations.len()).collect(),
    };
    if candidates.len() < HIGH_REVENUE_COUNT {
        return Err(Error::InvalidInstance(format!(
            "only {} candidates for {} high-revenue customers",
            candidates.len(),
            HIGH_REVENUE_COUNT
        )));
    }
    for k in index::sample(rng, candidates.len(), HIGH_REVENUE_COUNT) {
        revenues[candidates[k]] = HIGH_REVENUE;
    }
    Ok(revenues)
}

/// Applies the arrival ordering of the revenue distribution and assigns
/// indices `1..=n`. Sorting is stable within each revenue class.
pub fn order_stream(setting: &Setting, mut customers: Vec<Customer>) -> Vec<Customer> {
    match setting.revenue_dist {
        RevenueDist::HbL => customers.sort_by(|a, b| b.revenue.total_cmp(&a.revenue)),
        RevenueDist::LbH => customers.sort_by(|a, b| a.revenue.total_cmp(&b.revenue)),
        RevenueDist::Homog | RevenueDist::Rand => {}
    }
    for (i, c) in customers.iter_mut().enumerate() {
        c.index = i + 1;
    }
    customers
}

/// Generates instance `instance_id` of `setting` under `root_seed`.
pub fn generate_instance(setting: &Setting, root_seed: u64, instance_id: u32) -> Result<Instance> {
    let ordinal = setting
        .ordinal()
        .ok_or_else(|| Error::InvalidSetting(setting.label()))?;
    let mut rng = StreamRng::for_instance(root_seed, ordinal, instance_id);
    let draws = sample_locations(setting, &mut rng);
    let revenues = assign_revenues(setting, &draws, &mut rng)?;
    let customers = draws
        .iter()
        .zip(&revenues)
        .enumerate()
        .map(|(i, (d, &revenue))| Customer {
            index: i + 1,
            location: d.location,
            revenue,
        })
        .collect();
    let customers = order_stream(setting, customers);
    Instance::new(*setting, customers, instance_id, rng.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{enumerate_settings, ConstraintKind, Profitability};

    fn setting(loc: LocationDist, rev: RevenueDist) -> Setting {
        Setting::new(loc, rev, Profitability::Med, ConstraintKind::Load).unwrap()
    }

    #[test]
    fn uniform_locations_in_segment() {
        let s = setting(LocationDist::Unif, RevenueDist::Homog);
        for seed in 0..50 {
            let draws = sample_locations(&s, &mut StreamRng::from_seed(seed));
            assert_eq!(draws.len(), 10);
            assert!(draws.iter().all(|d| d.location.abs() <= 25.0));
        }
    }

    #[test]
    fn clustered_draws_five_from_each() {
        let s = setting(LocationDist::Clust, RevenueDist::Homog);
        for seed in 0..50 {
            let draws = sample_locations(&s, &mut StreamRng::from_seed(seed));
            let near = draws.iter().filter(|d| d.source == LocationSource::NearCluster).count();
            let far = draws
                .iter()
                .filter(|d| d.source == LocationSource::DistantCluster)
                .count();
            assert_eq!((near, far), (5, 5));
            assert!(draws.iter().all(|d| d.location.abs() <= 25.0));
            let neg = draws.iter().filter(|d| d.location < 0.0).count();
            assert_eq!(neg, 5);
        }
    }

    #[test]
    fn clustered_draws_deterministic() {
        let s = setting(LocationDist::Clust, RevenueDist::Homog);
        let a = sample_locations(&s, &mut StreamRng::from_seed(7));
        let b = sample_locations(&s, &mut StreamRng::from_seed(7));
        assert_eq!(a, b);
    }

    #[test]
    fn homogeneous_revenues() {
        let s = setting(LocationDist::Unif, RevenueDist::Homog);
        let mut rng = StreamRng::from_seed(1);
        let draws = sample_locations(&s, &mut rng);
        assert_eq!(assign_revenues(&s, &draws, &mut rng).unwrap(), vec![15.0; 10]);
    }

    #[test]
    fn heterogeneous_revenue_multiset() {
        let s = setting(LocationDist::Unif, RevenueDist::Rand);
        for seed in 0..20 {
            let mut rng = StreamRng::from_seed(seed);
            let draws = sample_locations(&s, &mut rng);
            let revs = assign_revenues(&s, &draws, &mut rng).unwrap();
            assert_eq!(revs.iter().filter(|&&r| r == 25.0).count(), 3);
            assert_eq!(revs.iter().filter(|&&r| r == 15.0).count(), 7);
        }
    }

    #[test]
    fn clust_sort_high_revenue_in_distant_cluster() {
        let s = setting(LocationDist::ClustSort, RevenueDist::Rand);
        for seed in 0..50 {
            let mut rng = StreamRng::from_seed(seed);
            let draws = sample_locations(&s, &mut rng);
            let revs = assign_revenues(&s, &draws, &mut rng).unwrap();
            for (d, r) in draws.iter().zip(&revs) {
                if *r == 25.0 {
                    assert_eq!(d.source, LocationSource::DistantCluster);
                    assert!(d.location > 0.0);
                }
            }
        }
    }

    #[test]
    fn clust_sort_homog_rejected() {
        let bad = Setting {
            location_dist: LocationDist::ClustSort,
            revenue_dist: RevenueDist::Homog,
            profitability: Profitability::Low,
            constraint: ConstraintKind::Load,
        };
        let mut rng = StreamRng::from_seed(0);
        let draws = sample_locations(&bad, &mut rng);
        assert!(assign_revenues(&bad, &draws, &mut rng).is_err());
    }

    fn stream(revenues: &[f64]) -> Vec<Customer> {
        revenues
            .iter()
            .enumerate()
            .map(|(i, &r)| Customer {
                index: i + 1,
                location: i as f64,
                revenue: r,
            })
            .collect()
    }

    #[test]
    fn ordering_rules() {
        let revs = [25.0, 15.0, 25.0, 15.0, 15.0, 15.0, 25.0, 15.0, 15.0, 15.0];
        let hbl = order_stream(&setting(LocationDist::Unif, RevenueDist::HbL), stream(&revs));
        assert!(hbl[..3].iter().all(|c| c.revenue == 25.0));
        // Stable: high-revenue customers keep their sampled relative order.
        assert_eq!(
            hbl[..3].iter().map(|c| c.location).collect::<Vec<_>>(),
            vec![0.0, 2.0, 6.0]
        );
        let lbh = order_stream(&setting(LocationDist::Unif, RevenueDist::LbH), stream(&revs));
        assert!(lbh[7..].iter().all(|c| c.revenue == 25.0));
        assert!(lbh.iter().enumerate().all(|(i, c)| c.index == i + 1));
        let homog = order_stream(&setting(LocationDist::Unif, RevenueDist::Homog), stream(&[15.0; 10]));
        assert_eq!(homog, stream(&[15.0; 10]));
    }

    #[test]
    fn every_setting_generates_valid_instances() {
        for s in enumerate_settings() {
            for id in 0..5 {
                let inst = generate_instance(&s, 42, id).unwrap();
                inst.validate().unwrap();
                assert_eq!(inst, generate_instance(&s, 42, id).unwrap());
            }
        }
    }

    #[test]
    fn sorted_clust_sort_keeps_pairing() {
        for rev in [RevenueDist::HbL, RevenueDist::LbH] {
            let s = setting(LocationDist::ClustSort, rev);
            for id in 0..20 {
                let inst = generate_instance(&s, 3, id).unwrap();
                for c in &inst.customers {
                    if c.revenue == 25.0 {
                        assert!(c.location > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn seeds_differ_across_instances() {
        assert_ne!(derive_seed(42, 0, 0), derive_seed(42, 0, 1));
        assert_ne!(derive_seed(42, 0, 0), derive_seed(42, 1, 0));
        assert_ne!(derive_seed(42, 0, 0), derive_seed(43, 0, 0));
    }
}
