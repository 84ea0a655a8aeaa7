//! Setting catalogue, customer streams and the order-set state.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::real17;

/// Number of decision epochs (and customers) in every standard instance.
pub const HORIZON: usize = 10;

/// Vehicle capacity in the load-constrained regime (unit demand).
pub const LOAD_CAPACITY: u32 = 3;

/// Maximum closed-tour length in the distance-constrained regime.
pub const DISTANCE_LIMIT: f64 = 50.0;

/// Service region is the segment `[-SEGMENT_HALF_WIDTH, SEGMENT_HALF_WIDTH]`, depot at 0.
pub const SEGMENT_HALF_WIDTH: f64 = 25.0;

pub const LOW_REVENUE: f64 = 15.0;
pub const HIGH_REVENUE: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocationDist {
    #[serde(rename = "unif")]
    Unif,
    #[serde(rename = "clust")]
    Clust,
    /// Clustered, with every high-revenue customer in the distant cluster.
    #[serde(rename = "clust_sort")]
    ClustSort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RevenueDist {
    #[serde(rename = "homog")]
    Homog,
    #[serde(rename = "rand")]
    Rand,
    /// Low before high: high-revenue customers arrive last.
    #[serde(rename = "l-b-h")]
    LbH,
    /// High before low: high-revenue customers arrive first.
    #[serde(rename = "h-b-l")]
    HbL,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Profitability {
    #[serde(rename = "high")]
    High,
    #[serde(rename = "med")]
    Med,
    #[serde(rename = "low")]
    Low,
}

impl Profitability {
    /// Routing cost per length unit.
    pub fn cost_factor(self) -> f64 {
        match self {
            Profitability::High => 0.2,
            Profitability::Med => 0.6,
            Profitability::Low => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintKind {
    #[serde(rename = "load")]
    Load,
    #[serde(rename = "dist")]
    Dist,
}

/// Concrete routing constraint used by feasibility checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// At most this many orders (unit demand).
    Load(u32),
    /// Closed tour from the depot no longer than this.
    Dist(f64),
}

impl From<ConstraintKind> for Constraint {
    fn from(kind: ConstraintKind) -> Self {
        match kind {
            ConstraintKind::Load => Constraint::Load(LOAD_CAPACITY),
            ConstraintKind::Dist => Constraint::Dist(DISTANCE_LIMIT),
        }
    }
}

macro_rules! label_impl {
    ($ty:ty { $($variant:ident => $label:expr),* $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$variant),*];

            pub fn label(self) -> &'static str {
                match self {
                    $(<$ty>::$variant => $label),*
                }
            }

            pub fn from_label(label: &str) -> Option<Self> {
                match label {
                    $($label => Some(<$ty>::$variant),)*
                    _ => None,
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

label_impl!(LocationDist { Unif => "unif", Clust => "clust", ClustSort => "clust_sort" });
label_impl!(RevenueDist { Homog => "homog", Rand => "rand", LbH => "l-b-h", HbL => "h-b-l" });
label_impl!(Profitability { High => "high", Med => "med", Low => "low" });
label_impl!(ConstraintKind { Load => "load", Dist => "dist" });

/// One cell of the full-factorial design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Setting {
    #[serde(rename = "loc")]
    pub location_dist: LocationDist,
    #[serde(rename = "rev")]
    pub revenue_dist: RevenueDist,
    #[serde(rename = "prof")]
    pub profitability: Profitability,
    #[serde(rename = "cons")]
    pub constraint: ConstraintKind,
}

impl Setting {
    pub fn new(
        location_dist: LocationDist,
        revenue_dist: RevenueDist,
        profitability: Profitability,
        constraint: ConstraintKind,
    ) -> Result<Self> {
        let setting = Setting {
            location_dist,
            revenue_dist,
            profitability,
            constraint,
        };
        setting.validate()?;
        Ok(setting)
    }

    pub fn is_valid(&self) -> bool {
        !(self.location_dist == LocationDist::ClustSort && self.revenue_dist == RevenueDist::Homog)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidSetting(self.label()))
        }
    }

    pub fn horizon(&self) -> usize {
        HORIZON
    }

    pub fn cost_factor(&self) -> f64 {
        self.profitability.cost_factor()
    }

    /// The customer-related part of the setting (11 distinct values).
    pub fn customer_setting(&self) -> (LocationDist, RevenueDist) {
        (self.location_dist, self.revenue_dist)
    }

    /// Position in [`enumerate_settings`], or `None` for an invalid combination.
    pub fn ordinal(&self) -> Option<usize> {
        enumerate_settings().iter().position(|s| s == self)
    }

    /// Figure caption label, e.g. `med | load | unif | homog`.
    pub fn label(&self) -> String {
        format!(
            "{} | {} | {} | {}",
            self.profitability, self.constraint, self.location_dist, self.revenue_dist
        )
    }

    /// Filesystem-safe identifier, e.g. `unif_homog_med_load`.
    pub fn slug(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.location_dist,
            self.revenue_dist.label().replace('-', ""),
            self.profitability,
            self.constraint
        )
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// All 66 valid settings, ordered lexicographically by
/// (location, revenue, profitability, constraint) in declaration order.
pub fn enumerate_settings() -> Vec<Setting> {
    let mut out = Vec::with_capacity(66);
    for &location_dist in LocationDist::ALL {
        for &revenue_dist in RevenueDist::ALL {
            for &profitability in Profitability::ALL {
                for &constraint in ConstraintKind::ALL {
                    let s = Setting {
                        location_dist,
                        revenue_dist,
                        profitability,
                        constraint,
                    };
                    if s.is_valid() {
                        out.push(s);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    /// 1-based; also the only epoch in which this customer may request.
    pub index: usize,
    pub location: f64,
    pub revenue: f64,
}

/// Accepted orders as a bitmask; customer `c` occupies bit `c - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct OrderSet(pub u32);

impl OrderSet {
    pub const EMPTY: OrderSet = OrderSet(0);

    pub fn from_customers<I: IntoIterator<Item = usize>>(customers: I) -> Self {
        customers.into_iter().fold(OrderSet::EMPTY, |acc, c| acc.with(c))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn contains(self, customer: usize) -> bool {
        debug_assert!(customer >= 1);
        self.0 & (1 << (customer - 1)) != 0
    }

    #[must_use]
    pub fn with(self, customer: usize) -> Self {
        debug_assert!((1..=32).contains(&customer));
        OrderSet(self.0 | (1 << (customer - 1)))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: OrderSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Customers in increasing index order.
    pub fn customers(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |b| self.0 & (1 << b) != 0).map(|b| b + 1)
    }

    /// Bitstring of width `horizon`, customer 1 leftmost.
    pub fn bitstring(self, horizon: usize) -> String {
        (1..=horizon)
            .map(|c| if self.contains(c) { '1' } else { '0' })
            .collect()
    }

    pub fn parse_bitstring(s: &str) -> Option<Self> {
        let mut set = OrderSet::EMPTY;
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '1' => set = set.with(i + 1),
                '0' => {}
                _ => return None,
            }
        }
        Some(set)
    }
}

/// Provider-side parameters. Derived from the setting unless overridden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provider {
    pub cost_factor: f64,
    pub constraint: Constraint,
}

impl From<&Setting> for Provider {
    fn from(setting: &Setting) -> Self {
        Provider {
            cost_factor: setting.cost_factor(),
            constraint: setting.constraint.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub setting: Setting,
    pub customers: Vec<Customer>,
    pub instance_id: u32,
    pub seed: u64,
    pub provider: Provider,
}

impl Instance {
    /// Builds an instance whose provider parameters follow the setting.
    pub fn new(setting: Setting, customers: Vec<Customer>, instance_id: u32, seed: u64) -> Result<Self> {
        let inst = Instance {
            provider: Provider::from(&setting),
            setting,
            customers,
            instance_id,
            seed,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Free-form instance for experiments outside the catalogue: any horizon,
    /// any cost factor, any constraint. Customer indices are assigned 1..=n.
    pub fn custom(locations_and_revenues: &[(f64, f64)], cost_factor: f64, constraint: Constraint) -> Result<Self> {
        let customers = locations_and_revenues
            .iter()
            .enumerate()
            .map(|(i, &(location, revenue))| Customer {
                index: i + 1,
                location,
                revenue,
            })
            .collect();
        let setting = Setting {
            location_dist: LocationDist::Unif,
            revenue_dist: RevenueDist::Rand,
            profitability: Profitability::Med,
            constraint: match constraint {
                Constraint::Load(_) => ConstraintKind::Load,
                Constraint::Dist(_) => ConstraintKind::Dist,
            },
        };
        let inst = Instance {
            setting,
            customers,
            instance_id: 0,
            seed: 0,
            provider: Provider {
                cost_factor,
                constraint,
            },
        };
        inst.validate_shape()?;
        Ok(inst)
    }

    pub fn horizon(&self) -> usize {
        self.customers.len()
    }

    pub fn cost_factor(&self) -> f64 {
        self.provider.cost_factor
    }

    pub fn constraint(&self) -> Constraint {
        self.provider.constraint
    }

    /// Customer requesting in `epoch` (1-based).
    pub fn customer(&self, epoch: usize) -> &Customer {
        &self.customers[epoch - 1]
    }

    pub fn revenue(&self, epoch: usize) -> f64 {
        self.customers[epoch - 1].revenue
    }

    pub fn locations(&self, set: OrderSet) -> impl Iterator<Item = f64> + '_ {
        set.customers().map(move |c| self.customers[c - 1].location)
    }

    fn validate_shape(&self) -> Result<()> {
        let t = self.customers.len();
        if t == 0 || t > 20 {
            return Err(Error::InvalidInstance(format!("horizon {t} outside 1..=20")));
        }
        for (i, c) in self.customers.iter().enumerate() {
            if c.index != i + 1 {
                return Err(Error::InvalidInstance(format!(
                    "customer at position {} has index {}",
                    i + 1,
                    c.index
                )));
            }
            if !c.location.is_finite() || c.location.abs() > SEGMENT_HALF_WIDTH {
                return Err(Error::InvalidInstance(format!(
                    "customer {} location {} outside [-25, 25]",
                    c.index, c.location
                )));
            }
            if !c.revenue.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "customer {} revenue not finite",
                    c.index
                )));
            }
        }
        Ok(())
    }

    /// Checks the catalogue invariants: horizon, revenue composition, arrival order.
    pub fn validate(&self) -> Result<()> {
        self.setting.validate()?;
        self.validate_shape()?;
        if self.customers.len() != HORIZON {
            return Err(Error::InvalidInstance(format!(
                "expected {HORIZON} customers, found {}",
                self.customers.len()
            )));
        }
        let high: Vec<bool> = self.customers.iter().map(|c| c.revenue == HIGH_REVENUE).collect();
        let all_standard = self
            .customers
            .iter()
            .all(|c| c.revenue == HIGH_REVENUE || c.revenue == LOW_REVENUE);
        if !all_standard {
            return Err(Error::InvalidInstance("revenues must be 15 or 25".into()));
        }
        let n_high = high.iter().filter(|&&h| h).count();
        let expected_high = match self.setting.revenue_dist {
            RevenueDist::Homog => 0,
            _ => crate::instgen::HIGH_REVENUE_COUNT,
        };
        if n_high != expected_high {
            return Err(Error::InvalidInstance(format!(
                "expected {expected_high} high-revenue customers, found {n_high}"
            )));
        }
        let ordered = match self.setting.revenue_dist {
            RevenueDist::HbL => high[..n_high].iter().all(|&h| h),
            RevenueDist::LbH => high[HORIZON - n_high..].iter().all(|&h| h),
            _ => true,
        };
        if !ordered {
            return Err(Error::InvalidInstance(format!(
                "arrival order violates {}",
                self.setting.revenue_dist
            )));
        }
        Ok(())
    }

    /// Fixed-layout JSON with 17 significant digits for every real.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        s.push_str(&format!(
            "  \"setting\": {{\"loc\": \"{}\", \"rev\": \"{}\", \"prof\": \"{}\", \"cons\": \"{}\"}},\n",
            self.setting.location_dist, self.setting.revenue_dist, self.setting.profitability, self.setting.constraint
        ));
        s.push_str(&format!("  \"seed\": {},\n", self.seed));
        s.push_str(&format!("  \"instance_id\": {},\n", self.instance_id));
        s.push_str("  \"customers\": [\n");
        for (i, c) in self.customers.iter().enumerate() {
            let sep = if i + 1 == self.customers.len() { "" } else { "," };
            s.push_str(&format!(
                "    {{\"index\": {}, \"location\": {}, \"revenue\": {}}}{sep}\n",
                c.index,
                real17(c.location),
                real17(c.revenue)
            ));
        }
        s.push_str("  ]\n}\n");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            setting: Setting,
            seed: u64,
            instance_id: u32,
            customers: Vec<Customer>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Instance::new(raw.setting, raw.customers, raw.instance_id, raw.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableKind {
    /// Optimal values V.
    Optimal,
    /// Revenue-only values of the displacement-cost approximation.
    DpcR,
    /// Cost-only values of the marginal-cost-to-serve approximation.
    MctsF,
    /// Revenue share of V along the optimal policy.
    RevenueShare,
    /// Cost share of V along the optimal policy.
    CostShare,
    /// True expected profit-to-go of an arbitrary policy.
    PolicyValue,
}

impl TableKind {
    pub fn label(self) -> &'static str {
        match self {
            TableKind::Optimal => "V",
            TableKind::DpcR => "R_dpc",
            TableKind::MctsF => "F_mcts",
            TableKind::RevenueShare => "R_star",
            TableKind::CostShare => "F_star",
            TableKind::PolicyValue => "U",
        }
    }
}

/// Post-decision values per epoch `0..=T`. Epoch `t` holds one slot per
/// `A ⊆ {1..t}`; infeasible sets hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub kind: TableKind,
    epochs: Vec<Vec<Option<f64>>>,
}

impl ValueTable {
    pub fn new(kind: TableKind, horizon: usize) -> Self {
        ValueTable {
            kind,
            epochs: (0..=horizon).map(|t| vec![None; 1 << t]).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.epochs.len() - 1
    }

    pub fn get(&self, epoch: usize, set: OrderSet) -> Option<f64> {
        self.epochs
            .get(epoch)
            .and_then(|row| row.get(set.0 as usize))
            .copied()
            .flatten()
    }

    /// Like [`get`](Self::get) but panics on an unset or out-of-range entry.
    pub fn value(&self, epoch: usize, set: OrderSet) -> f64 {
        self.get(epoch, set).unwrap_or_else(|| {
            panic!(
                "{} table has no entry for epoch {epoch}, set {:b}",
                self.kind.label(),
                set.0
            )
        })
    }

    pub fn set(&mut self, epoch: usize, set: OrderSet, value: f64) {
        self.epochs[epoch][set.0 as usize] = Some(value);
    }

    /// All populated `(epoch, set, value)` entries in epoch-then-mask order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, OrderSet, f64)> + '_ {
        self.epochs.iter().enumerate().flat_map(|(t, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(m, v)| v.map(|v| (t, OrderSet(m as u32), v)))
        })
    }

    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV rows `kind,epoch,mask,value` (no header).
    pub fn write_csv_rows(&self, out: &mut String) {
        let horizon = self.horizon();
        for (t, set, v) in self.entries() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.kind.label(),
                t,
                set.bitstring(horizon),
                real17(v)
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalogue_has_66_unique_settings() {
        let all = enumerate_settings();
        assert_eq!(all.len(), 66);
        let unique: HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 66);
        let customer: HashSet<_> = all.iter().map(|s| s.customer_setting()).collect();
        assert_eq!(customer.len(), 11);
        assert_eq!(enumerate_settings(), all);
    }

    #[test]
    fn catalogue_membership() {
        let all = enumerate_settings();
        assert!(all.contains(&Setting {
            location_dist: LocationDist::Unif,
            revenue_dist: RevenueDist::Homog,
            profitability: Profitability::High,
            constraint: ConstraintKind::Load,
        }));
        assert!(!all
            .iter()
            .any(|s| s.location_dist == LocationDist::ClustSort && s.revenue_dist == RevenueDist::Homog));
        assert_eq!(all[0].ordinal(), Some(0));
        assert_eq!(all[65].ordinal(), Some(65));
    }

    #[test]
    fn invalid_setting_rejected() {
        let err = Setting::new(
            LocationDist::ClustSort,
            RevenueDist::Homog,
            Profitability::Low,
            ConstraintKind::Dist,
        );
        assert!(matches!(err, Err(Error::InvalidSetting(_))));
    }

    #[test]
    fn caption_label() {
        let s = Setting::new(
            LocationDist::Unif,
            RevenueDist::Homog,
            Profitability::Med,
            ConstraintKind::Load,
        )
        .unwrap();
        assert_eq!(s.label(), "med | load | unif | homog");
        assert_eq!(s.slug(), "unif_homog_med_load");
    }

    #[test]
    fn order_set_ops() {
        let a = OrderSet::from_customers([1, 3]);
        assert!(a.contains(1) && a.contains(3) && !a.contains(2));
        assert_eq!(a.len(), 2);
        assert_eq!(a.bitstring(5), "10100");
        assert_eq!(OrderSet::parse_bitstring("10100"), Some(a));
        assert_eq!(a.customers().collect::<Vec<_>>(), vec![1, 3]);
        assert!(OrderSet::from_customers([3]).is_subset_of(a));
    }

    #[test]
    fn value_table_layout() {
        let mut t = ValueTable::new(TableKind::Optimal, 3);
        assert!(t.is_empty());
        t.set(2, OrderSet::from_customers([2]), 1.5);
        assert_eq!(t.get(2, OrderSet::from_customers([2])), Some(1.5));
        assert_eq!(t.get(2, OrderSet::from_customers([1])), None);
        assert_eq!(t.get(7, OrderSet::EMPTY), None);
        let mut rows = String::new();
        t.write_csv_rows(&mut rows);
        assert_eq!(rows, "V,2,010,1.5000000000000000\n");
    }
}
