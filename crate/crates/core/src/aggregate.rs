//! Epoch × capacity lookup tables, setting-level summaries and the
//! full-factorial study driver.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{enumerate_settings, Constraint, Instance, OrderSet, Setting};
use crate::dp::{
    evaluate_policy_with, solve_dpc_with, solve_mcts_with, solve_optimal_with, PolicyKind, PolicySolution,
};
use crate::error::{Error, Result};
use crate::format::real17;
use crate::instgen::{generate_instance, StreamRng};
use crate::metrics::{
    compute_errors_from_rates, compute_errors_with, optimality_gap, sampled_decision_rates, MetricRecord, RegretSums,
};
use crate::policies::{myopic_rule, DecisionRule};
use crate::routing::TourCache;
use crate::viz;

pub const CAPACITY_BUCKETS: usize = 10;
const BUCKET_WIDTH: f64 = 100.0 / CAPACITY_BUCKETS as f64;

/// Capacity consumed by `set`, in percent of the binding constraint.
pub fn capacity_pct(set: OrderSet, instance: &Instance) -> f64 {
    capacity_pct_with(set, instance, &TourCache::new(instance))
}

pub fn capacity_pct_with(set: OrderSet, instance: &Instance, cache: &TourCache) -> f64 {
    match instance.constraint() {
        Constraint::Load(cap) => 100.0 * set.len() as f64 / f64::from(cap),
        Constraint::Dist(limit) => 100.0 * cache.length(set) / limit,
    }
}

/// Bucket `k` covers `[10k, 10k+10)`; the last bucket is closed at 100.
pub fn capacity_bucket(pct: f64) -> usize {
    ((pct / BUCKET_WIDTH).floor().max(0.0) as usize).min(CAPACITY_BUCKETS - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum HeatmapMetric {
    EOver,
    EUnder,
    RegretOver,
    RegretUnder,
    DecisionRate,
}

impl HeatmapMetric {
    pub const ALL: [HeatmapMetric; 5] = [
        HeatmapMetric::EOver,
        HeatmapMetric::EUnder,
        HeatmapMetric::RegretOver,
        HeatmapMetric::RegretUnder,
        HeatmapMetric::DecisionRate,
    ];

    pub fn label(self) -> &'static str {
        match self {
            HeatmapMetric::EOver => "e_over",
            HeatmapMetric::EUnder => "e_under",
            HeatmapMetric::RegretOver => "regret_over",
            HeatmapMetric::RegretUnder => "regret_under",
            HeatmapMetric::DecisionRate => "decision_rate",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            HeatmapMetric::EOver => "Overestimation error",
            HeatmapMetric::EUnder => "Underestimation error",
            HeatmapMetric::RegretOver => "Overestimation regret",
            HeatmapMetric::RegretUnder => "Underestimation regret",
            HeatmapMetric::DecisionRate => "Decision rate",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        HeatmapMetric::ALL.into_iter().find(|m| m.label() == label)
    }

    fn of(self, r: &MetricRecord) -> f64 {
        match self {
            HeatmapMetric::EOver => r.e_over,
            HeatmapMetric::EUnder => r.e_under,
            HeatmapMetric::RegretOver => r.regret_over,
            HeatmapMetric::RegretUnder => r.regret_under,
            HeatmapMetric::DecisionRate => r.decision_rate,
        }
    }

    /// Rates are summed per cell; magnitudes are averaged.
    pub fn is_rate(self) -> bool {
        self == HeatmapMetric::DecisionRate
    }

    /// Error and regret maps only consider requests that could be accepted.
    fn consumes(self, r: &MetricRecord) -> bool {
        self.is_rate() || r.acceptable
    }
}

impl fmt::Display for HeatmapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeatmapCell {
    /// Mean over records (magnitudes) or instance-averaged sum (rates).
    pub value: f64,
    pub count: usize,
}

/// Rows are epochs `1..=T` (row 0 = epoch 1), columns capacity buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub metric: HeatmapMetric,
    pub horizon: usize,
    pub cells: Vec<HeatmapCell>,
}

impl Heatmap {
    pub fn empty(metric: HeatmapMetric, horizon: usize) -> Self {
        Heatmap {
            metric,
            horizon,
            cells: vec![HeatmapCell::default(); horizon * CAPACITY_BUCKETS],
        }
    }

    pub fn cell(&self, epoch: usize, bucket: usize) -> HeatmapCell {
        self.cells[(epoch - 1) * CAPACITY_BUCKETS + bucket]
    }

    pub fn total_count(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn total_value(&self) -> f64 {
        self.cells.iter().map(|c| c.value).sum()
    }

    /// Sum of values in one capacity column.
    pub fn column_total(&self, bucket: usize) -> f64 {
        (1..=self.horizon).map(|t| self.cell(t, bucket).value).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.count > 0)
            .map(|c| c.value)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,bucket_lo,bucket_hi,mean_or_sum,count\n");
        for t in 1..=self.horizon {
            for b in 0..CAPACITY_BUCKETS {
                let c = self.cell(t, b);
                let value = if c.count == 0 && !self.metric.is_rate() {
                    String::new()
                } else {
                    real17(c.value)
                };
                out.push_str(&format!(
                    "{t},{},{},{value},{}\n",
                    b as f64 * BUCKET_WIDTH,
                    (b + 1) as f64 * BUCKET_WIDTH,
                    c.count
                ));
            }
        }
        out
    }

    pub fn from_csv(metric: HeatmapMetric, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("heatmap csv line {}: {line:?}", i + 1));
            if f.len() != 5 {
                return Err(bad());
            }
            let t: usize = f[0].parse().map_err(|_| bad())?;
            let lo: f64 = f[1].parse().map_err(|_| bad())?;
            let value: f64 = if f[3].is_empty() {
                0.0
            } else {
                f[3].parse().map_err(|_| bad())?
            };
            let count: usize = f[4].parse().map_err(|_| bad())?;
            rows.push((t, capacity_bucket(lo), HeatmapCell { value, count }));
        }
        let horizon = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let mut map = Heatmap::empty(metric, horizon);
        for (t, b, cell) in rows {
            if t == 0 {
                return Err(Error::Parse("heatmap epoch 0".into()));
            }
            map.cells[(t - 1) * CAPACITY_BUCKETS + b] = cell;
        }
        Ok(map)
    }
}

/// Running sums for one metric; merging is order-independent up to
/// floating-point association, and the study merges in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapAccumulator {
    pub metric: HeatmapMetric,
    pub horizon: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
    instances: usize,
}

impl HeatmapAccumulator {
    pub fn new(metric: HeatmapMetric, horizon: usize) -> Self {
        HeatmapAccumulator {
            metric,
            horizon,
            sums: vec![0.0; horizon * CAPACITY_BUCKETS],
            counts: vec![0; horizon * CAPACITY_BUCKETS],
            instances: 0,
        }
    }

    /// Adds the records of one instance.
    pub fn add_instance(&mut self, records: &[MetricRecord]) {
        for r in records.iter().filter(|r| self.metric.consumes(r)) {
            let i = (r.epoch - 1) * CAPACITY_BUCKETS + capacity_bucket(r.capacity_pct);
            self.sums[i] += self.metric.of(r);
            self.counts[i] += 1;
        }
        self.instances += 1;
    }

    pub fn merge(&mut self, other: &HeatmapAccumulator) {
        assert_eq!((self.metric, self.horizon), (other.metric, other.horizon));
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.instances += other.instances;
    }

    pub fn instances(&self) -> usize {
        self.instances
    }

    pub fn finish(&self) -> Heatmap {
        let cells = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(&sum, &count)| HeatmapCell {
                value: if self.metric.is_rate() {
                    sum / self.instances.max(1) as f64
                } else if count > 0 {
                    sum / count as f64
                } else {
                    0.0
                },
                count,
            })
            .collect();
        Heatmap {
            metric: self.metric,
            horizon: self.horizon,
            cells,
        }
    }
}

/// Five accumulators, one per [`HeatmapMetric`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    pub accumulators: Vec<HeatmapAccumulator>,
}

impl HeatmapSet {
    pub fn new(horizon: usize) -> Self {
        HeatmapSet {
            accumulators: HeatmapMetric::ALL
                .iter()
                .map(|&m| HeatmapAccumulator::new(m, horizon))
                .collect(),
        }
    }

    pub fn add_instance(&mut self, records: &[MetricRecord]) {
        for acc in &mut self.accumulators {
            acc.add_instance(records);
        }
    }

    pub fn merge(&mut self, other: &HeatmapSet) {
        for (a, b) in self.accumulators.iter_mut().zip(&other.accumulators) {
            a.merge(b);
        }
    }

    pub fn finish(&self) -> Vec<Heatmap> {
        self.accumulators.iter().map(HeatmapAccumulator::finish).collect()
    }
}

/// The five heatmaps of a single instance's records.
pub fn build_heatmaps(records: &[MetricRecord], horizon: usize) -> Vec<Heatmap> {
    let mut set = HeatmapSet::new(horizon);
    set.add_instance(records);
    set.finish()
}

#[derive(Debug, Clone)]
pub struct SettingSummary {
    pub setting: Setting,
    pub policy: PolicyKind,
    pub instances: usize,
    pub mean_j_star: f64,
    pub mean_j_pi: f64,
    /// Relative gap of the setting means.
    pub gap: f64,
    /// Mean of the per-instance relative gaps.
    pub mean_instance_gap: f64,
    pub regret: RegretSums,
    pub heatmaps: Vec<Heatmap>,
}

impl SettingSummary {
    pub fn error_ratio(&self) -> Option<f64> {
        self.regret.ratio()
    }

    pub fn underestimation_dominant(&self) -> bool {
        self.error_ratio().is_some_and(|e| e < 0.5)
    }

    pub fn heatmap(&self, metric: HeatmapMetric) -> &Heatmap {
        self.heatmaps
            .iter()
            .find(|h| h.metric == metric)
            .expect("summaries carry all five heatmaps")
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub root_seed: u64,
    pub instances_per_setting: u32,
    /// Policies to evaluate; the optimal policy is always solved for reference.
    pub policies: Vec<PolicyKind>,
    pub settings: Vec<Setting>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Write per-setting heatmap SVG panels and the overview figures.
    pub figures: bool,
    /// Estimate decision rates from this many simulated paths instead of
    /// exact forward propagation.
    pub sampling_paths: Option<u64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            root_seed: 42,
            instances_per_setting: 50,
            policies: vec![PolicyKind::Dpc, PolicyKind::Mcts, PolicyKind::Myopic],
            settings: enumerate_settings(),
            out_dir: None,
            workers: 0,
            figures: true,
            sampling_paths: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances_per_setting == 0 {
            return Err(Error::InvalidSetting("instances_per_setting must be at least 1".into()));
        }
        if self.sampling_paths == Some(0) {
            return Err(Error::InvalidSetting("sampling_paths must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidSetting("at least one policy is required".into()));
        }
        for s in &self.settings {
            s.validate()?;
        }
        Ok(())
    }
}

/// Invariant checks accumulated over the study.
#[derive(Debug, Clone, Default, Serialize)]
pub struct InvariantReport {
    pub checks: u64,
    pub violations: u64,
    /// First few violation messages.
    pub samples: Vec<String>,
}

impl InvariantReport {
    const MAX_SAMPLES: usize = 20;

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.samples.len() < Self::MAX_SAMPLES {
                self.samples.push(msg());
            }
        }
    }

    fn merge(&mut self, other: InvariantReport) {
        self.checks += other.checks;
        self.violations += other.violations;
        for s in other.samples {
            if self.samples.len() < Self::MAX_SAMPLES {
                self.samples.push(s);
            }
        }
    }
}

pub const OC_TOLERANCE: f64 = 1e-9;
pub const RATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
struct PolicyOutcome {
    policy: PolicyKind,
    j_pi: f64,
    regret: RegretSums,
    heatmaps: HeatmapSet,
}

#[derive(Debug, Clone)]
struct InstanceOutcome {
    j_star: f64,
    policies: Vec<PolicyOutcome>,
    invariants: InvariantReport,
}

/// Rule for `policy` on `instance`, re-using the optimal solution when asked for it.
pub fn policy_rule(
    policy: PolicyKind,
    instance: &Instance,
    cache: &TourCache,
    optimal: &PolicySolution,
) -> DecisionRule {
    match policy {
        PolicyKind::Optimal => optimal.rule.clone(),
        PolicyKind::Dpc => solve_dpc_with(instance, cache).rule,
        PolicyKind::Mcts => solve_mcts_with(instance, cache).rule,
        PolicyKind::Myopic => myopic_rule(instance),
    }
}

/// Checks the study-wide invariants on one policy's records.
pub fn check_records(
    records: &[MetricRecord],
    instance: &Instance,
    tag: &str,
    exact_rates: bool,
    report: &mut InvariantReport,
) {
    for r in records {
        let at = || format!("{tag} t={} A={}", r.epoch, r.state.bitstring(instance.horizon()));
        if let Some(dv) = r.true_oc {
            report.check(dv >= -OC_TOLERANCE, || format!("{}: ΔV = {dv} < 0", at()));
        }
        report.check(r.regret >= 0.0, || format!("{}: negative regret {}", at(), r.regret));
        if r.regret > 0.0 && !r.optimal_accept && r.approx_accept {
            report.check(r.e_under > 0.0, || {
                format!("{}: wrong acceptance without underestimation", at())
            });
        }
        if r.regret > 0.0 && r.optimal_accept && !r.approx_accept {
            report.check(r.e_over > 0.0, || {
                format!("{}: wrong rejection without overestimation", at())
            });
        }
        let split = r.regret_over + r.regret_under;
        report.check(split == 0.0 || split == r.regret, || {
            format!("{}: regret split {split} vs {}", at(), r.regret)
        });
    }
    let mut per_epoch = vec![0.0_f64; instance.horizon() + 1];
    for r in records {
        per_epoch[r.epoch] += r.decision_rate;
    }
    // Sampled rates only match 0.5 per epoch up to binomial noise.
    for (t, total) in per_epoch.iter().enumerate().skip(1).filter(|_| exact_rates) {
        report.check((total - 0.5).abs() <= RATE_TOLERANCE, || {
            format!("{tag} t={t}: decision rates sum to {total}")
        });
    }
    if let Some(e) = RegretSums::from_records(records).ratio() {
        report.check((0.0..=1.0).contains(&e), || {
            format!("{tag}: error ratio {e} outside [0, 1]")
        });
    }
}

fn run_instance(instance: &Instance, policies: &[PolicyKind], sampling_paths: Option<u64>) -> InstanceOutcome {
    let cache = TourCache::new(instance);
    let optimal = solve_optimal_with(instance, &cache);
    let mut invariants = InvariantReport::default();
    let horizon = instance.horizon();
    let mut outcomes = Vec::with_capacity(policies.len());
    for &policy in policies {
        let tag = format!("{} #{} {}", instance.setting.slug(), instance.instance_id, policy);
        let rule = policy_rule(policy, instance, &cache, &optimal);
        let eval = evaluate_policy_with(&rule, instance, &cache);
        let records = match sampling_paths {
            None => compute_errors_with(&optimal, &rule, instance, &cache),
            Some(paths) => {
                let mut rng = StreamRng::from_seed(instance.seed ^ policy_stream(policy));
                let rates = sampled_decision_rates(&rule, instance, paths, &mut rng);
                compute_errors_from_rates(&optimal, &rule, instance, &cache, &rates)
            }
        };
        check_records(&records, instance, &tag, sampling_paths.is_none(), &mut invariants);
        invariants.check(eval.value <= optimal.root_value + OC_TOLERANCE, || {
            format!("{tag}: J_pi {} exceeds J* {}", eval.value, optimal.root_value)
        });
        invariants.check(eval.infeasible_accepts == 0, || {
            format!("{tag}: infeasible acceptances")
        });
        let mut heatmaps = HeatmapSet::new(horizon);
        heatmaps.add_instance(&records);
        outcomes.push(PolicyOutcome {
            policy,
            j_pi: eval.value,
            regret: RegretSums::from_records(&records),
            heatmaps,
        });
    }
    InstanceOutcome {
        j_star: optimal.root_value,
        policies: outcomes,
        invariants,
    }
}

/// Separate sampling stream per policy so estimates do not share paths.
fn policy_stream(policy: PolicyKind) -> u64 {
    0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(policy as u64 + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyStats {
    pub settings: usize,
    /// Settings whose weighted error ratio is defined and below 0.5.
    pub underestimation_dominant: usize,
    pub dominance_fraction: f64,
    pub undefined_ratio_settings: usize,
    pub mean_gap: f64,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub root_seed: u64,
    pub instances_per_setting: u32,
    pub summaries: Vec<SettingSummary>,
    pub invariants: InvariantReport,
    pub policy_stats: BTreeMap<String, PolicyStats>,
    pub incomplete_settings: Vec<String>,
}

impl StudyReport {
    pub fn summary(&self, setting: &Setting, policy: PolicyKind) -> Option<&SettingSummary> {
        self.summaries
            .iter()
            .find(|s| s.setting == *setting && s.policy == policy)
    }

    pub fn dominance_fraction(&self, policy: PolicyKind) -> Option<f64> {
        self.policy_stats.get(policy.label()).map(|s| s.dominance_fraction)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            root_seed: u64,
            instances_per_setting: u32,
            settings: usize,
            policies: &'a BTreeMap<String, PolicyStats>,
            invariants: &'a InvariantReport,
            incomplete_settings: &'a [String],
        }
        let settings = self
            .summaries
            .iter()
            .map(|s| s.setting)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let mut s = serde_json::to_string_pretty(&Out {
            root_seed: self.root_seed,
            instances_per_setting: self.instances_per_setting,
            settings,
            policies: &self.policy_stats,
            invariants: &self.invariants,
            incomplete_settings: &self.incomplete_settings,
        })
        .expect("report serialises");
        s.push('\n');
        s
    }
}

pub const SUMMARY_CSV_HEADER: &str = "setting,policy,J_star,J_pi,gap,E,underestimation_dominant\n";

pub fn summary_csv(summaries: &[SettingSummary]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.setting.slug(),
            s.policy,
            real17(s.mean_j_star),
            real17(s.mean_j_pi),
            real17(s.gap),
            s.error_ratio().map(real17).unwrap_or_default(),
            u8::from(s.underestimation_dominant())
        ));
    }
    out
}

/// Row of `summary.csv` as read back for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub setting: Setting,
    pub policy: PolicyKind,
    pub j_star: f64,
    pub j_pi: f64,
    pub gap: f64,
    pub error_ratio: Option<f64>,
}

pub fn setting_from_slug(slug: &str) -> Option<Setting> {
    enumerate_settings().into_iter().find(|s| s.slug() == slug)
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Parse(format!("summary csv line {}: {line:?}", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        rows.push(SummaryRow {
            setting: setting_from_slug(f[0]).ok_or_else(bad)?,
            policy: PolicyKind::from_label(f[1]).ok_or_else(bad)?,
            j_star: f[2].parse().map_err(|_| bad())?,
            j_pi: f[3].parse().map_err(|_| bad())?,
            gap: f[4].parse().map_err(|_| bad())?,
            error_ratio: if f[5].is_empty() {
                None
            } else {
                Some(f[5].parse().map_err(|_| bad())?)
            },
        });
    }
    Ok(rows)
}

pub fn heatmap_file_name(setting: &Setting, policy: PolicyKind, metric: HeatmapMetric) -> String {
    format!("heatmap_{}_{}_{}.csv", setting.slug(), policy, metric)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Generates, solves and aggregates every `(setting, instance)` pair.
///
/// Instances are processed in parallel; results are reduced in
/// `(setting, instance_id)` order so outputs do not depend on `workers`.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let jobs: Vec<(usize, u32)> = (0..config.settings.len())
        .flat_map(|s| (0..config.instances_per_setting).map(move |i| (s, i)))
        .collect();
    let work = || -> Vec<(usize, Result<InstanceOutcome>)> {
        jobs.par_iter()
            .map(|&(s, i)| {
                let setting = &config.settings[s];
                let outcome = generate_instance(setting, config.root_seed, i)
                    .map(|inst| run_instance(&inst, &config.policies, config.sampling_paths));
                if let Err(e) = &outcome {
                    log::error!("{} instance {i}: {e}", setting.slug());
                }
                (s, outcome)
            })
            .collect()
    };
    let results = if config.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?
            .install(work)
    };

    let mut invariants = InvariantReport::default();
    let mut summaries = Vec::new();
    let mut incomplete_settings = Vec::new();
    let mut per_setting: Vec<Vec<InstanceOutcome>> = vec![Vec::new(); config.settings.len()];
    for (s, outcome) in results {
        match outcome {
            Ok(o) => per_setting[s].push(o),
            Err(_) => {
                let slug = config.settings[s].slug();
                if !incomplete_settings.contains(&slug) {
                    incomplete_settings.push(slug);
                }
            }
        }
    }
    for (s, outcomes) in per_setting.into_iter().enumerate() {
        let setting = config.settings[s];
        let n = outcomes.len();
        if n == 0 {
            continue;
        }
        let mean_j_star = outcomes.iter().map(|o| o.j_star).sum::<f64>() / n as f64;
        for (p, &policy) in config.policies.iter().enumerate() {
            let mut heatmaps = HeatmapSet::new(setting.horizon());
            let mut regret = RegretSums::default();
            let mut j_pi = 0.0;
            let mut gap_sum = 0.0;
            for o in &outcomes {
                let po = &o.policies[p];
                debug_assert_eq!(po.policy, policy);
                heatmaps.merge(&po.heatmaps);
                regret = regret.merge(po.regret);
                j_pi += po.j_pi;
                gap_sum += optimality_gap(o.j_star, po.j_pi);
            }
            let mean_j_pi = j_pi / n as f64;
            summaries.push(SettingSummary {
                setting,
                policy,
                instances: n,
                mean_j_star,
                mean_j_pi,
                gap: optimality_gap(mean_j_star, mean_j_pi),
                mean_instance_gap: gap_sum / n as f64,
                regret,
                heatmaps: heatmaps.finish(),
            });
        }
        for o in outcomes {
            invariants.merge(o.invariants);
        }
    }

    let mut policy_stats = BTreeMap::new();
    for &policy in &config.policies {
        let rows: Vec<&SettingSummary> = summaries.iter().filter(|s| s.policy == policy).collect();
        let settings = rows.len();
        let dominant = rows.iter().filter(|s| s.underestimation_dominant()).count();
        let undefined = rows.iter().filter(|s| s.error_ratio().is_none()).count();
        let mean_gap = if settings == 0 {
            0.0
        } else {
            rows.iter().map(|s| s.gap).sum::<f64>() / settings as f64
        };
        policy_stats.insert(
            policy.label().to_owned(),
            PolicyStats {
                settings,
                underestimation_dominant: dominant,
                dominance_fraction: if settings == 0 {
                    0.0
                } else {
                    dominant as f64 / settings as f64
                },
                undefined_ratio_settings: undefined,
                mean_gap,
            },
        );
    }

    let report = StudyReport {
        root_seed: config.root_seed,
        instances_per_setting: config.instances_per_setting,
        summaries,
        invariants,
        policy_stats,
        incomplete_settings,
    };
    if let Some(dir) = &config.out_dir {
        write_study(&report, config, dir)?;
    }
    Ok(report)
}

/// Writes `summary.csv`, heatmap CSVs, `report.json`, `manifest.json` and figures.
pub fn write_study(report: &StudyReport, config: &StudyConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&report.summaries))?;
    for s in &report.summaries {
        for h in &s.heatmaps {
            write_file(
                &dir.join(heatmap_file_name(&s.setting, s.policy, h.metric)),
                &h.to_csv(),
            )?;
        }
    }
    write_file(&dir.join("report.json"), &report.to_json())?;
    write_file(&dir.join("manifest.json"), &manifest_json(config))?;
    if config.figures {
        let fig_dir = dir.join("figures");
        std::fs::create_dir_all(&fig_dir).map_err(|e| Error::io(&fig_dir, e))?;
        for s in &report.summaries {
            let svg = viz::render_heatmap_panel(&s.setting, s.policy, &s.heatmaps);
            write_file(&fig_dir.join(viz::panel_file_name(&s.setting, s.policy)), &svg)?;
        }
        let rows: Vec<SummaryRow> = report
            .summaries
            .iter()
            .map(|s| SummaryRow {
                setting: s.setting,
                policy: s.policy,
                j_star: s.mean_j_star,
                j_pi: s.mean_j_pi,
                gap: s.gap,
                error_ratio: s.error_ratio(),
            })
            .collect();
        write_file(&fig_dir.join("error_ratio_scatter.svg"), &viz::render_scatter(&rows))?;
        write_file(
            &fig_dir.join("objective_profile.svg"),
            &viz::render_objective_profile(&rows),
        )?;
    }
    Ok(())
}

/// Everything needed to regenerate the study's outputs. Contains no
/// timestamps so that identical configurations give identical bytes.
pub fn manifest_json(config: &StudyConfig) -> String {
    let value = serde_json::json!({
        "tool": "dmvrpx",
        "version": env!("CARGO_PKG_VERSION"),
        "root_seed": config.root_seed,
        "instances_per_setting": config.instances_per_setting,
        "policies": config.policies.iter().map(|p| p.label()).collect::<Vec<_>>(),
        "settings": config.settings.iter().map(|s| s.slug()).collect::<Vec<_>>(),
        "seed_derivation": "splitmix64(splitmix64(splitmix64(root_seed) ^ setting_ordinal) ^ instance_id), ChaCha8 stream",
        "figures": config.figures,
        "sampling_paths": config.sampling_paths,
    });
    let mut s = serde_json::to_string_pretty(&value).expect("manifest serialises");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ConstraintKind, LocationDist, Profitability, RevenueDist};
    use crate::dp::solve_optimal;
    use crate::metrics::compute_errors;

    fn record(epoch: usize, pct: f64, e_under: f64) -> MetricRecord {
        MetricRecord {
            epoch,
            state: OrderSet::EMPTY,
            capacity_pct: pct,
            acceptable: true,
            true_oc: Some(12.0),
            approx_oc: Some(0.0),
            optimal_accept: true,
            approx_accept: true,
            signed_error: -e_under,
            e_over: 0.0,
            e_under,
            regret: 0.0,
            regret_over: 0.0,
            regret_under: 0.0,
            decision_rate: 0.5,
        }
    }

    #[test]
    fn capacity_examples() {
        let load = Instance::custom(&[(1.0, 15.0), (2.0, 15.0), (3.0, 15.0)], 1.0, Constraint::Load(3)).unwrap();
        assert_eq!(capacity_pct(OrderSet::EMPTY, &load), 0.0);
        assert_eq!(capacity_pct(OrderSet::from_customers([1, 2, 3]), &load), 100.0);
        let dist = Instance::custom(&[(18.0, 15.0), (22.0, 15.0)], 1.0, Constraint::Dist(50.0)).unwrap();
        assert_eq!(capacity_pct(OrderSet::from_customers([1, 2]), &dist), 88.0);
    }

    #[test]
    fn buckets() {
        assert_eq!(capacity_bucket(0.0), 0);
        assert_eq!(capacity_bucket(9.99), 0);
        assert_eq!(capacity_bucket(10.0), 1);
        assert_eq!(capacity_bucket(100.0), 9);
        assert_eq!(capacity_bucket(200.0 / 3.0), 6);
    }

    #[test]
    fn single_record_heatmap() {
        let maps = build_heatmaps(&[record(1, 0.0, 12.0)], 10);
        let under = maps.iter().find(|h| h.metric == HeatmapMetric::EUnder).unwrap();
        assert_eq!(under.cell(1, 0), HeatmapCell { value: 12.0, count: 1 });
        assert_eq!(under.total_count(), 1);
        assert_eq!(under.total_value(), 12.0);
    }

    #[test]
    fn optimal_heatmaps_have_no_regret_and_full_rate_mass() {
        let setting = Setting::new(
            LocationDist::Unif,
            RevenueDist::Rand,
            Profitability::Med,
            ConstraintKind::Load,
        )
        .unwrap();
        let inst = generate_instance(&setting, 1, 0).unwrap();
        let opt = solve_optimal(&inst);
        let records = compute_errors(&opt, &opt.rule, &inst);
        let maps = build_heatmaps(&records, 10);
        for h in &maps {
            match h.metric {
                HeatmapMetric::RegretOver | HeatmapMetric::RegretUnder => assert_eq!(h.total_value(), 0.0),
                HeatmapMetric::DecisionRate => {
                    assert!((h.total_value() - 5.0).abs() < 1e-12);
                    assert_eq!(h.total_count(), records.len());
                }
                _ => {}
            }
        }
    }

    #[test]
    fn pooled_merge_commutes_with_cell_assignment() {
        let a = [record(1, 0.0, 12.0), record(2, 35.0, 4.0)];
        let b = [record(1, 5.0, 6.0)];
        let mut per_instance = HeatmapAccumulator::new(HeatmapMetric::EUnder, 3);
        per_instance.add_instance(&a);
        let mut other = HeatmapAccumulator::new(HeatmapMetric::EUnder, 3);
        other.add_instance(&b);
        per_instance.merge(&other);
        let mut pooled = HeatmapAccumulator::new(HeatmapMetric::EUnder, 3);
        pooled.add_instance(&[a[0], a[1], b[0]]);
        assert_eq!(per_instance.finish().cells, pooled.finish().cells);
        assert_eq!(per_instance.finish().cell(1, 0).value, 9.0);
    }

    #[test]
    fn heatmap_csv_round_trip() {
        let maps = build_heatmaps(&[record(1, 0.0, 12.0), record(3, 100.0, 1.0)], 3);
        for h in maps {
            let back = Heatmap::from_csv(h.metric, &h.to_csv()).unwrap();
            assert_eq!(back, h);
        }
    }

    #[test]
    fn summary_round_trip() {
        let config = StudyConfig {
            instances_per_setting: 2,
            settings: enumerate_settings()[..2].to_vec(),
            figures: false,
            ..StudyConfig::default()
        };
        let report = run_study(&config).unwrap();
        assert_eq!(report.summaries.len(), 6);
        assert_eq!(report.invariants.violations, 0, "{:?}", report.invariants.samples);
        let rows = parse_summary_csv(&summary_csv(&report.summaries)).unwrap();
        assert_eq!(rows.len(), 6);
        for (row, s) in rows.iter().zip(&report.summaries) {
            assert_eq!(row.setting, s.setting);
            assert_eq!(row.j_pi, s.mean_j_pi);
            assert_eq!(row.error_ratio, s.error_ratio());
        }
    }

    #[test]
    fn config_validation() {
        let bad = StudyConfig {
            instances_per_setting: 0,
            ..StudyConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = StudyConfig {
            policies: vec![],
            ..StudyConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
