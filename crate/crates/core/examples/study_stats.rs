//! Prints per-setting study statistics for a root seed.

use dmvrpx::aggregate::{run_study, HeatmapMetric, StudyConfig};
use dmvrpx::{ConstraintKind, LocationDist, PolicyKind, Profitability};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let config = StudyConfig {
        root_seed: seed,
        figures: false,
        ..StudyConfig::default()
    };
    let start = std::time::Instant::now();
    let report = run_study(&config).expect("study runs");
    eprintln!("study took {:?}", start.elapsed());
    for s in &report.summaries {
        let rate = s.heatmap(HeatmapMetric::DecisionRate);
        println!(
            "{:<34} {:<7} J*={:8.3} J={:8.3} gap={:7.4} E={:?} empty_col={:.3}",
            s.setting.label(),
            s.policy,
            s.mean_j_star,
            s.mean_j_pi,
            s.gap,
            s.error_ratio().map(|e| (e * 1000.0).round() / 1000.0),
            rate.column_total(0) / rate.total_value()
        );
    }
    for (p, st) in &report.policy_stats {
        println!("{p}: {st:?}");
    }
    let high_dist: Vec<_> = report
        .summaries
        .iter()
        .filter(|s| {
            s.policy == PolicyKind::Dpc
                && s.setting.profitability == Profitability::High
                && s.setting.constraint == ConstraintKind::Dist
        })
        .map(|s| s.gap)
        .collect();
    println!(
        "dpc high/dist mean gap {:.4}",
        high_dist.iter().sum::<f64>() / high_dist.len() as f64
    );
    let _ = LocationDist::ClustSort;
    println!("violations {}", report.invariants.violations);
}
