//! `dmvrpx`: generate instances, solve them, compute error metrics, run the
//! full-factorial study and draw its figures.
//!
//! Options fall back to `DMVRPX_*` environment variables, then to defaults.

/// Prints to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmvrpx::aggregate::{
    heatmap_file_name, parse_summary_csv, run_study, write_study, Heatmap, HeatmapMetric, StudyConfig,
};
use dmvrpx::dp::{decompose_optimal, evaluate_policy, tables_csv};
use dmvrpx::instgen::generate_instance;
use dmvrpx::metrics::{compute_errors, records_csv, weighted_error_ratio};
use dmvrpx::{enumerate_settings, myopic_rule, solve_dpc, solve_mcts, solve_optimal, viz, Error, Instance, PolicyKind};

#[derive(Debug, Parser)]
#[command(
    name = "dmvrpx",
    version,
    about = "Exact opportunity-cost error analysis for order acceptance with routing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write every catalogue instance as JSON.
    Gen(GenArgs),
    /// Solve one instance and dump its value tables.
    Solve(SolveArgs),
    /// Compute per-decision error and regret records for one instance.
    Metrics(MetricsArgs),
    /// Run the full-factorial study.
    Study(StudyArgs),
    /// Render figures from a finished study directory.
    Plot(PlotArgs),
    /// Check the solvers against brute-force oracles.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, env = "DMVRPX_ROOT_SEED", default_value_t = 42)]
    root_seed: u64,
    #[arg(long, env = "DMVRPX_INSTANCES", default_value_t = 50)]
    instances: u32,
    #[arg(long, env = "DMVRPX_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Instance JSON as written by `gen`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, env = "DMVRPX_POLICIES", default_value = "dpc,mcts,myopic", value_parser = parse_policies)]
    policies: Policies,
    #[arg(long, env = "DMVRPX_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, env = "DMVRPX_POLICIES", default_value = "dpc,mcts,myopic", value_parser = parse_policies)]
    policies: Policies,
    #[arg(long, env = "DMVRPX_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(long, env = "DMVRPX_ROOT_SEED", default_value_t = 42)]
    root_seed: u64,
    #[arg(long, env = "DMVRPX_INSTANCES", default_value_t = 50)]
    instances: u32,
    #[arg(long, env = "DMVRPX_POLICIES", default_value = "dpc,mcts,myopic", value_parser = parse_policies)]
    policies: Policies,
    #[arg(long, env = "DMVRPX_OUT")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "DMVRPX_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Estimate decision rates from this many simulated paths per instance.
    #[arg(long, env = "DMVRPX_SAMPLING_PATHS")]
    sampling_paths: Option<u64>,
    /// Skip the SVG figures.
    #[arg(long)]
    no_figures: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Directory written by `study`.
    #[arg(long)]
    study: PathBuf,
    #[arg(long, env = "DMVRPX_OUT")]
    out: PathBuf,
    /// Comma-separated substrings; a setting is drawn if its slug contains any.
    #[arg(long)]
    settings: Option<String>,
    #[arg(long, value_parser = parse_policies)]
    policies: Option<Policies>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, env = "DMVRPX_ROOT_SEED", default_value_t = 42)]
    root_seed: u64,
    /// Number of short random instances checked against the policy-tree oracle.
    #[arg(long, default_value_t = 200)]
    instances: usize,
    /// Optional directory for the manifest and the check report.
    #[arg(long, env = "DMVRPX_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Policies(Vec<PolicyKind>);

fn parse_policies(s: &str) -> Result<Policies, String> {
    let mut out = Vec::new();
    for label in s.split(',').map(str::trim).filter(|l| !l.is_empty()) {
        let p = PolicyKind::from_label(label).ok_or_else(|| format!("unknown policy {label:?}"))?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err("at least one policy is required".into());
    }
    Ok(Policies(out))
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidSetting(_) => (2, "usage"),
            Error::Io { .. } => (3, "io"),
            Error::Parse(_) | Error::InvalidInstance(_) => (3, "input"),
            Error::Invariant(_) => (4, "invariant"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_manifest(dir: &Path, command: &str, fields: serde_json::Value) -> Result<(), Error> {
    let mut manifest = serde_json::json!({
        "tool": "dmvrpx",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
    });
    if let (Some(m), serde_json::Value::Object(extra)) = (manifest.as_object_mut(), fields) {
        m.extend(extra);
    }
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    write(&dir.join("manifest.json"), &text)
}

fn labels(policies: &[PolicyKind]) -> Vec<&'static str> {
    policies.iter().map(|p| p.label()).collect()
}

fn gen(args: GenArgs) -> CliResult {
    create_dir(&args.out)?;
    let mut count = 0;
    for (ordinal, setting) in enumerate_settings().iter().enumerate() {
        for id in 0..args.instances {
            let inst = generate_instance(setting, args.root_seed, id)?;
            write(&args.out.join(format!("s{ordinal:02}_i{id:02}.json")), &inst.to_json())?;
            count += 1;
        }
    }
    write_manifest(
        &args.out,
        "gen",
        serde_json::json!({"root_seed": args.root_seed, "instances_per_setting": args.instances}),
    )?;
    log::info!("wrote {count} instances to {}", args.out.display());
    Ok(())
}

fn load_instance(path: &Path) -> Result<Instance, Error> {
    Instance::from_json(&read(path)?)
}

fn solve(args: SolveArgs) -> CliResult {
    let inst = load_instance(&args.instance)?;
    create_dir(&args.out)?;
    let optimal = solve_optimal(&inst);
    let (r_star, f_star) = decompose_optimal(&optimal, &inst);
    let mut tables = vec![optimal.table.clone(), r_star, f_star];
    let mut values = serde_json::Map::new();
    values.insert("optimal".into(), optimal.root_value.into());
    for &policy in &args.policies.0 {
        let rule = match policy {
            PolicyKind::Optimal => continue,
            PolicyKind::Dpc => {
                let s = solve_dpc(&inst);
                tables.push(s.table);
                s.rule
            }
            PolicyKind::Mcts => {
                let s = solve_mcts(&inst);
                tables.push(s.table);
                s.rule
            }
            PolicyKind::Myopic => myopic_rule(&inst),
        };
        let eval = evaluate_policy(&rule, &inst);
        values.insert(policy.label().into(), eval.value.into());
        tables.push(eval.table);
    }
    let refs: Vec<_> = tables.iter().collect();
    write(&args.out.join("tables.csv"), &tables_csv(&refs))?;
    let mut text = serde_json::to_string_pretty(&serde_json::json!({ "objective": values })).expect("serialises");
    text.push('\n');
    write(&args.out.join("objective.json"), &text)?;
    say!("{text}");
    write_manifest(
        &args.out,
        "solve",
        serde_json::json!({
            "instance": args.instance.display().to_string(),
            "seed": inst.seed,
            "policies": labels(&args.policies.0),
        }),
    )?;
    Ok(())
}

fn metrics(args: MetricsArgs) -> CliResult {
    let inst = load_instance(&args.instance)?;
    create_dir(&args.out)?;
    let optimal = solve_optimal(&inst);
    for &policy in &args.policies.0 {
        let rule = match policy {
            PolicyKind::Optimal => optimal.rule.clone(),
            PolicyKind::Dpc => solve_dpc(&inst).rule,
            PolicyKind::Mcts => solve_mcts(&inst).rule,
            PolicyKind::Myopic => myopic_rule(&inst),
        };
        let records = compute_errors(&optimal, &rule, &inst);
        let ratio = weighted_error_ratio(&records).map_or_else(|| "undefined".to_string(), |e| format!("{e:.4}"));
        say!("{policy}: {} decision points, E = {ratio}", records.len());
        write(
            &args.out.join(format!("metrics_{policy}.csv")),
            &records_csv(policy.label(), inst.horizon(), &records),
        )?;
    }
    write_manifest(
        &args.out,
        "metrics",
        serde_json::json!({
            "instance": args.instance.display().to_string(),
            "seed": inst.seed,
            "policies": labels(&args.policies.0),
        }),
    )?;
    Ok(())
}

fn study(args: StudyArgs) -> CliResult {
    let config = StudyConfig {
        root_seed: args.root_seed,
        instances_per_setting: args.instances,
        policies: args.policies.0,
        out_dir: Some(args.out.clone()),
        workers: args.workers,
        figures: !args.no_figures,
        sampling_paths: args.sampling_paths,
        ..StudyConfig::default()
    };
    let report = run_study(&config)?;
    write_study(&report, &config, &args.out)?;
    for (policy, stats) in &report.policy_stats {
        say!(
            "{policy}: underestimation dominant in {}/{} settings ({:.3}), mean gap {:.4}",
            stats.underestimation_dominant,
            stats.settings,
            stats.dominance_fraction,
            stats.mean_gap
        );
    }
    say!(
        "invariants: {} checks, {} violations",
        report.invariants.checks,
        report.invariants.violations
    );
    if report.invariants.violations > 0 {
        return Err(Error::Invariant(format!(
            "{} violations, first: {}",
            report.invariants.violations,
            report.invariants.samples.first().cloned().unwrap_or_default()
        ))
        .into());
    }
    Ok(())
}

fn plot(args: PlotArgs) -> CliResult {
    let rows = parse_summary_csv(&read(&args.study.join("summary.csv"))?)?;
    let patterns: Vec<String> = args
        .settings
        .as_deref()
        .map(|s| {
            s.split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        })
        .unwrap_or_default();
    let rows: Vec<_> = rows
        .into_iter()
        .filter(|r| patterns.is_empty() || patterns.iter().any(|p| r.setting.slug().contains(p.as_str())))
        .filter(|r| args.policies.as_ref().is_none_or(|ps| ps.0.contains(&r.policy)))
        .collect();
    create_dir(&args.out)?;
    for row in &rows {
        let mut heatmaps: Vec<Heatmap> = Vec::new();
        for metric in HeatmapMetric::ALL {
            let path = args.study.join(heatmap_file_name(&row.setting, row.policy, metric));
            heatmaps.push(Heatmap::from_csv(metric, &read(&path)?)?);
        }
        let svg = viz::render_heatmap_panel(&row.setting, row.policy, &heatmaps);
        write(&args.out.join(viz::panel_file_name(&row.setting, row.policy)), &svg)?;
    }
    write(&args.out.join("error_ratio_scatter.svg"), &viz::render_scatter(&rows))?;
    write(
        &args.out.join("objective_profile.svg"),
        &viz::render_objective_profile(&rows),
    )?;
    write_manifest(
        &args.out,
        "plot",
        serde_json::json!({
            "study": args.study.display().to_string(),
            "settings": args.settings,
            "policies": args.policies.map(|p| labels(&p.0)),
            "panels": rows.len(),
        }),
    )?;
    log::info!("rendered {} panels into {}", rows.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Metrics(a) => metrics(a),
        Command::Study(a) => study(a),
        Command::Plot(a) => plot(a),
        Command::Selftest(a) => selftest::run(a.root_seed, a.instances, a.out.as_deref()).map_err(Failure::from),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": f.kind, "message": f.message, "exit_code": f.code})
            );
            ExitCode::from(f.code)
        }
    }
}
