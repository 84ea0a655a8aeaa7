//! Oracle suite behind `dmvrpx selftest`.

use std::path::Path;

use dmvrpx::dp::{decompose_optimal, evaluate_policy};
use dmvrpx::instgen::{derive_seed, generate_instance};
use dmvrpx::routing::optimal_tour_length;
use dmvrpx::{
    enumerate_settings, myopic_rule, solve_dpc, solve_mcts, solve_optimal, Constraint, Error, Instance, OrderSet,
};
use dmvrpx_oracle::{best_policy_value, permutation_tour_length, policy_value, Limit, Problem};

const TOLERANCE: f64 = 1e-9;

#[derive(Default)]
struct Tally {
    checks: u64,
    failures: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(msg());
        }
    }
}

fn to_problem(inst: &Instance) -> Problem {
    Problem {
        locations: inst.customers.iter().map(|c| c.location).collect(),
        revenues: inst.customers.iter().map(|c| c.revenue).collect(),
        cost_factor: inst.cost_factor(),
        limit: match inst.constraint() {
            Constraint::Load(n) => Limit::Orders(n as usize),
            Constraint::Dist(d) => Limit::Length(d),
        },
    }
}

/// Consecutive customers `offset..offset + horizon` of a catalogue instance.
fn window(full: &Instance, offset: usize, horizon: usize) -> Result<Instance, Error> {
    let customers: Vec<(f64, f64)> = full.customers[offset..offset + horizon]
        .iter()
        .map(|c| (c.location, c.revenue))
        .collect();
    Instance::custom(&customers, full.cost_factor(), full.constraint())
}

fn short_instances(root_seed: u64, count: usize) -> Result<Vec<Instance>, Error> {
    let settings = enumerate_settings();
    (0..count)
        .map(|k| {
            let full = generate_instance(&settings[k % settings.len()], root_seed, (k / settings.len()) as u32)?;
            let horizon = 3 + k % 4;
            let offset = (k / 4) % (full.horizon() - horizon + 1);
            window(&full, offset, horizon)
        })
        .collect()
}

fn check_instance(inst: &Instance, k: usize, tally: &mut Tally) {
    let problem = to_problem(inst);
    let optimal = solve_optimal(inst);
    let brute = best_policy_value(&problem);
    tally.check((optimal.root_value - brute).abs() <= TOLERANCE, || {
        format!("instance {k}: J* {} vs policy-tree oracle {brute}", optimal.root_value)
    });
    let (r, f) = decompose_optimal(&optimal, inst);
    let worst = optimal
        .table
        .entries()
        .map(|(t, a, v)| (v - r.value(t, a) - f.value(t, a)).abs())
        .fold(0.0, f64::max);
    tally.check(worst <= TOLERANCE, || format!("instance {k}: |V - R* - F*| = {worst}"));
    let rules = [
        ("optimal", optimal.rule.clone()),
        ("dpc", solve_dpc(inst).rule),
        ("mcts", solve_mcts(inst).rule),
        ("myopic", myopic_rule(inst)),
    ];
    for (name, rule) in &rules {
        let exact = evaluate_policy(rule, inst).value;
        let brute_pi = policy_value(&problem, |t, accepted| {
            rule.decide(t, OrderSet::from_customers(accepted.iter().copied()))
        });
        tally.check((exact - brute_pi).abs() <= TOLERANCE, || {
            format!("instance {k} {name}: J_pi {exact} vs path enumeration {brute_pi}")
        });
        tally.check(exact <= optimal.root_value + TOLERANCE, || {
            format!("instance {k} {name}: J_pi {exact} above J* {}", optimal.root_value)
        });
    }
}

/// Locations on the 2^-20 grid, so the oracle's sums are exact.
fn dyadic_locations(root_seed: u64, set: usize) -> Vec<f64> {
    const STEPS: u64 = 50 << 20;
    (0..10u32)
        .map(|i| (derive_seed(root_seed ^ 0x7007, set, i) % (STEPS + 1)) as f64 / (1u64 << 20) as f64 - 25.0)
        .collect()
}

fn check_tours(root_seed: u64, tally: &mut Tally) {
    for set in 0..50 {
        let locations = dyadic_locations(root_seed, set);
        for mask in 0u32..(1 << locations.len()) {
            if mask.count_ones() > 8 {
                continue;
            }
            let subset: Vec<f64> = (0..locations.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| locations[i])
                .collect();
            let line = optimal_tour_length(subset.iter().copied());
            let brute = permutation_tour_length(&subset);
            tally.check(line == brute, || {
                format!("tour set {set} mask {mask:#b}: {line} vs {brute}")
            });
        }
    }
}

pub fn run(root_seed: u64, instances: usize, out: Option<&Path>) -> Result<(), Error> {
    let mut tally = Tally::default();
    for (k, inst) in short_instances(root_seed, instances)?.iter().enumerate() {
        check_instance(inst, k, &mut tally);
    }
    let instance_checks = tally.checks;
    check_tours(root_seed, &mut tally);
    say!(
        "selftest: {instance_checks} solver checks on {instances} short instances, {} tour checks, {} failures",
        tally.checks - instance_checks,
        tally.failures.len()
    );
    for f in tally.failures.iter().take(10) {
        say!("  {f}");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = serde_json::json!({
            "checks": tally.checks,
            "failures": tally.failures,
        });
        let manifest = serde_json::json!({
            "tool": "dmvrpx",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "selftest",
            "root_seed": root_seed,
            "instances": instances,
        });
        for (name, value) in [("selftest.json", report), ("manifest.json", manifest)] {
            let path = dir.join(name);
            let mut text = serde_json::to_string_pretty(&value).expect("serialises");
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    if tally.failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Invariant(format!(
            "{} selftest checks failed",
            tally.failures.len()
        )))
    }
}
