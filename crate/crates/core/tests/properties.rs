//! Cross-checks against the brute-force oracles and structural properties of
//! the solvers, metrics and serialisation.

mod common;

use dmvrpx::aggregate::{run_study, HeatmapMetric, StudyConfig};
use dmvrpx::dp::{decompose_optimal, evaluate_policy, solve_dpc, solve_mcts, solve_optimal};
use dmvrpx::instgen::{generate_instance, StreamRng};
use dmvrpx::metrics::{compute_errors, decision_rates, optimality_gap, weighted_error_ratio, RegretSums};
use dmvrpx::routing::optimal_tour_length;
use dmvrpx::{
    enumerate_settings, myopic_rule, Constraint, DecisionRule, Instance, OrderSet, PolicyKind, PolicySolution,
};
use dmvrpx_oracle::{permutation_tour_length, policy_value};
use proptest::prelude::*;

use common::{mask_of, sub_instance, to_problem};

fn toy() -> Instance {
    Instance::custom(&[(10.0, 15.0)], 0.6, Constraint::Dist(50.0)).unwrap()
}

fn rules(inst: &Instance) -> Vec<(PolicyKind, DecisionRule, Option<PolicySolution>)> {
    let opt = solve_optimal(inst);
    let dpc = solve_dpc(inst);
    let mcts = solve_mcts(inst);
    vec![
        (PolicyKind::Optimal, opt.rule.clone(), Some(opt)),
        (PolicyKind::Dpc, dpc.rule.clone(), Some(dpc)),
        (PolicyKind::Mcts, mcts.rule.clone(), Some(mcts)),
        (PolicyKind::Myopic, myopic_rule(inst), None),
    ]
}

/// A spread of short instances cut from every setting.
fn short_instances(count: usize) -> Vec<Instance> {
    let settings = enumerate_settings();
    let mut rng = StreamRng::from_seed(7);
    (0..count)
        .map(|k| {
            let full = generate_instance(&settings[k % settings.len()], 42, (k / settings.len()) as u32).unwrap();
            sub_instance(&full, 3 + k % 4, &mut rng)
        })
        .collect()
}

#[test]
fn toy_instance_frozen_values() {
    let inst = toy();
    let opt = solve_optimal(&inst);
    assert!((opt.root_value - 1.5).abs() < 1e-12);
    assert!((opt.oc_estimate(1, OrderSet::EMPTY).unwrap() - 12.0).abs() < 1e-12);
    assert!(opt.decision(1, OrderSet::EMPTY));
    let (r, f) = decompose_optimal(&opt, &inst);
    assert!((r.value(0, OrderSet::EMPTY) - 7.5).abs() < 1e-12);
    assert!((f.value(0, OrderSet::EMPTY) + 6.0).abs() < 1e-12);
    let dpc = solve_dpc(&inst);
    assert_eq!(dpc.oc_estimate(1, OrderSet::EMPTY), Some(0.0));
    assert!(dpc.decision(1, OrderSet::EMPTY));
    let mcts = solve_mcts(&inst);
    assert!((mcts.oc_estimate(1, OrderSet::EMPTY).unwrap() - 12.0).abs() < 1e-12);
    assert!(mcts.decision(1, OrderSet::EMPTY));
    let records = compute_errors(&opt, &dpc.rule, &inst);
    assert_eq!(records.len(), 1);
    assert!((records[0].e_under - 12.0).abs() < 1e-12);
}

#[test]
fn myopic_insertion_examples() {
    let inst = Instance::custom(&[(10.0, 15.0)], 0.6, Constraint::Dist(50.0)).unwrap();
    assert!((myopic_rule(&inst).oc(1, OrderSet::EMPTY).unwrap() - 12.0).abs() < 1e-12);
    let inst = Instance::custom(&[(10.0, 15.0), (12.0, 15.0)], 0.6, Constraint::Dist(50.0)).unwrap();
    assert!((myopic_rule(&inst).oc(2, OrderSet::from_customers([1])).unwrap() - 2.4).abs() < 1e-12);
}

#[test]
fn evaluation_matches_path_enumeration() {
    for inst in short_instances(120) {
        let problem = to_problem(&inst);
        for (kind, rule, _) in rules(&inst) {
            let exact = evaluate_policy(&rule, &inst).value;
            let brute = policy_value(&problem, |t, accepted| rule.decide(t, mask_of(accepted)));
            assert!((exact - brute).abs() < 1e-9, "{kind}: {exact} vs {brute}");
        }
    }
}

#[test]
fn decision_rates_match_path_enumeration() {
    for inst in short_instances(60) {
        let problem = to_problem(&inst);
        for (kind, rule, _) in rules(&inst) {
            let exact = decision_rates(&rule, &inst);
            let brute = dmvrpx_oracle::decision_rates(&problem, |t, accepted| rule.decide(t, mask_of(accepted)));
            for (t, state, p) in exact.entries() {
                let q = brute.get(&(t, state.0)).copied().unwrap_or(0.0);
                assert!((p - q).abs() < 1e-15, "{kind} t={t} A={}: {p} vs {q}", state.0);
            }
        }
    }
}

#[test]
fn study_instances_respect_solver_properties() {
    let settings = enumerate_settings();
    for (k, setting) in settings.iter().enumerate() {
        let inst = generate_instance(setting, 42, (k % 5) as u32).unwrap();
        let horizon = inst.horizon();
        let opt = solve_optimal(&inst);
        let dpc = solve_dpc(&inst);
        let mcts = solve_mcts(&inst);
        let myopic = myopic_rule(&inst);
        for rule in [&dpc.rule, &mcts.rule, &myopic] {
            assert!(evaluate_policy(rule, &inst).value <= opt.root_value + 1e-9);
        }
        for t in 1..=horizon {
            for m in 0..(1u32 << (t - 1)) {
                let a = OrderSet(m);
                let Some(dv) = opt.rule.try_choice(t, a).and_then(|c| c.oc) else {
                    continue;
                };
                assert!(dv >= -1e-9);
                let dr = dpc.oc_estimate(t, a).unwrap();
                assert!(dr >= -1e-9, "{} t={t}: dR = {dr}", setting.slug());
                assert!(myopic.oc(t, a).unwrap() >= 0.0);
                if t == horizon {
                    // Nothing follows the last request: only routing cost remains.
                    assert!(dr.abs() < 1e-9);
                    assert!((mcts.oc_estimate(t, a).unwrap() - dv).abs() < 1e-9);
                    assert!((myopic.oc(t, a).unwrap() - dv).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn wrong_decisions_bracket_the_revenue() {
    for inst in short_instances(66)
        .into_iter()
        .chain((0..10).map(|i| generate_instance(&enumerate_settings()[i * 6], 42, i as u32).unwrap()))
    {
        let opt = solve_optimal(&inst);
        for (kind, rule, _) in rules(&inst).into_iter().skip(1) {
            for rec in compute_errors(&opt, &rule, &inst) {
                if !rec.acceptable || rec.optimal_accept == rec.approx_accept {
                    continue;
                }
                let r = inst.revenue(rec.epoch);
                let dv = rec.true_oc.unwrap();
                let est = rec.approx_oc.unwrap();
                if rec.approx_accept {
                    assert!(est <= r + 1e-9 && r < dv + 1e-9 && est < dv, "{kind}: wrong accept");
                    assert!(rec.regret_over == 0.0);
                } else {
                    assert!(est > r - 1e-9 && r >= dv - 1e-9 && est > dv, "{kind}: wrong reject");
                    assert!(rec.regret_under == 0.0);
                }
            }
        }
    }
}

#[test]
fn free_routing_reduces_to_revenue() {
    let inst = Instance::custom(
        &[(-20.0, 15.0), (5.0, 25.0), (18.0, 15.0), (-3.0, 25.0), (11.0, 15.0)],
        0.0,
        Constraint::Load(3),
    )
    .unwrap();
    let opt = solve_optimal(&inst);
    let (r, f) = decompose_optimal(&opt, &inst);
    for (t, set, v) in opt.table.entries() {
        assert_eq!(f.value(t, set), 0.0);
        assert!((r.value(t, set) - v).abs() < 1e-12);
    }
    let mcts = solve_mcts(&inst);
    for (_, _, v) in mcts.table.entries() {
        assert_eq!(v, 0.0);
    }
    let accept_all = DecisionRule::from_decisions("all", &inst, |_, _| true);
    assert_eq!(
        evaluate_policy(&accept_all, &inst).value,
        evaluate_policy(&mcts.rule, &inst).value
    );
    let reject_all = DecisionRule::from_decisions("none", &inst, |_, _| false);
    assert_eq!(evaluate_policy(&reject_all, &inst).value, 0.0);
}

#[test]
fn optimal_policy_has_no_error_ratio() {
    let inst = generate_instance(&enumerate_settings()[5], 42, 0).unwrap();
    let opt = solve_optimal(&inst);
    let records = compute_errors(&opt, &opt.rule, &inst);
    assert!(records.iter().all(|r| r.regret == 0.0));
    assert_eq!(weighted_error_ratio(&records), None);
}

#[test]
fn study_pools_instances_per_setting() {
    let settings: Vec<_> = enumerate_settings().into_iter().step_by(11).collect();
    let config = StudyConfig {
        instances_per_setting: 4,
        settings: settings.clone(),
        figures: false,
        ..StudyConfig::default()
    };
    let report = run_study(&config).unwrap();
    assert_eq!(report.summaries.len(), settings.len() * 3);
    for summary in &report.summaries {
        let mut sums = RegretSums::default();
        let (mut j_star, mut j_pi) = (0.0, 0.0);
        for id in 0..4 {
            let inst = generate_instance(&summary.setting, 42, id).unwrap();
            let opt = solve_optimal(&inst);
            let rule = match summary.policy {
                PolicyKind::Dpc => solve_dpc(&inst).rule,
                PolicyKind::Mcts => solve_mcts(&inst).rule,
                PolicyKind::Myopic => myopic_rule(&inst),
                PolicyKind::Optimal => opt.rule.clone(),
            };
            sums = sums.merge(RegretSums::from_records(&compute_errors(&opt, &rule, &inst)));
            j_star += opt.root_value / 4.0;
            j_pi += evaluate_policy(&rule, &inst).value / 4.0;
        }
        match (sums.ratio(), summary.error_ratio()) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
            (a, b) => assert_eq!(a, b),
        }
        assert!((summary.mean_j_star - j_star).abs() < 1e-9);
        assert!((summary.gap - optimality_gap(j_star, j_pi)).abs() < 1e-9);
        let rate = summary.heatmap(HeatmapMetric::DecisionRate);
        assert!((rate.total_value() - 5.0).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn instance_json_round_trips(setting in 0usize..66, id in 0u32..50, seed in any::<u64>()) {
        let inst = generate_instance(&enumerate_settings()[setting], seed, id).unwrap();
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn generation_is_deterministic(setting in 0usize..66, id in 0u32..50, seed in any::<u64>()) {
        let s = &enumerate_settings()[setting];
        prop_assert_eq!(generate_instance(s, seed, id).unwrap(), generate_instance(s, seed, id).unwrap());
    }

    #[test]
    fn line_tour_matches_permutations(locs in prop::collection::vec(-25i32 * 64..=25 * 64, 0..7)) {
        let locs: Vec<f64> = locs.into_iter().map(|k| f64::from(k) / 64.0).collect();
        prop_assert_eq!(optimal_tour_length(locs.iter().copied()), permutation_tour_length(&locs));
    }

    #[test]
    fn bitstrings_round_trip(mask in 0u32..1024) {
        let set = OrderSet(mask);
        prop_assert_eq!(OrderSet::parse_bitstring(&set.bitstring(10)), Some(set));
    }

    #[test]
    fn rates_sum_to_half_per_epoch(setting in 0usize..66, id in 0u32..50) {
        let inst = generate_instance(&enumerate_settings()[setting], 42, id).unwrap();
        let rates = decision_rates(&solve_mcts(&inst).rule, &inst);
        for t in 1..=inst.horizon() {
            prop_assert!((rates.epoch_total(t) - 0.5).abs() <= 1e-12);
        }
    }
}
