//! Python bindings for the dmvrpx opportunity-cost laboratory.
//!
//! Order sets cross the boundary as integer bitmasks with customer `c` on bit
//! `c - 1`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dmvrpx::aggregate::{run_study as run_study_core, write_study, StudyConfig};
use dmvrpx::dp::{decompose_optimal, evaluate_policy};
use dmvrpx::metrics::{compute_errors, decision_rates as rates_core, optimality_gap as gap_core, weighted_error_ratio};
use dmvrpx::{
    Constraint, ConstraintKind, DecisionRule, LocationDist, OrderSet, PolicyKind, Profitability, RevenueDist,
    ValueTable,
};
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: dmvrpx::Error) -> PyErr {
    match e {
        dmvrpx::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T>(label: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> PyResult<T> {
    f(label).ok_or_else(|| PyValueError::new_err(format!("unknown {what} {label:?}")))
}

fn policy(label: &str) -> PyResult<PolicyKind> {
    parse(label, "policy", PolicyKind::from_label)
}

/// `{(epoch, mask): value}` as handed to Python.
type StateMap = BTreeMap<(usize, u32), f64>;

fn table_dict(table: &ValueTable) -> StateMap {
    table.entries().map(|(t, a, v)| ((t, a.0), v)).collect()
}

/// One cell of the full-factorial design.
#[pyclass(frozen, eq, hash, skip_from_py_object, module = "dmvrpx_py")]
#[derive(Clone, PartialEq, Eq, Hash)]
struct Setting {
    inner: dmvrpx::Setting,
}

#[pymethods]
impl Setting {
    #[new]
    fn new(loc: &str, rev: &str, prof: &str, cons: &str) -> PyResult<Self> {
        let inner = dmvrpx::Setting::new(
            parse(loc, "location distribution", LocationDist::from_label)?,
            parse(rev, "revenue distribution", RevenueDist::from_label)?,
            parse(prof, "profitability", Profitability::from_label)?,
            parse(cons, "constraint", ConstraintKind::from_label)?,
        )
        .map_err(to_py_err)?;
        Ok(Setting { inner })
    }

    #[getter]
    fn loc(&self) -> &'static str {
        self.inner.location_dist.label()
    }

    #[getter]
    fn rev(&self) -> &'static str {
        self.inner.revenue_dist.label()
    }

    #[getter]
    fn prof(&self) -> &'static str {
        self.inner.profitability.label()
    }

    #[getter]
    fn cons(&self) -> &'static str {
        self.inner.constraint.label()
    }

    #[getter]
    fn cost_factor(&self) -> f64 {
        self.inner.cost_factor()
    }

    /// Position in the canonical 66-setting order.
    #[getter]
    fn ordinal(&self) -> Option<usize> {
        self.inner.ordinal()
    }

    fn label(&self) -> String {
        self.inner.label()
    }

    fn slug(&self) -> String {
        self.inner.slug()
    }

    fn __repr__(&self) -> String {
        format!("Setting({})", self.inner.label())
    }
}

/// A stream of customers plus the provider's cost factor and constraint.
#[pyclass(frozen, skip_from_py_object, module = "dmvrpx_py")]
#[derive(Clone)]
struct Instance {
    inner: dmvrpx::Instance,
}

#[pymethods]
impl Instance {
    /// Free-form instance from `(location, revenue)` pairs. Give exactly one
    /// of `load` (max orders) or `dist` (max route length).
    #[staticmethod]
    #[pyo3(signature = (customers, cost_factor, load=None, dist=None))]
    fn custom(customers: Vec<(f64, f64)>, cost_factor: f64, load: Option<u32>, dist: Option<f64>) -> PyResult<Self> {
        let constraint = match (load, dist) {
            (Some(n), None) => Constraint::Load(n),
            (None, Some(d)) => Constraint::Dist(d),
            _ => return Err(PyValueError::new_err("give exactly one of load= or dist=")),
        };
        let inner = dmvrpx::Instance::custom(&customers, cost_factor, constraint).map_err(to_py_err)?;
        Ok(Instance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Instance {
            inner: dmvrpx::Instance::from_json(text).map_err(to_py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn setting(&self) -> Setting {
        Setting {
            inner: self.inner.setting,
        }
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn instance_id(&self) -> u32 {
        self.inner.instance_id
    }

    #[getter]
    fn cost_factor(&self) -> f64 {
        self.inner.cost_factor()
    }

    #[getter]
    fn locations(&self) -> Vec<f64> {
        self.inner.customers.iter().map(|c| c.location).collect()
    }

    #[getter]
    fn revenues(&self) -> Vec<f64> {
        self.inner.customers.iter().map(|c| c.revenue).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance({}, id={}, seed={})",
            self.inner.setting.label(),
            self.inner.instance_id,
            self.inner.seed
        )
    }
}

/// Output of one of the exact solvers.
#[pyclass(frozen, module = "dmvrpx_py")]
struct Solution {
    inner: dmvrpx::PolicySolution,
}

#[pymethods]
impl Solution {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.label()
    }

    /// Value of the empty state at epoch 0 under the solver's own recursion.
    #[getter]
    fn root_value(&self) -> f64 {
        self.inner.root_value
    }

    /// Accept decision for the request of customer `t` in state `mask`.
    fn decision(&self, t: usize, mask: u32) -> PyResult<bool> {
        self.inner
            .rule
            .try_choice(t, OrderSet(mask))
            .map(|c| c.accept)
            .ok_or_else(|| PyKeyError::new_err(format!("no decision for t={t}, mask={mask}")))
    }

    /// Opportunity-cost estimate, or None when accepting is infeasible.
    fn oc(&self, t: usize, mask: u32) -> PyResult<Option<f64>> {
        self.inner
            .rule
            .try_choice(t, OrderSet(mask))
            .map(|c| c.oc)
            .ok_or_else(|| PyKeyError::new_err(format!("no decision for t={t}, mask={mask}")))
    }

    /// Value table as `{(epoch, mask): value}`.
    fn table(&self) -> StateMap {
        table_dict(&self.inner.table)
    }
}

fn rule_for(inst: &dmvrpx::Instance, kind: PolicyKind, optimal: &dmvrpx::PolicySolution) -> DecisionRule {
    match kind {
        PolicyKind::Optimal => optimal.rule.clone(),
        PolicyKind::Dpc => dmvrpx::solve_dpc(inst).rule,
        PolicyKind::Mcts => dmvrpx::solve_mcts(inst).rule,
        PolicyKind::Myopic => dmvrpx::myopic_rule(inst),
    }
}

#[pyfunction]
fn enumerate_settings() -> Vec<Setting> {
    dmvrpx::enumerate_settings()
        .into_iter()
        .map(|inner| Setting { inner })
        .collect()
}

#[pyfunction]
fn generate_instance(setting: &Setting, root_seed: u64, instance_id: u32) -> PyResult<Instance> {
    let inner = dmvrpx::instgen::generate_instance(&setting.inner, root_seed, instance_id).map_err(to_py_err)?;
    Ok(Instance { inner })
}

#[pyfunction]
fn solve_optimal(instance: &Instance) -> Solution {
    Solution {
        inner: dmvrpx::solve_optimal(&instance.inner),
    }
}

#[pyfunction]
fn solve_dpc(instance: &Instance) -> Solution {
    Solution {
        inner: dmvrpx::solve_dpc(&instance.inner),
    }
}

#[pyfunction]
fn solve_mcts(instance: &Instance) -> Solution {
    Solution {
        inner: dmvrpx::solve_mcts(&instance.inner),
    }
}

/// Exact expected profit of following `policy` (optimal, dpc, mcts, myopic).
#[pyfunction]
fn evaluate(instance: &Instance, policy: &str) -> PyResult<f64> {
    let kind = self::policy(policy)?;
    let inst = &instance.inner;
    let optimal = dmvrpx::solve_optimal(inst);
    Ok(evaluate_policy(&rule_for(inst, kind, &optimal), inst).value)
}

/// Revenue and cost shares of the optimal value, each as `{(epoch, mask): value}`.
#[pyfunction]
fn decompose(instance: &Instance) -> (StateMap, StateMap) {
    let optimal = dmvrpx::solve_optimal(&instance.inner);
    let (r, f) = decompose_optimal(&optimal, &instance.inner);
    (table_dict(&r), table_dict(&f))
}

/// Exact probability that a request meets `policy` in each state, as
/// `{(epoch, mask): probability}` over reachable states.
#[pyfunction]
fn decision_rates(instance: &Instance, policy: &str) -> PyResult<StateMap> {
    let inst = &instance.inner;
    let optimal = dmvrpx::solve_optimal(inst);
    let rule = rule_for(inst, self::policy(policy)?, &optimal);
    Ok(rates_core(&rule, inst)
        .entries()
        .filter(|&(_, _, p)| p > 0.0)
        .map(|(t, a, p)| ((t, a.0), p))
        .collect())
}

/// Per-decision error and regret records of `policy` against the optimum.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, instance: &Instance, policy: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let inst = &instance.inner;
    let optimal = dmvrpx::solve_optimal(inst);
    let rule = rule_for(inst, self::policy(policy)?, &optimal);
    compute_errors(&optimal, &rule, inst)
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("t", r.epoch)?;
            d.set_item("mask", r.state.0)?;
            d.set_item("capacity_pct", r.capacity_pct)?;
            d.set_item("acceptable", r.acceptable)?;
            d.set_item("true_oc", r.true_oc)?;
            d.set_item("approx_oc", r.approx_oc)?;
            d.set_item("signed_error", r.signed_error)?;
            d.set_item("e_over", r.e_over)?;
            d.set_item("e_under", r.e_under)?;
            d.set_item("regret", r.regret)?;
            d.set_item("regret_over", r.regret_over)?;
            d.set_item("regret_under", r.regret_under)?;
            d.set_item("P", r.decision_rate)?;
            Ok(d)
        })
        .collect()
}

/// Share of rate-weighted regret caused by overestimation; None without regret.
#[pyfunction]
fn error_ratio(instance: &Instance, policy: &str) -> PyResult<Option<f64>> {
    let inst = &instance.inner;
    let optimal = dmvrpx::solve_optimal(inst);
    let rule = rule_for(inst, self::policy(policy)?, &optimal);
    Ok(weighted_error_ratio(&compute_errors(&optimal, &rule, inst)))
}

#[pyfunction]
fn optimality_gap(j_star: f64, j_pi: f64) -> f64 {
    gap_core(j_star, j_pi)
}

/// Runs the full-factorial study. Returns per-setting summaries and the
/// per-policy dominance statistics; writes all artifacts when `out_dir` is set.
#[pyfunction]
#[pyo3(signature = (root_seed=42, instances=50, policies=vec!["dpc".to_string(), "mcts".to_string(), "myopic".to_string()], workers=0, out_dir=None))]
fn run_study<'py>(
    py: Python<'py>,
    root_seed: u64,
    instances: u32,
    policies: Vec<String>,
    workers: usize,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = StudyConfig {
        root_seed,
        instances_per_setting: instances,
        policies: policies.iter().map(|p| policy(p)).collect::<PyResult<_>>()?,
        out_dir: out_dir.clone(),
        workers,
        ..StudyConfig::default()
    };
    let report = py.detach(|| run_study_core(&config)).map_err(to_py_err)?;
    if let Some(dir) = &out_dir {
        write_study(&report, &config, dir).map_err(to_py_err)?;
    }
    let out = PyDict::new(py);
    let summaries = report
        .summaries
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("setting", s.setting.slug())?;
            d.set_item("policy", s.policy.label())?;
            d.set_item("J_star", s.mean_j_star)?;
            d.set_item("J_pi", s.mean_j_pi)?;
            d.set_item("gap", s.gap)?;
            d.set_item("E", s.error_ratio())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("summaries", summaries)?;
    let dominance = PyDict::new(py);
    for (name, stats) in &report.policy_stats {
        dominance.set_item(name, stats.dominance_fraction)?;
    }
    out.set_item("dominance", dominance)?;
    out.set_item("invariant_violations", report.invariants.violations)?;
    Ok(out)
}

#[pymodule]
fn dmvrpx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Setting>()?;
    m.add_class::<Instance>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(enumerate_settings, m)?)?;
    m.add_function(wrap_pyfunction!(generate_instance, m)?)?;
    m.add_function(wrap_pyfunction!(solve_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dpc, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mcts, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(decision_rates, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(error_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(optimality_gap, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
