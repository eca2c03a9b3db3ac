//! Primal-dual online convex programming.
//!
//! At each step the dual iterate `ȳ_t` comes from SS-FTRL with `γ̄ = 1/n`,
//! and the primal choice is the option minimizing the fake cost
//! `L(ȳ_t, v) = ⟨ȳ_t, v⟩ − (1/n)ψ*(ȳ_t)`. Since the conjugate term does not
//! depend on `v`, that is plain linear minimization over the menu.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::check::{CheckResult, TOL};
use crate::convex::CostFunction;
use crate::error::{Error, Result};
use crate::instance::{Origin, Payload, Realization};
use crate::oco::{iterate_argument, Mutation, OcoState, RegretLedger};
use crate::vecops::{add_assign, dot, lp_norm, scaled};

/// A finite menu of vectors in `[0,1]^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub options: Vec<Vec<f64>>,
}

impl FeasibleSet {
    pub fn new(options: Vec<Vec<f64>>) -> Result<Self> {
        let m = options.first().map(Vec::len).unwrap_or(0);
        let set = Self { options };
        set.validate(m, "options")?;
        Ok(set)
    }
}

impl Payload for FeasibleSet {
    const PROBLEM: &'static str = "ocp";

    fn validate(&self, m: usize, path: &str) -> Result<()> {
        if self.options.is_empty() {
            return Err(Error::Schema { path: format!("{path}.options"), message: "must be nonempty".into() });
        }
        for (k, v) in self.options.iter().enumerate() {
            if v.len() != m {
                return Err(Error::Schema {
                    path: format!("{path}.options[{k}]"),
                    message: format!("has {} entries, expected m = {m}", v.len()),
                });
            }
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0 && **x <= 1.0)) {
                return Err(Error::Schema {
                    path: format!("{path}.options[{k}][{i}]"),
                    message: format!("{x} is outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// Linear minimization over a feasible region: returns an index and the
/// minimizer of `⟨y, ·⟩`. Implement this to plug in polytope oracles.
pub trait LinearOracle {
    fn minimize(&self, y: &[f64]) -> (usize, Vec<f64>);
}

impl LinearOracle for FeasibleSet {
    /// Exhaustive search; ties go to the lowest index.
    fn minimize(&self, y: &[f64]) -> (usize, Vec<f64>) {
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (k, v) in self.options.iter().enumerate() {
            let val = dot(y, v);
            if val < best_val {
                best = k;
                best_val = val;
            }
        }
        (best, self.options[best].clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub index: usize,
    pub v: Vec<f64>,
    pub fake_cost: f64,
}

/// `L_γ(y, v) = ⟨y,v⟩ − γψ*(y)`.
pub fn lagrangian(f: &CostFunction, y: &[f64], v: &[f64], gamma: f64) -> f64 {
    if gamma == 0.0 {
        dot(y, v)
    } else {
        dot(y, v) - gamma * f.conj_unchecked(y)
    }
}

/// Option minimizing `L_γ(y, ·)`.
pub fn best_response(y: &[f64], set: &impl LinearOracle, gamma: f64, f: &CostFunction) -> BestResponse {
    let (index, v) = set.minimize(y);
    let fake_cost = lagrangian(f, y, &v, gamma);
    BestResponse { index, v, fake_cost }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OcpStep {
    pub y_bar: Vec<f64>,
    pub choice: usize,
    pub v_bar: Vec<f64>,
    pub fake_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OcpRunTrace {
    pub n: usize,
    pub gamma_bar: f64,
    pub steps: Vec<OcpStep>,
    /// `Σ_t v̄_t`
    pub load: Vec<f64>,
    /// `ψ(Σ_t v̄_t)`
    pub cost: f64,
    /// `ψ(⅛Σ_t v̄_t)`
    pub scaled_cost: f64,
    pub ledger: RegretLedger,
    #[serde(skip)]
    pub state: OcoState,
}

impl OcpRunTrace {
    pub fn cost_function(&self) -> &CostFunction {
        self.state.cost()
    }

    /// `Σ_t L(ȳ_t, v̄_t)`
    pub fn fake_cost_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.fake_cost).sum()
    }

    /// Copy the adversarial/stochastic labels into the trace.
    pub fn label(&mut self, origins: &[Origin]) {
        for (s, o) in self.steps.iter_mut().zip(origins) {
            s.origin = Some(*o);
        }
    }
}

/// Runs the primal-dual loop with any linear oracle per step.
pub fn run_ocp_with<O: LinearOracle>(sets: &[O], f: &CostFunction, mutation: Mutation) -> Result<OcpRunTrace> {
    let n = sets.len();
    let p = f.p();
    if (n as f64) < 4.0 * p {
        return Err(Error::Config(format!("n = {n} must be at least 4p = {}", 4.0 * p)));
    }
    let gamma = 1.0 / n as f64;
    let mut state = OcoState::with_mutation(f.clone(), gamma, mutation)?;
    let mut ledger = RegretLedger::new(f);
    let mut steps = Vec::with_capacity(n);
    let mut load = vec![0.0; f.dim()];
    for set in sets {
        let y = state.next_iterate();
        let br = best_response(&y, set, gamma, f);
        if br.v.len() != f.dim() {
            return Err(Error::DimensionMismatch { expected: f.dim(), got: br.v.len() });
        }
        let delta = state.observe(&br.v, gamma)?;
        ledger.record(&delta);
        add_assign(&mut load, &br.v);
        steps.push(OcpStep { y_bar: y, choice: br.index, v_bar: br.v, fake_cost: br.fake_cost, origin: None });
    }
    let cost = f.eval_unchecked(&load);
    let scaled_cost = f.eval_unchecked(&scaled(&load, 0.125));
    Ok(OcpRunTrace { n, gamma_bar: gamma, steps, load, cost, scaled_cost, ledger, state })
}

/// Algorithm over a realized sequence of feasible sets. Requires `n ≥ 4p`.
pub fn run_ocp(sets: &[FeasibleSet], f: &CostFunction, mutation: Mutation) -> Result<OcpRunTrace> {
    run_ocp_with(sets, f, mutation)
}

/// [`run_ocp`] on a realization, with the origin labels attached afterwards.
pub fn run_ocp_realization(
    real: &Realization<FeasibleSet>,
    f: &CostFunction,
    mutation: Mutation,
) -> Result<OcpRunTrace> {
    let mut trace = run_ocp(&real.items, f, mutation)?;
    trace.label(&real.origins);
    Ok(trace)
}

/// `ψ(⅛Σv̄) ≤ ΣL(ȳ_t,v̄_t) − (1/2p)·max_t ψ*(ȳ_t) + (3/2)ψ(p𝟙)`, and the
/// separable form with `ψ*(⋁_t ȳ_t)`.
pub fn check_corollary1(trace: &OcpRunTrace) -> Vec<CheckResult> {
    let f = trace.cost_function();
    let l = &trace.ledger;
    let p = f.p();
    let base = trace.fake_cost_sum() + 1.5 * l.psi_p_ones;
    let mut c = CheckResult::new("corollary1", TOL);
    c.le(trace.scaled_cost, base - l.max_conj_y_bar / (2.0 * p));
    let mut s = CheckResult::new("corollary1_separable", TOL);
    if f.is_separable() {
        s.le(trace.scaled_cost, base - f.conj_unchecked(&l.y_bar_max) / (2.0 * p));
    }
    vec![c, s]
}

/// For every step and every option `v ∈ V_t`, `L(ȳ_t, v̄_t) ≤ L(ȳ_t, v)`.
pub fn check_best_response(trace: &OcpRunTrace, sets: &[FeasibleSet]) -> CheckResult {
    let f = trace.cost_function();
    let mut c = CheckResult::new("best_response", 1e-10);
    for (s, set) in trace.steps.iter().zip(sets) {
        for v in &set.options {
            c.le(s.fake_cost, lagrangian(f, &s.y_bar, v, trace.gamma_bar));
        }
    }
    c
}

/// Both sides of the adversarial-part bounds for one `α`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdvPartTerms {
    pub alpha: f64,
    /// `Σ_{t∈Adv} L(ȳ_t, v*_t)`
    pub lhs: f64,
    /// `e·ψ(α·vOPT_Adv) + (ep/α)·max_t ψ*(ȳ_t)`
    pub rhs_max: f64,
    /// `ψ(α·vOPT_Adv) + (1/α)·ψ*(⋁_t ȳ_t)`
    pub rhs_join: f64,
}

/// `opt` lists `(t, v*_t)` for the adversarial times, 0-based.
pub fn adv_part_terms(trace: &OcpRunTrace, alpha: f64, opt: &[(usize, Vec<f64>)]) -> Result<AdvPartTerms> {
    if !(alpha >= 1.0) {
        return Err(Error::OutOfRange(format!("alpha = {alpha} must be >= 1")));
    }
    let f = trace.cost_function();
    let p = f.p();
    let m = f.dim();
    let mut lhs = 0.0;
    let mut v_opt = vec![0.0; m];
    for (t, v) in opt {
        let step = trace.steps.get(*t).ok_or_else(|| {
            Error::OutOfRange(format!("adversarial time {t} is past the end of the run"))
        })?;
        lhs += lagrangian(f, &step.y_bar, v, trace.gamma_bar);
        add_assign(&mut v_opt, v);
    }
    let psi_scaled = f.eval_unchecked(&scaled(&v_opt, alpha));
    let l = &trace.ledger;
    Ok(AdvPartTerms {
        alpha,
        lhs,
        rhs_max: E * psi_scaled + E * p / alpha * l.max_conj_y_bar,
        rhs_join: psi_scaled + f.conj_unchecked(&l.y_bar_max) / alpha,
    })
}

/// Adversarial-part bounds as checks, named `adv_part_<label>` and
/// `adv_part_<label>_separable`.
pub fn check_lemma_adv(
    trace: &OcpRunTrace,
    alpha: f64,
    label: &str,
    opt: &[(usize, Vec<f64>)],
) -> Result<Vec<CheckResult>> {
    let t = adv_part_terms(trace, alpha, opt)?;
    let mut a = CheckResult::new(format!("adv_part_{label}"), TOL);
    a.le(t.lhs, t.rhs_max);
    let mut b = CheckResult::new(format!("adv_part_{label}_separable"), TOL);
    if trace.cost_function().is_separable() {
        b.le(t.lhs, t.rhs_join);
    }
    Ok(vec![a, b])
}

/// `Σ_{t∈Stoch} L(ȳ_t, v*_t)` for the given `(t, v*_t)` pairs.
pub fn stoch_fake_cost(trace: &OcpRunTrace, opt: &[(usize, Vec<f64>)]) -> f64 {
    let f = trace.cost_function();
    opt.iter().map(|(t, v)| lagrangian(f, &trace.steps[*t].y_bar, v, trace.gamma_bar)).sum()
}

/// Iterates of SS-FTRL fed the loads of `trace` with `γ_t = 1/|Stoch|` on
/// stochastic steps and 0 elsewhere.
pub fn modified_iterates(trace: &OcpRunTrace, origins: &[Origin]) -> Vec<Vec<f64>> {
    let f = trace.cost_function();
    let s = origins.iter().filter(|o| **o == Origin::Stoch).count();
    let gamma_bar = if s == 0 { 0.0 } else { 1.0 / s as f64 };
    let mut cum_v = vec![0.0; f.dim()];
    let mut cum_gamma = 0.0;
    let mut out = Vec::with_capacity(trace.steps.len());
    for (step, o) in trace.steps.iter().zip(origins) {
        out.push(f.grad_unchecked(&iterate_argument(f.p(), &cum_v, cum_gamma, gamma_bar)));
        add_assign(&mut cum_v, &step.v_bar);
        if *o == Origin::Stoch {
            cum_gamma += gamma_bar;
        }
    }
    out
}

/// Homogeneous costs: the modified iterates are positive multiples of the
/// standard ones and pick the same options.
pub fn check_homogeneous_equivalence(
    trace: &OcpRunTrace,
    sets: &[FeasibleSet],
    origins: &[Origin],
) -> Result<Vec<CheckResult>> {
    let f = trace.cost_function();
    if !f.is_homogeneous() {
        return Err(Error::Config("homogeneous equivalence needs a homogeneous cost".into()));
    }
    let y_check = modified_iterates(trace, origins);
    let mut scaling = CheckResult::new("homogeneous_scaling", 1e-9);
    let mut choice = CheckResult::new("homogeneous_choice", 0.0);
    for ((step, yc), set) in trace.steps.iter().zip(&y_check).zip(sets) {
        let ratios: Vec<f64> = step
            .y_bar
            .iter()
            .zip(yc)
            .filter(|(yb, _)| **yb > 0.0)
            .map(|(yb, c)| c / yb)
            .collect();
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        if ratios.is_empty() {
            // a zero iterate is only consistent with a zero modified iterate
            scaling.holds(yc.iter().all(|x| *x == 0.0));
        } else {
            scaling.holds(lo > 0.0);
            scaling.le((hi - lo) / hi, 0.0);
        }
        choice.holds(set.minimize(yc).0 == step.choice);
    }
    Ok(vec![scaling, choice])
}

/// Outcome of an `ℓ_p` load-balancing run.
#[derive(Clone, Debug, Serialize)]
pub struct LoadBalanceRun {
    pub p_requested: f64,
    /// Exponent actually used by the cost `Σ_i u_i^p`.
    pub p_effective: f64,
    pub load: Vec<f64>,
    /// `‖load‖_{p_effective}`
    pub norm: f64,
    /// `‖load‖_{p_requested}`
    pub norm_requested: f64,
    pub trace: OcpRunTrace,
}

/// Exponent used for `ℓ_p` balancing on `m` machines: beyond `ln m` every
/// `ℓ_p` norm is within a constant of `ℓ_∞`, so the exponent is capped at
/// `max(2, ⌈ln m⌉)`.
pub fn effective_exponent(p: f64, m: usize) -> f64 {
    let ln_m = (m as f64).ln();
    if p >= ln_m {
        p.min(ln_m.ceil().max(2.0))
    } else {
        p
    }
}

/// `ψ(u) = Σ_i u_i^p` on `m` machines.
pub fn lp_cost(m: usize, p: f64) -> Result<CostFunction> {
    CostFunction::sum_of_powers(vec![1.0; m], p)
}

pub fn run_loadbalance(sets: &[FeasibleSet], p: f64, m: usize, mutation: Mutation) -> Result<LoadBalanceRun> {
    let p_eff = effective_exponent(p, m);
    let f = lp_cost(m, p_eff)?;
    let trace = run_ocp(sets, &f, mutation)?;
    let load = trace.load.clone();
    Ok(LoadBalanceRun {
        p_requested: p,
        p_effective: p_eff,
        norm: lp_norm(&load, p_eff),
        norm_requested: lp_norm(&load, p),
        load,
        trace,
    })
}
