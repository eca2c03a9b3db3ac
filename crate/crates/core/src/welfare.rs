//! Online welfare maximization with a convex production cost.
//!
//! Requests `(c_t, a_t)` arrive one at a time; the goal is to maximize
//! `Σ_t c_t x_t − ψ(Σ_t a_t x_t)` over `x_t ∈ [0,1]`. The dual comes from
//! SS-FTRL fed the virtual loads `v̄_t = a_t x̄_t`; the virtual play `x̄_t`
//! maximizes `c_t x − L(ȳ_t, a_t x)`, and the algorithm commits the scaled
//! value `x̃_t = x̄_t / 64`.
//!
//! A linear part of `ψ` is folded into the rewards: with
//! `ψ = ⟨ℓ, ·⟩ + ψ_high` the engine runs on `c_t − ⟨ℓ, a_t⟩` and `ψ_high`,
//! which must grow at least quadratically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::check::{CheckResult, TOL};
use crate::convex::CostFunction;
use crate::error::{Error, Result};
use crate::instance::{Origin, Payload, Realization};
use crate::oco::{Mutation, OcoState, RegretLedger};
use crate::ocp::lagrangian;
use crate::vecops::{add_assign, dot, scaled};

/// Scale applied to the virtual play before committing it.
pub const PLAY_SCALE: f64 = 1.0 / 64.0;

/// A request with reward `c` and resource consumption `a ∈ [0,1]^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub c: f64,
    pub a: Vec<f64>,
}

impl Payload for Request {
    const PROBLEM: &'static str = "welfare";

    fn validate(&self, m: usize, path: &str) -> Result<()> {
        if !self.c.is_finite() {
            return Err(Error::Schema { path: format!("{path}.c"), message: "must be finite".into() });
        }
        if self.a.len() != m {
            return Err(Error::Schema {
                path: format!("{path}.a"),
                message: format!("has {} entries, expected m = {m}", self.a.len()),
            });
        }
        if let Some((i, x)) = self.a.iter().enumerate().find(|(_, x)| !(**x >= 0.0 && **x <= 1.0)) {
            return Err(Error::Schema { path: format!("{path}.a[{i}]"), message: format!("{x} is outside [0, 1]") });
        }
        Ok(())
    }
}

/// `argmax_{x∈[0,1]} (c − ⟨y,a⟩)x`: 1 when the coefficient is positive,
/// 0 otherwise (ties included).
pub fn virtual_best_response(y: &[f64], c: f64, a: &[f64]) -> f64 {
    if c - dot(y, a) > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Whether `ψ(γu) ≥ γ²ψ(u)` on a fixed set of sample points and stretches.
pub fn check_quadratic_growth(f: &CostFunction) -> CheckResult {
    let m = f.dim();
    let mut points: Vec<Vec<f64>> = [0.01, 0.1, 0.5, 1.0, 3.0, 10.0].iter().map(|s| vec![*s; m]).collect();
    for i in 0..m {
        for s in [0.2, 2.0] {
            let mut u = vec![0.0; m];
            u[i] = s;
            points.push(u);
        }
    }
    let mut c = CheckResult::new("quadratic_growth", 1e-9);
    for u in &points {
        let base = f.eval_unchecked(u);
        for g in [1.0, 1.5, 2.0, 4.0, 8.0] {
            c.ge(f.eval_unchecked(&scaled(u, g)), g * g * base);
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WelfareStep {
    pub y_bar: Vec<f64>,
    /// Reward after folding in the linear part of the cost.
    pub reduced_c: f64,
    pub x_bar: f64,
    pub x_tilde: f64,
    pub v_bar: Vec<f64>,
    /// `L(ȳ_t, v̄_t)` under `ψ_high`
    pub fake_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WelfareTrace {
    pub n: usize,
    pub gamma_bar: f64,
    pub steps: Vec<WelfareStep>,
    /// Slopes of the linear part folded into the rewards.
    pub linear_part: Vec<f64>,
    /// `Σ_t c_t x̃_t`
    pub reward: f64,
    /// `Σ_t a_t x̃_t`
    pub load: Vec<f64>,
    /// `ψ(Σ_t a_t x̃_t)`
    pub cost: f64,
    pub profit: f64,
    /// `Σ_t c'_t x̄_t − Σ_t L(ȳ_t, v̄_t)`, the virtual fake profit.
    pub virtual_fake_profit: f64,
    pub ledger: RegretLedger,
    #[serde(skip)]
    pub state: OcoState,
}

impl WelfareTrace {
    /// The cost the dual runs on (`ψ_high`).
    pub fn high_cost(&self) -> &CostFunction {
        self.state.cost()
    }

    pub fn label(&mut self, origins: &[Origin]) {
        for (s, o) in self.steps.iter_mut().zip(origins) {
            s.origin = Some(*o);
        }
    }

    /// `ψ_high(p𝟙)`
    pub fn psi_p_ones(&self) -> f64 {
        self.ledger.psi_p_ones
    }
}

/// Split `f` into its linear slopes and a part with quadratic growth.
pub fn reduce_cost(f: &CostFunction) -> Result<(Vec<f64>, CostFunction)> {
    let (lin, high) = f
        .linear_split()
        .ok_or_else(|| Error::Config("cost has no linear + high-order decomposition".into()))?;
    let growth = check_quadratic_growth(&high);
    if !growth.passed() {
        return Err(Error::Config(format!(
            "high-order part of the cost does not grow quadratically (worst slack {:e})",
            growth.slack
        )));
    }
    Ok((lin, high))
}

pub fn run_welfare(requests: &[Request], f: &CostFunction, mutation: Mutation) -> Result<WelfareTrace> {
    let n = requests.len();
    let (lin, high) = reduce_cost(f)?;
    if (n as f64) < 4.0 * high.p() {
        return Err(Error::Config(format!("n = {n} must be at least 4p = {}", 4.0 * high.p())));
    }
    let m = f.dim();
    let gamma = 1.0 / n as f64;
    let mut state = OcoState::with_mutation(high.clone(), gamma, mutation)?;
    let mut ledger = RegretLedger::new(&high);
    let mut steps = Vec::with_capacity(n);
    let mut reward = 0.0;
    let mut load = vec![0.0; m];
    let mut virtual_fake_profit = 0.0;
    for (t, r) in requests.iter().enumerate() {
        if r.a.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: r.a.len() });
        }
        r.validate(m, &format!("requests[{t}]"))?;
        let y = state.next_iterate();
        let reduced_c = r.c - dot(&lin, &r.a);
        let x_bar = virtual_best_response(&y, reduced_c, &r.a);
        let v_bar = scaled(&r.a, x_bar);
        let fake_cost = lagrangian(&high, &y, &v_bar, gamma);
        let delta = state.observe(&v_bar, gamma)?;
        ledger.record(&delta);
        let x_tilde = x_bar * PLAY_SCALE;
        reward += r.c * x_tilde;
        add_assign(&mut load, &scaled(&r.a, x_tilde));
        virtual_fake_profit += reduced_c * x_bar - fake_cost;
        steps.push(WelfareStep { y_bar: y, reduced_c, x_bar, x_tilde, v_bar, fake_cost, origin: None });
    }
    let cost = f.eval_unchecked(&load);
    Ok(WelfareTrace {
        n,
        gamma_bar: gamma,
        steps,
        linear_part: lin,
        reward,
        cost,
        profit: reward - cost,
        load,
        virtual_fake_profit,
        ledger,
        state,
    })
}

pub fn run_welfare_realization(
    real: &Realization<Request>,
    f: &CostFunction,
    mutation: Mutation,
) -> Result<WelfareTrace> {
    let mut trace = run_welfare(&real.items, f, mutation)?;
    trace.label(&real.origins);
    Ok(trace)
}

/// The scaled optimum's fake profit `Σ_{t∈Stoch} c'_t x*_t/β − L(ȳ_t, a_t x*_t/β)`
/// for `(t, x*_t)` pairs over the stochastic times.
pub fn scaled_opt_fake_profit(trace: &WelfareTrace, requests: &[Request], x_star: &[(usize, f64)], beta: f64) -> f64 {
    let high = trace.high_cost();
    x_star
        .iter()
        .map(|&(t, x)| {
            let s = &trace.steps[t];
            let xs = x / beta;
            s.reduced_c * xs - lagrangian(high, &s.y_bar, &scaled(&requests[t].a, xs), trace.gamma_bar)
        })
        .sum()
}

/// Per-realization checks of the profit chain.
///
/// * `welfare_zero_candidate`: `c'_t x̄_t − L(ȳ_t, v̄_t) ≥ (1/n)ψ*(ȳ_t) ≥ 0` at every step;
/// * `welfare_opt_candidate`: the best response beats `x*_t/β` at stochastic steps;
/// * `welfare_fake_profit`: virtual fake profit ≥ scaled optimum's fake profit;
/// * `welfare_regret`: `profit ≥ (1/64)·virtual fake profit − (1/64)ψ_high(p𝟙)`;
/// * `welfare_profit_identity`: profit equals reward minus cost, and the
///   reduced accounting adds back to it.
pub fn check_welfare_chain(
    trace: &WelfareTrace,
    requests: &[Request],
    f: &CostFunction,
    x_star: &[(usize, f64)],
    beta: f64,
) -> Vec<CheckResult> {
    let high = trace.high_cost();
    let gamma = trace.gamma_bar;

    let mut zero = CheckResult::new("welfare_zero_candidate", 1e-10);
    for s in &trace.steps {
        let conj = high.conj_unchecked(&s.y_bar);
        let own = s.reduced_c * s.x_bar - s.fake_cost;
        zero.ge(own, gamma * conj);
        zero.ge(gamma * conj, 0.0);
    }

    let mut cand = CheckResult::new("welfare_opt_candidate", 1e-10);
    for &(t, x) in x_star {
        let s = &trace.steps[t];
        let xs = x / beta;
        let alt = s.reduced_c * xs - lagrangian(high, &s.y_bar, &scaled(&requests[t].a, xs), gamma);
        cand.ge(s.reduced_c * s.x_bar - s.fake_cost, alt);
    }

    let mut fake = CheckResult::new("welfare_fake_profit", TOL);
    let opt_fake = if x_star.is_empty() { 0.0 } else { scaled_opt_fake_profit(trace, requests, x_star, beta) };
    fake.ge(trace.virtual_fake_profit, opt_fake);

    let mut regret = CheckResult::new("welfare_regret", TOL);
    regret.ge(trace.profit, PLAY_SCALE * trace.virtual_fake_profit - PLAY_SCALE * trace.psi_p_ones());

    let mut identity = CheckResult::new("welfare_profit_identity", 1e-9);
    identity.equal(trace.profit, trace.reward - f.eval_unchecked(&trace.load));
    let reduced_reward: f64 = trace.steps.iter().map(|s| s.reduced_c * s.x_tilde).sum();
    let rebuilt = reduced_reward + dot(&trace.linear_part, &trace.load) - f.eval_unchecked(&trace.load);
    identity.equal(rebuilt, trace.profit);
    let reduced_profit = reduced_reward - high.eval_unchecked(&trace.load);
    identity.equal(reduced_profit, trace.profit);

    vec![zero, cand, fake, regret, identity]
}

// ---------------------------------------------------------------------------
// Mixture with a pluggable adversarial strategy

/// An online welfare policy: sees one request at a time and commits `x_t`.
pub trait WelfarePolicy {
    fn name(&self) -> &str;
    fn decide(&mut self, request: &Request) -> f64;
}

/// Accepts a request in full when its reward exceeds the marginal cost
/// `⟨∇ψ(load + a), a⟩`. A naive baseline only.
#[derive(Clone, Debug)]
pub struct GreedyMarginal {
    f: CostFunction,
    load: Vec<f64>,
}

impl GreedyMarginal {
    pub fn new(f: CostFunction) -> Self {
        let m = f.dim();
        Self { f, load: vec![0.0; m] }
    }
}

impl WelfarePolicy for GreedyMarginal {
    fn name(&self) -> &str {
        "greedy_marginal"
    }

    fn decide(&mut self, r: &Request) -> f64 {
        let mut next = self.load.clone();
        add_assign(&mut next, &r.a);
        if r.c > dot(&self.f.grad_unchecked(&next), &r.a) {
            self.load = next;
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    /// The primal-dual algorithm above.
    Primal,
    /// The plug-in strategy.
    Plugin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoinChoice {
    /// Fair coin seeded by the value.
    Seeded(u64),
    Fixed(Arm),
}

#[derive(Clone, Debug, Serialize)]
pub struct MixtureOutcome {
    pub arm: Arm,
    pub plays: Vec<f64>,
    pub profit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<WelfareTrace>,
}

/// Profit of committing `plays` on `requests`.
pub fn profit_of(requests: &[Request], plays: &[f64], f: &CostFunction) -> f64 {
    let mut load = vec![0.0; f.dim()];
    let mut reward = 0.0;
    for (r, x) in requests.iter().zip(plays) {
        reward += r.c * x;
        add_assign(&mut load, &scaled(&r.a, *x));
    }
    reward - f.eval_unchecked(&load)
}

/// Runs either the primal-dual algorithm or the plug-in on the whole
/// instance, chosen by one coin flip.
pub fn mixture_wrapper(
    requests: &[Request],
    f: &CostFunction,
    plugin: &mut dyn WelfarePolicy,
    coin: CoinChoice,
) -> Result<MixtureOutcome> {
    let arm = match coin {
        CoinChoice::Fixed(a) => a,
        CoinChoice::Seeded(seed) => {
            if ChaCha8Rng::seed_from_u64(seed).gen::<bool>() {
                Arm::Primal
            } else {
                Arm::Plugin
            }
        }
    };
    match arm {
        Arm::Primal => {
            let trace = run_welfare(requests, f, Mutation::None)?;
            let plays = trace.steps.iter().map(|s| s.x_tilde).collect();
            Ok(MixtureOutcome { arm, plays, profit: trace.profit, trace: Some(trace) })
        }
        Arm::Plugin => {
            let plays: Vec<f64> = requests.iter().map(|r| plugin.decide(r).clamp(0.0, 1.0)).collect();
            let profit = profit_of(requests, &plays, f);
            Ok(MixtureOutcome { arm, plays, profit, trace: None })
        }
    }
}
