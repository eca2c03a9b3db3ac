//! Shifted and scaled follow-the-regularized-leader (SS-FTRL).
//!
//! The online player faces gain functions `L_γ(y, v) = ⟨y,v⟩ − γψ*(y)` with
//! `γ_t ∈ {0, γ̄}` and `Σ_t γ_t = 1`. Running FTRL over the scaled gains
//! `4·L_{γ_t}(·, v_t/4)`, plus a fake time-0 gain `⟨y, 4p𝟙⟩ − 4ψ*(y)` and an
//! extra `γ̄ψ*` regularizer, has the closed-form iterate
//!
//! ```text
//! ȳ_t = ∇ψ( (4p𝟙 + v_{1:t−1}) / (4(1 + γ_{1:t−1} + γ̄)) )
//! ```
//!
//! The companion follow-the-leader iterate `ỹ_t` drops the `γ̄` term. The
//! checks at the bottom of this module verify the regret, size-control,
//! stability and domination guarantees of the iterates after a run.

use serde::{Deserialize, Serialize};

use crate::check::{CheckResult, TOL};
use crate::convex::CostFunction;
use crate::error::{Error, Result};
use crate::vecops::{add_assign, dot, max_assign};

/// Deliberate defects used to show the checks are not vacuous.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Drop the `4p𝟙` shift away from the origin.
    NoShift,
    /// Drop the extra `γ̄ψ*` regularizer (plain follow-the-leader).
    NoRegularizer,
}

impl std::str::FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Mutation::None),
            "no-shift" => Ok(Mutation::NoShift),
            "no-regularizer" => Ok(Mutation::NoRegularizer),
            other => Err(format!("unknown mutation `{other}` (none | no-shift | no-regularizer)")),
        }
    }
}

/// The point `(4p𝟙 + cum_v) / (4(1 + cum_gamma + extra))` at which the
/// gradient is evaluated.
pub fn iterate_argument(p: f64, cum_v: &[f64], cum_gamma: f64, extra: f64) -> Vec<f64> {
    shifted_argument(4.0 * p, cum_v, cum_gamma, extra)
}

fn shifted_argument(shift: f64, cum_v: &[f64], cum_gamma: f64, extra: f64) -> Vec<f64> {
    let denom = 4.0 * (1.0 + cum_gamma + extra);
    cum_v.iter().map(|v| (shift + v) / denom).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OcoStep {
    pub y_bar: Vec<f64>,
    pub v: Vec<f64>,
    pub gamma: f64,
}

/// Running state of SS-FTRL.
#[derive(Clone, Debug, Serialize)]
pub struct OcoState {
    #[serde(skip)]
    f: CostFunction,
    cum_v: Vec<f64>,
    active_steps: usize,
    gamma_bar: f64,
    history: Vec<OcoStep>,
    mutation: Mutation,
}

/// Ledger terms produced by one [`OcoState::observe`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerDelta {
    pub y_bar: Vec<f64>,
    /// `L_{γ_t}(ȳ_t, v_t/2) = ½⟨ȳ_t,v_t⟩ − γ_t ψ*(ȳ_t)`
    pub half_lagrangian: f64,
    /// `⟨ȳ_t, v_t⟩`
    pub inner: f64,
    /// `~L_t(ỹ_{t+1}) = ⟨ỹ_{t+1}, v_t⟩ − 4γ_t ψ*(ỹ_{t+1})`
    pub btl_term: f64,
    /// `ψ*(ȳ_t)`
    pub conj_y_bar: f64,
}

/// Running sums needed by the regret and size-control checks, stored as
/// prefix sums so every prefix can be checked after the fact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretLedger {
    pub psi_p_ones: f64,
    pub half_lagrangian_prefix: Vec<f64>,
    pub inner_prefix: Vec<f64>,
    pub btl_prefix: Vec<f64>,
    pub conj_y_bar: Vec<f64>,
    pub max_conj_y_bar: f64,
    /// Coordinate-wise running maximum `⋁_t ȳ_t`.
    pub y_bar_max: Vec<f64>,
}

impl RegretLedger {
    pub fn new(f: &CostFunction) -> Self {
        Self {
            psi_p_ones: f.value_at_p_ones(),
            half_lagrangian_prefix: Vec::new(),
            inner_prefix: Vec::new(),
            btl_prefix: Vec::new(),
            conj_y_bar: Vec::new(),
            max_conj_y_bar: 0.0,
            y_bar_max: vec![0.0; f.dim()],
        }
    }

    pub fn record(&mut self, d: &LedgerDelta) {
        let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
        self.half_lagrangian_prefix.push(last(&self.half_lagrangian_prefix) + d.half_lagrangian);
        self.inner_prefix.push(last(&self.inner_prefix) + d.inner);
        self.btl_prefix.push(last(&self.btl_prefix) + d.btl_term);
        self.conj_y_bar.push(d.conj_y_bar);
        self.max_conj_y_bar = self.max_conj_y_bar.max(d.conj_y_bar);
        max_assign(&mut self.y_bar_max, &d.y_bar);
    }

    pub fn steps(&self) -> usize {
        self.conj_y_bar.len()
    }

    pub fn half_lagrangian_sum(&self) -> f64 {
        self.half_lagrangian_prefix.last().copied().unwrap_or(0.0)
    }

    pub fn inner_sum(&self) -> f64 {
        self.inner_prefix.last().copied().unwrap_or(0.0)
    }
}

impl OcoState {
    /// Fails when `γ̄ > 1/(4p)`.
    pub fn new(f: CostFunction, gamma_bar: f64) -> Result<Self> {
        Self::with_mutation(f, gamma_bar, Mutation::None)
    }

    pub fn with_mutation(f: CostFunction, gamma_bar: f64, mutation: Mutation) -> Result<Self> {
        let cap = 1.0 / (4.0 * f.p());
        if !(gamma_bar >= 0.0) || gamma_bar > cap * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "gamma_bar = {gamma_bar} must lie in [0, 1/(4p)] = [0, {cap}]"
            )));
        }
        let m = f.dim();
        Ok(Self { f, cum_v: vec![0.0; m], active_steps: 0, gamma_bar, history: Vec::new(), mutation })
    }

    pub fn cost(&self) -> &CostFunction {
        &self.f
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    /// `v_{1:t−1}`
    pub fn cum_v(&self) -> &[f64] {
        &self.cum_v
    }

    /// `γ_{1:t−1}`
    pub fn cum_gamma(&self) -> f64 {
        self.active_steps as f64 * self.gamma_bar
    }

    /// Current 1-based time index.
    pub fn t(&self) -> usize {
        self.history.len() + 1
    }

    pub fn history(&self) -> &[OcoStep] {
        &self.history
    }

    pub fn mutation(&self) -> Mutation {
        self.mutation
    }

    fn shift(&self) -> f64 {
        match self.mutation {
            Mutation::NoShift => 0.0,
            _ => 4.0 * self.f.p(),
        }
    }

    fn regularizer(&self) -> f64 {
        match self.mutation {
            Mutation::NoRegularizer => 0.0,
            _ => self.gamma_bar,
        }
    }

    /// `ȳ_t`, the play for the current time. Does not mutate the state.
    pub fn next_iterate(&self) -> Vec<f64> {
        let w = shifted_argument(self.shift(), &self.cum_v, self.cum_gamma(), self.regularizer());
        self.f.grad_unchecked(&w)
    }

    /// Follow-the-leader iterate `ỹ_t` (no `γ̄` regularizer).
    pub fn ftl_iterate(&self) -> Vec<f64> {
        let w = shifted_argument(self.shift(), &self.cum_v, self.cum_gamma(), 0.0);
        self.f.grad_unchecked(&w)
    }

    fn is_gamma_bar(&self, gamma: f64) -> bool {
        (gamma - self.gamma_bar).abs() <= 1e-15 * self.gamma_bar.max(1.0)
    }

    /// Feed the gain `L_{γ_t}(·, v_t)` for the current time and advance.
    pub fn observe(&mut self, v: &[f64], gamma: f64) -> Result<LedgerDelta> {
        if v.len() != self.f.dim() {
            return Err(Error::DimensionMismatch { expected: self.f.dim(), got: v.len() });
        }
        if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0 && **x <= 1.0)) {
            return Err(Error::OutOfRange(format!("v_t[{i}] = {x} is outside [0, 1]")));
        }
        let active = if gamma == 0.0 {
            false
        } else if self.is_gamma_bar(gamma) {
            true
        } else {
            return Err(Error::OutOfRange(format!(
                "gamma_t = {gamma} must be 0 or gamma_bar = {}",
                self.gamma_bar
            )));
        };
        if active && (self.active_steps + 1) as f64 * self.gamma_bar > 1.0 + self.gamma_bar + 1e-12 {
            return Err(Error::OutOfRange("cumulative gamma would exceed 1 + gamma_bar".into()));
        }

        let y_bar = self.next_iterate();
        add_assign(&mut self.cum_v, v);
        if active {
            self.active_steps += 1;
        }
        let gamma = if active { self.gamma_bar } else { 0.0 };
        self.history.push(OcoStep { y_bar: y_bar.clone(), v: v.to_vec(), gamma });

        let y_next = self.ftl_iterate();
        let conj_y_bar = self.f.conj_unchecked(&y_bar);
        let inner = dot(&y_bar, v);
        let btl_term = if gamma == 0.0 {
            dot(&y_next, v)
        } else {
            dot(&y_next, v) - 4.0 * gamma * self.f.conj_unchecked(&y_next)
        };
        let half_lagrangian = if gamma == 0.0 { 0.5 * inner } else { 0.5 * inner - gamma * conj_y_bar };
        Ok(LedgerDelta { y_bar, half_lagrangian, inner, btl_term, conj_y_bar })
    }

    /// Whether the multipliers seen so far add up to one.
    pub fn is_complete(&self) -> bool {
        (self.cum_gamma() - 1.0).abs() <= 1e-9
    }

    /// Prefix sums `γ_{1:t}` for `t = 1..=n`.
    fn cum_gammas(&self) -> Vec<f64> {
        let mut k = 0usize;
        self.history
            .iter()
            .map(|s| {
                if s.gamma != 0.0 {
                    k += 1;
                }
                k as f64 * self.gamma_bar
            })
            .collect()
    }

    /// Prefix loads `v_{1:t}` for `t = 0..=n`.
    fn cum_loads(&self) -> Vec<Vec<f64>> {
        let mut acc = vec![0.0; self.f.dim()];
        let mut out = vec![acc.clone()];
        for s in &self.history {
            add_assign(&mut acc, &s.v);
            out.push(acc.clone());
        }
        out
    }
}

/// Drive a fresh SS-FTRL instance through a given sequence of loads and
/// multipliers.
pub fn run_oco(
    f: &CostFunction,
    gamma_bar: f64,
    loads: &[Vec<f64>],
    gammas: &[f64],
    mutation: Mutation,
) -> Result<(OcoState, RegretLedger)> {
    if loads.len() != gammas.len() {
        return Err(Error::DimensionMismatch { expected: loads.len(), got: gammas.len() });
    }
    let mut state = OcoState::with_mutation(f.clone(), gamma_bar, mutation)?;
    let mut ledger = RegretLedger::new(f);
    for (v, &g) in loads.iter().zip(gammas) {
        let d = state.observe(v, g)?;
        ledger.record(&d);
    }
    Ok((state, ledger))
}

// ---------------------------------------------------------------------------
// Checks. Reference quantities are recomputed from the recorded history with
// the unmodified formulas, so a mutated run is judged against the real
// algorithm.

/// Be-the-leader: `Σ_{t'≤t} ~L_{t'}(ỹ_{t'+1}) ≥ max_y Σ_{t'≤t} ~L_{t'}(y)` for
/// every prefix, with the right side in closed form, and `~L_0(ỹ_1) = 4ψ(p𝟙)`.
pub fn check_btl(ledger: &RegretLedger, state: &OcoState) -> Vec<CheckResult> {
    let f = &state.f;
    let p = f.p();
    let m = f.dim();
    let p_ones = vec![p; m];
    let y1 = f.grad_unchecked(&p_ones);
    let l0 = dot(&y1, &vec![4.0 * p; m]) - 4.0 * f.conj_unchecked(&y1);

    let mut initial = CheckResult::new("btl_initial", TOL);
    initial.equal(l0, 4.0 * ledger.psi_p_ones);

    let mut btl = CheckResult::new("btl", TOL);
    let loads = state.cum_loads();
    let gammas = state.cum_gammas();
    for t in 0..=ledger.steps() {
        let lhs = l0 + if t == 0 { 0.0 } else { ledger.btl_prefix[t - 1] };
        let g = if t == 0 { 0.0 } else { gammas[t - 1] };
        let w = iterate_argument(p, &loads[t], g, 0.0);
        let rhs = 4.0 * (1.0 + g) * f.eval_unchecked(&w);
        btl.ge(lhs, rhs);
    }
    vec![initial, btl]
}

/// Stability: `ȳ_t ≤ ỹ_{t+1} ≤ 2ȳ_t` coordinate-wise.
pub fn check_stability(state: &OcoState) -> CheckResult {
    let f = &state.f;
    let loads = state.cum_loads();
    let gammas = state.cum_gammas();
    let mut c = CheckResult::new("stability", 1e-9);
    for (t, s) in state.history.iter().enumerate() {
        let y_next = f.grad_unchecked(&iterate_argument(f.p(), &loads[t + 1], gammas[t], 0.0));
        for (yb, yn) in s.y_bar.iter().zip(&y_next) {
            c.le(*yb, *yn);
            c.le(*yn, 2.0 * yb);
        }
    }
    c
}

/// At most `⌈p⌉` times whose iterates `e`-dominate every iterate of the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominatingSet {
    /// 1-based times `t_1 < … < t_k`.
    pub times: Vec<usize>,
    /// `witness[t−1]` is the smallest `t_i ≥ t`.
    pub witness: Vec<usize>,
    /// `max_{t,j} (ȳ_t)_j / (ȳ_{witness(t)})_j`.
    pub max_ratio: f64,
    pub certificate: CheckResult,
}

/// Times `t_i` with `γ_{1:t_i} ∈ [2^{i/k} − 1, 2^{i/k} − 1 + γ̄]`, `k = ⌈p⌉`.
/// The earliest qualifying time is taken, except for the last interval where
/// the latest is taken so trailing `γ_t = 0` steps are covered.
/// `cum_gammas[t−1] = γ_{1:t}`.
pub fn dominating_times(cum_gammas: &[f64], gamma_bar: f64, p: f64) -> Result<Vec<usize>> {
    let k = (p - 1e-12).ceil().max(1.0) as usize;
    let eps = 1e-9;
    let mut times = Vec::with_capacity(k);
    for i in 1..=k {
        let lo = 2f64.powf(i as f64 / k as f64) - 1.0;
        let hi = lo + gamma_bar;
        let inside = |g: &f64| *g >= lo - eps && *g <= hi + eps;
        let hit = if i < k {
            cum_gammas.iter().position(inside)
        } else {
            cum_gammas.iter().rposition(inside)
        };
        match hit {
            Some(idx) => times.push(idx + 1),
            None => {
                return Err(Error::Structural(format!(
                    "no time with cumulative gamma in [{lo}, {hi}] (interval {i} of {k})"
                )))
            }
        }
    }
    times.dedup();
    Ok(times)
}

pub fn dominating_set(state: &OcoState) -> Result<DominatingSet> {
    if !state.is_complete() {
        return Err(Error::Structural(format!(
            "dominating set needs a complete run (sum of gammas = {})",
            state.cum_gamma()
        )));
    }
    let times = dominating_times(&state.cum_gammas(), state.gamma_bar, state.f.p())?;
    let n = state.history.len();
    let mut witness = Vec::with_capacity(n);
    let mut certificate = CheckResult::new("domination", 1e-9);
    let mut max_ratio: f64 = 0.0;
    let e = std::f64::consts::E;
    for t in 1..=n {
        let w = *times.iter().find(|&&ti| ti >= t).ok_or_else(|| {
            Error::Structural(format!("time {t} lies after the last dominating time"))
        })?;
        witness.push(w);
        let yt = &state.history[t - 1].y_bar;
        let yw = &state.history[w - 1].y_bar;
        for (a, b) in yt.iter().zip(yw) {
            certificate.le(*a, e * b);
            let r = if *b > 0.0 {
                a / b
            } else if *a > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_ratio = max_ratio.max(r);
        }
    }
    Ok(DominatingSet { times, witness, max_ratio, certificate })
}

/// Regret (item 1), size control (item 2), separable size control (item 3)
/// and their per-prefix forms.
pub fn check_item1_item2_item3(ledger: &RegretLedger, state: &OcoState) -> Vec<CheckResult> {
    let f = &state.f;
    let p = f.p();
    let psi_p = ledger.psi_p_ones;
    let loads = state.cum_loads();
    let gammas = state.cum_gammas();
    let n = ledger.steps();

    let mut item1 = CheckResult::new("regret", TOL);
    if state.is_complete() {
        let eighth: Vec<f64> = loads[n].iter().map(|x| x / 8.0).collect();
        item1.ge(ledger.half_lagrangian_sum(), f.eval_unchecked(&eighth) - psi_p);
    }

    let mut item2 = CheckResult::new("size_control", TOL);
    item2.le(ledger.max_conj_y_bar / p, ledger.inner_sum() + psi_p);

    let mut item3 = CheckResult::new("size_control_separable", TOL);
    if f.is_separable() {
        item3.le(f.conj_unchecked(&ledger.y_bar_max) / p, ledger.inner_sum() + psi_p);
    }

    let mut prefix_regret = CheckResult::new("regret_prefix", TOL);
    let mut prefix_size = CheckResult::new("size_control_prefix", TOL);
    for t in 1..=n {
        let w = iterate_argument(p, &loads[t], gammas[t - 1], 0.0);
        prefix_regret.ge(ledger.half_lagrangian_prefix[t - 1], f.eval_unchecked(&w) - psi_p);
        prefix_size.le(ledger.conj_y_bar[t - 1] / p, ledger.inner_prefix[t - 1] + psi_p);
    }
    vec![item1, item2, item3, prefix_regret, prefix_size]
}

/// Every SS-FTRL guarantee for a completed run.
pub fn theorem4_checks(ledger: &RegretLedger, state: &OcoState) -> Vec<CheckResult> {
    let mut out = check_item1_item2_item3(ledger, state);
    out.extend(check_btl(ledger, state));
    out.push(check_stability(state));
    match dominating_set(state) {
        Ok(d) => out.push(d.certificate),
        Err(_) => {
            let mut c = CheckResult::new("domination", 1e-9);
            c.holds(false);
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> CostFunction {
        CostFunction::sum_of_powers(vec![1.0], 2.0).unwrap()
    }

    #[test]
    fn first_iterates() {
        let mut s = OcoState::new(square(), 0.125).unwrap();
        assert!((s.next_iterate()[0] - 32.0 / 9.0).abs() < 1e-12);
        assert!((s.ftl_iterate()[0] - 4.0).abs() < 1e-12);
        let d = s.observe(&[1.0], 0.125).unwrap();
        assert!((d.half_lagrangian - 112.0 / 81.0).abs() < 1e-12);
        assert!((d.half_lagrangian - 1.3827).abs() < 1e-4);
        assert!((s.next_iterate()[0] - 3.6).abs() < 1e-12);
        let y2 = s.ftl_iterate()[0];
        assert!((y2 - 4.0).abs() < 1e-12);
        assert!(32.0 / 9.0 <= y2 && y2 <= 64.0 / 9.0);
    }

    #[test]
    fn next_iterate_is_pure() {
        let s = OcoState::new(square(), 0.125).unwrap();
        assert_eq!(s.next_iterate(), s.next_iterate());
        assert_eq!(s.t(), 1);
    }

    #[test]
    fn gamma_bar_cap_enforced() {
        assert!(matches!(OcoState::new(square(), 0.2), Err(Error::Config(_))));
        assert!(OcoState::new(square(), 0.125).is_ok());
        assert!(OcoState::new(square(), 0.0).is_ok());
    }

    #[test]
    fn observe_validates_inputs() {
        let mut s = OcoState::new(square(), 0.125).unwrap();
        assert!(matches!(s.observe(&[1.5], 0.125), Err(Error::OutOfRange(_))));
        assert!(matches!(s.observe(&[0.5], 0.1), Err(Error::OutOfRange(_))));
        assert!(matches!(s.observe(&[0.5, 0.5], 0.125), Err(Error::DimensionMismatch { .. })));
        for _ in 0..9 {
            s.observe(&[0.0], 0.125).unwrap();
        }
        assert!(s.observe(&[0.0], 0.125).is_err());
    }

    #[test]
    fn zero_step_only_moves_conjugate_max() {
        let f = square();
        let mut s = OcoState::new(f.clone(), 0.125).unwrap();
        let mut ledger = RegretLedger::new(&f);
        let d = s.observe(&[0.0], 0.0).unwrap();
        ledger.record(&d);
        assert_eq!(ledger.half_lagrangian_sum(), 0.0);
        assert_eq!(ledger.inner_sum(), 0.0);
        assert_eq!(ledger.btl_prefix[0], 0.0);
        assert!(ledger.max_conj_y_bar > 0.0);
    }

    #[test]
    fn gamma_bar_zero_makes_ftl_and_ftrl_agree() {
        let f = CostFunction::sum_of_powers(vec![1.0, 2.0], 3.0).unwrap();
        let mut s = OcoState::new(f, 0.0).unwrap();
        s.observe(&[0.3, 0.9], 0.0).unwrap();
        assert_eq!(s.next_iterate(), s.ftl_iterate());
    }

    #[test]
    fn homogeneous_iterate_scale_invariance() {
        let f = CostFunction::sum_of_powers(vec![1.0, 0.5], 3.0).unwrap();
        let cum = [1.5, 0.25];
        let a = f.grad(&iterate_argument(3.0, &cum, 0.5, 0.1)).unwrap();
        // same argument written with numerator and denominator scaled by 3
        let num: Vec<f64> = cum.iter().map(|v| 3.0 * (12.0 + v)).collect();
        let w: Vec<f64> = num.iter().map(|x| x / (3.0 * 4.0 * 1.6)).collect();
        let b = f.grad(&w).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn btl_initial_value() {
        let f = square();
        let (s, l) = run_oco(&f, 0.125, &[], &[], Mutation::None).unwrap();
        let r = check_btl(&l, &s);
        assert!(r.iter().all(CheckResult::passed));
        assert_eq!(l.psi_p_ones * 4.0, 16.0);
    }

    #[test]
    fn all_zero_run_passes_everything() {
        let f = CostFunction::sum_of_powers(vec![1.0, 1.0], 2.0).unwrap();
        let loads = vec![vec![0.0, 0.0]; 8];
        let (s, l) = run_oco(&f, 0.125, &loads, &[0.125; 8], Mutation::None).unwrap();
        for c in theorem4_checks(&l, &s) {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn dominating_set_example() {
        let f = square();
        let loads = vec![vec![1.0]; 8];
        let (s, _) = run_oco(&f, 0.125, &loads, &[0.125; 8], Mutation::None).unwrap();
        let d = dominating_set(&s).unwrap();
        assert_eq!(d.times, vec![4, 8]);
        assert_eq!(d.witness, vec![4, 4, 4, 4, 8, 8, 8, 8]);
        assert!(d.max_ratio <= std::f64::consts::E + 1e-9);
        assert!(d.certificate.passed());
    }

    #[test]
    fn dominating_times_p_one() {
        let cum: Vec<f64> = (1..=6).map(|t| t as f64 / 6.0).collect();
        assert_eq!(dominating_times(&cum, 1.0 / 6.0, 1.0).unwrap(), vec![6]);
    }

    #[test]
    fn dominating_set_requires_complete_run() {
        let (s, _) = run_oco(&square(), 0.125, &[vec![1.0]], &[0.125], Mutation::None).unwrap();
        assert!(matches!(dominating_set(&s), Err(Error::Structural(_))));
    }

    #[test]
    fn last_interval_covers_trailing_zero_gamma_steps() {
        let f = square();
        let mut gammas = vec![0.125; 8];
        gammas.extend([0.0; 3]);
        let loads = vec![vec![1.0]; 11];
        let (s, _) = run_oco(&f, 0.125, &loads, &gammas, Mutation::None).unwrap();
        let d = dominating_set(&s).unwrap();
        assert_eq!(*d.times.last().unwrap(), 11);
        assert!(d.certificate.passed());
    }

    #[test]
    fn no_shift_mutation_breaks_stability() {
        let f = CostFunction::sum_of_powers(vec![1.0, 1.0], 2.0).unwrap();
        let loads = vec![vec![1.0, 0.0]; 8];
        let (s, _) = run_oco(&f, 0.125, &loads, &[0.125; 8], Mutation::NoShift).unwrap();
        assert!(!check_stability(&s).passed());
    }
}
