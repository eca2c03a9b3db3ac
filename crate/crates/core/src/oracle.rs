//! Offline optima used as ground truth.
//!
//! * `OPT_Adv = min ψ(Σ_{t∈Adv} v_t)` by exhaustive enumeration;
//! * `OPT_Stoch = min_{v*} E ψ(Σ_{t∈Stoch} v*(V_t))` over selectors
//!   `v*: support → option`, with the expectation computed exactly from the
//!   multinomial distribution of draw counts;
//! * the welfare optimum over a fixed request sequence by projected gradient
//!   ascent, and over a selector `x*: support → [0,1]` by grid sweeps plus
//!   local refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::convex::CostFunction;
use crate::error::{Error, Result};
use crate::instance::Distribution;
use crate::ocp::FeasibleSet;
use crate::vecops::{add_assign, dot, scaled};
use crate::welfare::Request;

pub const ADV_GUARD: f64 = 1e7;
pub const SELECTOR_GUARD: f64 = 1e5;
pub const MULTISET_GUARD: f64 = 1e6;
/// Selectors × multisets beyond which the exact stochastic oracle switches
/// to Monte Carlo.
pub const WORK_GUARD: f64 = 1e8;
pub const WELFARE_GUARD: usize = 64;
const MONTE_CARLO_SAMPLES: usize = 100_000;
const MONTE_CARLO_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Enumeration,
    MonteCarlo,
    ProjectedGradient,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptReport {
    pub value: f64,
    pub method: Method,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    /// Option index per adversarial time.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<usize>,
    /// Option index per support element.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub selector: Vec<usize>,
    /// Welfare fractions, per time or per support element.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fractions: Vec<f64>,
    /// `vOPT_Adv`, or `E vOPT_Stoch` for stochastic reports.
    pub load: Vec<f64>,
    /// `ψ(load)`; for stochastic reports this is `ψ(E vOPT_Stoch)`.
    pub value_at_load: f64,
    pub converged: bool,
}

impl OptReport {
    fn trivial(f: &CostFunction, method: Method) -> Self {
        Self {
            value: 0.0,
            method,
            exact: true,
            std_error: None,
            choices: Vec::new(),
            selector: Vec::new(),
            fractions: Vec::new(),
            load: vec![0.0; f.dim()],
            value_at_load: 0.0,
            converged: true,
        }
    }
}

fn product_size(sizes: impl Iterator<Item = usize>) -> f64 {
    sizes.map(|k| k as f64).product()
}

fn check_dims(sets: &[FeasibleSet], m: usize) -> Result<()> {
    for s in sets {
        if s.options.is_empty() {
            return Err(Error::Structural("feasible set with no options".into()));
        }
        if let Some(v) = s.options.iter().find(|v| v.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, got: v.len() });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Adversarial OCP

struct AdvSearch<'a> {
    sets: &'a [FeasibleSet],
    f: &'a CostFunction,
    best: f64,
    best_choice: Vec<usize>,
    stack: Vec<usize>,
}

impl AdvSearch<'_> {
    fn dfs(&mut self, depth: usize, load: &[f64]) {
        if depth == self.sets.len() {
            let v = self.f.eval_unchecked(load);
            // strict improvement keeps the lexicographically first argmin
            if v < self.best {
                self.best = v;
                self.best_choice = self.stack.clone();
            }
            return;
        }
        let mut next = load.to_vec();
        for (k, opt) in self.sets[depth].options.iter().enumerate() {
            next.copy_from_slice(load);
            add_assign(&mut next, opt);
            self.stack.push(k);
            self.dfs(depth + 1, &next);
            self.stack.pop();
        }
    }
}

/// `min ψ(Σ_t v_t)` over every combination of choices.
pub fn opt_adv_ocp(sets: &[FeasibleSet], f: &CostFunction) -> Result<OptReport> {
    let m = f.dim();
    check_dims(sets, m)?;
    if sets.is_empty() {
        return Ok(OptReport::trivial(f, Method::Enumeration));
    }
    let combos = product_size(sets.iter().map(|s| s.options.len()));
    if combos > ADV_GUARD {
        return Err(Error::SizeGuard(format!(
            "{combos:e} adversarial choice combinations exceed the limit of {ADV_GUARD:e}"
        )));
    }
    let branches: Vec<(f64, Vec<usize>)> = sets[0]
        .options
        .par_iter()
        .enumerate()
        .map(|(k, first)| {
            let mut s = AdvSearch { sets, f, best: f64::INFINITY, best_choice: Vec::new(), stack: vec![k] };
            s.dfs(1, first);
            (s.best, s.best_choice)
        })
        .collect();
    // branches are in index order, so the first strict minimum is the lexicographic one
    let (value, choices) = branches
        .into_iter()
        .fold((f64::INFINITY, Vec::new()), |acc, b| if b.0 < acc.0 { b } else { acc });
    let mut load = vec![0.0; m];
    for (s, &k) in sets.iter().zip(&choices) {
        add_assign(&mut load, &s.options[k]);
    }
    Ok(OptReport {
        value,
        method: Method::Enumeration,
        exact: true,
        std_error: None,
        choices,
        selector: Vec::new(),
        fractions: Vec::new(),
        value_at_load: f.eval_unchecked(&load),
        load,
        converged: true,
    })
}

// ---------------------------------------------------------------------------
// Draw-count multisets

/// All vectors of `k` non-negative counts summing to `total`, with their
/// multinomial probabilities.
pub struct CountTable {
    pub counts: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
}

/// `C(total + k − 1, k − 1)`
pub fn multiset_count(total: usize, k: usize) -> f64 {
    if k == 0 {
        return if total == 0 { 1.0 } else { 0.0 };
    }
    let mut c = 1.0;
    for i in 1..k {
        c = c * (total + i) as f64 / i as f64;
    }
    c.round()
}

impl CountTable {
    pub fn exact(total: usize, probs: &[f64]) -> Self {
        let k = probs.len();
        let ln_fact: Vec<f64> = std::iter::once(0.0)
            .chain((1..=total).scan(0.0, |acc, i| {
                *acc += (i as f64).ln();
                Some(*acc)
            }))
            .collect();
        let mut counts = Vec::new();
        let mut weights = Vec::new();
        let mut cur = vec![0u32; k];
        fn rec(
            j: usize,
            left: usize,
            cur: &mut Vec<u32>,
            probs: &[f64],
            ln_fact: &[f64],
            counts: &mut Vec<Vec<u32>>,
            weights: &mut Vec<f64>,
        ) {
            let k = probs.len();
            if j == k - 1 {
                cur[j] = left as u32;
                let mut lw = ln_fact[ln_fact.len() - 1];
                for (i, &c) in cur.iter().enumerate() {
                    if c > 0 {
                        if probs[i] == 0.0 {
                            return;
                        }
                        lw += c as f64 * probs[i].ln() - ln_fact[c as usize];
                    }
                }
                counts.push(cur.clone());
                weights.push(lw.exp());
                return;
            }
            for c in 0..=left {
                cur[j] = c as u32;
                rec(j + 1, left - c, cur, probs, ln_fact, counts, weights);
            }
            cur[j] = 0;
        }
        if k > 0 {
            rec(0, total, &mut cur, probs, &ln_fact, &mut counts, &mut weights);
        }
        Self { counts, weights }
    }

    /// `samples` equally weighted draws of the count vector.
    pub fn sampled<T>(total: usize, dist: &Distribution<T>, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(MONTE_CARLO_STREAM);
        let k = dist.probs.len();
        let counts = (0..samples)
            .map(|_| {
                let mut c = vec![0u32; k];
                for _ in 0..total {
                    c[dist.index_for(rng.gen::<f64>())] += 1;
                }
                c
            })
            .collect();
        Self { counts, weights: vec![1.0 / samples as f64; samples] }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Stochastic OCP

fn decode_selector(mut idx: usize, radices: &[usize]) -> Vec<usize> {
    let mut sel = vec![0; radices.len()];
    for j in (0..radices.len()).rev() {
        sel[j] = idx % radices[j];
        idx /= radices[j];
    }
    sel
}

/// `(E ψ(Σ_j N_j v_j), sample variance of ψ)` under the table's weights.
fn selector_moments(table: &CountTable, chosen: &[&[f64]], f: &CostFunction) -> (f64, f64) {
    let m = f.dim();
    let mut load = vec![0.0; m];
    let mut mean = 0.0;
    let mut second = 0.0;
    for (c, w) in table.counts.iter().zip(&table.weights) {
        load.iter_mut().for_each(|x| *x = 0.0);
        for (j, &cj) in c.iter().enumerate() {
            if cj > 0 {
                for (l, x) in load.iter_mut().zip(chosen[j]) {
                    *l += cj as f64 * x;
                }
            }
        }
        let v = f.eval_unchecked(&load);
        mean += w * v;
        second += w * v * v;
    }
    (mean, (second - mean * mean).max(0.0))
}

fn expected_load(support: &[FeasibleSet], probs: &[f64], selector: &[usize], s: usize, m: usize) -> Vec<f64> {
    let mut load = vec![0.0; m];
    for ((set, p), &k) in support.iter().zip(probs).zip(selector) {
        add_assign(&mut load, &scaled(&set.options[k], s as f64 * p));
    }
    load
}

/// Best selector for `|Stoch| = s` stochastic steps.
pub fn opt_stoch_ocp(dist: &Distribution<FeasibleSet>, s: usize, f: &CostFunction, seed: u64) -> Result<OptReport> {
    let m = f.dim();
    if s == 0 {
        return Ok(OptReport::trivial(f, Method::Enumeration));
    }
    if dist.support.is_empty() {
        return Err(Error::Structural("stochastic steps with an empty support".into()));
    }
    check_dims(&dist.support, m)?;
    let radices: Vec<usize> = dist.support.iter().map(|x| x.options.len()).collect();
    let selectors = product_size(radices.iter().copied());
    let multisets = multiset_count(s, radices.len());
    let exact = selectors <= SELECTOR_GUARD && multisets <= MULTISET_GUARD && selectors * multisets <= WORK_GUARD;

    let (selector, value, std_error) = if exact {
        let table = CountTable::exact(s, &dist.probs);
        let (sel, value) = best_selector(dist, &radices, selectors as usize, &table, f);
        (sel, value, None)
    } else {
        let samples = MONTE_CARLO_SAMPLES.min((WORK_GUARD / selectors.min(SELECTOR_GUARD)).max(1000.0) as usize);
        let table = CountTable::sampled(s, dist, samples, seed);
        let (sel, _) = if selectors <= SELECTOR_GUARD {
            best_selector(dist, &radices, selectors as usize, &table, f)
        } else {
            local_search_selector(dist, &radices, &table, f)
        };
        // re-estimate on independent draws so the reported value is unbiased
        let fresh = CountTable::sampled(s, dist, samples, seed.wrapping_add(1));
        let chosen: Vec<&[f64]> = dist.support.iter().zip(&sel).map(|(x, &k)| x.options[k].as_slice()).collect();
        let (mean, var) = selector_moments(&fresh, &chosen, f);
        (sel, mean, Some((var / samples as f64).sqrt()))
    };
    let load = expected_load(&dist.support, &dist.probs, &selector, s, m);
    Ok(OptReport {
        value,
        method: if exact { Method::Enumeration } else { Method::MonteCarlo },
        exact,
        std_error,
        choices: Vec::new(),
        selector,
        fractions: Vec::new(),
        value_at_load: f.eval_unchecked(&load),
        load,
        converged: true,
    })
}

fn best_selector(
    dist: &Distribution<FeasibleSet>,
    radices: &[usize],
    count: usize,
    table: &CountTable,
    f: &CostFunction,
) -> (Vec<usize>, f64) {
    let (idx, value) = (0..count)
        .into_par_iter()
        .map(|i| {
            let sel = decode_selector(i, radices);
            let chosen: Vec<&[f64]> = dist.support.iter().zip(&sel).map(|(x, &k)| x.options[k].as_slice()).collect();
            (i, selector_moments(table, &chosen, f).0)
        })
        .reduce(|| (usize::MAX, f64::INFINITY), |a, b| {
            if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        });
    (decode_selector(idx, radices), value)
}

/// Coordinate descent over selectors, used only past the enumeration guard.
fn local_search_selector(
    dist: &Distribution<FeasibleSet>,
    radices: &[usize],
    table: &CountTable,
    f: &CostFunction,
) -> (Vec<usize>, f64) {
    let eval = |sel: &[usize]| {
        let chosen: Vec<&[f64]> = dist.support.iter().zip(sel).map(|(x, &k)| x.options[k].as_slice()).collect();
        selector_moments(table, &chosen, f).0
    };
    let mut sel = vec![0; radices.len()];
    let mut best = eval(&sel);
    loop {
        let mut improved = false;
        for j in 0..radices.len() {
            for k in 0..radices[j] {
                let old = sel[j];
                sel[j] = k;
                let v = eval(&sel);
                if v < best {
                    best = v;
                    improved = true;
                } else {
                    sel[j] = old;
                }
            }
        }
        if !improved {
            return (sel, best);
        }
    }
}

// ---------------------------------------------------------------------------
// Welfare over a fixed sequence

const PG_TOL: f64 = 1e-8;
const PG_MAX_ITERS: usize = 100_000;

fn welfare_objective(reqs: &[Request], x: &[f64], f: &CostFunction) -> (f64, Vec<f64>) {
    let mut load = vec![0.0; f.dim()];
    let mut reward = 0.0;
    for (r, xi) in reqs.iter().zip(x) {
        reward += r.c * xi;
        add_assign(&mut load, &scaled(&r.a, *xi));
    }
    (reward - f.eval_unchecked(&load), load)
}

fn welfare_gradient(reqs: &[Request], load: &[f64], f: &CostFunction) -> Vec<f64> {
    let g = f.grad_unchecked(load);
    reqs.iter().map(|r| r.c - dot(&g, &r.a)).collect()
}

fn project(x: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(xi, gi)| (xi + step * gi).clamp(0.0, 1.0)).collect()
}

/// `max_{x∈[0,1]^n} Σ_t c_t x_t − ψ(Σ_t a_t x_t)` by projected gradient
/// ascent with backtracking.
pub fn opt_welfare(reqs: &[Request], f: &CostFunction) -> Result<OptReport> {
    let n = reqs.len();
    if n > WELFARE_GUARD {
        return Err(Error::SizeGuard(format!("{n} requests exceed the welfare oracle limit of {WELFARE_GUARD}")));
    }
    if let Some(r) = reqs.iter().find(|r| r.a.len() != f.dim()) {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: r.a.len() });
    }
    let mut x = vec![0.0; n];
    let (mut val, mut load) = welfare_objective(reqs, &x, f);
    let mut step = 1.0;
    let mut converged = n == 0;
    for _ in 0..PG_MAX_ITERS {
        if converged {
            break;
        }
        let g = welfare_gradient(reqs, &load, f);
        let mapping = project(&x, &g, 1.0);
        let norm = mapping.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if norm <= PG_TOL {
            converged = true;
            break;
        }
        loop {
            let cand = project(&x, &g, step);
            let d: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
            let (cv, cl) = welfare_objective(reqs, &cand, f);
            // local Lipschitz test on gradients; value differences cancel near the optimum
            let g2 = welfare_gradient(reqs, &cl, f);
            let curvature: f64 = g.iter().zip(&g2).zip(&d).map(|((a, b), di)| (a - b) * di).sum();
            if curvature <= dot(&d, &d) / step || step < 1e-20 {
                x = cand;
                val = cv;
                load = cl;
                break;
            }
            step *= 0.5;
        }
        step *= 2.0;
    }
    Ok(OptReport {
        value: val,
        method: Method::ProjectedGradient,
        exact: converged,
        std_error: None,
        choices: Vec::new(),
        selector: Vec::new(),
        value_at_load: f.eval_unchecked(&load),
        load,
        fractions: x,
        converged,
    })
}

// ---------------------------------------------------------------------------
// Welfare over a selector

const GRID_POINTS: usize = 101;
const MAX_SWEEPS: usize = 200;

struct SelectorObjective<'a> {
    dist: &'a Distribution<Request>,
    table: &'a CountTable,
    f: &'a CostFunction,
    s: usize,
}

impl SelectorObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let m = self.f.dim();
        let reward: f64 = self.dist.support.iter().zip(&self.dist.probs).zip(x).map(|((r, p), xi)| r.c * p * xi).sum();
        let mut load = vec![0.0; m];
        let mut cost = 0.0;
        for (c, w) in self.table.counts.iter().zip(&self.table.weights) {
            load.iter_mut().for_each(|l| *l = 0.0);
            for (j, &cj) in c.iter().enumerate() {
                if cj > 0 && x[j] > 0.0 {
                    for (l, a) in load.iter_mut().zip(&self.dist.support[j].a) {
                        *l += cj as f64 * a * x[j];
                    }
                }
            }
            cost += w * self.f.eval_unchecked(&load);
        }
        self.s as f64 * reward - cost
    }

    fn value_and_variance(&self, x: &[f64]) -> (f64, f64) {
        let m = self.f.dim();
        let mut load = vec![0.0; m];
        let mut mean = 0.0;
        let mut second = 0.0;
        for (c, w) in self.table.counts.iter().zip(&self.table.weights) {
            load.iter_mut().for_each(|l| *l = 0.0);
            let mut reward = 0.0;
            for (j, &cj) in c.iter().enumerate() {
                reward += cj as f64 * self.dist.support[j].c * x[j];
                for (l, a) in load.iter_mut().zip(&self.dist.support[j].a) {
                    *l += cj as f64 * a * x[j];
                }
            }
            let v = reward - self.f.eval_unchecked(&load);
            mean += w * v;
            second += w * v * v;
        }
        (mean, (second - mean * mean).max(0.0))
    }
}

/// Best fractional selector `x*: support → [0,1]` for `s` stochastic steps.
pub fn opt_stoch_welfare(dist: &Distribution<Request>, s: usize, f: &CostFunction, seed: u64) -> Result<OptReport> {
    let k = dist.support.len();
    if s == 0 {
        let mut r = OptReport::trivial(f, Method::Grid);
        r.fractions = vec![0.0; k];
        return Ok(r);
    }
    if k == 0 {
        return Err(Error::Structural("stochastic steps with an empty support".into()));
    }
    if let Some(r) = dist.support.iter().find(|r| r.a.len() != f.dim()) {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: r.a.len() });
    }
    let multisets = multiset_count(s, k);
    // one sweep costs about (grid + refinement) evaluations per coordinate
    let work = multisets * (k * (GRID_POINTS + 80)) as f64;
    let exact = multisets <= MULTISET_GUARD && work <= WORK_GUARD;
    let table = if exact {
        CountTable::exact(s, &dist.probs)
    } else {
        let samples = ((WORK_GUARD / (k * (GRID_POINTS + 80)) as f64) as usize).clamp(1000, 20_000);
        CountTable::sampled(s, dist, samples, seed)
    };
    let obj = SelectorObjective { dist, table: &table, f, s };

    let mut x = vec![0.0; k];
    let mut best = obj.value(&x);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut moved: f64 = 0.0;
        for j in 0..k {
            let old = x[j];
            let mut eval_at = |v: f64| {
                x[j] = v;
                obj.value(&x)
            };
            let mut arg = old;
            let mut top = eval_at(old);
            for g in 0..GRID_POINTS {
                let v = g as f64 / (GRID_POINTS - 1) as f64;
                let val = eval_at(v);
                if val > top {
                    top = val;
                    arg = v;
                }
            }
            // concave in x_j: ternary search around the grid winner
            let (mut lo, mut hi) = ((arg - 0.01).max(0.0), (arg + 0.01).min(1.0));
            while hi - lo > 1e-12 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if eval_at(m1) < eval_at(m2) {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            let mid = 0.5 * (lo + hi);
            let vm = eval_at(mid);
            if vm > top {
                top = vm;
                arg = mid;
            }
            x[j] = arg;
            moved = moved.max((arg - old).abs());
            best = top;
        }
        if moved <= 1e-10 {
            converged = true;
            break;
        }
    }
    let (value, std_error) = if exact {
        (best, None)
    } else {
        let fresh = CountTable::sampled(s, dist, table.len(), seed.wrapping_add(1));
        let obj2 = SelectorObjective { dist, table: &fresh, f, s };
        let (mean, var) = obj2.value_and_variance(&x);
        (mean, Some((var / fresh.len() as f64).sqrt()))
    };
    let mut load = vec![0.0; f.dim()];
    for ((r, p), xi) in dist.support.iter().zip(&dist.probs).zip(&x) {
        add_assign(&mut load, &scaled(&r.a, s as f64 * p * xi));
    }
    Ok(OptReport {
        value,
        method: if exact { Method::Grid } else { Method::MonteCarlo },
        exact,
        std_error,
        choices: Vec::new(),
        selector: Vec::new(),
        fractions: x,
        value_at_load: f.eval_unchecked(&load),
        load,
        converged,
    })
}
