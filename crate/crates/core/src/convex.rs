//! Nice convex cost functions on the non-negative orthant.
//!
//! A cost function here is convex, differentiable, non-decreasing, has
//! `ψ(0) = 0` and a non-decreasing gradient. Every supported family is
//! separable, `ψ(u) = Σ_i ψ_i(u_i)`, which lets gradients and Fenchel
//! conjugates be computed coordinate by coordinate:
//!
//! ```text
//! SumOfPowers       ψ_i(u) = c_i u^p
//! LinearPlusPower   ψ_i(u) = (ℓ_i u)^p + c_i u
//! SeparableGeneric  ψ_i given as a polynomial or a user callback
//! ```
//!
//! For the power families the conjugate has the closed form
//! `sup_{u≥0} yu − c u^p = (1 − 1/p)(cp)^{−1/(p−1)} y^{p/(p−1)}`.
//! Generic coordinates fall back to a ternary search on the concave map
//! `u ↦ yu − ψ_i(u)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::vecops::dot;

/// Tolerance used by the report-only property checks.
pub const CHECK_TOL: f64 = 1e-9;

const TERNARY_TOL: f64 = 1e-10;
const DOUBLING_LIMIT: f64 = 1e150;

/// A one-dimensional convex, non-decreasing cost with `ψ_i(0) = 0` and a
/// non-decreasing derivative, supplied by the caller.
pub trait ScalarCost: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// One coordinate of a [`Family::SeparableGeneric`] function.
#[derive(Clone, Debug)]
pub enum ScalarTerm {
    /// `Σ_k coeffs[k] · x^(k+1)`, all coefficients non-negative.
    Polynomial(Vec<f64>),
    Custom(Arc<dyn ScalarCost>),
}

impl ScalarTerm {
    fn value(&self, x: f64) -> f64 {
        match self {
            ScalarTerm::Polynomial(c) => c
                .iter()
                .enumerate()
                .map(|(k, ck)| ck * x.powi(k as i32 + 1))
                .sum(),
            ScalarTerm::Custom(f) => f.value(x),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            ScalarTerm::Polynomial(c) => c
                .iter()
                .enumerate()
                .map(|(k, ck)| (k as f64 + 1.0) * ck * x.powi(k as i32))
                .sum(),
            ScalarTerm::Custom(f) => f.derivative(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    SumOfPowers { weights: Vec<f64> },
    LinearPlusPower { scales: Vec<f64>, slopes: Vec<f64> },
    SeparableGeneric { terms: Vec<ScalarTerm> },
}

/// A nice convex cost function with growth of order at most `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostFunction {
    m: usize,
    p: f64,
    family: Family,
}

/// Value of `ψ*(y)`, with the maximizing `u` when it is known in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateValue {
    pub value: f64,
    pub argmax_point: Option<Vec<f64>>,
}

fn check_coeffs(name: &str, v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::InvalidCost(format!(
            "`{name}` has {} entries, expected m = {m}",
            v.len()
        )));
    }
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidCost(format!("`{name}[{i}]` = {x} must be finite and >= 0")));
    }
    Ok(())
}

impl CostFunction {
    /// `ψ(u) = Σ_i c_i u_i^p`.
    pub fn sum_of_powers(weights: Vec<f64>, p: f64) -> Result<Self> {
        let m = weights.len();
        check_coeffs("weights", &weights, m)?;
        Self::build(m, p, Family::SumOfPowers { weights })
    }

    /// `ψ(u) = Σ_i (ℓ_i u_i)^p + Σ_i c_i u_i`.
    pub fn linear_plus_power(scales: Vec<f64>, slopes: Vec<f64>, p: f64) -> Result<Self> {
        let m = scales.len();
        check_coeffs("scales", &scales, m)?;
        check_coeffs("slopes", &slopes, m)?;
        Self::build(m, p, Family::LinearPlusPower { scales, slopes })
    }

    /// Separable function with one term per coordinate. `p` must bound the
    /// growth order of every term; for polynomials that is the top degree.
    pub fn separable(terms: Vec<ScalarTerm>, p: f64) -> Result<Self> {
        let m = terms.len();
        for (i, t) in terms.iter().enumerate() {
            if let ScalarTerm::Polynomial(c) = t {
                check_coeffs(&format!("polynomials[{i}]"), c, c.len())?;
                if c.len() as f64 > p + 1e-12 {
                    return Err(Error::InvalidCost(format!(
                        "polynomial {i} has degree {} > p = {p}",
                        c.len()
                    )));
                }
            }
        }
        Self::build(m, p, Family::SeparableGeneric { terms })
    }

    fn build(m: usize, p: f64, family: Family) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidCost("dimension m must be positive".into()));
        }
        if !p.is_finite() || p < 1.0 {
            return Err(Error::InvalidCost(format!("growth order p = {p} must be >= 1")));
        }
        Ok(Self { m, p, family })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::SumOfPowers { .. } => "sum_of_powers",
            Family::LinearPlusPower { .. } => "linear_plus_power",
            Family::SeparableGeneric { .. } => "separable_generic",
        }
    }

    /// All supported families are separable.
    pub fn is_separable(&self) -> bool {
        true
    }

    /// `ψ(γu) = γ^p ψ(u)` for all `γ ≥ 0`.
    pub fn is_homogeneous(&self) -> bool {
        match &self.family {
            Family::SumOfPowers { .. } => true,
            Family::LinearPlusPower { slopes, .. } => slopes.iter().all(|c| *c == 0.0),
            Family::SeparableGeneric { terms } => terms.iter().all(|t| match t {
                ScalarTerm::Polynomial(c) => c
                    .iter()
                    .enumerate()
                    .all(|(k, ck)| *ck == 0.0 || (k as f64 + 1.0) == self.p),
                ScalarTerm::Custom(_) => false,
            }),
        }
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: u.len() });
        }
        if let Some((index, &value)) = u.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
            return Err(Error::NegativeCoordinate { index, value });
        }
        Ok(())
    }

    fn coord_value(&self, i: usize, x: f64) -> f64 {
        match &self.family {
            Family::SumOfPowers { weights } => weights[i] * x.powf(self.p),
            Family::LinearPlusPower { scales, slopes } => {
                (scales[i] * x).powf(self.p) + slopes[i] * x
            }
            Family::SeparableGeneric { terms } => terms[i].value(x),
        }
    }

    fn coord_derivative(&self, i: usize, x: f64) -> f64 {
        let p = self.p;
        match &self.family {
            Family::SumOfPowers { weights } => p * weights[i] * x.powf(p - 1.0),
            Family::LinearPlusPower { scales, slopes } => {
                p * scales[i].powf(p) * x.powf(p - 1.0) + slopes[i]
            }
            Family::SeparableGeneric { terms } => terms[i].derivative(x),
        }
    }

    /// `ψ(u)`.
    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: &[f64]) -> f64 {
        u.iter().enumerate().map(|(i, &x)| self.coord_value(i, x)).sum()
    }

    /// `∇ψ(u)`.
    pub fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_point(u)?;
        Ok(self.grad_unchecked(u))
    }

    pub(crate) fn grad_unchecked(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, &x)| self.coord_derivative(i, x)).collect()
    }

    /// `ψ(p𝟙)`, the additive loss appearing in every guarantee.
    pub fn value_at_p_ones(&self) -> f64 {
        self.eval_unchecked(&vec![self.p; self.m])
    }

    /// Fenchel conjugate `ψ*(y) = sup_{u ≥ 0} ⟨y,u⟩ − ψ(u)` for `y ≥ 0`.
    pub fn conjugate(&self, y: &[f64]) -> Result<ConjugateValue> {
        self.check_point(y)?;
        let mut value = 0.0;
        let mut argmax = Some(Vec::with_capacity(self.m));
        for (i, &yi) in y.iter().enumerate() {
            let (v, u) = self.coord_conjugate(i, yi);
            value += v;
            match (u, argmax.as_mut()) {
                (Some(u), Some(pts)) => pts.push(u),
                _ => argmax = None,
            }
        }
        Ok(ConjugateValue { value, argmax_point: argmax })
    }

    /// `ψ*(y)` without argument validation.
    pub(crate) fn conj_unchecked(&self, y: &[f64]) -> f64 {
        y.iter().enumerate().map(|(i, &yi)| self.coord_conjugate(i, yi).0).sum()
    }

    fn coord_conjugate(&self, i: usize, y: f64) -> (f64, Option<f64>) {
        match &self.family {
            Family::SumOfPowers { weights } => power_conjugate(weights[i], self.p, y),
            Family::LinearPlusPower { scales, slopes } => {
                // one-sided at y = slope: the shifted power formula is continuous there
                let shifted = y - slopes[i];
                if shifted <= 0.0 {
                    (0.0, Some(0.0))
                } else {
                    power_conjugate(scales[i].powf(self.p), self.p, shifted)
                }
            }
            Family::SeparableGeneric { terms } => {
                (scalar_conjugate_numeric(&terms[i], y), None)
            }
        }
    }

    /// `ψ(u) + ψ*(y) − ⟨y,u⟩`, non-negative by the Fenchel inequality.
    pub fn fenchel_gap(&self, u: &[f64], y: &[f64]) -> Result<f64> {
        let psi = self.eval(u)?;
        let conj = self.conjugate(y)?.value;
        Ok(psi + conj - dot(u, y))
    }

    /// Splits `ψ = ψ_lin + ψ_high` into the gradient of the linear part and
    /// the remaining higher-order part. `None` when the family gives no
    /// such split (custom callbacks).
    pub fn linear_split(&self) -> Option<(Vec<f64>, CostFunction)> {
        match &self.family {
            Family::SumOfPowers { .. } => Some((vec![0.0; self.m], self.clone())),
            Family::LinearPlusPower { scales, slopes } => {
                let weights = scales.iter().map(|l| l.powf(self.p)).collect();
                let high = CostFunction { m: self.m, p: self.p, family: Family::SumOfPowers { weights } };
                Some((slopes.clone(), high))
            }
            Family::SeparableGeneric { terms } => {
                let mut lin = Vec::with_capacity(self.m);
                let mut high = Vec::with_capacity(self.m);
                for t in terms {
                    match t {
                        ScalarTerm::Polynomial(c) => {
                            lin.push(c.first().copied().unwrap_or(0.0));
                            let mut rest = c.clone();
                            if let Some(first) = rest.first_mut() {
                                *first = 0.0;
                            }
                            high.push(ScalarTerm::Polynomial(rest));
                        }
                        ScalarTerm::Custom(_) => return None,
                    }
                }
                let high = CostFunction { m: self.m, p: self.p, family: Family::SeparableGeneric { terms: high } };
                Some((lin, high))
            }
        }
    }
}

impl PartialEq for ScalarTerm {
    /// Custom callbacks compare by identity.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ScalarTerm::Polynomial(a), ScalarTerm::Polynomial(b)) => a == b,
            (ScalarTerm::Custom(a), ScalarTerm::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

fn power_conjugate(c: f64, p: f64, y: f64) -> (f64, Option<f64>) {
    if y <= 0.0 {
        return (0.0, Some(0.0));
    }
    if p == 1.0 {
        return if y <= c { (0.0, Some(0.0)) } else { (f64::INFINITY, None) };
    }
    if c == 0.0 {
        return (f64::INFINITY, None);
    }
    let q = p / (p - 1.0);
    let value = (1.0 - 1.0 / p) * (c * p).powf(-1.0 / (p - 1.0)) * y.powf(q);
    let u = (y / (c * p)).powf(1.0 / (p - 1.0));
    (value, Some(u))
}

/// `sup_{u ≥ 0} yu − ψ_i(u)` by ternary search over `[0, U]`, where `U` is
/// found by doubling from 1 until the derivative exceeds `y`.
fn scalar_conjugate_numeric(term: &ScalarTerm, y: f64) -> f64 {
    if y <= 0.0 || term.derivative(0.0) >= y {
        return 0.0;
    }
    let mut hi = 1.0;
    while term.derivative(hi) <= y {
        hi *= 2.0;
        if hi > DOUBLING_LIMIT {
            return f64::INFINITY;
        }
    }
    let g = |u: f64| y * u - term.value(u);
    let mut lo = 0.0;
    let width_tol = TERNARY_TOL * hi.max(1.0);
    for _ in 0..400 {
        if hi - lo <= width_tol {
            break;
        }
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1) < g(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    g(0.5 * (lo + hi)).max(0.0)
}

/// One sample for [`check_growth_lemma`]: a point `u`, a dual point `y`,
/// a stretch `γ ≥ 1` and a shrink `δ ∈ (0, 1]`.
#[derive(Clone, Debug)]
pub struct GrowthSample {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
}

/// Worst normalized violation of each growth claim; `0` means it held
/// everywhere.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GrowthReport {
    /// `ψ(γu) ≤ γ^p ψ(u)`
    pub stretch: f64,
    /// `ψ*(δy) ≤ δ^{p/(p−1)} ψ*(y)`
    pub conjugate_shrink: f64,
    /// `ψ*(∇ψ(u)) ≤ p ψ(u)`
    pub conjugate_of_gradient: f64,
    /// `⟨∇ψ(u), u⟩ ≤ p ψ(u)`
    pub gradient_inner: f64,
    pub samples: usize,
}

impl GrowthReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.stretch <= tol
            && self.conjugate_shrink <= tol
            && self.conjugate_of_gradient <= tol
            && self.gradient_inner <= tol
    }
}

/// Normalized violation of `lhs ≤ rhs`: positive when violated.
pub(crate) fn le_violation(lhs: f64, rhs: f64) -> f64 {
    if lhs <= rhs {
        return 0.0;
    }
    (lhs - rhs) / rhs.abs().max(1.0)
}

pub fn check_growth_lemma(f: &CostFunction, samples: &[GrowthSample]) -> Result<GrowthReport> {
    let p = f.p();
    let mut r = GrowthReport { samples: samples.len(), ..Default::default() };
    for s in samples {
        let psi_u = f.eval(&s.u)?;
        let stretched: Vec<f64> = s.u.iter().map(|x| x * s.gamma).collect();
        r.stretch = r.stretch.max(le_violation(f.eval(&stretched)?, s.gamma.powf(p) * psi_u));

        if p > 1.0 {
            let shrunk: Vec<f64> = s.y.iter().map(|x| x * s.delta).collect();
            let rhs = s.delta.powf(p / (p - 1.0)) * f.conjugate(&s.y)?.value;
            r.conjugate_shrink = r.conjugate_shrink.max(le_violation(f.conjugate(&shrunk)?.value, rhs));
        }

        let g = f.grad(&s.u)?;
        r.conjugate_of_gradient = r
            .conjugate_of_gradient
            .max(le_violation(f.conjugate(&g)?.value, p * psi_u));
        r.gradient_inner = r.gradient_inner.max(le_violation(dot(&g, &s.u), p * psi_u));
    }
    Ok(r)
}

/// `ψ(u+v) ≥ ψ(u) + ψ(v)` and `ψ(u+v) ≤ 2^{p−1}(ψ(u) + ψ(v))`, both within
/// [`CHECK_TOL`].
pub fn check_superadditivity(f: &CostFunction, u: &[f64], v: &[f64]) -> Result<bool> {
    let sum: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    let joint = f.eval(&sum)?;
    let parts = f.eval(u)? + f.eval(v)?;
    let lower = joint >= parts - CHECK_TOL;
    let upper = joint <= 2f64.powf(f.p() - 1.0) * parts + CHECK_TOL * parts.max(1.0);
    Ok(lower && upper)
}

// ---------------------------------------------------------------------------
// JSON descriptor

#[derive(Serialize, Deserialize)]
struct PowerCoeffs {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LinearPowerCoeffs {
    scales: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolynomialCoeffs {
    polynomials: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum CostSpec {
    SumOfPowers { m: usize, p: f64, coeffs: PowerCoeffs },
    LinearPlusPower { m: usize, p: f64, coeffs: LinearPowerCoeffs },
    SeparableGeneric { m: usize, p: f64, coeffs: PolynomialCoeffs },
}

impl CostFunction {
    fn to_spec(&self) -> std::result::Result<CostSpec, String> {
        let (m, p) = (self.m, self.p);
        Ok(match &self.family {
            Family::SumOfPowers { weights } => {
                CostSpec::SumOfPowers { m, p, coeffs: PowerCoeffs { weights: weights.clone() } }
            }
            Family::LinearPlusPower { scales, slopes } => CostSpec::LinearPlusPower {
                m,
                p,
                coeffs: LinearPowerCoeffs { scales: scales.clone(), slopes: slopes.clone() },
            },
            Family::SeparableGeneric { terms } => {
                let polynomials = terms
                    .iter()
                    .map(|t| match t {
                        ScalarTerm::Polynomial(c) => Ok(c.clone()),
                        ScalarTerm::Custom(_) => Err("custom scalar terms cannot be serialized".to_string()),
                    })
                    .collect::<std::result::Result<_, _>>()?;
                CostSpec::SeparableGeneric { m, p, coeffs: PolynomialCoeffs { polynomials } }
            }
        })
    }

    fn from_spec(spec: CostSpec) -> Result<Self> {
        let (f, m) = match spec {
            CostSpec::SumOfPowers { m, p, coeffs } => (Self::sum_of_powers(coeffs.weights, p)?, m),
            CostSpec::LinearPlusPower { m, p, coeffs } => {
                (Self::linear_plus_power(coeffs.scales, coeffs.slopes, p)?, m)
            }
            CostSpec::SeparableGeneric { m, p, coeffs } => (
                Self::separable(coeffs.polynomials.into_iter().map(ScalarTerm::Polynomial).collect(), p)?,
                m,
            ),
        };
        if f.m != m {
            return Err(Error::InvalidCost(format!("m = {m} but coefficients describe {} coordinates", f.m)));
        }
        Ok(f)
    }
}

impl Serialize for CostFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().map_err(serde::ser::Error::custom)?.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CostFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let spec = CostSpec::deserialize(deserializer)?;
        CostFunction::from_spec(spec).map_err(serde::de::Error::custom)
    }
}
