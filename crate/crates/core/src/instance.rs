//! Mixed stochastic/adversarial instances: model, seeded sampling, the
//! versioned JSON format and a random generator.
//!
//! Every time step of an instance is either adversarial, with its data fixed
//! in the file, or stochastic, drawn i.i.d. from a finite-support
//! distribution. The labels are known to oracles and checks, never to the
//! online algorithms.

use std::fmt::Debug;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convex::CostFunction;
use crate::error::{Error, Result};
use crate::ocp::FeasibleSet;
use crate::welfare::Request;

pub const SCHEMA_VERSION: &str = "v1";

/// Words of the ChaCha keystream reserved per time step.
const WORDS_PER_STEP: u128 = 16;
/// Stream reserved for instance generation, disjoint from replications.
const GENERATION_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Adv,
    Stoch,
}

/// Data carried by one time step of an instance.
pub trait Payload: Clone + Debug + PartialEq + Serialize + DeserializeOwned + Send + Sync {
    /// Value of the `problem` field in the file.
    const PROBLEM: &'static str;

    /// Checks the type invariants; `path` names the offending JSON location.
    fn validate(&self, m: usize, path: &str) -> Result<()>;
}

/// One timeline entry: `{"kind":"adv","data":...}` or `{"kind":"stoch"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum Slot<T> {
    Adv(T),
    Stoch,
}

impl<T> Slot<T> {
    pub fn origin(&self) -> Origin {
        match self {
            Slot::Adv(_) => Origin::Adv,
            Slot::Stoch => Origin::Stoch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution<T> {
    pub support: Vec<T>,
    pub probs: Vec<f64>,
}

impl<T> Default for Distribution<T> {
    fn default() -> Self {
        Self { support: Vec::new(), probs: Vec::new() }
    }
}

impl<T> Distribution<T> {
    /// Index drawn by inverse CDF from a uniform `u ∈ [0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // rounding left the total a hair below one: take the last atom with mass
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: DeserializeOwned"))]
pub struct MixedInstance<T> {
    pub n: usize,
    pub m: usize,
    pub cost: CostFunction,
    pub timeline: Vec<Slot<T>>,
    #[serde(default = "Distribution::default")]
    pub distribution: Distribution<T>,
    pub seed: u64,
}

/// Serialized form with the version and problem tags in front.
#[derive(Serialize)]
struct Envelope<'a, T> {
    version: &'static str,
    problem: &'static str,
    #[serde(flatten)]
    inner: &'a MixedInstance<T>,
}

/// One realized input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization<T> {
    pub items: Vec<T>,
    pub origins: Vec<Origin>,
    /// Support index drawn at each stochastic step.
    pub draws: Vec<Option<usize>>,
}

impl<T> Realization<T> {
    pub fn stoch_count(&self) -> usize {
        self.origins.iter().filter(|o| **o == Origin::Stoch).count()
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

impl<T: Payload> MixedInstance<T> {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(schema("m", "must be positive"));
        }
        if self.cost.dim() != self.m {
            return Err(schema("cost.m", format!("is {}, expected m = {}", self.cost.dim(), self.m)));
        }
        if self.timeline.len() != self.n {
            return Err(schema(
                "timeline",
                format!("has {} entries, expected n = {}", self.timeline.len(), self.n),
            ));
        }
        for (t, slot) in self.timeline.iter().enumerate() {
            if let Slot::Adv(d) = slot {
                d.validate(self.m, &format!("timeline[{t}].data"))?;
            }
        }
        let d = &self.distribution;
        if d.support.len() != d.probs.len() {
            return Err(schema(
                "distribution.probs",
                format!("has {} entries but support has {}", d.probs.len(), d.support.len()),
            ));
        }
        for (j, s) in d.support.iter().enumerate() {
            s.validate(self.m, &format!("distribution.support[{j}]"))?;
        }
        if let Some((j, p)) = d.probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(schema(format!("distribution.probs[{j}]"), format!("{p} is not a probability")));
        }
        let has_stoch = self.timeline.iter().any(|s| matches!(s, Slot::Stoch));
        if has_stoch {
            if d.support.is_empty() {
                return Err(schema("distribution.support", "must be nonempty when stoch entries exist"));
            }
            let total: f64 = d.probs.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(schema("distribution.probs", format!("sum to {total}, expected 1")));
            }
        }
        Ok(())
    }

    pub fn origins(&self) -> Vec<Origin> {
        self.timeline.iter().map(Slot::origin).collect()
    }

    pub fn stoch_count(&self) -> usize {
        self.timeline.iter().filter(|s| matches!(s, Slot::Stoch)).count()
    }

    /// Adversarial data in time order, with their 0-based times.
    pub fn adv_items(&self) -> Vec<(usize, &T)> {
        self.timeline
            .iter()
            .enumerate()
            .filter_map(|(t, s)| match s {
                Slot::Adv(d) => Some((t, d)),
                Slot::Stoch => None,
            })
            .collect()
    }

    /// Draws the stochastic steps for one replication. The draw at time `t`
    /// depends only on `(seed, replication, t)`.
    pub fn sample_realization(&self, replication: u64) -> Realization<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication);
        let mut items = Vec::with_capacity(self.n);
        let mut draws = Vec::with_capacity(self.n);
        for (t, slot) in self.timeline.iter().enumerate() {
            match slot {
                Slot::Adv(d) => {
                    items.push(d.clone());
                    draws.push(None);
                }
                Slot::Stoch => {
                    rng.set_word_pos(t as u128 * WORDS_PER_STEP);
                    let j = self.distribution.index_for(rng.gen::<f64>());
                    items.push(self.distribution.support[j].clone());
                    draws.push(Some(j));
                }
            }
        }
        Realization { items, origins: self.origins(), draws }
    }

    pub fn to_json(&self) -> Result<String> {
        let env = Envelope { version: SCHEMA_VERSION, problem: T::PROBLEM, inner: self };
        Ok(serde_json::to_string_pretty(&env)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self> {
        check_header(&value, Some(T::PROBLEM))?;
        let inst: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            schema(path, e.into_inner().to_string())
        })?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_header(value: &Value, problem: Option<&str>) -> Result<String> {
    let obj = value.as_object().ok_or_else(|| schema(".", "instance must be a JSON object"))?;
    match obj.get("version") {
        None => return Err(schema("version", "missing field `version`")),
        Some(Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(Value::String(v)) => return Err(Error::UnsupportedVersion(v.clone())),
        Some(other) => return Err(schema("version", format!("expected a string, found {other}"))),
    }
    let found = match obj.get("problem") {
        Some(Value::String(p)) => p.clone(),
        Some(other) => return Err(schema("problem", format!("expected a string, found {other}"))),
        None => return Err(schema("problem", "missing field `problem`")),
    };
    if let Some(expected) = problem {
        if found != expected {
            return Err(schema("problem", format!("is `{found}`, expected `{expected}`")));
        }
    }
    Ok(found)
}

/// An instance of either problem, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyInstance {
    Ocp(MixedInstance<FeasibleSet>),
    Welfare(MixedInstance<Request>),
}

impl AnyInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        match check_header(&value, None)?.as_str() {
            "ocp" => Ok(AnyInstance::Ocp(MixedInstance::from_value(value)?)),
            "welfare" => Ok(AnyInstance::Welfare(MixedInstance::from_value(value)?)),
            other => Err(schema("problem", format!("unknown problem `{other}` (ocp | welfare)"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            AnyInstance::Ocp(i) => i.to_json(),
            AnyInstance::Welfare(i) => i.to_json(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            AnyInstance::Ocp(i) => i.save(path),
            AnyInstance::Welfare(i) => i.save(path),
        }
    }
}

// ---------------------------------------------------------------------------
// Generator

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Ocp,
    Welfare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    SumOfPowers,
    LinearPlusPower,
    SeparableGeneric,
}

/// Where the adversarial steps go in the timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Prefix,
    Suffix,
    Random,
    Interleaved,
}

/// Shape of generated OCP options.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionStyle {
    /// Arbitrary vectors in `[0,1]^m`.
    Dense,
    /// A job of random size placed on one of several machines.
    Machines,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub problem: Problem,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub family: FamilyKind,
    pub adv_count: usize,
    pub placement: Placement,
    pub support_size: usize,
    pub options_min: usize,
    pub options_max: usize,
    pub option_style: OptionStyle,
    /// Welfare rewards are drawn uniformly from this range.
    pub reward_range: (f64, f64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            problem: Problem::Ocp,
            n: 16,
            m: 2,
            p: 2.0,
            family: FamilyKind::SumOfPowers,
            adv_count: 4,
            placement: Placement::Random,
            support_size: 3,
            options_min: 2,
            options_max: 3,
            option_style: OptionStyle::Machines,
            reward_range: (-1.0, 20.0),
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be positive".into());
        }
        if self.adv_count > self.n {
            return bad(format!("adv_count = {} exceeds n = {}", self.adv_count, self.n));
        }
        if self.adv_count < self.n && self.support_size == 0 {
            return bad("support_size must be positive when stochastic steps exist".into());
        }
        if self.options_min == 0 || self.options_min > self.options_max {
            return bad(format!(
                "option counts need 1 <= options_min <= options_max, got {}..={}",
                self.options_min, self.options_max
            ));
        }
        if !(self.p >= 1.0) {
            return bad(format!("p = {} must be >= 1", self.p));
        }
        let (lo, hi) = self.reward_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("reward range ({lo}, {hi}) is not an interval"));
        }
        Ok(())
    }
}

/// 0-based adversarial positions for the given placement rule.
pub fn adv_positions(n: usize, count: usize, placement: Placement, rng: &mut impl Rng) -> Vec<bool> {
    let mut adv = vec![false; n];
    match placement {
        Placement::Prefix => adv[..count].iter_mut().for_each(|a| *a = true),
        Placement::Suffix => adv[n - count..].iter_mut().for_each(|a| *a = true),
        Placement::Interleaved => {
            for t in 0..n {
                adv[t] = (t + 1) * count / n > t * count / n;
            }
        }
        Placement::Random => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            for &t in &idx[..count] {
                adv[t] = true;
            }
        }
    }
    adv
}

fn gen_cost(params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Result<CostFunction> {
    let m = params.m;
    let p = params.p;
    match params.family {
        FamilyKind::SumOfPowers => {
            CostFunction::sum_of_powers((0..m).map(|_| rng.gen_range(0.5..1.5)).collect(), p)
        }
        FamilyKind::LinearPlusPower => CostFunction::linear_plus_power(
            (0..m).map(|_| rng.gen_range(0.5..1.5)).collect(),
            (0..m).map(|_| rng.gen_range(0.0..1.0)).collect(),
            p,
        ),
        FamilyKind::SeparableGeneric => {
            let top = p.floor().max(1.0) as usize;
            let terms = (0..m)
                .map(|_| {
                    let mut c = vec![0.0; top];
                    c[0] = rng.gen_range(0.0..0.5);
                    c[top - 1] += rng.gen_range(0.5..1.5);
                    if top >= 3 {
                        c[1] = rng.gen_range(0.0..0.5);
                    }
                    crate::convex::ScalarTerm::Polynomial(c)
                })
                .collect();
            CostFunction::separable(terms, p)
        }
    }
}

fn gen_feasible_set(params: &GeneratorParams, rng: &mut ChaCha8Rng) -> FeasibleSet {
    let m = params.m;
    let k = rng.gen_range(params.options_min..=params.options_max);
    let options = match params.option_style {
        OptionStyle::Dense => (0..k).map(|_| (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
        OptionStyle::Machines => {
            let size: f64 = rng.gen_range(0.2..1.0);
            let mut machines: Vec<usize> = (0..m).collect();
            machines.shuffle(rng);
            machines
                .iter()
                .cycle()
                .take(k)
                .map(|&i| {
                    let mut v = vec![0.0; m];
                    v[i] = size;
                    v
                })
                .collect()
        }
    };
    FeasibleSet { options }
}

fn gen_request(params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Request {
    let (lo, hi) = params.reward_range;
    let c = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    Request { c, a: (0..params.m).map(|_| rng.gen_range(0.0..1.0)).collect() }
}

fn gen_probs(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // put the rounding residue on the last atom so the total is exactly 1
    let head: f64 = probs[..k - 1].iter().sum();
    probs[k - 1] = 1.0 - head;
    probs
}

fn gen_instance<T: Payload>(
    params: &GeneratorParams,
    seed: u64,
    mut item: impl FnMut(&GeneratorParams, &mut ChaCha8Rng) -> T,
) -> Result<MixedInstance<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GENERATION_STREAM);
    let cost = gen_cost(params, &mut rng)?;
    let adv = adv_positions(params.n, params.adv_count, params.placement, &mut rng);
    let timeline = adv
        .iter()
        .map(|&a| if a { Slot::Adv(item(params, &mut rng)) } else { Slot::Stoch })
        .collect();
    let distribution = if params.adv_count < params.n {
        let support = (0..params.support_size).map(|_| item(params, &mut rng)).collect();
        Distribution { support, probs: gen_probs(params.support_size, &mut rng) }
    } else {
        Distribution::default()
    };
    let inst = MixedInstance { n: params.n, m: params.m, cost, timeline, distribution, seed };
    inst.validate()?;
    Ok(inst)
}

/// Deterministic random instance: `(params, seed)` fixes every field.
pub fn generate(params: &GeneratorParams, seed: u64) -> Result<AnyInstance> {
    params.validate()?;
    Ok(match params.problem {
        Problem::Ocp => AnyInstance::Ocp(gen_instance(params, seed, gen_feasible_set)?),
        Problem::Welfare => AnyInstance::Welfare(gen_instance(params, seed, gen_request)?),
    })
}

pub fn generate_ocp(params: &GeneratorParams, seed: u64) -> Result<MixedInstance<FeasibleSet>> {
    params.validate()?;
    gen_instance(params, seed, gen_feasible_set)
}

pub fn generate_welfare(params: &GeneratorParams, seed: u64) -> Result<MixedInstance<Request>> {
    params.validate()?;
    gen_instance(params, seed, gen_request)
}
