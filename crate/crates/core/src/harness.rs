//! Experiment driver: Monte-Carlo replications over an instance, the full
//! inequality suite per replication and in mean, and CSV/JSON reports.

use std::f64::consts::E;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::check::{merge_into, CheckResult, TOL};
use crate::convex::{check_growth_lemma, check_superadditivity, CostFunction, GrowthSample, ScalarTerm};
use crate::error::{Error, Result};
use crate::instance::{
    adv_positions, generate_ocp, generate_welfare, FamilyKind, GeneratorParams, MixedInstance, OptionStyle, Placement,
    Problem, Realization,
};
use crate::oco::{run_oco, theorem4_checks, Mutation};
use crate::ocp::{
    check_best_response, check_corollary1, check_homogeneous_equivalence, check_lemma_adv, effective_exponent,
    lp_cost, run_ocp_realization, stoch_fake_cost, FeasibleSet, OcpRunTrace,
};
use crate::oracle::{opt_adv_ocp, opt_stoch_ocp, opt_stoch_welfare, opt_welfare, OptReport};
use crate::vecops::{lp_norm, scaled};
use crate::welfare::{check_welfare_chain, reduce_cost, run_welfare_realization, scaled_opt_fake_profit, Request};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ROBUSTPD_THREADS";

/// Which family of checks to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckGroup {
    #[default]
    All,
    Core,
    Oco,
    Ocp,
    Welfare,
}

impl CheckGroup {
    pub fn includes(self, g: CheckGroup) -> bool {
        self == CheckGroup::All || self == g
    }
}

impl std::str::FromStr for CheckGroup {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "all" => CheckGroup::All,
            "core" => CheckGroup::Core,
            "oco" => CheckGroup::Oco,
            "ocp" => CheckGroup::Ocp,
            "welfare" => CheckGroup::Welfare,
            other => return Err(format!("unknown check group `{other}` (all | core | oco | ocp | welfare)")),
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub replications: usize,
    /// Overrides the instance seed when set.
    pub seed: Option<u64>,
    pub mutation: Mutation,
    pub checks: CheckGroup,
    /// Worker threads; `None` reads [`THREADS_ENV`], falling back to rayon's default.
    pub threads: Option<usize>,
    /// Load balancing only: exponent to use instead of the instance cost's `p`.
    pub p: Option<f64>,
}

impl RunConfig {
    pub fn new(replications: usize) -> Self {
        Self { replications, ..Default::default() }
    }
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStat {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanStat {
    pub fn of(xs: &[f64]) -> Self {
        let k = xs.len();
        if k == 0 {
            return Self { mean: 0.0, std_error: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / k as f64;
        if k < 2 {
            return Self { mean, std_error: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
        Self { mean, std_error: (var / k as f64).sqrt() }
    }
}

/// `mean − 3·SE ≤ rhs`
fn mean_le(name: &str, stat: MeanStat, rhs: f64) -> CheckResult {
    let mut c = CheckResult::new(name, TOL);
    c.le(stat.mean - 3.0 * stat.std_error, rhs);
    c
}

/// `mean + 3·SE ≥ rhs`
fn mean_ge(name: &str, stat: MeanStat, rhs: f64) -> CheckResult {
    let mut c = CheckResult::new(name, TOL);
    c.ge(stat.mean + 3.0 * stat.std_error, rhs);
    c
}

/// One CSV row.
#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    /// `None` on the summary row.
    pub replication: Option<usize>,
    pub cost: f64,
    pub std_error: f64,
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    pub checks: Vec<CheckResult>,
}

/// A named bound with both sides, as reported in JSON.
#[derive(Clone, Debug, Serialize)]
pub struct BoundTerm {
    pub name: String,
    pub lhs: MeanStat,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub problem: &'static str,
    pub seed: u64,
    pub replications: usize,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub family: &'static str,
    pub stoch_count: usize,
    /// `n/|Stoch|`, absent without stochastic steps.
    pub beta: Option<f64>,
    pub opt_adv: OptReport,
    pub opt_stoch: OptReport,
    pub bounds: Vec<BoundTerm>,
    pub rows: Vec<ReportRow>,
    pub summary: ReportRow,
    /// Full trace of replication 0.
    pub trace: serde_json::Value,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.summary.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.summary.checks.iter().filter(|c| !c.passed()).collect()
    }

    /// Check columns: per-replication checks in first-seen order, then
    /// summary-only checks.
    pub fn check_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for row in self.rows.iter().chain(std::iter::once(&self.summary)) {
            for c in &row.checks {
                if !cols.contains(&c.name) {
                    cols.push(c.name.clone());
                }
            }
        }
        cols
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("seed,replication,n,m,p,family,cost,std_error,opt_adv,opt_stoch,bound_lhs,bound_rhs");
        for c in self.check_columns() {
            h.push(',');
            h.push_str(&c);
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let cols = self.check_columns();
        let mut out = self.csv_header();
        out.push('\n');
        for row in self.rows.iter().chain(std::iter::once(&self.summary)) {
            let rep = row.replication.map_or_else(|| "summary".to_string(), |r| r.to_string());
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.seed,
                rep,
                self.n,
                self.m,
                self.p,
                self.family,
                row.cost,
                row.std_error,
                self.opt_adv.value,
                self.opt_stoch.value,
                row.bound_lhs,
                row.bound_rhs
            );
            for col in &cols {
                out.push(',');
                match row.checks.iter().find(|c| &c.name == col) {
                    None => {}
                    Some(c) if c.evaluated == 0 => out.push_str("na"),
                    Some(c) if c.passed() => out.push_str("pass"),
                    Some(_) => out.push_str("fail"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn thread_count(cfg: Option<usize>) -> Option<usize> {
    cfg.or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok()).filter(|t| *t > 0)
}

/// Runs `job(r)` for `r = 0..k` in parallel; results come back in index order.
fn replicate<R: Send>(k: usize, threads: Option<usize>, job: impl Fn(usize) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    match thread_count(threads) {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| (0..k).into_par_iter().map(&job).collect())
        }
        None => (0..k).into_par_iter().map(job).collect(),
    }
}

fn check_replications(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    Ok(())
}

fn to_value<T: Serialize>(t: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(t)?)
}

// ---------------------------------------------------------------------------
// Online convex programming

/// Per-replication scalars and checks.
struct OcpRep {
    cost: f64,
    scaled_cost: f64,
    stoch_fake: f64,
    norm: f64,
    checks: Vec<CheckResult>,
    trace: Option<OcpRunTrace>,
}

/// Oracle quantities shared by all replications.
struct OcpOracles {
    adv: OptReport,
    stoch: OptReport,
    /// `(t, v*_t)` over the adversarial times.
    adv_pairs: Vec<(usize, Vec<f64>)>,
    stoch_count: usize,
}

fn ocp_oracles(inst: &MixedInstance<FeasibleSet>, f: &CostFunction) -> Result<OcpOracles> {
    let adv_items = inst.adv_items();
    let sets: Vec<FeasibleSet> = adv_items.iter().map(|(_, s)| (*s).clone()).collect();
    let adv = opt_adv_ocp(&sets, f)?;
    let adv_pairs = adv_items
        .iter()
        .zip(&adv.choices)
        .map(|((t, s), &k)| (*t, s.options[k].clone()))
        .collect();
    let stoch_count = inst.stoch_count();
    let stoch = opt_stoch_ocp(&inst.distribution, stoch_count, f, inst.seed)?;
    Ok(OcpOracles { adv, stoch, adv_pairs, stoch_count })
}

fn stoch_pairs(inst: &MixedInstance<FeasibleSet>, real: &Realization<FeasibleSet>, selector: &[usize]) -> Vec<(usize, Vec<f64>)> {
    real.draws
        .iter()
        .enumerate()
        .filter_map(|(t, d)| d.map(|j| (t, inst.distribution.support[j].options[selector[j]].clone())))
        .collect()
}

fn ocp_replication(
    inst: &MixedInstance<FeasibleSet>,
    f: &CostFunction,
    or: &OcpOracles,
    cfg: &RunConfig,
    r: usize,
) -> Result<OcpRep> {
    let real = inst.sample_realization(r as u64);
    let trace = run_ocp_realization(&real, f, cfg.mutation)?;
    let mut checks = Vec::new();
    if cfg.checks.includes(CheckGroup::Oco) {
        checks.extend(theorem4_checks(&trace.ledger, &trace.state));
    }
    if cfg.checks.includes(CheckGroup::Ocp) {
        checks.push(check_best_response(&trace, &real.items));
        checks.extend(check_corollary1(&trace));
        let p = f.p();
        checks.extend(check_lemma_adv(&trace, 2.0 * p, "2p", &or.adv_pairs)?);
        checks.extend(check_lemma_adv(&trace, 2.0 * E * p * p, "2ep2", &or.adv_pairs)?);
        if f.is_homogeneous() {
            checks.extend(check_homogeneous_equivalence(&trace, &real.items, &real.origins)?);
        }
    }
    let stoch_fake = stoch_fake_cost(&trace, &stoch_pairs(inst, &real, &or.stoch.selector));
    Ok(OcpRep {
        cost: trace.cost,
        scaled_cost: trace.scaled_cost,
        stoch_fake,
        norm: lp_norm(&trace.load, f.p()),
        checks,
        trace: (r == 0).then_some(trace),
    })
}

/// The end-to-end bounds in every applicable form; the first entry is the
/// general one reported as `bound_rhs`.
fn ocp_bounds(f: &CostFunction, or: &OcpOracles, n: usize, reps: &[OcpRep]) -> Vec<(String, MeanStat, f64)> {
    let p = f.p();
    let v_adv = &or.adv.load;
    let v_stoch = &or.stoch.load;
    let beta = if or.stoch_count == 0 { 1.0 } else { n as f64 / or.stoch_count as f64 };
    let psi = |u: &[f64]| f.eval_unchecked(u);
    let psi_p = f.value_at_p_ones();
    let stoch_term = psi(&scaled(v_stoch, beta));
    let stoch_growth = beta.powf(p) * psi(v_stoch);
    let alpha = 2.0 * E * p * p;

    let scaled_cost = MeanStat::of(&reps.iter().map(|r| r.scaled_cost).collect::<Vec<_>>());
    let mut out = vec![
        ("end_to_end_growth".to_string(), scaled_cost, E * alpha.powf(p) * psi(v_adv) + stoch_growth + 1.5 * psi_p),
        ("end_to_end".to_string(), scaled_cost, E * psi(&scaled(v_adv, alpha)) + stoch_term + 1.5 * psi_p),
    ];
    if f.is_separable() {
        out.push((
            "end_to_end_separable".into(),
            scaled_cost,
            psi(&scaled(v_adv, 2.0 * p)) + stoch_term + 1.5 * psi_p,
        ));
        out.push((
            "end_to_end_separable_growth".into(),
            scaled_cost,
            (2.0 * p).powf(p) * psi(v_adv) + stoch_growth + 1.5 * psi_p,
        ));
    }
    if or.stoch_count > 0 {
        let stat = MeanStat::of(&reps.iter().map(|r| r.stoch_fake).collect::<Vec<_>>());
        out.push(("stoch_part".into(), stat, psi(&scaled(v_stoch, beta)) / beta));
    }
    if f.is_homogeneous() && or.stoch_count as f64 >= 4.0 * p {
        let shrink = 8f64.powf(p);
        let stat = MeanStat::of(&reps.iter().map(|r| r.cost / shrink).collect::<Vec<_>>());
        let stoch_inside = psi(v_stoch);
        out.push((
            "end_to_end_homogeneous".into(),
            stat,
            E * alpha.powf(p) * psi(v_adv) + stoch_inside + 1.5 * psi_p,
        ));
        if f.is_separable() {
            out.push((
                "end_to_end_homogeneous_separable".into(),
                stat,
                (2.0 * p).powf(p) * psi(v_adv) + stoch_inside + 1.5 * psi_p,
            ));
        }
    }
    out
}

fn summarize_rows(reps_checks: Vec<Vec<CheckResult>>) -> Vec<CheckResult> {
    let mut acc = Vec::new();
    for c in &reps_checks {
        merge_into(&mut acc, c);
    }
    acc
}

fn with_seed<T: Clone>(inst: &MixedInstance<T>, seed: Option<u64>) -> MixedInstance<T> {
    let mut i = inst.clone();
    if let Some(s) = seed {
        i.seed = s;
    }
    i
}

struct OcpExperiment {
    inst: MixedInstance<FeasibleSet>,
    f: CostFunction,
    oracles: OcpOracles,
    reps: Vec<OcpRep>,
}

fn ocp_experiment(inst: &MixedInstance<FeasibleSet>, f: CostFunction, cfg: &RunConfig) -> Result<OcpExperiment> {
    check_replications(cfg.replications)?;
    let inst = with_seed(inst, cfg.seed);
    let oracles = ocp_oracles(&inst, &f)?;
    let reps = replicate(cfg.replications, cfg.threads, |r| ocp_replication(&inst, &f, &oracles, cfg, r))?;
    Ok(OcpExperiment { inst, f, oracles, reps })
}

fn ocp_report(
    mut ex: OcpExperiment,
    problem: &'static str,
    cfg: &RunConfig,
    extra: Vec<(String, MeanStat, f64)>,
    row_cost: impl Fn(&OcpRep) -> f64,
    headline: &str,
    trace: serde_json::Value,
) -> Result<RunReport> {
    let n = ex.inst.n;
    let mut bounds = ocp_bounds(&ex.f, &ex.oracles, n, &ex.reps);
    bounds.extend(extra);
    let mean_checks: Vec<CheckResult> = if cfg.checks.includes(CheckGroup::Ocp) {
        bounds.iter().map(|(name, stat, rhs)| mean_le(&format!("{name}_mean"), *stat, *rhs)).collect()
    } else {
        Vec::new()
    };
    let (_, head_stat, head_rhs) =
        bounds.iter().find(|b| b.0 == headline).cloned().expect("headline bound is always present");
    let rows: Vec<ReportRow> = ex
        .reps
        .iter_mut()
        .enumerate()
        .map(|(r, rep)| ReportRow {
            replication: Some(r),
            cost: row_cost(rep),
            std_error: 0.0,
            bound_lhs: if headline.starts_with("lb_") { rep.norm } else { rep.scaled_cost },
            bound_rhs: head_rhs,
            checks: std::mem::take(&mut rep.checks),
        })
        .collect();
    let mut summary_checks = summarize_rows(rows.iter().map(|r| r.checks.clone()).collect());
    summary_checks.extend(mean_checks);
    let cost_stat = MeanStat::of(&ex.reps.iter().map(&row_cost).collect::<Vec<_>>());
    let summary = ReportRow {
        replication: None,
        cost: cost_stat.mean,
        std_error: cost_stat.std_error,
        bound_lhs: head_stat.mean,
        bound_rhs: head_rhs,
        checks: summary_checks,
    };
    let s = ex.oracles.stoch_count;
    Ok(RunReport {
        problem,
        seed: ex.inst.seed,
        replications: cfg.replications,
        n,
        m: ex.inst.m,
        p: ex.f.p(),
        family: ex.f.family_name(),
        stoch_count: s,
        beta: (s > 0).then(|| n as f64 / s as f64),
        opt_adv: ex.oracles.adv,
        opt_stoch: ex.oracles.stoch,
        bounds: bounds.into_iter().map(|(name, lhs, rhs)| BoundTerm { name, lhs, rhs }).collect(),
        rows,
        summary,
        trace,
    })
}

/// Online convex programming experiment over `cfg.replications` redraws.
pub fn run_ocp_experiment(inst: &MixedInstance<FeasibleSet>, cfg: &RunConfig) -> Result<RunReport> {
    let mut ex = ocp_experiment(inst, inst.cost.clone(), cfg)?;
    let trace = to_value(&ex.reps[0].trace.take())?;
    ocp_report(ex, "ocp", cfg, Vec::new(), |r| r.cost, "end_to_end_growth", trace)
}

/// `ℓ_p` load balancing: the instance's options are job placements and the
/// cost is replaced by `Σ_i u_i^p` with the effective exponent.
pub fn run_loadbalance_experiment(inst: &MixedInstance<FeasibleSet>, cfg: &RunConfig) -> Result<RunReport> {
    let m = inst.m;
    let p_requested = cfg.p.unwrap_or_else(|| inst.cost.p());
    let p = effective_exponent(p_requested, m);
    let mut ex = ocp_experiment(inst, lp_cost(m, p)?, cfg)?;
    let n = ex.inst.n;
    let s = ex.oracles.stoch_count;
    let beta = if s == 0 { 1.0 } else { n as f64 / s as f64 };
    let adv_norm = lp_norm(&ex.oracles.adv.load, p);
    let stoch_norm = lp_norm(&ex.oracles.stoch.load, p);
    let m_root = (m as f64).powf(1.0 / p);
    let alpha = 2.0 * E * p * p;
    let norm = MeanStat::of(&ex.reps.iter().map(|r| r.norm).collect::<Vec<_>>());
    let extra = vec![
        ("lb_norm".to_string(), norm, E * alpha * adv_norm + E * beta * stoch_norm + E * p * m_root),
        (
            "lb_norm_rigorous".to_string(),
            norm,
            8.0 * (E.powf(1.0 / p) * alpha * adv_norm + beta * stoch_norm + 1.5f64.powf(1.0 / p) * p * m_root),
        ),
    ];
    let trace = ex.reps[0].trace.take().expect("replication 0 keeps its trace");
    let run = LoadBalanceSummary {
        p_requested,
        p_effective: p,
        load: trace.load.clone(),
        norm: lp_norm(&trace.load, p),
        norm_requested: lp_norm(&trace.load, p_requested),
        trace,
    };
    let trace = to_value(&run)?;
    let mut report = ocp_report(ex, "loadbalance", cfg, extra, |r| r.norm, "lb_norm", trace)?;
    report.p = p;
    Ok(report)
}

#[derive(Serialize)]
struct LoadBalanceSummary {
    p_requested: f64,
    p_effective: f64,
    load: Vec<f64>,
    norm: f64,
    norm_requested: f64,
    trace: OcpRunTrace,
}

// ---------------------------------------------------------------------------
// Welfare

struct WelfareRep {
    profit: f64,
    opt_fake: f64,
    checks: Vec<CheckResult>,
    trace: Option<serde_json::Value>,
}

/// Welfare experiment over `cfg.replications` redraws.
pub fn run_welfare_experiment(inst: &MixedInstance<Request>, cfg: &RunConfig) -> Result<RunReport> {
    check_replications(cfg.replications)?;
    let inst = with_seed(inst, cfg.seed);
    let f = &inst.cost;
    let (_, high) = reduce_cost(f)?;
    let psi_high_p = high.value_at_p_ones();
    let n = inst.n;
    let s = inst.stoch_count();
    let beta = if s == 0 { 1.0 } else { n as f64 / s as f64 };

    let adv_reqs: Vec<Request> = inst.adv_items().into_iter().map(|(_, r)| r.clone()).collect();
    let opt_adv = opt_welfare(&adv_reqs, f)?;
    let opt_stoch = opt_stoch_welfare(&inst.distribution, s, f, inst.seed)?;

    let reps = replicate(cfg.replications, cfg.threads, |r| {
        let real = inst.sample_realization(r as u64);
        let trace = run_welfare_realization(&real, f, cfg.mutation)?;
        let x_star: Vec<(usize, f64)> = real
            .draws
            .iter()
            .enumerate()
            .filter_map(|(t, d)| d.map(|j| (t, opt_stoch.fractions[j])))
            .collect();
        let mut checks = Vec::new();
        if cfg.checks.includes(CheckGroup::Oco) {
            checks.extend(theorem4_checks(&trace.ledger, &trace.state));
        }
        if cfg.checks.includes(CheckGroup::Welfare) {
            checks.extend(check_welfare_chain(&trace, &real.items, f, &x_star, beta));
        }
        let opt_fake =
            if x_star.is_empty() { 0.0 } else { scaled_opt_fake_profit(&trace, &real.items, &x_star, beta) };
        Ok(WelfareRep {
            profit: trace.profit,
            opt_fake,
            checks,
            trace: if r == 0 { Some(to_value(&trace)?) } else { None },
        })
    })?;

    // an estimated optimum is discounted by three of its standard errors
    let opt_s = opt_stoch.value - 3.0 * opt_stoch.std_error.unwrap_or(0.0);
    let profit = MeanStat::of(&reps.iter().map(|r| r.profit).collect::<Vec<_>>());
    let opt_fake = MeanStat::of(&reps.iter().map(|r| r.opt_fake).collect::<Vec<_>>());
    let final_rhs = opt_s / (64.0 * beta) - psi_high_p / 64.0;
    let mut bounds = vec![BoundTerm { name: "welfare_profit".into(), lhs: profit, rhs: final_rhs }];
    if s > 0 {
        bounds.push(BoundTerm { name: "welfare_opt_fake".into(), lhs: opt_fake, rhs: opt_s / beta });
    }

    let mut reps = reps;
    let trace = reps[0].trace.take().unwrap_or(serde_json::Value::Null);
    let rows: Vec<ReportRow> = reps
        .iter_mut()
        .enumerate()
        .map(|(r, rep)| ReportRow {
            replication: Some(r),
            cost: rep.profit,
            std_error: 0.0,
            bound_lhs: rep.profit,
            bound_rhs: final_rhs,
            checks: std::mem::take(&mut rep.checks),
        })
        .collect();
    let mut summary_checks = summarize_rows(rows.iter().map(|r| r.checks.clone()).collect());
    if cfg.checks.includes(CheckGroup::Welfare) {
        summary_checks.extend(bounds.iter().map(|b| mean_ge(&format!("{}_mean", b.name), b.lhs, b.rhs)));
    }
    Ok(RunReport {
        problem: "welfare",
        seed: inst.seed,
        replications: cfg.replications,
        n,
        m: inst.m,
        p: f.p(),
        family: f.family_name(),
        stoch_count: s,
        beta: (s > 0).then_some(beta),
        opt_adv,
        opt_stoch,
        bounds,
        summary: ReportRow {
            replication: None,
            cost: profit.mean,
            std_error: profit.std_error,
            bound_lhs: profit.mean,
            bound_rhs: final_rhs,
            checks: summary_checks,
        },
        rows,
        trace,
    })
}

// ---------------------------------------------------------------------------
// Randomized verification suite

#[derive(Clone, Debug, Default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub count: usize,
    pub mutation: Mutation,
    pub checks: CheckGroup,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyRow {
    pub group: CheckGroup,
    pub check: CheckResult,
    /// Configurations on which the check failed.
    pub failed_configs: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyMatrix {
    pub seed: u64,
    pub count: usize,
    pub rows: Vec<VerifyRow>,
}

impl VerifyMatrix {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.check.passed())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.check.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!(
            "{:<8} {:<width$} {:>6} {:>6} {:>12}  {}\n",
            "group", "check", "evals", "fails", "worst_slack", "result"
        );
        for r in &self.rows {
            let group = serde_json::to_value(r.group).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let slack = if r.check.slack.is_finite() { format!("{:.3e}", r.check.slack) } else { format!("{}", r.check.slack) };
            let _ = writeln!(
                out,
                "{:<8} {:<width$} {:>6} {:>6} {:>12}  {}",
                group,
                r.check.name,
                r.check.evaluated,
                r.failed_configs.len(),
                slack,
                if r.check.passed() { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

fn config_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn pick<T: Copy>(rng: &mut impl Rng, xs: &[T]) -> T {
    xs[rng.gen_range(0..xs.len())]
}

/// A random cost from one of the three families; polynomial terms get degree `⌊p⌋`.
pub fn random_cost(rng: &mut impl Rng, m: usize, p: f64) -> Result<CostFunction> {
    match rng.gen_range(0..3) {
        0 => CostFunction::sum_of_powers((0..m).map(|_| rng.gen_range(0.3..2.0)).collect(), p),
        1 => CostFunction::linear_plus_power(
            (0..m).map(|_| rng.gen_range(0.3..2.0)).collect(),
            (0..m).map(|_| rng.gen_range(0.0..1.0)).collect(),
            p,
        ),
        _ => {
            let deg = p.floor() as usize;
            let terms = (0..m)
                .map(|_| {
                    let mut c: Vec<f64> = (0..deg).map(|_| rng.gen_range(0.0..0.5)).collect();
                    c[deg - 1] += rng.gen_range(0.3..1.5);
                    ScalarTerm::Polynomial(c)
                })
                .collect();
            CostFunction::separable(terms, p)
        }
    }
}

fn random_point(rng: &mut impl Rng, m: usize, hi: f64) -> Vec<f64> {
    (0..m)
        .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..hi) })
        .collect()
}

fn core_checks(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let m = pick(rng, &[1usize, 2, 3, 5]);
    let p = pick(rng, &[1.5, 2.0, 2.5, 3.0, 4.0]);
    let f = random_cost(rng, m, p)?;
    let mut gap = CheckResult::new("fenchel_gap", 1e-9);
    let mut tight = CheckResult::new("fenchel_equality", 1e-9);
    let mut growth = CheckResult::new("growth_lemma", 1e-9);
    let mut superadd = CheckResult::new("superadditivity", 0.0);
    let mut samples = Vec::new();
    for _ in 0..5 {
        let u = random_point(rng, m, 4.0);
        let y = random_point(rng, m, 6.0);
        gap.ge(f.fenchel_gap(&u, &y)?, 0.0);
        tight.equal(f.fenchel_gap(&u, &f.grad(&u)?)?, 0.0);
        superadd.holds(check_superadditivity(&f, &u, &random_point(rng, m, 4.0))?);
        samples.push(GrowthSample { u, y, gamma: rng.gen_range(1.0..5.0), delta: rng.gen_range(0.01..1.0) });
    }
    let report = check_growth_lemma(&f, &samples)?;
    for v in [report.stretch, report.conjugate_shrink, report.conjugate_of_gradient, report.gradient_inner] {
        growth.le(v, 0.0);
    }
    Ok(vec![gap, tight, growth, superadd])
}

/// `γ_t ∈ {0, γ̄}` with exactly `active` nonzero entries and `γ̄ = 1/active`,
/// so that `Σ_t γ_t = 1`. Kinds: 0 all active, 1 spread out, 2 trailing
/// block, 3 leading block, otherwise random.
pub fn gamma_pattern(kind: usize, n: usize, active: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (count, placement) = match kind {
        0 => (n, Placement::Prefix),
        1 => (active, Placement::Interleaved),
        2 => (active, Placement::Suffix),
        3 => (active, Placement::Prefix),
        _ => (active, Placement::Random),
    };
    let gamma_bar = 1.0 / count as f64;
    adv_positions(n, count, placement, rng).into_iter().map(|on| if on { gamma_bar } else { 0.0 }).collect()
}

/// One randomized SS-FTRL run with `m ∈ {1,2,3,5}`, `p ∈ {2,3,4}`,
/// `n ∈ [4p, 64]` and a mixed `γ` pattern.
pub fn oco_trial(rng: &mut ChaCha8Rng, mutation: Mutation) -> Result<Vec<CheckResult>> {
    let m = pick(rng, &[1usize, 2, 3, 5]);
    let p = pick(rng, &[2.0, 3.0, 4.0]);
    let f = random_cost(rng, m, p)?;
    let min_n = (4.0 * p) as usize;
    let n = rng.gen_range(min_n..=64);
    let active = rng.gen_range(min_n..=n);
    let gammas = gamma_pattern(rng.gen_range(0..5), n, active, rng);
    let gamma_bar = gammas.iter().cloned().fold(0.0, f64::max);
    let loads: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                vec![0.0; m]
            } else {
                (0..m).map(|_| rng.gen_range(0.0..=1.0)).collect()
            }
        })
        .collect();
    let (state, ledger) = run_oco(&f, gamma_bar, &loads, &gammas, mutation)?;
    Ok(theorem4_checks(&ledger, &state))
}

/// One randomized mixed OCP run with the per-realization checks.
pub fn ocp_trial(rng: &mut ChaCha8Rng, mutation: Mutation) -> Result<Vec<CheckResult>> {
    let p = pick(rng, &[2.0, 3.0]);
    let n = rng.gen_range((4.0 * p) as usize..=16);
    let params = GeneratorParams {
        problem: Problem::Ocp,
        n,
        m: rng.gen_range(1..=3),
        p,
        family: pick(rng, &[FamilyKind::SumOfPowers, FamilyKind::LinearPlusPower, FamilyKind::SeparableGeneric]),
        adv_count: rng.gen_range(0..=n.min(8)),
        placement: pick(rng, &[Placement::Prefix, Placement::Suffix, Placement::Random, Placement::Interleaved]),
        support_size: rng.gen_range(1..=3),
        options_min: 1,
        options_max: 3,
        option_style: pick(rng, &[OptionStyle::Dense, OptionStyle::Machines]),
        ..Default::default()
    };
    let inst = generate_ocp(&params, rng.gen())?;
    let cfg = RunConfig { replications: 1, mutation, checks: CheckGroup::Ocp, threads: Some(1), ..Default::default() };
    let oracles = ocp_oracles(&inst, &inst.cost)?;
    let rep = ocp_replication(&inst, &inst.cost, &oracles, &cfg, rng.gen_range(0..1000))?;
    Ok(rep.checks)
}

/// One randomized welfare run with the per-realization chain.
pub fn welfare_trial(rng: &mut ChaCha8Rng, mutation: Mutation) -> Result<Vec<CheckResult>> {
    let p = pick(rng, &[2.0, 3.0]);
    let n = rng.gen_range((4.0 * p) as usize..=16);
    let params = GeneratorParams {
        problem: Problem::Welfare,
        n,
        m: rng.gen_range(1..=2),
        p,
        family: pick(rng, &[FamilyKind::SumOfPowers, FamilyKind::LinearPlusPower, FamilyKind::SeparableGeneric]),
        adv_count: rng.gen_range(0..=n / 2),
        placement: Placement::Random,
        support_size: rng.gen_range(1..=2),
        reward_range: (-1.0, rng.gen_range(1.0..30.0)),
        ..Default::default()
    };
    let inst = generate_welfare(&params, rng.gen())?;
    let s = inst.stoch_count();
    let x = opt_stoch_welfare(&inst.distribution, s, &inst.cost, inst.seed)?;
    let real = inst.sample_realization(rng.gen_range(0..1000));
    let trace = run_welfare_realization(&real, &inst.cost, mutation)?;
    let x_star: Vec<(usize, f64)> =
        real.draws.iter().enumerate().filter_map(|(t, d)| d.map(|j| (t, x.fractions[j]))).collect();
    let beta = if s == 0 { 1.0 } else { n as f64 / s as f64 };
    Ok(check_welfare_chain(&trace, &real.items, &inst.cost, &x_star, beta))
}

/// Runs the property suite over `count` random configurations per group.
pub fn verify(cfg: &VerifyConfig) -> Result<VerifyMatrix> {
    type Trial = fn(&mut ChaCha8Rng, Mutation) -> Result<Vec<CheckResult>>;
    let groups: [(CheckGroup, u64, Trial); 4] = [
        (CheckGroup::Core, 0, |rng, _| core_checks(rng)),
        (CheckGroup::Oco, 1, oco_trial),
        (CheckGroup::Ocp, 2, ocp_trial),
        (CheckGroup::Welfare, 3, welfare_trial),
    ];
    let mut rows: Vec<VerifyRow> = Vec::new();
    for (group, salt, trial) in groups {
        if !cfg.checks.includes(group) {
            continue;
        }
        let seed = cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let per_config = replicate(cfg.count, cfg.threads, |i| trial(&mut config_rng(seed, i), cfg.mutation))?;
        for (i, checks) in per_config.iter().enumerate() {
            for c in checks {
                let row = match rows.iter_mut().find(|r| r.check.name == c.name) {
                    Some(r) => r,
                    None => {
                        rows.push(VerifyRow { group, check: CheckResult::new(c.name.clone(), c.tol), failed_configs: Vec::new() });
                        rows.last_mut().expect("just pushed")
                    }
                };
                row.check.merge(c);
                if !c.passed() {
                    row.failed_configs.push(i);
                }
            }
        }
    }
    Ok(VerifyMatrix { seed: cfg.seed, count: cfg.count, rows })
}
