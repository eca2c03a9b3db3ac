//! Acceptance gate: nine criteria, one PASS/FAIL line each. Runs as a plain
//! binary so the lines always reach the test log.

use std::f64::consts::E;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustpd::check::CheckResult;
use robustpd::harness::{
    gamma_pattern, random_cost, run_loadbalance_experiment, run_ocp_experiment, run_welfare_experiment, RunConfig,
    RunReport,
};
use robustpd::instance::{
    generate_ocp, generate_welfare, FamilyKind, GeneratorParams, OptionStyle, Placement, Problem,
};
use robustpd::oco::{run_oco, theorem4_checks};
use robustpd::ocp::{check_homogeneous_equivalence, run_ocp_realization};
use robustpd::{AnyInstance, CostFunction, FeasibleSet, MixedInstance, Mutation, Origin, ScalarTerm};

struct Outcome {
    ok: bool,
    detail: String,
}

impl Outcome {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self { ok, detail: detail.into() }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(m: usize, i: usize, s: f64) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[i] = s;
    v
}

fn family_sample(r: &mut ChaCha8Rng, kind: usize) -> CostFunction {
    let m = [1usize, 2, 3, 5][r.gen_range(0..4)];
    let p = [1.5, 2.0, 2.5, 3.0, 4.0][r.gen_range(0..5)];
    match kind {
        0 => CostFunction::sum_of_powers((0..m).map(|_| r.gen_range(0.3..2.0)).collect(), p).unwrap(),
        1 => CostFunction::linear_plus_power(
            (0..m).map(|_| r.gen_range(0.3..2.0)).collect(),
            (0..m).map(|_| r.gen_range(0.0..1.0)).collect(),
            p,
        )
        .unwrap(),
        _ => {
            let deg = p.floor() as usize;
            let terms = (0..m)
                .map(|_| {
                    let mut c: Vec<f64> = (0..deg).map(|_| r.gen_range(0.0..0.5)).collect();
                    c[deg - 1] += r.gen_range(0.3..1.5);
                    ScalarTerm::Polynomial(c)
                })
                .collect();
            CostFunction::separable(terms, p).unwrap()
        }
    }
}

fn point(r: &mut ChaCha8Rng, m: usize, hi: f64) -> Vec<f64> {
    (0..m).map(|_| if r.gen_bool(0.1) { 0.0 } else { r.gen_range(0.0..hi) }).collect()
}

/// `sup_{x ≥ 0} y·x − φ(x)` for a convex scalar `φ` with `φ(0) = 0`, by
/// bracketing and golden-section search.
fn scalar_sup(phi: impl Fn(f64) -> f64, y: f64) -> f64 {
    let g = |x: f64| y * x - phi(x);
    let mut hi = 1.0;
    while g(hi) > g(hi / 2.0) {
        if hi > 1e12 {
            return f64::INFINITY;
        }
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if g(c) >= g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    g(0.5 * (a + b)).max(0.0)
}

/// Conjugate of a separable cost from coordinate-wise numeric suprema.
fn numeric_conjugate(f: &CostFunction, y: &[f64]) -> f64 {
    let m = f.dim();
    (0..m).map(|i| scalar_sup(|x| f.eval(&unit(m, i, x)).unwrap(), y[i])).sum()
}

// ---------------------------------------------------------------------------

fn criterion1() -> Outcome {
    let mut r = rng(101);
    let (mut worst_gap, mut worst_eq, mut worst_rel) = (f64::INFINITY, 0.0f64, 0.0f64);
    for kind in 0..3 {
        for _ in 0..1000 {
            let f = family_sample(&mut r, kind);
            let m = f.dim();
            let u = point(&mut r, m, 5.0);
            let y = point(&mut r, m, 10.0);
            worst_gap = worst_gap.min(f.fenchel_gap(&u, &y).unwrap());
            let g = f.grad(&u).unwrap();
            let eq = f.fenchel_gap(&u, &g).unwrap().abs() / f.eval(&u).unwrap().max(1.0);
            worst_eq = worst_eq.max(eq);
            let closed = f.conjugate(&y).unwrap().value;
            let numeric = numeric_conjugate(&f, &y);
            let err = if closed.is_infinite() || numeric.is_infinite() {
                if closed == numeric { 0.0 } else { f64::INFINITY }
            } else {
                (closed - numeric).abs() / numeric.abs().max(1.0)
            };
            worst_rel = worst_rel.max(err);
        }
    }
    Outcome::new(
        worst_gap >= -1e-9 && worst_eq <= 1e-9 && worst_rel <= 1e-6,
        format!("min gap {worst_gap:.2e}, equality err {worst_eq:.2e}, conjugate rel err {worst_rel:.2e}"),
    )
}

fn criterion2() -> Outcome {
    let mut r = rng(202);
    let names = ["stretch", "conjugate_shrink", "conjugate_of_gradient", "gradient_inner", "superadditive", "upper_2p1"];
    let mut violations = [0usize; 6];
    let viol = |lhs: f64, rhs: f64| lhs > rhs + 1e-9 * rhs.abs().max(1.0);
    for kind in 0..3 {
        for _ in 0..1000 {
            let f = family_sample(&mut r, kind);
            let m = f.dim();
            let p = f.p();
            let u = point(&mut r, m, 4.0);
            let v = point(&mut r, m, 4.0);
            let y = point(&mut r, m, 8.0);
            let gamma = r.gen_range(1.0..6.0);
            let delta = r.gen_range(0.01..1.0);
            let psi_u = f.eval(&u).unwrap();
            let gu: Vec<f64> = u.iter().map(|x| x * gamma).collect();
            violations[0] += viol(f.eval(&gu).unwrap(), gamma.powf(p) * psi_u) as usize;
            let dy: Vec<f64> = y.iter().map(|x| x * delta).collect();
            let cy = f.conjugate(&y).unwrap().value;
            violations[1] += viol(f.conjugate(&dy).unwrap().value, delta.powf(p / (p - 1.0)) * cy) as usize;
            let g = f.grad(&u).unwrap();
            violations[2] += viol(f.conjugate(&g).unwrap().value, p * psi_u) as usize;
            violations[3] += viol(dot(&g, &u), p * psi_u) as usize;
            let s: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let (joint, parts) = (f.eval(&s).unwrap(), psi_u + f.eval(&v).unwrap());
            violations[4] += viol(parts, joint) as usize;
            violations[5] += viol(joint, 2f64.powf(p - 1.0) * parts) as usize;
        }
    }
    let detail = names.iter().zip(&violations).map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(" ");
    Outcome::new(violations.iter().all(|v| *v == 0), format!("violations over 3000 samples each: {detail}"))
}

/// Independent recomputation of iterates and items 1–3 from the history.
fn independent_oco(f: &CostFunction, gamma_bar: f64, loads: &[Vec<f64>], gammas: &[f64], ys: &[Vec<f64>]) -> f64 {
    let m = f.dim();
    let p = f.p();
    let psi_p = f.eval(&vec![p; m]).unwrap();
    let mut worst: f64 = f64::INFINITY;
    let mut cum = vec![0.0; m];
    let mut cum_g = 0.0;
    let (mut half_l, mut inner, mut max_conj) = (0.0, 0.0, 0.0f64);
    let mut join = vec![0.0f64; m];
    for ((v, g), y) in loads.iter().zip(gammas).zip(ys) {
        let arg: Vec<f64> = cum.iter().map(|c| (4.0 * p + c) / (4.0 * (1.0 + cum_g + gamma_bar))).collect();
        let expect = f.grad(&arg).unwrap();
        let err = expect.iter().zip(y).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
        worst = worst.min(-err + 1e-12);
        let conj = f.conjugate(y).unwrap().value;
        half_l += 0.5 * dot(y, v) - g * conj;
        inner += dot(y, v);
        max_conj = max_conj.max(conj);
        join.iter_mut().zip(y).for_each(|(j, x)| *j = j.max(*x));
        cum.iter_mut().zip(v).for_each(|(c, x)| *c += x);
        cum_g += g;
    }
    let eighth: Vec<f64> = cum.iter().map(|c| c / 8.0).collect();
    let norm = |lhs: f64, rhs: f64| (rhs - lhs) / rhs.abs().max(1.0);
    worst = worst.min(norm(f.eval(&eighth).unwrap() - psi_p, half_l));
    worst = worst.min(norm(max_conj / p, inner + psi_p));
    if f.is_separable() {
        worst = worst.min(norm(f.conjugate(&join).unwrap().value / p, inner + psi_p));
    }
    // domination by e within ⌈p⌉ times chosen by cumulative gamma
    let k = p.ceil() as usize;
    let cg: Vec<f64> = gammas.iter().scan(0.0, |a, g| {
        *a += g;
        Some(*a)
    }).collect();
    let mut times = Vec::new();
    for i in 1..=k {
        let lo = 2f64.powf(i as f64 / k as f64) - 1.0;
        let inside = |c: &f64| *c >= lo - 1e-9 && *c <= lo + gamma_bar + 1e-9;
        let t = if i < k { cg.iter().position(inside) } else { cg.iter().rposition(inside) };
        times.push(t.expect("cumulative gamma crosses every level"));
    }
    for (t, y) in ys.iter().enumerate() {
        let w = *times.iter().find(|&&w| w >= t).expect("last dominating time covers the run");
        for (a, b) in y.iter().zip(&ys[w]) {
            worst = worst.min(norm(*a, E * b));
        }
    }
    worst
}

fn oco_runs(seed: u64, count: usize, mutation: Mutation) -> (Vec<CheckResult>, f64) {
    let mut r = rng(seed);
    let mut acc: Vec<CheckResult> = Vec::new();
    let mut independent = f64::INFINITY;
    for _ in 0..count {
        let m = [1usize, 2, 3, 5][r.gen_range(0..4)];
        let p = [2.0, 3.0, 4.0][r.gen_range(0..3)];
        let f = random_cost(&mut r, m, p).unwrap();
        let n = r.gen_range((4.0 * p) as usize..=64);
        let active = r.gen_range((4.0 * p) as usize..=n);
        let gammas = gamma_pattern(r.gen_range(0..5), n, active, &mut r);
        let gamma_bar = gammas.iter().cloned().fold(0.0, f64::max);
        let loads: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| r.gen_range(0.0..=1.0)).collect()).collect();
        let (state, ledger) = run_oco(&f, gamma_bar, &loads, &gammas, mutation).unwrap();
        robustpd::check::merge_into(&mut acc, &theorem4_checks(&ledger, &state));
        let ys: Vec<Vec<f64>> = state.history().iter().map(|s| s.y_bar.clone()).collect();
        independent = independent.min(independent_oco(&f, gamma_bar, &loads, &gammas, &ys));
    }
    (acc, independent)
}

fn summarize(checks: &[CheckResult]) -> (bool, String) {
    let failed: Vec<String> =
        checks.iter().filter(|c| !c.passed()).map(|c| format!("{}({:.2e})", c.name, c.slack)).collect();
    let worst = checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
    if failed.is_empty() {
        (true, format!("{} checks, worst slack {worst:.2e}", checks.len()))
    } else {
        (false, format!("failed: {}", failed.join(", ")))
    }
}

fn criterion3() -> Outcome {
    let (checks, independent) = oco_runs(303, 200, Mutation::None);
    let (ok, detail) = summarize(&checks);
    let ind_ok = independent >= -1e-8;
    Outcome::new(ok && ind_ok, format!("200 runs: {detail}; independent recomputation worst slack {independent:.2e}"))
}

fn mixed_ocp(i: u64) -> MixedInstance<FeasibleSet> {
    let mut r = rng(400 + i);
    let p = [2.0, 3.0][r.gen_range(0..2)];
    let n = r.gen_range(((4.0 * p) as usize).max(10)..=24);
    let params = GeneratorParams {
        problem: Problem::Ocp,
        n,
        m: r.gen_range(1..=3),
        p,
        family: [FamilyKind::SumOfPowers, FamilyKind::LinearPlusPower, FamilyKind::SeparableGeneric][i as usize % 3],
        adv_count: r.gen_range(1..=8.min(n / 2)),
        placement: [Placement::Prefix, Placement::Suffix, Placement::Random, Placement::Interleaved][i as usize % 4],
        support_size: r.gen_range(1..=3),
        options_min: 1,
        options_max: 3,
        option_style: if r.gen_bool(0.5) { OptionStyle::Dense } else { OptionStyle::Machines },
        ..Default::default()
    };
    generate_ocp(&params, 4000 + i).unwrap()
}

fn report_checks(rep: &RunReport) -> Vec<CheckResult> {
    rep.summary.checks.clone()
}

fn criterion4_with(count: u64, k: usize, mutation: Mutation) -> (Vec<CheckResult>, usize) {
    let mut acc = Vec::new();
    let mut stoch_checked = 0;
    for i in 0..count {
        let inst = mixed_ocp(i);
        let cfg = RunConfig { replications: k, mutation, ..Default::default() };
        let rep = run_ocp_experiment(&inst, &cfg).unwrap();
        stoch_checked += rep.summary.checks.iter().any(|c| c.name == "stoch_part_mean") as usize;
        robustpd::check::merge_into(&mut acc, &report_checks(&rep));
    }
    (acc, stoch_checked)
}

fn criterion4() -> Outcome {
    let (checks, stoch) = criterion4_with(20, 2000, Mutation::None);
    let need = [
        "corollary1",
        "adv_part_2p",
        "adv_part_2ep2",
        "stoch_part_mean",
        "end_to_end_mean",
        "end_to_end_growth_mean",
    ];
    let present = need.iter().all(|n| checks.iter().any(|c| &c.name == n && c.evaluated > 0));
    let (ok, detail) = summarize(&checks);
    Outcome::new(ok && present && stoch == 20, format!("20 instances x 2000 replications: {detail}"))
}

fn criterion5() -> Outcome {
    let mut worst_spread: f64 = 0.0;
    let mut choice_mismatch = 0usize;
    let mut lib = Vec::new();
    for i in 0..50u64 {
        let mut r = rng(500 + i);
        let p = [2.0, 3.0][r.gen_range(0..2)];
        let n = r.gen_range(((4.0 * p) as usize).max(8)..=20);
        let params = GeneratorParams {
            problem: Problem::Ocp,
            n,
            m: r.gen_range(1..=4),
            p,
            family: FamilyKind::SumOfPowers,
            adv_count: r.gen_range(0..=n / 2),
            placement: Placement::Random,
            option_style: OptionStyle::Dense,
            ..Default::default()
        };
        let inst = generate_ocp(&params, 5000 + i).unwrap();
        let real = inst.sample_realization(i);
        let trace = run_ocp_realization(&real, &inst.cost, Mutation::None).unwrap();
        robustpd::check::merge_into(&mut lib, &check_homogeneous_equivalence(&trace, &real.items, &real.origins).unwrap());
        // independent recomputation of the modified iterates
        let f = &inst.cost;
        let s = real.origins.iter().filter(|o| **o == Origin::Stoch).count();
        let gbar = if s == 0 { 0.0 } else { 1.0 / s as f64 };
        let mut cum = vec![0.0; inst.m];
        let mut cum_g = 0.0;
        for ((step, o), set) in trace.steps.iter().zip(&real.origins).zip(&real.items) {
            let arg: Vec<f64> = cum.iter().map(|c| (4.0 * p + c) / (4.0 * (1.0 + cum_g + gbar))).collect();
            let yc = f.grad(&arg).unwrap();
            let ratios: Vec<f64> =
                yc.iter().zip(&step.y_bar).filter(|(_, b)| **b > 0.0).map(|(a, b)| a / b).collect();
            if !ratios.is_empty() {
                let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
                worst_spread = worst_spread.max(if lo > 0.0 { (hi - lo) / hi } else { f64::INFINITY });
            }
            let mut best = (0, f64::INFINITY);
            for (k, v) in set.options.iter().enumerate() {
                let val = dot(&yc, v);
                if val < best.1 {
                    best = (k, val);
                }
            }
            choice_mismatch += (best.0 != step.choice) as usize;
            cum.iter_mut().zip(&step.v_bar).for_each(|(c, x)| *c += x);
            if *o == Origin::Stoch {
                cum_g += gbar;
            }
        }
    }
    let (lib_ok, detail) = summarize(&lib);
    Outcome::new(
        lib_ok && worst_spread <= 1e-9 && choice_mismatch == 0,
        format!("50 runs: ratio spread {worst_spread:.2e}, choice mismatches {choice_mismatch}; library {detail}"),
    )
}

fn criterion6() -> Outcome {
    let AnyInstance::Ocp(worked) = AnyInstance::load(data("ocp_balanced.json")).unwrap() else {
        return Outcome::new(false, "ocp_balanced.json is not an OCP instance");
    };
    let rep = run_loadbalance_experiment(&worked, &RunConfig::new(1)).unwrap();
    let load: Vec<f64> = rep.trace["load"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let exact = load == vec![4.0, 4.0] && rep.summary.cost == 32f64.sqrt();

    let mut acc = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for i in 0..20u64 {
        let mut r = rng(600 + i);
        let m = r.gen_range(2..=4);
        let n = r.gen_range(8..=20);
        let params = GeneratorParams {
            problem: Problem::Ocp,
            n,
            m,
            p: [2.0, 3.0][r.gen_range(0..2)],
            adv_count: r.gen_range(1..=6),
            option_style: OptionStyle::Machines,
            options_min: 1,
            options_max: m,
            ..Default::default()
        };
        let inst = generate_ocp(&params, 6000 + i).unwrap();
        let rep = run_loadbalance_experiment(&inst, &RunConfig::new(500)).unwrap();
        let b = rep.bounds.iter().find(|b| b.name == "lb_norm").unwrap();
        worst_ratio = worst_ratio.max(b.lhs.mean / b.rhs);
        robustpd::check::merge_into(&mut acc, &report_checks(&rep));
    }
    let (ok, detail) = summarize(&acc);
    Outcome::new(
        exact && ok,
        format!("worked load {load:?}, norm {}; 20 instances: {detail}; max norm/bound {worst_ratio:.3}", rep.summary.cost),
    )
}

fn criterion7() -> Outcome {
    let AnyInstance::Welfare(worked) = AnyInstance::load(data("welfare_single.json")).unwrap() else {
        return Outcome::new(false, "welfare_single.json is not a welfare instance");
    };
    let w = run_welfare_experiment(&worked, &RunConfig::new(4)).unwrap();
    let exact = w.rows.iter().all(|r| r.cost == 12.484375);

    let mut acc = Vec::new();
    for i in 0..10u64 {
        let mut r = rng(700 + i);
        let p = [2.0, 3.0][r.gen_range(0..2)];
        let n = r.gen_range(((4.0 * p) as usize).max(8)..=16);
        let params = GeneratorParams {
            problem: Problem::Welfare,
            n,
            m: r.gen_range(1..=2),
            p,
            family: [FamilyKind::SumOfPowers, FamilyKind::LinearPlusPower, FamilyKind::SeparableGeneric][i as usize % 3],
            adv_count: r.gen_range(0..=n / 2),
            support_size: r.gen_range(1..=3),
            reward_range: (-1.0, r.gen_range(2.0..40.0)),
            ..Default::default()
        };
        let inst = generate_welfare(&params, 7000 + i).unwrap();
        let rep = run_welfare_experiment(&inst, &RunConfig::new(2000)).unwrap();
        robustpd::check::merge_into(&mut acc, &report_checks(&rep));
    }
    let need = ["welfare_fake_profit", "welfare_regret", "welfare_profit_mean"];
    let present = need.iter().all(|n| acc.iter().any(|c| &c.name == n && c.evaluated > 0));
    let (ok, detail) = summarize(&acc);
    Outcome::new(
        exact && ok && present,
        format!("worked profit {}; 10 instances x 2000 replications: {detail}", w.summary.cost),
    )
}

fn criterion8() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for mutation in [Mutation::NoShift, Mutation::NoRegularizer] {
        let (oco, _) = oco_runs(303, 200, mutation);
        let (ocp, _) = criterion4_with(5, 200, mutation);
        let failing: Vec<String> = oco.iter().chain(&ocp).filter(|c| !c.passed()).map(|c| c.name.clone()).collect();
        ok &= !failing.is_empty();
        parts.push(format!("{mutation:?} fails [{}]", failing.join(", ")));
    }
    Outcome::new(ok, parts.join("; "))
}

fn criterion9() -> Outcome {
    let inst = mixed_ocp(3);
    let a = run_ocp_experiment(&inst, &RunConfig { replications: 300, threads: Some(1), ..Default::default() }).unwrap();
    let b = run_ocp_experiment(&inst, &RunConfig { replications: 300, threads: Some(4), ..Default::default() }).unwrap();
    let c = run_ocp_experiment(&inst, &RunConfig::new(300)).unwrap();
    let same_ocp = a.to_csv() == b.to_csv() && b.to_csv() == c.to_csv();
    let AnyInstance::Welfare(w) = AnyInstance::load(data("welfare_mixed.json")).unwrap() else {
        return Outcome::new(false, "welfare_mixed.json is not a welfare instance");
    };
    let wa = run_welfare_experiment(&w, &RunConfig { replications: 300, threads: Some(2), ..Default::default() }).unwrap();
    let wb = run_welfare_experiment(&w, &RunConfig { replications: 300, threads: Some(3), ..Default::default() }).unwrap();
    let same_w = wa.to_csv() == wb.to_csv() && wa.to_json().unwrap() == wb.to_json().unwrap();
    let other = run_ocp_experiment(&inst, &RunConfig { replications: 300, seed: Some(99), ..Default::default() }).unwrap();
    Outcome::new(
        same_ocp && same_w && other.to_csv() != a.to_csv(),
        "byte-identical CSV across thread counts; a different seed changes the output",
    )
}

fn main() {
    type Criterion = (usize, &'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 9] = [
        (1, "Fenchel suite", criterion1, Duration::from_secs(5)),
        (2, "growth lemmas and superadditivity", criterion2, Duration::from_secs(5)),
        (3, "SS-FTRL guarantees", criterion3, Duration::from_secs(30)),
        (4, "primal-dual end to end", criterion4, Duration::from_secs(300)),
        (5, "homogeneous equivalence", criterion5, Duration::from_secs(60)),
        (6, "load balancing", criterion6, Duration::from_secs(300)),
        (7, "welfare", criterion7, Duration::from_secs(300)),
        (8, "mutation smoke test", criterion8, Duration::from_secs(300)),
        (9, "determinism", criterion9, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let ok = out.ok && took <= budget;
        failures += !ok as usize;
        println!(
            "{} criterion {id} ({name}): {} [{:.2}s / {}s budget]",
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
