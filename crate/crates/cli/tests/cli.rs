use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn robustpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robustpd")).args(args).env_remove("ROBUSTPD_THREADS").output().unwrap()
}

fn run_ocp(instance: &str, extra: &[&str]) -> Output {
    let path = data(instance);
    let mut args = vec!["run-ocp", "--instance", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    robustpd(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn csv_header_is_stable() {
    let out = run_ocp("ocp_balanced.json", &["--replications", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with(
        "seed,replication,n,m,p,family,cost,std_error,opt_adv,opt_stoch,bound_lhs,bound_rhs,"
    ));
    assert!(header.contains("corollary1"));
    assert_eq!(text.lines().count(), 1 + 3 + 1);
    assert!(text.lines().last().unwrap().starts_with("1,summary,8,2,2,sum_of_powers,32,"));
}

#[test]
fn output_is_identical_across_runs_and_threads() {
    let base = run_ocp("ocp_mixed.json", &["--replications", "200", "--threads", "1"]);
    assert_eq!(base.status.code(), Some(0));
    for threads in ["1", "3", "8"] {
        let again = run_ocp("ocp_mixed.json", &["--replications", "200", "--threads", threads]);
        assert_eq!(base.stdout, again.stdout, "threads = {threads}");
    }
    let w = data("welfare_mixed.json");
    let args = |t: &'static str| {
        vec!["run-welfare", "--instance", w.to_str().unwrap(), "--replications", "200", "--format", "json", "--threads", t]
    };
    let a = robustpd(&args("1"));
    let b = robustpd(&args("4"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_override_changes_output() {
    let a = run_ocp("ocp_mixed.json", &["--replications", "50"]);
    let b = run_ocp("ocp_mixed.json", &["--replications", "50", "--seed", "12345"]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn out_dir_receives_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ocp("ocp_balanced.json", &["--replications", "2", "--format", "json", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let body = std::fs::read_to_string(dir.path().join("ocp.json")).unwrap();
    assert!(body.trim_start().starts_with('{'));
    assert!(body.contains("\"problem\"") && body.contains("\"ocp\""));
}

#[test]
fn mutation_exits_with_violation_code() {
    let out = run_ocp("ocp_mixed.json", &["--replications", "20", "--mutation", "no-shift"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn bad_input_exits_with_error_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version":"v1","problem":"ocp","n":2}"#).unwrap();
    let out = robustpd(&["run-ocp", "--instance", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = robustpd(&["run-ocp", "--instance", "/nonexistent.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let wrong = robustpd(&["run-welfare", "--instance", data("ocp_balanced.json").to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));
    let zero = run_ocp("ocp_balanced.json", &["--replications", "0"]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn verify_smoke() {
    let empty = robustpd(&["verify", "--count", "0"]);
    assert_eq!(empty.status.code(), Some(0));
    let ok = robustpd(&["verify", "--count", "5", "--seed", "3"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("worst_slack"));
    let broken = robustpd(&["verify", "--count", "10", "--check", "oco", "--mutation", "no-shift"]);
    assert_eq!(broken.status.code(), Some(1));
}

#[test]
fn loadbalance_worked_example() {
    let path = data("ocp_balanced.json");
    let out = robustpd(&["run-loadbalance", "--instance", path.to_str().unwrap(), "--replications", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let summary = text.lines().last().unwrap();
    let cost: f64 = summary.split(',').nth(6).unwrap().parse().unwrap();
    assert_eq!(cost, 32f64.sqrt());
}

#[test]
fn generate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.json");
    let gen = robustpd(&[
        "generate", "--problem", "welfare", "--n", "10", "--m", "2", "--adv", "3", "--seed", "5", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(gen.status.code(), Some(0));
    let printed = robustpd(&["generate", "--problem", "welfare", "--n", "10", "--m", "2", "--adv", "3", "--seed", "5"]);
    assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), stdout(&printed).trim());
    let run = robustpd(&["run-welfare", "--instance", path.to_str().unwrap(), "--replications", "50"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
}
