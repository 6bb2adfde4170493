use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use ppbsp::files::{load_scenario, ScenarioSummary};
use ppbsp_core::decimal::Decimal;

fn ppbsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppbsp")).args(args).env_remove("PPBSP_WORKERS").output().expect("spawn ppbsp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate(dir: &Path, name: &str, seed: u64, spread: &str) -> PathBuf {
    let p = dir.join(name);
    let o = ppbsp(&[
        "generate", "--seed", &seed.to_string(), "--users", "12", "--suppliers", "3", "--slots", "3", "--spread", spread,
        "--out", p.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    p
}

fn run(scenario: &Path, out: &Path, model: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "run", "--scenario", scenario.to_str().unwrap(), "--model", model, "--key-bits", "256", "--seed", "5", "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ppbsp(&args)
}

fn line_value(text: &str, prefix: &str) -> String {
    text.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or_else(|| panic!("no '{prefix}' in:\n{text}")).trim().into()
}

const RUN_FILES: [&str; 4] = ["bills.csv", "metrics.csv", "slots.csv", "regulator_report.json"];

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.json", 42, "2");
    let b = generate(dir.path(), "b.json", 42, "2");
    let c = generate(dir.path(), "c.json", 43, "2");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn zero_spread_gives_zero_deviations() {
    let dir = tempfile::tempdir().unwrap();
    let s = load_scenario(&generate(dir.path(), "flat.json", 7, "0")).unwrap();
    assert!(ScenarioSummary::of(&s).all_deviations_zero());
    let s = load_scenario(&generate(dir.path(), "noisy.json", 7, "2")).unwrap();
    assert!(!ScenarioSummary::of(&s).all_deviations_zero());
}

#[test]
fn honest_verified_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(dir.path(), "s.json", 1, "2");
    let out = dir.path().join("run");
    let o = run(&sc, &out, "social", &["--verify"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(line_value(&text, "verdict:"), "settled");
    assert!(line_value(&text, "verification:").starts_with("passed"));
    for f in RUN_FILES.iter().chain(&["manifest.json", "verification.json"]) {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn dishonest_supplier_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(dir.path(), "s.json", 1, "2");
    let o = run(&sc, &dir.path().join("run"), "universal", &["--inject-dishonest-supplier", "S_2"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{text}");
    assert_eq!(line_value(&text, "verdict:"), "audit_required");
    let findings: Vec<&str> = text.lines().filter(|l| l.starts_with("audit finding:")).collect();
    assert_eq!(findings.len(), 1, "{text}");
    assert!(findings[0].starts_with("audit finding: S_2 "), "{text}");
}

#[test]
fn forced_audit_of_honest_run_finds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(dir.path(), "s.json", 1, "2");
    let o = ppbsp(&[
        "audit", "--scenario", sc.to_str().unwrap(), "--model", "individual", "--key-bits", "256", "--out",
        dir.path().join("a").to_str().unwrap(),
    ]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("audit finding:"));
}

#[test]
fn universal_balances_no_more_than_individual() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(dir.path(), "s.json", 9, "3");
    let vol = |model: &str| -> Decimal {
        let o = run(&sc, &dir.path().join(model), model, &[]);
        assert!(o.status.success(), "{}", stdout(&o));
        line_value(&stdout(&o), "rm volume:").parse().unwrap()
    };
    let (univ, ind) = (vol("universal"), vol("individual"));
    assert!(univ <= ind, "universal {univ} > individual {ind}");
}

#[test]
fn rerun_produces_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(dir.path(), "s.json", 3, "2");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&sc, &a, "social", &[]).status.success());
    assert!(run(&sc, &b, "social", &[]).status.success());
    for f in RUN_FILES.iter().chain(&["manifest.json"]) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(dir.path(), "s.json", 4, "2");
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = Command::new(env!("CARGO_BIN_EXE_ppbsp"))
            .args(["run", "--scenario", sc.to_str().unwrap(), "--model", "universal", "--key-bits", "256", "--out"])
            .arg(&out)
            .env("PPBSP_WORKERS", workers)
            .output()
            .unwrap();
        assert!(o.status.success());
        outputs.push(out);
    }
    for f in RUN_FILES {
        assert_eq!(fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn bench_reports_four_primitives_quickly() {
    let t = Instant::now();
    let o = ppbsp(&["bench", "--key-bits", "256", "--reps", "100"]);
    let elapsed = t.elapsed();
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    for op in ["KeyGen", "HomoEnc", "HomoDec", "BillCalc"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{op}: mean"))), "no {op} row:\n{text}");
    }
    assert!(elapsed.as_secs() < 10, "bench took {elapsed:?}");
}

#[test]
fn bench_rejects_too_few_reps() {
    let o = ppbsp(&["bench", "--key-bits", "256", "--reps", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_error_code() {
    assert_eq!(ppbsp(&["run", "--model", "nope"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(dir.path(), "s.json", 1, "1");
    assert_eq!(run(&sc, &dir.path().join("r"), "sq", &["--key-bits", "64"]).status.code(), Some(2));
}
