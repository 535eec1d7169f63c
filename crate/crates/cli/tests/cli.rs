use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn config(&self, name: &str, json: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, json).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_gpss"))
            .args(args)
            .env("GPSS_CACHE_DIR", self.dir.path().join("cache"))
            .env("RUST_LOG", "error")
            .output()
            .unwrap()
    }
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn summary(dir: &Path, command: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(format!("{command}_summary.json"))).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn constants_prints_the_closed_forms() {
    let env = Env::new();
    let cfg = env.config("c.json", r#"{"params": {"d": 5, "p": 3.0, "q": 1.5}}"#);
    let out = env.out("out");
    let o = env.run(&["constants", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!((v["omega"].as_f64().unwrap() - 3.87298335).abs() < 1e-8);
    assert!((v["A"].as_f64().unwrap() - std::f64::consts::SQRT_2).abs() < 1e-8);
    assert_eq!(v["sigma"].as_f64().unwrap(), 1.5);
    let sm = summary(&out, "constants");
    assert_eq!(sm["artifacts"], serde_json::json!(["constants.json"]));
}

#[test]
fn linear_shoot_finds_the_oscillator_eigenvalue() {
    let env = Env::new();
    let cfg = env.config("c.json", r#"{"params": {"d": 5, "p": 3.0, "linear_mode": true}}"#);
    let out = env.out("out");
    let o = env.run(&["shoot", "--config", s(&cfg), "--out", s(&out), "--theta", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let l = stdout_json(&o)["lambda"].as_f64().unwrap();
    assert!((l - 5.0).abs() < 1e-9, "{l}");
    assert!(out.join("shoot.csv").exists());
}

#[test]
fn exit_codes_name_the_failure() {
    let env = Env::new();
    let missing = env.out("missing.json");
    let o = env.run(&["constants", "--config", s(&missing)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));

    for (name, json) in [
        ("points.json", r#"{"points": 1}"#),
        ("radii.json", r#"{"r0": 0.5, "r_star": 0.3}"#),
        ("unknown.json", r#"{"rtoll": 1e-10}"#),
        ("params.json", r#"{"params": {"d": 2, "p": 3.0}}"#),
        ("syntax.json", "{"),
    ] {
        let cfg = env.config(name, json);
        let o = env.run(&["constants", "--config", s(&cfg), "--out", s(&env.out("x"))]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }

    let cfg = env.config("ok.json", "{}");
    let o = env.run(&["shoot", "--config", s(&cfg), "--out", s(&env.out("y"))]);
    assert_eq!(code(&o), 2);
    let o = env.run(&["sweep", "--config", s(&cfg), "--parallel", "0"]);
    assert_eq!(code(&o), 2);

    // no sign change in a bracket far below the ground state
    let cfg = env.config("low.json", r#"{"params": {"d": 5, "p": 3.0, "linear_mode": true}, "bracket": [0.5, 1.0]}"#);
    let o = env.run(&["shoot", "--config", s(&cfg), "--out", s(&env.out("z")), "--theta", "1"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no sign change"));
}

#[test]
fn singular_rerun_hits_the_cache() {
    let env = Env::new();
    let cfg = env.config("c.json", "{}");
    let out = env.out("out");
    let first = env.run(&["singular", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&first), 0);
    let second = env.run(&["singular", "--config", s(&cfg), "--out", s(&out), "--seed-free"]);
    assert_eq!(code(&second), 0);
    let (a, b) = (stdout_json(&first), stdout_json(&second));
    assert_eq!(a["cache_hit"], false);
    assert_eq!(b["cache_hit"], true);
    assert_eq!(a["lambda_star"], b["lambda_star"]);
    let l = a["lambda_star"].as_f64().unwrap();
    assert!(l > 0.0 && l < 5.0);
    assert!(std::fs::read_dir(env.dir.path().join("cache")).unwrap().count() == 1);
    let sm = summary(&out, "singular");
    assert_eq!(sm["cache_hit"], true);
    assert!(sm["fits"]["ode_residual_rtol_units"].as_f64().unwrap().is_finite());
}

#[test]
fn sequential_sweep_csv_is_byte_identical() {
    let env = Env::new();
    let cfg = env.config("c.json", r#"{"points": 80}"#);
    let (a, b) = (env.out("a"), env.out("b"));
    let oa = env.run(&["sweep", "--config", s(&cfg), "--out", s(&a)]);
    let ob = env.run(&["sweep", "--config", s(&cfg), "--out", s(&b)]);
    assert_eq!(code(&oa), code(&ob));
    for f in ["sweep_curve.csv", "sweep_branches.csv"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f}");
    }
    let text = std::fs::read_to_string(a.join("sweep_curve.csv")).unwrap();
    assert!(!text.contains('\r'));
    let row = text.lines().nth(1).unwrap();
    let theta = row.split(',').next().unwrap();
    let mantissa: String = theta.split('e').next().unwrap().chars().filter(char::is_ascii_digit).collect();
    assert_eq!(mantissa.len(), 17, "{theta}");
    assert_eq!(text.lines().count(), 81);
    let script = std::fs::read_to_string(a.join("sweep_curve.py")).unwrap();
    assert!(script.contains("\"sweep_curve.csv\"") && script.contains("savefig"));
    let leftovers = std::fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn parallel_sweep_reports_the_theory_comparison() {
    let env = Env::new();
    let cfg = env.config("c.json", r#"{"points": 120}"#);
    let out = env.out("out");
    let o = env.run(&["sweep", "--config", s(&cfg), "--out", s(&out), "--parallel", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout_json(&o);
    assert!(rep["branch_points"].as_u64().unwrap() >= 4);
    let sm = summary(&out, "sweep");
    assert_eq!(sm["fits"]["theory"], rep);
    assert!(out.join("theory.json").exists());
}

#[test]
fn emden_and_kernel_write_their_series() {
    let env = Env::new();
    let cfg = env.config("c.json", "{}");
    let out = env.out("out");
    let o = env.run(&["emden", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout_json(&o)["frequency"].as_f64().unwrap() > 0.0);
    let o = env.run(&["kernel", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let k = stdout_json(&o);
    assert!(k["euler_wronskian"]["max_rel_deviation"].as_f64().unwrap() < 1e-10);
    for f in ["emden.csv", "emden_tail.csv", "emden_tail.py", "psi1.csv", "psi1_origin.csv", "euler_modes.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

/// Every acceptance flag is present with its measurement; failures exit 3 and
/// reach stderr.
#[test]
fn verify_reports_every_acceptance_check() {
    let env = Env::new();
    let cfg = env.config("c.json", "{}");
    let out = env.out("out");
    let o = env.run(&["verify", "--config", s(&cfg), "--out", s(&out)]);
    let sm = summary(&out, "verify");
    let checks = sm["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 45);
    for c in checks {
        assert!(c["measured"].is_number() && c["target"].is_string(), "{c}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 45);
    let failed: Vec<&Value> = checks.iter().filter(|c| c["pass"] == false).collect();
    assert_eq!(sm["passed"], failed.is_empty());
    assert_eq!(code(&o), if failed.is_empty() { 0 } else { 3 });
    let stderr = String::from_utf8_lossy(&o.stderr);
    for c in failed {
        assert!(stderr.contains(&format!(
            "{}/{}: measured",
            c["criterion"].as_str().unwrap(),
            c["check"].as_str().unwrap()
        )));
    }
}
