use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn run(&self, args: &[&str], config: Option<&PathBuf>) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_starvol"));
        cmd.args(args);
        if let Some(c) = config {
            cmd.arg("--config").arg(c);
        }
        cmd.output().unwrap()
    }
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

const T2_BODIES: &str = r#"{
    "model": {"kind": "torus", "periods": [1, 1]},
    "grid": {"base": 16, "fiber": [32]},
    "bodies": {
        "A": "sqrt(p1^2 + p2^2) * exp(0.3 * sin(2 * pi * x1))",
        "B": "sqrt(2 * p1^2 + p2^2)"
    },
    "dmv": {"bodies": ["A", "B"]},
    "seed": 7
}"#;

#[test]
fn projective_plane_model_body_volume() {
    let ws = Workspace::new();
    let cfg = ws.config("rp2.json", r#"{"model": {"kind": "projective_plane"}}"#);
    let out = ws.run(&["volume"], Some(&cfg));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let v = r["results"][0]["value"].as_f64().unwrap();
    let target = 2.0 * std::f64::consts::PI.powi(2);
    assert!((v - target).abs() / target <= 1e-3, "{v}");
    assert!(r["results"][0]["estimated_error"].as_f64().unwrap() <= 1e-3);
    assert_eq!(r["command"], "volume");
    assert!(r["versions"]["starvol"].is_string());
    assert!(r.get("timing").is_none());
}

#[test]
fn check_on_random_torus_bodies_gives_five_holding_verdicts() {
    let ws = Workspace::new();
    let cfg = ws.config("t2.json", r#"{"model": {"kind": "torus"}}"#);
    let out = ws.run(&["check", "--seed", "11"], Some(&cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let verdicts = report(&out)["results"].as_array().unwrap().clone();
    assert_eq!(verdicts.len(), 5);
    assert!(verdicts.iter().all(|v| v["holds"] == true));
}

#[test]
fn missing_model_is_a_config_error() {
    let ws = Workspace::new();
    let cfg = ws.config("bad.json", r#"{"bodies": {"A": "sqrt(p1^2 + p2^2)"}}"#);
    let out = ws.run(&["volume"], Some(&cfg));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config error") && err.contains("model"), "{err}");
}

#[test]
fn schema_violations_report_a_pointer() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "bad.json",
        r#"{"model": {"kind": "torus"}, "flow": {"hamiltonian": "p1", "start": {"base": [0, 0], "momentum": [1, 0]}, "duration": -1}}"#,
    );
    let out = ws.run(&["flow"], Some(&cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/flow/duration"));

    let cfg = ws.config("typo.json", r#"{"model": {"kind": "torus"}, "sed": 3}"#);
    let out = ws.run(&["volume"], Some(&cfg));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn undefined_body_names_point_into_the_list() {
    let ws = Workspace::new();
    let cfg = ws.config("bad.json", r#"{"model": {"kind": "torus"}, "dmv": {"bodies": ["A", "B"]}}"#);
    let out = ws.run(&["dmv"], Some(&cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/dmv/bodies/0"));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let ws = Workspace::new();
    let cfg = ws.config("t2.json", T2_BODIES);
    let a = ws.run(&["check"], Some(&cfg));
    let b = ws.run(&["check", "--threads", "1"], Some(&cfg));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let plain = ws.config("plain.json", r#"{"model": {"kind": "torus"}}"#);
    let c = ws.run(&["check", "--seed", "5"], Some(&plain));
    let d = ws.run(&["check", "--seed", "5"], Some(&plain));
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn dual_mixed_volume_of_named_bodies() {
    let ws = Workspace::new();
    let cfg = ws.config("t2.json", T2_BODIES);
    let out = ws.run(&["dmv"], Some(&cfg));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["bodies"], serde_json::json!(["A", "B"]));
    assert!(r["results"]["value"].as_f64().unwrap() > 0.0);
    assert!(r["results"]["estimated_error"].is_number());
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let ws = Workspace::new();
    let cfg = ws.config("t2.json", T2_BODIES);
    let target = ws.dir.path().join("report.json");
    let out = ws.run(&["volume", "--out", target.to_str().unwrap()], Some(&cfg));
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(r["results"].as_array().unwrap().len(), 2);
}

#[test]
fn finsler_volumes_by_notion() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "metric.json",
        r#"{"model": {"kind": "torus"}, "metric": {"kind": "custom", "lagrangian": "2 * sqrt(v1^2 + v2^2)", "reversible": true}}"#,
    );
    for notion in ["ht", "busemann"] {
        let out = ws.run(&["volume", "--notion", notion], Some(&cfg));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let r = report(&out);
        assert_eq!(r["results"]["notion"], notion);
        assert!((r["results"]["value"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    }
}

#[test]
fn legendre_matches_closed_forms() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "randers.json",
        r#"{"model": {"kind": "torus"}, "metric": {"kind": "randers", "b": [0.3, 0.0]},
            "legendre": {"points": [{"base": [0.1, 0.2], "momentum": [3, 4]}, {"base": [0.5, 0.5], "momentum": [-1, 0]}]}}"#,
    );
    let out = ws.run(&["legendre"], Some(&cfg));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    for p in r["results"]["points"].as_array().unwrap() {
        assert!(p["difference"].as_f64().unwrap() < 1e-7);
        assert_eq!(p["convexity"]["quadratically_convex"], true);
    }
}

#[test]
fn flow_writes_csv_samples() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "flow.json",
        r#"{"model": {"kind": "torus"},
            "flow": {"hamiltonian": "sqrt(p1^2 + p2^2) * exp(0.2 * sin(2 * pi * x2))",
                     "start": {"base": [0, 0], "momentum": [0.6, 0.8]}, "duration": 1.0, "dt": 0.01}}"#,
    );
    let out = ws.run(&["flow"], Some(&cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,p1,p2,H,action"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 101);
    let last = rows.last().unwrap();
    assert!((last[0] - 1.0).abs() < 1e-12);
    assert!((last[5] - 1.0).abs() < 1e-6);
    assert!((last[6] - 1.0).abs() < 1e-6);
}

#[test]
fn unstable_step_is_a_numerical_failure() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "flow.json",
        r#"{"model": {"kind": "torus"},
            "flow": {"hamiltonian": "sqrt(p1^2 + p2^2) * exp(0.8 * sin(2 * pi * x2))",
                     "start": {"base": [0, 0], "momentum": [0, 1]}, "duration": 5.0, "dt": 0.4}}"#,
    );
    let out = ws.run(&["flow"], Some(&cfg));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn systole_of_a_class_on_the_flat_torus() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "sys.json",
        r#"{"model": {"kind": "torus", "periods": [1, 2]}, "metric": {"kind": "euclidean"}}"#,
    );
    let out = ws.run(&["systole", "--class", "1,0", "--m", "16", "--restarts", "2"], Some(&cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!((r["results"]["length"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(r["results"]["polygon"].as_array().unwrap().len(), 16);

    let out = ws.run(&["systole", "--class", "0,-1", "--m", "16"], Some(&cfg));
    assert!((report(&out)["results"]["length"].as_f64().unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn normal_form_diagnostics() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "nf.json",
        r#"{"model": {"kind": "sphere"}, "normalform": {"hamiltonian": "x3^2 * sqrt(p1^2 + p2^2 + p3^2)", "probes": 8}}"#,
    );
    let out = ws.run(&["normalform"], Some(&cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["results"]["residual"].as_f64().unwrap() < 1e-5);
    assert_eq!(r["results"]["probes"], 8);
}

#[test]
fn commands_other_than_report_need_a_config() {
    let ws = Workspace::new();
    let out = ws.run(&["volume"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_verdicts_exit_with_one() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "quartic.json",
        r#"{"model": {"kind": "torus"}, "metric": {"kind": "custom", "lagrangian": "(v1^4 + v2^4)^0.25", "reversible": true},
            "legendre": {"points": [{"base": [0, 0], "momentum": [1, 0]}]}}"#,
    );
    let out = ws.run(&["legendre"], Some(&cfg));
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["all_hold"], false);
}

#[test]
fn reports_match_the_published_schema() {
    let schema: Value = serde_json::from_str(include_str!("../../../docs/report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let ws = Workspace::new();
    let bodies = ws.config("t2.json", T2_BODIES);
    let metric = ws.config(
        "metric.json",
        r#"{"model": {"kind": "torus"}, "metric": {"kind": "quadratic", "axes": [1.5, 0.75]}, "systole": {"m": 16, "restarts": 2}}"#,
    );
    let conformal = ws.config(
        "conformal.json",
        r#"{"model": {"kind": "torus"}, "grid": {"base": 8, "fiber": [8]},
            "metric": {"kind": "conformal", "rho": "1 + 0.2 * sin(2 * pi * x1)"}, "systole": {"m": 32, "restarts": 2, "max_class": 1}}"#,
    );
    let sphere = ws.config(
        "nf.json",
        r#"{"model": {"kind": "sphere"}, "normalform": {"hamiltonian": "x3^2 * sqrt(p1^2 + p2^2 + p3^2)", "probes": 4}}"#,
    );
    let runs: Vec<(Vec<&str>, &PathBuf)> = vec![
        (vec!["volume"], &bodies),
        (vec!["volume", "--timing"], &metric),
        (vec!["dmv"], &bodies),
        (vec!["check"], &bodies),
        (vec!["legendre"], &metric),
        (vec!["systole"], &metric),
        (vec!["systole"], &conformal),
        (vec!["systole", "--class", "1,1"], &metric),
        (vec!["normalform"], &sphere),
    ];
    for (args, cfg) in runs {
        let out = ws.run(&args, Some(cfg));
        let r = report(&out);
        let errors: Vec<String> = validator.iter_errors(&r).map(|e| format!("{} at {}", e, e.instance_path())).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:#?}");
    }
}
