use std::path::Path;
use std::process::{Command, Output};

use qsdlab::cli::config::{GridConfig, MeasureConfig, SimConfig, SolverConfig};
use qsdlab::cli::{parse_config, serialize_config, RunConfig};
use serde_json::Value;

fn qsdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsdlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8(o.stderr.clone()).unwrap().lines().last().unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn solve_brownian_motion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bm.json", r#"{"measure": {"support": [0, 1], "density": "1"}, "grid": {"n": 4000}}"#);
    let out = dir.path().join("out");
    let o = qsdlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert_eq!(csv.lines().next().unwrap(), "x,alpha_weight,eta,M_1");
    assert_eq!(csv.lines().count(), 4001);
    assert!(!csv.contains('\r'));
    let header: Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    let l = header["lambda0"].as_f64().unwrap();
    assert!((l - 4.9348).abs() < 1e-3, "{l}");
    assert_eq!(std::fs::read_to_string(out.join("solve.csv")).unwrap(), csv);
    // 17 significant digits
    let first = csv.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(first.split('e').next().unwrap().replace('.', "").len(), 17);
}

#[test]
fn sticky_oracle_flags_the_atom() {
    let o = qsdlab(&["sticky-oracle", "--grid", "2001"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    let flagged: Vec<&str> = csv.lines().skip(1).filter(|l| l.ends_with(",1")).collect();
    assert_eq!(flagged.len(), 1);
    let cols: Vec<f64> = flagged[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(cols[0], 0.0);
    // atom γ sin γ / 2 plus the density over one cell of width 1e-3
    assert!((cols[1] - 0.4741).abs() < 2e-3, "{}", cols[1]);
    let o = qsdlab(&["sticky-oracle", "--grid", "2001", "--format", "json"]);
    let j: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((j["gamma"].as_f64().unwrap() - 1.0769).abs() < 1e-4);
}

#[test]
fn check_b_exit_codes() {
    let o = qsdlab(&["--model", "bm", "check-b", "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let j: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["verdict"], "Fail");
    assert_eq!(j["failed"], "EntranceAtInfinity");
    assert_eq!(qsdlab(&["--model", "exit15", "check-b"]).status.code(), Some(0));
    assert_eq!(qsdlab(&["--model", "log-borderline", "check-b"]).status.code(), Some(2));
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"measure": {"support": [0, 1], "densty": "1"}}"#);
    let o = qsdlab(&["--config", &bad, "solve"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "SchemaError");
    assert!(e["message"].as_str().unwrap().contains("measure.densty"));

    let broken = write(dir.path(), "broken.json", "{\n  \"grid\": {\"n\": 10,,}\n}");
    let e = stderr_json(&qsdlab(&["--config", &broken, "solve"]));
    assert_eq!(e["error"], "ParseError");
    assert!(e["message"].as_str().unwrap().contains("line 2"));

    let e = stderr_json(&qsdlab(&["--model", "bm01", "survival"]));
    assert_eq!(e["error"], "SchemaError");
    assert!(e["message"].as_str().unwrap().contains("sim.seed"));

    let o = qsdlab(&["--model", "nope", "classify"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "SchemaError");

    let o = qsdlab(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "UsageError");
}

#[test]
fn simulation_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"measure": {"support": [0, 1]}, "grid": {"n": 32}, "sim": {"N": 3000, "seed": 5, "times": [0.1, 0.2, 0.4]}}"#,
    );
    let a = qsdlab(&["--config", &cfg, "--workers", "1", "survival"]);
    let b = qsdlab(&["--config", &cfg, "--workers", "3", "survival"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("t,survived,total,p,se\n"));
    let c = qsdlab(&["--config", &cfg, "--seed", "6", "survival"]);
    assert_ne!(a.stdout, c.stdout);
}

const SUBCOMMANDS: [&str; 14] = [
    "classify",
    "dual",
    "check-b",
    "solve",
    "invert",
    "moments",
    "simulate",
    "survival",
    "conditional",
    "tv-decay",
    "mg-probe",
    "duality-check",
    "reversibility-check",
    "sticky-oracle",
];

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let unit = write(
        dir.path(),
        "unit.json",
        r#"{"measure": {"support": [0, 1]}, "grid": {"n": 40}, "sim": {"N": 2000, "t_end": 0.2, "seed": 1, "dt": 0.001}}"#,
    );
    let half = write(
        dir.path(),
        "half.json",
        r#"{"measure": {"support": [0, "inf"], "density": "x^-4"}, "grid": {"n": 64}, "sim": {"N": 500, "t_end": 0.5, "seed": 2}}"#,
    );
    let bm = write(
        dir.path(),
        "bm.json",
        r#"{"measure": {"support": [0, "inf"]}, "grid": {"n": 64, "truncation": 20}, "sim": {"N": 500, "t_end": 0.5, "seed": 3}}"#,
    );
    let cases: Vec<Vec<&str>> = vec![
        vec!["--config", &half, "classify"],
        vec!["--config", &bm, "dual", "--points", "8"],
        vec!["--model", "exit15", "check-b"],
        vec!["--config", &unit, "solve"],
        vec!["--config", &unit, "invert"],
        vec!["--config", &unit, "moments", "--k", "4", "--t", "0.5"],
        vec!["--config", &unit, "simulate", "--paths", "5", "--x0", "0.3"],
        vec!["--config", &unit, "survival", "--x0", "0.5", "--steps", "4", "--window", "0.05,0.2"],
        vec!["--config", &unit, "survival", "--sigma", "1", "--steps", "4"],
        vec!["--config", &unit, "conditional", "--bins", "4"],
        vec!["--config", &unit, "tv-decay", "--bins", "2", "--steps", "4", "--x0", "0.2"],
        vec!["--config", &half, "mg-probe", "--z", "1,2", "--cells", "64"],
        vec!["--config", &bm, "duality-check", "--x", "1,2", "--cells", "64", "--probe-cells", "64"],
        vec!["--config", &unit, "reversibility-check", "--f", "0.2,0.4", "--g", "0.6,0.8"],
        vec!["sticky-oracle", "--grid", "101"],
    ];
    let mut names = std::collections::BTreeSet::new();
    for args in cases {
        let out = dir.path().join("out");
        let mut full = args.clone();
        full.extend(["--out", out.to_str().unwrap()]);
        let o = qsdlab(&full);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let name = args.iter().find(|a| SUBCOMMANDS.contains(a)).unwrap();
        names.insert(name.to_string());
        assert!(out.join(format!("{name}.json")).exists(), "{name}");
        assert!(out.join(format!("{name}.csv")).exists(), "{name}");
        let text = stdout(&o);
        let header = text.lines().next().unwrap();
        assert!(header.split(',').all(|h| !h.is_empty()), "{name}: {header}");
    }
    assert_eq!(names.len(), 14);
}

fn suite_configs() -> Vec<RunConfig> {
    let base = |support: (f64, f64), density: &str, atoms: Vec<(f64, f64)>, trunc: Option<f64>| RunConfig {
        measure: Some(MeasureConfig {
            support: (support.0, qsdlab::cli::config::Endpoint(support.1)),
            density: density.into(),
            atoms,
        }),
        grid: GridConfig { n: 500, truncation: trunc },
        solver: SolverConfig::default(),
        sim: SimConfig {
            seed: Some(11),
            times: vec![0.25, 0.5],
            ..SimConfig::default()
        },
        out: None,
    };
    let inf = f64::INFINITY;
    let example1: Vec<(f64, f64)> = (2..100).rev().map(|i| (1.0 / (i * i) as f64, 1.0)).collect();
    vec![
        base((0.0, 1.0), "1", vec![], None),
        base((-1.0, 1.0), "1", vec![(0.0, 1.0)], None),
        base((0.0, inf), "1", vec![], Some(100.0)),
        base((0.0, inf), "if(x < 1, 1, x^-3)", vec![], Some(1e5)),
        base((0.0, inf), "if(x < 1, x^-1.5, x^-3)", vec![], Some(1e5)),
        base((0.0, inf), "if(x < 1, 1, x^-3)", vec![(0.5, 1.0)], Some(1e5)),
        base((0.0, inf), "if(x < 1, 1, x^-3)", example1, Some(1e5)),
        base((0.0, inf), "if(x < 0.5, x^-2 / ln(1/x), x^-3)", vec![], Some(1e5)),
        base((0.0, inf), "x^-4", vec![], Some(1e4)),
    ]
}

#[test]
fn configs_round_trip() {
    for c in suite_configs() {
        let text = serialize_config(&c);
        assert_eq!(parse_config(&text).unwrap(), c, "{text}");
        assert!(c.measure.as_ref().unwrap().build().is_ok());
    }
}
