#![allow(clippy::excessive_precision)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn opgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .trim()
        .parse()
        .unwrap()
}

const TWO_PERSON: &str = r#"{
  "schema_version": 1,
  "kind": "quadratic",
  "persons": [
    {"dim": 1, "R": [[1.0]], "s": [0.0]},
    {"dim": 1, "R": [[1.0]], "s": [1.0]}
  ],
  "edges": [
    {"i": 0, "j": 1, "W": [[1.0]]},
    {"i": 1, "j": 0, "W": [[1.0]]}
  ]
}"#;

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn poa_of_two_person_example() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "two.json", TWO_PERSON);
    for solver in ["closed", "iterative"] {
        let o = opgame(&["poa", &f, "--solver", solver]);
        assert_eq!(o.status.code(), Some(0), "{o:?}");
        let text = stdout(&o);
        assert!((field(&text, "PoA:") - 10.0 / 9.0).abs() < 1e-8, "{text}");
        assert!((field(&text, "SC(x):") - 4.0 / 9.0).abs() < 1e-8);
        assert!((field(&text, "SC(y):") - 0.4).abs() < 1e-8);
    }
}

#[test]
fn poa_formats() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "two.json", TWO_PERSON);
    let o = opgame(&["poa", &f, "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["poa_flag"], "ratio");
    assert!((v["poa"].as_f64().unwrap() - 10.0 / 9.0).abs() < 1e-12);
    assert!((v["nash"][0][0].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let o = opgame(&["poa", &f, "--format", "csv"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("sc_nash,sc_optimum,poa,poa_flag"));
    assert!(lines.next().unwrap().contains(",ratio,"));
}

#[test]
fn malformed_files_exit_3() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "bad.json", "{\"schema_version\": 1, \"kind\": \"quadratic\"");
    assert_eq!(opgame(&["poa", &f]).status.code(), Some(3));
    let f = write(
        &dir,
        "neg.json",
        &TWO_PERSON.replacen("[[1.0]], \"s\": [0.0]", "[[-1.0]], \"s\": [0.0]", 1),
    );
    assert_eq!(opgame(&["poa", &f]).status.code(), Some(3));
    assert_eq!(opgame(&["poa", "/nonexistent/game.json"]).status.code(), Some(3));
    assert_eq!(opgame(&["poa"]).status.code(), Some(3));
}

#[test]
fn exp_tight_file_reaches_the_limit() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("exp.json");
    assert_eq!(
        opgame(&["generate", "exp-tight", "--out", path(&f)]).status.code(),
        Some(0)
    );
    let o = opgame(&["poa", path(&f)]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let poa = field(&stdout(&o), "PoA:");
    assert!((poa - 1.0614756908460860).abs() < 1e-6, "{poa}");
    // The closed-form solver applies to quadratic games only.
    assert_eq!(opgame(&["poa", path(&f), "--solver", "closed"]).status.code(), Some(3));
}

#[test]
fn nonconvex_file_is_a_solver_failure() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("nc.json");
    assert_eq!(
        opgame(&["generate", "nonconvex", "--out", path(&f)]).status.code(),
        Some(0)
    );
    assert_eq!(opgame(&["poa", path(&f)]).status.code(), Some(2));
}

#[test]
fn zeta_rows() {
    let o = opgame(&["zeta", "--alpha", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "alpha,zeta\n2,1.125\n");
    assert_eq!(opgame(&["zeta", "--alpha", "1"]).status.code(), Some(3));
    assert_eq!(opgame(&["zeta", "--alpha", "0.5"]).status.code(), Some(3));
    assert_eq!(opgame(&["zeta", "--range", "3:1:0.1"]).status.code(), Some(3));
    let o = opgame(&["zeta", "--range", "1.1:100:0.1", "--limit"]);
    let text = stdout(&o);
    let rows: Vec<(String, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, z) = l.split_once(',').unwrap();
            (a.to_string(), z.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 991);
    assert_eq!(rows.last().unwrap().0, "inf");
    let last_grid = rows[rows.len() - 2].1;
    assert!((last_grid - 1.06148).abs() < 1e-3, "{last_grid}");
}

#[test]
fn random_quadratic_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for f in [&a, &b] {
        let o = opgame(&[
            "generate",
            "random-quadratic",
            "--n",
            "5",
            "--m",
            "3",
            "--seed",
            "7",
            "--out",
            path(f),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.json");
    opgame(&[
        "generate",
        "random-quadratic",
        "--n",
        "5",
        "--m",
        "3",
        "--seed",
        "8",
        "--out",
        path(&c),
    ]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    assert_eq!(
        opgame(&["generate", "random-quadratic", "--n", "0"]).status.code(),
        Some(3)
    );
    assert_eq!(
        opgame(&["generate", "random-quadratic", "--density", "2"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn no_nash_file_is_flagged_and_diverges() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("nn.json");
    assert_eq!(
        opgame(&["generate", "no-nash", "--out", path(&f)]).status.code(),
        Some(0)
    );
    assert!(fs::read_to_string(&f).unwrap().contains("\"unsafe_indefinite\": true"));
    let o = opgame(&["simulate", path(&f), "--init", "random"]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    assert!(stdout(&o).contains("diverged"));
    // Nash solvers refuse it.
    assert_eq!(opgame(&["poa", path(&f)]).status.code(), Some(2));
}

#[test]
fn simulate_two_person_converges_with_trace() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "two.json", TWO_PERSON);
    let trace = dir.path().join("trace.csv");
    let o = opgame(&[
        "simulate",
        &f,
        "--init",
        "zeros",
        "--trace",
        path(&trace),
        "--stride",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("status: converged"));
    assert!((field(&text, "z[0]:") - 1.0 / 3.0).abs() < 1e-9);
    assert!((field(&text, "z[1]:") - 2.0 / 3.0).abs() < 1e-9);
    let csv = fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,person,component,value"));
    assert_eq!(lines.next(), Some("0,0,0,0"));
    let o = opgame(&["simulate", &f, "--max-iter", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn suitability_checks() {
    let pass = opgame(&[
        "suitability",
        "--fn",
        "power:2",
        "--lambda",
        "0.75",
        "--kappa",
        "0.6667",
    ]);
    assert_eq!(pass.status.code(), Some(0), "{}", stdout(&pass));
    let fail = opgame(&["suitability", "--fn", "power:2", "--lambda", "0.5", "--kappa", "0.6"]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(stdout(&fail).contains("counterexample"));
    let exp = opgame(&[
        "suitability",
        "--fn",
        "exp",
        "--lambda",
        "0.7357588823428847",
        "--kappa",
        "0.6931471805599453",
    ]);
    assert_eq!(exp.status.code(), Some(0), "{}", stdout(&exp));
    let search = opgame(&["suitability", "--fn", "square", "--search"]);
    assert_eq!(search.status.code(), Some(0));
    assert!((field(&stdout(&search), "ratio:") - 1.125).abs() < 5e-3);
    assert_eq!(opgame(&["suitability", "--fn", "tan"]).status.code(), Some(3));
    assert_eq!(opgame(&["suitability", "--fn", "exp"]).status.code(), Some(3));
}
