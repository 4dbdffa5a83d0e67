use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn flqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flqr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = flqr(args);
    assert!(out.status.success(), "flqr {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let out = flqr(args);
    assert_eq!(out.status.code(), Some(code), "flqr {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// A simulated training sample in `x.csv` / `y.csv`.
    fn new() -> Self {
        let w = Workspace { dir: tempfile::tempdir().unwrap() };
        ok(&["simulate", "--experiment", "sample", "--n", "60", "--seed", "4", "--curves-out", &w.p("x.csv"), "--y-out", &w.p("y.csv")]);
        w
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_owned()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, out: &str, extra: &[&str]) {
        let (x, y) = (self.p("x.csv"), self.p("y.csv"));
        let mut args = vec!["fit", "--curves", &x, "--y", &y, "--seed", "7", "--out", out];
        args.extend_from_slice(extra);
        ok(&args);
    }
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV, split into fields, header dropped.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn fit_writes_the_estimate_and_its_trace() {
    let w = Workspace::new();
    w.fit(&w.p("fit.json"), &["--tau", "0.5"]);
    let art = json(&w.path("fit.json"));
    let f = &art["fit"];
    for key in ["alpha_hat", "beta_hat", "lambda", "h", "trace"] {
        assert!(!f[key].is_null(), "missing {key}");
    }
    assert_eq!(f["tau"], 0.5);
    assert!(f["lambda"].as_f64().unwrap() > 0.0);
    assert!(!f["trace"]["objective_path"].as_array().unwrap().is_empty());
}

#[test]
fn simulate_writes_a_long_format_report() {
    let csv = ok(&["simulate", "--design", "normal", "--snr", "10", "--n", "40", "--reps", "2", "--seed", "1"]);
    assert!(csv.starts_with("replicate,method,tau,metric,value\n"));
    let r = rows(&csv);
    for method in ["rkhs", "fpca"] {
        for tau in ["0.25", "0.5", "0.75"] {
            assert_eq!(r.iter().filter(|f| f[1] == method && f[2] == tau && f[3] == "mise").count(), 2);
        }
    }
}

#[test]
fn scb_lower_never_exceeds_upper() {
    let w = Workspace::new();
    w.fit(&w.p("fit.json"), &["--tau", "0.5"]);
    let csv = ok(&["scb", "--fit", &w.p("fit.json"), "--level", "0.95", "--paths", "2000", "--seed", "3"]);
    let r = rows(&csv);
    assert_eq!(r.len(), 101);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for f in &r {
        let (lo, hi): (f64, f64) = (f[col("lower")].parse().unwrap(), f[col("upper")].parse().unwrap());
        assert!(lo <= hi);
    }
}

#[test]
fn inference_and_prediction_commands_cover_every_level() {
    let w = Workspace::new();
    w.fit(&w.p("fam.json"), &["--taus", "0.25,0.5,0.75", "--lambda", "1e-3"]);
    ok(&["simulate", "--experiment", "sample", "--n", "10", "--seed", "99", "--curves-out", &w.p("new.csv"), "--y-out", &w.p("new_y.csv")]);
    let fam = w.p("fam.json");
    let new = w.p("new.csv");

    let pred = ok(&["predict", "--fit", &fam, "--curves", &new]);
    assert_eq!(rows(&pred).len(), 30);

    let ci = ok(&["ci", "--fit", &fam, "--t", "0.5"]);
    assert_eq!(rows(&ci).len(), 3);

    let qci = ok(&["quantile-ci", "--fit", &fam, "--x0", &new]);
    assert!(qci.starts_with("curve,tau,center,lower,upper,half_width,sigma2\n"));
    for f in rows(&qci) {
        let v: Vec<f64> = f[2..].iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[1] <= v[0] && v[0] <= v[2] && v[4] > 0.0);
    }

    let mono = ok(&["monotonize", "--fit", &fam, "--x0", &new]);
    assert!(!rows(&mono).is_empty());
}

#[test]
fn monotonize_reads_a_path_file() {
    let w = Workspace::new();
    std::fs::write(w.path("path.csv"), "tau,value\n0.1,1.0\n0.3,0.5\n0.5,0.7\n0.7,2.0\n0.9,1.9\n").unwrap();
    let out = ok(&["monotonize", "--path", &w.p("path.csv"), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let combined: Vec<f64> = v[0]["combined"]["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(combined.len(), 5);
    assert!(combined.windows(2).all(|p| p[0] <= p[1]));
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let w = Workspace::new();
    let (x, y) = (w.p("x.csv"), w.p("y.csv"));
    // seeds are mandatory for stochastic commands
    fails(&["fit", "--curves", &x, "--y", &y, "--tau", "0.5"], 1);
    fails(&["simulate", "--reps", "1"], 1);
    let err = fails(&["fit", "--curves", &w.p("nope.csv"), "--y", &y, "--tau", "0.5", "--seed", "1"], 1);
    assert!(err.contains("nope.csv"));
    let err = fails(&["fit", "--curves", &x, "--y", &y, "--tau", "1.5", "--seed", "1"], 1);
    assert!(err.contains("DomainError"));

    let n = std::fs::read_to_string(&y).unwrap().lines().count();
    std::fs::write(w.path("flat.csv"), "1.0\n".repeat(n)).unwrap();
    let never = w.p("never.json");
    let err = fails(&["fit", "--curves", &x, "--y", &w.p("flat.csv"), "--tau", "0.5", "--seed", "1", "--out", &never], 2);
    assert!(err.contains("DegenerateBandwidth"));
    // a failed run leaves no output behind
    assert!(!w.path("never.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let w = Workspace::new();
    w.fit(&w.p("a.json"), &["--tau", "0.5"]);
    w.fit(&w.p("b.json"), &["--tau", "0.5"]);
    assert_eq!(std::fs::read(w.path("a.json")).unwrap(), std::fs::read(w.path("b.json")).unwrap());
    let scb = ["scb", "--fit", &w.p("a.json"), "--paths", "1000", "--seed", "5"];
    assert_eq!(ok(&scb), ok(&scb));
    let sim = ["simulate", "--n", "40", "--reps", "2", "--seed", "3", "--methods", "rkhs"];
    assert_eq!(ok(&sim), ok(&sim));
}

#[test]
fn every_subcommand_documents_its_defaults() {
    let expected: &[(&str, &[&str])] = &[
        ("fit", &["[default: 5]", "[default: one-se]", "[default: 0.000001]", "[default: 10000]", "1e-9 to 1e-3"]),
        ("predict", &["[default: csv]"]),
        ("ci", &["[default: 0.95]", "[default: 30]"]),
        ("scb", &["[default: 0.95]", "[default: 10000]"]),
        ("quantile-ci", &["[default: 0.95]"]),
        ("monotonize", &["[default: 0.5]"]),
        ("simulate", &["[default: 10]", "[default: 200]", "[default: 0.25,0.5,0.75]"]),
        ("bench", &["[default: 5]"]),
    ];
    for (cmd, defaults) in expected {
        let help = ok(&[cmd, "--help"]);
        for d in *defaults {
            assert!(help.contains(d), "`{cmd} --help` lacks {d}:\n{help}");
        }
    }
    assert!(ok(&["--version"]).contains("format rev"));
}

#[test]
fn config_file_mirrors_flags_and_flags_win() {
    let w = Workspace::new();
    let cfg = serde_json::json!({
        "curves": w.p("x.csv"),
        "y": w.p("y.csv"),
        "tau": 0.5,
        "seed": 7,
        "lambda": 1e-2,
    });
    std::fs::write(w.path("run.json"), cfg.to_string()).unwrap();
    ok(&["--config", &w.p("run.json"), "fit", "--lambda", "1e-3", "--out", &w.p("cfg.json")]);
    w.fit(&w.p("flags.json"), &["--tau", "0.5", "--lambda", "1e-3"]);
    assert_eq!(std::fs::read(w.path("cfg.json")).unwrap(), std::fs::read(w.path("flags.json")).unwrap());

    std::fs::write(w.path("bad.json"), r#"{"no_such_flag": 1}"#).unwrap();
    fails(&["--config", &w.p("bad.json"), "fit"], 1);
}
