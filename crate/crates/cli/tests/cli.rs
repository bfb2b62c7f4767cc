use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_strata");

const SMALL: &str = r#"
[microstructure]
mode = "periodic"
epsilon = 0.25
epsilon_list = [0.25, 0.125, 0.0625]
r_exponent = 2.0

[material]
soft = { class = "unit", mu = 1.0, lambda = 1.0 }

[loads]
f = [{ amp = [1.0, 0.5], p = 1, q = 1 }]

[time]
mode = "static"

[solver]
n1 = 8
cells_per_layer = 4
cells_per_gap = 4
"#;

fn run(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn fine_and_effective_happy_path() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["fine"], Some(SMALL));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(tmp.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "fine");
    assert_eq!(m["regime"]["class"], "unit");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let traj = read(tmp.path(), "fine_trajectory.csv");
    assert!(traj.starts_with("t,x1,x3,u1,u3,v1,v3\n"));
    assert!(m["artifacts"].as_array().unwrap().iter().any(|a| a == "layers.csv"));

    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["effective", "--format", "both"], Some(SMALL));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/vtk/effective_0000.vtk").exists());
    assert!(read(tmp.path(), "effective_trajectory.csv").lines().count() > 1);
}

#[test]
fn thickness_violation_exits_3_with_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = SMALL.replace("epsilon = 0.25", "epsilon = 0.5").replace("r_exponent = 2.0", "r_exponent = 1.5");
    let out = run(tmp.path(), &["fine"], Some(&cfg));
    assert_eq!(out.status.code(), Some(3));
    let m = manifest(tmp.path());
    assert_eq!(m["status"], "error");
    assert_eq!(m["error"]["class"], "Validation");
    assert_eq!(m["error"]["kind"], "ThicknessViolation");
    assert_eq!(m["exit_code"], 3);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["fine"], Some("[geometry]\nwidht = 1.0\n"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(manifest(tmp.path())["error"]["class"], "ConfigParse");

    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["compare"], None);
    assert_eq!(out.status.code(), Some(2));

    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["fine"], Some("[microstructure]\nmode = \"periodic\"\n"));
    assert_eq!(out.status.code(), Some(2), "missing epsilon is a config error");
}

#[test]
fn sweep_writes_report_and_acceptance_exit_code() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["sweep", "--threads", "2"], Some(SMALL));
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 5, "exit {code}: {}", String::from_utf8_lossy(&out.stderr));
    let csv = read(tmp.path(), "diagnostics.csv");
    assert!(csv.starts_with("epsilon,quantity,value,baseline,ratio,pass\n"));
    for eps in ["0.25,", "0.125,", "0.0625,"] {
        assert!(csv.lines().any(|l| l.starts_with(eps)));
    }
    let m = manifest(tmp.path());
    assert_eq!(m["threads"], 2);
    assert_eq!(m["status"], if code == 0 { "ok" } else { "error" });
    let summary: Value = serde_json::from_str(&read(tmp.path(), "diagnostics_summary.json")).unwrap();
    assert_eq!(summary["pass"], code == 0);
}

const STOCHASTIC: &str = r#"
[geometry]
length = 2.0

[microstructure]
mode = "stochastic"
epsilon = 0.125
epsilon_list = [0.125, 0.0625]
seed = 5
replicas = 3
process = { kind = "bernoulli_lattice", p = 0.5 }

[material]
soft = { class = "unit", mu = 1.0, lambda = 1.0 }

[time]
mode = "static"

[solver]
n1 = 8
cells_per_layer = 4
cells_per_gap = 4
"#;

#[test]
fn outputs_are_byte_reproducible() {
    let runs: Vec<TempDir> = (0..2)
        .map(|_| {
            let tmp = TempDir::new().unwrap();
            let out = run(tmp.path(), &["fine"], Some(STOCHASTIC));
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            tmp
        })
        .collect();
    for name in ["layers.csv", "layer_density.csv", "fine_trajectory.csv", "fine_report.json"] {
        assert_eq!(read(runs[0].path(), name), read(runs[1].path(), name), "{name}");
    }

    let other = TempDir::new().unwrap();
    let out = run(other.path(), &["fine", "--seed", "6"], Some(STOCHASTIC));
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(read(runs[0].path(), "layers.csv"), read(other.path(), "layers.csv"));
    assert_eq!(manifest(other.path())["seeds"]["microstructure"], 6);
}

#[test]
fn stochastic_density_report() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["stochastic"], Some(STOCHASTIC));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(tmp.path(), "density_report.csv");
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn selftest_passes_without_config() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["selftest"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(tmp.path(), "selftest.csv").lines().skip(1).all(|l| l.ends_with(",true")));
}
