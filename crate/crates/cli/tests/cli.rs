use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[noise]
hurst = 0.75
horizon = 0.125
steps = 64
seeds = 1, 2

[particles]
n_list = 64, 128, 256

[pde]
resolution = 32

[analysis]
checkpoints = 4
";

fn holderflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holderflow"))
        .args(args)
        .env_remove("HOLDERFLOW_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.conf");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn help_and_usage_errors() {
    let o = holderflow(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("HOLDERFLOW_OUT"));
    assert_eq!(holderflow(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(holderflow(&["noise", "--hurst"]).status.code(), Some(2));
}

#[test]
fn hypothesis_violations_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = holderflow(&["noise", "--hurst", "0.4", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let cfg = write_config(tmp.path(), "[kernel]\nbeta = 1\n");
    let o = holderflow(&["config", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
    let cfg = write_config(tmp.path(), "[kernel]\nwidth = 1\n");
    let o = holderflow(&["config", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("unknown key `kernel.width`"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = holderflow(&["config", "--config", "/nonexistent/exp.conf"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn config_output_parses_back_to_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let first = stdout(&holderflow(&["config"]));
    let cfg = write_config(tmp.path(), &first);
    let second = holderflow(&["config", "--config", &cfg]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(stdout(&second), first);
}

#[test]
fn noise_writes_a_path_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = holderflow(&["noise", "--hurst", "0.7", "--steps", "128", "--seed", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("fbm_h0.7_seed3.csv")).unwrap();
    // header, column line and 129 nodes
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 130);
    let again = tempfile::tempdir().unwrap();
    holderflow(&["noise", "--hurst", "0.7", "--steps", "128", "--seed", "3", "--out", again.path().to_str().unwrap()]);
    assert_eq!(fs::read_to_string(again.path().join("fbm_h0.7_seed3.csv")).unwrap(), text);
}

#[test]
fn pde_then_besov() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("pde");
    let o = holderflow(&["pde", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("config.echo").exists());
    assert!(out.join("rho_0000.csv").exists() && out.join("v0_0004.csv").exists());
    let rho = out.join("rho_0000.csv");
    let o = holderflow(&["besov", "--input", rho.to_str().unwrap(), "--s", "-2", "--p", "2", "--q", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn simulate_writes_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("sim");
    let o = holderflow(&["simulate", "--config", &cfg, "--n", "128", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for c in 0..=4 {
        assert!(out.join(format!("particles_{c:04}.csv")).exists());
    }
}

#[test]
fn converge_writes_report_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("conv");
    let o = holderflow(&["converge", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "seed,N,t,kinetic_term,density_term,Q,besov_S,besov_V,flags"));
    // 2 seeds x 3 sizes x 5 checkpoints
    assert_eq!(csv.lines().filter(|l| l.ends_with(",ok")).count(), 30);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["seeds"].as_array().unwrap().len(), 2);
    assert!(json["manifest"]["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_holderflow"))
        .args(["noise", "--steps", "16", "--seed", "2"])
        .env("HOLDERFLOW_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("fbm_h0.75_seed2.csv").exists());
}

#[test]
fn quick_check_passes() {
    let o = holderflow(&["check", "--quick"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains(" PASS ")).count(), 7);
}
