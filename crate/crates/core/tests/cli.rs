use std::path::PathBuf;
use std::process::{Command, Output};

fn acgn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acgn"))
        .args(args)
        .output()
        .expect("failed to launch acgn")
}

fn config(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "examples", "configs", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn capacity_reports_the_awgn_bound() {
    let o = acgn(&["capacity", "--config", &config("awgn_two_channel.toml")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1.08496"), "{}", stdout(&o));
}

#[test]
fn capacity_json_is_a_run_record() {
    let o = acgn(&["capacity", "--config", &config("scalar_ar1.toml"), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let record = acgn::config::RunRecord::from_json(&stdout(&o)).unwrap();
    let bits = record.capacity.unwrap().lower_bound_bits;
    assert!((bits - 1.0).abs() < 1e-9);
}

#[test]
fn waterfill_from_variances() {
    let o = acgn(&["waterfill", "--eigs", "1,2", "--budget", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1.08496"));
}

#[test]
fn simulate_passes_all_checks() {
    let o = acgn(&["simulate", "--config", &config("scalar_white.toml"), "--steps", "200000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("6/6 checks pass"));
}

#[test]
fn dump_is_reproducible_and_optional() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg = config("scalar_ar1.toml");
    for path in [&a, &b] {
        let o = acgn(&["simulate", "--config", &cfg, "--steps", "5000", "--seed", "9", "--dump", path.to_str().unwrap()]);
        assert_ne!(o.status.code(), Some(2));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("k,y"));
    assert_eq!(text.lines().count(), 5001);

    let o = acgn(&["simulate", "--config", &cfg, "--steps", "5000"]);
    assert_ne!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn perturbed_design_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("scalar_white.toml");
    let o = acgn(&["design", "--config", &cfg, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let mut record = acgn::config::RunRecord::from_json(&stdout(&o)).unwrap();
    let design = record.design.as_mut().unwrap();
    design.gain *= 1.1;
    let path = dir.path().join("design.json");
    std::fs::write(&path, record.to_json().unwrap()).unwrap();
    let o = acgn(&["verify", "--config", &cfg, "--design", path.to_str().unwrap(), "--steps", "200000"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn bad_budget_is_a_config_error() {
    let o = acgn(&["capacity", "--config", &config("scalar_white.toml"), "--budget", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget must be positive"));
}

#[test]
fn missing_config_is_a_config_error() {
    let o = acgn(&["capacity", "--config", "/nonexistent/channel.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_direct_controller_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("coupled_arma.toml")).unwrap();
    let text = text.replace("[options]", "[options]\ncontroller = \"direct\"");
    let path = dir.path().join("direct.toml");
    std::fs::write(&path, text).unwrap();
    let o = acgn(&["simulate", "--config", path.to_str().unwrap(), "--steps", "200000"]);
    assert_eq!(o.status.code(), Some(3));
}
