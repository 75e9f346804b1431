use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
grids.epsilons = [1.0, 0.5]
grids.times = [0.3, 1.0]
grids.verticals = [1.0, 4.0]
grids.sigmas = [0.2, 1.0]
discretization.N = 16
discretization.maxMode = 80
discretization.cutoff = 4
";

fn torsionlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torsionlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("TORSIONLAB_OUT")
        .output()
        .expect("binary runs")
}

fn with_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spectrum_writes_three_or_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = torsionlab(&["spectrum", "--out", "a"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["base", "fiber", "product"] {
        let text = fs::read_to_string(dir.path().join(format!("a/spectrum_{name}.csv"))).unwrap();
        assert!(text.starts_with("degree,q_base,q_fiber,eigenvalue,multiplicity\n"));
    }
    assert!(!dir.path().join("a/spectrum_twisted.csv").exists());

    let cfg = with_config(dir.path(), "geometry.alpha = 3.14159\n");
    let out = torsionlab(&["spectrum", "--config", &cfg, "--out", "b"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("b/spectrum_twisted.csv").exists());
}

#[test]
fn config_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = torsionlab(&["verify", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));

    let cfg = with_config(dir.path(), "discretization.maxMode = 0\n");
    assert_eq!(torsionlab(&["spectrum", "--config", &cfg], dir.path()).status.code(), Some(65));
    let cfg = with_config(dir.path(), "geometry.radius = 2.0\n");
    assert_eq!(torsionlab(&["spectrum", "--config", &cfg], dir.path()).status.code(), Some(65));
    assert_eq!(torsionlab(&["adiabatic", "--only", "nope"], dir.path()).status.code(), Some(64));
}

#[test]
fn torsion_of_unit_and_standard_circle() {
    let dir = tempfile::tempdir().unwrap();
    for (l, want, name) in [("1.0", 0.0, "unit"), ("6.283185307179586", -1.837877066409345, "standard")] {
        let cfg = with_config(dir.path(), &format!("geometry.L = {l}\n"));
        let out = torsionlab(&["torsion", "--config", &cfg, "--out", name], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let closed = json(&dir.path().join(format!("{name}/torsion_M_closed_form.json")));
        assert!((closed["log_torsion"].as_f64().unwrap() - want).abs() < 1e-6);
        assert_eq!(closed["method"], "spectral-closed-form");
        let main = json(&dir.path().join(format!("{name}/main_theorem.json")));
        assert!(main["residual"].as_f64().unwrap().abs() < 1e-3);
    }
}

#[test]
fn only_flag_env_output_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_torsionlab"))
            .args(["adiabatic", "--config", &cfg, "--only", "alpha-form", "--jobs", "2"])
            .current_dir(dir.path())
            .env("TORSIONLAB_OUT", out)
            .output()
            .unwrap()
    };
    assert!(run("x").status.success());
    assert!(run("y").status.success());
    let x = fs::read(dir.path().join("x/alpha-form.csv")).unwrap();
    let y = fs::read(dir.path().join("y/alpha-form.csv")).unwrap();
    assert_eq!(x, y);
    assert!(!dir.path().join("x/spectral-gap.csv").exists());
    let summary = json(&dir.path().join("x/summary.json"));
    assert_eq!(summary["reports"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_seeded_algebra_and_failing_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = torsionlab(&["verify", "--only", "clifford", "--seed", "11", "--out", "v"], dir.path());
    assert!(out.status.success());
    let summary = json(&dir.path().join("v/summary.json"));
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["failing"].as_array().unwrap().len(), 0);

    // a zero tolerance on the torsion check cannot be met by the heat split path
    let cfg = with_config(dir.path(), "tolerances.\"circle-torsion.heat_split_log_torsion\" = 0.0\n");
    let out = torsionlab(&["verify", "--config", &cfg, "--only", "circle-torsion", "--out", "w"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("circle-torsion"));
}
