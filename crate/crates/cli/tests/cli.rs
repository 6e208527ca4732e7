use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn wkam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wkam"))
        .args(args)
        .env_remove("WKAM_THREADS")
        .output()
        .unwrap()
}

fn run_in(out: &Path, cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    wkam(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn check_passes_on_the_single_well() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "check", &config("single_well.toml"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("assumptions.json"));
    for key in ["convexity", "coercivity", "growth", "symmetry"] {
        assert_eq!(report[key]["passed"], true, "{key}");
    }
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "check");
    assert_eq!(manifest["outcome"]["passed"], true);
}

#[test]
fn mather_lp_writes_measure_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "mather-lp", &config("single_well.toml"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("mather_lp.json"));
    let value = summary["value"].as_f64().unwrap();
    assert!((-1e-9..=5.0 / 64.0).contains(&value), "{value}");
    let csv = fs::read_to_string(dir.path().join("measure.csv")).unwrap();
    assert!(csv.starts_with("x,q,i,weight\n"));
    assert!(dir.path().join("measure.dat").exists());
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["constants"]["n_q"], 17.0);
    assert_eq!(manifest["constants"]["q_max"], 3.0);
    assert!(manifest["tolerances"]["lp_reduced_cost"].is_number());
    let hash = manifest["inputs"].as_object().unwrap().values().next().unwrap();
    assert_eq!(hash.as_str().unwrap().len(), 64);
}

#[test]
fn artifacts_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run_in(d.path(), "uniqueness-set", &config("double_well.toml"), &["--seed", "5"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["uniqueness_set.csv", "uniqueness_set.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "cauchy", &config("single_well.toml"), &["--grid", "32", "--eps", "0.2,0.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["constants"]["n"], 32.0);
    let runs = manifest["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for r in runs {
        assert!(r["dt"].as_f64().unwrap() > 0.0 && r["theta"].as_f64().unwrap() > 0.0);
    }
    let report = json(&dir.path().join("cauchy.json"));
    let dev: Vec<f64> = report.as_array().unwrap().iter().map(|r| r["deviation"].as_f64().unwrap()).collect();
    assert!(dev[1] < dev[0]);
    assert!(dir.path().join("u_eps_0.1.csv").exists());
}

#[test]
fn adjoint_commands_report_conservation_and_measures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("double_well.toml");
    let out = run_in(dir.path(), "adjoint", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("adjoint.json"));
    assert!(report[0]["max_mass_error"].as_f64().unwrap() <= 1e-10);
    let out = run_in(dir.path(), "mather-adjoint", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("mather_adjoint.json"));
    assert!(report[0]["holonomy_residual"].as_f64().unwrap() <= 0.1);
}

#[test]
fn compare_passes_and_stays_silent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("double_well.toml");
    let out = run_in(dir.path(), "compare", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("compare.json"))["verdict"], "pass");
    // Swap the roles: v2 ≤ v1 everywhere, the hypothesis fails at x = 1/2.
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("anchors_1 = [0.0, 0.5]", "anchors_1 = [0.0]")
        .replace("anchors_2 = [0.0]", "anchors_2 = [0.0, 0.5]")
        .replace("shift_2 = 0.05", "shift_2 = 0.0");
    let swapped = dir.path().join("swapped.toml");
    fs::write(&swapped, text).unwrap();
    let out = run_in(dir.path(), "compare", &swapped, &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("compare.json"));
    assert_eq!(report["verdict"], "silent");
}

#[test]
fn ergodic_writes_gnuplot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "ergodic", &config("single_well.toml"), &["--tol", "1e-8"]);
    assert_eq!(out.status.code(), Some(0));
    let lambda = json(&dir.path().join("ergodic.json"))["lambda"].as_f64().unwrap();
    assert!(lambda.abs() <= 0.02);
    let dat = fs::read_to_string(dir.path().join("v.dat")).unwrap();
    assert!(dat.starts_with("# x v1 v2\n"));
    assert_eq!(dat.lines().count(), 65);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[problem]\npotential = \"sin(PI*x)^2\"\ncoupling = [[0.0]]\ncomponents = 1\nfamly = \"quartic\"\n").unwrap();
    let out = run_in(dir.path(), "ergodic", &bad, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("famly") && err.contains("line 5"), "{err}");

    fs::write(&bad, "[problem]\npotential = \"sin(PI*x)^2\"\ncoupling = [[0.0, 1.0]]\ncomponents = 2\n").unwrap();
    let out = run_in(dir.path(), "ergodic", &bad, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.coupling"));

    // An anchor off the zero set is a precondition failure.
    let text = fs::read_to_string(config("double_well.toml")).unwrap().replace("anchors_2 = [0.0]", "anchors_2 = [0.25]");
    fs::write(&bad, text).unwrap();
    assert_eq!(run_in(dir.path(), "compare", &bad, &[]).status.code(), Some(2));

    assert_eq!(wkam(&["ergodic"]).status.code(), Some(2));
    assert_eq!(wkam(&["mather-lp", "/nonexistent.toml"]).status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_wkam"))
        .args(["check", config("single_well.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .env("WKAM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn truncated_velocity_lattice_is_a_verification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("single_well.toml"))
        .unwrap()
        .replace("q_max = 3.0", "q_max = 0.01")
        .replace("eps = [0.2, 0.1, 0.05]", "eps = [0.2]");
    let cfg = dir.path().join("tight.toml");
    fs::write(&cfg, text).unwrap();
    let out = run_in(dir.path(), "mather-adjoint", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Qmax"));
}
