use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_temlab"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .env_remove("TEM_OUT")
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn map_scenario_annotates_fixed_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["map"], &config("map_tanh.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let map = read_csv(&dir.path().join("map.csv"));
    assert_eq!(map[0], ["I", "phi", "psi"]);
    assert_eq!(map.len(), 202);
    let points = read_csv(&dir.path().join("psi_fixed_points.csv"));
    let names: Vec<&str> = points[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["i_bar", "i_minus", "i_plus"]);
    for row in &points[1..] {
        // fixed points of Psi
        let i: f64 = row[1].parse().unwrap();
        let psi: f64 = row[3].parse().unwrap();
        assert!((i - psi).abs() < 1e-9);
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["classification"], "period2");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn large_delay_alternates_between_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["delay"], &config("delay_period2.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("delay_trace.csv"));
    assert_eq!(rows[0], ["tau", "I_d", "I_inf"]);
    let value = |tau: f64| -> f64 {
        let row = rows[1..]
            .iter()
            .min_by(|a, b| {
                let da = (a[0].parse::<f64>().unwrap() - tau).abs();
                let db = (b[0].parse::<f64>().unwrap() - tau).abs();
                da.total_cmp(&db)
            })
            .unwrap();
        row[1].parse().unwrap()
    };
    // late in each interval the activity sits near I+ then I- then I+
    for k in 0..5 {
        let expected = if k % 2 == 0 { 0.96464 } else { 0.53536 };
        assert!((value(k as f64 + 0.9) - expected).abs() < 1e-2, "interval {k}");
    }
}

#[test]
fn moderate_delay_scenario_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["delay"], &config("delay_moderate.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let iterates = summary["iterates"].as_array().unwrap();
    let last = iterates.last().unwrap().as_f64().unwrap();
    assert!((last - 0.75).abs() < 0.05);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["delay", "--delay", "10", "--intervals", "2", "--i-ini", "i_plus"],
        &config("delay_period2.json"),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["delay"], 10.0);
    assert_eq!(summary["intervals"], 2);
    assert!((summary["i_ini"].as_f64().unwrap() - 0.9646).abs() < 1e-3);
}

#[test]
fn invalid_delay_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["delay"], &config("invalid_delay.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.delay"));
}

#[test]
fn mode_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["steady"], &config("map_tanh.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.mode"));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wide.json");
    fs::write(
        &cfg,
        r#"{"model": {"kind": "step", "r0": 0.01, "sigma": 100.0}, "grid": {"dx": 0.1, "x_max": 5.0}, "run": {"mode": "steady"}}"#,
    )
    .unwrap();
    let out = run(&["steady"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn steady_prints_the_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["steady"], &config("sweep_a.json"), dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("I_bar = 1.000000000000"), "{stdout}");
    assert_eq!(read_csv(&dir.path().join("density.csv"))[0], ["x", "n"]);
}

#[test]
fn sweep_writes_one_directory_per_config_under_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("sweep")
        .arg(config("sweep_a.json"))
        .arg(config("map_tanh.json"))
        .env("TEM_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("sweep_a/density.csv").exists());
    assert!(dir.path().join("map_tanh/map.csv").exists());
}

#[test]
fn every_shipped_config_parses() {
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let parsed = temlab::config::ExperimentConfig::load(&path);
        if path.file_stem().unwrap() == "invalid_delay" {
            assert!(parsed.is_err());
        } else {
            assert!(parsed.is_ok(), "{}: {:?}", path.display(), parsed.err());
        }
    }
}
