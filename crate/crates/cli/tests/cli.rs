use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const REGULAR: &str = r#"
model = "REGULAR_EXP"
theta0 = 0.5
regime = "regular"
n = 60
replicates = 12
seed = 11
limit_draws = 500

[estimator]
grid_size = 101
bayes_panels = 400
"#;

fn nonreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonreg"))
        .args(args)
        .output()
        .expect("spawn nonreg")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_event_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", REGULAR);
    let out = path(dir.path(), "events.csv");
    let o = nonreg(&["simulate", &scenario, "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trajectory_index,event_time"));
    assert!(lines.count() > 10);
    assert!(!text.contains('\r'));
}

#[test]
fn missing_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", &REGULAR.replace("model = \"REGULAR_EXP\"", ""));
    let o = nonreg(&["simulate", &scenario, "--out", &path(dir.path(), "e.csv")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model"));
}

#[test]
fn zero_intensity_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let text = REGULAR
        .replace("REGULAR_EXP", "FLAT")
        .replace("theta0 = 0.5", "theta0 = 0.5\nparams = { level = 0.0 }");
    let scenario = write(dir.path(), "s.toml", &text);
    let out = path(dir.path(), "events.csv");
    let o = nonreg(&["simulate", &scenario, "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "trajectory_index,event_time\n");
}

#[test]
fn regular_summary_reports_fisher_information() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", REGULAR);
    let prefix = path(dir.path(), "run");
    let o = nonreg(&["experiment", &scenario, "--out-prefix", &prefix]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.summary.json")).unwrap()).unwrap();
    // ∫ t² e^{θt} dt over [0, 1] at θ = 0.5
    let exact = (0.25 * 0.5f64.exp() - 2.0 * 0.5 * 0.5f64.exp() + 2.0 * 0.5f64.exp() - 2.0) / 0.125;
    let info = doc["fisher_information"].as_f64().unwrap();
    assert!((info - exact).abs() < 1e-8, "{info} vs {exact}");
    let table = std::fs::read_to_string(format!("{prefix}.table.csv")).unwrap();
    assert_eq!(table.lines().count(), 13);
}

#[test]
fn multi_n_summary_has_rate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", REGULAR);
    let prefix = path(dir.path(), "run");
    let o = nonreg(&["experiment", &scenario, "--out-prefix", &prefix, "--n", "40,80,160"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.summary.json")).unwrap()).unwrap();
    assert!(doc["rate_slope"].is_f64());
    assert!(doc["rate_stderr"].is_f64());
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", REGULAR);
    let a = path(dir.path(), "a");
    let b = path(dir.path(), "b");
    assert_eq!(nonreg(&["--workers", "1", "experiment", &scenario, "--out-prefix", &a]).status.code(), Some(0));
    assert_eq!(nonreg(&["--workers", "4", "experiment", &scenario, "--out-prefix", &b]).status.code(), Some(0));
    let ta = std::fs::read(format!("{a}.table.csv")).unwrap();
    let tb = std::fs::read(format!("{b}.table.csv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn limits_writes_one_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "draws.csv");
    let o = nonreg(&["limits", "--regime", "regular", "--param", "I=1", "--samples", "10", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| !r.contains(',') && r.parse::<f64>().is_ok()));
}

#[test]
fn limits_rejects_unknown_regime() {
    let o = nonreg(&["limits", "--regime", "sideways", "--samples", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn windows_sine_has_two_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "w.json");
    let o = nonreg(&["windows", "--model", "WINDOW_SINE", "--theta", "1", "--mu-star", "0.5", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let iv = doc["intervals"].as_array().unwrap();
    assert_eq!(iv.len(), 2);
    let expect = [[0.125, 0.375], [0.625, 0.875]];
    for (got, want) in iv.iter().zip(expect) {
        for k in 0..2 {
            assert!((got[k].as_f64().unwrap() - want[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn region_map_matches_closed_form_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "r.csv");
    let o = nonreg(&["region-map", "--x", "2", "--h1", "-0.9:2.1:7", "--h2", "-1.4:1.6:7", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (h1, h2): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        // closed-form region at x = 2: h1 < 1/ln 2 − 1 and h2 > 1/ln 2 − 2
        let r = 1.0 / 2f64.ln();
        let expected = h1 < r - 1.0 && h2 > r - 2.0;
        assert_eq!(f[3], expected.to_string(), "h1={h1} h2={h2}");
        assert_eq!(f[4], expected.to_string());
        rows += 1;
    }
    assert_eq!(rows, 49);
}
