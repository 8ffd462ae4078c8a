use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use treetn_cli::commands::{scan_rows, scan_slopes};
use treetn_cli::config::TrotterScanSpec;
use treetn_core::models::{error_series, SplittingOrder, TwoQubitModel};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn treetn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treetn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TFI_L2: &str = r#"{
    "model": {"name": "tfi", "L": 2, "J": 1.0, "g": 0.1},
    "method": {"name": "tebd", "dt": 0.01, "final_time": 1.0, "max_bond_dim": 2},
    "output": "run"
}"#;

#[test]
fn one_excitation_operator_has_68_entries() {
    let out = TempDir::new().unwrap();
    let cfg = configs().join("one_excitation.json");
    let o = treetn(&["build-ttno", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    let report = read_json(out.path().join("one_excitation.json"));
    assert_eq!(report["total_entries"], 68);
    assert_eq!(report["dense_check"]["passed"], true);
}

#[test]
fn identity_hamiltonian_has_unit_bonds() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "id.json",
        r#"{"system": {"tree": {"id": "r", "children": [{"id": "a", "children": [{"id": "b"}]}, {"id": "c"}]},
            "terms": [{"coeff": [1, 0]}]}, "output": "id"}"#,
    );
    let o = treetn(&["build-ttno", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    let report = read_json(dir.path().join("id.json"));
    let bonds = report["bond_dims"].as_object().unwrap();
    assert_eq!(bonds.len(), 3);
    assert!(bonds.values().all(|d| d == 1));
}

#[test]
fn compiled_bonds_equal_svd_bonds_on_random_hamiltonian() {
    let out = TempDir::new().unwrap();
    let cfg = configs().join("random_hamiltonian.json");
    let o = treetn(&["build-ttno", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--compare-svd"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("equal on all edges: true"));
    let report = read_json(out.path().join("random_hamiltonian.json"));
    assert_eq!(report["svd_comparison"]["bond_dims"], report["bond_dims"]);
}

#[test]
fn dense_check_above_the_cap_is_a_capability_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "big.json", r#"{"model": {"name": "tfi", "L": 4, "J": 1, "g": 0.5}, "dense_check": true}"#);
    let o = treetn(&["build-ttno", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn tebd_run_writes_101_rows_with_magnetisation() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tfi.json", TFI_L2);
    let o = treetn(&["evolve", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 102);
    assert!(lines[0].starts_with("t,M_re,M_im,bond:"));
    let side = read_json(dir.path().join("run.json"));
    assert_eq!(side["method"], "tebd");
    assert_eq!(side["rows"], 101);
    assert!(side["runtime_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn final_time_below_the_step_gives_a_single_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "short.json", &TFI_L2.replace("\"final_time\": 1.0", "\"final_time\": 0.005"));
    let o = treetn(&["evolve", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn identical_runs_write_identical_results() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tfi.json", TFI_L2);
    let mut csvs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let o = treetn(&["evolve", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
        assert!(o.status.success());
        csvs.push(std::fs::read(out.join("run.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn input_config_is_left_untouched() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tfi.json", TFI_L2);
    let o = treetn(&["evolve", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&cfg).unwrap(), TFI_L2);
}

#[test]
fn unknown_keys_exit_with_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.json", &TFI_L2.replace("\"g\"", "\"h\": 1, \"g\""));
    let o = treetn(&["evolve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));
}

#[test]
fn tebd_with_four_site_term_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "four.json", &TFI_L2.replace("\"g\": 0.1", "\"g\": 0.1, \"four_site\": true"));
    let o = treetn(&["evolve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("TDVP"));
}

#[test]
fn exact_comparison_beyond_the_oracle_cap_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "l5.json", &TFI_L2.replace("\"L\": 2", "\"L\": 5"));
    let o = treetn(&["compare-exact", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn overflowing_coefficients_exit_with_numeric_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "huge.json",
        r#"{"system": {"tree": {"id": "a", "children": [{"id": "b"}]},
            "terms": [{"coeff": [1e308, 0], "factors": {"a": "X", "b": "X"}}, {"coeff": [1e308, 0], "factors": {"a": "Z"}}]},
            "method": {"dt": 10.0, "final_time": 10.0},
            "operators": {"Z": {"kind": "product", "factors": {"a": "Z"}}}}"#,
    );
    for m in ["tebd", "tdvp1", "tdvp2"] {
        let o = treetn(&["evolve", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--method", m]);
        assert_eq!(o.status.code(), Some(4), "{m}: {o:?}");
    }
}

fn compare(cfg: &str, dir: &TempDir, method: &str) -> f64 {
    let o = treetn(&["compare-exact", "--config", cfg, "--out", dir.path().to_str().unwrap(), "--method", method, "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    let side = read_json(dir.path().join("run.json"));
    side["max_error"].as_f64().unwrap()
}

#[test]
fn tebd_with_bond_dimension_two_tracks_the_exact_curve() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tfi.json", TFI_L2);
    let err = compare(&cfg, &dir, "tebd");
    assert!(err <= 1e-5, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(csv.starts_with("t,error\n"));
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn two_site_tdvp_is_no_more_accurate_than_one_site_at_equal_cap() {
    let dir = TempDir::new().unwrap();
    let text = TFI_L2
        .replace("\"g\": 0.1", "\"g\": 0.1, \"four_site\": true")
        .replace("\"max_bond_dim\": 2", "\"max_bond_dim\": 4, \"rel_tol\": 1e-10");
    let cfg = write_config(&dir, "tdvp.json", &text);
    let one = compare(&cfg, &dir, "tdvp1");
    let two = compare(&cfg, &dir, "tdvp2");
    assert!(two >= one, "tdvp2 {two} vs tdvp1 {one}");
}

#[test]
fn a_series_compared_with_itself_has_zero_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tfi.json", TFI_L2);
    let o = treetn(&["evolve", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let m: Vec<treetn_core::C64> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').take(3).map(|x| x.parse().unwrap()).collect();
            treetn_core::C64::new(f[1], f[2])
        })
        .collect();
    assert!(error_series(&m, &m).unwrap().iter().all(|e| *e == 0.0));
}

#[test]
fn default_scan_recovers_splitting_orders() {
    let dir = TempDir::new().unwrap();
    let o = treetn(&["trotter-scan", "--out", dir.path().to_str().unwrap(), "--jobs", "3", "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    let side = read_json(dir.path().join("trotter_scan.json"));
    let first = side["slopes"]["first"].as_f64().unwrap();
    let strang = side["slopes"]["strang"].as_f64().unwrap();
    assert!((first - 1.0).abs() <= 0.15, "{first}");
    assert!((strang - 2.0).abs() <= 0.15, "{strang}");
    let csv = std::fs::read_to_string(dir.path().join("trotter_scan.csv")).unwrap();
    assert!(csv.starts_with("splitting,state,dt,error\n"));
    // 2 orders x 8 states x 5 steps
    assert_eq!(csv.lines().count(), 81);
}

#[test]
fn single_step_scan_has_rows_but_no_fit() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "one.json", r#"{"trotter_scan": {"dts": [0.05]}, "output": "one"}"#);
    let o = treetn(&["trotter-scan", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    let side = read_json(dir.path().join("one.json"));
    assert!(side["slopes"]["first"].is_null() && side["slopes"]["strang"].is_null());
    assert_eq!(std::fs::read_to_string(dir.path().join("one.csv")).unwrap().lines().count(), 17);
}

#[test]
fn scan_is_independent_of_thread_count() {
    let model = TwoQubitModel::random(5);
    let scan = TrotterScanSpec {
        dts: vec![0.1, 0.05],
        final_time: 0.5,
    };
    let serial = scan_rows(&model, &scan, 1).unwrap();
    assert_eq!(serial, scan_rows(&model, &scan, 4).unwrap());
    assert_eq!(serial, scan_rows(&model, &scan, 64).unwrap());
}

#[test]
fn basis_sweep_errors_stay_within_an_order_of_magnitude() {
    let model = TwoQubitModel::random(11);
    let scan = TrotterScanSpec::default();
    let rows = scan_rows(&model, &scan, 2).unwrap();
    for order in [SplittingOrder::First, SplittingOrder::Strang] {
        for dt in &scan.dts {
            let errs: Vec<f64> = rows.iter().filter(|r| r.splitting == order && r.dt == *dt).map(|r| r.error).collect();
            assert_eq!(errs.len(), 8);
            let (lo, hi) = errs.iter().fold((f64::INFINITY, 0.0f64), |(l, h), e| (l.min(*e), h.max(*e)));
            assert!(hi / lo < 10.0, "{} dt={dt}: {errs:?}", order.name());
        }
    }
    let slopes = scan_slopes(&rows, &scan.dts).unwrap();
    assert!(slopes.values().all(|s| s.is_some()));
}
