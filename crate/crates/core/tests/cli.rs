use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fracwave(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracwave"))
        .args(args)
        .env("FRACWAVE_CACHE", cache)
        .output()
        .expect("run fracwave")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fracwave-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

const KDV: &[&str] = &["--alpha", "2", "--length", "40", "--n", "512"];

#[test]
fn ground_state_table_and_cache() {
    let dir = scratch("gs");
    let cache = dir.join("cache");
    let out = dir.join("out");
    let mut args = vec!["ground-state", "--out", out.to_str().unwrap()];
    args.extend_from_slice(KDV);
    args.extend_from_slice(&["--c", "1,2"]);
    let first = fracwave(&args, &cache);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let csv_a = fs::read_to_string(out.join("ground_state.csv")).unwrap();
    let mut lines = csv_a.lines();
    assert!(lines.next().unwrap().starts_with("family,alpha,p,c,L,N,peak"));
    assert_eq!(lines.count(), 2);
    let cached = fs::read_dir(&cache).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "fld")).count();
    assert_eq!(cached, 2);

    let second = fracwave(&args, &cache);
    assert_eq!(second.status.code(), Some(0));
    let csv_b = fs::read_to_string(out.join("ground_state.csv")).unwrap();
    // iteration counts come from the cache metadata, so rows match exactly
    assert_eq!(csv_a, csv_b);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn failing_point_is_recorded_and_sets_exit_code() {
    let dir = scratch("iso");
    let out = fracwave(&["ground-state", "--family", "fbbm", "--alpha", "0.75", "--c", "0.5,1.5", "--no-cache"], &dir);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("fbbm,0.75,1,0.5,") && rows[0].len() > 30, "{}", rows[0]);
    assert!(rows[1].starts_with("fbbm,0.75,1,1.5,"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn hypothesis_violation_exits_with_two() {
    let dir = scratch("hyp");
    let mut args = vec!["spectrum", "--kernel-tol", "1e3", "--format", "json"];
    args.extend_from_slice(KDV);
    let out = fracwave(&args, &dir);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["kernel_dim"].as_u64().unwrap() > 1);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn spectrum_json_has_full_precision() {
    let dir = scratch("json");
    let mut args = vec!["spectrum", "--format", "json", "--count", "3"];
    args.extend_from_slice(KDV);
    let out = fracwave(&args, &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["morse_index"], 1);
    assert_eq!(v["kernel_dim"], 1);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 3);
    // the negative eigenvalue of the KdV operator is -5/4
    let lowest = v["eigenvalues"][0].as_f64().unwrap();
    assert!((lowest + 1.25).abs() < 1e-8, "{lowest}");
    let printed = text.split("\"eigenvalues\"").nth(1).unwrap().split(',').next().unwrap();
    let digits = printed.chars().filter(|c| c.is_ascii_digit()).count();
    assert!(digits >= 16, "{printed}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = scratch("cfg");
    let cfg = dir.join("run.json");
    fs::write(&cfg, r#"{"command": "ground-state", "alpha": 2, "length": 40, "n": 512, "c": "0.5:2:3g", "no-cache": true}"#).unwrap();
    let out = fracwave(&["--config", cfg.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let cs: Vec<String> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().to_string()).collect();
    assert_eq!(cs, ["0.5", "1", "2"]);

    let out = fracwave(&["ground-state", "--config", cfg.to_str().unwrap(), "--c", "1.5"], &dir);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("fkdv,2,1,1.5,"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn evolve_writes_snapshots_manifest_and_diagnostics() {
    let dir = scratch("evolve");
    let out_dir = dir.join("run");
    let mut args = vec!["evolve", "--out", out_dir.to_str().unwrap(), "--dt", "2e-3", "--t-final", "1", "--snapshots", "4"];
    args.extend_from_slice(KDV);
    let out = fracwave(&args, &dir.join("cache"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outcome"]["kind"], "completed");
    assert_eq!(manifest["snapshots"].as_array().unwrap().len(), 5);
    assert!(manifest["drift"]["energy_drift"].as_f64().unwrap() < 1e-8);
    let snap = fracwave::grid::Field::read_fld(&out_dir.join("snapshot_00004.fld")).unwrap();
    assert_eq!(snap.grid.len(), 512);
    let diag = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().next().unwrap(), "t,E,F,rho,gamma_hat,mu,Bt");
    assert_eq!(diag.lines().count(), 6);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn ranges_and_bad_input() {
    let dir = scratch("bad");
    let out = fracwave(&["ground-state", "--alpha", "1:2:0"], &dir);
    assert_eq!(out.status.code(), Some(1));
    let out = fracwave(&["spectrum", "--alpha", "1,2"], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("single"));
    fs::remove_dir_all(&dir).unwrap();
}
