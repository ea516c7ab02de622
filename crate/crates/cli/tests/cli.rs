use std::path::Path;
use std::process::{Command, Output};

fn singlap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singlap")).current_dir(dir).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn plane_keeps_h0_and_intersection_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = singlap(
        d,
        &["--out-dir", "plane", "--seed", "4", "gen", "--kind", "plane", "--half-width", "3", "--n", "4000"],
    );
    assert!(gen.status.success(), "{gen:?}");
    let test = singlap(d, &["--out-dir", "t0", "--seed", "5", "test", "--cloud", "plane/cloud.csv"]);
    assert_eq!(test.status.code(), Some(0), "{test:?}");

    let gen = singlap(d, &["--out-dir", "cross", "--seed", "4", "gen", "--n", "4000"]);
    assert!(gen.status.success());
    let test = singlap(d, &["--out-dir", "t1", "--seed", "5", "test", "--cloud", "cross/cloud.csv"]);
    assert_eq!(test.status.code(), Some(1), "{test:?}");
    let report: serde_json::Value = serde_json::from_str(&read(d, "t1/report.json")).unwrap();
    assert_eq!(report["reject"], true);
}

#[test]
fn rerun_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(singlap(d, &["--out-dir", "a", "--seed", "9", "gen", "--n", "500", "--sigma", "0.01"]).status.success());
    assert!(singlap(d, &["--out-dir", "b", "rerun", "--manifest", "a/manifest.json"]).status.success());
    assert_eq!(read(d, "a/cloud.csv"), read(d, "b/cloud.csv"));
    assert_eq!(read(d, "a/scene.json"), read(d, "b/scene.json"));
    let m: serde_json::Value = serde_json::from_str(&read(d, "a/manifest.json")).unwrap();
    assert_eq!(m["command"], "gen");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["scene_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn errors_are_json_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = singlap(dir.path(), &["gen", "--kind", "plane", "--d", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "domain");
    let out = singlap(dir.path(), &["laplacian", "--cloud", "missing.csv", "--t", "0.1", "--axis", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn laplacian_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(singlap(d, &["--out-dir", "g", "gen", "--n", "2000"]).status.success());
    let out = singlap(d, &["--out-dir", "l", "laplacian", "--cloud", "g/cloud.csv", "--t", "0.05", "--v", "0,0,1"]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(read(d, "l/response.csv").lines().count(), 2001);

    // A profile h(s/√2) peaks at s = 1, so r̂ = 1 and θ̂ = π/4 at t = 1.
    let mut csv = String::from("x0,x1,value\n");
    for i in -400..=400 {
        let s = i as f64 / 100.0;
        let u = s / 2f64.sqrt();
        csv.push_str(&format!("{s},0,{}\n", u * (-u * u).exp()));
    }
    std::fs::write(d.join("profile.csv"), csv).unwrap();
    let out = singlap(d, &["--out-dir", "e", "estimate", "--response", "profile.csv", "--t", "1", "--fit"]);
    assert!(out.status.success(), "{out:?}");
    let est: serde_json::Value = serde_json::from_str(&read(d, "e/estimate.json")).unwrap();
    assert!((est["theta_hat"].as_f64().unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    let fit: serde_json::Value = serde_json::from_str(&read(d, "e/fit.json")).unwrap();
    assert!(fit["residual_ratio"].as_f64().unwrap() < 1e-8);
}

#[test]
fn power_sweep_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = singlap(
        d,
        &["--out-dir", "p", "power-sweep", "--trials", "2", "--sizes", "3000,4000", "--thetas", "1.5707963267948966"],
    );
    assert!(out.status.success(), "{out:?}");
    let table = read(d, "p/table.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "n,H0,H1_theta_1.570796");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("3000,"));
}

#[test]
fn zeroset_pca_and_noise_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = singlap(
        d,
        &[
            "--out-dir",
            "z",
            "zeroset",
            "--k",
            "3",
            "--delta",
            "0.01",
            "--half-width",
            "0.05",
            "--width-cap",
            "0.025",
            "--inputs",
            "30",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let summary: serde_json::Value = serde_json::from_str(&read(d, "z/paving.json")).unwrap();
    assert_eq!(summary["complete"], true);
    let n = summary["accepted"].as_u64().unwrap();
    assert!(n > 1);
    assert_eq!(read(d, "z/centroids.csv").lines().count() as u64, n + 1);

    let out = singlap(d, &["--out-dir", "p", "pca", "--cloud", "z/centroids.csv", "--dim", "3"]);
    assert!(out.status.success(), "{out:?}");
    assert!(read(d, "p/projected.csv").starts_with("x0,x1,x2\n"));

    // Budget-limited run writes a checkpoint that can be resumed.
    let args = [
        "--out-dir",
        "c",
        "zeroset",
        "--k",
        "3",
        "--delta",
        "0.01",
        "--half-width",
        "0.05",
        "--width-cap",
        "0.025",
        "--inputs",
        "30",
        "--budget",
        "5",
        "--checkpoint",
        "ck.json",
    ];
    assert!(singlap(d, &args).status.success());
    let out = singlap(
        d,
        &[
            "--out-dir",
            "r",
            "zeroset",
            "--k",
            "3",
            "--delta",
            "0.01",
            "--width-cap",
            "0.025",
            "--inputs",
            "30",
            "--resume",
            "ck.json",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    assert_eq!(read(d, "r/centroids.csv"), read(d, "z/centroids.csv"));

    let out = singlap(d, &["--out-dir", "n", "noise-check", "--draws", "2000", "--points", "3"]);
    assert!(out.status.success(), "{out:?}");
    let rep: serde_json::Value = serde_json::from_str(&read(d, "n/noise_check.json")).unwrap();
    assert_eq!(rep["points"].as_array().unwrap().len(), 3);
}

#[test]
fn json_format_switch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(singlap(d, &["--out-dir", "g", "--format", "json", "gen", "--n", "10"]).status.success());
    let cloud: serde_json::Value = serde_json::from_str(&read(d, "g/cloud.json")).unwrap();
    assert_eq!(cloud["dim"], 3);
}
