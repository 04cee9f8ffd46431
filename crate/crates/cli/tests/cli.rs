use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn eplim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eplim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_config_exits_with_2() {
    let out = eplim(&["study", "--config", "/nonexistent/eplim.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "regime = \"zero-electron\"\nm = 1\nt_end = -1\n").unwrap();
    let out = eplim(&["residuals", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_infinity_ion_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("infinity_ion_m1.toml");
    let out = eplim(&[
        "study",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let report = json(&dir.path().join("study.json"));
    assert_eq!(report["schema"], 1);
    assert_eq!(report["pass"], true);
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 5);
    let csv = std::fs::read_to_string(dir.path().join("study.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("eps,s,species,variable,sup_norm_sq")
    );
}

#[test]
fn residuals_zero_electron_order_zero_has_slope_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = eplim(&[
        "residuals",
        "--regime",
        "zero-electron",
        "--m",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("residuals.json"));
    let slope = report["slopes"][0]["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.4, "{slope}");
}

#[test]
fn outputs_are_bit_identical_across_runs() {
    let cfg = config("zero_electron_m1.toml");
    let read =
        |dir: &Path| ["study.csv", "study.json"].map(|f| std::fs::read(dir.join(f)).unwrap());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, threads) in [(&a, "1"), (&b, "4")] {
        let out = Command::new(env!("CARGO_BIN_EXE_eplim"))
            .args([
                "study",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                d.path().to_str().unwrap(),
            ])
            .env("EPLIM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn profiles_run_and_dispersion() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = eplim(&[
        "profiles",
        "--regime",
        "zero-electron",
        "--m",
        "1",
        "--out",
        d,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("profiles/manifest.json").exists());
    assert_eq!(json(&dir.path().join("profiles.json"))["pass"], true);

    let out = eplim(&[
        "run",
        "--regime",
        "infinity-ion",
        "--eps",
        "0.2",
        "--out",
        d,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let run = json(&dir.path().join("run.json"));
    assert_eq!(run["eps"], 0.2);
    assert!(dir.path().join("final_phi.csv").exists());

    let out = eplim(&["dispersion", "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("dispersion.json"))["pass"], true);
}

#[test]
fn unstable_run_exits_with_3() {
    // a large amplitude drives the ion characteristics to cross before t_end
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shock.toml");
    std::fs::write(
        &path,
        r#"
        regime = "infinity-ion"
        m = 0
        t_end = 1.0
        eps_list = [0.4, 0.2]
        [grid]
        n = 32
        [initial]
        recipe = "cosine"
        amplitude = 0.5
        [output]
        dir = "unused"
        "#,
    )
    .unwrap();
    let out = eplim(&[
        "residuals",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn failed_rate_exits_with_1() {
    // uniform profiles have no remainder, so only the planted initial mismatch
    // drives the error: slope 4, outside the band around 2
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rate.toml");
    std::fs::write(
        &path,
        r#"
        regime = "infinity-ion"
        m = 0
        t_end = 0.1
        eps_list = [0.4, 0.28, 0.2, 0.14, 0.1]
        perturbation_scale = 1.0
        [grid]
        n = 32
        [initial]
        recipe = "cosine"
        amplitude = 0.0
        [output]
        dir = "unused"
        "#,
    )
    .unwrap();
    let out = eplim(&[
        "study",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}
