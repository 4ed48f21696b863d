//! End-to-end CLI behavior: exit codes, missing-artifact messages, and the
//! rolling retrain flow.

use std::path::Path;
use std::process::{Command, Output};

fn cltv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cltv")).args(args).output().expect("spawn cltv")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn small_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    write_config(
        dir,
        &format!(
            r#"
[paths]
events = "{events}"
artifacts = "{artifacts}"

[datagen]
n_customers = 800
n_products = 80
seed = 5

[sgns]
dim = 8
epochs = 2
seed = 6

[forest]
n_trees = 20
max_depth = 6
min_samples_leaf = 10
seed = 7

[calibration]
value_map_min_leaf = 30

{extra}
"#,
            events = dir.join("events.ndjson").display(),
            artifacts = dir.join("artifacts").display(),
        ),
    )
}

#[test]
fn predict_without_train_names_the_producing_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    let out = cltv(&["datagen", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());
    let out = cltv(&["features", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());

    let out = cltv(&["predict", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cltv train"), "stderr: {stderr}");
}

#[test]
fn calibrate_is_required_before_predict() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    for sub in ["datagen", "features", "embed", "train"] {
        let out = cltv(&[sub, "--config", config.to_str().unwrap()]);
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = cltv(&["predict", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cltv calibrate"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[sgns]\nwindow_length = 4\n");
    let out = cltv(&["features", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window_length"));

    let bogus = write_config(dir.path(), "[sgns]\nnot_a_field = 1\n");
    let out = cltv(&["features", "--config", bogus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_field"));

    let out = cltv(&["features", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rolling_with_insufficient_span_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    // horizon 730 supports exactly one period; ask for six at stride 30
    let config = small_config(dir.path(), "[rolling]\nn_periods = 6\nstride_days = 30\n");
    let out = cltv(&["datagen", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());
    let out = cltv(&["rolling", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spans"));
}

#[test]
fn rolling_single_period_reduces_to_the_single_split() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "[rolling]\nn_periods = 1\nstride_days = 30\n");
    let out = cltv(&["datagen", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());
    let out = cltv(&["rolling", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("artifacts").join("rolling_report.json")).unwrap(),
    )
    .unwrap();
    let periods = report.as_array().unwrap();
    assert_eq!(periods.len(), 1);
    assert!(periods[0]["leak_audit_ok"].as_bool().unwrap());
    assert!(periods[0]["warm_cosine"].is_null());
}

#[test]
fn rolling_warm_start_tracks_prior_period_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            r#"
[paths]
events = "{events}"
artifacts = "{artifacts}"

[datagen]
n_customers = 900
n_products = 100
horizon_days = 800
seed = 5

[sgns]
dim = 8
epochs = 2
seed = 6

[forest]
n_trees = 20
max_depth = 6
min_samples_leaf = 10
seed = 7

[mode]
warm_start = true

[rolling]
n_periods = 3
stride_days = 30
"#,
            events = dir.path().join("events.ndjson").display(),
            artifacts = dir.path().join("artifacts").display(),
        ),
    );
    // split anchored so the last period still fits inside the horizon
    let out = cltv(&["datagen", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cltv(&["rolling", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("artifacts").join("rolling_report.json")).unwrap(),
    )
    .unwrap();
    let periods = report.as_array().unwrap();
    assert_eq!(periods.len(), 3);
    for p in &periods[1..] {
        let warm = p["warm_cosine"].as_f64().unwrap();
        let cold = p["cold_cosine"].as_f64().unwrap();
        assert!(warm > cold, "period {}: warm {warm} <= cold {cold}", p["period"]);
        assert!(p["leak_audit_ok"].as_bool().unwrap());
    }
}

#[test]
fn full_chain_emits_a_metric_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    for sub in ["datagen", "features", "embed", "train", "calibrate", "predict", "evaluate"] {
        let out = cltv(&[sub, "--config", config.to_str().unwrap()]);
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let artifacts = dir.path().join("artifacts");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(artifacts.join("report.json")).unwrap()).unwrap();
    let auc = report["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["calibration_bins"].as_array().unwrap().len() <= 10);
    assert!(report["n"].as_u64().unwrap() > 0);

    // prediction CSV carries the documented columns
    let head = std::fs::read_to_string(artifacts.join("predictions.csv")).unwrap();
    assert!(head.starts_with("customer_id,churn_prob_raw,churn_prob_calibrated,percentile,cltv_value"));

    // manifests exist for every stage
    for sub in ["datagen", "features", "embed", "train", "calibrate", "predict", "evaluate"] {
        let manifest: serde_json::Value = serde_json::from_slice(
            &std::fs::read(artifacts.join("manifests").join(format!("{sub}.json"))).unwrap(),
        )
        .unwrap();
        assert!(manifest["config_hash"].as_str().unwrap().starts_with("sha256:"));
    }
}

#[test]
fn seed_override_changes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    let run = |seed: &str, out_dir: &str| {
        let artifacts = dir.path().join(out_dir);
        for sub in ["datagen", "features", "embed"] {
            let out = cltv(&[
                sub,
                "--config",
                config.to_str().unwrap(),
                "--seed",
                seed,
                "--artifacts",
                artifacts.to_str().unwrap(),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        std::fs::read(artifacts.join("embeddings.bin")).unwrap()
    };
    let a = run("1", "a");
    let b = run("2", "b");
    assert_ne!(a, b);
}
