use std::fmt::Write as _;

use cltv_core::calibration::apply_calibration;

use crate::artifacts::{MODEL_BUNDLE, PREDICTIONS_CSV};
use crate::bundle::ModelBundle;
use crate::CliError;

use super::Ctx;

/// Scores every cohort customer with the calibrated bundle and writes the
/// prediction CSV.
pub fn cmd_predict(ctx: &Ctx) -> Result<(), CliError> {
    let bundle_path = ctx.store.require(MODEL_BUNDLE, "train")?;
    let bundle = ModelBundle::load(&bundle_path, "train")?;
    let Some(calibration) = &bundle.calibration else {
        return Err(CliError::MissingArtifact {
            artifact: format!("{} (calibration section)", bundle_path.display()),
            producer: "calibrate".to_string(),
        });
    };
    let table = ctx.design_table()?;

    let mut csv = String::from(
        "customer_id,churn_prob_raw,churn_prob_calibrated,percentile,cltv_value\n",
    );
    for (i, id) in table.ids().iter().enumerate() {
        let row = table.matrix().row(i);
        let raw_churn = bundle.churn.predict_proba(row)?;
        let raw_pct = bundle.cltv.predict_percentile(row)?;
        let rec = apply_calibration(&calibration.platt, &calibration.value_map, raw_churn, raw_pct);
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.2}",
            id, rec.churn_prob_raw, rec.churn_prob_calibrated, rec.percentile, rec.cltv_value
        )
        .expect("write to string");
    }
    let path = ctx.store.write_atomic(PREDICTIONS_CSV, csv.as_bytes())?;

    let mut manifest = ctx.manifest("predict");
    manifest.input_file("model_bundle", &ctx.store.path(MODEL_BUNDLE))?;
    manifest.input_file("features_bin", &ctx.store.path(crate::artifacts::FEATURES_BIN))?;
    manifest.output_file("predictions_csv", &path)?;
    ctx.store.write_manifest(&manifest)?;

    println!("predict: {} customers -> {}", table.n_rows(), path.display());
    Ok(())
}
