use cltv_core::calibration::{fit_percentile_value_map, fit_platt, ValueMapParams};

use crate::artifacts::MODEL_BUNDLE;
use crate::bundle::{CalibrationPart, ModelBundle};
use crate::CliError;

use super::{cohort_splits, derive_aligned_labels, Ctx};

/// Fits the Platt calibrator and the percentile-to-value map on the
/// held-out calibration rows, then rewrites the bundle with them.
pub fn cmd_calibrate(ctx: &Ctx) -> Result<(), CliError> {
    let bundle_path = ctx.store.require(MODEL_BUNDLE, "train")?;
    let mut bundle = ModelBundle::load(&bundle_path, "train")?;
    let table = ctx.design_table()?;
    let (_, churned, _, spend) = derive_aligned_labels(ctx, &table)?;
    let splits = cohort_splits(table.n_rows(), &ctx.config);

    let mut scores = Vec::with_capacity(splits.calib.len());
    let mut labels = Vec::with_capacity(splits.calib.len());
    let mut pct = Vec::with_capacity(splits.calib.len());
    let mut values = Vec::with_capacity(splits.calib.len());
    for &i in &splits.calib {
        let row = table.matrix().row(i);
        scores.push(bundle.churn.predict_proba(row)?);
        labels.push(churned[i] > 0.5);
        pct.push(bundle.cltv.predict_percentile(row)?);
        values.push(spend[i]);
    }

    let platt = fit_platt(&scores, &labels)?;
    let value_map = fit_percentile_value_map(
        &pct,
        &values,
        ValueMapParams {
            max_depth: ctx.config.calibration.value_map_depth,
            min_leaf: ctx.config.calibration.value_map_min_leaf,
        },
    )?;
    println!(
        "calibrate: {} rows, platt a={:.3} b={:.3}, value map {} leaves",
        splits.calib.len(),
        platt.a,
        platt.b,
        value_map.n_leaves()
    );

    bundle.calibration = Some(CalibrationPart { platt, value_map });
    let path = ctx.store.write_atomic(MODEL_BUNDLE, &bundle.to_bytes()?)?;

    let mut manifest = ctx.manifest("calibrate");
    manifest.seed = Some(ctx.config.calibration.seed);
    manifest.input_file("events", &ctx.config.paths.events)?;
    manifest.input_file("features_bin", &ctx.store.path(crate::artifacts::FEATURES_BIN))?;
    manifest.output_file("model_bundle", &path)?;
    ctx.store.write_manifest(&manifest)?;
    Ok(())
}
