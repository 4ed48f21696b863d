use cltv_core::forest::{ForestModel, ForestTask};

use crate::artifacts::MODEL_BUNDLE;
use crate::bundle::ModelBundle;
use crate::CliError;

use super::{cohort_splits, derive_aligned_labels, Ctx};

/// Fits the churn classifier and the spend-percentile regressor on the
/// fitting rows and writes the (uncalibrated) model bundle.
pub fn cmd_train(ctx: &Ctx) -> Result<(), CliError> {
    let table = ctx.design_table()?;
    let (_, churned, percentile, _) = derive_aligned_labels(ctx, &table)?;
    let splits = cohort_splits(table.n_rows(), &ctx.config);

    let fit_matrix = table.matrix().select_rows(&splits.fit);
    let fit_churn: Vec<f64> = splits.fit.iter().map(|&i| churned[i]).collect();
    let fit_pct: Vec<f64> = splits.fit.iter().map(|&i| percentile[i]).collect();

    let churn = ForestModel::fit(
        ForestTask::ChurnClassifier,
        &fit_matrix,
        table.columns(),
        &fit_churn,
        &ctx.config.forest,
    )?;
    let cltv = ForestModel::fit(
        ForestTask::PercentileRegressor,
        &fit_matrix,
        table.columns(),
        &fit_pct,
        &ctx.config.forest,
    )?;

    let top: Vec<String> = churn
        .importance()
        .into_iter()
        .take(5)
        .map(|(name, w)| format!("{name} {w:.3}"))
        .collect();
    println!("train: fit on {} rows; top churn importances: {}", splits.fit.len(), top.join(", "));

    let bundle = ModelBundle { churn, cltv, calibration: None };
    let path = ctx.store.write_atomic(MODEL_BUNDLE, &bundle.to_bytes()?)?;

    let mut manifest = ctx.manifest("train");
    manifest.seed = Some(ctx.config.forest.seed);
    manifest.input_file("events", &ctx.config.paths.events)?;
    manifest.input_file("features_bin", &ctx.store.path(crate::artifacts::FEATURES_BIN))?;
    if ctx.config.mode.embeddings {
        manifest.input_file("embeddings_bin", &ctx.store.path(crate::artifacts::EMBEDDINGS_BIN))?;
    }
    manifest.output_file("model_bundle", &path)?;
    ctx.store.write_manifest(&manifest)?;
    Ok(())
}
