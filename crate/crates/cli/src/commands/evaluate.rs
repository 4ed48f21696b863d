use std::collections::HashMap;
use std::fmt::Write as _;

use cltv_core::evaluation::{
    auc, calibration_curve, expected_calibration_error, rmse, spearman, MetricReport,
};
use serde::Serialize;

use crate::artifacts::{CALIBRATION_CURVE_CSV, PREDICTIONS_CSV, REPORT_JSON};
use crate::CliError;

use super::{cohort_splits, derive_aligned_labels, Ctx};

#[derive(Debug, Serialize)]
struct EvaluationOutput {
    #[serde(flatten)]
    metrics: MetricReport,
    ece_raw: f64,
    ece_calibrated: f64,
    aggregate_actual_value: f64,
    aggregate_predicted_value: f64,
    aggregate_relative_error: f64,
}

struct Predictions {
    churn_raw: Vec<f64>,
    churn_calibrated: Vec<f64>,
    percentile: Vec<f64>,
    value: Vec<f64>,
}

/// Scores the held-out test rows against derived labels and writes the
/// metric report plus the calibration-curve CSV.
pub fn cmd_evaluate(ctx: &Ctx) -> Result<(), CliError> {
    let table = ctx.load_feature_table()?;
    let (_, churned, percentile, spend) = derive_aligned_labels(ctx, &table)?;
    let predictions = read_predictions(ctx, table.ids())?;
    let splits = cohort_splits(table.n_rows(), &ctx.config);
    let test = &splits.test;

    let churn_truth: Vec<bool> = test.iter().map(|&i| churned[i] > 0.5).collect();
    let cal_scores: Vec<f64> = test.iter().map(|&i| predictions.churn_calibrated[i]).collect();
    let raw_scores: Vec<f64> = test.iter().map(|&i| predictions.churn_raw[i]).collect();
    let pred_pct: Vec<f64> = test.iter().map(|&i| predictions.percentile[i]).collect();
    let actual_pct: Vec<f64> = test.iter().map(|&i| percentile[i]).collect();
    let actual_spend: Vec<f64> = test.iter().map(|&i| spend[i]).collect();
    let pred_value: Vec<f64> = test.iter().map(|&i| predictions.value[i]).collect();

    let n_bins = ctx.config.evaluation.calibration_bins;
    let bins = calibration_curve(&cal_scores, &churn_truth, n_bins);
    let raw_bins = calibration_curve(&raw_scores, &churn_truth, n_bins);
    let aggregate_actual: f64 = actual_spend.iter().sum();
    let aggregate_predicted: f64 = pred_value.iter().sum();

    let output = EvaluationOutput {
        metrics: MetricReport {
            auc: auc(&cal_scores, &churn_truth)?,
            spearman: spearman(&pred_pct, &actual_spend)?,
            rmse: rmse(&pred_pct, &actual_pct),
            calibration_bins: bins.clone(),
            n: test.len(),
        },
        ece_raw: expected_calibration_error(&raw_bins),
        ece_calibrated: expected_calibration_error(&bins),
        aggregate_actual_value: aggregate_actual,
        aggregate_predicted_value: aggregate_predicted,
        aggregate_relative_error: (aggregate_predicted - aggregate_actual).abs()
            / aggregate_actual.max(f64::EPSILON),
    };

    let json = serde_json::to_vec_pretty(&output).map_err(CliError::json)?;
    let report_path = ctx.store.write_atomic(REPORT_JSON, &json)?;

    let mut curve = String::from("bin,mean_predicted,empirical_rate,count\n");
    for (i, b) in output.metrics.calibration_bins.iter().enumerate() {
        writeln!(curve, "{i},{:.6},{:.6},{}", b.mean_predicted, b.empirical_rate, b.count)
            .expect("write to string");
    }
    let curve_path = ctx.store.write_atomic(CALIBRATION_CURVE_CSV, curve.as_bytes())?;

    let mut manifest = ctx.manifest("evaluate");
    manifest.seed = Some(ctx.config.evaluation.seed);
    manifest.input_file("events", &ctx.config.paths.events)?;
    manifest.input_file("predictions_csv", &ctx.store.path(PREDICTIONS_CSV))?;
    manifest.output_file("report_json", &report_path)?;
    manifest.output_file("calibration_curve_csv", &curve_path)?;
    ctx.store.write_manifest(&manifest)?;

    println!("{}", output.metrics);
    println!(
        "ece raw {:.4} -> calibrated {:.4}; aggregate value {:.0} vs actual {:.0} ({:.1}%)",
        output.ece_raw,
        output.ece_calibrated,
        output.aggregate_predicted_value,
        output.aggregate_actual_value,
        100.0 * output.aggregate_relative_error
    );
    Ok(())
}

fn read_predictions(
    ctx: &Ctx,
    ids: &[cltv_core::data_model::CustomerId],
) -> Result<Predictions, CliError> {
    let path = ctx.store.require(PREDICTIONS_CSV, "predict")?;
    let text = std::fs::read_to_string(path).map_err(CliError::io)?;
    let mut by_id: HashMap<&str, (f64, f64, f64, f64)> = HashMap::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let mut fields = line.split(',');
        let parse_err =
            || CliError::data(format!("predictions.csv line {}: bad record", line_no + 1));
        let id = fields.next().ok_or_else(parse_err)?;
        let mut next_f64 = || -> Result<f64, CliError> {
            fields.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())
        };
        let raw = next_f64()?;
        let cal = next_f64()?;
        let pct = next_f64()?;
        let value = next_f64()?;
        by_id.insert(id, (raw, cal, pct, value));
    }

    let mut predictions = Predictions {
        churn_raw: Vec::with_capacity(ids.len()),
        churn_calibrated: Vec::with_capacity(ids.len()),
        percentile: Vec::with_capacity(ids.len()),
        value: Vec::with_capacity(ids.len()),
    };
    for id in ids {
        let &(raw, cal, pct, value) = by_id.get(id.as_str()).ok_or_else(|| {
            CliError::data(format!("predictions.csv is missing customer {id}"))
        })?;
        predictions.churn_raw.push(raw);
        predictions.churn_calibrated.push(cal);
        predictions.percentile.push(pct);
        predictions.value.push(value);
    }
    Ok(predictions)
}
