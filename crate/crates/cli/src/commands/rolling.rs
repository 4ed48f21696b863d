use cltv_core::data_model::{derive_labels, EventLog, DAY_SECS};
use cltv_core::evaluation::{auc, cosine, holdout_split};
use cltv_core::features::{compute_features, encode_categoricals};
use cltv_core::forest::{ForestModel, ForestTask};
use cltv_core::pairgen::{build_negative_table, build_view_streams, generate_all_pairs};
use cltv_core::sgns::{init_model, train, warm_start_init, CohortMap, SgnsConfig};
use cltv_core::Embeddings;
use serde::Serialize;

use crate::artifacts::ROLLING_REPORT_JSON;
use crate::CliError;

use super::Ctx;

#[derive(Debug, Serialize)]
pub struct PeriodReport {
    pub period: usize,
    pub feature_start: String,
    pub cohort_size: usize,
    pub churn_auc: f64,
    /// Mean cosine between the prior period's embeddings and this period's
    /// warm-started embeddings, over customers present in both.
    pub warm_cosine: Option<f64>,
    /// Same comparison for a cold-started retrain, the Fig. 2 baseline.
    pub cold_cosine: Option<f64>,
    pub leak_audit_ok: bool,
}

/// Retrains the pipeline over rolling windows, warm-starting embeddings from
/// the prior period when enabled, and audits feature/pair leakage per period.
pub fn cmd_rolling(ctx: &Ctx) -> Result<(), CliError> {
    let events = ctx.load_events()?;
    let base = ctx.split()?;
    let rolling = &ctx.config.rolling;

    let needed_days = (rolling.n_periods as i64 - 1) * rolling.stride_days
        + base.label_end().days_since(base.feature_start()) as i64;
    let span_days = match (
        events.events.iter().map(|e| e.ts).min(),
        events.events.iter().map(|e| e.ts).max(),
    ) {
        (Some(lo), Some(hi)) => (hi.epoch() - lo.epoch()) / DAY_SECS + 1,
        _ => 0,
    };
    if span_days < needed_days {
        return Err(CliError::data(format!(
            "rolling over {} periods at stride {} needs {} days of events, log spans {}",
            rolling.n_periods, rolling.stride_days, needed_days, span_days
        )));
    }

    let mut prior: Option<Embeddings> = None;
    let mut reports = Vec::new();
    for period in 0..rolling.n_periods {
        let split = base.shifted(period as i64 * rolling.stride_days);
        let labels = derive_labels(&events, &split)?;
        let vectors = compute_features(&events, &split);
        let table = encode_categoricals(&vectors);
        let aligned = super::aligned_labels(&table, &labels)?;
        let churned: Vec<f64> = aligned.iter().map(|r| r.churned as u8 as f64).collect();

        let streams = build_view_streams(&events, &split);
        let pairs = generate_all_pairs(&streams, ctx.config.sgns.window_length);
        let neg_table = build_negative_table(&streams, ctx.config.sgns.exponent)?;
        let sgns = SgnsConfig {
            seed: ctx.config.sgns.seed.wrapping_add(period as u64),
            ..ctx.config.sgns.clone()
        };

        let (mut model, cohorts) = match (&prior, ctx.config.mode.warm_start) {
            (Some(prev), true) => {
                let cohorts = CohortMap::from_prior(prev.index(), &streams.index);
                (
                    warm_start_init(prev, streams.index.clone(), &cohorts, &sgns)?,
                    Some(cohorts),
                )
            }
            _ => (init_model(streams.index.clone(), &sgns), None),
        };
        train(&mut model, &pairs, &neg_table, &sgns, cohorts.as_ref(), ctx.train_mode())?;

        // Fig. 2 diagnostic against the prior period: warm drift vs a
        // cold-started retrain on the same pairs
        let (warm_cosine, cold_cosine) = match (&prior, cohorts.is_some()) {
            (Some(prev), true) => {
                let cold_cfg = SgnsConfig { seed: sgns.seed.wrapping_add(10_000), ..sgns.clone() };
                let mut cold: Embeddings = init_model(streams.index.clone(), &cold_cfg);
                train(&mut cold, &pairs, &neg_table, &cold_cfg, None, ctx.train_mode())?;
                (
                    Some(mean_shared_cosine(prev, &model)),
                    Some(mean_shared_cosine(prev, &cold)),
                )
            }
            _ => (None, None),
        };

        // no-leakage audit: events at or after the window end must not move
        // any feature value or training pair
        let leak_audit_ok = {
            let truncated = EventLog::new(
                events
                    .events
                    .iter()
                    .filter(|e| e.ts < split.feature_end())
                    .cloned()
                    .collect(),
            );
            let bitwise = |vs: &[cltv_core::features::FeatureVector]| -> Vec<(String, Vec<u64>)> {
                vs.iter()
                    .map(|v| {
                        (
                            v.customer_id.to_string(),
                            v.numeric.iter().map(|x| x.to_bits()).collect(),
                        )
                    })
                    .collect()
            };
            let features_match =
                bitwise(&compute_features(&truncated, &split)) == bitwise(&vectors);
            let truncated_streams = build_view_streams(&truncated, &split);
            let pairs_match =
                generate_all_pairs(&truncated_streams, ctx.config.sgns.window_length) == pairs
                    && truncated_streams == streams;
            features_match && pairs_match
        };
        if !leak_audit_ok {
            return Err(CliError::data(format!(
                "leakage audit failed for period {period}: post-window events \
                 changed features or pairs"
            )));
        }

        // train on the period's cohort, evaluate churn AUC on a holdout
        let design = if ctx.config.mode.embeddings {
            table.with_embedding_columns(&model)
        } else {
            table.clone()
        };
        let (train_idx, test_idx) = holdout_split(
            design.n_rows(),
            ctx.config.evaluation.test_fraction,
            ctx.config.evaluation.seed.wrapping_add(period as u64),
        );
        let forest = ForestModel::fit(
            ForestTask::ChurnClassifier,
            &design.matrix().select_rows(&train_idx),
            design.columns(),
            &train_idx.iter().map(|&i| churned[i]).collect::<Vec<_>>(),
            &ctx.config.forest,
        )?;
        let scores: Vec<f64> = test_idx
            .iter()
            .map(|&i| forest.predict_proba(design.matrix().row(i)))
            .collect::<Result<_, _>>()?;
        let truth: Vec<bool> = test_idx.iter().map(|&i| churned[i] > 0.5).collect();
        let churn_auc = auc(&scores, &truth)?;

        reports.push(PeriodReport {
            period,
            feature_start: split.feature_start().to_string(),
            cohort_size: table.n_rows(),
            churn_auc,
            warm_cosine,
            cold_cosine,
            leak_audit_ok,
        });
        println!(
            "period {period}: cohort {} auc {:.4} warm_cos {} cold_cos {} leak_ok {}",
            table.n_rows(),
            churn_auc,
            warm_cosine.map_or("-".into(), |c| format!("{c:.4}")),
            cold_cosine.map_or("-".into(), |c| format!("{c:.4}")),
            leak_audit_ok
        );
        prior = Some(model);
    }

    let json = serde_json::to_vec_pretty(&reports).map_err(CliError::json)?;
    let path = ctx.store.write_atomic(ROLLING_REPORT_JSON, &json)?;

    let mut manifest = ctx.manifest("rolling");
    manifest.seed = Some(ctx.config.sgns.seed);
    manifest.input_file("events", &ctx.config.paths.events)?;
    manifest.output_file("rolling_report_json", &path)?;
    ctx.store.write_manifest(&manifest)?;
    Ok(())
}

fn mean_shared_cosine(prior: &Embeddings, current: &Embeddings) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in current.index().ids() {
        if let (Some(p), Some(c)) = (prior.input_vector(id), current.input_vector(id)) {
            let p64: Vec<f64> = p.iter().map(|&v| v as f64).collect();
            let c64: Vec<f64> = c.iter().map(|&v| v as f64).collect();
            sum += cosine(&p64, &c64);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

