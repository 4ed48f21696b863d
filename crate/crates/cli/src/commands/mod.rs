//! Subcommand implementations and the shared run context.

mod calibrate;
mod datagen;
mod embed;
mod evaluate;
mod features;
mod predict;
mod rolling;
mod train;

pub use calibrate::cmd_calibrate;
pub use datagen::cmd_datagen;
pub use embed::cmd_embed;
pub use evaluate::cmd_evaluate;
pub use features::cmd_features;
pub use predict::cmd_predict;
pub use rolling::cmd_rolling;
pub use train::cmd_train;

use cltv_core::data_model::{derive_labels, io as event_io, EventLog, LabelRecord, TimeSplit};
use cltv_core::evaluation::holdout_split;
use cltv_core::features::FeatureTable;
use cltv_core::sgns::TrainMode;
use cltv_core::Embeddings;

use crate::artifacts::{RunManifest, Store, EMBEDDINGS_BIN, FEATURES_BIN};
use crate::config::PipelineConfig;
use crate::CliError;

/// Everything a subcommand needs: the resolved config, the artifact store,
/// and the hash of the config file the run was started with.
pub struct Ctx {
    pub config: PipelineConfig,
    pub store: Store,
    pub config_hash: String,
}

impl Ctx {
    pub fn manifest(&self, subcommand: &str) -> RunManifest {
        RunManifest::new(
            subcommand,
            self.config_hash.clone(),
            self.config.mode.deterministic,
        )
    }

    pub fn split(&self) -> Result<TimeSplit, CliError> {
        self.config.split.time_split()
    }

    pub fn train_mode(&self) -> TrainMode {
        if self.config.mode.deterministic {
            TrainMode::Deterministic
        } else {
            let threads = if self.config.mode.threads == 0 {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            } else {
                self.config.mode.threads
            };
            TrainMode::Hogwild { threads }
        }
    }

    /// Loads and schema-validates the event log.
    pub fn load_events(&self) -> Result<EventLog, CliError> {
        let path = &self.config.paths.events;
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                artifact: path.display().to_string(),
                producer: "datagen".to_string(),
            });
        }
        let log = event_io::read_events(path)?;
        log.validate()?;
        Ok(log)
    }

    pub fn load_feature_table(&self) -> Result<FeatureTable, CliError> {
        let path = self.store.require(FEATURES_BIN, "features")?;
        let bytes = std::fs::read(path).map_err(CliError::io)?;
        FeatureTable::read_from(&mut bytes.as_slice()).map_err(CliError::io)
    }

    pub fn load_embeddings(&self) -> Result<Embeddings, CliError> {
        let path = self.store.require(EMBEDDINGS_BIN, "embed")?;
        Ok(Embeddings::load(&path)?)
    }

    /// The design matrix the forests consume: handcrafted features, plus
    /// embedding columns when the mode asks for them.
    pub fn design_table(&self) -> Result<FeatureTable, CliError> {
        let table = self.load_feature_table()?;
        if self.config.mode.embeddings {
            let embeddings = self.load_embeddings()?;
            Ok(table.with_embedding_columns(&embeddings))
        } else {
            Ok(table)
        }
    }
}

/// Deterministic three-way cohort split: a test set for evaluation, a
/// calibration set carved out of the training rows, and the fitting rows.
pub struct CohortSplits {
    pub fit: Vec<usize>,
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn cohort_splits(n: usize, config: &PipelineConfig) -> CohortSplits {
    let (rest, test) = holdout_split(n, config.evaluation.test_fraction, config.evaluation.seed);
    let (fit_rel, calib_rel) =
        holdout_split(rest.len(), config.calibration.split_fraction, config.calibration.seed);
    CohortSplits {
        fit: fit_rel.iter().map(|&i| rest[i]).collect(),
        calib: calib_rel.iter().map(|&i| rest[i]).collect(),
        test,
    }
}

/// Labels aligned to the feature table's row order. Both derive from the
/// same cohort rule (one entry per customer with a feature-window event),
/// so a mismatch means the artifacts disagree about the input log.
pub fn aligned_labels<'a>(
    table: &FeatureTable,
    labels: &'a cltv_core::data_model::LabelSet,
) -> Result<Vec<&'a LabelRecord>, CliError> {
    if table.n_rows() != labels.records.len() {
        return Err(CliError::data(format!(
            "feature table has {} rows but labels cover {} customers; \
             artifacts were built from different event logs",
            table.n_rows(),
            labels.records.len()
        )));
    }
    table
        .ids()
        .iter()
        .zip(&labels.records)
        .map(|(id, rec)| {
            if &rec.customer_id == id {
                Ok(rec)
            } else {
                Err(CliError::data(format!(
                    "cohort mismatch at customer {id} vs label {}",
                    rec.customer_id
                )))
            }
        })
        .collect()
}

pub fn derive_aligned_labels(
    ctx: &Ctx,
    table: &FeatureTable,
) -> Result<(cltv_core::data_model::LabelSet, Vec<f64>, Vec<f64>, Vec<f64>), CliError> {
    let events = ctx.load_events()?;
    let labels = derive_labels(&events, &ctx.split()?)?;
    let aligned = aligned_labels(table, &labels)?;
    let churned: Vec<f64> = aligned.iter().map(|r| r.churned as u8 as f64).collect();
    let percentile: Vec<f64> = aligned.iter().map(|r| r.percentile).collect();
    let spend: Vec<f64> = aligned.iter().map(|r| r.net_spend.as_pounds()).collect();
    Ok((labels, churned, percentile, spend))
}
