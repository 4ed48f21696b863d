//! Pipeline configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use cltv_core::data_model::{TimeSplit, Timestamp};
use cltv_core::datagen::GenConfig;
use cltv_core::forest::ForestConfig;
use cltv_core::sgns::SgnsConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub split: SplitConfig,
    pub datagen: GenConfig,
    pub sgns: SgnsConfig,
    pub forest: ForestConfig,
    pub calibration: CalibrationConfig,
    pub evaluation: EvaluationConfig,
    pub mode: ModeConfig,
    pub rolling: RollingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            split: SplitConfig::default(),
            datagen: GenConfig::default(),
            sgns: SgnsConfig::default(),
            forest: ForestConfig::default(),
            calibration: CalibrationConfig::default(),
            evaluation: EvaluationConfig::default(),
            mode: ModeConfig::default(),
            rolling: RollingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Event log (.ndjson or .csv); written by `cltv datagen`, read by
    /// everything else.
    pub events: PathBuf,
    /// Directory all other artifacts live in.
    pub artifacts: PathBuf,
    /// Optional prior-period embedding bundle for warm starts.
    pub prior_embeddings: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            events: PathBuf::from("artifacts/events.ndjson"),
            artifacts: PathBuf::from("artifacts"),
            prior_embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Feature window start, YYYY-MM-DD (UTC midnight).
    pub feature_start: String,
    pub feature_days: i64,
    pub label_days: i64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            feature_start: "2014-01-01".to_string(),
            feature_days: 365,
            label_days: 365,
        }
    }
}

impl SplitConfig {
    pub fn time_split(&self) -> Result<TimeSplit, CliError> {
        let start = Timestamp::parse_date(&self.feature_start).ok_or_else(|| {
            CliError::config(format!("split.feature_start: bad date {:?}", self.feature_start))
        })?;
        TimeSplit::new(
            start,
            start.plus_days(self.feature_days),
            start.plus_days(self.feature_days + self.label_days),
        )
        .map_err(|e| CliError::config(format!("split: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Fraction of the training cohort held out to fit the calibrators.
    pub split_fraction: f64,
    pub value_map_depth: usize,
    pub value_map_min_leaf: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            split_fraction: 0.2,
            value_map_depth: 6,
            value_map_min_leaf: 50,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Fraction of the cohort held out as the evaluation test set.
    pub test_fraction: f64,
    pub calibration_bins: usize,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { test_fraction: 0.2, calibration_bins: 10, seed: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    /// Append embedding columns to the forest design matrix.
    pub embeddings: bool,
    /// Warm-start embeddings from paths.prior_embeddings (or the prior
    /// period when rolling).
    pub warm_start: bool,
    /// Bit-reproducible single-threaded embedding training; when false the
    /// trainer uses lock-free parallel updates.
    pub deterministic: bool,
    /// Worker threads for non-deterministic embedding training; 0 picks the
    /// available parallelism.
    pub threads: usize,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig { embeddings: true, warm_start: false, deterministic: true, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollingConfig {
    pub n_periods: usize,
    pub stride_days: i64,
}

impl Default for RollingConfig {
    fn default() -> Self {
        RollingConfig { n_periods: 3, stride_days: 30 }
    }
}

/// Loads and validates a config file; errors carry the offending field path
/// where TOML can provide one.
pub fn load_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let config: PipelineConfig =
        toml::from_str(&text).map_err(|e| CliError::config(format!("{e}")))?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &PipelineConfig) -> Result<(), CliError> {
    config.split.time_split()?;
    if !(0.0..1.0).contains(&config.calibration.split_fraction)
        || config.calibration.split_fraction <= 0.0
    {
        return Err(CliError::config("calibration.split_fraction must be in (0, 1)"));
    }
    if !(0.0..1.0).contains(&config.evaluation.test_fraction)
        || config.evaluation.test_fraction <= 0.0
    {
        return Err(CliError::config("evaluation.test_fraction must be in (0, 1)"));
    }
    if config.sgns.dim == 0 || config.sgns.k_negatives == 0 || config.sgns.epochs == 0 {
        return Err(CliError::config("sgns.dim, k_negatives and epochs must be >= 1"));
    }
    if config.sgns.window_length < 3 || config.sgns.window_length % 2 == 0 {
        return Err(CliError::config("sgns.window_length must be odd and >= 3"));
    }
    if config.forest.n_trees == 0 || config.forest.min_samples_leaf == 0 {
        return Err(CliError::config("forest.n_trees and min_samples_leaf must be >= 1"));
    }
    if config.rolling.n_periods == 0 || config.rolling.stride_days <= 0 {
        return Err(CliError::config("rolling.n_periods and stride_days must be >= 1"));
    }
    Ok(())
}

/// Applies a CLI seed override: each stage derives its own sub-seed so
/// stages stay decoupled.
pub fn apply_seed_override(config: &mut PipelineConfig, seed: u64) {
    config.datagen.seed = seed;
    config.sgns.seed = seed.wrapping_add(1);
    config.forest.seed = seed.wrapping_add(2);
    config.calibration.seed = seed.wrapping_add(3);
    config.evaluation.seed = seed.wrapping_add(4);
}
