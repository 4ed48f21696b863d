//! Random forest: bagged CART trees for churn classification and spend
//! percentile regression, with impurity-based feature importance and
//! 10-fold cross validation for meta-parameter selection.

pub mod tree;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use tree::{DecisionTree, Node, SplitCriterion, SplitTest, TreeParams};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("labels and rows differ: {labels} vs {rows}")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("feature count mismatch: model has {expected}, input has {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("classification labels must be 0 or 1")]
    BadClassLabel,
    #[error("percentile labels must lie in [0, 1]")]
    BadPercentileLabel,
    #[error("model task does not support this prediction")]
    WrongTask,
    #[error("cross-validation grid is empty")]
    EmptyGrid,
    #[error("cross-validation needs both classes in every training fold")]
    SingleClassFold,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestTask {
    ChurnClassifier,
    PercentileRegressor,
}

/// Kind of a design-matrix column. Categorical columns hold small integer
/// category ids and split by subset; numeric columns split by threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical { n_categories: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnMeta { name: name.into(), kind: ColumnKind::Numeric }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; None picks sqrt(p) for classification
    /// and p/3 for regression.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 12,
            min_samples_leaf: 25,
            mtry: None,
            bootstrap: true,
            seed: 2,
        }
    }
}

impl ForestConfig {
    fn mtry_for(&self, task: ForestTask, n_features: usize) -> usize {
        match self.mtry {
            Some(m) => m.clamp(1, n_features),
            None => match task {
                ForestTask::ChurnClassifier => (n_features as f64).sqrt().ceil() as usize,
                ForestTask::PercentileRegressor => (n_features / 3).max(1),
            },
        }
    }
}

/// Bagged CART ensemble with per-feature impurity importances normalized to
/// sum 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<S> {
    pub task: ForestTask,
    pub trees: Vec<DecisionTree<S>>,
    pub columns: Vec<ColumnMeta>,
    pub importances: Vec<f64>,
}

impl<S: Scalar> ForestModel<S> {
    /// Grows trees on bootstrap samples: Gini splits for classification,
    /// variance reduction for regression. Deterministic under the seed:
    /// every tree derives its own generator from (seed, tree index).
    pub fn fit(
        task: ForestTask,
        data: &Matrix<S>,
        columns: &[ColumnMeta],
        labels: &[f64],
        config: &ForestConfig,
    ) -> Result<ForestModel<S>, ForestError> {
        let n = data.n_rows();
        if labels.len() != n {
            return Err(ForestError::LabelMismatch { labels: labels.len(), rows: n });
        }
        let need = 2 * config.min_samples_leaf;
        if n < need {
            return Err(ForestError::TooFewRows { need, got: n });
        }
        assert_eq!(columns.len(), data.n_cols(), "column metadata must cover the matrix");
        match task {
            ForestTask::ChurnClassifier => {
                if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                    return Err(ForestError::BadClassLabel);
                }
            }
            ForestTask::PercentileRegressor => {
                if labels.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
                    return Err(ForestError::BadPercentileLabel);
                }
            }
        }

        let params = TreeParams {
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf,
            mtry: config.mtry_for(task, columns.len()),
            criterion: match task {
                ForestTask::ChurnClassifier => SplitCriterion::Gini,
                ForestTask::PercentileRegressor => SplitCriterion::Variance,
            },
        };

        let results: Vec<(DecisionTree<S>, Vec<f64>)> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(config.seed, t));
                let indices: Vec<u32> = if config.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                let mut importances = vec![0.0; columns.len()];
                let tree = DecisionTree::fit(
                    data,
                    columns,
                    labels,
                    &indices,
                    &params,
                    &mut rng,
                    &mut importances,
                );
                (tree, importances)
            })
            .collect();

        let mut trees = Vec::with_capacity(config.n_trees);
        let mut importances = vec![0.0; columns.len()];
        for (tree, imp) in results {
            trees.push(tree);
            for (total, v) in importances.iter_mut().zip(imp) {
                *total += v;
            }
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            for v in &mut importances {
                *v /= total;
            }
        } else {
            // degenerate fit with no splits anywhere: uniform by convention
            let u = 1.0 / columns.len() as f64;
            importances.fill(u);
        }
        Ok(ForestModel { task, trees, columns: columns.to_vec(), importances })
    }

    fn check_row(&self, row: &[S]) -> Result<(), ForestError> {
        if row.len() != self.columns.len() {
            return Err(ForestError::FeatureMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Mean over trees of leaf positive-class fractions.
    pub fn predict_proba(&self, row: &[S]) -> Result<f64, ForestError> {
        if self.task != ForestTask::ChurnClassifier {
            return Err(ForestError::WrongTask);
        }
        self.check_row(row)?;
        Ok(self.mean_over_trees(row))
    }

    /// Mean over trees of leaf means, clipped to [0, 1].
    pub fn predict_percentile(&self, row: &[S]) -> Result<f64, ForestError> {
        if self.task != ForestTask::PercentileRegressor {
            return Err(ForestError::WrongTask);
        }
        self.check_row(row)?;
        Ok(self.mean_over_trees(row).clamp(0.0, 1.0))
    }

    fn mean_over_trees(&self, row: &[S]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }

    /// (feature name, importance) in descending importance order.
    pub fn importance(&self) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .columns
            .iter()
            .zip(&self.importances)
            .map(|(c, &w)| (c.name.clone(), w))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite importance"));
        ranked
    }
}

fn tree_seed(base: u64, tree: usize) -> u64 {
    base.wrapping_add((tree as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Per-configuration fold metrics from cross validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: usize,
    /// fold_metrics[config][fold]: AUC for classification, RMSE for
    /// regression.
    pub fold_metrics: Vec<Vec<f64>>,
}

/// 10-fold style cross validation over a config grid: stratified fold
/// assignment for classification, plain shuffled folds for regression.
/// Picks the config with max mean AUC / min mean RMSE.
pub fn cross_validate<S: Scalar>(
    task: ForestTask,
    data: &Matrix<S>,
    columns: &[ColumnMeta],
    labels: &[f64],
    grid: &[ForestConfig],
    folds: usize,
    seed: u64,
) -> Result<CvOutcome, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::EmptyGrid);
    }
    let n = data.n_rows();
    if n < folds * 2 {
        return Err(ForestError::TooFewRows { need: folds * 2, got: n });
    }
    let assignment = fold_assignment(task, labels, folds, seed);

    let mut fold_metrics = Vec::with_capacity(grid.len());
    for config in grid {
        let mut metrics = Vec::with_capacity(folds);
        for fold in 0..folds {
            let train_idx: Vec<usize> =
                (0..n).filter(|&i| assignment[i] != fold).collect();
            let val_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
            let train_m = data.select_rows(&train_idx);
            let train_y: Vec<f64> = train_idx.iter().map(|&i| labels[i]).collect();
            let model = ForestModel::fit(task, &train_m, columns, &train_y, config)?;
            let metric = match task {
                ForestTask::ChurnClassifier => {
                    let scores: Vec<f64> = val_idx
                        .iter()
                        .map(|&i| model.predict_proba(data.row(i)))
                        .collect::<Result<_, _>>()?;
                    let truth: Vec<bool> = val_idx.iter().map(|&i| labels[i] > 0.5).collect();
                    evaluation::auc(&scores, &truth).map_err(|_| ForestError::SingleClassFold)?
                }
                ForestTask::PercentileRegressor => {
                    let preds: Vec<f64> = val_idx
                        .iter()
                        .map(|&i| model.predict_percentile(data.row(i)))
                        .collect::<Result<_, _>>()?;
                    let actual: Vec<f64> = val_idx.iter().map(|&i| labels[i]).collect();
                    evaluation::rmse(&preds, &actual)
                }
            };
            metrics.push(metric);
        }
        fold_metrics.push(metrics);
    }

    let mean = |m: &Vec<f64>| m.iter().sum::<f64>() / m.len() as f64;
    let best = match task {
        ForestTask::ChurnClassifier => fold_metrics
            .iter()
            .enumerate()
            .max_by(|a, b| mean(a.1).partial_cmp(&mean(b.1)).expect("finite metric"))
            .map(|(i, _)| i),
        ForestTask::PercentileRegressor => fold_metrics
            .iter()
            .enumerate()
            .min_by(|a, b| mean(a.1).partial_cmp(&mean(b.1)).expect("finite metric"))
            .map(|(i, _)| i),
    }
    .expect("nonempty grid");
    Ok(CvOutcome { best, fold_metrics })
}

/// Fold id per row. For classification the shuffle happens within each
/// class, dealing rows round-robin so folds are stratified.
pub fn fold_assignment(task: ForestTask, labels: &[f64], folds: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; n];
    match task {
        ForestTask::ChurnClassifier => {
            for class in [0.0, 1.0] {
                let mut idx: Vec<usize> =
                    (0..n).filter(|&i| labels[i] == class).collect();
                idx.shuffle(&mut rng);
                for (k, &i) in idx.iter().enumerate() {
                    assignment[i] = k % folds;
                }
            }
        }
        ForestTask::PercentileRegressor => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for (k, &i) in idx.iter().enumerate() {
                assignment[i] = k % folds;
            }
        }
    }
    assignment
}

const FOREST_MAGIC: &[u8; 8] = b"CLTVFRST";
const FOREST_VERSION: u32 = 1;

impl<S: Scalar> ForestModel<S> {
    /// Self-describing versioned binary: header, column metadata,
    /// importances, then flat node arrays per tree (thresholds stored as
    /// f64, exact for both scalar widths).
    pub fn write_to<W: std::io::Write>(&self, w: &mut W) -> Result<(), ForestError> {
        w.write_all(FOREST_MAGIC)?;
        w.write_all(&FOREST_VERSION.to_le_bytes())?;
        w.write_all(&[match self.task {
            ForestTask::ChurnClassifier => 0u8,
            ForestTask::PercentileRegressor => 1u8,
        }])?;
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        for c in &self.columns {
            write_str(w, &c.name)?;
            match c.kind {
                ColumnKind::Numeric => w.write_all(&u32::MAX.to_le_bytes())?,
                ColumnKind::Categorical { n_categories } => {
                    w.write_all(&n_categories.to_le_bytes())?
                }
            }
        }
        for &v in &self.importances {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.trees.len() as u32).to_le_bytes())?;
        for tree in &self.trees {
            w.write_all(&(tree.nodes.len() as u32).to_le_bytes())?;
            for node in &tree.nodes {
                match node {
                    Node::Leaf { value, n } => {
                        w.write_all(&[0u8])?;
                        w.write_all(&value.to_le_bytes())?;
                        w.write_all(&n.to_le_bytes())?;
                    }
                    Node::Split { feature, test, default_left, left, right } => {
                        let (tag, payload) = match test {
                            SplitTest::Threshold(t) => (1u8, t.into_f64().to_bits()),
                            SplitTest::Categories(mask) => (2u8, *mask),
                        };
                        w.write_all(&[tag])?;
                        w.write_all(&feature.to_le_bytes())?;
                        w.write_all(&payload.to_le_bytes())?;
                        w.write_all(&[*default_left as u8])?;
                        w.write_all(&left.to_le_bytes())?;
                        w.write_all(&right.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: std::io::Read>(r: &mut R) -> Result<ForestModel<S>, ForestError> {
        use crate::matrix::{bad_data, read_u32, read_u64};
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FOREST_MAGIC {
            return Err(bad_data("bad forest magic").into());
        }
        let version = read_u32(r)?;
        if version != FOREST_VERSION {
            return Err(bad_data(format!("unsupported forest version {version}")).into());
        }
        let mut task_byte = [0u8; 1];
        r.read_exact(&mut task_byte)?;
        let task = match task_byte[0] {
            0 => ForestTask::ChurnClassifier,
            1 => ForestTask::PercentileRegressor,
            t => return Err(bad_data(format!("bad task byte {t}")).into()),
        };
        let n_cols = read_u32(r)? as usize;
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let name = read_str(r)?;
            let cats = read_u32(r)?;
            let kind = if cats == u32::MAX {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical { n_categories: cats }
            };
            columns.push(ColumnMeta { name, kind });
        }
        let mut importances = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            importances.push(f64::from_le_bytes(b));
        }
        let n_trees = read_u32(r)? as usize;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = read_u32(r)? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let mut tag = [0u8; 1];
                r.read_exact(&mut tag)?;
                match tag[0] {
                    0 => {
                        let mut b = [0u8; 8];
                        r.read_exact(&mut b)?;
                        let value = f64::from_le_bytes(b);
                        let n = read_u32(r)?;
                        nodes.push(Node::Leaf { value, n });
                    }
                    t @ (1 | 2) => {
                        let feature = read_u32(r)?;
                        let payload = read_u64(r)?;
                        let mut flag = [0u8; 1];
                        r.read_exact(&mut flag)?;
                        let left = read_u32(r)?;
                        let right = read_u32(r)?;
                        let test = if t == 1 {
                            SplitTest::Threshold(S::from_f64_lossy(f64::from_bits(payload)))
                        } else {
                            SplitTest::Categories(payload)
                        };
                        nodes.push(Node::Split {
                            feature,
                            test,
                            default_left: flag[0] != 0,
                            left,
                            right,
                        });
                    }
                    t => return Err(bad_data(format!("bad node tag {t}")).into()),
                }
            }
            trees.push(DecisionTree { nodes });
        }
        Ok(ForestModel { task, trees, columns, importances })
    }

    /// JSON dump of the tree structure, intended for small models.
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "task": match self.task {
                ForestTask::ChurnClassifier => "churn_classifier",
                ForestTask::PercentileRegressor => "percentile_regressor",
            },
            "columns": self.columns.iter().map(|c| &c.name).collect::<Vec<_>>(),
            "importances": self.importances,
            "trees": self.trees.iter().map(tree_json).collect::<Vec<_>>(),
        })
    }
}

fn tree_json<S: Scalar>(tree: &DecisionTree<S>) -> serde_json::Value {
    fn walk<S: Scalar>(nodes: &[Node<S>], at: usize) -> serde_json::Value {
        match &nodes[at] {
            Node::Leaf { value, n } => serde_json::json!({ "leaf": value, "n": n }),
            Node::Split { feature, test, default_left, left, right } => {
                let test_json = match test {
                    SplitTest::Threshold(t) => serde_json::json!({ "threshold": t.into_f64() }),
                    SplitTest::Categories(mask) => serde_json::json!({ "categories": mask }),
                };
                serde_json::json!({
                    "feature": feature,
                    "test": test_json,
                    "default_left": default_left,
                    "left": walk(nodes, *left as usize),
                    "right": walk(nodes, *right as usize),
                })
            }
        }
    }
    walk(&tree.nodes, 0)
}

fn write_str<W: std::io::Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_str<R: std::io::Read>(r: &mut R) -> std::io::Result<String> {
    let len = crate::matrix::read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| crate::matrix::bad_data(format!("bad utf8: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_meta(n: usize) -> Vec<ColumnMeta> {
        (0..n).map(|i| ColumnMeta::numeric(format!("f{i}"))).collect()
    }

    fn small_config(n_trees: usize, seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees,
            max_depth: 8,
            min_samples_leaf: 2,
            mtry: None,
            bootstrap: true,
            seed,
        }
    }

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller is plenty for test data
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn constant_labels_give_single_leaf_trees() {
        let data = Matrix::from_vec(10, 2, (0..20).map(|i| i as f64).collect());
        let labels = vec![1.0; 10];
        let model = ForestModel::fit(
            ForestTask::ChurnClassifier,
            &data,
            &numeric_meta(2),
            &labels,
            &small_config(5, 1),
        )
        .unwrap();
        assert!(model.trees.iter().all(|t| t.n_nodes() == 1));
        assert_eq!(model.predict_proba(&[0.0, 0.0]).unwrap(), 1.0);
        // degenerate importances stay normalized
        let total: f64 = model.importances.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separable_feature_reaches_training_auc_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let labels: Vec<f64> = x.iter().map(|&v| if v < 0.0 { 1.0 } else { 0.0 }).collect();
        let data = Matrix::from_vec(n, 1, x);
        let model = ForestModel::fit(
            ForestTask::ChurnClassifier,
            &data,
            &numeric_meta(1),
            &labels,
            &small_config(30, 2),
        )
        .unwrap();
        let scores: Vec<f64> =
            (0..n).map(|i| model.predict_proba(data.row(i)).unwrap()).collect();
        let truth: Vec<bool> = labels.iter().map(|&l| l > 0.5).collect();
        assert_eq!(evaluation::auc(&scores, &truth).unwrap(), 1.0);
    }

    #[test]
    fn planted_signal_feature_dominates_importance() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 400;
            let mut data = Vec::with_capacity(n * 2);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let signal = gaussian(&mut rng);
                let noise = gaussian(&mut rng);
                data.push(signal);
                data.push(noise);
                labels.push(if signal > 0.0 { 1.0 } else { 0.0 });
            }
            let data = Matrix::from_vec(n, 2, data);
            let model = ForestModel::fit(
                ForestTask::ChurnClassifier,
                &data,
                &numeric_meta(2),
                &labels,
                &ForestConfig { mtry: Some(2), ..small_config(25, seed) },
            )
            .unwrap();
            assert!(
                model.importances[0] > model.importances[1],
                "seed {seed}: {:?}",
                model.importances
            );
        }
    }

    #[test]
    fn single_feature_importance_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let labels: Vec<f64> = x.iter().map(|&v| if v > 0.3 { 1.0 } else { 0.0 }).collect();
        let data = Matrix::from_vec(n, 1, x);
        let model = ForestModel::fit(
            ForestTask::ChurnClassifier,
            &data,
            &numeric_meta(1),
            &labels,
            &small_config(10, 3),
        )
        .unwrap();
        assert!((model.importances[0] - 1.0).abs() < 1e-9);
        let ranked = model.importance();
        assert_eq!(ranked[0].0, "f0");
    }

    #[test]
    fn pure_noise_features_split_importance_evenly() {
        let mut hits = 0;
        let seeds = 20;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = 300;
            let mut data = Vec::with_capacity(n * 2);
            let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
            for _ in 0..n {
                data.push(gaussian(&mut rng));
                data.push(gaussian(&mut rng));
            }
            let data = Matrix::from_vec(n, 2, data);
            let model = ForestModel::fit(
                ForestTask::ChurnClassifier,
                &data,
                &numeric_meta(2),
                &labels,
                &small_config(20, seed),
            )
            .unwrap();
            if (model.importances[0] - 0.5).abs() <= 0.1 {
                hits += 1;
            }
        }
        // symmetry holds within +-0.1 for the large majority of seeds
        assert!(hits >= seeds - 3, "only {hits}/{seeds} seeds within tolerance");
    }

    #[test]
    fn percentile_regression_recovers_monotone_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 600;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<f64> = x.iter().map(|&v| (v + 0.05 * gaussian(&mut rng)).clamp(0.0, 1.0)).collect();
        let data = Matrix::from_vec(n, 1, x.clone());
        let model = ForestModel::fit(
            ForestTask::PercentileRegressor,
            &data,
            &numeric_meta(1),
            &labels,
            &ForestConfig { min_samples_leaf: 10, ..small_config(40, 4) },
        )
        .unwrap();
        let preds: Vec<f64> =
            (0..n).map(|i| model.predict_percentile(data.row(i)).unwrap()).collect();
        assert!(preds.iter().all(|p| (0.0..=1.0).contains(p)));
        let rho = evaluation::spearman(&preds, &labels).unwrap();
        assert!(rho > 0.9, "spearman {rho}");
    }

    #[test]
    fn forest_of_identical_trees_equals_one_tree() {
        let data = Matrix::from_vec(40, 1, (0..40).map(|i| i as f64).collect());
        let labels: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        // no bootstrap, mtry = all: every tree is identical
        let cfg = ForestConfig {
            n_trees: 7,
            bootstrap: false,
            mtry: Some(1),
            min_samples_leaf: 2,
            max_depth: 6,
            seed: 5,
        };
        let model = ForestModel::fit(
            ForestTask::ChurnClassifier,
            &data,
            &numeric_meta(1),
            &labels,
            &cfg,
        )
        .unwrap();
        let single = &model.trees[0];
        for i in 0..40 {
            assert_eq!(model.predict_proba(data.row(i)).unwrap(), single.predict(data.row(i)));
        }
    }

    #[test]
    fn prediction_variance_shrinks_with_more_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 300;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let v = gaussian(&mut rng);
            data.push(v);
            labels.push(if v + 0.8 * gaussian(&mut rng) > 0.0 { 1.0 } else { 0.0 });
        }
        let data = Matrix::from_vec(n, 1, data);
        let probe = [0.35];
        let var_at = |n_trees: usize| {
            let preds: Vec<f64> = (0..10)
                .map(|seed| {
                    let model = ForestModel::fit(
                        ForestTask::ChurnClassifier,
                        &data,
                        &numeric_meta(1),
                        &labels,
                        &ForestConfig { min_samples_leaf: 5, ..small_config(n_trees, seed) },
                    )
                    .unwrap();
                    model.predict_proba(&probe).unwrap()
                })
                .collect();
            let m = preds.iter().sum::<f64>() / preds.len() as f64;
            preds.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / preds.len() as f64
        };
        assert!(var_at(200) < var_at(10));
    }

    #[test]
    fn fit_is_deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 120;
        let data: Vec<f64> = (0..n * 3).map(|_| gaussian(&mut rng)).collect();
        let labels: Vec<f64> = (0..n).map(|i| (data[i * 3] > 0.0) as u8 as f64).collect();
        let data = Matrix::from_vec(n, 3, data);
        let cfg = small_config(12, 77);
        let a = ForestModel::fit(ForestTask::ChurnClassifier, &data, &numeric_meta(3), &labels, &cfg)
            .unwrap();
        let b = ForestModel::fit(ForestTask::ChurnClassifier, &data, &numeric_meta(3), &labels, &cfg)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_paths() {
        let data = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let cfg = ForestConfig { min_samples_leaf: 25, ..ForestConfig::default() };
        assert!(matches!(
            ForestModel::<f64>::fit(
                ForestTask::ChurnClassifier,
                &data,
                &numeric_meta(1),
                &[0.0, 1.0, 0.0, 1.0],
                &cfg
            ),
            Err(ForestError::TooFewRows { .. })
        ));
        let model = ForestModel::fit(
            ForestTask::ChurnClassifier,
            &data,
            &numeric_meta(1),
            &[0.0, 1.0, 0.0, 1.0],
            &small_config(3, 1),
        )
        .unwrap();
        assert!(matches!(
            model.predict_proba(&[1.0, 2.0]),
            Err(ForestError::FeatureMismatch { .. })
        ));
        assert!(matches!(model.predict_percentile(&[1.0]), Err(ForestError::WrongTask)));
        assert!(matches!(
            ForestModel::<f64>::fit(
                ForestTask::ChurnClassifier,
                &data,
                &numeric_meta(1),
                &[0.0, 0.5, 1.0, 0.0],
                &small_config(3, 1)
            ),
            Err(ForestError::BadClassLabel)
        ));
    }

    #[test]
    fn cv_single_config_returns_it_with_fold_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 100;
        let x: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let labels: Vec<f64> = x.iter().map(|&v| (v > 0.0) as u8 as f64).collect();
        let data = Matrix::from_vec(n, 1, x);
        let grid = vec![small_config(10, 7)];
        let out = cross_validate(
            ForestTask::ChurnClassifier,
            &data,
            &numeric_meta(1),
            &labels,
            &grid,
            5,
            3,
        )
        .unwrap();
        assert_eq!(out.best, 0);
        assert_eq!(out.fold_metrics.len(), 1);
        assert_eq!(out.fold_metrics[0].len(), 5);
    }

    #[test]
    fn cv_folds_partition_rows() {
        let labels: Vec<f64> = (0..53).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let assignment = fold_assignment(ForestTask::ChurnClassifier, &labels, 10, 9);
        assert_eq!(assignment.len(), 53);
        assert!(assignment.iter().all(|&f| f < 10));
        // stratified: each fold's positive count differs by at most one
        let mut pos = vec![0usize; 10];
        for (i, &f) in assignment.iter().enumerate() {
            if labels[i] > 0.5 {
                pos[f] += 1;
            }
        }
        let (lo, hi) = (pos.iter().min().unwrap(), pos.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn cv_prefers_depth_on_xor_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let n = 400;
        let mut data = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a = rng.gen_bool(0.5);
            let b = rng.gen_bool(0.5);
            data.push(a as u8 as f64 + 0.1 * gaussian(&mut rng));
            data.push(b as u8 as f64 + 0.1 * gaussian(&mut rng));
            labels.push((a ^ b) as u8 as f64);
        }
        let data = Matrix::from_vec(n, 2, data);
        let shallow = ForestConfig {
            n_trees: 20,
            max_depth: 1,
            min_samples_leaf: 5,
            mtry: Some(2),
            bootstrap: true,
            seed: 1,
        };
        let deep = ForestConfig { max_depth: 8, ..shallow.clone() };
        let out = cross_validate(
            ForestTask::ChurnClassifier,
            &data,
            &numeric_meta(2),
            &labels,
            &[shallow, deep],
            10,
            5,
        )
        .unwrap();
        assert_eq!(out.best, 1);
        assert!(matches!(
            cross_validate::<f64>(
                ForestTask::ChurnClassifier,
                &data,
                &numeric_meta(2),
                &labels,
                &[],
                10,
                5
            ),
            Err(ForestError::EmptyGrid)
        ));
    }

    #[test]
    fn binary_roundtrip_preserves_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let n = 150;
        let mut data = Vec::new();
        for _ in 0..n {
            data.push(gaussian(&mut rng));
            data.push(rng.gen_range(0..4) as f64);
        }
        let labels: Vec<f64> = (0..n).map(|i| (data[i * 2] > 0.0) as u8 as f64).collect();
        let columns = vec![
            ColumnMeta::numeric("x"),
            ColumnMeta { name: "country".into(), kind: ColumnKind::Categorical { n_categories: 5 } },
        ];
        let data = Matrix::from_vec(n, 2, data);
        let model =
            ForestModel::fit(ForestTask::ChurnClassifier, &data, &columns, &labels, &small_config(6, 3))
                .unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back: ForestModel<f64> = ForestModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(model, back);
        let json = model.to_debug_json();
        assert_eq!(json["trees"].as_array().unwrap().len(), 6);
    }
}
