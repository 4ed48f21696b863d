//! Output calibration: a one-dimensional logistic regression maps raw churn
//! scores to probabilities, and a single-feature regression tree maps
//! predicted spend percentiles to monetary values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{ColumnMeta, DecisionTree, SplitCriterion, TreeParams};
use crate::matrix::Matrix;
use crate::scalar::{log_sigmoid, sigmoid};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration needs both classes")]
    SingleClass,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("scores and labels differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Logistic score calibrator on the logit scale:
/// calibrated(s) = sigmoid(a * logit(s) + b), so a = 1, b = 0 is the
/// identity and well-calibrated scores are a fixed point of fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    pub a: f64,
    pub b: f64,
}

const SCORE_EPS: f64 = 1e-3;

fn logit(p: f64) -> f64 {
    let p = p.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    (p / (1.0 - p)).ln()
}

impl PlattModel {
    /// Calibrated probability, strictly inside (0, 1).
    pub fn calibrate(&self, score: f64) -> f64 {
        sigmoid(self.a * logit(score) + self.b).clamp(1e-12, 1.0 - 1e-12)
    }
}

/// Maximizes the Bernoulli log-likelihood of `labels` under
/// sigmoid(a*s + b) by damped Newton iterations, stopping at gradient
/// max-norm below 1e-8 or 100 iterations.
pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<PlattModel, CalibrationError> {
    if scores.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.len() < 10 {
        return Err(CalibrationError::TooFewSamples { need: 10, got: scores.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(CalibrationError::SingleClass);
    }

    let xs: Vec<f64> = scores.iter().map(|&s| logit(s)).collect();
    let nll = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(labels)
            .map(|(&x, &y)| {
                let z = a * x + b;
                if y {
                    -log_sigmoid(z)
                } else {
                    -log_sigmoid(-z)
                }
            })
            .sum()
    };

    let mut a = 1.0;
    let mut b = 0.0;
    let mut current = nll(a, b);
    for _ in 0..100 {
        let mut g_a = 0.0;
        let mut g_b = 0.0;
        let mut h_aa = 0.0;
        let mut h_ab = 0.0;
        let mut h_bb = 0.0;
        for (&s, &y) in xs.iter().zip(labels) {
            let p = sigmoid(a * s + b);
            let err = p - (y as u8 as f64);
            let w = (p * (1.0 - p)).max(1e-12);
            g_a += err * s;
            g_b += err;
            h_aa += w * s * s;
            h_ab += w * s;
            h_bb += w;
        }
        if g_a.abs().max(g_b.abs()) < 1e-8 {
            break;
        }
        // solve the 2x2 Newton system, ridged if nearly singular
        let mut det = h_aa * h_bb - h_ab * h_ab;
        if det.abs() < 1e-12 {
            h_aa += 1e-9;
            h_bb += 1e-9;
            det = h_aa * h_bb - h_ab * h_ab;
        }
        let step_a = (h_bb * g_a - h_ab * g_b) / det;
        let step_b = (h_aa * g_b - h_ab * g_a) / det;
        // halve the step until the likelihood improves
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let na = a - t * step_a;
            let nb = b - t * step_b;
            let next = nll(na, nb);
            if next <= current {
                a = na;
                b = nb;
                current = next;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    debug_assert!(a.is_finite() && b.is_finite());
    Ok(PlattModel { a, b })
}

/// Piecewise-constant map from predicted percentile to monetary value,
/// learnt by a variance-reduction regression tree on one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileValueMap {
    tree: DecisionTree<f64>,
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueMapParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ValueMapParams {
    fn default() -> Self {
        ValueMapParams { max_depth: 6, min_leaf: 50 }
    }
}

/// Fits the percentile -> value tree on held-out calibration rows.
pub fn fit_percentile_value_map(
    predicted_percentiles: &[f64],
    actual_values: &[f64],
    params: ValueMapParams,
) -> Result<PercentileValueMap, CalibrationError> {
    if predicted_percentiles.len() != actual_values.len() {
        return Err(CalibrationError::LengthMismatch(
            predicted_percentiles.len(),
            actual_values.len(),
        ));
    }
    let need = 2 * params.min_leaf;
    if predicted_percentiles.len() < need {
        return Err(CalibrationError::TooFewSamples {
            need,
            got: predicted_percentiles.len(),
        });
    }
    let matrix = Matrix::from_vec(
        predicted_percentiles.len(),
        1,
        predicted_percentiles.to_vec(),
    );
    let columns = [ColumnMeta::numeric("predicted_percentile")];
    let indices: Vec<u32> = (0..predicted_percentiles.len() as u32).collect();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_leaf,
        mtry: 1,
        criterion: SplitCriterion::Variance,
    };
    let mut importances = [0.0];
    // single feature, no bootstrap: the rng is never consulted for choices
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tree = DecisionTree::fit(
        &matrix,
        &columns,
        actual_values,
        &indices,
        &tree_params,
        &mut rng,
        &mut importances,
    );
    Ok(PercentileValueMap { tree, max_depth: params.max_depth, min_leaf: params.min_leaf })
}

impl PercentileValueMap {
    pub fn map(&self, percentile: f64) -> f64 {
        self.tree.map_value(percentile)
    }

    pub fn n_leaves(&self) -> usize {
        self.tree.n_leaves()
    }

    /// Leaf means are non-negative whenever the fitted values are.
    pub fn min_leaf_value(&self) -> f64 {
        self.tree.leaf_values().fold(f64::INFINITY, f64::min)
    }
}

impl DecisionTree<f64> {
    fn map_value(&self, percentile: f64) -> f64 {
        self.predict(&[percentile])
    }

    pub(crate) fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            crate::forest::Node::Leaf { value, .. } => Some(*value),
            _ => None,
        })
    }
}

/// Calibrated outputs for one customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub churn_prob_raw: f64,
    pub churn_prob_calibrated: f64,
    pub percentile: f64,
    pub cltv_value: f64,
}

/// Applies both calibrators to one customer's raw model outputs.
pub fn apply_calibration(
    platt: &PlattModel,
    map: &PercentileValueMap,
    raw_churn_score: f64,
    raw_percentile: f64,
) -> PredictionRecord {
    PredictionRecord {
        churn_prob_raw: raw_churn_score,
        churn_prob_calibrated: platt.calibrate(raw_churn_score),
        percentile: raw_percentile,
        cltv_value: map.map(raw_percentile),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{calibration_curve, expected_calibration_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn well_calibrated_scores_stay_well_calibrated() {
        // labels drawn with p = s: fitting cannot make the reliability curve
        // worse
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = scores.iter().map(|&s| rng.gen_bool(s)).collect();
        let model = fit_platt(&scores, &labels).unwrap();
        let calibrated: Vec<f64> = scores.iter().map(|&s| model.calibrate(s)).collect();
        let ece_before = expected_calibration_error(&calibration_curve(&scores, &labels, 10));
        let ece_after = expected_calibration_error(&calibration_curve(&calibrated, &labels, 10));
        assert!(ece_after <= ece_before + 0.01, "{ece_after} vs {ece_before}");
    }

    #[test]
    fn labels_independent_of_scores_flatten_to_base_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let model = fit_platt(&scores, &labels).unwrap();
        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let p = model.calibrate(s);
            assert!((p - 0.3).abs() < 0.03, "calibrate({s}) = {p}");
        }
    }

    #[test]
    fn separable_data_converges_without_overflow() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let labels: Vec<bool> = scores.iter().map(|&s| s > 0.5).collect();
        let model = fit_platt(&scores, &labels).unwrap();
        assert!(model.a.is_finite() && model.b.is_finite());
        assert!(model.a > 0.0);
        let p = model.calibrate(1.0);
        assert!(p > 0.9 && p < 1.0);
        let q = model.calibrate(0.0);
        assert!(q < 0.1 && q > 0.0);
    }

    #[test]
    fn platt_error_paths() {
        assert!(matches!(
            fit_platt(&[0.5; 5], &[true, false, true, false, true]),
            Err(CalibrationError::TooFewSamples { .. })
        ));
        let scores = vec![0.1; 20];
        assert!(matches!(
            fit_platt(&scores, &vec![true; 20]),
            Err(CalibrationError::SingleClass)
        ));
    }

    #[test]
    fn platt_output_strictly_inside_unit_interval() {
        let model = PlattModel { a: 500.0, b: -250.0 };
        for s in [0.0, 0.5, 1.0] {
            let p = model.calibrate(s);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn constant_values_give_single_leaf() {
        let pct: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let vals = vec![42.0; 200];
        let map = fit_percentile_value_map(&pct, &vals, ValueMapParams::default()).unwrap();
        assert_eq!(map.n_leaves(), 1);
        assert_eq!(map.map(0.3), 42.0);
    }

    #[test]
    fn linear_target_is_approximated_within_one_percent_aggregate() {
        let n = 2000;
        let pct: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = pct.iter().map(|p| 100.0 * p).collect();
        let map = fit_percentile_value_map(&pct, &vals, ValueMapParams::default()).unwrap();
        let mapped_sum: f64 = pct.iter().map(|&p| map.map(p)).sum();
        let actual_sum: f64 = vals.iter().sum();
        assert!(
            (mapped_sum - actual_sum).abs() <= 0.01 * actual_sum,
            "{mapped_sum} vs {actual_sum}"
        );
    }

    #[test]
    fn fitted_map_is_monotone_on_monotone_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1500;
        let pct: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let vals: Vec<f64> = pct.iter().map(|p| (p * 4.0).exp() * 10.0).collect();
        let map = fit_percentile_value_map(&pct, &vals, ValueMapParams::default()).unwrap();
        let mut prev = map.map(0.0);
        for i in 1..=100 {
            let cur = map.map(i as f64 / 100.0);
            assert!(cur >= prev, "map not monotone at {i}");
            prev = cur;
        }
        assert!(map.min_leaf_value() >= 0.0);
    }

    #[test]
    fn bottom_leaf_of_zero_heavy_cohort_maps_to_zero() {
        // many zero-spend customers at low percentiles
        let n = 1000;
        let pct: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> =
            pct.iter().map(|&p| if p < 0.4 { 0.0 } else { 50.0 + 100.0 * p }).collect();
        let map = fit_percentile_value_map(&pct, &vals, ValueMapParams::default()).unwrap();
        assert_eq!(map.map(0.0), 0.0);
    }

    #[test]
    fn apply_calibration_builds_the_record() {
        let platt = PlattModel { a: 1.0, b: 0.0 };
        let pct: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let vals: Vec<f64> = pct.iter().map(|p| 10.0 * p).collect();
        let map = fit_percentile_value_map(&pct, &vals, ValueMapParams::default()).unwrap();
        let rec = apply_calibration(&platt, &map, 0.6, 0.9);
        assert_eq!(rec.churn_prob_raw, 0.6);
        // a = 1, b = 0 is the identity on the logit scale
        assert!((rec.churn_prob_calibrated - 0.6).abs() < 1e-9);
        assert_eq!(rec.percentile, 0.9);
        assert!(rec.cltv_value > 0.0);
    }

    #[test]
    fn identity_like_platt_preserves_order_and_range() {
        // a fitted model on clean scores behaves monotonically
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let scores: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = scores.iter().map(|&s| rng.gen_bool(s)).collect();
        let model = fit_platt(&scores, &labels).unwrap();
        assert!(model.a > 0.0);
        let p1 = model.calibrate(0.2);
        let p2 = model.calibrate(0.8);
        assert!(p2 > p1);
    }
}
