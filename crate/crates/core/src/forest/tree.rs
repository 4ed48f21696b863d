//! Single CART tree with numeric threshold and categorical subset splits,
//! plus a learned default direction for missing values.

use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::{ColumnKind, ColumnMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCriterion {
    Gini,
    Variance,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Number of candidate features sampled at each split.
    pub mtry: usize,
    pub criterion: SplitCriterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitTest<S> {
    /// Values strictly below the threshold go left.
    Threshold(S),
    /// Category ids whose bit is set go left.
    Categories(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<S> {
    Leaf {
        /// Positive-class fraction (classification) or target mean
        /// (regression).
        value: f64,
        n: u32,
    },
    Split {
        feature: u32,
        test: SplitTest<S>,
        /// Side taken by missing values and unmatched categories.
        default_left: bool,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<S> {
    pub(crate) nodes: Vec<Node<S>>,
}

/// Label statistics sufficient for both criteria. For Gini, `sum` counts
/// positives; for variance, `sum`/`sumsq` accumulate targets.
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    n: f64,
    sum: f64,
    sumsq: f64,
}

impl Stats {
    #[inline]
    fn add(&mut self, label: f64) {
        self.n += 1.0;
        self.sum += label;
        self.sumsq += label * label;
    }

    #[inline]
    fn merge(&mut self, other: &Stats) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    /// n * impurity: 2*p*(1-p)*n for Gini, sum of squared deviations for
    /// variance. Gains from this cost are sample-count weighted.
    #[inline]
    fn cost(&self, criterion: SplitCriterion) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        match criterion {
            SplitCriterion::Gini => 2.0 * self.sum * (self.n - self.sum) / self.n,
            SplitCriterion::Variance => self.sumsq - self.sum * self.sum / self.n,
        }
    }

    fn mean(&self) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            self.sum / self.n
        }
    }
}

struct BestSplit<S> {
    gain: f64,
    feature: u32,
    test: SplitTest<S>,
    default_left: bool,
}

impl<S: Scalar> DecisionTree<S> {
    /// Grows a tree on the rows in `indices`. `importances` accumulates the
    /// count-weighted impurity decrease per feature.
    pub fn fit(
        data: &Matrix<S>,
        columns: &[ColumnMeta],
        labels: &[f64],
        indices: &[u32],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
        importances: &mut [f64],
    ) -> DecisionTree<S> {
        let mut tree = DecisionTree { nodes: Vec::new() };
        let mut scratch = indices.to_vec();
        tree.grow(data, columns, labels, &mut scratch, 0, params, rng, importances);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        data: &Matrix<S>,
        columns: &[ColumnMeta],
        labels: &[f64],
        indices: &mut [u32],
        depth: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
        importances: &mut [f64],
    ) -> u32 {
        let mut stats = Stats::default();
        for &i in indices.iter() {
            stats.add(labels[i as usize]);
        }
        let node_cost = stats.cost(params.criterion);

        let can_split = depth < params.max_depth
            && indices.len() >= 2 * params.min_samples_leaf
            && node_cost > 1e-12;
        let best = if can_split {
            self.find_best_split(data, columns, labels, indices, params, rng)
        } else {
            None
        };

        let Some(best) = best else {
            let id = self.nodes.len() as u32;
            self.nodes.push(Node::Leaf { value: stats.mean(), n: stats.n as u32 });
            return id;
        };

        importances[best.feature as usize] += best.gain;

        // partition in place: left block first, preserving determinism via
        // a stable scan
        let goes_left = |row: u32| -> bool {
            let v = data.get(row as usize, best.feature as usize);
            route_left(v, &best.test, best.default_left)
        };
        let mut left: Vec<u32> = Vec::with_capacity(indices.len());
        let mut right: Vec<u32> = Vec::with_capacity(indices.len());
        for &i in indices.iter() {
            if goes_left(i) {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        indices[..left.len()].copy_from_slice(&left);
        indices[left.len()..].copy_from_slice(&right);
        let split_at = left.len();
        drop((left, right));

        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Split {
            feature: best.feature,
            test: best.test,
            default_left: best.default_left,
            left: 0,
            right: 0,
        });
        let (l_idx, r_idx) = indices.split_at_mut(split_at);
        let left_id = self.grow(data, columns, labels, l_idx, depth + 1, params, rng, importances);
        let right_id =
            self.grow(data, columns, labels, r_idx, depth + 1, params, rng, importances);
        if let Node::Split { left, right, .. } = &mut self.nodes[id as usize] {
            *left = left_id;
            *right = right_id;
        }
        id
    }

    fn find_best_split(
        &self,
        data: &Matrix<S>,
        columns: &[ColumnMeta],
        labels: &[f64],
        indices: &[u32],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Option<BestSplit<S>> {
        let n_features = columns.len();
        let mtry = params.mtry.clamp(1, n_features);
        // partial Fisher-Yates draw of mtry distinct features, then sorted
        // so impurity ties break on the lowest feature id
        let mut pool: Vec<u32> = (0..n_features as u32).collect();
        for k in 0..mtry {
            let j = rng.gen_range(k..n_features);
            pool.swap(k, j);
        }
        let mut candidates = pool[..mtry].to_vec();
        candidates.sort_unstable();

        let mut parent = Stats::default();
        for &i in indices {
            parent.add(labels[i as usize]);
        }
        let parent_cost = parent.cost(params.criterion);

        let mut best: Option<BestSplit<S>> = None;
        for &feature in &candidates {
            let cand = match columns[feature as usize].kind {
                ColumnKind::Numeric => self.best_numeric_split(
                    data, labels, indices, feature, parent_cost, params,
                ),
                ColumnKind::Categorical { n_categories } => self.best_categorical_split(
                    data, labels, indices, feature, n_categories, parent_cost, params,
                ),
            };
            if let Some(c) = cand {
                // strictly-greater keeps the first (lowest feature id,
                // lowest threshold) on exact ties
                if best.as_ref().map_or(true, |b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn best_numeric_split(
        &self,
        data: &Matrix<S>,
        labels: &[f64],
        indices: &[u32],
        feature: u32,
        parent_cost: f64,
        params: &TreeParams,
    ) -> Option<BestSplit<S>> {
        let mut present: Vec<(S, f64)> = Vec::with_capacity(indices.len());
        let mut missing = Stats::default();
        for &i in indices {
            let v = data.get(i as usize, feature as usize);
            if v.is_nan() {
                missing.add(labels[i as usize]);
            } else {
                present.push((v, labels[i as usize]));
            }
        }
        if present.len() < 2 {
            return None;
        }
        present.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("no NaN in present values"));

        let mut left = Stats::default();
        let mut best: Option<(f64, S, bool)> = None;
        let present_total = {
            let mut s = Stats::default();
            for &(_, l) in &present {
                s.add(l);
            }
            s
        };
        let n_present = present.len();
        let mut left_count = 0usize;
        for w in 0..n_present - 1 {
            left.add(present[w].1);
            left_count += 1;
            if present[w].0 == present[w + 1].0 {
                continue;
            }
            let two = S::from_f64_lossy(2.0);
            let mid = (present[w].0 + present[w + 1].0) / two;
            // guard against midpoint rounding onto the lower value
            if !(mid > present[w].0) {
                continue;
            }
            // majority default direction: missing joins the larger side
            let right_count = n_present - left_count;
            let default_left = left_count >= right_count;
            let mut l = left;
            let mut r = Stats {
                n: present_total.n - left.n,
                sum: present_total.sum - left.sum,
                sumsq: present_total.sumsq - left.sumsq,
            };
            if default_left {
                l.merge(&missing);
            } else {
                r.merge(&missing);
            }
            if (l.n as usize) < params.min_samples_leaf || (r.n as usize) < params.min_samples_leaf
            {
                continue;
            }
            let gain = parent_cost - l.cost(params.criterion) - r.cost(params.criterion);
            if gain > best.as_ref().map_or(1e-12, |b| b.0) {
                best = Some((gain, mid, default_left));
            }
        }
        best.map(|(gain, mid, default_left)| BestSplit {
            gain,
            feature,
            test: SplitTest::Threshold(mid),
            default_left,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn best_categorical_split(
        &self,
        data: &Matrix<S>,
        labels: &[f64],
        indices: &[u32],
        feature: u32,
        n_categories: u32,
        parent_cost: f64,
        params: &TreeParams,
    ) -> Option<BestSplit<S>> {
        if n_categories as usize > 64 {
            return None;
        }
        let mut per_cat = vec![Stats::default(); n_categories as usize];
        let mut missing = Stats::default();
        let mut present = Stats::default();
        for &i in indices {
            let v = data.get(i as usize, feature as usize);
            if v.is_nan() {
                missing.add(labels[i as usize]);
                continue;
            }
            let cat = v.into_f64() as usize;
            if cat < per_cat.len() {
                per_cat[cat].add(labels[i as usize]);
                present.add(labels[i as usize]);
            } else {
                missing.add(labels[i as usize]);
            }
        }
        // order categories by target mean and scan prefix subsets, the CART
        // reduction that is optimal for both criteria on binary partitions
        let mut occupied: Vec<usize> =
            (0..per_cat.len()).filter(|&c| per_cat[c].n > 0.0).collect();
        if occupied.len() < 2 {
            return None;
        }
        occupied.sort_by(|&a, &b| {
            per_cat[a]
                .mean()
                .partial_cmp(&per_cat[b].mean())
                .expect("finite means")
                .then(a.cmp(&b))
        });

        let mut left = Stats::default();
        let mut mask = 0u64;
        let mut best: Option<(f64, u64, bool)> = None;
        let mut left_count = 0.0;
        for w in 0..occupied.len() - 1 {
            left.merge(&per_cat[occupied[w]]);
            left_count += per_cat[occupied[w]].n;
            mask |= 1u64 << occupied[w];
            let default_left = left_count >= present.n - left_count;
            let mut l = left;
            let mut r = Stats {
                n: present.n - left.n,
                sum: present.sum - left.sum,
                sumsq: present.sumsq - left.sumsq,
            };
            if default_left {
                l.merge(&missing);
            } else {
                r.merge(&missing);
            }
            if (l.n as usize) < params.min_samples_leaf || (r.n as usize) < params.min_samples_leaf
            {
                continue;
            }
            let gain = parent_cost - l.cost(params.criterion) - r.cost(params.criterion);
            if gain > best.as_ref().map_or(1e-12, |b| b.0) {
                best = Some((gain, mask, default_left));
            }
        }
        best.map(|(gain, mask, default_left)| BestSplit {
            gain,
            feature,
            test: SplitTest::Categories(mask),
            default_left,
        })
    }

    /// Routes a feature row to a leaf value. Total: every input, including
    /// all-missing, reaches a leaf via default directions.
    pub fn predict(&self, row: &[S]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, test, default_left, left, right } => {
                    let v = row[*feature as usize];
                    node = if route_left(v, test, *default_left) {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk<S>(nodes: &[Node<S>], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[inline]
fn route_left<S: Scalar>(v: S, test: &SplitTest<S>, default_left: bool) -> bool {
    if v.is_nan() {
        return default_left;
    }
    match test {
        SplitTest::Threshold(t) => v < *t,
        SplitTest::Categories(mask) => {
            let cat = v.into_f64() as i64;
            if (0..64).contains(&cat) {
                mask & (1u64 << cat) != 0
            } else {
                default_left
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn meta(n: usize) -> Vec<ColumnMeta> {
        (0..n)
            .map(|i| ColumnMeta { name: format!("f{i}"), kind: ColumnKind::Numeric })
            .collect()
    }

    fn params(criterion: SplitCriterion) -> TreeParams {
        TreeParams { max_depth: 6, min_samples_leaf: 1, mtry: 8, criterion }
    }

    #[test]
    fn constant_labels_become_a_single_leaf() {
        let data = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let labels = [0.7; 4];
        let idx: Vec<u32> = (0..4).collect();
        let mut imp = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = DecisionTree::fit(
            &data,
            &meta(1),
            &labels,
            &idx,
            &params(SplitCriterion::Variance),
            &mut rng,
            &mut imp,
        );
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.predict(&[9.0]), 0.7);
    }

    #[test]
    fn separable_data_splits_perfectly() {
        let n = 40;
        let values: Vec<f64> = (0..n).map(|i| i as f64 - 20.0).collect();
        let labels: Vec<f64> = values.iter().map(|&v| if v < 0.0 { 1.0 } else { 0.0 }).collect();
        let data = Matrix::from_vec(n, 1, values);
        let idx: Vec<u32> = (0..n as u32).collect();
        let mut imp = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = DecisionTree::fit(
            &data,
            &meta(1),
            &labels,
            &idx,
            &params(SplitCriterion::Gini),
            &mut rng,
            &mut imp,
        );
        assert_eq!(tree.predict(&[-3.0]), 1.0);
        assert_eq!(tree.predict(&[3.0]), 0.0);
        assert!(imp[0] > 0.0);
    }

    #[test]
    fn prediction_is_piecewise_constant_between_thresholds() {
        let data = Matrix::from_vec(6, 1, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let labels = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let idx: Vec<u32> = (0..6).collect();
        let mut imp = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tree = DecisionTree::fit(
            &data,
            &meta(1),
            &labels,
            &idx,
            &params(SplitCriterion::Variance),
            &mut rng,
            &mut imp,
        );
        // threshold is the midpoint 6.0; nudges that stay on one side keep
        // the prediction constant
        assert_eq!(tree.predict(&[2.0]), tree.predict(&[5.9]));
        assert_eq!(tree.predict(&[6.1]), tree.predict(&[12.0]));
        assert_ne!(tree.predict(&[5.9]), tree.predict(&[6.1]));
    }

    #[test]
    fn missing_values_follow_the_majority_side() {
        // 3 present rows go left of the split, 2 right; NaN routes with the
        // left majority
        let data = Matrix::from_vec(
            8,
            1,
            vec![1.0, 2.0, 3.0, 10.0, 11.0, f64::NAN, f64::NAN, f64::NAN],
        );
        let labels = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let idx: Vec<u32> = (0..8).collect();
        let mut imp = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = DecisionTree::fit(
            &data,
            &meta(1),
            &labels,
            &idx,
            &params(SplitCriterion::Gini),
            &mut rng,
            &mut imp,
        );
        assert_eq!(tree.predict(&[f64::NAN]), tree.predict(&[1.0]));
        // all-missing input still yields a prediction
        assert!(tree.predict(&[f64::NAN]).is_finite());
    }

    #[test]
    fn categorical_subset_split_separates_categories() {
        // categories {0, 2} -> 1.0, {1, 3} -> 0.0
        let vals = vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0];
        let labels = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let data = Matrix::from_vec(8, 1, vals);
        let columns = vec![ColumnMeta {
            name: "country".into(),
            kind: ColumnKind::Categorical { n_categories: 5 },
        }];
        let idx: Vec<u32> = (0..8).collect();
        let mut imp = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tree = DecisionTree::fit(
            &data,
            &columns,
            &labels,
            &idx,
            &params(SplitCriterion::Gini),
            &mut rng,
            &mut imp,
        );
        assert_eq!(tree.predict(&[0.0]), 1.0);
        assert_eq!(tree.predict(&[2.0]), 1.0);
        assert_eq!(tree.predict(&[1.0]), 0.0);
        assert_eq!(tree.predict(&[3.0]), 0.0);
        // unseen category id (4) routes deterministically
        assert!(tree.predict(&[4.0]).is_finite());
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let n = 30usize;
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let labels: Vec<f64> = (0..n).map(|i| if i < 15 { 0.0 } else { 1.0 }).collect();
        let data = Matrix::from_vec(n, 1, values);
        let idx: Vec<u32> = (0..n as u32).collect();
        let mut imp = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = TreeParams {
            max_depth: 10,
            min_samples_leaf: 10,
            mtry: 1,
            criterion: SplitCriterion::Gini,
        };
        let tree = DecisionTree::fit(&data, &meta(1), &labels, &idx, &p, &mut rng, &mut imp);
        fn check<S>(nodes: &[Node<S>], at: usize, min: u32) {
            match &nodes[at] {
                Node::Leaf { n, .. } => assert!(*n >= min),
                Node::Split { left, right, .. } => {
                    check(nodes, *left as usize, min);
                    check(nodes, *right as usize, min);
                }
            }
        }
        check(&tree.nodes, 0, 10);
    }
}
