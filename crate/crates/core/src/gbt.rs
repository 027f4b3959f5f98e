//! Least-squares gradient boosting with exact greedy split search.
//!
//! Each round fits an axis-aligned regression tree to the current residuals.
//! Split search is exhaustive over every (feature, threshold) candidate, with
//! thresholds at midpoints between consecutive distinct sorted values; ties
//! break to the lowest feature index, then the lowest threshold, so fitting is
//! deterministic regardless of scheduling. Leaf values are plain residual
//! means. No second-order weighting, column subsampling, or leaf
//! regularization.

use serde::{Deserialize, Serialize};

use crate::ensemble::FeatureMatrix;
use crate::error::{Error, Result};

/// Booster hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_rounds: 200,
            max_depth: 4,
            shrinkage: 0.1,
            min_samples_leaf: 5,
            seed: 1234,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::input("n_rounds must be positive"));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::input(format!(
                "shrinkage must lie in (0, 1], got {}",
                self.shrinkage
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::input("min_samples_leaf must be positive"));
        }
        Ok(())
    }
}

/// One tree node. `feature == -1` marks a leaf; internal nodes route rows with
/// `row[feature] <= threshold` to `left`, the rest to `right`. `value` is the
/// mean residual of the node's training rows (the prediction at leaves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: i32,
    pub threshold: f64,
    pub left: i32,
    pub right: i32,
    pub value: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature < 0
    }
}

/// A regression tree as a flat node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.is_leaf() {
                return node.value;
            }
            idx = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize) -> usize {
            let node = &nodes[idx];
            if node.is_leaf() {
                0
            } else {
                1 + walk(nodes, node.left as usize).max(walk(nodes, node.right as usize))
            }
        }
        walk(&self.nodes, 0)
    }
}

/// A fitted boosting ensemble plus the training schema it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_prediction: f64,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub columns: Vec<String>,
    pub trees: Vec<RegressionTree>,
}

/// The best split found for a set of rows, if any candidate is valid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exact greedy search over all (feature, threshold) candidates.
///
/// Gain is the reduction in sum of squared errors versus keeping the node
/// whole. Candidates leaving either side below `min_samples_leaf` are
/// skipped. On equal gain the lowest feature index wins, then the lowest
/// threshold; only strictly positive gains qualify.
pub fn best_split(
    x: &FeatureMatrix,
    rows: &[usize],
    residuals: &[f64],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 * min_samples_leaf {
        return None;
    }
    let total_sum: f64 = rows.iter().map(|&r| residuals[r]).sum();
    let parent_score = total_sum * total_sum / n as f64;

    let mut best: Option<SplitChoice> = None;
    for feature in 0..x.n_cols() {
        let mut ordered: Vec<(f64, f64)> = rows
            .iter()
            .map(|&r| (x.value(r, feature), residuals[r]))
            .collect();
        ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += ordered[i].1;
            if ordered[i].0 == ordered[i + 1].0 {
                continue;
            }
            let left_n = i + 1;
            let right_n = n - left_n;
            if left_n < min_samples_leaf || right_n < min_samples_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let score =
                left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64;
            let gain = score - parent_score;
            if gain <= 0.0 {
                continue;
            }
            // The midpoint of two adjacent floats can round up onto the
            // right value, which would leave its child empty under `<=`
            // routing; the left value itself realizes the same partition.
            let midpoint = 0.5 * (ordered[i].0 + ordered[i + 1].0);
            let threshold = if midpoint < ordered[i + 1].0 {
                midpoint
            } else {
                ordered[i].0
            };
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn build_tree(
    x: &FeatureMatrix,
    residuals: &[f64],
    rows: Vec<usize>,
    max_depth: usize,
    min_samples_leaf: usize,
) -> RegressionTree {
    let mut nodes = Vec::new();
    build_node(
        x,
        residuals,
        rows,
        0,
        max_depth,
        min_samples_leaf,
        &mut nodes,
    );
    RegressionTree { nodes }
}

fn build_node(
    x: &FeatureMatrix,
    residuals: &[f64],
    rows: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_samples_leaf: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let mean = rows.iter().map(|&r| residuals[r]).sum::<f64>() / rows.len() as f64;
    let idx = nodes.len();
    nodes.push(TreeNode {
        feature: -1,
        threshold: 0.0,
        left: -1,
        right: -1,
        value: mean,
    });
    if depth >= max_depth {
        return idx;
    }
    let Some(split) = best_split(x, &rows, residuals, min_samples_leaf) else {
        return idx;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| x.value(r, split.feature) <= split.threshold);
    let left = build_node(
        x,
        residuals,
        left_rows,
        depth + 1,
        max_depth,
        min_samples_leaf,
        nodes,
    );
    let right = build_node(
        x,
        residuals,
        right_rows,
        depth + 1,
        max_depth,
        min_samples_leaf,
        nodes,
    );
    nodes[idx].feature = split.feature as i32;
    nodes[idx].threshold = split.threshold;
    nodes[idx].left = left as i32;
    nodes[idx].right = right as i32;
    idx
}

/// Fits the booster: `F_0 = mean(y)`, then each round adds
/// `shrinkage * tree_t` where `tree_t` fits the residuals `y - F_{t-1}(X)`.
pub fn fit_gbt(x: &FeatureMatrix, y: &[f64], cfg: &GbtConfig) -> Result<GbtModel> {
    cfg.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::input(format!(
            "feature matrix has {} rows but targets have {}",
            x.n_rows(),
            y.len()
        )));
    }
    if y.len() < 2 * cfg.min_samples_leaf {
        return Err(Error::input(format!(
            "need at least {} rows (2 * min_samples_leaf), got {}",
            2 * cfg.min_samples_leaf,
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("target {i} is not finite")));
    }

    let base_prediction = y.iter().sum::<f64>() / y.len() as f64;
    let mut current: Vec<f64> = vec![base_prediction; y.len()];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    let all_rows: Vec<usize> = (0..y.len()).collect();

    for _ in 0..cfg.n_rounds {
        let residuals: Vec<f64> = y.iter().zip(&current).map(|(t, f)| t - f).collect();
        let tree = build_tree(
            x,
            &residuals,
            all_rows.clone(),
            cfg.max_depth,
            cfg.min_samples_leaf,
        );
        for (i, f) in current.iter_mut().enumerate() {
            *f += cfg.shrinkage * tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }

    Ok(GbtModel {
        base_prediction,
        shrinkage: cfg.shrinkage,
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
        columns: x.columns().to_vec(),
        trees,
    })
}

/// `base + sum_t shrinkage * tree_t(row)` per row; the column schema must
/// match training exactly.
pub fn predict_gbt(model: &GbtModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    if x.columns() != model.columns.as_slice() {
        return Err(Error::input(
            "feature matrix columns do not match the model's training schema",
        ));
    }
    Ok((0..x.n_rows())
        .map(|i| {
            let row = x.row(i);
            model.base_prediction
                + model
                    .trees
                    .iter()
                    .map(|t| model.shrinkage * t.predict_row(row))
                    .sum::<f64>()
        })
        .collect())
}

/// Mean squared training error after each round; used by the monotonicity
/// checks.
pub fn training_error_curve(x: &FeatureMatrix, y: &[f64], model: &GbtModel) -> Vec<f64> {
    let mut current = vec![model.base_prediction; y.len()];
    let mut curve = Vec::with_capacity(model.trees.len() + 1);
    let mse = |preds: &[f64]| -> f64 {
        preds
            .iter()
            .zip(y)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / y.len() as f64
    };
    curve.push(mse(&current));
    for tree in &model.trees {
        for (i, f) in current.iter_mut().enumerate() {
            *f += model.shrinkage * tree.predict_row(x.row(i));
        }
        curve.push(mse(&current));
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let cols: Vec<String> = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        FeatureMatrix::new(cols, rows).unwrap()
    }

    #[test]
    fn split_ties_break_to_lowest_feature_then_threshold() {
        // Two identical feature columns: every candidate gain ties, so the
        // chosen split must name feature 0.
        let x = matrix(vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
        ]);
        let residuals = vec![0.0, 0.0, 2.0, 2.0];
        let rows: Vec<usize> = (0..4).collect();
        let split = best_split(&x, &rows, &residuals, 1).unwrap();
        assert_eq!(split.feature, 0);

        // Symmetric residuals: thresholds 0.5 and 2.5 give equal gain; the
        // lower one must win.
        let x = matrix(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let residuals = vec![1.0, 0.0, 0.0, 1.0];
        let split = best_split(&x, &rows, &residuals, 1).unwrap();
        assert_eq!(split.threshold, 0.5);
    }

    #[test]
    fn adjacent_float_values_still_split_cleanly() {
        // Midpoint of two consecutive floats rounds onto one of them; the
        // fitted tree must still separate the rows instead of producing an
        // empty child.
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let x = matrix(vec![vec![lo], vec![lo], vec![hi], vec![hi]]);
        let y = vec![0.0, 0.0, 4.0, 4.0];
        let cfg = GbtConfig {
            n_rounds: 1,
            max_depth: 1,
            shrinkage: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        };
        let model = fit_gbt(&x, &y, &cfg).unwrap();
        let preds = predict_gbt(&model, &x).unwrap();
        assert!(preds.iter().all(|p| p.is_finite()));
        assert!((preds[0] - 0.0).abs() < 1e-12);
        assert!((preds[2] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn depth_zero_predicts_mean() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let y = vec![1.0, 2.0, 3.0, 6.0];
        let cfg = GbtConfig {
            n_rounds: 1,
            max_depth: 0,
            shrinkage: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        };
        let model = fit_gbt(&x, &y, &cfg).unwrap();
        let preds = predict_gbt(&model, &x).unwrap();
        for p in preds {
            assert!((p - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_targets_give_zero_trees() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]]);
        let y = vec![2.5; 4];
        let cfg = GbtConfig {
            n_rounds: 5,
            max_depth: 3,
            shrinkage: 0.5,
            min_samples_leaf: 1,
            seed: 0,
        };
        let model = fit_gbt(&x, &y, &cfg).unwrap();
        assert!((model.base_prediction - 2.5).abs() < 1e-15);
        for tree in &model.trees {
            assert_eq!(tree.nodes.len(), 1);
            assert!(tree.nodes[0].value.abs() < 1e-12);
        }
    }

    #[test]
    fn two_rows_decay_geometrically() {
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        let y = vec![0.0, 1.0];
        for eta in [0.1, 0.3, 1.0] {
            let n_rounds = 6;
            let cfg = GbtConfig {
                n_rounds,
                max_depth: 1,
                shrinkage: eta,
                min_samples_leaf: 1,
                seed: 0,
            };
            let model = fit_gbt(&x, &y, &cfg).unwrap();
            let preds = predict_gbt(&model, &x).unwrap();
            // residual r_n = r_0 * (1 - eta)^n with r_0 = +-0.5.
            let expected = 0.5 * (1.0 - eta).powi(n_rounds as i32);
            assert!(
                ((preds[0] - 0.0).abs() - expected).abs() < 1e-12,
                "eta={eta}: residual {} vs {expected}",
                (preds[0] - 0.0).abs()
            );
            assert!(((preds[1] - 1.0).abs() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_tree_list_is_constant() {
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        let model = GbtModel {
            base_prediction: 4.2,
            shrinkage: 0.1,
            max_depth: 2,
            min_samples_leaf: 1,
            columns: x.columns().to_vec(),
            trees: vec![],
        };
        assert_eq!(predict_gbt(&model, &x).unwrap(), vec![4.2, 4.2]);
    }

    #[test]
    fn unbounded_depth_interpolates_training_targets() {
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|i| vec![i as f64, (i * 7 % 5) as f64])
            .collect();
        let x = matrix(rows);
        let y: Vec<f64> = (0..16).map(|i| ((i * 13) % 11) as f64 / 3.0).collect();
        let cfg = GbtConfig {
            n_rounds: 1,
            max_depth: 16,
            shrinkage: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        };
        let model = fit_gbt(&x, &y, &cfg).unwrap();
        let preds = predict_gbt(&model, &x).unwrap();
        for (p, t) in preds.iter().zip(&y) {
            assert!((p - t).abs() < 1e-12);
        }
    }

    #[test]
    fn schema_mismatch_is_error() {
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        let model = fit_gbt(
            &x,
            &[0.0, 1.0],
            &GbtConfig {
                n_rounds: 1,
                max_depth: 1,
                shrinkage: 1.0,
                min_samples_leaf: 1,
                seed: 0,
            },
        )
        .unwrap();
        let other = FeatureMatrix::new(vec!["g0".into()], vec![vec![0.0]]).unwrap();
        assert!(predict_gbt(&model, &other).is_err());
    }

    #[test]
    fn leaf_values_are_residual_means_within_range() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 7) as f64, (i % 3) as f64])
            .collect();
        let x = matrix(rows);
        let y: Vec<f64> = (0..30).map(|i| ((i * 5) % 13) as f64).collect();
        let cfg = GbtConfig {
            n_rounds: 3,
            max_depth: 2,
            shrinkage: 0.7,
            min_samples_leaf: 2,
            seed: 0,
        };
        let model = fit_gbt(&x, &y, &cfg).unwrap();
        // Re-derive residuals round by round and check each tree's leaves
        // stay inside that round's residual range.
        let mut current = vec![model.base_prediction; y.len()];
        for tree in &model.trees {
            let residuals: Vec<f64> = y.iter().zip(&current).map(|(t, f)| t - f).collect();
            let lo = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for node in &tree.nodes {
                if node.is_leaf() {
                    assert!(node.value >= lo - 1e-12 && node.value <= hi + 1e-12);
                }
            }
            for (i, f) in current.iter_mut().enumerate() {
                *f += model.shrinkage * tree.predict_row(x.row(i));
            }
        }
    }

    #[test]
    fn insufficient_rows_is_error() {
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        let cfg = GbtConfig {
            min_samples_leaf: 3,
            ..GbtConfig::default()
        };
        assert!(fit_gbt(&x, &[0.0, 1.0], &cfg).is_err());
    }
}
