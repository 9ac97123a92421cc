//! Tree learners trained on encoded rows: gradient-boosted stumps, boosted
//! depth-k trees, and a random forest.
//!
//! Trees only see the encoded vector. With embeddings, a row becomes the
//! feature-major concatenation of its value embeddings, so two values that
//! share an embedding column reach the same leaf in every tree.

mod boost;
mod forest;
mod tree;

pub use boost::{fit_boosted_trees, fit_boosted_trees_traced, fit_gbs, BoostedEnsemble, NEWTON_LAMBDA};
pub use forest::{fit_forest, fit_forest_with, Forest, ForestParams, MaxFeatures};
pub use tree::{Node, Stump, Tree};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost_model::{one_hot, Dataset, FeatureSpec};
use crate::error::{invalid, Result};
use crate::net::{read_json, write_json, EmbeddingSet};

/// How a categorical row becomes a tree input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum RowEncoder {
    /// Concatenated one-hot blocks.
    OneHot { cardinalities: Vec<usize> },
    /// Feature-major concatenation of embedding columns.
    Embedded { embeddings: EmbeddingSet },
}

impl RowEncoder {
    pub fn one_hot(specs: &[FeatureSpec]) -> Self {
        Self::OneHot {
            cardinalities: specs.iter().map(FeatureSpec::cardinality).collect(),
        }
    }

    pub fn embedded(embeddings: EmbeddingSet) -> Self {
        Self::Embedded { embeddings }
    }

    pub fn encode(&self, row: &[usize]) -> Result<Vec<f64>> {
        match self {
            Self::OneHot { cardinalities } => {
                if row.len() != cardinalities.len() {
                    return Err(invalid("row length does not match encoder"));
                }
                let mut out = vec![0.0; cardinalities.iter().sum()];
                let mut off = 0;
                for (&v, &c) in row.iter().zip(cardinalities) {
                    if v >= c {
                        return Err(invalid(format!("value index {v} out of range")));
                    }
                    out[off + v] = 1.0;
                    off += c;
                }
                Ok(out)
            }
            Self::Embedded { embeddings } => embeddings.embed_row(row),
        }
    }

    pub fn encode_dataset(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        dataset.rows().iter().map(|r| self.encode(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TreeModel {
    Boosted(BoostedEnsemble),
    Forest(Forest),
}

impl TreeModel {
    /// Positive means class 1.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Self::Boosted(b) => b.margin(x),
            Self::Forest(f) => f.margin(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.margin(x) > 0.0)
    }
}

/// Encoder plus tree model: a complete classifier over categorical rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeClassifier {
    pub encoder: RowEncoder,
    pub model: TreeModel,
}

impl TreeClassifier {
    pub fn margin_row(&self, row: &[usize]) -> Result<f64> {
        Ok(self.model.margin(&self.encoder.encode(row)?))
    }

    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (r, &y) in dataset.rows().iter().zip(dataset.labels()) {
            if u8::from(self.margin_row(r)? > 0.0) == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Which tree learner to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeLearner {
    Gbs { n_estimators: usize, lr: f64 },
    Gbt { depth: usize, n_estimators: usize, lr: f64 },
    Rf(ForestParams),
}

impl TreeLearner {
    pub fn default_gbs() -> Self {
        Self::Gbs { n_estimators: 100, lr: 0.1 }
    }

    pub fn default_gbt() -> Self {
        Self::Gbt { depth: 6, n_estimators: 100, lr: 0.1 }
    }

    pub fn default_rf(seed: u64) -> Self {
        Self::Rf(ForestParams { seed, ..ForestParams::default() })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gbs { .. } => "gbs",
            Self::Gbt { .. } => "gbt",
            Self::Rf(_) => "rf",
        }
    }

    pub fn fit(&self, x: &[Vec<f64>], y: &[u8]) -> Result<TreeModel> {
        Ok(match self {
            Self::Gbs { n_estimators, lr } => TreeModel::Boosted(fit_gbs(x, y, *n_estimators, *lr)?),
            Self::Gbt { depth, n_estimators, lr } => {
                TreeModel::Boosted(fit_boosted_trees(x, y, *depth, *n_estimators, *lr)?)
            }
            Self::Rf(p) => TreeModel::Forest(fit_forest_with(x, y, p)?),
        })
    }
}

/// Encodes the dataset and fits the learner on it.
pub fn train_tree_classifier(dataset: &Dataset, encoder: RowEncoder, learner: &TreeLearner) -> Result<TreeClassifier> {
    let x = encoder.encode_dataset(dataset)?;
    let model = learner.fit(&x, dataset.labels())?;
    Ok(TreeClassifier { encoder, model })
}

/// One-hot encoding helper mirroring [`RowEncoder::OneHot`].
pub fn one_hot_rows(dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    dataset.rows().iter().map(|r| one_hot(r, dataset.features())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_stump_separates_1d_data() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let e = fit_gbs(&x, &y, 1, 0.1).unwrap();
        let s = e.trees[0].as_stump().unwrap();
        assert!(s.threshold > 0.45 && s.threshold < 0.5);
        assert!(x.iter().zip(&y).all(|(xi, &yi)| e.predict(xi) == yi));
    }

    #[test]
    fn boosting_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] + r[1] > 1.0)).collect();
        assert_eq!(fit_gbs(&x, &y, 10, 0.1).unwrap(), fit_gbs(&x, &y, 10, 0.1).unwrap());
    }

    #[test]
    fn xor_needs_depth_two() {
        // Unequal cell counts: a perfectly balanced XOR gives every root split zero gain.
        let cells = [([0.0, 0.0], 10), ([0.0, 1.0], 12), ([1.0, 0.0], 9), ([1.0, 1.0], 11)];
        let x: Vec<Vec<f64>> = cells.iter().flat_map(|(c, n)| std::iter::repeat(c.to_vec()).take(*n)).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from((r[0] > 0.5) != (r[1] > 0.5))).collect();
        let e = fit_boosted_trees(&x, &y, 2, 20, 0.5).unwrap();
        assert!(x.iter().zip(&y).all(|(xi, &yi)| e.predict(xi) == yi));
    }

    #[test]
    fn depth_one_boosting_is_gbs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[1] > 0.3)).collect();
        assert_eq!(fit_gbs(&x, &y, 15, 0.1).unwrap(), fit_boosted_trees(&x, &y, 1, 15, 0.1).unwrap());
    }

    #[test]
    fn empty_ensemble_predicts_base_score() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let e = fit_gbs(&x, &[1, 1, 1, 0], 0, 0.1).unwrap();
        assert!((e.margin(&[7.0]) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_stump_model_by_hand() {
        let e = BoostedEnsemble {
            base_score: 0.5,
            learning_rate: 0.1,
            max_depth: 1,
            trees: vec![
                Stump { feature: 0, threshold: 1.0, left: -2.0, right: 3.0 }.into(),
                Stump { feature: 1, threshold: 0.0, left: 4.0, right: -1.0 }.into(),
            ],
        };
        // x = (2, -1): right of stump 1 (+3), left of stump 2 (+4)
        assert!((e.margin(&[2.0, -1.0]) - (0.5 + 0.1 * 7.0)).abs() < 1e-12);
        // x = (0, 5): -2 and -1
        assert!((e.margin(&[0.0, 5.0]) - (0.5 - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn adding_positive_stump_raises_margin() {
        let mut e = BoostedEnsemble { base_score: 0.0, learning_rate: 0.1, max_depth: 1, trees: vec![] };
        let x = [0.3];
        let before = e.margin(&x);
        e.trees.push(Stump { feature: 0, threshold: 1.0, left: 2.0, right: 2.0 }.into());
        assert!(e.margin(&x) > before);
    }

    #[test]
    fn constant_features_are_skipped() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let e = fit_gbs(&x, &[0, 1, 0, 1], 1, 0.1).unwrap();
        assert_eq!(e.trees[0].as_stump().unwrap().feature, 1);
    }

    #[test]
    fn forest_single_tree_without_bootstrap_fits_training_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] > r[1])).collect();
        let p = ForestParams {
            n_trees: 1,
            max_depth: None,
            max_features: MaxFeatures::All,
            bootstrap: false,
            seed: 1,
        };
        let f = fit_forest_with(&x, &y, &p).unwrap();
        assert!(x.iter().zip(&y).all(|(xi, &yi)| f.predict(xi) == yi));
    }

    #[test]
    fn forest_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[2] > 0.5)).collect();
        assert_eq!(fit_forest(&x, &y, 5, Some(4), 3).unwrap(), fit_forest(&x, &y, 5, Some(4), 3).unwrap());
    }

    #[test]
    fn one_hot_encoder_matches_cost_model_encoding() {
        let specs: Vec<FeatureSpec> = [2, 3].iter().enumerate().map(|(i, &c)| FeatureSpec::indexed(format!("f{i}"), c, "v").unwrap()).collect();
        let enc = RowEncoder::one_hot(&specs);
        assert_eq!(enc.encode(&[1, 2]).unwrap(), one_hot(&[1, 2], &specs).unwrap());
    }

    #[test]
    fn rejects_empty_training_set() {
        assert!(fit_gbs(&[], &[], 3, 0.1).is_err());
        assert!(fit_forest(&[], &[], 3, None, 0).is_err());
    }
}
