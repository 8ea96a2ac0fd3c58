//! Random forest of gain-ratio trees with bootstrap sampling and per-split
//! feature subsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::features::FEATURE_COUNT;

use super::tree::{DecisionTree, FeatureSampling, TreeParams};
use super::TrainingData;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub bootstrap: bool,
    /// Features considered per split; `None` means ⌈√13⌉ = 4.
    pub features_per_split: Option<usize>,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { trees: 100, bootstrap: true, features_per_split: None, tree: TreeParams::default() }
    }
}

impl ForestParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.trees == 0 {
            return Err("forest: trees must be at least 1".into());
        }
        if let Some(m) = self.features_per_split {
            if m == 0 || m > FEATURE_COUNT {
                return Err(format!("forest: features_per_split must be in 1..={FEATURE_COUNT}"));
            }
        }
        self.tree.validate()
    }

    pub fn effective_features_per_split(&self) -> usize {
        self.features_per_split.unwrap_or_else(|| (FEATURE_COUNT as f64).sqrt().ceil() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Each tree draws from its own ChaCha stream (stream id = tree index),
    /// so parallel fitting is bit-identical to sequential fitting.
    pub(crate) fn fit(params: &ForestParams, data: &TrainingData, seed: u64) -> Self {
        let n = data.x.len();
        let size = params.effective_features_per_split();
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let mut indices: Vec<usize> = if params.bootstrap {
                    let mut v: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                    v.sort_unstable();
                    v
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_on(&params.tree, data, &mut indices, FeatureSampling::Subset { size, rng: &mut rng })
            })
            .collect();
        Self { trees }
    }

    /// Mean of the per-tree leaf scores.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.score(x)).sum::<f64>() / self.trees.len() as f64
    }
}
