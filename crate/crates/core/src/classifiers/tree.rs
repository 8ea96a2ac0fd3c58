//! C4.5-style decision tree over numeric features.
//!
//! Candidate splits are binary thresholds at midpoints between consecutive
//! distinct values of a feature; the split with the highest information gain
//! ratio wins. A node becomes a leaf when it is pure, holds fewer than
//! `min_leaf` samples, reaches `max_depth`, or no split has positive gain.
//! There is no pruning.

use rand::seq::index::sample as sample_indices;
use rand_chacha::ChaCha8Rng;

use crate::features::FEATURE_COUNT;

use super::TrainingData;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// Nodes with fewer samples than this are not split.
    pub min_leaf: usize,
    /// `None` for unlimited depth.
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { min_leaf: 2, max_depth: None }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.min_leaf == 0 {
            return Err("tree: min_leaf must be at least 1".into());
        }
        if self.max_depth == Some(0) {
            return Err("tree: max_depth must be at least 1 when set".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        positives: u32,
        negatives: u32,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: u16,
        threshold: f64,
        left: u32,
        right: u32,
        positives: u32,
        negatives: u32,
    },
}

/// Flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

/// How many features each split may consider.
pub(crate) enum FeatureSampling<'a> {
    All,
    Subset { size: usize, rng: &'a mut ChaCha8Rng },
}

struct Builder<'a, 'r> {
    data: &'a TrainingData,
    params: &'a TreeParams,
    sampling: FeatureSampling<'r>,
    nodes: Vec<Node>,
    // Scratch buffer for per-feature sorting.
    order: Vec<usize>,
}

fn entropy(pos: usize, neg: usize) -> f64 {
    let n = (pos + neg) as f64;
    let term = |c: usize| {
        if c == 0 {
            0.0
        } else {
            let p = c as f64 / n;
            -p * p.log2()
        }
    };
    term(pos) + term(neg)
}

struct Candidate {
    feature: usize,
    threshold: f64,
    ratio: f64,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

impl Builder<'_, '_> {
    fn features_for_split(&mut self) -> Vec<usize> {
        match &mut self.sampling {
            FeatureSampling::All => (0..FEATURE_COUNT).collect(),
            FeatureSampling::Subset { size, rng } => {
                if *size >= FEATURE_COUNT {
                    return (0..FEATURE_COUNT).collect();
                }
                let mut picked = sample_indices(*rng, FEATURE_COUNT, *size).into_vec();
                // Natural order keeps tie-breaking identical to the unsampled tree.
                picked.sort_unstable();
                picked
            }
        }
    }

    fn best_split(&mut self, indices: &[usize], pos: usize, neg: usize) -> Option<Candidate> {
        let n = indices.len();
        let parent = entropy(pos, neg);
        let mut best: Option<Candidate> = None;
        for feature in self.features_for_split() {
            self.order.clear();
            self.order.extend_from_slice(indices);
            let x = &self.data.x;
            self.order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
            let (mut left_pos, mut left_neg) = (0usize, 0usize);
            for i in 0..n - 1 {
                let idx = self.order[i];
                if self.data.y[idx] {
                    left_pos += 1;
                } else {
                    left_neg += 1;
                }
                let here = x[idx][feature];
                let next = x[self.order[i + 1]][feature];
                if here == next {
                    continue;
                }
                let n_left = i + 1;
                let n_right = n - n_left;
                let (right_pos, right_neg) = (pos - left_pos, neg - left_neg);
                let w_left = n_left as f64 / n as f64;
                let w_right = n_right as f64 / n as f64;
                let gain = parent - w_left * entropy(left_pos, left_neg) - w_right * entropy(right_pos, right_neg);
                if gain <= MIN_GAIN {
                    continue;
                }
                let split_info = entropy(n_left, n_right);
                let ratio = gain / split_info;
                if best.as_ref().map_or(true, |b| ratio > b.ratio) {
                    best = Some(Candidate { feature, threshold: midpoint(here, next), ratio });
                }
            }
        }
        best
    }

    fn build(&mut self, indices: &mut [usize], depth: usize) -> u32 {
        let pos = indices.iter().filter(|&&i| self.data.y[i]).count();
        let neg = indices.len() - pos;
        let id = self.nodes.len() as u32;
        let leaf = Node::Leaf { positives: pos as u32, negatives: neg as u32 };
        self.nodes.push(leaf);

        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pos == 0 || neg == 0 || indices.len() < self.params.min_leaf.max(2) || depth_reached {
            return id;
        }
        let Some(split) = self.best_split(indices, pos, neg) else {
            return id;
        };
        let x = &self.data.x;
        let mut boundary = 0;
        for i in 0..indices.len() {
            if x[indices[i]][split.feature] <= split.threshold {
                indices.swap(i, boundary);
                boundary += 1;
            }
        }
        let (left_idx, right_idx) = indices.split_at_mut(boundary);
        left_idx.sort_unstable();
        right_idx.sort_unstable();
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: split.feature as u16,
            threshold: split.threshold,
            left,
            right,
            positives: pos as u32,
            negatives: neg as u32,
        };
        id
    }
}

impl DecisionTree {
    pub(crate) fn fit(params: &TreeParams, data: &TrainingData) -> Self {
        let mut indices: Vec<usize> = (0..data.x.len()).collect();
        Self::fit_on(params, data, &mut indices, FeatureSampling::All)
    }

    /// Builds a tree on `indices` (which may repeat, e.g. a bootstrap sample).
    pub(crate) fn fit_on(
        params: &TreeParams,
        data: &TrainingData,
        indices: &mut [usize],
        sampling: FeatureSampling<'_>,
    ) -> Self {
        let mut builder = Builder { data, params, sampling, nodes: Vec::new(), order: Vec::new() };
        builder.build(indices, 0);
        DecisionTree { nodes: builder.nodes }
    }

    /// A single-leaf tree with the given class counts.
    pub fn leaf(positives: u32, negatives: u32) -> Self {
        Self { nodes: vec![Node::Leaf { positives, negatives }] }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Positive-class fraction of the leaf the query lands in.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { positives, negatives } => {
                    let total = positives + negatives;
                    return if total == 0 { 0.5 } else { f64::from(positives) / f64::from(total) };
                }
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature as usize] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    /// Checks that child links point forward inside the arena.
    pub(crate) fn is_well_formed(&self) -> bool {
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, n)| match *n {
                Node::Leaf { .. } => true,
                Node::Split { feature, left, right, .. } => {
                    (feature as usize) < FEATURE_COUNT
                        && (left as usize) > i
                        && (right as usize) > i
                        && (left as usize) < self.nodes.len()
                        && (right as usize) < self.nodes.len()
                }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(points: &[(f64, f64, bool)]) -> TrainingData {
        TrainingData {
            x: points
                .iter()
                .map(|&(a, b, _)| {
                    let mut v = [0.0; FEATURE_COUNT];
                    v[0] = a;
                    v[1] = b;
                    v
                })
                .collect(),
            y: points.iter().map(|p| p.2).collect(),
        }
    }

    #[test]
    fn pure_node_is_single_leaf() {
        let d = data(&[(1.0, 2.0, true), (3.0, 4.0, true), (5.0, 1.0, true)]);
        let t = DecisionTree::fit(&TreeParams::default(), &d);
        assert_eq!(t.nodes, vec![Node::Leaf { positives: 3, negatives: 0 }]);
        assert_eq!(t.score(&[100.0; FEATURE_COUNT]), 1.0);
    }

    #[test]
    fn splits_at_midpoint() {
        let d = data(&[(1.0, 0.0, false), (2.0, 0.0, false), (4.0, 0.0, true), (6.0, 0.0, true)]);
        let t = DecisionTree::fit(&TreeParams::default(), &d);
        match t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 3.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.depth(), 1);
        assert!(t.is_well_formed());
    }

    #[test]
    fn gain_ratio_prefers_balanced_split() {
        // Feature 1 can only isolate one benign sample; feature 0 separates
        // the classes completely.
        let d = data(&[
            (0.0, 0.0, false),
            (1.0, 5.0, false),
            (2.0, 5.0, false),
            (10.0, 5.0, true),
            (11.0, 5.0, true),
            (12.0, 5.0, true),
        ]);
        let t = DecisionTree::fit(&TreeParams::default(), &d);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
        assert_eq!(t.nodes.len(), 3);
    }

    #[test]
    fn zero_gain_stops() {
        // XOR on binary values: every threshold leaves both sides 50/50.
        let d = data(&[(0.0, 0.0, false), (1.0, 1.0, false), (0.0, 1.0, true), (1.0, 0.0, true)]);
        let t = DecisionTree::fit(&TreeParams::default(), &d);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.score(&[0.0; FEATURE_COUNT]), 0.5);
    }

    #[test]
    fn min_leaf_and_depth_limits() {
        let pts: Vec<(f64, f64, bool)> = (0..8).map(|i| (i as f64, 0.0, i % 2 == 0)).collect();
        let d = data(&pts);
        let full = DecisionTree::fit(&TreeParams::default(), &d);
        let correct = pts.iter().filter(|p| (full.score(&d.x[p.0 as usize]) >= 0.5) == p.2).count();
        assert_eq!(correct, 8);
        let shallow = DecisionTree::fit(&TreeParams { min_leaf: 2, max_depth: Some(1) }, &d);
        assert_eq!(shallow.depth(), 1);
        let big_leaf = DecisionTree::fit(&TreeParams { min_leaf: 100, max_depth: None }, &d);
        assert_eq!(big_leaf.nodes.len(), 1);
    }
}
