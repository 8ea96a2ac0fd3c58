//! k-nearest-neighbour vote over the stored (scaled) training set.

use crate::features::{Label, FEATURE_COUNT};

use super::TrainingData;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

impl KnnParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("knn: k must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<[f64; FEATURE_COUNT]>,
    pub labels: Vec<Label>,
}

impl KnnModel {
    pub(crate) fn fit(params: &KnnParams, data: &TrainingData) -> Self {
        Self {
            k: params.k,
            points: data.x.clone(),
            labels: data.y.iter().map(|&p| if p { Label::Ransomware } else { Label::Benign }).collect(),
        }
    }

    /// Fraction of positive votes among the `k` nearest points. Distance ties
    /// are broken by training index; if `k` exceeds the training set, every
    /// point votes.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let k = self.k.min(dist.len());
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_distance);
        }
        let positives = dist[..k].iter().filter(|(_, i)| self.labels[*i].is_positive()).count();
        positives as f64 / k as f64
    }
}
