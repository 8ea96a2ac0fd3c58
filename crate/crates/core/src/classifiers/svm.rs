//! Linear soft-margin SVM trained with the Pegasos primal subgradient method.
//!
//! The bias is folded into the weight vector as a constant input of 1, so it
//! is regularized together with the weights. Step size at iteration `t` is
//! `1 / (lambda * t)` with `lambda = 1 / (C * n)`; each step uses one sample
//! drawn from the seeded generator and is followed by projection onto the
//! ball of radius `1 / sqrt(lambda)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, TrainingData};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub iterations: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, iterations: 100_000 }
    }
}

impl SvmParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err("svm: C must be positive".into());
        }
        if self.iterations == 0 {
            return Err("svm: iterations must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SvmModel {
    pub(crate) fn fit(params: &SvmParams, data: &TrainingData, seed: u64) -> Self {
        let n = data.x.len();
        let dim = data.x.first().map_or(0, |x| x.len());
        let lambda = 1.0 / (params.c * n as f64);
        let radius = 1.0 / lambda.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Last slot is the bias weight.
        let mut w = vec![0.0; dim + 1];
        for t in 1..=params.iterations {
            let i = rng.gen_range(0..n);
            let x = &data.x[i];
            let y = if data.y[i] { 1.0 } else { -1.0 };
            let margin = y * (w[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[dim]);
            let eta = 1.0 / (lambda * t as f64);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (v, xi) in w[..dim].iter_mut().zip(x) {
                    *v += eta * y * xi;
                }
                w[dim] += eta * y;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let f = radius / norm;
                w.iter_mut().for_each(|v| *v *= f);
            }
        }
        let bias = w.pop().unwrap_or(0.0);
        Self { weights: w, bias }
    }

    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    /// Logistic squashing of the decision value; 0.5 sits on the hyperplane.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision_value(x))
    }
}
