//! Gaussian naive Bayes: a Bayes network whose only edges run from the class
//! node to each feature.

use super::{sigmoid, TrainingData};

#[derive(Debug, Clone, PartialEq)]
pub struct BayesParams {
    /// Added to every variance as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for BayesParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

impl BayesParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if !(self.var_smoothing > 0.0 && self.var_smoothing.is_finite()) {
            return Err("bayes: var_smoothing must be positive".into());
        }
        Ok(())
    }
}

/// Per-class statistics; index 0 is Ransomware, index 1 is Benign.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesModel {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

fn mean_var<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.clone().count() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows.clone() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

impl BayesModel {
    pub(crate) fn fit(params: &BayesParams, data: &TrainingData) -> Self {
        let dim = data.x.first().map_or(0, |x| x.len());
        let all = data.x.iter().map(|x| &x[..]);
        let (_, overall_var) = mean_var(all, dim);
        let max_var = overall_var.iter().copied().fold(0.0, f64::max);
        let epsilon = if max_var > 0.0 { params.var_smoothing * max_var } else { params.var_smoothing };

        let class_rows = |positive: bool| {
            data.x.iter().zip(&data.y).filter(move |(_, &y)| y == positive).map(|(x, _)| &x[..])
        };
        let n = data.x.len() as f64;
        let n_pos = data.y.iter().filter(|&&y| y).count() as f64;
        let (mean_pos, mut var_pos) = mean_var(class_rows(true), dim);
        let (mean_neg, mut var_neg) = mean_var(class_rows(false), dim);
        var_pos.iter_mut().chain(var_neg.iter_mut()).for_each(|v| *v += epsilon);
        Self { priors: [n_pos / n, (n - n_pos) / n], means: [mean_pos, mean_neg], variances: [var_pos, var_neg] }
    }

    fn log_joint(&self, class: usize, x: &[f64]) -> f64 {
        let ll: f64 = x
            .iter()
            .zip(&self.means[class])
            .zip(&self.variances[class])
            .map(|((v, m), var)| -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - m) * (v - m) / (2.0 * var))
            .sum();
        self.priors[class].ln() + ll
    }

    /// Posterior probability of the Ransomware class.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.log_joint(0, x) - self.log_joint(1, x))
    }
}
