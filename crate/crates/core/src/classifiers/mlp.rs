//! One-hidden-layer perceptron with sigmoid units, trained by full-batch
//! gradient descent on binary cross-entropy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, TrainingData};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden: 16, learning_rate: 0.1, epochs: 500 }
    }
}

impl MlpParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 {
            return Err("mlp: hidden layer needs at least 1 unit".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("mlp: learning_rate must be positive".into());
        }
        if self.epochs == 0 {
            return Err("mlp: epochs must be at least 1".into());
        }
        Ok(())
    }
}

/// Network weights. `w1` is row-major `hidden x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub inputs: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    /// Weights and biases drawn uniformly from `[-0.5, 0.5]`.
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-0.5..=0.5)).collect::<Vec<f64>>();
        let w1 = draw(inputs * hidden);
        let b1 = draw(hidden);
        let w2 = draw(hidden);
        let b2 = draw(1)[0];
        Self { inputs, hidden, w1, b1, w2, b2 }
    }

    pub(crate) fn fit(params: &MlpParams, data: &TrainingData, seed: u64) -> Self {
        let inputs = data.x.first().map_or(0, |x| x.len());
        let mut model = Self::init(inputs, params.hidden, seed);
        let xs: Vec<&[f64]> = data.x.iter().map(|x| &x[..]).collect();
        let ys: Vec<f64> = data.y.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
        let mut grad = vec![0.0; model.parameter_count()];
        for _ in 0..params.epochs {
            model.batch_gradient(&xs, &ys, &mut grad);
            model.step(&grad, params.learning_rate);
        }
        model
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Flattened parameters: `w1`, `b1`, `w2`, `b2`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.parameter_count(), "parameter vector length");
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    fn hidden_activations(&self, x: &[f64], out: &mut [f64]) {
        for (j, h) in out.iter_mut().enumerate() {
            let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            *h = sigmoid(z);
        }
    }

    fn output(&self, h: &[f64]) -> f64 {
        sigmoid(self.w2.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.b2)
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.hidden_activations(x, &mut h);
        self.output(&h)
    }

    /// Mean binary cross-entropy over the batch.
    pub fn loss(&self, xs: &[&[f64]], ys: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                self.hidden_activations(x, &mut h);
                let o = self.output(&h).clamp(1e-15, 1.0 - 1e-15);
                -(y * o.ln() + (1.0 - y) * (1.0 - o).ln())
            })
            .sum();
        total / xs.len() as f64
    }

    /// Analytic gradient of [`MlpModel::loss`], in [`MlpModel::parameters`] order.
    pub fn gradient(&self, xs: &[&[f64]], ys: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.parameter_count()];
        self.batch_gradient(xs, ys, &mut grad);
        grad
    }

    fn batch_gradient(&self, xs: &[&[f64]], ys: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n_w1 = self.w1.len();
        let (g_w1, rest) = grad.split_at_mut(n_w1);
        let (g_b1, rest) = rest.split_at_mut(self.hidden);
        let (g_w2, g_b2) = rest.split_at_mut(self.hidden);
        let mut h = vec![0.0; self.hidden];
        for (x, &y) in xs.iter().zip(ys) {
            self.hidden_activations(x, &mut h);
            // d(BCE)/dz for a sigmoid output is simply o - y.
            let delta_out = self.output(&h) - y;
            g_b2[0] += delta_out;
            for j in 0..self.hidden {
                g_w2[j] += delta_out * h[j];
                let delta_h = delta_out * self.w2[j] * h[j] * (1.0 - h[j]);
                g_b1[j] += delta_h;
                let row = &mut g_w1[j * self.inputs..(j + 1) * self.inputs];
                for (g, v) in row.iter_mut().zip(x.iter()) {
                    *g += delta_h * v;
                }
            }
        }
        let inv = 1.0 / xs.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
    }

    fn step(&mut self, grad: &[f64], lr: f64) {
        let mut it = grad.iter();
        for w in self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()) {
            *w -= lr * it.next().unwrap();
        }
        self.b2 -= lr * it.next().unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MlpModel::init(13, 4, 7);
        let b = MlpModel::init(13, 4, 7);
        let c = MlpModel::init(13, 4, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.parameters().iter().all(|w| (-0.5..=0.5).contains(w)));
        assert_eq!(a.parameter_count(), 13 * 4 + 4 + 4 + 1);
    }

    #[test]
    fn parameter_round_trip() {
        let mut m = MlpModel::init(3, 2, 1);
        let p: Vec<f64> = (0..m.parameter_count()).map(|i| i as f64).collect();
        m.set_parameters(&p);
        assert_eq!(m.parameters(), p);
        assert_eq!(m.b2, 10.0);
    }

    #[test]
    fn learns_a_threshold() {
        let x: Vec<[f64; 13]> = (0..20)
            .map(|i| {
                let mut v = [0.0; 13];
                v[0] = i as f64 / 19.0;
                v
            })
            .collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let params = MlpParams { hidden: 4, learning_rate: 1.0, epochs: 2000 };
        let model = MlpModel::fit(&params, &TrainingData { x: x.clone(), y: y.clone() }, 3);
        let correct = x.iter().zip(&y).filter(|(v, &t)| (model.score(&v[..]) >= 0.5) == t).count();
        assert!(correct >= 19, "{correct}/20");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = MlpModel::init(3, 2, 11);
        let xs_owned = [[0.2, -0.4, 0.9], [0.7, 0.1, -0.3]];
        let xs: Vec<&[f64]> = xs_owned.iter().map(|x| &x[..]).collect();
        let ys = [1.0, 0.0];
        let analytic = model.gradient(&xs, &ys);
        let base = model.parameters();
        let h = 1e-5;
        for (i, &a) in analytic.iter().enumerate() {
            let mut m = model.clone();
            let mut p = base.clone();
            p[i] += h;
            m.set_parameters(&p);
            let up = m.loss(&xs, &ys);
            p[i] -= 2.0 * h;
            m.set_parameters(&p);
            let down = m.loss(&xs, &ys);
            let numeric = (up - down) / (2.0 * h);
            assert!((a - numeric).abs() <= 1e-4 * a.abs().max(numeric.abs()).max(1e-6), "param {i}: {a} vs {numeric}");
        }
    }
}
