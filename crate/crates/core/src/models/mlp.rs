//! Fully connected ReLU network with a linear scalar output, trained on the
//! half mean squared error with full-batch Adam.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in_dim x out_dim`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Gradients laid out like [`Network::layers`].
pub type Gradient = Vec<(Array2<f64>, Array1<f64>)>;

impl Network {
    /// Glorot-uniform weights and biases from `seed`.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = rng::stream(seed, 0);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..bound)),
                    bias: Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers }
    }

    /// Pre-activations of every layer for a batch (rows are samples).
    fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = act.dot(&layer.weights) + &layer.bias;
            if l + 1 < self.layers.len() {
                act = z.mapv(|v| v.max(0.0));
            }
            pre.push(z);
        }
        pre
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut pre = self.forward_all(x);
        pre.pop().expect("network has layers").index_axis_move(Axis(1), 0)
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.predict_batch(view)[0]
    }

    /// `0.5 * mean((f(x) - y)^2)` and its gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Gradient) {
        let n = x.nrows() as f64;
        let pre = self.forward_all(x);
        let out = pre.last().expect("network has layers").column(0);
        let err = &out - &y;
        let loss = 0.5 * err.mapv(|e| e * e).sum() / n;

        let mut grads: Gradient = Vec::with_capacity(self.layers.len());
        let mut delta: Array2<f64> = (err / n).insert_axis(Axis(1));
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x.to_owned() } else { pre[l - 1].mapv(|v| v.max(0.0)) };
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let back = delta.dot(&self.layers[l].weights.t());
                delta = back * &pre[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            }
            grads.push((dw, db));
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        let out = self.predict_batch(x);
        0.5 * (&out - &y).mapv(|e| e * e).sum() / x.nrows() as f64
    }

    /// All parameters flattened, layer by layer, weights (row-major) then bias.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().expect("length"));
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn flatten_gradient(grad: &Gradient) -> Vec<f64> {
        grad.iter().flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>()).collect()
    }

    /// Full-batch Adam; returns the final training loss.
    pub fn train(&mut self, x: ArrayView2<f64>, y: ArrayView1<f64>, iterations: usize, cfg: AdamConfig) -> f64 {
        let mut m: Gradient = self.zero_like();
        let mut v: Gradient = self.zero_like();
        let (mut b1t, mut b2t) = (1.0, 1.0);
        for _ in 0..iterations {
            let (_, g) = self.loss_and_gradient(x, y);
            b1t *= cfg.beta1;
            b2t *= cfg.beta2;
            let corr = (1.0 - b1t, 1.0 - b2t);
            for (layer, ((gw, gb), ((mw, mb), (vw, vb)))) in
                self.layers.iter_mut().zip(g.iter().zip(m.iter_mut().zip(v.iter_mut())))
            {
                Zip::from(&mut layer.weights).and(gw).and(mw).and(vw).for_each(|p, &g, m, v| {
                    adam_update(p, g, m, v, corr, &cfg)
                });
                Zip::from(&mut layer.bias).and(gb).and(mb).and(vb).for_each(|p, &g, m, v| {
                    adam_update(p, g, m, v, corr, &cfg)
                });
            }
        }
        self.loss(x, y)
    }

    fn zero_like(&self) -> Gradient {
        self.layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect()
    }
}

/// `(1 - beta1^t, 1 - beta2^t)` are the bias corrections.
#[inline]
fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, corr: (f64, f64), cfg: &AdamConfig) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    *p -= cfg.learning_rate * (*m / corr.0) / ((*v / corr.1).sqrt() + cfg.epsilon);
}
