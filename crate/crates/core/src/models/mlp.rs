//! Dense ReLU network with a softmax output, trained by minibatch Adam on cross-entropy.
//!
//! Weights are stored input-major (`w[i * outputs + o]`) so the innermost loops of both passes
//! run over contiguous output units.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(mlp: &Mlp) -> Self {
        Gradients {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }
}

/// Extra loss term on the softmax outputs of a minibatch.
pub trait OutputRegularizer {
    /// `rows` are dataset row indices of the batch and `probs` their `rows.len() x n_out`
    /// probabilities. Adds d(penalty)/d(probs) into `grad_probs` and returns the penalty.
    fn penalty(&self, rows: &[usize], probs: &[f64], n_out: usize, grad_probs: &mut [f64]) -> f64;
}

impl Mlp {
    /// Glorot-uniform initialisation of weights and biases, bound `sqrt(6 / (fan_in + fan_out))`.
    pub fn new(input_dim: usize, hidden: &[usize], n_out: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "init");
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(n_out);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fi, fo) = (w[0], w[1]);
                let bound = (6.0 / (fi + fo) as f64).sqrt();
                let weights = (0..fi * fo).map(|_| rng.random_range(-bound..bound)).collect();
                let bias = (0..fo).map(|_| rng.random_range(-bound..bound)).collect();
                Dense {
                    inputs: fi,
                    outputs: fo,
                    weights,
                    bias,
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    /// Post-ReLU activations of each hidden layer followed by the output probabilities.
    pub fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acts = vec![vec![0.0; self.input_dim()]; self.layers.len() + 1];
        acts[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            acts[l + 1] = vec![0.0; layer.outputs];
            let (head, tail) = acts.split_at_mut(l + 1);
            dense_forward(layer, &head[l], &mut tail[0], 1);
            if l + 1 < self.layers.len() {
                relu(&mut tail[0]);
            }
        }
        let mut probs = acts.pop().expect("output layer");
        softmax_rows(&mut probs, self.output_dim());
        acts.remove(0);
        (acts, probs)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).1
    }

    /// Output probabilities recomputed from the last hidden layer's activations.
    pub fn output_from_last_hidden(&self, last_hidden: &[f64]) -> Vec<f64> {
        let layer = self.layers.last().expect("output layer");
        let mut out = vec![0.0; layer.outputs];
        dense_forward(layer, last_hidden, &mut out, 1);
        softmax_rows(&mut out, layer.outputs);
        out
    }

    /// Mean cross-entropy plus L2 and regulariser penalties over `rows` of `x`, with the gradient.
    pub fn loss_and_gradient(
        &self,
        x: &[f64],
        y: &[u32],
        rows: &[usize],
        l2: f64,
        reg: Option<&dyn OutputRegularizer>,
    ) -> (f64, Gradients) {
        let mut ws = Workspace::new(self, rows.len());
        let mut grads = Gradients::zeros(self);
        let loss = ws.step(self, x, y, rows, l2, reg, &mut grads);
        (loss, grads)
    }

    /// Trains in place. Returns the mean loss of each epoch.
    pub fn fit(
        &mut self,
        x: &[f64],
        y: &[u32],
        config: &ModelConfig,
        reg: Option<&dyn OutputRegularizer>,
    ) -> Result<Vec<f64>> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InsufficientData("no training records".into()));
        }
        let batch = config.effective_batch(n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = rng::stream(config.seed, "batches");
        let mut ws = Workspace::new(self, batch);
        let mut grads = Gradients::zeros(self);
        let mut adam = Adam::new(self, config);
        let mut curve = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            order.shuffle(&mut shuffle_rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                let loss = ws.step(self, x, y, chunk, config.l2, reg, &mut grads);
                total += loss * chunk.len() as f64;
                adam.update(self, &grads);
            }
            let mean = total / n as f64;
            if !mean.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            curve.push(mean);
        }
        Ok(curve)
    }
}

fn dense_forward(layer: &Dense, input: &[f64], out: &mut [f64], batch: usize) {
    let (ni, no) = (layer.inputs, layer.outputs);
    for b in 0..batch {
        let row = &mut out[b * no..(b + 1) * no];
        row.copy_from_slice(&layer.bias);
        let inp = &input[b * ni..(b + 1) * ni];
        for (i, &v) in inp.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let w = &layer.weights[i * no..(i + 1) * no];
            for (r, &wv) in row.iter_mut().zip(w) {
                *r += v * wv;
            }
        }
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn softmax_rows(v: &mut [f64], width: usize) {
    for row in v.chunks_exact_mut(width) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            z += *x;
        }
        for x in row.iter_mut() {
            *x /= z;
        }
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    grad_probs: Vec<f64>,
}

impl Workspace {
    fn new(mlp: &Mlp, batch: usize) -> Self {
        let mut acts = vec![vec![0.0; batch * mlp.input_dim()]];
        let mut deltas = Vec::new();
        for l in &mlp.layers {
            acts.push(vec![0.0; batch * l.outputs]);
            deltas.push(vec![0.0; batch * l.outputs]);
        }
        Workspace {
            acts,
            deltas,
            grad_probs: vec![0.0; batch * mlp.output_dim()],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        mlp: &Mlp,
        x: &[f64],
        y: &[u32],
        rows: &[usize],
        l2: f64,
        reg: Option<&dyn OutputRegularizer>,
        grads: &mut Gradients,
    ) -> f64 {
        let bsz = rows.len();
        let d = mlp.input_dim();
        let n_out = mlp.output_dim();
        let nl = mlp.layers.len();
        for (b, &r) in rows.iter().enumerate() {
            self.acts[0][b * d..(b + 1) * d].copy_from_slice(&x[r * d..(r + 1) * d]);
        }
        for (l, layer) in mlp.layers.iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let out = &mut tail[0][..bsz * layer.outputs];
            dense_forward(layer, &head[l], out, bsz);
            if l + 1 < nl {
                relu(out);
            } else {
                softmax_rows(out, n_out);
            }
        }

        let inv_b = 1.0 / bsz as f64;
        let probs = &self.acts[nl][..bsz * n_out];
        let mut loss = 0.0;
        let delta = &mut self.deltas[nl - 1][..bsz * n_out];
        for (b, &r) in rows.iter().enumerate() {
            let t = y[r] as usize;
            let p = probs[b * n_out + t];
            loss -= if p == 0.0 { f64::MIN_POSITIVE } else { p }.ln();
            for k in 0..n_out {
                let target = if k == t { 1.0 } else { 0.0 };
                delta[b * n_out + k] = (probs[b * n_out + k] - target) * inv_b;
            }
        }
        loss *= inv_b;
        if let Some(reg) = reg {
            let gp = &mut self.grad_probs[..bsz * n_out];
            gp.fill(0.0);
            loss += reg.penalty(rows, probs, n_out, gp);
            for b in 0..bsz {
                let p = &probs[b * n_out..(b + 1) * n_out];
                let g = &gp[b * n_out..(b + 1) * n_out];
                let dot: f64 = p.iter().zip(g).map(|(a, c)| a * c).sum();
                for k in 0..n_out {
                    delta[b * n_out + k] += p[k] * (g[k] - dot);
                }
            }
        }
        if l2 > 0.0 {
            let sq: f64 = mlp
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
                .sum();
            loss += 0.5 * l2 * sq * inv_b;
        }

        for l in (0..nl).rev() {
            let layer = &mlp.layers[l];
            let (ni, no) = (layer.inputs, layer.outputs);
            let input = &self.acts[l][..bsz * ni];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.bias[l];
            let scale = l2 * inv_b;
            for (g, w) in gw.iter_mut().zip(&layer.weights) {
                *g = scale * w;
            }
            gb.fill(0.0);
            let (lower, upper) = self.deltas.split_at_mut(l);
            let delta = &upper[0][..bsz * no];
            for b in 0..bsz {
                let drow = &delta[b * no..(b + 1) * no];
                for (g, &dv) in gb.iter_mut().zip(drow) {
                    *g += dv;
                }
                for (i, &v) in input[b * ni..(b + 1) * ni].iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    for (g, &dv) in gw[i * no..(i + 1) * no].iter_mut().zip(drow) {
                        *g += v * dv;
                    }
                }
            }
            if l > 0 {
                let prev = &mut lower[l - 1][..bsz * ni];
                for b in 0..bsz {
                    let drow = &delta[b * no..(b + 1) * no];
                    for i in 0..ni {
                        // ReLU derivative, read off the post-activation value.
                        prev[b * ni + i] = if input[b * ni + i] > 0.0 {
                            let w = &layer.weights[i * no..(i + 1) * no];
                            w.iter().zip(drow).map(|(a, c)| a * c).sum()
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
        loss
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    fn new(mlp: &Mlp, c: &ModelConfig) -> Self {
        Adam {
            lr: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.epsilon,
            t: 0,
            m: Gradients::zeros(mlp),
            v: Gradients::zeros(mlp),
        }
    }

    fn update(&mut self, mlp: &mut Mlp, g: &Gradients) {
        self.t += 1;
        let lr_t = self.lr * (1.0 - self.beta2.powi(self.t)).sqrt() / (1.0 - self.beta1.powi(self.t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                p[k] -= lr_t * m[k] / (v[k].sqrt() + eps);
            }
        };
        for (l, layer) in mlp.layers.iter_mut().enumerate() {
            apply(&mut layer.weights, &g.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            apply(&mut layer.bias, &g.bias[l], &mut self.m.bias[l], &mut self.v.bias[l]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<u32>) {
        let mut rng = rng::rng_from(seed);
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            y.push(u32::from(row[0] + 0.5 * row[1] > 0.0));
            x.extend(row);
        }
        (x, y)
    }

    struct Penalty;

    impl OutputRegularizer for Penalty {
        fn penalty(&self, _rows: &[usize], probs: &[f64], n_out: usize, g: &mut [f64]) -> f64 {
            // 0.3 * sum of squared first-class probabilities.
            let mut s = 0.0;
            for (b, row) in probs.chunks_exact(n_out).enumerate() {
                s += 0.3 * row[0] * row[0];
                g[b * n_out] += 0.6 * row[0];
            }
            s
        }
    }

    fn check_gradients(reg: Option<&dyn OutputRegularizer>) {
        let (x, y) = toy(10, 5, 1);
        let mlp = Mlp::new(5, &[6, 4], 3, 2);
        let y: Vec<u32> = y.iter().enumerate().map(|(i, v)| (v + (i % 2) as u32) % 3).collect();
        let rows: Vec<usize> = (0..10).collect();
        let l2 = 0.01;
        let (_, g) = mlp.loss_and_gradient(&x, &y, &rows, l2, reg);
        let h = 1e-6;
        for l in 0..mlp.layers.len() {
            let mut worst: f64 = 0.0;
            let n_params = mlp.layers[l].weights.len() + mlp.layers[l].bias.len();
            for k in 0..n_params {
                let mut plus = mlp.clone();
                let mut minus = mlp.clone();
                let nw = mlp.layers[l].weights.len();
                let analytic = if k < nw {
                    plus.layers[l].weights[k] += h;
                    minus.layers[l].weights[k] -= h;
                    g.weights[l][k]
                } else {
                    plus.layers[l].bias[k - nw] += h;
                    minus.layers[l].bias[k - nw] -= h;
                    g.bias[l][k - nw]
                };
                let fp = plus.loss_and_gradient(&x, &y, &rows, l2, reg).0;
                let fm = minus.loss_and_gradient(&x, &y, &rows, l2, reg).0;
                let numeric = (fp - fm) / (2.0 * h);
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-7);
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-4, "layer {l}: relative error {worst}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(None);
    }

    #[test]
    fn regularised_gradients_match_finite_differences() {
        check_gradients(Some(&Penalty));
    }

    #[test]
    fn learns_separable_data() {
        let (x, y) = toy(400, 2, 3);
        let mut mlp = Mlp::new(2, &[8], 2, 4);
        let cfg = ModelConfig {
            hidden_layers: vec![8],
            epochs: 200,
            learning_rate: 0.01,
            ..Default::default()
        };
        mlp.fit(&x, &y, &cfg, None).unwrap();
        let correct = (0..400)
            .filter(|&i| {
                let p = mlp.predict_proba(&x[i * 2..i * 2 + 2]);
                u32::from(p[1] > p[0]) == y[i]
            })
            .count();
        assert!(correct as f64 / 400.0 >= 0.97, "{correct}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (x, y) = toy(120, 3, 5);
        let cfg = ModelConfig {
            epochs: 5,
            ..Default::default()
        };
        let mut a = Mlp::new(3, &cfg.hidden_layers, 2, 9);
        let mut b = a.clone();
        a.fit(&x, &y, &cfg, None).unwrap();
        b.fit(&x, &y, &cfg, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut x, y) = toy(20, 2, 5);
        x[0] = f64::NAN;
        let cfg = ModelConfig {
            epochs: 3,
            ..Default::default()
        };
        let mut m = Mlp::new(2, &[4], 2, 1);
        assert!(matches!(m.fit(&x, &y, &cfg, None), Err(Error::TrainingDiverged { epoch: 0 })));
    }

    #[test]
    fn forward_from_last_hidden_agrees() {
        let m = Mlp::new(4, &[5, 3], 2, 7);
        let x = [0.3, -1.2, 0.0, 2.0];
        let (acts, p) = m.forward(&x);
        assert_eq!(acts.len(), 2);
        assert_eq!(acts[1].len(), 3);
        let q = m.output_from_last_hidden(&acts[1]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
