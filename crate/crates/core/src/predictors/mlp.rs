use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, Features, ModelKind, Params, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            activation: Activation::Tanh,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.batch_size == 0 {
            return Err(Error::InvalidInput("MLP layer and batch sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput("MLP learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Fully connected network with one linear output. Parameters live in one
/// flat vector: per layer the `out × in` weights row by row, then `out`
/// biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    /// Full-sample loss before training, then the mean mini-batch loss of
    /// each epoch.
    pub loss_history: Vec<f64>,
}

impl Network {
    /// Weights uniform on `±1/√fan_in`, biases zero.
    pub fn init(n_inputs: usize, hidden: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, out));
        }
        Self {
            sizes,
            activation,
            params,
            loss_history: Vec::new(),
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Fills `sc` with the pre-activations and outputs of every layer;
    /// `sc.outs[0]` is the input.
    fn forward_into(&self, x: &[f64], sc: &mut Scratch) {
        sc.outs[0].clear();
        sc.outs[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..self.n_layers() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + fan_in * out];
            let b = &self.params[off + fan_in * out..off + fan_in * out + out];
            off += fan_in * out + out;
            let last = l + 1 == self.n_layers();
            let (before, after) = sc.outs.split_at_mut(l + 1);
            let input = &before[l];
            let (z, a) = (&mut sc.pre[l], &mut after[0]);
            for o in 0..out {
                let v = b[o]
                    + w[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(input)
                        .map(|(p, v)| p * v)
                        .sum::<f64>();
                z[o] = v;
                a[o] = if last { v } else { self.activation.apply(v) };
            }
        }
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            pre: self.sizes[1..].iter().map(|n| vec![0.0; *n]).collect(),
            outs: self.sizes.iter().map(|n| vec![0.0; *n]).collect(),
            delta: Vec::new(),
            next: Vec::new(),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut sc = self.scratch();
        self.forward_into(x, &mut sc);
        sc.outs[self.n_layers()][0]
    }

    /// Mean squared error over the batch and its gradient.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(xs, ys, &mut grad, &mut self.scratch());
        (loss, grad)
    }

    fn accumulate(&self, xs: &[&[f64]], ys: &[f64], grad: &mut [f64], sc: &mut Scratch) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let scale = 1.0 / ys.len() as f64;
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let start = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(start)
            })
            .collect();
        for (x, &y) in xs.iter().zip(ys) {
            self.forward_into(x, sc);
            let err = sc.outs[self.n_layers()][0] - y;
            loss += err * err * scale;
            sc.delta.clear();
            sc.delta.push(2.0 * err * scale);
            for l in (0..self.n_layers()).rev() {
                let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                let input = &sc.outs[l];
                for o in 0..out {
                    let d = sc.delta[o];
                    let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                    grad[off + fan_in * out + o] += d;
                }
                if l > 0 {
                    let w = &self.params[off..off + fan_in * out];
                    sc.next.clear();
                    for i in 0..fan_in {
                        let back: f64 = (0..out).map(|o| w[o * fan_in + i] * sc.delta[o]).sum();
                        sc.next
                            .push(back * self.activation.slope(sc.pre[l - 1][i], sc.outs[l][i]));
                    }
                    std::mem::swap(&mut sc.delta, &mut sc.next);
                }
            }
        }
        loss
    }

    fn full_loss(&self, rows: &[Vec<f64>], y: &[f64]) -> f64 {
        rows.iter()
            .zip(y)
            .map(|(r, t)| (self.predict_row(r) - t).powi(2))
            .sum::<f64>()
            / y.len() as f64
    }
}

struct Scratch {
    pre: Vec<Vec<f64>>,
    outs: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch training on squared loss. Rows are reshuffled every epoch
/// from the configured seed.
pub fn train_mlp(x: &Features, y: &[f64], cfg: &MlpConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    check_training(x, y, cfg.batch_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::init(x.n_cols(), &cfg.hidden, cfg.activation, &mut rng);
    let rows = x.rows();
    net.loss_history.push(net.full_loss(rows, y));
    let mut adam = Adam {
        m: vec![0.0; net.params.len()],
        v: vec![0.0; net.params.len()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut grad = vec![0.0; net.params.len()];
    let mut sc = net.scratch();
    let mut xs: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut ys: Vec<f64> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            xs.clear();
            ys.clear();
            xs.extend(batch.iter().map(|&i| rows[i].as_slice()));
            ys.extend(batch.iter().map(|&i| y[i]));
            let loss = net.accumulate(&xs, &ys, &mut grad, &mut sc);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut net.params, &grad, cfg.learning_rate),
                Optimizer::Sgd => net
                    .params
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(p, g)| *p -= cfg.learning_rate * g),
            }
        }
        net.loss_history.push(epoch_loss / y.len() as f64);
    }
    Ok(TrainedModel {
        kind: ModelKind::Mlp,
        params: Params::Mlp(net),
        feature_names: x.names().to_vec(),
        train_months: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn data(n: usize, p: usize, seed: u64) -> (Features, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y = rows.iter().map(|r| 0.8 * r[0] - 0.5 * r[p - 1] + 0.1).collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        (Features::new(names, rows).unwrap(), y)
    }

    fn network(model: &TrainedModel) -> &Network {
        match &model.params {
            Params::Mlp(n) => n,
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_epochs_is_initial_network() {
        let (x, y) = data(80, 4, 1);
        let cfg = MlpConfig {
            epochs: 0,
            seed: 42,
            ..Default::default()
        };
        let model = train_mlp(&x, &y, &cfg).unwrap();
        let init = Network::init(4, &[32], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(network(&model).params(), init.params());
        let preds = model.predict(&x).unwrap();
        for (p, r) in preds.iter().zip(x.rows()) {
            assert_eq!(*p, init.predict_row(r));
        }
    }

    #[test]
    fn linear_target_is_learned() {
        let (x, y) = data(256, 3, 2);
        let cfg = MlpConfig {
            hidden: vec![1],
            activation: Activation::Identity,
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 32,
            ..Default::default()
        };
        let model = train_mlp(&x, &y, &cfg).unwrap();
        let h = &network(&model).loss_history;
        assert!(h.last().unwrap() < &(0.1 * h[0]), "{} vs {}", h.last().unwrap(), h[0]);
    }

    /// Central differences on a 5-sample batch.
    pub(crate) fn max_gradient_error(activation: Activation, seed: u64) -> f64 {
        let (x, y) = data(5, 4, seed);
        let net = Network::init(4, &[6, 3], activation, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut net = net;
        // nonzero biases exercise every gradient slot
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        net.params_mut()
            .iter_mut()
            .for_each(|p| *p += 0.1 * rng.sample::<f64, _>(StandardNormal));
        let xs: Vec<&[f64]> = x.rows().iter().map(Vec::as_slice).collect();
        let (_, grad) = net.loss_and_grad(&xs, &y);
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (plus.loss_and_grad(&xs, &y).0 - minus.loss_and_grad(&xs, &y).0) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-4);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            assert!(max_gradient_error(Activation::Tanh, seed) <= 1e-5);
            assert!(max_gradient_error(Activation::Identity, seed) <= 1e-5);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let (x, y) = data(100, 3, 5);
        let cfg = MlpConfig {
            epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let a = train_mlp(&x, &y, &cfg).unwrap();
        let b = train_mlp(&x, &y, &cfg).unwrap();
        assert_eq!(network(&a).params(), network(&b).params());
    }

    #[test]
    fn divergence_names_epoch() {
        let (x, mut y) = data(64, 3, 6);
        y.iter_mut().for_each(|v| *v *= 1e200);
        let cfg = MlpConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 1.0,
            epochs: 3,
            ..Default::default()
        };
        assert!(matches!(train_mlp(&x, &y, &cfg), Err(Error::Divergence { epoch: 1 })));
    }

    #[test]
    fn batch_larger_than_sample_rejected() {
        let (x, y) = data(10, 2, 7);
        assert!(train_mlp(&x, &y, &MlpConfig::default()).is_err());
    }
}
