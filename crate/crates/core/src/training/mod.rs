//! Losses, synthetic tasks, reverse-mode gradients and Adam over basis coefficients.

mod loss;
mod task;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Network, NetworkSpec};

pub use loss::LossKind;
pub use task::{top_right_singular_vector, Dataset, Task, SINGULAR_GAP_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: usize,
    /// Minibatch size; 0 means the full training set.
    pub batch: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Permit training at a level where later extension is not unique.
    pub allow_non_unique: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 10_000,
            patience: 500,
            batch: 0,
            seed: 0,
            val_fraction: 0.1,
            allow_non_unique: false,
        }
    }
}

/// Mixes a base seed with stream indices (splitmix64 finalizer per step).
pub fn derive_seed(seed: u64, streams: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    streams.iter().fold(mix(seed), |acc, &s| mix(acc ^ mix(s)))
}

/// Mean loss over the columns of `x`.
pub fn mean_loss(net: &Network, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let out = net.forward(x)?;
    let loss = net.spec().loss;
    let total: f64 = out
        .column_iter()
        .zip(y.column_iter())
        .map(|(a, b)| loss.value(a.as_slice(), b.as_slice()))
        .sum();
    Ok(total / x.ncols() as f64)
}

/// Mean batch loss and its gradient with respect to every coefficient.
pub fn grad(net: &Network, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if y.ncols() != x.ncols() || y.nrows() != net.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "targets are {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            net.output_dim(),
            x.ncols()
        )));
    }
    let (out, cache) = net.forward_cached(x)?;
    let loss = net.spec().loss;
    let scale = 1.0 / x.ncols() as f64;
    let mut dout = DMatrix::zeros(out.nrows(), out.ncols());
    let mut total = 0.0;
    for ((o, t), mut d) in out
        .column_iter()
        .zip(y.column_iter())
        .zip(dout.column_iter_mut())
    {
        total += loss.value_and_grad(o.as_slice(), t.as_slice(), Some(d.as_mut_slice()));
        d *= scale;
    }
    Ok((total * scale, net.backward(&cache, dout)?))
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, hp: &Hyperparams) -> Self {
        Self {
            lr: hp.lr,
            beta1: hp.beta1,
            beta2: hp.beta2,
            eps: hp.eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One update of `params`; entries with `mask[i] == false` stay put.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], mask: &[bool]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub stopped_early: bool,
}

/// Smallest level at which every layer of `spec` extends uniquely.
pub fn required_level(spec: &NetworkSpec) -> Result<usize> {
    use crate::conseq::{degrees, SeqExpr};
    use crate::eqbasis::BasisMode;
    let mut need = 1;
    for l in &spec.layers {
        let pres = |e: &SeqExpr| degrees(e, spec.family).map(|d| d.presentation);
        need = need.max(match spec.mode {
            BasisMode::Free => pres(&SeqExpr::tensor([l.in_expr.clone(), l.out_expr.clone()]))?,
            BasisMode::Compatible => pres(&l.in_expr)?.max(pres(&l.out_expr)?),
        });
    }
    Ok(need)
}

/// Adam on the coefficients from a seeded Gaussian start; returns the best-validation snapshot.
pub fn train(spec: &NetworkSpec, data: &Dataset, hp: &Hyperparams) -> Result<(Network, TrainReport)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let need = required_level(spec)?;
    if data.level < need && !hp.allow_non_unique {
        return Err(Error::InvalidConfig(format!(
            "level {} is below {need}, where extension of this {} network becomes unique; \
             raise the level or set allow_non_unique",
            data.level, spec.mode
        )));
    }
    let n_val = ((data.len() as f64) * hp.val_fraction).round() as usize;
    let n_val = n_val.min(data.len() - 1);
    let (train_set, val_set) = data.split(data.len() - n_val);

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut net = Network::random(spec.clone(), data.level, &mut rng)?;
    let mask = net.trainable_mask();
    let mut params = net.flat_params();
    let mut adam = Adam::new(params.len(), hp);

    let eval_val = |net: &Network| -> Result<f64> {
        if val_set.is_empty() {
            mean_loss(net, &train_set.inputs, &train_set.targets)
        } else {
            mean_loss(net, &val_set.inputs, &val_set.targets)
        }
    };
    let mut best = (eval_val(&net)?, params.clone(), 0usize);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batch = if hp.batch == 0 { train_set.len() } else { hp.batch.min(train_set.len()) };
    let mut epochs = 0;
    let mut stopped_early = false;
    for epoch in 1..=hp.epochs {
        epochs = epoch;
        if batch < train_set.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (x, y) = if chunk.len() == train_set.len() {
                (train_set.inputs.clone(), train_set.targets.clone())
            } else {
                (train_set.inputs.select_columns(chunk), train_set.targets.select_columns(chunk))
            };
            let (loss, g) = grad(&net, &x, &y)?;
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "loss became {loss} at epoch {epoch}; try a smaller learning rate than {}",
                    hp.lr
                )));
            }
            adam.step(&mut params, &g, &mask);
            net.set_flat_params(&params)?;
        }
        let val = eval_val(&net)?;
        if !val.is_finite() {
            return Err(Error::Numerical(format!(
                "validation loss became {val} at epoch {epoch}; try a smaller learning rate than {}",
                hp.lr
            )));
        }
        if val < best.0 {
            best = (val, params.clone(), epoch);
        } else if epoch - best.2 >= hp.patience {
            stopped_early = true;
            break;
        }
    }
    net.set_flat_params(&best.1)?;
    let report = TrainReport {
        epochs,
        best_epoch: best.2,
        train_loss: mean_loss(&net, &train_set.inputs, &train_set.targets)?,
        val_loss: best.0,
        stopped_early,
    };
    Ok((net, report))
}

#[cfg(test)]
mod tests;
