use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LossKind;
use crate::conseq::SeqExpr;
use crate::eqbasis::BasisMode;
use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;
use crate::netcore::{ActivationKind, LayerSpec, NetworkSpec};

/// Relative gap below which the top two singular values count as tied.
pub const SINGULAR_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    Trace,
    DiagExtract,
    SymProject,
    TopSingularVector,
    OrthInvariance,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Trace,
        Task::DiagExtract,
        Task::SymProject,
        Task::TopSingularVector,
        Task::OrthInvariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Trace => "trace",
            Task::DiagExtract => "diag",
            Task::SymProject => "sym",
            Task::TopSingularVector => "topsv",
            Task::OrthInvariance => "orth",
        }
    }

    pub fn family(self) -> GroupFamily {
        match self {
            Task::OrthInvariance => GroupFamily::OrthogonalOn,
            _ => GroupFamily::SymmetricSn,
        }
    }

    pub fn input(self) -> SeqExpr {
        match self {
            Task::OrthInvariance => SeqExpr::multiple(2, SeqExpr::Base),
            _ => SeqExpr::power(2),
        }
    }

    pub fn output(self) -> SeqExpr {
        match self {
            Task::Trace | Task::OrthInvariance => SeqExpr::Scalar,
            Task::DiagExtract | Task::SymProject => SeqExpr::power(2),
            Task::TopSingularVector => SeqExpr::Base,
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            Task::TopSingularVector => LossKind::SquaredSine,
            _ => LossKind::Mse,
        }
    }

    /// Name of the reported metric.
    pub fn metric(self) -> &'static str {
        match self {
            Task::Trace | Task::OrthInvariance => "mse",
            Task::DiagExtract | Task::SymProject => "mse_per_entry",
            Task::TopSingularVector => "squared_sine",
        }
    }

    /// Default level used for training.
    pub fn default_level(self) -> usize {
        match self {
            Task::OrthInvariance => 3,
            _ => 5,
        }
    }

    pub fn hidden(self) -> SeqExpr {
        match self {
            Task::Trace => SeqExpr::from_counts(&[0, 2, 2]),
            Task::DiagExtract | Task::SymProject => SeqExpr::from_counts(&[0, 4, 4]),
            Task::TopSingularVector | Task::OrthInvariance => {
                SeqExpr::from_counts(&[25, 10, 2, 1])
            }
        }
    }

    pub fn hidden_activation(self) -> ActivationKind {
        match self.family() {
            GroupFamily::SymmetricSn => "bilinear+relu",
            _ => "bilinear+gated",
        }
        .parse()
        .expect("known activation")
    }

    /// Three linear layers with two hidden layers.
    pub fn default_spec(self, mode: BasisMode) -> NetworkSpec {
        let h = self.hidden();
        let act = self.hidden_activation();
        NetworkSpec {
            family: self.family(),
            layers: vec![
                LayerSpec::new(self.input(), h.clone(), act.clone()),
                LayerSpec::new(h.clone(), h.clone(), act),
                LayerSpec::new(h, self.output(), ActivationKind::Identity),
            ],
            mode,
            loss: self.loss(),
            fixed_bilinear: false,
        }
    }

    /// Target for input `x` at level `n`; `None` flags a degenerate draw to resample.
    pub fn ground_truth(self, x: &[f64], n: usize) -> Result<Option<Vec<f64>>> {
        let want = self.input().dim(n)?;
        if x.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "{} input at level {n} has {want} entries, got {}",
                self.name(),
                x.len()
            )));
        }
        // V² vectors are matrices in row-major order.
        let mat = || DMatrix::from_fn(n, n, |i, j| x[i * n + j]);
        let flat = |m: DMatrix<f64>| (0..n * n).map(|p| m[(p / n, p % n)]).collect::<Vec<_>>();
        Ok(Some(match self {
            Task::Trace => vec![(0..n).map(|i| x[i * n + i]).sum()],
            Task::DiagExtract => {
                let m = mat();
                flat(DMatrix::from_fn(n, n, |i, j| if i == j { m[(i, i)] } else { 0.0 }))
            }
            Task::SymProject => {
                let m = mat();
                flat((&m + m.transpose()) * 0.5)
            }
            Task::TopSingularVector => match top_right_singular_vector(&mat()) {
                Some(v) => v.as_slice().to_vec(),
                None => return Ok(None),
            },
            Task::OrthInvariance => {
                let (x1, x2) = x.split_at(n);
                let n1 = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
                let n2 = x2.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n1 == 0.0 || n2 == 0.0 {
                    return Ok(None);
                }
                let dot: f64 = x1.iter().zip(x2).map(|(a, b)| a * b).sum();
                vec![n1.sin() - n2.powi(3) / 2.0 + dot / (n1 * n2)]
            }
        }))
    }
}

/// Unit right singular vector for the largest singular value, first nonzero entry positive.
pub fn top_right_singular_vector(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    let eig = (m.transpose() * m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0).sqrt();
    if top == 0.0 {
        return None;
    }
    if let Some(&second) = order.get(1) {
        let s2 = eig.eigenvalues[second].max(0.0).sqrt();
        if top - s2 <= SINGULAR_GAP_TOL * top {
            return None;
        }
    }
    let mut v = eig.eigenvectors.column(order[0]).into_owned();
    v /= v.norm();
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v = -v;
        }
    }
    Some(v)
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown task `{s}` (expected trace, diag, sym, topsv or orth)"
                ))
            })
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.name().into()
    }
}

/// Inputs and targets stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub level: usize,
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub seed: u64,
}

impl Dataset {
    /// `count` samples with i.i.d. standard normal input entries.
    pub fn generate(task: Task, level: usize, count: usize, seed: u64) -> Result<Self> {
        let din = task.input().dim(level)?;
        let dout = task.output().dim(level)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = DMatrix::zeros(din, count);
        let mut targets = DMatrix::zeros(dout, count);
        for k in 0..count {
            loop {
                let x: Vec<f64> = (0..din).map(|_| rng.sample(StandardNormal)).collect();
                if let Some(y) = task.ground_truth(&x, level)? {
                    inputs.column_mut(k).copy_from_slice(&x);
                    targets.column_mut(k).copy_from_slice(&y);
                    break;
                }
            }
        }
        Ok(Self {
            task,
            level,
            inputs,
            targets,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First `k` samples and the rest.
    pub fn split(&self, k: usize) -> (Dataset, Dataset) {
        let k = k.min(self.len());
        let part = |lo: usize, hi: usize| Dataset {
            inputs: self.inputs.columns(lo, hi - lo).into_owned(),
            targets: self.targets.columns(lo, hi - lo).into_owned(),
            ..self.clone()
        };
        (part(0, k), part(k, self.len()))
    }
}
