use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use crate::conseq::SeqExpr;
use crate::eqbasis::BasisMode;
use crate::error::{Error, Result};
use crate::netcore::{ActivationKind, NetworkSpec};
use crate::training::{Hyperparams, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelect {
    Free,
    Compatible,
    Both,
}

impl ModeSelect {
    pub fn modes(self) -> Vec<BasisMode> {
        match self {
            ModeSelect::Free => vec![BasisMode::Free],
            ModeSelect::Compatible => vec![BasisMode::Compatible],
            ModeSelect::Both => vec![BasisMode::Free, BasisMode::Compatible],
        }
    }
}

/// Replacements for the default architecture of a task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchOverride {
    pub hidden: Option<SeqExpr>,
    pub activation: Option<ActivationKind>,
    pub fixed_bilinear: bool,
}

fn default_mode() -> ModeSelect {
    ModeSelect::Compatible
}
fn default_runs() -> usize {
    3
}
fn default_train_samples() -> usize {
    3000
}
fn default_test_samples() -> usize {
    1000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default = "default_mode")]
    pub mode: ModeSelect,
    /// Training level; the task default when absent.
    #[serde(default)]
    pub n0: Option<usize>,
    /// Evaluation levels, as a list or a range string such as `"2..15"`.
    #[serde(default, deserialize_with = "dims_field")]
    pub dims: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_train_samples")]
    pub train_samples: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(flatten)]
    pub hyperparams: Hyperparams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub architecture: ArchOverride,
}

impl ExperimentConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            mode: default_mode(),
            n0: None,
            dims: Vec::new(),
            runs: default_runs(),
            train_samples: default_train_samples(),
            test_samples: default_test_samples(),
            hyperparams: Hyperparams::default(),
            output_dir: default_output_dir(),
            architecture: ArchOverride::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn level(&self) -> usize {
        self.n0.unwrap_or_else(|| self.task.default_level())
    }

    /// Base seed; every run and dimension derives its own stream from it.
    pub fn seed(&self) -> u64 {
        self.hyperparams.seed
    }

    /// Evaluation levels, defaulting to `2..=2·n0+5` (smaller for the large architectures,
    /// whose compatible bases also need `n >= 3`).
    pub fn eval_dims(&self) -> Vec<usize> {
        if !self.dims.is_empty() {
            return self.dims.clone();
        }
        match self.task {
            Task::TopSingularVector => (2..=8).collect(),
            Task::OrthInvariance => (3..=6).collect(),
            _ => (2..=2 * self.level() + 5).collect(),
        }
    }

    pub fn network_spec(&self, mode: BasisMode) -> Result<NetworkSpec> {
        let mut spec = self.task.default_spec(mode);
        let a = &self.architecture;
        let last = spec.layers.len() - 1;
        for (i, l) in spec.layers.iter_mut().enumerate() {
            if let Some(h) = &a.hidden {
                if i > 0 {
                    l.in_expr = h.clone();
                }
                if i < last {
                    l.out_expr = h.clone();
                }
            }
            if let (Some(act), true) = (&a.activation, i < last) {
                l.activation = act.clone();
            }
        }
        spec.fixed_bilinear = a.fixed_bilinear;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.level() == 0 || self.dims.contains(&0) {
            return bad("levels start at 1".into());
        }
        if self.train_samples < 2 || self.test_samples == 0 {
            return bad("need at least 2 training samples and 1 test sample".into());
        }
        let h = &self.hyperparams;
        if !(h.lr > 0.0) || !(0.0..1.0).contains(&h.beta1) || !(0.0..1.0).contains(&h.beta2) {
            return bad(format!("lr must be positive and betas in [0, 1), got {h:?}"));
        }
        if !(0.0..1.0).contains(&h.val_fraction) || h.epochs == 0 {
            return bad("val_fraction must be in [0, 1) and epochs positive".into());
        }
        for mode in self.mode.modes() {
            self.network_spec(mode)?;
        }
        Ok(())
    }
}

/// Parses `"2..15"` (inclusive), `"2..=15"`, `"3,5,7"` or a single level.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("cannot parse dimensions `{s}`"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let s = s.trim();
    if let Some((lo, hi)) = s.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(num).collect()
}

fn dims_field<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Dims {
        List(Vec<usize>),
        Text(String),
    }
    match Dims::deserialize(d)? {
        Dims::List(v) => Ok(v),
        Dims::Text(s) => parse_dims(&s).map_err(serde::de::Error::custom),
    }
}
