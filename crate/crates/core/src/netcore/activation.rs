use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conseq::SeqExpr;
use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Nonlinearity {
    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Sigmoid => "sigmoid",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at `x`, given `y = eval(x)`.
    pub fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => 1.0 - y * y,
            Nonlinearity::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn fixes_zero(self) -> bool {
        self.eval(0.0) == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActivationKind {
    Identity,
    Entrywise {
        func: Nonlinearity,
        zero_fixing: bool,
    },
    /// Tensor summands scaled by the sigmoid of a dedicated scalar channel.
    Gated,
    /// `inner(z + bilinear(z))`.
    BilinearResidual(Box<ActivationKind>),
}

impl ActivationKind {
    pub fn entrywise(func: Nonlinearity) -> Self {
        ActivationKind::Entrywise {
            func,
            zero_fixing: func.fixes_zero(),
        }
    }

    pub fn bilinear(inner: ActivationKind) -> Self {
        ActivationKind::BilinearResidual(Box::new(inner))
    }

    /// Number of learnable scalars; independent of the level.
    pub fn parameter_count(&self, space: &SeqExpr) -> usize {
        match self {
            ActivationKind::BilinearResidual(inner) => {
                bilinear_triples(&powers(space).unwrap_or_default()).len()
                    + inner.parameter_count(space)
            }
            _ => 0,
        }
    }

    /// Checks that the activation is defined on `space` and equivariant for `family`.
    pub fn validate(&self, space: &SeqExpr, family: GroupFamily) -> Result<()> {
        match self {
            ActivationKind::Identity => Ok(()),
            ActivationKind::Entrywise { func, zero_fixing } => {
                if *zero_fixing != func.fixes_zero() {
                    return Err(Error::InvalidSpec(format!(
                        "{} does not satisfy zero_fixing = {zero_fixing}",
                        func.name()
                    )));
                }
                if !space.contains_base() {
                    return Ok(());
                }
                if !zero_fixing {
                    return Err(Error::InvalidSpec(format!(
                        "entrywise {} does not fix zero and cannot act on the zero-padded space {space}",
                        func.name()
                    )));
                }
                let equivariant = match family {
                    GroupFamily::SymmetricSn | GroupFamily::Trivial => true,
                    GroupFamily::SignedPermBn => *func == Nonlinearity::Tanh,
                    GroupFamily::OrthogonalOn | GroupFamily::SpecialOrthogonalSOn => false,
                };
                if !equivariant {
                    return Err(Error::InvalidSpec(format!(
                        "entrywise {} is not {family}-equivariant on {space}",
                        func.name()
                    )));
                }
                Ok(())
            }
            ActivationKind::Gated => {
                let (scalars, tensors) = scalar_and_tensor_summands(space);
                if scalars.len() < tensors.len() {
                    return Err(Error::InvalidSpec(format!(
                        "gating {space} needs {} scalar channels, found {}",
                        tensors.len(),
                        scalars.len()
                    )));
                }
                Ok(())
            }
            ActivationKind::BilinearResidual(inner) => {
                if powers(space).is_none() {
                    return Err(Error::InvalidSpec(format!(
                        "bilinear layers need a sum of tensor powers, got {space}"
                    )));
                }
                inner.validate(space, family)
            }
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Identity => f.write_str("identity"),
            ActivationKind::Entrywise { func, .. } => f.write_str(func.name()),
            ActivationKind::Gated => f.write_str("gated"),
            ActivationKind::BilinearResidual(inner) => write!(f, "bilinear+{inner}"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("bilinear+") {
            return Ok(ActivationKind::bilinear(rest.parse()?));
        }
        Ok(match s {
            "identity" => ActivationKind::Identity,
            "relu" => ActivationKind::entrywise(Nonlinearity::Relu),
            "tanh" => ActivationKind::entrywise(Nonlinearity::Tanh),
            "sigmoid" => ActivationKind::entrywise(Nonlinearity::Sigmoid),
            "gated" => ActivationKind::Gated,
            other => {
                return Err(Error::InvalidSpec(format!("unknown activation `{other}`")));
            }
        })
    }
}

impl TryFrom<String> for ActivationKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ActivationKind> for String {
    fn from(a: ActivationKind) -> String {
        a.to_string()
    }
}

/// Tensor power of each top-level summand, if every summand is one.
fn powers(space: &SeqExpr) -> Option<Vec<usize>> {
    space.summands().iter().map(SeqExpr::tensor_power).collect()
}

fn scalar_and_tensor_summands(space: &SeqExpr) -> (Vec<usize>, Vec<usize>) {
    let mut scalars = Vec::new();
    let mut tensors = Vec::new();
    for (i, s) in space.summands().iter().enumerate() {
        if *s == SeqExpr::Scalar {
            scalars.push(i);
        } else {
            tensors.push(i);
        }
    }
    (scalars, tensors)
}

/// `(a, b, j)` with `k_a + k_b - 2 = k_j` and `k_a, k_b ≥ 1`, in lexicographic order.
fn bilinear_triples(powers: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (a, &ka) in powers.iter().enumerate() {
        for (b, &kb) in powers.iter().enumerate() {
            if ka == 0 || kb == 0 {
                continue;
            }
            for (j, &kj) in powers.iter().enumerate() {
                if ka + kb - 2 == kj {
                    out.push((a, b, j));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Pair {
    a_off: usize,
    b_off: usize,
    /// `n^(k_a - 1)`, `n`, `n^(k_b - 1)`.
    rows: usize,
    inner: usize,
    cols: usize,
}

/// Samples per cache tile in the contraction loops.
const TILE: usize = 128;

impl Pair {
    fn a(&self, r: usize, c: usize) -> usize {
        self.a_off + r * self.inner + c
    }

    fn b(&self, c: usize, s: usize) -> usize {
        self.b_off + c * self.cols + s
    }

    /// Batch-major contraction of every sample (rows of `zt`) into `out`.
    fn contract(&self, zt: &DMatrix<f64>, out: &mut [f64]) {
        let batch = zt.nrows();
        let mut acc = [0.0; TILE];
        for lo in (0..batch).step_by(TILE) {
            let hi = (lo + TILE).min(batch);
            let acc = &mut acc[..hi - lo];
            for r in 0..self.rows {
                for s in 0..self.cols {
                    acc.fill(0.0);
                    for c in 0..self.inner {
                        mul_add(&col(zt, self.a(r, c))[lo..hi], &col(zt, self.b(c, s))[lo..hi], acc);
                    }
                    let e = r * self.cols + s;
                    out[e * batch + lo..e * batch + hi].copy_from_slice(acc);
                }
            }
        }
    }

    /// Adds the pullback of `dp` (shaped like the output of `contract`) into `dzt`.
    fn contract_backward(&self, zt: &DMatrix<f64>, dp: &[f64], dzt: &mut DMatrix<f64>) {
        let batch = zt.nrows();
        let g = |e: usize, lo: usize, hi: usize| &dp[e * batch + lo..e * batch + hi];
        let mut acc = [0.0; TILE];
        for lo in (0..batch).step_by(TILE) {
            let hi = (lo + TILE).min(batch);
            let acc = &mut acc[..hi - lo];
            for r in 0..self.rows {
                for c in 0..self.inner {
                    acc.fill(0.0);
                    for s in 0..self.cols {
                        mul_add(g(r * self.cols + s, lo, hi), &col(zt, self.b(c, s))[lo..hi], acc);
                    }
                    axpy(1.0, acc, &mut col_mut(dzt, self.a(r, c))[lo..hi]);
                }
            }
            for c in 0..self.inner {
                for s in 0..self.cols {
                    acc.fill(0.0);
                    for r in 0..self.rows {
                        mul_add(&col(zt, self.a(r, c))[lo..hi], g(r * self.cols + s, lo, hi), acc);
                    }
                    axpy(1.0, acc, &mut col_mut(dzt, self.b(c, s))[lo..hi]);
                }
            }
        }
    }
}

/// Every pair and target sharing one output tensor power `k`. Each pair feeds each target,
/// so the coefficients form a dense `pairs x targets` matrix.
#[derive(Debug, Clone)]
struct PowerGroup {
    /// `n^k`.
    width: usize,
    pairs: Vec<Pair>,
    targets: Vec<usize>,
    /// Parameter index of `(pair p, target j)` at `p * targets.len() + j`.
    param: Vec<usize>,
}

impl PowerGroup {
    fn coefficients(&self, params: &[f64]) -> DMatrix<f64> {
        let nt = self.targets.len();
        DMatrix::from_fn(self.pairs.len(), nt, |p, j| params[self.param[p * nt + j]])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BilinearPlan {
    groups: Vec<PowerGroup>,
    count: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct GatePlan {
    scalars: Vec<usize>,
    /// `(offset, len)` of each gated summand; summand `j` uses `scalars[j]`.
    gated: Vec<(usize, usize)>,
}

/// An activation laid out for one level.
#[derive(Debug, Clone)]
pub(crate) enum Plan {
    Identity,
    Entrywise(Nonlinearity),
    Gated(GatePlan),
    Bilinear(BilinearPlan, Box<Plan>),
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ActCache {
    /// Input of the activation (transposed to batch-major for bilinear plans).
    z: DMatrix<f64>,
    /// Contractions of each bilinear power group, one column per pair.
    products: Vec<DMatrix<f64>>,
    inner: Option<Box<ActCache>>,
}

fn offsets(space: &SeqExpr, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut acc = 0;
    let mut out = Vec::new();
    for s in space.summands() {
        let d = s.dim(n)?;
        out.push((acc, d));
        acc += d;
    }
    Ok(out)
}

impl Plan {
    pub(crate) fn new(kind: &ActivationKind, space: &SeqExpr, n: usize) -> Result<Self> {
        Ok(match kind {
            ActivationKind::Identity => Plan::Identity,
            ActivationKind::Entrywise { func, .. } => Plan::Entrywise(*func),
            ActivationKind::Gated => {
                let offs = offsets(space, n)?;
                let (scalars, tensors) = scalar_and_tensor_summands(space);
                Plan::Gated(GatePlan {
                    scalars: scalars.iter().map(|&i| offs[i].0).collect(),
                    gated: tensors.iter().map(|&i| offs[i]).collect(),
                })
            }
            ActivationKind::BilinearResidual(inner) => {
                let ks = powers(space).ok_or_else(|| {
                    Error::InvalidSpec(format!("bilinear layer on {space}"))
                })?;
                let offs = offsets(space, n)?;
                let triples = bilinear_triples(&ks);
                let index: std::collections::HashMap<_, _> =
                    triples.iter().enumerate().map(|(t, &abj)| (abj, t)).collect();
                let mut groups: Vec<PowerGroup> = Vec::new();
                let top = ks.iter().copied().max().unwrap_or(0);
                for k in 0..=top {
                    let targets: Vec<usize> = (0..ks.len()).filter(|&j| ks[j] == k).collect();
                    let mut pairs = Vec::new();
                    let mut param = Vec::new();
                    for (a, &ka) in ks.iter().enumerate() {
                        for (b, &kb) in ks.iter().enumerate() {
                            if ka == 0 || kb == 0 || ka + kb - 2 != k || targets.is_empty() {
                                continue;
                            }
                            pairs.push(Pair {
                                a_off: offs[a].0,
                                b_off: offs[b].0,
                                rows: n.pow(ka as u32 - 1),
                                inner: n,
                                cols: n.pow(kb as u32 - 1),
                            });
                            param.extend(targets.iter().map(|&j| index[&(a, b, j)]));
                        }
                    }
                    if !pairs.is_empty() {
                        groups.push(PowerGroup {
                            width: n.pow(k as u32),
                            pairs,
                            targets: targets.iter().map(|&j| offs[j].0).collect(),
                            param,
                        });
                    }
                }
                Plan::Bilinear(
                    BilinearPlan {
                        groups,
                        count: triples.len(),
                    },
                    Box::new(Plan::new(inner, space, n)?),
                )
            }
        })
    }

    /// Applies the activation to every column of `z`.
    pub(crate) fn forward(&self, z: DMatrix<f64>, params: &[f64]) -> (DMatrix<f64>, ActCache) {
        match self {
            Plan::Identity => (
                z.clone(),
                ActCache {
                    z,
                    products: Vec::new(),
                    inner: None,
                },
            ),
            Plan::Entrywise(f) => (
                z.map(|v| f.eval(v)),
                ActCache {
                    z,
                    products: Vec::new(),
                    inner: None,
                },
            ),
            Plan::Gated(g) => {
                let mut y = z.clone();
                for (col, mut out) in z.column_iter().zip(y.column_iter_mut()) {
                    for (j, &(off, len)) in g.gated.iter().enumerate() {
                        let gate = sigmoid(col[g.scalars[j]]);
                        for e in off..off + len {
                            out[e] = col[e] * gate;
                        }
                    }
                    for &s in &g.scalars {
                        out[s] = col[s] * sigmoid(col[s]);
                    }
                }
                (
                    y,
                    ActCache {
                        z,
                        products: Vec::new(),
                        inner: None,
                    },
                )
            }
            Plan::Bilinear(plan, inner) => {
                // Batch-major: column `e` of `zt` holds coordinate `e` of every sample.
                let zt = z.transpose();
                let batch = zt.nrows();
                let mut ut = zt.clone();
                let mut products = Vec::with_capacity(plan.groups.len());
                for g in &plan.groups {
                    // Column p holds the batch-major contraction of pair p.
                    let mut prod = DMatrix::zeros(batch * g.width, g.pairs.len());
                    for (pi, p) in g.pairs.iter().enumerate() {
                        p.contract(&zt, col_mut(&mut prod, pi));
                    }
                    let contrib = &prod * g.coefficients(params);
                    for (j, &off) in g.targets.iter().enumerate() {
                        let dst = &mut ut.as_mut_slice()[off * batch..(off + g.width) * batch];
                        axpy(1.0, col(&contrib, j), dst);
                    }
                    products.push(prod);
                }
                let (y, inner_cache) = inner.forward(ut.transpose(), &params[plan.count..]);
                (
                    y,
                    ActCache {
                        z: zt,
                        products,
                        inner: Some(Box::new(inner_cache)),
                    },
                )
            }
        }
    }

    /// Given `dy`, returns `dz` and accumulates parameter gradients into `dparams`.
    pub(crate) fn backward(
        &self,
        cache: &ActCache,
        dy: DMatrix<f64>,
        params: &[f64],
        dparams: &mut [f64],
    ) -> DMatrix<f64> {
        let z = &cache.z;
        match self {
            Plan::Identity => dy,
            Plan::Entrywise(f) => {
                let mut dz = dy;
                for (d, &x) in dz.iter_mut().zip(z.iter()) {
                    *d *= f.deriv(x, f.eval(x));
                }
                dz
            }
            Plan::Gated(g) => {
                let mut dz = dy.clone();
                for ((col, dcol), mut dzc) in z
                    .column_iter()
                    .zip(dy.column_iter())
                    .zip(dz.column_iter_mut())
                {
                    for &s in &g.scalars {
                        let sg = sigmoid(col[s]);
                        dzc[s] = dcol[s] * (sg + col[s] * sg * (1.0 - sg));
                    }
                    for (j, &(off, len)) in g.gated.iter().enumerate() {
                        let s = g.scalars[j];
                        let sg = sigmoid(col[s]);
                        let mut dot = 0.0;
                        for e in off..off + len {
                            dzc[e] = dcol[e] * sg;
                            dot += dcol[e] * col[e];
                        }
                        dzc[s] += dot * sg * (1.0 - sg);
                    }
                }
                dz
            }
            Plan::Bilinear(plan, inner) => {
                let nt = plan.count;
                let inner_cache = cache.inner.as_ref().expect("bilinear cache");
                let du = inner.backward(inner_cache, dy, &params[nt..], &mut dparams[nt..]);
                let dut = du.transpose();
                let zt = z;
                let batch = zt.nrows();
                let mut dzt = dut.clone();
                for (g, prod) in plan.groups.iter().zip(&cache.products) {
                    let span = batch * g.width;
                    let mut dcontrib = DMatrix::zeros(span, g.targets.len());
                    for (j, &off) in g.targets.iter().enumerate() {
                        col_mut(&mut dcontrib, j)
                            .copy_from_slice(&dut.as_slice()[off * batch..off * batch + span]);
                    }
                    let dc = prod.transpose() * &dcontrib;
                    let ntg = g.targets.len();
                    for p in 0..g.pairs.len() {
                        for j in 0..ntg {
                            dparams[g.param[p * ntg + j]] += dc[(p, j)];
                        }
                    }
                    let dprod = &dcontrib * g.coefficients(params).transpose();
                    for (pi, p) in g.pairs.iter().enumerate() {
                        p.contract_backward(zt, col(&dprod, pi), &mut dzt);
                    }
                }
                dzt.transpose()
            }
        }
    }
}

fn col(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let r = m.nrows();
    &m.as_slice()[j * r..(j + 1) * r]
}

fn col_mut(m: &mut DMatrix<f64>, j: usize) -> &mut [f64] {
    let r = m.nrows();
    &mut m.as_mut_slice()[j * r..(j + 1) * r]
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += c * x;
    }
}

/// `out += x ⊙ y`.
fn mul_add(x: &[f64], y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o += a * b;
    }
}
