//! Equivariant multilayer networks parameterized by basis coefficients.

mod activation;
mod io;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compat::{compatible_bias_basis, compatible_map_basis};
use crate::conseq::SeqExpr;
use crate::eqbasis::{equivariant_map_basis, invariant_basis, BasisMode, EqBasis};
use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;
use crate::training::{LossKind, Task};

pub use activation::{sigmoid, ActivationKind, Nonlinearity};
pub use io::{NETWORK_FORMAT, NETWORK_VERSION};

use activation::{ActCache, Plan};

/// Standard deviation of the Gaussian coefficient initialization.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_expr: SeqExpr,
    pub out_expr: SeqExpr,
    pub activation: ActivationKind,
}

impl LayerSpec {
    pub fn new(in_expr: SeqExpr, out_expr: SeqExpr, activation: ActivationKind) -> Self {
        Self {
            in_expr,
            out_expr,
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub family: GroupFamily,
    pub layers: Vec<LayerSpec>,
    pub mode: BasisMode,
    pub loss: LossKind,
    /// Keep every bilinear pairing coefficient at 1 instead of learning it.
    #[serde(default)]
    pub fixed_bilinear: bool,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("a network needs at least one layer".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_expr != pair[1].in_expr {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_expr,
                    i + 1,
                    pair[1].in_expr
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.activation
                .validate(&l.out_expr, self.family)
                .map_err(|e| e.in_layer(i))?;
        }
        Ok(())
    }

    pub fn input(&self) -> &SeqExpr {
        &self.layers[0].in_expr
    }

    pub fn output(&self) -> &SeqExpr {
        &self.layers[self.layers.len() - 1].out_expr
    }

    /// Weight and bias bases of layer `i` at level `n`.
    pub fn layer_bases(&self, i: usize, n: usize) -> Result<(EqBasis, EqBasis)> {
        let l = &self.layers[i];
        let f = self.family;
        let r = match self.mode {
            BasisMode::Free => equivariant_map_basis(&l.in_expr, &l.out_expr, f, n)
                .and_then(|w| Ok((w, invariant_basis(&l.out_expr, f, n)?))),
            BasisMode::Compatible => compatible_map_basis(&l.in_expr, &l.out_expr, f, n)
                .and_then(|w| Ok((w, compatible_bias_basis(&l.out_expr, f, n)?))),
        };
        r.map_err(|e| e.in_layer(i))
    }
}

/// Coefficients of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Activation scalars (bilinear pairing coefficients).
    pub activation: Vec<f64>,
}

impl LayerParams {
    fn len(&self) -> usize {
        self.weight.len() + self.bias.len() + self.activation.len()
    }
}

/// Serializable network state at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub spec: NetworkSpec,
    pub level: usize,
    pub layers: Vec<LayerParams>,
    /// False once any layer was obtained from an underdetermined extension.
    pub unique: bool,
}

#[derive(Debug, Clone)]
struct Layer {
    weight_basis: EqBasis,
    bias_basis: EqBasis,
    plan: Plan,
    params: LayerParams,
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl Layer {
    fn materialize(&mut self) -> Result<()> {
        self.w = self.weight_basis.assemble(&self.params.weight)?;
        self.b = DVector::from_column_slice(self.bias_basis.assemble(&self.params.bias)?.as_slice());
        Ok(())
    }
}

/// Values saved by [`Network::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<DMatrix<f64>>,
    acts: Vec<ActCache>,
}

/// A network instantiated at a level, with materialized weights.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    level: usize,
    layers: Vec<Layer>,
    unique: bool,
    task: Option<Task>,
}

impl Network {
    /// Builds the network from explicit coefficients.
    pub fn new(spec: NetworkSpec, level: usize, params: Vec<LayerParams>) -> Result<Self> {
        let mut net = Self::skeleton(spec, level)?;
        if params.len() != net.layers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter sets for {} layers",
                params.len(),
                net.layers.len()
            )));
        }
        for (i, (layer, p)) in net.layers.iter_mut().zip(params).enumerate() {
            let want = (
                layer.params.weight.len(),
                layer.params.bias.len(),
                layer.params.activation.len(),
            );
            if want != (p.weight.len(), p.bias.len(), p.activation.len()) {
                return Err(Error::DimensionMismatch(format!(
                    "expected {want:?} coefficients, got ({}, {}, {})",
                    p.weight.len(),
                    p.bias.len(),
                    p.activation.len()
                ))
                .in_layer(i));
            }
            layer.params = p;
            layer.materialize()?;
        }
        Ok(net)
    }

    /// Gaussian initialization with standard deviation [`INIT_STD`].
    pub fn random(spec: NetworkSpec, level: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::skeleton(spec, level)?;
        let normal = Normal::new(0.0, INIT_STD).expect("positive deviation");
        let fixed = net.spec.fixed_bilinear;
        for layer in &mut net.layers {
            let p = &mut layer.params;
            p.weight.iter_mut().for_each(|c| *c = normal.sample(rng));
            p.bias.iter_mut().for_each(|c| *c = normal.sample(rng));
            p.activation
                .iter_mut()
                .for_each(|c| *c = if fixed { 1.0 } else { normal.sample(rng) });
            layer.materialize()?;
        }
        Ok(net)
    }

    fn skeleton(spec: NetworkSpec, level: usize) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            let (weight_basis, bias_basis) = spec.layer_bases(i, level)?;
            let plan = Plan::new(&l.activation, &l.out_expr, level).map_err(|e| e.in_layer(i))?;
            let params = LayerParams {
                weight: vec![0.0; weight_basis.len()],
                bias: vec![0.0; bias_basis.len()],
                activation: vec![1.0; l.activation.parameter_count(&l.out_expr)],
            };
            layers.push(Layer {
                w: DMatrix::zeros(weight_basis.out_dim(), weight_basis.in_dim()),
                b: DVector::zeros(bias_basis.out_dim()),
                weight_basis,
                bias_basis,
                plan,
                params,
            });
        }
        Ok(Self {
            spec,
            level,
            layers,
            unique: true,
            task: None,
        })
    }

    pub fn from_trained(t: &TrainedNetwork) -> Result<Self> {
        let mut net = Self::new(t.spec.clone(), t.level, t.layers.clone())?;
        net.unique = t.unique;
        Ok(net)
    }

    pub fn to_trained(&self) -> TrainedNetwork {
        TrainedNetwork {
            spec: self.spec.clone(),
            level: self.level,
            layers: self.layers.iter().map(|l| l.params.clone()).collect(),
            unique: self.unique,
        }
    }

    /// Labels the network with the task it was trained for.
    pub fn with_task(mut self, task: Task) -> Self {
        self.task = Some(task);
        self
    }

    pub fn task(&self) -> Option<Task> {
        self.task
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn is_unique(&self) -> bool {
        self.unique
    }

    pub(crate) fn set_unique(&mut self, unique: bool) {
        self.unique = unique;
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn weight_basis(&self, i: usize) -> &EqBasis {
        &self.layers[i].weight_basis
    }

    pub fn bias_basis(&self, i: usize) -> &EqBasis {
        &self.layers[i].bias_basis
    }

    pub fn params(&self, i: usize) -> &LayerParams {
        &self.layers[i].params
    }

    /// Materialized `(W, b)` of layer `i`.
    pub fn layer_affine(&self, i: usize) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.layers[i].w, &self.layers[i].b)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    /// Total number of coefficients, in the order of [`Network::flat_params`].
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    /// Per layer: weight, bias, then activation coefficients.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.params.weight);
            out.extend_from_slice(&l.params.bias);
            out.extend_from_slice(&l.params.activation);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a network with {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            for part in [
                &mut l.params.weight,
                &mut l.params.bias,
                &mut l.params.activation,
            ] {
                let k = part.len();
                part.copy_from_slice(&flat[at..at + k]);
                at += k;
            }
            l.materialize()?;
        }
        Ok(())
    }

    /// Which flat parameters the optimizer may move.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(std::iter::repeat_n(true, l.params.weight.len() + l.params.bias.len()));
            out.extend(std::iter::repeat_n(!self.spec.fixed_bilinear, l.params.activation.len()));
        }
        out
    }

    /// Evaluates every column of `x`.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.forward(&m)?.as_slice().to_vec())
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        if x.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} rows, level-{} input dimension is {}",
                x.nrows(),
                self.level,
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let mut z = &l.w * &cur;
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            let (y, cache) = l.plan.forward(z, &l.params.activation);
            inputs.push(cur);
            acts.push(cache);
            cur = y;
        }
        Ok((cur, ForwardCache { inputs, acts }))
    }

    /// Gradient of `Σ_columns ⟨dout, f(x)⟩` in the flat parameter layout.
    pub fn backward(&self, cache: &ForwardCache, dout: DMatrix<f64>) -> Result<Vec<f64>> {
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut d = dout;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let mut dact = vec![0.0; l.params.activation.len()];
            let dz = l
                .plan
                .backward(&cache.acts[i], d, &l.params.activation, &mut dact);
            let x = &cache.inputs[i];
            let dw = &dz * x.transpose();
            let db = DMatrix::from_iterator(dz.nrows(), 1, dz.row_iter().map(|r| r.sum()));
            let mut g = l.weight_basis.project(&dw)?;
            g.extend(l.bias_basis.project(&db)?);
            g.extend(dact);
            grads.push(g);
            if i > 0 {
                d = l.w.transpose() * &dz;
            } else {
                d = DMatrix::zeros(0, 0);
            }
        }
        Ok(grads.into_iter().rev().flatten().collect())
    }
}

#[cfg(test)]
mod tests;
