//! Compatible bases and moving layer parameters between levels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conseq::{action_monomial, degrees, embed_indices, lie_action, Degrees, SeqExpr};
use crate::eqbasis::{
    equivariant_map_basis_with, invariant_basis_with, solve_invariants, BasisCache, BasisKind,
    BasisMode, BasisOptions, BlockBasis, EqBasis,
};
use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;
use crate::netcore::{LayerParams, Network};
use crate::linalg::{lstsq_with, SparseOperator, DEFAULT_LSQR_MAX_ITER};

/// Relative residual allowed when the extension problem has a unique solution.
pub const DETERMINED_RESIDUAL_TOL: f64 = 1e-8;
/// Relative residual allowed for a source weight that should lie in its basis span.
pub const SPAN_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionOptions {
    pub basis: BasisOptions,
    /// Degrees of the input sequence, for families where they cannot be looked up.
    pub input_degrees: Option<Degrees>,
    pub output_degrees: Option<Degrees>,
    /// Solve over raw `vec(W)` instead of basis coefficients (slow; for cross-checks).
    pub raw_vec: bool,
    pub lstsq_tol: f64,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        Self {
            basis: BasisOptions::default(),
            input_degrees: None,
            output_degrees: None,
            raw_vec: false,
            lstsq_tol: 1e-12,
        }
    }
}

/// Result of moving one parameter (weight or bias) to another level.
#[derive(Debug, Clone)]
pub struct Transfer {
    pub basis: EqBasis,
    pub coeffs: Vec<f64>,
    /// Distance between the prescribed and the achieved entries.
    pub residual: f64,
    /// False when the problem had more than one solution and the minimum-norm one was taken.
    pub unique: bool,
}

impl Transfer {
    pub fn materialize(&self) -> Result<DMatrix<f64>> {
        self.basis.assemble(&self.coeffs)
    }
}

fn lookup_degrees(expr: &SeqExpr, family: GroupFamily, given: Option<Degrees>) -> Result<Degrees> {
    match given {
        Some(d) => Ok(d),
        None => degrees(expr, family),
    }
}

pub fn compatible_map_basis(
    input: &SeqExpr,
    output: &SeqExpr,
    family: GroupFamily,
    n0: usize,
) -> Result<EqBasis> {
    compatible_map_basis_with(input, output, family, n0, None, &BasisOptions::default())
}

/// Equivariant maps `W` at level `n0` with `W(V(m)) ⊆ U(m)` for every `m` up to the
/// generation degree of `V`, where `V(m)` sits inside `V(n0)` by zero padding.
pub fn compatible_map_basis_with(
    input: &SeqExpr,
    output: &SeqExpr,
    family: GroupFamily,
    n0: usize,
    input_degrees: Option<Degrees>,
    opts: &BasisOptions,
) -> Result<EqBasis> {
    let d = lookup_degrees(input, family, input_degrees)?;
    if n0 < d.presentation {
        return Err(Error::BelowPresentationDegree {
            level: n0,
            required: d.presentation,
        });
    }
    let top = d.generation.min(n0.saturating_sub(1));
    let kind = BasisKind::MapSpace {
        input: input.clone(),
        output: output.clone(),
    };
    EqBasis::from_blocks(n0, family, kind, BasisMode::Compatible, |a, b| {
        let key = format!("{family}|{n0}|compatible<={top}|{a}|{b}|{}", opts.key());
        BasisCache::global().get_or_compute(&key, || {
            let (da, db) = (a.dim(n0)?, b.dim(n0)?);
            let mut zero = vec![false; da * db];
            for m in 1..=top {
                let mut in_u = vec![false; db];
                for i in embed_indices(b, m, n0)? {
                    in_u[i] = true;
                }
                for j in embed_indices(a, m, n0)? {
                    for (i, &inside) in in_u.iter().enumerate() {
                        if !inside {
                            zero[j * db + i] = true;
                        }
                    }
                }
            }
            let zeros: Vec<usize> = (0..zero.len()).filter(|&p| zero[p]).collect();
            let space = SeqExpr::tensor([a.clone(), b.clone()]);
            Ok(BlockBasis {
                in_dim: da,
                out_dim: db,
                vectors: solve_invariants(&space, family, n0, &zeros, opts)?,
            })
        })
    })
}

pub fn compatible_bias_basis(output: &SeqExpr, family: GroupFamily, n0: usize) -> Result<EqBasis> {
    compatible_bias_basis_with(output, family, n0, &BasisOptions::default())
}

/// Invariant biases `b` at level `n0` whose zero padding stays invariant one level up and
/// which live in the level-one part of the space (the scalar input is generated in degree
/// one).
pub fn compatible_bias_basis_with(
    output: &SeqExpr,
    family: GroupFamily,
    n0: usize,
    opts: &BasisOptions,
) -> Result<EqBasis> {
    if n0 == 0 {
        return Err(Error::InvalidArgument("levels start at 1".into()));
    }
    let kind = BasisKind::Invariant {
        space: output.clone(),
    };
    EqBasis::from_blocks(n0, family, kind, BasisMode::Compatible, |_, b| {
        let key = format!("{family}|{n0}|compatible-bias|{b}|{}", opts.key());
        BasisCache::global().get_or_compute(&key, || {
            let up = n0 + 1;
            let mut keep = vec![false; b.dim(up)?];
            for p in embed_indices(b, 1, up)? {
                keep[p] = true;
            }
            let zeros: Vec<usize> = (0..keep.len()).filter(|&p| !keep[p]).collect();
            let solved = solve_invariants(b, family, up, &zeros, opts)?;
            let mut down = vec![usize::MAX; keep.len()];
            for (lo, hi) in embed_indices(b, n0, up)?.into_iter().enumerate() {
                down[hi] = lo;
            }
            let vectors = solved
                .into_iter()
                .map(|mut v| {
                    v.idx.iter_mut().for_each(|p| *p = down[*p]);
                    v
                })
                .collect();
            Ok(BlockBasis {
                in_dim: 1,
                out_dim: b.dim(n0)?,
                vectors,
            })
        })
    })
}

/// The basis of the same kind and mode as `like`, at level `n`.
pub fn basis_at_level(like: &EqBasis, n: usize, opts: &ExtensionOptions) -> Result<EqBasis> {
    let family = like.family();
    match (like.kind(), like.mode()) {
        (BasisKind::Invariant { space }, BasisMode::Free) => {
            invariant_basis_with(space, family, n, &opts.basis)
        }
        (BasisKind::MapSpace { input, output }, BasisMode::Free) => {
            equivariant_map_basis_with(input, output, family, n, &opts.basis)
        }
        (BasisKind::Invariant { space }, BasisMode::Compatible) => {
            compatible_bias_basis_with(space, family, n, &opts.basis)
        }
        (BasisKind::MapSpace { input, output }, BasisMode::Compatible) => {
            compatible_map_basis_with(input, output, family, n, opts.input_degrees, &opts.basis)
        }
    }
}

/// Whether matching at level `n0` pins down the extension uniquely.
pub fn extension_is_determined(basis: &EqBasis, n0: usize, opts: &ExtensionOptions) -> bool {
    let family = basis.family();
    let input = basis.kind().input();
    let output = basis.kind().output();
    let pres = |e: &SeqExpr, given: Option<Degrees>| {
        lookup_degrees(e, family, given).map(|d| d.presentation).ok()
    };
    match basis.mode() {
        BasisMode::Free => {
            let space = SeqExpr::tensor([input, output.clone()]);
            let given = if basis.kind().input() == SeqExpr::Scalar {
                opts.output_degrees
            } else {
                None
            };
            pres(&space, given).is_some_and(|p| n0 >= p)
        }
        BasisMode::Compatible => {
            let in_ok = basis.kind().input() == SeqExpr::Scalar
                || pres(&input, opts.input_degrees).is_some_and(|p| n0 >= p);
            in_ok && pres(output, opts.output_degrees).is_some_and(|p| n0 >= p)
        }
    }
}

/// Extends a parameter given by its coefficients in `src` to level `n > src.level()`.
pub fn extend_coefficients(
    src: &EqBasis,
    coeffs: &[f64],
    n: usize,
    opts: &ExtensionOptions,
) -> Result<Transfer> {
    let w0 = src.assemble(coeffs)?;
    extend_from(src, &w0, n, opts)
}

/// Extends a materialized weight (or bias column) from level `src.level()` to level `n`.
pub fn extend_map(
    src: &EqBasis,
    w0: &DMatrix<f64>,
    n: usize,
    opts: &ExtensionOptions,
) -> Result<Transfer> {
    let (_, residual) = src.coefficients(w0)?;
    let scale = w0.norm().max(f64::MIN_POSITIVE);
    if residual > SPAN_RESIDUAL_TOL * scale {
        return Err(Error::InvalidArgument(format!(
            "source parameter is not in the span of its basis (relative residual {:.3e})",
            residual / scale
        )));
    }
    extend_from(src, w0, n, opts)
}

fn extend_from(src: &EqBasis, w0: &DMatrix<f64>, n: usize, opts: &ExtensionOptions) -> Result<Transfer> {
    let n0 = src.level();
    if n < n0 {
        return restrict_coefficients(src, w0, n, opts);
    }
    let target = basis_at_level(src, n, opts)?;
    if n == n0 {
        let (coeffs, residual) = target.coefficients(w0)?;
        return Ok(Transfer {
            basis: target,
            coeffs,
            residual,
            unique: true,
        });
    }
    let determined = extension_is_determined(src, n0, opts);
    let compatible = src.mode() == BasisMode::Compatible;
    let (coeffs, residual) = if opts.raw_vec {
        solve_raw(&target, w0, n0, compatible, opts)?
    } else {
        solve_blocks(&target, w0, n0, compatible, opts)?
    };
    let scale = w0.norm();
    if determined && residual > DETERMINED_RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::ExtensionInconsistency {
            residual,
            tolerance: DETERMINED_RESIDUAL_TOL * scale,
            context: format!("{} from level {n0} to {n}", src.kind()),
        });
    }
    Ok(Transfer {
        basis: target,
        coeffs,
        residual,
        unique: determined,
    })
}

/// Per-block least squares in coefficient space.
fn solve_blocks(
    target: &EqBasis,
    w0: &DMatrix<f64>,
    n0: usize,
    compatible: bool,
    opts: &ExtensionOptions,
) -> Result<(Vec<f64>, f64)> {
    let n = target.level();
    let input = target.kind().input();
    let output = target.kind().output().clone();
    let (ins, outs) = (input.summands(), output.summands());
    // Offsets of each summand at the source level.
    let offsets = |items: &[SeqExpr]| -> Result<Vec<usize>> {
        let mut acc = 0;
        let mut out = Vec::with_capacity(items.len());
        for e in items {
            out.push(acc);
            acc += e.dim(n0)?;
        }
        Ok(out)
    };
    let (in_off0, out_off0) = (offsets(ins)?, offsets(outs)?);

    let mut coeffs = vec![0.0; target.len()];
    let mut residual_sq = 0.0;
    for block in target.blocks() {
        let (a, b) = (&ins[block.in_summand], &outs[block.out_summand]);
        let img_a = embed_indices(a, n0, n)?;
        let img_b = embed_indices(b, n0, n)?;
        let db = block.basis.out_dim;
        // Rows of the matching system: (level-n position in the block, prescribed value).
        let mut rows: Vec<(usize, f64)> = Vec::new();
        let source = |j0: usize, i0: usize| w0[(out_off0[block.out_summand] + i0, in_off0[block.in_summand] + j0)];
        if compatible {
            let mut src_row = vec![usize::MAX; db];
            for (i0, &i) in img_b.iter().enumerate() {
                src_row[i] = i0;
            }
            for (j0, &j) in img_a.iter().enumerate() {
                for (i, &i0) in src_row.iter().enumerate() {
                    let value = if i0 == usize::MAX { 0.0 } else { source(j0, i0) };
                    rows.push((j * db + i, value));
                }
            }
        } else {
            for (j0, &j) in img_a.iter().enumerate() {
                for (i0, &i) in img_b.iter().enumerate() {
                    rows.push((j * db + i, source(j0, i0)));
                }
            }
        }
        let vectors = &block.basis.vectors;
        let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        if vectors.is_empty() {
            residual_sq += rhs.iter().map(|v| v * v).sum::<f64>();
            continue;
        }
        let mut row_of = vec![usize::MAX; block.basis.in_dim * db];
        for (r, &(p, _)) in rows.iter().enumerate() {
            row_of[p] = r;
        }
        let mut triplets = Vec::new();
        for (t, v) in vectors.iter().enumerate() {
            for (p, x) in v.iter() {
                if row_of[p] != usize::MAX {
                    triplets.push((row_of[p], t, x));
                }
            }
        }
        let m = SparseOperator::from_triplets(rows.len(), vectors.len(), triplets)?;
        let sol = lstsq_with(&m, &rhs, opts.lstsq_tol, DEFAULT_LSQR_MAX_ITER)?;
        let fitted = m.mul_vec(&sol.x)?;
        residual_sq += fitted
            .iter()
            .zip(&rhs)
            .map(|(f, r)| (f - r).powi(2))
            .sum::<f64>();
        coeffs[block.coeff_offset..block.coeff_offset + vectors.len()].copy_from_slice(&sol.x);
    }
    Ok((coeffs, residual_sq.sqrt()))
}

/// Minimum-norm `vec(W)` satisfying every equivariance constraint and the matching
/// equations, found by LSQR over the raw stacked system.
fn solve_raw(
    target: &EqBasis,
    w0: &DMatrix<f64>,
    n0: usize,
    compatible: bool,
    opts: &ExtensionOptions,
) -> Result<(Vec<f64>, f64)> {
    let n = target.level();
    let family = target.family();
    let input = target.kind().input();
    let output = target.kind().output().clone();
    let (din, dout) = (input.dim(n)?, output.dim(n)?);
    let space = SeqExpr::tensor([input.clone(), output.clone()]);
    let dim = din * dout;

    let mut blocks = Vec::new();
    for g in family.symmetry_generators(n) {
        blocks.push(
            action_monomial(&space, &g)
                .to_sparse()
                .sub(&SparseOperator::identity(dim))?,
        );
    }
    for a in family.lie_algebra_basis(n) {
        blocks.push(lie_action(&space, &a)?);
    }
    let img_in = embed_indices(&input, n0, n)?;
    let img_out = embed_indices(&output, n0, n)?;
    let mut pick = Vec::new();
    let mut rhs_match = Vec::new();
    if compatible {
        let mut src_row = vec![usize::MAX; dout];
        for (i0, &i) in img_out.iter().enumerate() {
            src_row[i] = i0;
        }
        for (j0, &j) in img_in.iter().enumerate() {
            for (i, &i0) in src_row.iter().enumerate() {
                pick.push(j * dout + i);
                rhs_match.push(if i0 == usize::MAX { 0.0 } else { w0[(i0, j0)] });
            }
        }
    } else {
        for (j0, &j) in img_in.iter().enumerate() {
            for (i0, &i) in img_out.iter().enumerate() {
                pick.push(j * dout + i);
                rhs_match.push(w0[(i0, j0)]);
            }
        }
    }
    if compatible {
        // The compatibility constraints of the target level are part of the system too.
        let reference = compatible_zero_rows(&target, opts)?;
        blocks.push(SparseOperator::selection(&reference, dim)?);
    }
    let constraint_rows: usize = blocks.iter().map(SparseOperator::rows).sum();
    blocks.push(SparseOperator::selection(&pick, dim)?);
    let system = SparseOperator::vstack(&blocks)?;
    let mut rhs = vec![0.0; constraint_rows];
    rhs.extend_from_slice(&rhs_match);
    let sol = lstsq_with(&system, &rhs, opts.lstsq_tol, DEFAULT_LSQR_MAX_ITER)?;
    let w = DMatrix::from_column_slice(dout, din, &sol.x);
    let (coeffs, _) = target.coefficients(&w)?;
    let fitted = target.assemble(&coeffs)?;
    let residual = pick
        .iter()
        .zip(&rhs_match)
        .map(|(&p, r)| (fitted[(p % dout, p / dout)] - r).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((coeffs, residual))
}

/// Coordinates of `vec(W)` forced to zero by the compatibility constraints of `basis`.
fn compatible_zero_rows(basis: &EqBasis, opts: &ExtensionOptions) -> Result<Vec<usize>> {
    let n = basis.level();
    let input = basis.kind().input();
    let output = basis.kind().output();
    let dout = output.dim(n)?;
    let top = match basis.kind() {
        BasisKind::Invariant { .. } => 1,
        BasisKind::MapSpace { .. } => lookup_degrees(&input, basis.family(), opts.input_degrees)?
            .generation
            .min(n.saturating_sub(1)),
    };
    let mut zero = vec![false; input.dim(n)? * dout];
    for m in 1..=top {
        let mut in_u = vec![false; dout];
        for i in embed_indices(output, m, n)? {
            in_u[i] = true;
        }
        for j in embed_indices(&input, m, n)? {
            for (i, &inside) in in_u.iter().enumerate() {
                if !inside {
                    zero[j * dout + i] = true;
                }
            }
        }
    }
    Ok((0..zero.len()).filter(|&p| zero[p]).collect())
}

/// `W(n) = P_U W(n0) φ_V`: the block of `W(n0)` acting between the level-`n` subspaces.
pub fn restrict_map(kind: &BasisKind, w0: &DMatrix<f64>, n0: usize, n: usize) -> Result<DMatrix<f64>> {
    let input = kind.input();
    let rows = embed_indices(kind.output(), n, n0)?;
    let cols = embed_indices(&input, n, n0)?;
    if w0.nrows() != kind.output().dim(n0)? || w0.ncols() != input.dim(n0)? {
        return Err(Error::DimensionMismatch(format!(
            "weight is {}x{}, expected the level-{n0} shape",
            w0.nrows(),
            w0.ncols()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |r, c| w0[(rows[r], cols[c])]))
}

/// Restriction followed by projection onto the level-`n` basis of the same kind and mode.
pub fn restrict_coefficients(
    src: &EqBasis,
    w0: &DMatrix<f64>,
    n: usize,
    opts: &ExtensionOptions,
) -> Result<Transfer> {
    let w = restrict_map(src.kind(), w0, src.level(), n)?;
    let basis = basis_at_level(src, n, opts)?;
    let (coeffs, residual) = basis.coefficients(&w)?;
    Ok(Transfer {
        basis,
        coeffs,
        residual,
        unique: true,
    })
}

/// Moves every weight and bias of `net` to level `n`; activation scalars carry over as is.
pub fn extend_network(net: &Network, n: usize, opts: &ExtensionOptions) -> Result<Network> {
    let mut params = Vec::with_capacity(net.num_layers());
    let mut unique = net.is_unique();
    for i in 0..net.num_layers() {
        let p = net.params(i);
        let w = extend_coefficients(net.weight_basis(i), &p.weight, n, opts).map_err(|e| e.in_layer(i))?;
        let b = extend_coefficients(net.bias_basis(i), &p.bias, n, opts).map_err(|e| e.in_layer(i))?;
        unique &= w.unique && b.unique;
        params.push(LayerParams {
            weight: w.coeffs,
            bias: b.coeffs,
            activation: p.activation.clone(),
        });
    }
    let mut out = Network::new(net.spec().clone(), n, params)?;
    out.set_unique(unique);
    Ok(match net.task() {
        Some(t) => out.with_task(t),
        None => out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uniqueness {
    Unique,
    NonUnique,
}

impl From<bool> for Uniqueness {
    fn from(unique: bool) -> Self {
        if unique {
            Uniqueness::Unique
        } else {
            Uniqueness::NonUnique
        }
    }
}

#[cfg(test)]
mod tests;
