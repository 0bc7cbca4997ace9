//! Orthonormal bases of invariant vectors and equivariant linear maps at a fixed level.
//!
//! A map `W : V → U` is stored as `vec(W)` with column stacking, which coincides with the
//! row-major layout of `V ⊗ U`. Equivariant maps are then exactly the invariants of
//! `V ⊗ U`, and the problem splits into independent blocks, one per pair of top-level
//! summands of `V` and `U`.

mod cache;
mod io;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conseq::{action_monomial, lie_action, SeqExpr};
use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;
use crate::linalg::{ConstraintSystem, SparseVec};

pub use cache::{BasisCache, BlockBasis};
pub use io::{BASIS_FORMAT, BASIS_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BasisKind {
    Invariant { space: SeqExpr },
    MapSpace { input: SeqExpr, output: SeqExpr },
}

impl BasisKind {
    pub fn input(&self) -> SeqExpr {
        match self {
            BasisKind::Invariant { .. } => SeqExpr::Scalar,
            BasisKind::MapSpace { input, .. } => input.clone(),
        }
    }

    pub fn output(&self) -> &SeqExpr {
        match self {
            BasisKind::Invariant { space } => space,
            BasisKind::MapSpace { output, .. } => output,
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Invariant { space } => write!(f, "invariants of {space}"),
            BasisKind::MapSpace { input, output } => write!(f, "maps {input} -> {output}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    Free,
    Compatible,
}

impl fmt::Display for BasisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisMode::Free => "free",
            BasisMode::Compatible => "compatible",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BasisOptions {
    /// Relative singular-value threshold for the numerical part of the solve.
    pub tol: Option<f64>,
}

impl BasisOptions {
    pub(crate) fn key(&self) -> String {
        match self.tol {
            Some(t) => format!("{t:e}"),
            None => "auto".into(),
        }
    }
}

/// One `(input summand, output summand)` block of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisBlock {
    pub in_summand: usize,
    pub out_summand: usize,
    pub in_offset: usize,
    pub out_offset: usize,
    pub coeff_offset: usize,
    pub basis: Arc<BlockBasis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqBasis {
    level: usize,
    family: GroupFamily,
    kind: BasisKind,
    mode: BasisMode,
    in_dim: usize,
    out_dim: usize,
    blocks: Vec<BasisBlock>,
    len: usize,
}

/// Orthonormal basis of the `G(n)`-invariants of `space` that vanish on `zeros`.
///
/// Signed-permutation symmetries are resolved exactly on index orbits. For the rotation
/// groups the signed-permutation subgroup already conjugates one Lie algebra element onto
/// every other (up to sign), so a single infinitesimal constraint completes the system.
pub fn solve_invariants(
    space: &SeqExpr,
    family: GroupFamily,
    n: usize,
    zeros: &[usize],
    opts: &BasisOptions,
) -> Result<Vec<SparseVec>> {
    if n == 0 {
        return Err(Error::InvalidArgument("levels start at 1".into()));
    }
    let dim = space.dim(n)?;
    let mut sys = ConstraintSystem::new(dim);
    for g in family.symmetry_generators(n) {
        sys.add_symmetry(action_monomial(space, &g))?;
    }
    if let Some(a) = family.lie_algebra_basis(n).first() {
        sys.add_operator(lie_action(space, a)?)?;
    }
    sys.add_zero_coords(zeros.iter().copied())?;
    if let Some(t) = opts.tol {
        sys.set_tolerance(t);
    }
    sys.solve()
}

pub fn invariant_basis(expr: &SeqExpr, family: GroupFamily, n: usize) -> Result<EqBasis> {
    invariant_basis_with(expr, family, n, &BasisOptions::default())
}

pub fn invariant_basis_with(
    expr: &SeqExpr,
    family: GroupFamily,
    n: usize,
    opts: &BasisOptions,
) -> Result<EqBasis> {
    let kind = BasisKind::Invariant { space: expr.clone() };
    EqBasis::from_blocks(n, family, kind, BasisMode::Free, |a, b| {
        free_block(a, b, family, n, opts)
    })
}

pub fn equivariant_map_basis(
    input: &SeqExpr,
    output: &SeqExpr,
    family: GroupFamily,
    n: usize,
) -> Result<EqBasis> {
    equivariant_map_basis_with(input, output, family, n, &BasisOptions::default())
}

pub fn equivariant_map_basis_with(
    input: &SeqExpr,
    output: &SeqExpr,
    family: GroupFamily,
    n: usize,
    opts: &BasisOptions,
) -> Result<EqBasis> {
    let kind = BasisKind::MapSpace {
        input: input.clone(),
        output: output.clone(),
    };
    EqBasis::from_blocks(n, family, kind, BasisMode::Free, |a, b| {
        free_block(a, b, family, n, opts)
    })
}

fn free_block(
    a: &SeqExpr,
    b: &SeqExpr,
    family: GroupFamily,
    n: usize,
    opts: &BasisOptions,
) -> Result<Arc<BlockBasis>> {
    let key = format!("{family}|{n}|free|{a}|{b}|{}", opts.key());
    BasisCache::global().get_or_compute(&key, || {
        let space = SeqExpr::tensor([a.clone(), b.clone()]);
        Ok(BlockBasis {
            in_dim: a.dim(n)?,
            out_dim: b.dim(n)?,
            vectors: solve_invariants(&space, family, n, &[], opts)?,
        })
    })
}

impl EqBasis {
    /// Assembles a basis from per-block solutions, input summands outermost.
    pub(crate) fn from_blocks(
        level: usize,
        family: GroupFamily,
        kind: BasisKind,
        mode: BasisMode,
        mut block: impl FnMut(&SeqExpr, &SeqExpr) -> Result<Arc<BlockBasis>>,
    ) -> Result<Self> {
        let input = kind.input();
        let output = kind.output().clone();
        let in_dim = input.dim(level)?;
        let out_dim = output.dim(level)?;
        let mut blocks = Vec::new();
        let mut len = 0;
        let mut in_offset = 0;
        for (ai, a) in input.summands().iter().enumerate() {
            let mut out_offset = 0;
            for (bi, b) in output.summands().iter().enumerate() {
                let basis = block(a, b)?;
                let count = basis.vectors.len();
                blocks.push(BasisBlock {
                    in_summand: ai,
                    out_summand: bi,
                    in_offset,
                    out_offset,
                    coeff_offset: len,
                    basis,
                });
                len += count;
                out_offset += b.dim(level)?;
            }
            in_offset += a.dim(level)?;
        }
        Ok(Self {
            level,
            family,
            kind,
            mode,
            in_dim,
            out_dim,
            blocks,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn family(&self) -> GroupFamily {
        self.family
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Length of the vectors: `in_dim * out_dim` (just `out_dim` for invariants).
    pub fn ambient_dim(&self) -> usize {
        self.in_dim * self.out_dim
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    fn locate(&self, k: usize) -> Option<(&BasisBlock, &SparseVec)> {
        self.blocks
            .iter()
            .rev()
            .find(|b| b.coeff_offset <= k)
            .and_then(|b| b.basis.vectors.get(k - b.coeff_offset).map(|v| (b, v)))
    }

    /// The `k`-th basis vector in the global `vec(W)` layout.
    pub fn vector(&self, k: usize) -> Option<SparseVec> {
        let (block, v) = self.locate(k)?;
        let bo = block.basis.out_dim;
        let mut entries: Vec<(usize, f64)> = v
            .iter()
            .map(|(p, x)| {
                let (j, i) = (p / bo, p % bo);
                ((block.in_offset + j) * self.out_dim + block.out_offset + i, x)
            })
            .collect();
        entries.sort_by_key(|e| e.0);
        Some(SparseVec {
            idx: entries.iter().map(|e| e.0).collect(),
            val: entries.iter().map(|e| e.1).collect(),
        })
    }

    pub fn dense_vectors(&self) -> Vec<DVector<f64>> {
        (0..self.len)
            .map(|k| {
                DVector::from_vec(
                    self.vector(k)
                        .expect("index below len")
                        .to_dense(self.ambient_dim()),
                )
            })
            .collect()
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a basis of size {}",
                coeffs.len(),
                self.len
            )));
        }
        Ok(())
    }

    /// `Σ_k coeffs[k] · B_k` as an `out_dim x in_dim` matrix.
    pub fn assemble(&self, coeffs: &[f64]) -> Result<DMatrix<f64>> {
        self.check_coeffs(coeffs)?;
        let mut w = DMatrix::zeros(self.out_dim, self.in_dim);
        for block in &self.blocks {
            let bo = block.basis.out_dim;
            for (t, v) in block.basis.vectors.iter().enumerate() {
                let c = coeffs[block.coeff_offset + t];
                if c == 0.0 {
                    continue;
                }
                for (p, x) in v.iter() {
                    w[(block.out_offset + p % bo, block.in_offset + p / bo)] += c * x;
                }
            }
        }
        Ok(w)
    }

    /// Inner products `⟨B_k, m⟩`, i.e. coordinates of the orthogonal projection of `m`.
    pub fn project(&self, m: &DMatrix<f64>) -> Result<Vec<f64>> {
        if m.nrows() != self.out_dim || m.ncols() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected a {}x{} matrix, got {}x{}",
                self.out_dim,
                self.in_dim,
                m.nrows(),
                m.ncols()
            )));
        }
        let mut out = vec![0.0; self.len];
        for block in &self.blocks {
            let bo = block.basis.out_dim;
            for (t, v) in block.basis.vectors.iter().enumerate() {
                out[block.coeff_offset + t] = v
                    .iter()
                    .map(|(p, x)| x * m[(block.out_offset + p % bo, block.in_offset + p / bo)])
                    .sum();
            }
        }
        Ok(out)
    }

    /// Coordinates of `m` in the basis together with the distance from `m` to the span.
    pub fn coefficients(&self, m: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
        let c = self.project(m)?;
        let residual = (m - self.assemble(&c)?).norm();
        Ok((c, residual))
    }

    /// SHA-256 over the level, family, kind, mode and every stored entry.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(
            format!(
                "{}|{}|{}|{}|{}x{}",
                self.level, self.family, self.kind, self.mode, self.out_dim, self.in_dim
            )
            .as_bytes(),
        );
        for block in &self.blocks {
            h.update((block.in_offset as u64).to_le_bytes());
            h.update((block.out_offset as u64).to_le_bytes());
            for v in &block.basis.vectors {
                h.update((v.idx.len() as u64).to_le_bytes());
                for (p, x) in v.iter() {
                    h.update((p as u64).to_le_bytes());
                    h.update(x.to_bits().to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests;
