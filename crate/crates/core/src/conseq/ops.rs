use super::SeqExpr;
use crate::error::{Error, Result};
use crate::linalg::{kron, SignedPerm, SparseOperator};

/// `ρ(g)` on the level-`n` space, where `n` is the size of `g`.
pub fn action(expr: &SeqExpr, g: &SparseOperator) -> Result<SparseOperator> {
    if g.rows() != g.cols() {
        return Err(Error::DimensionMismatch("group element must be square".into()));
    }
    match expr {
        SeqExpr::Scalar => Ok(SparseOperator::identity(1)),
        SeqExpr::Base => Ok(g.clone()),
        SeqExpr::Sum(items) => {
            let blocks = items
                .iter()
                .map(|e| action(e, g))
                .collect::<Result<Vec<_>>>()?;
            Ok(SparseOperator::block_diag(&blocks))
        }
        SeqExpr::Tensor(items) => {
            let mut acc = SparseOperator::identity(1);
            for e in items {
                acc = kron(&acc, &action(e, g)?)?;
            }
            Ok(acc)
        }
    }
}

/// `ρ(g)` for a signed permutation `g`, which stays a signed permutation.
pub fn action_monomial(expr: &SeqExpr, g: &SignedPerm) -> SignedPerm {
    match expr {
        SeqExpr::Scalar => SignedPerm::identity(1),
        SeqExpr::Base => g.clone(),
        SeqExpr::Sum(items) => SignedPerm::block_diag(
            &items
                .iter()
                .map(|e| action_monomial(e, g))
                .collect::<Vec<_>>(),
        ),
        SeqExpr::Tensor(items) => items
            .iter()
            .fold(SignedPerm::identity(1), |acc, e| acc.kron(&action_monomial(e, g))),
    }
}

/// Infinitesimal action `dρ(a)`, by the Leibniz rule on tensor factors.
pub fn lie_action(expr: &SeqExpr, a: &SparseOperator) -> Result<SparseOperator> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch("Lie algebra element must be square".into()));
    }
    let n = a.rows();
    match expr {
        SeqExpr::Scalar => Ok(SparseOperator::zeros(1, 1)),
        SeqExpr::Base => Ok(a.clone()),
        SeqExpr::Sum(items) => {
            let blocks = items
                .iter()
                .map(|e| lie_action(e, a))
                .collect::<Result<Vec<_>>>()?;
            Ok(SparseOperator::block_diag(&blocks))
        }
        SeqExpr::Tensor(items) => {
            let dims = items
                .iter()
                .map(|e| e.dim(n))
                .collect::<Result<Vec<_>>>()?;
            let total = expr.dim(n)?;
            let mut acc = SparseOperator::zeros(total, total);
            for (i, e) in items.iter().enumerate() {
                let left: usize = dims[..i].iter().product();
                let right: usize = dims[i + 1..].iter().product();
                acc = acc.add(&lie_action(e, a)?.sandwich_identity(left, right))?;
            }
            Ok(acc)
        }
    }
}

/// Position of each level-`lo` coordinate inside the level-`hi` layout under zero padding.
pub fn embed_indices(expr: &SeqExpr, lo: usize, hi: usize) -> Result<Vec<usize>> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "cannot embed level {lo} into level {hi}"
        )));
    }
    match expr {
        SeqExpr::Scalar => Ok(vec![0]),
        SeqExpr::Base => Ok((0..lo).collect()),
        SeqExpr::Sum(items) => {
            let mut out = Vec::with_capacity(expr.dim(lo)?);
            let mut offset = 0;
            for e in items {
                out.extend(embed_indices(e, lo, hi)?.into_iter().map(|i| i + offset));
                offset += e.dim(hi)?;
            }
            Ok(out)
        }
        SeqExpr::Tensor(items) => {
            let mut out = vec![0usize];
            for e in items {
                let inner = embed_indices(e, lo, hi)?;
                let d = e.dim(hi)?;
                out = out
                    .iter()
                    .flat_map(|&a| inner.iter().map(move |&b| a * d + b))
                    .collect();
            }
            Ok(out)
        }
    }
}

/// The isometric embedding from level `n` into level `n + 1`.
pub fn embed(expr: &SeqExpr, n: usize) -> Result<SparseOperator> {
    let idx = embed_indices(expr, n, n + 1)?;
    Ok(SparseOperator::selection(&idx, expr.dim(n + 1)?)?.transpose())
}

/// Orthogonal projection from level `hi` onto the image of level `lo`.
pub fn project(expr: &SeqExpr, hi: usize, lo: usize) -> Result<SparseOperator> {
    let idx = embed_indices(expr, lo, hi)?;
    SparseOperator::selection(&idx, expr.dim(hi)?)
}
