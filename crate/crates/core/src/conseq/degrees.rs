use serde::{Deserialize, Serialize};

use super::SeqExpr;
use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;

/// Generation and presentation degree of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degrees {
    pub generation: usize,
    pub presentation: usize,
    /// Set when the presentation degree is taken equal to the generation degree
    /// without a proof covering this shape of expression.
    pub assumed: bool,
}

/// Degrees from the tensor-power table: `V^k` is generated and presented in degree
/// `max(k, 1)`, sums take the maximum, products distribute over sums.
///
/// Products of pure powers collapse to a single power and are exact; a product with a sum
/// factor is expanded and its presentation degree is flagged as assumed.
pub fn degrees(expr: &SeqExpr, family: GroupFamily) -> Result<Degrees> {
    if family == GroupFamily::Trivial && expr.contains_base() {
        return Err(Error::DegreesUnavailable(expr.to_string()));
    }
    let k = max_power(expr).max(1);
    Ok(Degrees {
        generation: k,
        presentation: k,
        assumed: has_mixed_product(expr),
    })
}

fn max_power(expr: &SeqExpr) -> usize {
    match expr {
        SeqExpr::Scalar => 0,
        SeqExpr::Base => 1,
        SeqExpr::Sum(items) => items.iter().map(max_power).max().unwrap_or(0),
        SeqExpr::Tensor(items) => items.iter().map(max_power).sum(),
    }
}

fn has_mixed_product(expr: &SeqExpr) -> bool {
    match expr {
        SeqExpr::Scalar | SeqExpr::Base => false,
        SeqExpr::Sum(items) => items.iter().any(has_mixed_product),
        SeqExpr::Tensor(items) => items.iter().any(|f| matches!(f, SeqExpr::Sum(_))),
    }
}
