//! Consistent sequences built from the trivial sequence `S = {ℝ}` and the base sequence
//! `V = {ℝⁿ}` by direct sums and tensor products.

mod degrees;
mod ops;
mod parse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;

pub use degrees::{degrees, Degrees};
pub use ops::{action, action_monomial, embed, embed_indices, lie_action, project};

/// Largest level dimension we are willing to instantiate.
pub const MAX_LEVEL_DIM: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SeqExpr {
    Scalar,
    Base,
    Sum(Vec<SeqExpr>),
    Tensor(Vec<SeqExpr>),
}

impl SeqExpr {
    /// Direct sum with nested sums flattened; a single summand is returned as is.
    pub fn sum(items: impl IntoIterator<Item = SeqExpr>) -> SeqExpr {
        let mut flat = Vec::new();
        for item in items {
            match item {
                SeqExpr::Sum(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            1 => flat.pop().expect("one item"),
            _ => SeqExpr::Sum(flat),
        }
    }

    /// Tensor product with nested products flattened and scalar factors dropped.
    pub fn tensor(items: impl IntoIterator<Item = SeqExpr>) -> SeqExpr {
        let mut flat = Vec::new();
        for item in items {
            match item {
                SeqExpr::Tensor(inner) => flat.extend(inner),
                SeqExpr::Scalar => {}
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => SeqExpr::Scalar,
            1 => flat.pop().expect("one item"),
            _ => SeqExpr::Tensor(flat),
        }
    }

    /// `V^{⊗k}`, with `V^0 = S`.
    pub fn power(k: usize) -> SeqExpr {
        SeqExpr::tensor(std::iter::repeat_n(SeqExpr::Base, k))
    }

    /// `m` copies of `expr` summed.
    pub fn multiple(m: usize, expr: SeqExpr) -> SeqExpr {
        SeqExpr::sum(std::iter::repeat_n(expr, m))
    }

    /// `Σ_k counts[k] · V^k`.
    pub fn from_counts(counts: &[usize]) -> SeqExpr {
        SeqExpr::sum(
            counts
                .iter()
                .enumerate()
                .flat_map(|(k, &m)| std::iter::repeat_n(SeqExpr::power(k), m)),
        )
    }

    /// Top-level summands (the expression itself if it is not a sum).
    pub fn summands(&self) -> &[SeqExpr] {
        match self {
            SeqExpr::Sum(items) => items,
            other => std::slice::from_ref(other),
        }
    }

    /// `Some(k)` if the expression is exactly `V^k` (`S` counts as `k = 0`).
    pub fn tensor_power(&self) -> Option<usize> {
        match self {
            SeqExpr::Scalar => Some(0),
            SeqExpr::Base => Some(1),
            SeqExpr::Tensor(fs) if fs.iter().all(|f| *f == SeqExpr::Base) => Some(fs.len()),
            _ => None,
        }
    }

    pub fn contains_base(&self) -> bool {
        match self {
            SeqExpr::Scalar => false,
            SeqExpr::Base => true,
            SeqExpr::Sum(items) | SeqExpr::Tensor(items) => items.iter().any(Self::contains_base),
        }
    }

    /// Dimension at level `n`, refusing anything above [`MAX_LEVEL_DIM`].
    pub fn dim(&self, n: usize) -> Result<usize> {
        let d = self.dim_u128(n);
        if d > MAX_LEVEL_DIM {
            return Err(Error::SizeCap {
                requested: d,
                cap: MAX_LEVEL_DIM,
            });
        }
        Ok(d as usize)
    }

    fn dim_u128(&self, n: usize) -> u128 {
        match self {
            SeqExpr::Scalar => 1,
            SeqExpr::Base => n as u128,
            SeqExpr::Sum(items) => items
                .iter()
                .fold(0u128, |acc, e| acc.saturating_add(e.dim_u128(n))),
            SeqExpr::Tensor(items) => items
                .iter()
                .fold(1u128, |acc, e| acc.saturating_mul(e.dim_u128(n))),
        }
    }
}

impl fmt::Display for SeqExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqExpr::Sum(items) => {
                let mut i = 0;
                let mut first = true;
                while i < items.len() {
                    let mut run = 1;
                    while i + run < items.len() && items[i + run] == items[i] {
                        run += 1;
                    }
                    if !first {
                        f.write_str(" + ")?;
                    }
                    first = false;
                    if run > 1 {
                        write!(f, "{run}*")?;
                    }
                    write!(f, "{}", items[i])?;
                    i += run;
                }
                Ok(())
            }
            other => write_product(other, f),
        }
    }
}

fn write_product(expr: &SeqExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if let Some(k) = expr.tensor_power() {
        return match k {
            0 => f.write_str("S"),
            1 => f.write_str("V"),
            k => write!(f, "V^{k}"),
        };
    }
    match expr {
        SeqExpr::Tensor(factors) => {
            // Group maximal runs of bare V factors back into powers.
            let mut i = 0;
            let mut first = true;
            while i < factors.len() {
                if !first {
                    f.write_str(" (x) ")?;
                }
                first = false;
                if factors[i] == SeqExpr::Base {
                    let mut run = 1;
                    while i + run < factors.len() && factors[i + run] == SeqExpr::Base {
                        run += 1;
                    }
                    write_product(&SeqExpr::power(run), f)?;
                    i += run;
                } else {
                    match &factors[i] {
                        SeqExpr::Sum(_) => write!(f, "({})", factors[i])?,
                        other => write_product(other, f)?,
                    }
                    i += 1;
                }
            }
            Ok(())
        }
        SeqExpr::Sum(_) => write!(f, "({expr})"),
        _ => unreachable!("scalar and base are tensor powers"),
    }
}

impl FromStr for SeqExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse::parse(s)
    }
}

impl TryFrom<String> for SeqExpr {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SeqExpr> for String {
    fn from(e: SeqExpr) -> String {
        e.to_string()
    }
}

/// A sequence instantiated at one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSpace {
    pub expr: SeqExpr,
    pub family: GroupFamily,
    pub level: usize,
    pub dim: usize,
}

impl LevelSpace {
    pub fn new(expr: SeqExpr, family: GroupFamily, level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidArgument("levels start at 1".into()));
        }
        let dim = expr.dim(level)?;
        Ok(Self {
            expr,
            family,
            level,
            dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(SeqExpr::Base.dim(4).unwrap(), 4);
        assert_eq!(SeqExpr::power(3).dim(3).unwrap(), 27);
        let hidden: SeqExpr = "25*S + 10*V + 2*V^2 + V^3".parse().unwrap();
        assert_eq!(hidden.dim(3).unwrap(), 100);
        assert!(SeqExpr::power(8).dim(10).is_err());
    }

    #[test]
    fn constructors_flatten() {
        let t = SeqExpr::tensor([SeqExpr::power(2), SeqExpr::Scalar, SeqExpr::Base]);
        assert_eq!(t, SeqExpr::power(3));
        let s = SeqExpr::sum([
            SeqExpr::Base,
            SeqExpr::sum([SeqExpr::Scalar, SeqExpr::Base]),
        ]);
        assert_eq!(s.summands().len(), 3);
        assert_eq!(SeqExpr::sum([SeqExpr::Base]), SeqExpr::Base);
        assert_eq!(SeqExpr::tensor([]), SeqExpr::Scalar);
        assert_eq!(SeqExpr::power(0), SeqExpr::Scalar);
    }

    #[test]
    fn display_groups_runs() {
        let e = SeqExpr::from_counts(&[25, 10, 2, 1]);
        assert_eq!(e.to_string(), "25*S + 10*V + 2*V^2 + V^3");
        let mixed = SeqExpr::tensor([
            SeqExpr::Base,
            SeqExpr::sum([SeqExpr::Scalar, SeqExpr::Base]),
        ]);
        assert_eq!(mixed.to_string(), "V (x) (S + V)");
        assert_eq!(mixed.to_string().parse::<SeqExpr>().unwrap(), mixed);
    }

    #[test]
    fn serde_uses_the_text_grammar() {
        let e: SeqExpr = serde_json::from_str("\"2*V + V^2\"").unwrap();
        assert_eq!(e, SeqExpr::from_counts(&[0, 2, 1]));
        assert_eq!(serde_json::to_string(&e).unwrap(), "\"2*V + V^2\"");
    }
}
