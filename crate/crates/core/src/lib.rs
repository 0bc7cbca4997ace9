pub mod compat;
pub mod conseq;
pub mod eqbasis;
pub mod error;
pub mod expcli;
pub mod groupseq;
pub mod linalg;
pub mod netcore;
pub mod training;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
