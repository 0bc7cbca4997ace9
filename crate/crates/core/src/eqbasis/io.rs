use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BasisBlock, BasisKind, BasisMode, BlockBasis, EqBasis};
use crate::error::{Error, Result};
use crate::groupseq::GroupFamily;

pub const BASIS_FORMAT: &str = "anydim-basis";
pub const BASIS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BlockFile {
    in_summand: usize,
    out_summand: usize,
    in_offset: usize,
    out_offset: usize,
    basis: BlockBasis,
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    format: String,
    version: u32,
    level: usize,
    family: GroupFamily,
    kind: BasisKind,
    mode: BasisMode,
    in_dim: usize,
    out_dim: usize,
    checksum: String,
    blocks: Vec<BlockFile>,
}

impl EqBasis {
    pub fn to_json(&self) -> Result<String> {
        let file = BasisFile {
            format: BASIS_FORMAT.into(),
            version: BASIS_VERSION,
            level: self.level,
            family: self.family,
            kind: self.kind.clone(),
            mode: self.mode,
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            checksum: self.checksum(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockFile {
                    in_summand: b.in_summand,
                    out_summand: b.out_summand,
                    in_offset: b.in_offset,
                    out_offset: b.out_offset,
                    basis: (*b.basis).clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BasisFile = serde_json::from_str(text)?;
        if file.format != BASIS_FORMAT || file.version != BASIS_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported basis file {} v{}",
                file.format, file.version
            )));
        }
        let mut blocks = Vec::with_capacity(file.blocks.len());
        let mut len = 0;
        for b in file.blocks {
            let count = b.basis.vectors.len();
            blocks.push(BasisBlock {
                in_summand: b.in_summand,
                out_summand: b.out_summand,
                in_offset: b.in_offset,
                out_offset: b.out_offset,
                coeff_offset: len,
                basis: Arc::new(b.basis),
            });
            len += count;
        }
        let basis = EqBasis {
            level: file.level,
            family: file.family,
            kind: file.kind,
            mode: file.mode,
            in_dim: file.in_dim,
            out_dim: file.out_dim,
            blocks,
            len,
        };
        if basis.checksum() != file.checksum {
            return Err(Error::InvalidConfig("basis file checksum mismatch".into()));
        }
        Ok(basis)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
