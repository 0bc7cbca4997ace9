use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::SparseVec;

/// Orthonormal basis of the equivariant maps between one input summand and one output
/// summand. Vectors use the block-local layout `j * out_dim + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockBasis {
    pub in_dim: usize,
    pub out_dim: usize,
    pub vectors: Vec<SparseVec>,
}

/// Process-wide store of block bases keyed by a canonical description of the problem.
#[derive(Debug, Default)]
pub struct BasisCache {
    blocks: RwLock<HashMap<String, Arc<BlockBasis>>>,
}

impl BasisCache {
    pub fn global() -> &'static BasisCache {
        static CACHE: OnceLock<BasisCache> = OnceLock::new();
        CACHE.get_or_init(BasisCache::default)
    }

    pub fn get(&self, key: &str) -> Option<Arc<BlockBasis>> {
        self.blocks.read().expect("cache lock").get(key).cloned()
    }

    /// Returns the cached block or computes it without holding the lock, so distinct keys
    /// can be solved concurrently. A racing duplicate computation keeps the first result.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<BlockBasis>,
    ) -> Result<Arc<BlockBasis>> {
        if let Some(hit) = self.get(key) {
            return Ok(hit);
        }
        let fresh = Arc::new(compute()?);
        let mut map = self.blocks.write().expect("cache lock");
        Ok(map.entry(key.to_string()).or_insert(fresh).clone())
    }

    pub fn len(&self) -> usize {
        self.blocks.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.blocks.write().expect("cache lock").clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn computes_once_per_key() {
        let cache = BasisCache::default();
        let make = || {
            Ok(BlockBasis {
                in_dim: 1,
                out_dim: 1,
                vectors: vec![SparseVec { idx: vec![0], val: vec![1.0] }],
            })
        };
        let a = cache.get_or_compute("k", make).unwrap();
        let b = cache
            .get_or_compute("k", || panic!("second computation"))
            .unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
        cache.clear();
        assert!(cache.is_empty());
    }
}
