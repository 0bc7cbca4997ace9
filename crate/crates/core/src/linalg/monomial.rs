use crate::error::{Error, Result};
use crate::linalg::SparseOperator;

/// Signed permutation matrix: column `i` is `sign[i] * e_{image[i]}`.
///
/// Every discrete generator used in this crate (permutations, sign flips, their tensor and
/// direct-sum actions) has this form, which lets invariant computations run on index orbits
/// instead of dense linear algebra.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedPerm {
    image: Vec<usize>,
    negative: Vec<bool>,
}

impl SignedPerm {
    pub fn identity(n: usize) -> Self {
        Self {
            image: (0..n).collect(),
            negative: vec![false; n],
        }
    }

    pub fn new(image: Vec<usize>, negative: Vec<bool>) -> Result<Self> {
        if image.len() != negative.len() {
            return Err(Error::DimensionMismatch(
                "image and sign vectors differ in length".into(),
            ));
        }
        let mut seen = vec![false; image.len()];
        for &i in &image {
            if i >= image.len() || seen[i] {
                return Err(Error::InvalidArgument(
                    "image is not a permutation".into(),
                ));
            }
            seen[i] = true;
        }
        Ok(Self { image, negative })
    }

    pub fn from_permutation(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        Self::new(image, vec![false; n])
    }

    /// Recognizes a sparse operator as a signed permutation, if it is one.
    pub fn from_sparse(op: &SparseOperator) -> Option<Self> {
        if op.rows() != op.cols() {
            return None;
        }
        let n = op.cols();
        let mut image = vec![usize::MAX; n];
        let mut negative = vec![false; n];
        for (r, c, v) in op.entries() {
            if image[c] != usize::MAX || (v != 1.0 && v != -1.0) {
                return None;
            }
            image[c] = r;
            negative[c] = v < 0.0;
        }
        if image.contains(&usize::MAX) {
            return None;
        }
        Self::new(image, negative).ok()
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn image(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn sign(&self, i: usize) -> f64 {
        if self.negative[i] {
            -1.0
        } else {
            1.0
        }
    }

    pub fn is_negative(&self, i: usize) -> bool {
        self.negative[i]
    }

    pub fn to_sparse(&self) -> SparseOperator {
        let n = self.len();
        let triplets = (0..n).map(|i| (self.image[i], i, self.sign(i))).collect();
        SparseOperator::from_triplets(n, n, triplets).expect("indices in range")
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (i, &xi) in x.iter().enumerate() {
            out[self.image[i]] = self.sign(i) * xi;
        }
        out
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &SignedPerm) -> Self {
        let image = other.image.iter().map(|&j| self.image[j]).collect();
        let negative = (0..other.len())
            .map(|i| other.negative[i] ^ self.negative[other.image[i]])
            .collect();
        Self { image, negative }
    }

    pub fn inverse(&self) -> Self {
        let n = self.len();
        let mut image = vec![0; n];
        let mut negative = vec![false; n];
        for i in 0..n {
            image[self.image[i]] = i;
            negative[self.image[i]] = self.negative[i];
        }
        Self { image, negative }
    }

    /// Determinant: sign of the permutation times the product of signs.
    pub fn determinant(&self) -> f64 {
        let n = self.len();
        let mut visited = vec![false; n];
        let mut parity = self.negative.iter().filter(|&&s| s).count() % 2;
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !visited[i] {
                visited[i] = true;
                i = self.image[i];
                len += 1;
            }
            parity += len - 1;
        }
        if parity % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Kronecker product `self ⊗ other` in row-major index order.
    pub fn kron(&self, other: &SignedPerm) -> Self {
        let m = other.len();
        let mut image = Vec::with_capacity(self.len() * m);
        let mut negative = Vec::with_capacity(self.len() * m);
        for i in 0..self.len() {
            for k in 0..m {
                image.push(self.image[i] * m + other.image[k]);
                negative.push(self.negative[i] ^ other.negative[k]);
            }
        }
        Self { image, negative }
    }

    pub fn block_diag(blocks: &[SignedPerm]) -> Self {
        let mut image = Vec::new();
        let mut negative = Vec::new();
        let mut offset = 0;
        for b in blocks {
            image.extend(b.image.iter().map(|&i| i + offset));
            negative.extend_from_slice(&b.negative);
            offset += b.len();
        }
        Self { image, negative }
    }
}
