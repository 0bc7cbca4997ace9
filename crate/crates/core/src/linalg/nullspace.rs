use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{SignedPerm, SparseOperator, SparseVec};

/// Constraint matrices up to this many virtual entries are reduced densely in one go.
pub const DENSE_NULLSPACE_CAP: u128 = 4_000_000;

/// Above the dense cap, rows are streamed through a block QR as long as the triangular
/// factor (`cols x cols`) stays below this column count.
pub const MAX_STREAMED_COLS: usize = 2048;

const CHUNK_ROWS: usize = 512;

/// Default relative singular-value threshold `max(rows, cols) * eps`.
pub fn default_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Upper-triangular factor of a tall matrix supplied row by row.
struct StreamingQr {
    cols: usize,
    r: DMatrix<f64>,
    chunk: Vec<f64>,
    chunk_rows: usize,
    rows_seen: usize,
}

impl StreamingQr {
    fn new(cols: usize) -> Self {
        Self {
            cols,
            r: DMatrix::zeros(0, cols),
            chunk: Vec::with_capacity(CHUNK_ROWS.max(cols) * cols),
            chunk_rows: 0,
            rows_seen: 0,
        }
    }

    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols);
        self.rows_seen += 1;
        if row.iter().all(|&v| v == 0.0) {
            return;
        }
        self.chunk.extend_from_slice(row);
        self.chunk_rows += 1;
        if self.chunk_rows >= CHUNK_ROWS.max(self.cols) {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.chunk_rows == 0 {
            return;
        }
        let block = DMatrix::from_row_slice(self.chunk_rows, self.cols, &self.chunk);
        let stacked = if self.r.nrows() == 0 {
            block
        } else {
            let mut s = DMatrix::zeros(self.r.nrows() + self.chunk_rows, self.cols);
            s.rows_mut(0, self.r.nrows()).copy_from(&self.r);
            s.rows_mut(self.r.nrows(), self.chunk_rows).copy_from(&block);
            s
        };
        self.r = if stacked.nrows() > self.cols {
            stacked.qr().r()
        } else {
            stacked
        };
        self.chunk.clear();
        self.chunk_rows = 0;
    }

    /// Square factor padded with zero rows; shares its right singular vectors with the input.
    fn finish(mut self) -> (DMatrix<f64>, usize) {
        self.flush();
        let n = self.cols;
        let mut square = DMatrix::zeros(n, n);
        let k = self.r.nrows().min(n);
        square.rows_mut(0, k).copy_from(&self.r.rows(0, k));
        (square, self.rows_seen)
    }
}

/// Right singular vectors of a square matrix whose singular values are at most `threshold`,
/// where `threshold = rel_tol * scale` (and `scale` defaults to the largest singular value).
fn small_singular_subspace(square: DMatrix<f64>, rel_tol: f64, scale: Option<f64>) -> DMatrix<f64> {
    let n = square.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if square.iter().all(|&v| v == 0.0) {
        return DMatrix::identity(n, n);
    }
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let threshold = rel_tol * scale.unwrap_or(sigma_max);
    let keep: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= threshold)
        .collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        for j in 0..n {
            out[(j, k)] = v_t[(i, j)];
        }
    }
    out
}

fn sign_normalize(v: &mut [f64]) {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * peak) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Orthonormal basis of `{x : ‖c·x‖ ≤ tol·‖c‖·‖x‖}` computed from the singular values of `c`.
///
/// Small operators are densified directly; tall operators with few columns are reduced by a
/// streamed block QR so that only the `cols x cols` triangular factor is ever held densely.
pub fn nullspace_orthonormal(c: &SparseOperator, tol: Option<f64>) -> Result<Vec<DVector<f64>>> {
    let cols = c.cols();
    if cols == 0 {
        return Err(Error::InvalidArgument(
            "nullspace requires at least one column".into(),
        ));
    }
    if c.virtual_size() > DENSE_NULLSPACE_CAP && cols > MAX_STREAMED_COLS {
        return Err(Error::SizeCap {
            requested: c.virtual_size(),
            cap: DENSE_NULLSPACE_CAP,
        });
    }
    let rel_tol = tol.unwrap_or_else(|| default_tolerance(c.rows(), cols));
    let mut qr = StreamingQr::new(cols);
    let mut row = vec![0.0; cols];
    for r in 0..c.rows() {
        row.iter_mut().for_each(|v| *v = 0.0);
        let (idx, vals) = c.row(r);
        for (&j, &v) in idx.iter().zip(vals) {
            row[j] = v;
        }
        qr.push_row(&row);
    }
    let (square, _) = qr.finish();
    let basis = small_singular_subspace(square, rel_tol, None);
    Ok(basis
        .column_iter()
        .map(|col| {
            let mut v: Vec<f64> = col.iter().copied().collect();
            sign_normalize(&mut v);
            DVector::from_vec(v)
        })
        .collect())
}

/// Cheap upper bound on the spectral norm: `sqrt(‖c‖₁ · ‖c‖∞)`.
fn norm_bound(c: &SparseOperator) -> f64 {
    let mut col_sums = vec![0.0; c.cols()];
    let mut max_row = 0.0f64;
    for r in 0..c.rows() {
        let (idx, vals) = c.row(r);
        let mut s = 0.0;
        for (&j, &v) in idx.iter().zip(vals) {
            s += v.abs();
            col_sums[j] += v.abs();
        }
        max_row = max_row.max(s);
    }
    let max_col = col_sums.iter().fold(0.0f64, |m, &v| m.max(v));
    (max_row * max_col).sqrt()
}

/// Union-find over coordinates tracking the relative sign between each node and its parent.
struct SignedUnionFind {
    parent: Vec<usize>,
    flip: Vec<bool>,
    dead: Vec<bool>,
}

impl SignedUnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            flip: vec![false; n],
            dead: vec![false; n],
        }
    }

    /// Root of `i` and whether `x_i = -x_root`.
    fn find(&mut self, i: usize) -> (usize, bool) {
        let mut path = Vec::new();
        let mut node = i;
        while self.parent[node] != node {
            path.push(node);
            node = self.parent[node];
        }
        let root = node;
        // Walk back from the node nearest the root, accumulating parities.
        let mut acc = false;
        for &p in path.iter().rev() {
            acc ^= self.flip[p];
            self.flip[p] = acc;
            self.parent[p] = root;
        }
        (root, if path.is_empty() { false } else { self.flip[i] })
    }

    /// Imposes `x_j = (-1)^negate · x_i`.
    fn union(&mut self, i: usize, j: usize, negate: bool) {
        let (ri, pi) = self.find(i);
        let (rj, pj) = self.find(j);
        let rel = negate ^ pi ^ pj;
        if ri == rj {
            if rel {
                self.dead[ri] = true;
            }
            return;
        }
        let (keep, attach) = if ri < rj { (ri, rj) } else { (rj, ri) };
        self.parent[attach] = keep;
        self.flip[attach] = rel;
        self.dead[keep] |= self.dead[attach];
    }
}

/// Linear constraints on a vector space, split by structure.
///
/// * symmetries `g` impose `g·x = x` and are signed permutations, so their joint fixed space
///   is spanned by signed indicator vectors of index orbits (computed exactly);
/// * operators `c` impose `c·x = 0` and are reduced numerically on the orbit subspace;
/// * zero coordinates impose `x_k = 0`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    dim: usize,
    symmetries: Vec<SignedPerm>,
    operators: Vec<SparseOperator>,
    zero_coords: Vec<usize>,
    tol: Option<f64>,
}

impl ConstraintSystem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            symmetries: Vec::new(),
            operators: Vec::new(),
            zero_coords: Vec::new(),
            tol: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_symmetry(&mut self, g: SignedPerm) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "symmetry acts on {} coordinates, system has {}",
                g.len(),
                self.dim
            )));
        }
        self.symmetries.push(g);
        Ok(())
    }

    pub fn add_operator(&mut self, c: SparseOperator) -> Result<()> {
        if c.cols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} columns, system has {}",
                c.cols(),
                self.dim
            )));
        }
        self.operators.push(c);
        Ok(())
    }

    pub fn add_zero_coords(&mut self, coords: impl IntoIterator<Item = usize>) -> Result<()> {
        for k in coords {
            if k >= self.dim {
                return Err(Error::InvalidArgument(format!(
                    "coordinate {k} out of range for dimension {}",
                    self.dim
                )));
            }
            self.zero_coords.push(k);
        }
        Ok(())
    }

    pub fn set_tolerance(&mut self, tol: f64) {
        self.tol = Some(tol);
    }

    /// Largest violation of any constraint by `x`, relative to `‖x‖` (and `‖c‖` for operators).
    pub fn residual(&self, x: &[f64]) -> f64 {
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for g in &self.symmetries {
            let gx = g.apply(x);
            let d = gx.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(d / xn);
        }
        for c in &self.operators {
            let cx = c.mul_vec(x).expect("dimension checked on insert");
            let d = cx.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(d / (xn * norm_bound(c).max(f64::MIN_POSITIVE)));
        }
        for &k in &self.zero_coords {
            worst = worst.max(x[k].abs() / xn);
        }
        worst
    }

    /// Orthonormal basis of the solution space, as sparse vectors in a deterministic order.
    pub fn solve(&self) -> Result<Vec<SparseVec>> {
        let n = self.dim;
        let mut uf = SignedUnionFind::new(n);
        for g in &self.symmetries {
            for i in 0..n {
                uf.union(i, g.image(i), g.is_negative(i));
            }
        }
        for &k in &self.zero_coords {
            let (root, _) = uf.find(k);
            uf.dead[root] = true;
        }

        // Orbit components in order of their smallest coordinate.
        let mut comp_of_root = vec![usize::MAX; n];
        let mut comp_of = vec![usize::MAX; n];
        let mut coord_sign = vec![1.0; n];
        let mut sizes: Vec<usize> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let (root, flip) = uf.find(i);
            if uf.dead[root] {
                continue;
            }
            if comp_of_root[root] == usize::MAX {
                comp_of_root[root] = sizes.len();
                sizes.push(0);
                members.push(Vec::new());
            }
            let c = comp_of_root[root];
            comp_of[i] = c;
            coord_sign[i] = if flip { -1.0 } else { 1.0 };
            sizes[c] += 1;
            members[c].push(i);
        }
        // Orient each component so its first coordinate is positive.
        for m in &members {
            if coord_sign[m[0]] < 0.0 {
                for &i in m {
                    coord_sign[i] = -coord_sign[i];
                }
            }
        }
        let ncomp = sizes.len();
        let scale: Vec<f64> = sizes.iter().map(|&s| 1.0 / (s as f64).sqrt()).collect();

        if self.operators.is_empty() {
            return Ok(members
                .iter()
                .enumerate()
                .map(|(c, m)| SparseVec {
                    idx: m.clone(),
                    val: m.iter().map(|&i| coord_sign[i] * scale[c]).collect(),
                })
                .collect());
        }

        // Coefficients of the current solution basis in the orbit basis (ncomp x r).
        let mut z = DMatrix::<f64>::identity(ncomp, ncomp);
        for c in &self.operators {
            let r = z.ncols();
            if r == 0 {
                break;
            }
            let rel_tol = self
                .tol
                .unwrap_or_else(|| default_tolerance(c.rows(), n));
            let cnorm = norm_bound(c);
            let mut qr = StreamingQr::new(r);
            let mut acc: Vec<(usize, f64)> = Vec::new();
            let mut row = vec![0.0; r];
            for rr in 0..c.rows() {
                acc.clear();
                let (idx, vals) = c.row(rr);
                for (&j, &v) in idx.iter().zip(vals) {
                    let comp = comp_of[j];
                    if comp != usize::MAX {
                        acc.push((comp, v * coord_sign[j] * scale[comp]));
                    }
                }
                if acc.is_empty() {
                    continue;
                }
                row.iter_mut().for_each(|v| *v = 0.0);
                for &(comp, w) in &acc {
                    let zr = z.row(comp);
                    for (t, zv) in zr.iter().enumerate() {
                        row[t] += w * zv;
                    }
                }
                qr.push_row(&row);
            }
            let (square, _) = qr.finish();
            let keep = small_singular_subspace(square, rel_tol, Some(cnorm));
            z = &z * keep;
        }

        let mut out = Vec::with_capacity(z.ncols());
        for t in 0..z.ncols() {
            let mut idx = Vec::new();
            let mut val = Vec::new();
            for i in 0..n {
                let c = comp_of[i];
                if c == usize::MAX {
                    continue;
                }
                let v = coord_sign[i] * scale[c] * z[(c, t)];
                if v != 0.0 {
                    idx.push(i);
                    val.push(v);
                }
            }
            sign_normalize(&mut val);
            out.push(SparseVec { idx, val });
        }
        Ok(out)
    }
}
