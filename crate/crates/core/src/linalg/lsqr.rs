use crate::error::{Error, Result};
use crate::linalg::SparseOperator;

pub const DEFAULT_LSQR_TOL: f64 = 1e-12;
pub const DEFAULT_LSQR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone)]
pub struct LstsqOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖a·x − b‖`.
    pub residual: f64,
    /// `‖aᵀ(a·x − b)‖`.
    pub normal_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scale_in_place(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Minimum-norm least-squares solution of `a·x ≈ b` by LSQR (Golub–Kahan bidiagonalization).
///
/// Started from `x = 0`, the iterates stay in the row space of `a`, so the limit is the
/// minimum-norm minimizer. `a` is only touched through products with it and its transpose.
pub fn min_norm_lstsq(a: &SparseOperator, b: &[f64], tol: Option<f64>) -> Result<Vec<f64>> {
    lstsq_with(a, b, tol.unwrap_or(DEFAULT_LSQR_TOL), DEFAULT_LSQR_MAX_ITER).map(|o| o.x)
}

pub fn lstsq_with(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<LstsqOutcome> {
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator has {} rows, right-hand side has {}",
            a.rows(),
            b.len()
        )));
    }
    let n = a.cols();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 || n == 0 {
        return Ok(LstsqOutcome {
            x,
            iterations: 0,
            residual: bnorm,
            normal_residual: 0.0,
        });
    }

    let mut u = b.to_vec();
    let mut beta = bnorm;
    scale_in_place(&mut u, 1.0 / beta);
    let mut v = a.tr_mul_vec(&u)?;
    let mut alpha = norm(&v);
    if alpha == 0.0 {
        // b is orthogonal to the range of a.
        return Ok(LstsqOutcome {
            x,
            iterations: 0,
            residual: bnorm,
            normal_residual: 0.0,
        });
    }
    scale_in_place(&mut v, 1.0 / alpha);
    let mut w = v.clone();
    let mut phi_bar = beta;
    let mut rho_bar = alpha;
    // Frobenius norm estimate of a accumulated over the bidiagonal entries.
    let mut anorm_sq = 0.0;

    for it in 1..=max_iter {
        // Bidiagonalization step.
        let av = a.mul_vec(&v)?;
        for (ui, avi) in u.iter_mut().zip(&av) {
            *ui = avi - alpha * *ui;
        }
        beta = norm(&u);
        if beta > 0.0 {
            scale_in_place(&mut u, 1.0 / beta);
        }
        anorm_sq += alpha * alpha + beta * beta;
        let atu = a.tr_mul_vec(&u)?;
        for (vi, ai) in v.iter_mut().zip(&atu) {
            *vi = ai - beta * *vi;
        }
        alpha = norm(&v);
        if alpha > 0.0 {
            scale_in_place(&mut v, 1.0 / alpha);
        }

        // Plane rotation eliminating the subdiagonal beta.
        let rho = (rho_bar * rho_bar + beta * beta).sqrt();
        let c = rho_bar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rho_bar = -c * alpha;
        let phi = c * phi_bar;
        phi_bar *= s;

        let t1 = phi / rho;
        let t2 = -theta / rho;
        for i in 0..n {
            x[i] += t1 * w[i];
            w[i] = v[i] + t2 * w[i];
        }

        let rnorm = phi_bar;
        let arnorm = phi_bar * alpha * c.abs();
        let anorm = anorm_sq.sqrt();
        let xnorm = norm(&x);
        let compatible = rnorm <= tol * bnorm + tol * anorm * xnorm;
        let least_squares = anorm * rnorm > 0.0 && arnorm <= tol * anorm * rnorm;
        if compatible || least_squares || alpha == 0.0 || beta == 0.0 && rnorm == 0.0 {
            let r: Vec<f64> = a
                .mul_vec(&x)?
                .iter()
                .zip(b)
                .map(|(ax, bi)| ax - bi)
                .collect();
            let normal_residual = norm(&a.tr_mul_vec(&r)?);
            return Ok(LstsqOutcome {
                x,
                iterations: it,
                residual: norm(&r),
                normal_residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: phi_bar,
    })
}
