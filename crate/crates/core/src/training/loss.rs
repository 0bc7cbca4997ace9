use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    /// `1 - ⟨ŷ, y⟩² / (‖ŷ‖² ‖y‖²)`; blind to the sign of either argument.
    SquaredSine,
}

impl LossKind {
    pub fn value(self, yhat: &[f64], y: &[f64]) -> f64 {
        self.value_and_grad(yhat, y, None)
    }

    /// Loss value; writes `∂ℓ/∂ŷ` into `grad` when given.
    pub fn value_and_grad(self, yhat: &[f64], y: &[f64], grad: Option<&mut [f64]>) -> f64 {
        debug_assert_eq!(yhat.len(), y.len());
        match self {
            LossKind::Mse => {
                let m = y.len() as f64;
                if let Some(g) = grad {
                    for ((g, a), b) in g.iter_mut().zip(yhat).zip(y) {
                        *g = 2.0 * (a - b) / m;
                    }
                }
                yhat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m
            }
            LossKind::SquaredSine => {
                let a: f64 = yhat.iter().map(|v| v * v).sum();
                let b: f64 = y.iter().map(|v| v * v).sum();
                let s: f64 = yhat.iter().zip(y).map(|(p, q)| p * q).sum();
                if a == 0.0 || b == 0.0 {
                    if let Some(g) = grad {
                        g.iter_mut().for_each(|v| *v = 0.0);
                    }
                    return 1.0;
                }
                if let Some(g) = grad {
                    let k = -2.0 * s / (a * b);
                    for ((g, p), q) in g.iter_mut().zip(yhat).zip(y) {
                        *g = k * (q - s * p / a);
                    }
                }
                1.0 - s * s / (a * b)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_sine_examples() {
        let y = [0.3, -1.0, 2.0];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!(LossKind::SquaredSine.value(&y, &y).abs() < 1e-15);
        assert!(LossKind::SquaredSine.value(&neg, &y).abs() < 1e-15);
        assert_eq!(LossKind::SquaredSine.value(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(LossKind::SquaredSine.value(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn mse_is_mean_square() {
        assert_eq!(LossKind::Mse.value(&[1.0, 3.0], &[0.0, 1.0]), 2.5);
    }

    #[test]
    fn gradients_match_differences() {
        let yhat = [0.4, -0.7, 1.3];
        let y = [1.0, 0.2, -0.5];
        for kind in [LossKind::Mse, LossKind::SquaredSine] {
            let mut g = [0.0; 3];
            kind.value_and_grad(&yhat, &y, Some(&mut g));
            for i in 0..3 {
                let h = 1e-6;
                let (mut up, mut dn) = (yhat, yhat);
                up[i] += h;
                dn[i] -= h;
                let fd = (kind.value(&up, &y) - kind.value(&dn, &y)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-8, "{kind:?} {i}");
            }
        }
    }
}
