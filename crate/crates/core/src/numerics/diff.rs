use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Default central-difference step for 64-bit floats.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient `(f(w + eps·e_i) − f(w − eps·e_i)) / (2·eps)`.
pub fn finite_diff_grad<F>(f: F, w: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::param("eps", "step must be positive"));
    }
    let mut probe = w.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        probe[i] = w[i] + eps;
        let plus = f(&probe);
        probe[i] = w[i] - eps;
        let minus = f(&probe);
        probe[i] = w[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite around coordinate {i}"
            )));
        }
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_grad(|_| 3.5, &[1.0, -2.0, 0.5], DEFAULT_FD_STEP).unwrap();
        assert_eq!(g, alloc::vec![0.0; 3]);
    }

    #[test]
    fn half_norm_squared() {
        let f = |w: &[f64]| 0.5 * w.iter().map(|x| x * x).sum::<f64>();
        let g = finite_diff_grad(f, &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let f = |w: &[f64]| w[0].ln();
        assert!(matches!(
            finite_diff_grad(f, &[0.0], 1e-5),
            Err(Error::Numeric(_))
        ));
        assert!(finite_diff_grad(|_| 0.0, &[0.0], 0.0).is_err());
    }
}
