//! Information-theoretic generalization bounds for noisy federated training
//! and the empirical constants they need.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{heterogeneity, ClientPartition};
use crate::model::ModelSpec;
use crate::numerics::{gauss_vector, norm, KahanSum, RngStream};
use crate::{Error, Result};

/// Problem constants: `R` sub-Gaussian scale, `L` Lipschitz constant, `ξᵢ`
/// gradient noise, `Dᵢ` heterogeneity, `σ²` channel noise variance, `λ`
/// spectral value, `d` parameter count, `N` devices, `n` samples per device
/// and the learning rates `η_1..η_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    pub r: f64,
    pub l: f64,
    pub xi: Vec<f64>,
    pub d_het: Vec<f64>,
    pub sigma_sq: f64,
    pub lambda: f64,
    pub dim: usize,
    pub devices: usize,
    pub samples: usize,
    pub eta: Vec<f64>,
}

impl BoundConstants {
    pub fn from_empirical(
        c: &EmpiricalConstants,
        sigma_sq: f64,
        lambda: f64,
        dim: usize,
        samples: usize,
        eta: Vec<f64>,
    ) -> Self {
        Self {
            r: c.r,
            l: c.l,
            xi: c.xi.clone(),
            d_het: c.d_het.clone(),
            sigma_sq,
            lambda,
            dim,
            devices: c.xi.len(),
            samples,
            eta,
        }
    }

    pub fn rounds(&self) -> usize {
        self.eta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = |name: &'static str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite and non-negative, got {x}")))
            }
        };
        non_negative("R", self.r)?;
        non_negative("L", self.l)?;
        non_negative("sigma_sq", self.sigma_sq)?;
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::param("lambda", format!("must lie in [0, 1), got {}", self.lambda)));
        }
        if self.devices == 0 {
            return Err(Error::param("N", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if self.xi.len() != self.devices || self.d_het.len() != self.devices {
            return Err(Error::Dimension(format!(
                "{} xi and {} D values for {} devices",
                self.xi.len(),
                self.d_het.len(),
                self.devices
            )));
        }
        for &x in &self.xi {
            non_negative("xi", x)?;
        }
        for &x in &self.d_het {
            non_negative("D", x)?;
        }
        for &x in &self.eta {
            non_negative("eta", x)?;
        }
        Ok(())
    }

    /// `Σᵢ [ξᵢ² + L²(4Dᵢ² + 1)]`.
    fn client_sum(&self) -> f64 {
        let l2 = self.l * self.l;
        let mut acc = KahanSum::new();
        for (xi, d) in self.xi.iter().zip(&self.d_het) {
            acc.add(xi * xi + l2 * (4.0 * d * d + 1.0));
        }
        acc.total()
    }

    fn checked(&self) -> Result<()> {
        self.validate()?;
        if self.sigma_sq == 0.0 {
            return Err(Error::UndefinedBound);
        }
        Ok(())
    }
}

/// Centralized bound:
/// `|gen|² ≤ Σ_t R² η_t² / (σ² N³ n) · Σᵢ [ξᵢ² + L²(4Dᵢ² + 1)]`.
pub fn bound_cfl(c: &BoundConstants) -> Result<f64> {
    c.checked()?;
    let (nn, n) = (c.devices as f64, c.samples as f64);
    let coef = c.r * c.r / (c.sigma_sq * nn * nn * nn * n) * c.client_sum();
    let mut acc = KahanSum::new();
    for eta in &c.eta {
        acc.add(coef * eta * eta);
    }
    Ok(libm::sqrt(acc.total()))
}

/// Decentralized bound:
///
/// `|gen|² ≤ Σ_t [ Σ_{k=1}^t 2R²λ^{2k} V(t−k) / (σ²N³n)
///                + Σ_{k=1}^t λ^{2k} 2R²d / (N³n)
///                + 2R² V(t) / (σ²Nn) ]`
///
/// with `V(t) = η_t² Σᵢ [ξᵢ² + L²(4Dᵢ² + 1)]` and `V(0)` taken at `η_1`.
pub fn bound_dfl(c: &BoundConstants) -> Result<f64> {
    c.checked()?;
    let (nn, n) = (c.devices as f64, c.samples as f64);
    let r2 = c.r * c.r;
    let s = c.client_sum();
    let v = |t: usize| -> f64 {
        let eta = if t == 0 { c.eta[0] } else { c.eta[t - 1] };
        eta * eta * s
    };
    let lam2 = c.lambda * c.lambda;
    let mixing_coef = 2.0 * r2 / (c.sigma_sq * nn * nn * nn * n);
    let dim_coef = 2.0 * r2 * c.dim as f64 / (nn * nn * nn * n);
    let own_coef = 2.0 * r2 / (c.sigma_sq * nn * n);
    let mut acc = KahanSum::new();
    for t in 1..=c.rounds() {
        let mut pow = 1.0;
        for k in 1..=t {
            pow *= lam2;
            if pow == 0.0 {
                break;
            }
            acc.add(mixing_coef * pow * v(t - k));
            acc.add(dim_coef * pow);
        }
        acc.add(own_coef * v(t));
    }
    Ok(libm::sqrt(acc.total()))
}

/// Mutual-information bound `sqrt(2R²/(nN) · Σᵢ Iᵢ)`; `N` is the number of
/// entries in `mi`.
pub fn bound_generic(mi: &[f64], r: f64, n: usize) -> Result<f64> {
    if mi.is_empty() {
        return Err(Error::param("mi", "need at least one client"));
    }
    if mi.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::param("mi", "mutual information must be finite and non-negative"));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let mut total = KahanSum::new();
    for &x in mi {
        total.add(x);
    }
    Ok(libm::sqrt(2.0 * r * r / (n as f64 * mi.len() as f64) * total.total()))
}

/// Constants measured on the data: `R` is half the observed per-sample loss
/// range, a proxy since cross-entropy is unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalConstants {
    pub r: f64,
    pub l: f64,
    pub xi: Vec<f64>,
    pub d_het: Vec<f64>,
    pub probes: usize,
}

/// Default standard deviation of the random probe models.
pub const DEFAULT_PROBE_SCALE: f64 = 0.1;

/// Evaluates every per-sample loss and gradient at each probe model.
///
/// `R = (max − min loss) / 2`, `L = max ‖∇ℓ‖`, and `ξᵢ` is the largest (over
/// probes) root-mean-square deviation of client `i`'s per-sample gradients
/// from their mean.
pub fn estimate_from_probes(
    spec: &ModelSpec,
    partition: &ClientPartition,
    probes: &[Vec<f64>],
) -> Result<EmpiricalConstants> {
    if partition.samples_per_device() == 0 {
        return Err(Error::param("partition", "clients are empty"));
    }
    if probes.is_empty() {
        return Err(Error::param("probe_models", "need at least one probe"));
    }
    let d = spec.param_dim();
    let (mut lo, mut hi, mut l) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut xi = alloc::vec![0.0f64; partition.devices()];
    for w in probes {
        for (i, client) in partition.clients().iter().enumerate() {
            let mut grads = Vec::with_capacity(client.len());
            let mut mean = alloc::vec![0.0; d];
            for s in 0..client.len() {
                let (loss, g) = spec.sample_loss_grad(w, client.feature(s), client.label(s))?;
                lo = lo.min(loss);
                hi = hi.max(loss);
                l = l.max(norm(&g));
                for (m, x) in mean.iter_mut().zip(&g) {
                    *m += x;
                }
                grads.push(g);
            }
            let count = client.len() as f64;
            for m in &mut mean {
                *m /= count;
            }
            let mut spread = KahanSum::new();
            for g in &grads {
                spread.add(g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum());
            }
            xi[i] = xi[i].max(libm::sqrt(spread.total() / count));
        }
    }
    if !(lo.is_finite() && hi.is_finite() && l.is_finite()) {
        return Err(Error::Numeric("non-finite loss or gradient at a probe model".into()));
    }
    Ok(EmpiricalConstants {
        r: (hi - lo) / 2.0,
        l,
        xi,
        d_het: heterogeneity(partition),
        probes: probes.len(),
    })
}

/// Draws `probe_models` Gaussian models `N(0, probe_scale² I)`, appends the
/// given checkpoints and runs [`estimate_from_probes`].
pub fn estimate_constants(
    spec: &ModelSpec,
    partition: &ClientPartition,
    probe_models: usize,
    probe_scale: f64,
    checkpoints: &[Vec<f64>],
    rng: &mut RngStream,
) -> Result<EmpiricalConstants> {
    if probe_models < 10 {
        return Err(Error::param("probe_models", "need at least 10 probes"));
    }
    if !(probe_scale >= 0.0) || !probe_scale.is_finite() {
        return Err(Error::param("probe_scale", "must be finite and non-negative"));
    }
    let mut probes = Vec::with_capacity(probe_models + checkpoints.len());
    for _ in 0..probe_models {
        probes.push(gauss_vector(rng, spec.param_dim(), probe_scale)?);
    }
    probes.extend(checkpoints.iter().filter(|w| w.iter().all(|x| x.is_finite())).cloned());
    estimate_from_probes(spec, partition, &probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pinned() -> BoundConstants {
        BoundConstants {
            r: 1.0,
            l: 1.0,
            xi: vec![1.0; 10],
            d_het: vec![0.0; 10],
            sigma_sq: 1.0,
            lambda: 0.0,
            dim: 50,
            devices: 10,
            samples: 100,
            eta: vec![0.1; 10],
        }
    }

    #[test]
    fn cfl_pinned_value() {
        let b = bound_cfl(&pinned()).unwrap();
        let want = libm::sqrt(2e-5);
        assert!((b - want).abs() / want < 1e-12);
        assert!((b - 4.4721e-3).abs() / 4.4721e-3 < 1e-5);
    }

    #[test]
    fn dfl_pinned_value_at_zero_lambda() {
        let b = bound_dfl(&pinned()).unwrap();
        let want = libm::sqrt(4e-3);
        assert!((b - want).abs() / want < 1e-12);
    }

    #[test]
    fn empty_horizon_is_zero() {
        let c = BoundConstants {
            eta: vec![],
            ..pinned()
        };
        assert_eq!(bound_cfl(&c).unwrap(), 0.0);
        assert_eq!(bound_dfl(&c).unwrap(), 0.0);
    }

    #[test]
    fn noiseless_is_undefined() {
        let c = BoundConstants {
            sigma_sq: 0.0,
            eta: vec![],
            ..pinned()
        };
        assert_eq!(bound_cfl(&c), Err(Error::UndefinedBound));
        assert_eq!(bound_dfl(&c), Err(Error::UndefinedBound));
    }

    #[test]
    fn heterogeneity_ratio() {
        let base = BoundConstants {
            xi: vec![0.0; 10],
            d_het: vec![0.25; 10],
            ..pinned()
        };
        let doubled = BoundConstants {
            d_het: vec![0.5; 10],
            ..base.clone()
        };
        let ratio = bound_cfl(&doubled).unwrap().powi(2) / bound_cfl(&base).unwrap().powi(2);
        assert!((ratio - 1.6).abs() < 1e-12);
    }

    #[test]
    fn single_device_structural_factor() {
        let c = BoundConstants {
            xi: vec![0.7],
            d_het: vec![0.0],
            devices: 1,
            ..pinned()
        };
        let cfl = bound_cfl(&c).unwrap();
        let dfl = bound_dfl(&c).unwrap();
        assert!((dfl * dfl - 2.0 * cfl * cfl).abs() < 1e-15);
    }

    #[test]
    fn generic_examples() {
        assert_eq!(bound_generic(&[0.0, 0.0], 1.0, 10).unwrap(), 0.0);
        assert!((bound_generic(&[2.0], 1.0, 100).unwrap() - 0.2).abs() < 1e-15);
        let a = bound_generic(&[0.3, 1.1], 2.0, 7).unwrap();
        let b = bound_generic(&[1.2, 4.4], 2.0, 7).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-14);
        assert!(bound_generic(&[-1.0], 1.0, 1).is_err());
    }

    #[test]
    fn invalid_constants() {
        let bad = [
            BoundConstants { lambda: 1.0, ..pinned() },
            BoundConstants { r: -1.0, ..pinned() },
            BoundConstants { devices: 0, ..pinned() },
            BoundConstants { samples: 0, ..pinned() },
            BoundConstants { xi: vec![1.0; 3], ..pinned() },
        ];
        for c in bad {
            assert!(bound_cfl(&c).is_err());
        }
    }
}
