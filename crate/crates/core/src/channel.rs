//! Additive white Gaussian noise channel.

use alloc::format;
use alloc::vec::Vec;

use crate::numerics::{norm_sq, RngStream};
use crate::{Error, Result};

/// How the noise scale is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    Noiseless,
    /// Signal-to-noise ratio in decibels.
    SnrDb(f64),
    /// Fixed noise standard deviation.
    Sigma(f64),
}

/// Signal power used to turn an SNR into a noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerRef {
    /// Per-coordinate signal power fixed at 1.
    #[default]
    Unit,
    /// `‖w‖²/d` of the vector being transmitted.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    mode: NoiseMode,
    power_ref: PowerRef,
}

impl ChannelSpec {
    pub fn new(mode: NoiseMode, power_ref: PowerRef) -> Result<Self> {
        match mode {
            NoiseMode::SnrDb(snr) if !snr.is_finite() => {
                return Err(Error::param("snr_db", "must be finite"));
            }
            NoiseMode::Sigma(s) if !(s >= 0.0) || !s.is_finite() => {
                return Err(Error::param("sigma", "must be finite and non-negative"));
            }
            _ => {}
        }
        Ok(Self { mode, power_ref })
    }

    pub fn noiseless() -> Self {
        Self {
            mode: NoiseMode::Noiseless,
            power_ref: PowerRef::Unit,
        }
    }

    pub fn snr_db(snr: f64) -> Result<Self> {
        Self::new(NoiseMode::SnrDb(snr), PowerRef::Unit)
    }

    pub fn sigma(sigma: f64) -> Result<Self> {
        Self::new(NoiseMode::Sigma(sigma), PowerRef::Unit)
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn power_ref(&self) -> PowerRef {
        self.power_ref
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(self.mode, NoiseMode::Noiseless)
    }

    /// Noise standard deviation applied to `w`.
    ///
    /// With empirical power an all-zero vector carries no signal and gets no
    /// noise.
    pub fn sigma_for(&self, w: &[f64]) -> f64 {
        match self.mode {
            NoiseMode::Noiseless => 0.0,
            NoiseMode::Sigma(s) => s,
            NoiseMode::SnrDb(snr) => {
                let power = match self.power_ref {
                    PowerRef::Unit => 1.0,
                    PowerRef::Empirical if w.is_empty() => 0.0,
                    PowerRef::Empirical => norm_sq(w) / w.len() as f64,
                };
                if power > 0.0 {
                    snr_scale(snr, power)
                } else {
                    0.0
                }
            }
        }
    }

    /// Noise std for a fixed reference power of 1, if the mode has one that
    /// does not depend on the transmitted vector.
    pub fn nominal_sigma(&self) -> Option<f64> {
        match (self.mode, self.power_ref) {
            (NoiseMode::Noiseless, _) => Some(0.0),
            (NoiseMode::Sigma(s), _) => Some(s),
            (NoiseMode::SnrDb(snr), PowerRef::Unit) => Some(snr_scale(snr, 1.0)),
            (NoiseMode::SnrDb(_), PowerRef::Empirical) => None,
        }
    }

    /// Adds `ε ~ N(0, σ² I)` to `w` in place and returns `σ`.
    ///
    /// The standard normals are drawn before `σ` is applied, so a given
    /// stream produces the same direction whatever `w` holds.
    pub fn transmit_into(&self, w: &mut [f64], rng: &mut RngStream) -> f64 {
        let sigma = self.sigma_for(w);
        if self.is_noiseless() {
            return 0.0;
        }
        for x in w.iter_mut() {
            *x += sigma * rng.normal();
        }
        sigma
    }

    pub fn transmit(&self, w: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let mut out = w.to_vec();
        self.transmit_into(&mut out, rng);
        out
    }
}

fn snr_scale(snr_db: f64, power: f64) -> f64 {
    libm::sqrt(power * libm::pow(10.0, -snr_db / 10.0))
}

/// `σ = sqrt(P · 10^(−snr/10))`.
pub fn sigma_from_snr(snr_db: f64, signal_power: f64) -> Result<f64> {
    if !(signal_power > 0.0) || !signal_power.is_finite() {
        return Err(Error::param(
            "signal_power",
            format!("must be positive and finite, got {signal_power}"),
        ));
    }
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", "must be finite"));
    }
    Ok(snr_scale(snr_db, signal_power))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_mapping() {
        assert_eq!(sigma_from_snr(0.0, 1.0).unwrap(), 1.0);
        assert!((sigma_from_snr(40.0, 1.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((sigma_from_snr(20.0, 4.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(sigma_from_snr(10.0, 0.0).is_err());
        assert!(sigma_from_snr(10.0, -1.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ChannelSpec::sigma(-0.1).is_err());
        assert!(ChannelSpec::snr_db(f64::NAN).is_err());
        assert!(ChannelSpec::snr_db(f64::INFINITY).is_err());
        assert!(ChannelSpec::sigma(0.0).is_ok());
    }

    #[test]
    fn identity_cases() {
        let w = [1.5, -2.0, 0.25];
        let mut rng = RngStream::new(1, 1);
        assert_eq!(ChannelSpec::noiseless().transmit(&w, &mut rng), w.to_vec());
        assert_eq!(ChannelSpec::sigma(0.0).unwrap().transmit(&w, &mut rng), w.to_vec());
    }

    #[test]
    fn noise_energy_concentrates() {
        let d = 100_000;
        let w = vec![0.0; d];
        let out = ChannelSpec::sigma(0.5).unwrap().transmit(&w, &mut RngStream::new(77, 3));
        let per_coord = norm_sq(&out) / d as f64;
        assert!((per_coord - 0.25).abs() < 0.01, "{per_coord}");
    }

    #[test]
    fn noise_independent_of_signal() {
        let ch = ChannelSpec::snr_db(20.0).unwrap();
        let a = [0.0; 5];
        let b = [3.0, -1.0, 2.0, 7.0, 0.5];
        let na = ch.transmit(&a, &mut RngStream::new(5, 5));
        let nb = ch.transmit(&b, &mut RngStream::new(5, 5));
        for i in 0..5 {
            assert!(((nb[i] - b[i]) - (na[i] - a[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn empirical_power() {
        let ch = ChannelSpec::new(NoiseMode::SnrDb(20.0), PowerRef::Empirical).unwrap();
        assert_eq!(ch.sigma_for(&[0.0; 4]), 0.0);
        // power 4 per coordinate
        assert!((ch.sigma_for(&[2.0, -2.0, 2.0, -2.0]) - 0.2).abs() < 1e-15);
        assert_eq!(ch.nominal_sigma(), None);
        assert!((ChannelSpec::snr_db(40.0).unwrap().nominal_sigma().unwrap() - 0.01).abs() < 1e-15);
    }
}
