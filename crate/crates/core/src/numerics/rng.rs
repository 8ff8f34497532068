use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Result};

/// What a random stream is used for. Mixed into the stream id so that
/// unrelated consumers never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Mixture = 1,
    Source = 2,
    Partition = 3,
    TestSet = 4,
    Batch = 5,
    Noise = 6,
    Topology = 7,
    Probe = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a purpose tag and two indices (device, round, epoch, ...) into a
/// stream id.
pub fn stream_id(purpose: Purpose, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(purpose as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

/// Seeded random stream backed by ChaCha8.
///
/// ChaCha is counter based, so `(seed, stream_id)` selects an independent
/// keystream directly and no draw depends on how many other streams were
/// consumed first.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
            spare_normal: None,
        }
    }

    pub fn for_purpose(seed: u64, purpose: Purpose, a: u64, b: u64) -> Self {
        Self::new(seed, stream_id(purpose, a, b))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        // Lemire's nearly-divisionless rejection.
        let mut m = (self.next_u64() as u128) * (n as u128);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = (self.next_u64() as u128) * (n as u128);
            }
        }
        (m >> 64) as usize
    }

    /// Standard normal draw (Box–Muller, second value cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let r = libm::sqrt(-2.0 * libm::log(self.uniform_open0()));
        let angle = 2.0 * core::f64::consts::PI * self.uniform();
        self.spare_normal = Some(r * libm::sin(angle));
        r * libm::cos(angle)
    }

    /// Natural log of a Gamma(shape, 1) draw (Marsaglia–Tsang).
    ///
    /// Working in log space keeps tiny shapes (α ≪ 1) from underflowing to an
    /// all-zero Dirichlet vector.
    pub fn ln_gamma_draw(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = libm::log(self.uniform_open0()) / shape;
            return self.ln_gamma_draw(shape + 1.0) + boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / libm::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform_open0();
            if libm::log(u) < 0.5 * x * x + d - d * v + d * libm::log(v) {
                return libm::log(d) + libm::log(v);
            }
        }
    }

    /// Index drawn from a categorical distribution given by `probs`.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left u above the final cumulative sum.
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `d` independent draws from `N(0, sigma²)`.
pub fn gauss_vector(rng: &mut RngStream, d: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", "must be a finite non-negative number"));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; d]);
    }
    Ok((0..d).map(|_| sigma * rng.normal()).collect())
}

/// One draw from the symmetric Dirichlet `Dir(alpha · 1_k)`.
pub fn dirichlet_sample(rng: &mut RngStream, alpha: f64, k: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param("alpha", "must be positive and finite"));
    }
    if k == 0 {
        return Err(Error::param("k", "need at least one component"));
    }
    let logs: Vec<f64> = (0..k).map(|_| rng.ln_gamma_draw(alpha)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x /= total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn stream_ids_separate_purposes() {
        assert_ne!(stream_id(Purpose::Batch, 1, 2), stream_id(Purpose::Noise, 1, 2));
        assert_ne!(stream_id(Purpose::Batch, 1, 2), stream_id(Purpose::Batch, 2, 1));
    }

    #[test]
    fn gauss_zero_sigma_and_empty() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(gauss_vector(&mut rng, 5, 0.0).unwrap(), vec![0.0; 5]);
        assert!(gauss_vector(&mut rng, 0, 1.0).unwrap().is_empty());
        assert!(gauss_vector(&mut rng, 3, -1.0).is_err());
    }

    #[test]
    fn gauss_moments() {
        // Standard error of the mean is 2/sqrt(1e5) ≈ 0.0063 and of the
        // variance ≈ 4·sqrt(2/1e5) ≈ 0.018, so ±0.05 / ±0.15 are > 7 s.e.
        let mut rng = RngStream::new(2024, 11);
        let v = gauss_vector(&mut rng, 100_000, 2.0).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 4.0).abs() < 0.15, "var {var}");
    }

    #[test]
    fn dirichlet_simplex_and_concentration() {
        let mut rng = RngStream::new(5, 5);
        assert_eq!(dirichlet_sample(&mut rng, 0.3, 1).unwrap(), vec![1.0]);
        for alpha in [0.01, 0.1, 1.0, 10.0] {
            let p = dirichlet_sample(&mut rng, alpha, 7).unwrap();
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let p = dirichlet_sample(&mut rng, 1e6, 4).unwrap();
        assert!(p.iter().all(|x| (x - 0.25).abs() < 0.01), "{p:?}");
        assert!(dirichlet_sample(&mut rng, 0.0, 3).is_err());
        assert!(dirichlet_sample(&mut rng, -1.0, 3).is_err());
    }

    #[test]
    fn below_and_shuffle() {
        let mut rng = RngStream::new(1, 1);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[rng.below(3)] += 1;
        }
        assert!(counts.iter().all(|&c| (800..1200).contains(&c)));
        let mut v: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn gamma_mean_matches_shape() {
        let mut rng = RngStream::new(3, 9);
        for shape in [0.2, 1.0, 4.5] {
            let m = (0..20_000)
                .map(|_| libm::exp(rng.ln_gamma_draw(shape)))
                .sum::<f64>()
                / 20_000.0;
            assert!((m - shape).abs() < 0.05 * shape.max(1.0), "shape {shape}: {m}");
        }
    }
}
