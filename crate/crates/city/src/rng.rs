//! Seedable, splittable random streams and the three samplers the curve
//! dynamics require.
//!
//! Streams are counter-based: a `ChaCha12` generator keyed by the 24-byte
//! tuple `(seed, stream_id, tag)`. Two streams built from equal keys produce
//! bit-identical sequences; streams with distinct keys are independent for
//! all statistical purposes. Keying by `(seed, replicate, variable tag)`
//! means adding draws for one purpose (say a validation check) can never
//! perturb the draws consumed elsewhere, so every experiment is reproducible
//! replicate-by-replicate regardless of execution order or thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Domain separator mixed into every stream key.
const KEY_SUFFIX: &[u8; 8] = b"PCITYSTR";

/// One independently usable random stream.
///
/// A stream is a value: clone it to replay a sequence, move it into a worker
/// to consume it. A single stream must not be shared between concurrent
/// workers; give each worker its own `(stream_id, tag)` instead.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    tag: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Stream for `(seed, stream_id)` with the default tag 0.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::keyed(seed, stream_id, 0)
    }

    /// Stream keyed by `(seed, stream_id, tag)`. `stream_id` conventionally
    /// carries the replicate index and `tag` the variable role within a
    /// replicate.
    pub fn keyed(seed: u64, stream_id: u64, tag: u64) -> Self {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&tag.to_le_bytes());
        key[24..32].copy_from_slice(KEY_SUFFIX);
        Self {
            seed,
            stream_id,
            tag,
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    /// Uniform draw strictly inside the open interval (0, 1).
    ///
    /// The endpoints are excluded by construction: the draws later appear as
    /// `√U` in denominators and as `ln` arguments, so exact 0 and 1 would
    /// propagate infinities.
    pub fn uniform01(&mut self) -> f64 {
        self.rng.sample(rand::distr::Open01)
    }

    /// Standard Exponential(1) draw by inverse transform; always finite and
    /// strictly positive.
    pub fn exponential1(&mut self) -> f64 {
        exponential_inv_cdf(self.uniform01())
    }

    /// Draw with survival function `exp(-γ²/(4s))`, i.e. Rayleigh(√(2s)),
    /// realised as `2·√(s·E)` for a standard Exponential `E`.
    ///
    /// Returns an invalid-parameter error when `s ≤ 0` (or NaN).
    pub fn rayleigh(&mut self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rayleigh abscissa must be positive, got {s}"
            )));
        }
        Ok(2.0 * (s * self.exponential1()).sqrt())
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Inverse CDF of the standard Exponential: `u ↦ -ln(1-u)`.
///
/// Evaluated via `ln_1p` so small `u` map to small positive values instead
/// of collapsing to zero.
pub fn exponential_inv_cdf(u: f64) -> f64 {
    -(-u).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_1pct, ks_statistic, RunningStats};
    use approx::assert_relative_eq;

    const E_INV: f64 = 0.36787944117144233;

    #[test]
    fn equal_keys_replay_bit_identically() {
        let mut a = RngStream::keyed(7, 3, 2);
        let mut b = RngStream::keyed(7, 3, 2);
        for _ in 0..200 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_ids_give_distinct_streams() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);

        // Crude independence check: sample correlation of paired uniforms.
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let n = 10_000;
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = (a.uniform01(), b.uniform01());
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let vx = sxx / nf - (sx / nf).powi(2);
        let vy = syy / nf - (sy / nf).powi(2);
        let r = cov / (vx * vy).sqrt();
        assert!(r.abs() < 0.05, "paired streams correlate: r = {r}");
    }

    #[test]
    fn uniform_is_strictly_open_and_centred() {
        let mut s = RngStream::new(11, 0);
        let mut stats = RunningStats::new();
        for _ in 0..1_000_000 {
            let u = s.uniform01();
            assert!(u > 0.0 && u < 1.0);
            stats.push(u);
        }
        assert!((stats.mean() - 0.5).abs() < 0.002);
    }

    #[test]
    fn uniform_root_moments() {
        // E[1-√U] = 1/3 and E[(1-√U)³] = 1/10; both reappear as constants
        // inside the truncation-error analysis, so pin them here.
        let mut s = RngStream::new(12, 0);
        let mut m1 = RunningStats::new();
        let mut m3 = RunningStats::new();
        for _ in 0..1_000_000 {
            let w = 1.0 - s.uniform01().sqrt();
            m1.push(w);
            m3.push(w * w * w);
        }
        assert!((m1.mean() - 1.0 / 3.0).abs() < 0.001);
        assert!((m3.mean() - 0.1).abs() < 0.001);
    }

    #[test]
    fn exponential_mean_and_variance() {
        let mut s = RngStream::new(13, 0);
        let mut stats = RunningStats::new();
        for _ in 0..1_000_000 {
            let e = s.exponential1();
            assert!(e > 0.0 && e.is_finite());
            stats.push(e);
        }
        assert!((stats.mean() - 1.0).abs() < 0.005);
        assert!((stats.variance() - 1.0).abs() < 0.01);
    }

    #[test]
    fn exponential_inverse_cdf_closed_form() {
        assert_relative_eq!(exponential_inv_cdf(1.0 - E_INV), 1.0, epsilon = 1e-12);
        assert_relative_eq!(exponential_inv_cdf(0.5), std::f64::consts::LN_2, epsilon = 1e-14);
    }

    #[test]
    fn rayleigh_tail_median_and_second_moment() {
        let mut s = RngStream::new(14, 0);
        let n = 1_000_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            draws.push(s.rayleigh(1.0).unwrap());
        }
        let above_two = draws.iter().filter(|&&g| g > 2.0).count() as f64 / n as f64;
        assert!((above_two - E_INV).abs() < 0.002, "P(Γ > 2) = {above_two}");

        let mut sorted = draws.clone();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[n / 2];
        let expected_median = 2.0 * std::f64::consts::LN_2.sqrt(); // 1.66511...
        assert!((median - expected_median).abs() < 0.005);

        let second: f64 = draws.iter().map(|g| g * g).sum::<f64>() / n as f64;
        assert!((second - 4.0).abs() < 0.02);
    }

    #[test]
    fn rayleigh_rejects_nonpositive_scale() {
        let mut s = RngStream::new(15, 0);
        assert!(s.rayleigh(0.0).is_err());
        assert!(s.rayleigh(-1.0).is_err());
        assert!(s.rayleigh(f64::NAN).is_err());
    }

    #[test]
    fn rayleigh_survival_passes_ks_at_one_percent() {
        let mut s = RngStream::new(16, 0);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| s.rayleigh(1.0).unwrap()).collect();
        let d = ks_statistic(&mut draws, |g| 1.0 - (-g * g / 4.0).exp());
        assert!(
            d < ks_critical_1pct(n),
            "KS statistic {d} exceeds the 1% critical value"
        );
    }
}
