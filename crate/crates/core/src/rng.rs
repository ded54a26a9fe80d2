//! Named, seeded random streams and the service-time distributions drawn from them.
//!
//! A stream's seed is `splitmix64(root_seed ^ fnv1a64(label))`, fed to ChaCha8.
//! Two components with different labels never share generator state, so adding
//! a consumer does not shift anyone else's draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root_seed: u64, label: &str) -> u64 {
    splitmix64(root_seed ^ fnv1a64(label.as_bytes()))
}

pub struct RandomStream {
    root_seed: u64,
    label: String,
    draws: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(root_seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(root_seed, &label));
        RandomStream { root_seed, label, draws: 0, rng }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.draws += 1;
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.rng.random()
    }

    /// Weighted index choice; weights need not be normalized.
    pub fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    }

    pub fn draw(&mut self, dist: &Distribution) -> SimTime {
        dist.sample(self)
    }
}

/// Time distribution, parameters in milliseconds in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Deterministic { ms: f64 },
    Exponential { mean_ms: f64 },
    Uniform { lo_ms: f64, hi_ms: f64 },
}

fn ms_to_time(ms: f64) -> SimTime {
    SimTime::from_micros((ms * 1_000.0).round().max(0.0) as u64)
}

impl Distribution {
    pub fn deterministic_ms(ms: f64) -> Self {
        Distribution::Deterministic { ms }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        let ok = match *self {
            Distribution::Deterministic { ms } => ms.is_finite() && ms >= 0.0,
            Distribution::Exponential { mean_ms } => mean_ms.is_finite() && mean_ms > 0.0,
            Distribution::Uniform { lo_ms, hi_ms } => {
                lo_ms.is_finite() && hi_ms.is_finite() && lo_ms > 0.0 && hi_ms >= lo_ms
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DistributionError::InvalidDistribution(format!("{self:?}")))
        }
    }

    pub fn mean_ms(&self) -> f64 {
        match *self {
            Distribution::Deterministic { ms } => ms,
            Distribution::Exponential { mean_ms } => mean_ms,
            Distribution::Uniform { lo_ms, hi_ms } => (lo_ms + hi_ms) / 2.0,
        }
    }

    /// Scale every parameter by `k` (used for heavy-query profiles).
    pub fn scaled(&self, k: f64) -> Distribution {
        match *self {
            Distribution::Deterministic { ms } => Distribution::Deterministic { ms: ms * k },
            Distribution::Exponential { mean_ms } => Distribution::Exponential { mean_ms: mean_ms * k },
            Distribution::Uniform { lo_ms, hi_ms } => Distribution::Uniform { lo_ms: lo_ms * k, hi_ms: hi_ms * k },
        }
    }

    /// Draws only from `stream`. Deterministic consumes no randomness.
    pub fn sample(&self, stream: &mut RandomStream) -> SimTime {
        match *self {
            Distribution::Deterministic { ms } => ms_to_time(ms),
            Distribution::Exponential { mean_ms } => {
                stream.draws += 1;
                let exp = Exp::new(1.0 / mean_ms).expect("validated rate");
                ms_to_time(exp.sample(&mut stream.rng))
            }
            Distribution::Uniform { lo_ms, hi_ms } => {
                if lo_ms == hi_ms {
                    return ms_to_time(lo_ms);
                }
                let u = stream.unit();
                ms_to_time(lo_ms + u * (hi_ms - lo_ms))
            }
        }
    }
}

/// Checked draw matching the engine contract: rejects non-positive parameters.
pub fn draw(stream: &mut RandomStream, dist: &Distribution) -> Result<SimTime, DistributionError> {
    match dist {
        Distribution::Deterministic { ms } if *ms <= 0.0 => {
            return Err(DistributionError::InvalidDistribution(format!("{dist:?}")))
        }
        _ => dist.validate()?,
    }
    Ok(dist.sample(stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_is_exact() {
        let mut s = RandomStream::new(1, "svc");
        for _ in 0..10 {
            assert_eq!(draw(&mut s, &Distribution::deterministic_ms(10.0)).unwrap(), SimTime::from_millis(10));
        }
        assert_eq!(s.draws(), 0);
    }

    #[test]
    fn collapsed_uniform() {
        let mut s = RandomStream::new(1, "svc");
        let d = Distribution::Uniform { lo_ms: 5.0, hi_ms: 5.0 };
        assert_eq!(draw(&mut s, &d).unwrap(), SimTime::from_millis(5));
    }

    #[test]
    fn rejects_non_positive() {
        let mut s = RandomStream::new(1, "svc");
        assert!(draw(&mut s, &Distribution::Exponential { mean_ms: 0.0 }).is_err());
        assert!(draw(&mut s, &Distribution::Deterministic { ms: -1.0 }).is_err());
        assert!(draw(&mut s, &Distribution::Uniform { lo_ms: 0.0, hi_ms: 3.0 }).is_err());
    }

    #[test]
    fn exponential_mean_within_two_percent() {
        let mut s = RandomStream::new(7, "exp");
        let d = Distribution::Exponential { mean_ms: 10.0 };
        let n = 100_000;
        let sum: u64 = (0..n).map(|_| s.draw(&d).micros()).sum();
        let mean_ms = sum as f64 / n as f64 / 1_000.0;
        assert!((mean_ms - 10.0).abs() / 10.0 < 0.02, "mean {mean_ms}");
    }

    #[test]
    fn exponential_ks_statistic_below_one_percent() {
        let mut s = RandomStream::new(11, "ks");
        let d = Distribution::Exponential { mean_ms: 10.0 };
        let n = 100_000usize;
        let mut xs: Vec<f64> = (0..n).map(|_| s.draw(&d).as_millis_f64()).collect();
        xs.sort_by(f64::total_cmp);
        let mut ks: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let cdf = 1.0 - (-x / 10.0).exp();
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            ks = ks.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn streams_are_reproducible_and_label_isolated() {
        let mut a = RandomStream::new(42, "flight");
        let mut b = RandomStream::new(42, "flight");
        let mut c = RandomStream::new(42, "hotel");
        let va: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn weighted_respects_zero_weight() {
        let mut s = RandomStream::new(3, "mix");
        for _ in 0..1000 {
            assert_ne!(s.weighted(&[0.5, 0.0, 0.5]), 1);
        }
    }
}
