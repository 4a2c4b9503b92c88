//! Seeded random sources and the lifetime / inter-arrival samplers.
//!
//! All randomness in the crate flows through [`RandomSource`], a ChaCha8
//! stream cipher generator. ChaCha output is specified bit-for-bit, so a
//! `(seed, stream)` pair replays identically on every platform.

use rand::distr::{Distribution, Open01};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Deterministic generator. Equal `(seed, stream)` pairs yield equal output.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// An independent stream keyed by the same seed. Streams never overlap.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn open_uniform(&mut self) -> f64 {
        Open01.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer, used to derive child seeds from a master seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        ^ salt
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The four lifetime families, with raw parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LifetimeFamily {
    /// Density `(alpha-1)/x_min^(1-alpha) * x^-alpha` on `[x_min, inf)`.
    PowerLaw {
        x_min: f64,
        alpha: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// Rate-`kappa` exponential (mean `1/kappa`).
    Exponential {
        kappa: f64,
    },
    /// `exp(N(upsilon, phi^2))`.
    Lognormal {
        upsilon: f64,
        phi: f64,
    },
}

/// A validated lifetime distribution `G`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LifetimeFamily", into = "LifetimeFamily")]
pub struct LifetimeDistribution(LifetimeFamily);

impl TryFrom<LifetimeFamily> for LifetimeDistribution {
    type Error = Error;

    fn try_from(family: LifetimeFamily) -> Result<Self> {
        LifetimeDistribution::new(family)
    }
}

impl From<LifetimeDistribution> for LifetimeFamily {
    fn from(d: LifetimeDistribution) -> Self {
        d.0
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be finite"))
    }
}

impl LifetimeDistribution {
    pub fn new(family: LifetimeFamily) -> Result<Self> {
        match family {
            LifetimeFamily::PowerLaw { x_min, alpha } => {
                finite("x_min", x_min)?;
                finite("alpha", alpha)?;
                if x_min <= 0.0 {
                    return Err(Error::param("x_min", "must be > 0"));
                }
                if alpha <= 2.0 {
                    return Err(Error::param("alpha", "must be > 2 for a finite mean"));
                }
            }
            LifetimeFamily::Uniform { a, b } => {
                finite("a", a)?;
                finite("b", b)?;
                if a < 0.0 {
                    return Err(Error::param("a", "must be >= 0"));
                }
                if b <= a {
                    return Err(Error::param("b", "must be > a"));
                }
            }
            LifetimeFamily::Exponential { kappa } => {
                finite("kappa", kappa)?;
                if kappa <= 0.0 {
                    return Err(Error::param("kappa", "must be > 0"));
                }
            }
            LifetimeFamily::Lognormal { upsilon, phi } => {
                finite("upsilon", upsilon)?;
                finite("phi", phi)?;
                if phi <= 0.0 {
                    return Err(Error::param("phi", "must be > 0"));
                }
            }
        }
        Ok(Self(family))
    }

    pub fn power_law(x_min: f64, alpha: f64) -> Result<Self> {
        Self::new(LifetimeFamily::PowerLaw { x_min, alpha })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::new(LifetimeFamily::Uniform { a, b })
    }

    pub fn exponential(kappa: f64) -> Result<Self> {
        Self::new(LifetimeFamily::Exponential { kappa })
    }

    pub fn lognormal(upsilon: f64, phi: f64) -> Result<Self> {
        Self::new(LifetimeFamily::Lognormal { upsilon, phi })
    }

    pub fn family(&self) -> LifetimeFamily {
        self.0
    }

    /// Inverse CDF. `u` is clamped to `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0 - f64::EPSILON / 2.0);
        match self.0 {
            LifetimeFamily::PowerLaw { x_min, alpha } => {
                x_min * (1.0 - u).powf(1.0 / (1.0 - alpha))
            }
            LifetimeFamily::Uniform { a, b } => a + (b - a) * u,
            LifetimeFamily::Exponential { kappa } => -(1.0 - u).ln() / kappa,
            LifetimeFamily::Lognormal { upsilon, phi } => {
                let z = Normal::standard().inverse_cdf(u);
                (upsilon + phi * z).exp()
            }
        }
    }

    /// Draws one lifetime.
    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        match self.0 {
            LifetimeFamily::PowerLaw { .. } | LifetimeFamily::Uniform { .. } => {
                self.quantile(rng.uniform())
            }
            // open interval keeps the draw strictly positive
            LifetimeFamily::Exponential { kappa } => -rng.open_uniform().ln() / kappa,
            LifetimeFamily::Lognormal { upsilon, phi } => {
                (upsilon + phi * rng.standard_normal()).exp()
            }
        }
    }

    /// Analytic `E[G]`.
    pub fn mean(&self) -> f64 {
        match self.0 {
            LifetimeFamily::PowerLaw { x_min, alpha } => x_min * (alpha - 1.0) / (alpha - 2.0),
            LifetimeFamily::Uniform { a, b } => 0.5 * (a + b),
            LifetimeFamily::Exponential { kappa } => 1.0 / kappa,
            LifetimeFamily::Lognormal { upsilon, phi } => (upsilon + 0.5 * phi * phi).exp(),
        }
    }
}

pub fn sample_lifetime(dist: &LifetimeDistribution, rng: &mut RandomSource) -> f64 {
    dist.sample(rng)
}

pub fn mean_lifetime(dist: &LifetimeDistribution) -> f64 {
    dist.mean()
}

/// Exponential inter-arrival time for a Poisson process of rate `lambda`.
pub fn sample_interarrival(lambda: f64, rng: &mut RandomSource) -> f64 {
    debug_assert!(lambda > 0.0);
    -rng.open_uniform().ln() / lambda
}
