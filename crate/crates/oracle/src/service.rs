//! Upload service times `S = α / (b log2(1 + γ))` under random SNR.

use marqoe_core::{ChannelModel, SnrDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceSampler {
    Deterministic(f64),
    Channel {
        b: f64,
        alpha_bits: f64,
        snr: SnrDistribution,
    },
}

fn bits_per_hz(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// Composite Simpson on `[a, b]` with `n` (even) intervals.
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// `∫₀^∞ g(x) e^{-x} dx` over logarithmically spaced panels.
fn exp_weighted_integral(g: impl Fn(f64) -> f64) -> f64 {
    let f = |x: f64| g(x) * (-x).exp();
    let mut edges = vec![0.0];
    let mut e = 1e-7;
    while e < 80.0 {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(80.0);
    edges.windows(2).map(|w| simpson(&f, w[0], w[1], 400)).sum()
}

impl ServiceSampler {
    pub fn from_channel(model: &ChannelModel, b: f64) -> Self {
        Self::Channel {
            b,
            alpha_bits: model.alpha_bits,
            snr: model.snr,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Deterministic(s) => s,
            Self::Channel { b, alpha_bits, snr } => {
                let gamma = match snr {
                    SnrDistribution::Constant { snr } => snr,
                    SnrDistribution::Exponential { mean, gamma_min } => {
                        let x: f64 = rng.sample(Exp1);
                        gamma_min + mean * x
                    }
                };
                alpha_bits / (b * bits_per_hz(gamma))
            }
        }
    }

    /// `(E[S], E[S²])` by quadrature.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            Self::Deterministic(s) => (s, s * s),
            Self::Channel { b, alpha_bits, snr } => {
                let service = |gamma: f64| alpha_bits / (b * bits_per_hz(gamma));
                match snr {
                    SnrDistribution::Constant { snr } => {
                        let s = service(snr);
                        (s, s * s)
                    }
                    SnrDistribution::Exponential { mean, gamma_min } => (
                        exp_weighted_integral(|x| service(gamma_min + mean * x)),
                        exp_weighted_integral(|x| service(gamma_min + mean * x).powi(2)),
                    ),
                }
            }
        }
    }
}

/// Sample mean of `S` and `S²` with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub mean_se: f64,
    pub second: f64,
    pub second_se: f64,
    pub samples: usize,
}

pub fn monte_carlo_moments(sampler: &ServiceSampler, samples: usize, seed: u64) -> MomentEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
    for _ in 0..samples {
        let s = sampler.sample(&mut rng);
        let sq = s * s;
        s1 += s;
        s2 += sq;
        s4 += sq * sq;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let second = s2 / n;
    let var1 = (second - mean * mean).max(0.0);
    let var2 = (s4 / n - second * second).max(0.0);
    MomentEstimate {
        mean,
        mean_se: (var1 / n).sqrt(),
        second,
        second_se: (var2 / n).sqrt(),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_exponential_moments() {
        assert!((exp_weighted_integral(|_| 1.0) - 1.0).abs() < 1e-10);
        assert!((exp_weighted_integral(|x| x * x) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_snr_is_deterministic() {
        let s = ServiceSampler::Channel {
            b: 1e6,
            alpha_bits: 2e6,
            snr: SnrDistribution::Constant { snr: 3.0 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.sample(&mut rng), 1.0);
        assert_eq!(s.moments(), (1.0, 1.0));
    }
}
