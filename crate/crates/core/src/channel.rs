//! Uplink rate, per-frame service-time moments and the queueing latency
//! bound that ties allocated spectrum to a feasible upload frequency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("service-time moment diverges: set a positive `gamma_min` truncation for the exponential SNR")]
    DivergentMoment,
    #[error("unstable queue: utilisation {utilisation} >= 1")]
    Unstable { utilisation: f64 },
    #[error("numerical integration did not converge (error estimate {0})")]
    Quadrature(f64),
}

fn positive(name: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ChannelError::NonPositive { name, value })
    }
}

/// Per-frame SNR law; draws are i.i.d. across frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SnrDistribution {
    Constant {
        snr: f64,
    },
    /// Exponential with mean `mean`, conditioned on `γ >= gamma_min`
    /// (equivalently `gamma_min + Exp(mean)`).
    Exponential {
        mean: f64,
        gamma_min: f64,
    },
}

impl SnrDistribution {
    /// Exponential SNR truncated at 1% of its mean.
    pub fn exponential(mean: f64) -> Self {
        Self::Exponential {
            mean,
            gamma_min: 0.01 * mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub snr: SnrDistribution,
    /// Bits uploaded per selected frame.
    pub alpha_bits: f64,
}

/// First and second moments of the per-frame upload time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceMoments {
    pub mean: f64,
    pub second: f64,
}

impl ServiceMoments {
    /// Moments at spectrum `b`, given moments computed at 1 Hz.
    pub fn scaled(&self, b: f64) -> Self {
        Self {
            mean: self.mean / b,
            second: self.second / (b * b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub moments: ServiceMoments,
    pub latency: f64,
    pub utilisation: f64,
}

/// Shannon rate `b log2(1 + γ)` in bits/s.
pub fn rate(b: f64, gamma: f64) -> Result<f64, ChannelError> {
    positive("spectrum b", b)?;
    positive("SNR", gamma)?;
    Ok(b * gamma.ln_1p() / std::f64::consts::LN_2)
}

/// `∫ g(γ) p(γ) dγ` for the exponential SNR density on `[gamma_min, ∞)`.
fn exponential_expectation(mean: f64, gamma_min: f64, g: impl Fn(f64) -> f64) -> Result<f64, ChannelError> {
    // substitute γ = gamma_min + mean * x, x ~ Exp(1); e^-60 is far below
    // the target relative accuracy
    let integrand = |x: f64| g(gamma_min + mean * x) * (-x).exp();
    let mut total = 0.0;
    let mut error = 0.0;
    // the integrand is steepest near x = 0, so integrate geometrically growing pieces
    let mut a: f64 = 0.0;
    let mut width = 1e-3;
    while a < 60.0 {
        let b = (a + width).min(60.0);
        let out = quadrature::double_exponential::integrate(integrand, a, b, 1e-13);
        total += out.integral;
        error += out.error_estimate;
        a = b;
        width *= 2.0;
    }
    if !total.is_finite() || error > 1e-8 * total.abs() {
        return Err(ChannelError::Quadrature(error));
    }
    Ok(total)
}

impl ChannelModel {
    pub fn new(snr: SnrDistribution, alpha_bits: f64) -> Result<Self, ChannelError> {
        let model = Self { snr, alpha_bits };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("alpha_bits", self.alpha_bits)?;
        match self.snr {
            SnrDistribution::Constant { snr } => {
                positive("snr", snr)?;
            }
            SnrDistribution::Exponential { mean, gamma_min } => {
                positive("mean snr", mean)?;
                if gamma_min <= 0.0 {
                    return Err(ChannelError::DivergentMoment);
                }
                positive("gamma_min", gamma_min)?;
            }
        }
        Ok(())
    }

    /// Service-time moments at 1 Hz of spectrum; they scale as `1/b` and `1/b²`.
    pub fn unit_moments(&self) -> Result<ServiceMoments, ChannelError> {
        self.validate()?;
        let bits_per_hz = |gamma: f64| gamma.ln_1p() / std::f64::consts::LN_2;
        match self.snr {
            SnrDistribution::Constant { snr } => {
                let mean = self.alpha_bits / bits_per_hz(snr);
                Ok(ServiceMoments {
                    mean,
                    second: mean * mean,
                })
            }
            SnrDistribution::Exponential { mean, gamma_min } => {
                let a = self.alpha_bits;
                let s = |g: f64| 1.0 / bits_per_hz(g);
                Ok(ServiceMoments {
                    mean: a * exponential_expectation(mean, gamma_min, s)?,
                    second: a * a * exponential_expectation(mean, gamma_min, |g| s(g).powi(2))?,
                })
            }
        }
    }

    /// `E[S]` and `E[S²]` for upload time `S = α / r` at spectrum `b`.
    pub fn service_moments(&self, b: f64) -> Result<ServiceMoments, ChannelError> {
        positive("spectrum b", b)?;
        Ok(self.unit_moments()?.scaled(b))
    }

    /// Upload time of one frame at spectrum `b` and SNR `gamma`.
    pub fn service_time(&self, b: f64, gamma: f64) -> Result<f64, ChannelError> {
        Ok(self.alpha_bits / rate(b, gamma)?)
    }
}

/// Queueing latency `λ E[S²] / (2 (1 - λ E[S]))`.
pub fn queue_latency(lambda: f64, moments: ServiceMoments) -> Result<f64, ChannelError> {
    positive("upload frequency", lambda)?;
    let utilisation = lambda * moments.mean;
    if utilisation >= 1.0 {
        return Err(ChannelError::Unstable { utilisation });
    }
    Ok(lambda * moments.second / (2.0 * (1.0 - utilisation)))
}

pub fn queue_stats(lambda: f64, moments: ServiceMoments) -> Result<QueueStats, ChannelError> {
    Ok(QueueStats {
        moments,
        latency: queue_latency(lambda, moments)?,
        utilisation: lambda * moments.mean,
    })
}

/// Feasible upload frequency on the stride grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UploadRate {
    pub lambda: f64,
    pub stride: usize,
    pub latency: f64,
}

/// Largest `λ = frame_rate / s`, `s = 1..=max_stride`, that keeps the queue
/// stable with latency at most `max_latency`. `None` if no stride works.
pub fn max_upload_frequency_from_moments(
    moments: ServiceMoments,
    max_latency: f64,
    frame_rate: f64,
    max_stride: usize,
) -> Option<UploadRate> {
    (1..=max_stride.max(1)).find_map(|stride| {
        let lambda = frame_rate / stride as f64;
        match queue_latency(lambda, moments) {
            Ok(latency) if latency <= max_latency => Some(UploadRate {
                lambda,
                stride,
                latency,
            }),
            _ => None,
        }
    })
}

pub fn max_upload_frequency(
    model: &ChannelModel,
    b: f64,
    max_latency: f64,
    frame_rate: f64,
    max_stride: usize,
) -> Result<Option<UploadRate>, ChannelError> {
    positive("max latency T", max_latency)?;
    positive("frame rate", frame_rate)?;
    let moments = model.service_moments(b)?;
    Ok(max_upload_frequency_from_moments(
        moments,
        max_latency,
        frame_rate,
        max_stride,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rate_examples() {
        assert_relative_eq!(rate(1e6, 3.0).unwrap(), 2e6, max_relative = 1e-15);
        assert_relative_eq!(rate(1e6, 1.0).unwrap(), 1e6, max_relative = 1e-15);
        assert_relative_eq!(rate(5e6, 15.0).unwrap(), 2e7, max_relative = 1e-15);
        assert!(rate(0.0, 1.0).is_err());
        assert!(rate(1.0, -1.0).is_err());
    }

    #[test]
    fn constant_snr_moments() {
        let m = ChannelModel::new(SnrDistribution::Constant { snr: 3.0 }, 1e6).unwrap();
        let s = m.service_moments(1e6).unwrap();
        assert_relative_eq!(s.mean, 0.5, max_relative = 1e-15);
        assert_relative_eq!(s.second, 0.25, max_relative = 1e-15);
        let m = ChannelModel::new(SnrDistribution::Constant { snr: 1.0 }, 2e6).unwrap();
        assert_relative_eq!(m.service_moments(1e6).unwrap().mean, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn untruncated_exponential_diverges() {
        let m = ChannelModel {
            snr: SnrDistribution::Exponential {
                mean: 10.0,
                gamma_min: 0.0,
            },
            alpha_bits: 1e6,
        };
        let err = m.service_moments(1e6).unwrap_err();
        assert_eq!(err, ChannelError::DivergentMoment);
        assert!(err.to_string().contains("gamma_min"));
    }

    #[test]
    fn exponential_moments_against_fine_trapezoid() {
        // independent composite rule on a log-spaced grid
        let (mean, gmin) = (10.0, 0.1);
        let m = ChannelModel::new(SnrDistribution::Exponential { mean, gamma_min: gmin }, 1e6).unwrap();
        let got = m.service_moments(1e6).unwrap();
        let n = 400_000;
        let (lo, hi) = ((1e-9f64).ln(), (60.0f64).ln());
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        let mut prev: Option<(f64, f64, f64)> = None;
        for i in 0..=n {
            let x = (lo + (hi - lo) * i as f64 / n as f64).exp();
            let s = 1.0 / (1.0 + gmin + mean * x).log2();
            let w = (-x).exp();
            if let Some((px, ps, pw)) = prev {
                e1 += 0.5 * (x - px) * (s * w + ps * pw);
                e2 += 0.5 * (x - px) * (s * s * w + ps * ps * pw);
            }
            prev = Some((x, s, w));
        }
        // the missing [0, 1e-9] sliver contributes < 1e-8 relative
        assert_relative_eq!(got.mean, e1, max_relative = 1e-6);
        assert_relative_eq!(got.second, e2, max_relative = 1e-6);
    }

    #[test]
    fn latency_examples() {
        let m = ServiceMoments {
            mean: 0.5,
            second: 0.25,
        };
        assert_relative_eq!(queue_latency(1.0, m).unwrap(), 0.25, max_relative = 1e-15);
        assert!(queue_latency(1e-9, m).unwrap() < 1e-9);
        let m = ServiceMoments { mean: 0.5, second: 0.3 };
        assert_relative_eq!(queue_latency(1.9, m).unwrap(), 5.7, max_relative = 1e-12);
        assert!(matches!(queue_latency(2.0, m), Err(ChannelError::Unstable { .. })));
    }

    #[test]
    fn max_frequency_on_stride_grid() {
        let m = ServiceMoments {
            mean: 0.5,
            second: 0.25,
        };
        let up = max_upload_frequency_from_moments(m, 0.25, 30.0, 300).unwrap();
        assert_eq!(up.stride, 30);
        assert_eq!(up.lambda, 1.0);
        let next = 30.0 / 29.0;
        assert!(queue_latency(next, m).unwrap() > 0.25);
    }

    #[test]
    fn max_frequency_infeasible_and_vacuous() {
        let model = ChannelModel::new(SnrDistribution::Constant { snr: 1.0 }, 1e6).unwrap();
        // E[S] = 1000 s at b = 1 kHz; even 30/300 Hz is unstable
        assert_eq!(max_upload_frequency(&model, 1e3, 10.0, 30.0, 300).unwrap(), None);
        let up = max_upload_frequency(&model, 1e9, f64::MAX, 30.0, 300).unwrap().unwrap();
        assert_eq!(up.lambda, 30.0);
    }

    proptest! {
        #[test]
        fn rate_monotone_in_b_and_concave_in_snr(b in 1.0f64..1e8, g in 0.01f64..1e3, d in 0.01f64..10.0) {
            prop_assert!(rate(b * 2.0, g).unwrap() > rate(b, g).unwrap());
            let (r0, r1, r2) = (rate(b, g).unwrap(), rate(b, g + d).unwrap(), rate(b, g + 2.0 * d).unwrap());
            prop_assert!(r1 > r0 && r2 > r1);
            prop_assert!(r1 - r0 >= (r2 - r1) * (1.0 - 1e-12));
        }

        #[test]
        fn latency_increasing_in_lambda(mean in 0.01f64..1.0, cv2 in 0.0f64..5.0, u1 in 0.01f64..0.98, du in 0.001f64..0.5) {
            let m = ServiceMoments { mean, second: mean * mean * (1.0 + cv2) };
            let u2 = (u1 + du).min(0.999);
            prop_assume!(u2 > u1);
            prop_assert!(queue_latency(u2 / mean, m).unwrap() > queue_latency(u1 / mean, m).unwrap());
        }

        #[test]
        fn max_frequency_monotone_in_b_and_t(b in 1e4f64..1e8, db in 1.0f64..3.0, t in 0.001f64..1.0, dt in 1.0f64..3.0) {
            let model = ChannelModel::new(SnrDistribution::Constant { snr: 7.0 }, 1e5).unwrap();
            let lam = |b: f64, t: f64| max_upload_frequency(&model, b, t, 30.0, 300).unwrap().map_or(0.0, |u| u.lambda);
            prop_assert!(lam(b * db, t) >= lam(b, t));
            prop_assert!(lam(b, t * dt) >= lam(b, t));
        }
    }
}
