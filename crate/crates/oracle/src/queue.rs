//! Event-by-event FIFO upload queue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::service::ServiceSampler;
use crate::OracleError;

pub const MIN_ARRIVALS: usize = 10_000;
const BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueSimulation {
    /// Arrivals kept after the warm-up.
    pub arrivals: usize,
    /// Mean time from arrival to start of service.
    pub mean_wait: f64,
    /// Mean time from arrival to end of service.
    pub mean_sojourn: f64,
    /// Batch-means standard error of `mean_wait`.
    pub wait_std_error: f64,
    pub utilisation: f64,
}

fn simulate(
    lambda: f64,
    sampler: &ServiceSampler,
    n: usize,
    seed: u64,
    mut gap: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<QueueSimulation, OracleError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(OracleError::Input(format!(
            "arrival rate must be positive, got {lambda}"
        )));
    }
    if n < MIN_ARRIVALS {
        return Err(OracleError::Input(format!(
            "need at least {MIN_ARRIVALS} arrivals, got {n}"
        )));
    }
    let utilisation = lambda * sampler.moments().0;
    if utilisation >= 1.0 {
        return Err(OracleError::Unstable(utilisation));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let warmup = n / 10;
    let kept = n - warmup;
    let batch_len = kept / BATCHES;
    let mut batch_sums = vec![0.0; BATCHES];
    let (mut wait_sum, mut sojourn_sum) = (0.0, 0.0);
    // Lindley: W_{k+1} = max(0, W_k + S_k - A_{k+1})
    let mut wait = 0.0;
    for k in 0..n {
        let service = sampler.sample(&mut rng);
        if k >= warmup {
            let i = k - warmup;
            wait_sum += wait;
            sojourn_sum += wait + service;
            if i / batch_len < BATCHES {
                batch_sums[i / batch_len] += wait;
            }
        }
        wait = f64::max(0.0, wait + service - gap(&mut rng));
    }
    let mean_wait = wait_sum / kept as f64;
    let batch_means: Vec<f64> = batch_sums.iter().map(|s| s / batch_len as f64).collect();
    let bm = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(QueueSimulation {
        arrivals: kept,
        mean_wait,
        mean_sojourn: sojourn_sum / kept as f64,
        wait_std_error: (var / BATCHES as f64).sqrt(),
        utilisation,
    })
}

/// Periodic arrivals every `1/λ` with i.i.d. service.
pub fn simulate_dg1(
    lambda: f64,
    sampler: &ServiceSampler,
    n: usize,
    seed: u64,
) -> Result<QueueSimulation, OracleError> {
    simulate(lambda, sampler, n, seed, |_| 1.0 / lambda)
}

/// Poisson arrivals at rate `λ` with i.i.d. service.
pub fn simulate_mg1(
    lambda: f64,
    sampler: &ServiceSampler,
    n: usize,
    seed: u64,
) -> Result<QueueSimulation, OracleError> {
    simulate(lambda, sampler, n, seed, |rng| {
        let x: f64 = rng.sample(Exp1);
        x / lambda
    })
}
