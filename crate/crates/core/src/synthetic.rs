//! Synthetic 30 fps pose traces around the default content volume.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::{Pose, PoseTrace};

pub const FRAME_RATE: f64 = 30.0;

/// Standing 1.6 m in front of the default grid at eye height, facing it.
pub fn viewer_pose() -> Pose {
    Pose::new([0.0, 1.2, -1.6], [0.0, 0.0, 0.0])
}

fn build(user_id: &str, n: usize, f: impl Fn(f64) -> Pose) -> PoseTrace {
    let poses = (0..n).map(|i| f(i as f64 / FRAME_RATE)).collect();
    PoseTrace::new(user_id, FRAME_RATE, poses).expect("synthetic poses are finite")
}

pub fn constant(user_id: &str, n: usize, pose: Pose) -> PoseTrace {
    build(user_id, n, |_| pose)
}

/// Constant-velocity pan: yaw from -40° to +40° over ten seconds while
/// stepping sideways.
pub fn linear_sweep(user_id: &str, n: usize) -> PoseTrace {
    let base = viewer_pose();
    build(user_id, n, |t| {
        Pose::new(
            [-0.3 + 0.06 * t, base.ty, base.tz + 0.02 * t],
            [-40.0 + 8.0 * t, 2.0 - 0.4 * t, 0.0],
        )
    })
}

/// Sinusoidal look-around with the given yaw/pitch amplitudes (degrees) and
/// periods (seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub yaw_amplitude: f64,
    pub yaw_period: f64,
    pub pitch_amplitude: f64,
    pub pitch_period: f64,
    pub sway: f64,
    pub phase: f64,
}

impl Oscillation {
    /// Slow, wide looking around.
    pub fn calm() -> Self {
        Self {
            yaw_amplitude: 35.0,
            yaw_period: 8.0,
            pitch_amplitude: 10.0,
            pitch_period: 11.0,
            sway: 0.1,
            phase: 0.0,
        }
    }

    /// Quick head turns.
    pub fn restless() -> Self {
        Self {
            yaw_amplitude: 35.0,
            yaw_period: 1.6,
            pitch_amplitude: 15.0,
            pitch_period: 2.3,
            sway: 0.2,
            phase: 0.7,
        }
    }
}

pub fn oscillating(user_id: &str, n: usize, osc: Oscillation) -> PoseTrace {
    let base = viewer_pose();
    let tau = std::f64::consts::TAU;
    build(user_id, n, |t| {
        Pose::new(
            [
                base.tx + osc.sway * (tau * t / (1.3 * osc.yaw_period) + osc.phase).sin(),
                base.ty + 0.05 * (tau * t / 3.0).sin(),
                base.tz + 0.5 * osc.sway * (tau * t / (1.7 * osc.yaw_period)).cos(),
            ],
            [
                osc.yaw_amplitude * (tau * t / osc.yaw_period + osc.phase).sin(),
                osc.pitch_amplitude * (tau * t / osc.pitch_period + 0.5 * osc.phase).sin(),
                2.0 * (tau * t / 5.0).sin(),
            ],
        )
    })
}

/// Head motion built from random low-frequency sinusoids, seeded.
pub fn head_motion(user_id: &str, n: usize, seed: u64) -> PoseTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    // (amplitude, frequency Hz, phase) per component
    let mut components: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    let amplitudes = [0.15, 0.05, 0.15, 25.0, 10.0, 3.0];
    for amp in amplitudes {
        let terms = (0..3)
            .map(|_| {
                (
                    amp * rng.gen_range(0.3..1.0) / 2.0,
                    rng.gen_range(0.05..0.8),
                    rng.gen_range(0.0..tau),
                )
            })
            .collect();
        components.push(terms);
    }
    let base = viewer_pose().to_array();
    build(user_id, n, |t| {
        Pose::from_array(std::array::from_fn(|c| {
            base[c]
                + components[c]
                    .iter()
                    .map(|(a, f, p)| a * (tau * f * t + p).sin())
                    .sum::<f64>()
        }))
    })
}
