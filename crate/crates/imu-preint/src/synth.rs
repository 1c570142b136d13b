//! Deterministic, seeded generation of random IMU sequences and start states
//! for the equivalence experiments.
//!
//! Raw per-sample uniform draws are low-pass filtered with a moving average
//! over a configurable window (default 0.1 s) so that the measurement stream
//! is smooth at the sample rate. Accelerometer readings carry a static
//! gravity-reaction term for the initial orientation on top of the random
//! part; the stream is not required to integrate to a physically consistent
//! trajectory.

use crate::error::{Error, Result};
use crate::model::{FullState, ImuBias, ImuSample, NavState, NoiseParams};
use crate::{so3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};

/// Parameters of one synthetic trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialSpec {
    /// RNG seed; equal seeds give bit-identical output.
    pub seed: u64,
    /// Sample rate in Hz.
    pub rate: f64,
    /// Sequence duration in seconds.
    pub duration: f64,
    /// Per-axis gyro range in rad/s.
    pub gyro_range: f64,
    /// Per-axis accel range in m/s^2 (before the gravity-reaction offset).
    pub accel_range: f64,
    /// Smoothing window in seconds applied to the raw draws.
    pub smoothing_window: f64,
    /// Noise densities and gravity used by downstream covariance propagation.
    pub noise: NoiseParams,
    /// Standard deviation of the random start position, m.
    pub pos_std: f64,
    /// Standard deviation of the random start velocity, m/s.
    pub vel_std: f64,
    /// Standard deviation of the random gyro bias, rad/s.
    pub bias_g_std: f64,
    /// Standard deviation of the random accel bias, m/s^2.
    pub bias_a_std: f64,
}

impl TrialSpec {
    /// Defaults: 200 Hz for 10 s, gyro in [-1, 1] rad/s, accel in [-5, 5]
    /// m/s^2, 0.1 s smoothing.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rate: 200.0,
            duration: 10.0,
            gyro_range: 1.0,
            accel_range: 5.0,
            smoothing_window: 0.1,
            noise: NoiseParams::default_mems(),
            pos_std: 1.0,
            vel_std: 0.5,
            bias_g_std: 0.01,
            bias_a_std: 0.1,
        }
    }

    /// Sub-seeded spec for trial `index` of a batch.
    pub fn for_trial(&self, index: u64) -> Self {
        Self {
            seed: self.seed.wrapping_add(index),
            ..*self
        }
    }
}

fn smooth(raw: &[Vec3], window: usize) -> Vec<Vec3> {
    if window <= 1 {
        return raw.to_vec();
    }
    let half = window / 2;
    let n = raw.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mut acc = Vec3::zeros();
        for r in &raw[lo..=hi] {
            acc += *r;
        }
        out.push(acc / (hi - lo + 1) as f64);
    }
    out
}

/// Generates one seeded trial: sample sequence, start state and start bias.
///
/// Timestamps are `t_k = k * (1/rate)` exactly; the sequence has
/// `rate * duration + 1` samples. The returned `FullState` carries the same
/// bias as the third tuple element.
pub fn generate(spec: &TrialSpec) -> (Vec<ImuSample>, FullState, ImuBias) {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let n_steps = (spec.rate * spec.duration).round() as usize;
    let dt = 1.0 / spec.rate;

    // Start state: orientation uniform on SO(3) via a normalized 4D gaussian.
    let q = nalgebra::Vector4::<f64>::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
    .normalize();
    let rot0 = so3::quat_to_rot(&q);
    let gauss3 = |rng: &mut ChaCha12Rng, std: f64| {
        Vec3::new(
            rng.sample::<f64, _>(StandardNormal) * std,
            rng.sample::<f64, _>(StandardNormal) * std,
            rng.sample::<f64, _>(StandardNormal) * std,
        )
    };
    let pos0 = gauss3(&mut rng, spec.pos_std);
    let vel0 = gauss3(&mut rng, spec.vel_std);
    let bias = ImuBias::new(gauss3(&mut rng, spec.bias_g_std), gauss3(&mut rng, spec.bias_a_std));

    let raw_gyro: Vec<Vec3> = (0..=n_steps)
        .map(|_| {
            Vec3::new(
                rng.random_range(-spec.gyro_range..=spec.gyro_range),
                rng.random_range(-spec.gyro_range..=spec.gyro_range),
                rng.random_range(-spec.gyro_range..=spec.gyro_range),
            )
        })
        .collect();
    let raw_accel: Vec<Vec3> = (0..=n_steps)
        .map(|_| {
            Vec3::new(
                rng.random_range(-spec.accel_range..=spec.accel_range),
                rng.random_range(-spec.accel_range..=spec.accel_range),
                rng.random_range(-spec.accel_range..=spec.accel_range),
            )
        })
        .collect();

    let window = (spec.smoothing_window * spec.rate).round().max(1.0) as usize;
    let gyro = smooth(&raw_gyro, window);
    let accel = smooth(&raw_accel, window);

    // Static specific-force reaction to gravity for the initial orientation.
    let reaction = -(rot0.transpose() * spec.noise.gravity_w);

    let seq = (0..=n_steps)
        .map(|k| ImuSample::new(k as f64 * dt, gyro[k] + bias.bg, accel[k] + reaction + bias.ba))
        .collect();

    let x0 = FullState::new(NavState::new(rot0, pos0, vel0), bias);
    (seq, x0, bias)
}

/// Adds discrete white measurement noise with per-sample standard deviation
/// `sigma / sqrt(dt)` to every sample.
pub fn add_noise(seq: &[ImuSample], np: &NoiseParams, seed: u64) -> Vec<ImuSample> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(seq.len());
    for (i, s) in seq.iter().enumerate() {
        let dt = if i + 1 < seq.len() {
            seq[i + 1].t - s.t
        } else if seq.len() >= 2 {
            s.t - seq[i - 1].t
        } else {
            1.0
        };
        let sg = np.sigma_g / dt.sqrt();
        let sa = np.sigma_a / dt.sqrt();
        let mut gauss = |std: f64| rng.sample::<f64, _>(StandardNormal) * std;
        out.push(ImuSample::new(
            s.t,
            s.gyro + Vec3::new(gauss(sg), gauss(sg), gauss(sg)),
            s.accel + Vec3::new(gauss(sa), gauss(sa), gauss(sa)),
        ));
    }
    out
}

/// Writes a sequence as CSV with header `t,gx,gy,gz,ax,ay,az`, 17 significant
/// digits per value.
pub fn write_csv<W: Write>(seq: &[ImuSample], mut w: W) -> Result<()> {
    writeln!(w, "t,gx,gy,gz,ax,ay,az")?;
    for s in seq {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z
        )?;
    }
    Ok(())
}

/// Reads a sequence written by [`write_csv`].
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<ImuSample>> {
    let mut seq = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 0 && trimmed.starts_with('t')) {
            continue;
        }
        let vals: Vec<f64> = trimmed
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(Error::Config(format!(
                "line {}: expected 7 columns, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        seq.push(ImuSample::new(
            vals[0],
            Vec3::new(vals[1], vals[2], vals[3]),
            Vec3::new(vals[4], vals[5], vals[6]),
        ));
    }
    Ok(seq)
}
