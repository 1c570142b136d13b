//! Direct computation of the preintegrated IMU measurement
//! `(dR, dp, dv, db, dt)` together with its bias Jacobian and covariance
//! under three right-perturbation conventions.
//!
//! The increments follow the discrete zero-order-hold recursion
//! (`dR <- dR Exp(w dt)`, `dv <- dv + dR a dt`,
//! `dp <- dp + dv dt + 1/2 dR a dt^2`) with the interval's left sample held
//! constant, which matches the `propagation` module run from the identity
//! state with zero gravity. The Jacobian and covariance chains are the exact
//! per-step linearizations of that recursion in right (tangent) error
//! coordinates; the requested convention is applied as an exact linear map
//! when the result is assembled.
//!
//! Bias perturbations follow the preint error-state sign convention in which
//! the bias rows satisfy `db_se = -db`, so the stored Jacobian is the
//! negative of a plain additive-bias derivative. [`bias_jacobian_check`]
//! differences the recursion under the same convention.

use crate::error::{Error, Result};
use crate::model::{correct, validate_sequence, ImuBias, ImuSample, NoiseParams};
use crate::propagation::cov_step;
use crate::so3;
use crate::{Mat12, Mat15, Mat15x12, Mat15x6, Mat3, Vec3, Vec6, BA, BG, POS, THETA, VEL};

/// Which right-perturbation definition a Jacobian/covariance is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Convention {
    /// Right rotation perturbation, plain vector perturbations on `dp`, `dv`.
    TangentRight,
    /// Right rotation perturbation with `dp`, `dv` offsets expressed in the
    /// increment frame (NavState-retract style).
    ManifoldRight,
    /// Sign-flipped right perturbation paired with the near-identity residual
    /// Jacobian.
    Forster,
}

impl Convention {
    pub const ALL: [Convention; 3] = [
        Convention::TangentRight,
        Convention::ManifoldRight,
        Convention::Forster,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Convention::TangentRight => "tangent",
            Convention::ManifoldRight => "manifold",
            Convention::Forster => "forster",
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tangent" => Ok(Convention::TangentRight),
            "manifold" => Ok(Convention::ManifoldRight),
            "forster" => Ok(Convention::Forster),
            other => Err(Error::Config(format!(
                "unknown convention '{other}' (expected tangent|manifold|forster)"
            ))),
        }
    }
}

/// Preintegrated measurement between two key times.
#[derive(Debug, Clone)]
pub struct PreintegratedMeasurement {
    /// Rotation increment `dR_se`.
    pub dr: Mat3,
    /// Position increment in the start body frame, m.
    pub dp: Vec3,
    /// Velocity increment in the start body frame, m/s.
    pub dv: Vec3,
    /// Deterministic bias increment (identically zero; kept because it is
    /// part of the 15-dimensional preint error state).
    pub db: Vec6,
    /// Accumulated interval length, s.
    pub dt_total: f64,
    /// Bias Jacobian `J_{b_s}`: sensitivity of the preint error state to the
    /// start-bias error under `convention`. The last six rows are zero.
    pub j_bias: Mat15x6,
    /// Covariance of the preint error state under `convention`.
    pub cov: Mat15,
    /// Bias estimate held constant during integration.
    pub bias_lin: ImuBias,
    /// Perturbation convention of `j_bias` and `cov`.
    pub convention: Convention,
}

impl PreintegratedMeasurement {
    /// Applies a 15-dim perturbation to the increments under this
    /// measurement's convention (`db_se = -db` on the bias rows).
    pub fn retract(&self, dx: &crate::Vec15) -> Self {
        let dtheta = dx.fixed_rows::<3>(THETA).into_owned();
        let dpos = dx.fixed_rows::<3>(POS).into_owned();
        let dvel = dx.fixed_rows::<3>(VEL).into_owned();
        let dbias = dx.fixed_rows::<6>(BG).into_owned();
        let mut out = self.clone();
        match self.convention {
            Convention::TangentRight => {
                out.dr = self.dr * so3::exp(&dtheta);
                out.dp = self.dp + dpos;
                out.dv = self.dv + dvel;
            }
            Convention::ManifoldRight => {
                out.dr = self.dr * so3::exp(&dtheta);
                out.dp = self.dp + out.dr * dpos;
                out.dv = self.dv + out.dr * dvel;
            }
            Convention::Forster => {
                out.dr = self.dr * so3::exp(&-dtheta);
                out.dp = self.dp - dpos;
                out.dv = self.dv - dvel;
            }
        }
        out.db = self.db - dbias;
        out
    }
}

/// Incremental preintegrator; feed samples in timestamp order, then call
/// [`Preintegrator::finish`]. Single-writer while integrating.
#[derive(Debug, Clone)]
pub struct Preintegrator {
    bias: ImuBias,
    q: Mat12,
    convention: Convention,
    dr: Mat3,
    dp: Vec3,
    dv: Vec3,
    dt_total: f64,
    /// Jacobian of the plain tangent error state w.r.t. the additive start
    /// bias error (bias rows stay identity along the chain).
    j_tangent: Mat15x6,
    /// Covariance of the plain tangent error state.
    cov_tangent: Mat15,
    held: Option<ImuSample>,
}

/// Right-error noise input matrix at increment rotation `r`.
fn noise_input(r: &Mat3) -> Mat15x12 {
    let mut g = Mat15x12::zeros();
    g.fixed_view_mut::<3, 3>(THETA, 0)
        .copy_from(&(-Mat3::identity()));
    g.fixed_view_mut::<3, 3>(VEL, 3).copy_from(&(-r));
    g.fixed_view_mut::<3, 3>(BG, 6).copy_from(&Mat3::identity());
    g.fixed_view_mut::<3, 3>(BA, 9).copy_from(&Mat3::identity());
    g
}

impl Preintegrator {
    pub fn new(bias: ImuBias, np: &NoiseParams, convention: Convention) -> Self {
        // The bias rows track the (constant) additive bias error itself.
        let mut j_tangent = Mat15x6::zeros();
        j_tangent
            .fixed_view_mut::<6, 6>(BG, 0)
            .copy_from(&crate::Mat6::identity());
        Self {
            bias,
            q: np.q_matrix(),
            convention,
            dr: Mat3::identity(),
            dp: Vec3::zeros(),
            dv: Vec3::zeros(),
            dt_total: 0.0,
            j_tangent,
            cov_tangent: Mat15::zeros(),
            held: None,
        }
    }

    /// Feeds the next sample; the previously held sample is integrated over
    /// the elapsed interval.
    pub fn push(&mut self, sample: ImuSample) -> Result<()> {
        if !sample.is_finite() {
            return Err(Error::NonFinite("imu sample".into()));
        }
        let Some(prev) = self.held.replace(sample) else {
            return Ok(());
        };
        let dt = sample.t - prev.t;
        if !(dt > 0.0) {
            return Err(Error::InvalidSequence(format!(
                "timestamps not strictly increasing: {} -> {}",
                prev.t, sample.t
            )));
        }

        let (omega, accel) = correct(&prev, &self.bias);
        let r0 = self.dr;
        let phi = omega * dt;
        let step_rot = so3::exp(&phi);

        // Exact per-step linearization of the discrete recursion in right
        // tangent coordinates.
        let mut a = Mat15::identity();
        a.fixed_view_mut::<3, 3>(THETA, THETA)
            .copy_from(&step_rot.transpose());
        a.fixed_view_mut::<3, 3>(THETA, BG)
            .copy_from(&(-so3::right_jacobian(&phi) * dt));
        let r0_skew_a = r0 * so3::skew(&accel);
        a.fixed_view_mut::<3, 3>(POS, THETA)
            .copy_from(&(-r0_skew_a * (0.5 * dt * dt)));
        a.fixed_view_mut::<3, 3>(POS, VEL)
            .copy_from(&(Mat3::identity() * dt));
        a.fixed_view_mut::<3, 3>(POS, BA)
            .copy_from(&(-r0 * (0.5 * dt * dt)));
        a.fixed_view_mut::<3, 3>(VEL, THETA).copy_from(&(-r0_skew_a * dt));
        a.fixed_view_mut::<3, 3>(VEL, BA).copy_from(&(-r0 * dt));

        // State update (uses the pre-update rotation and velocity).
        self.dp += self.dv * dt + r0 * accel * (0.5 * dt * dt);
        self.dv += r0 * accel * dt;
        self.dr = r0 * step_rot;
        self.dt_total += dt;

        let g_prev = noise_input(&r0);
        let g_next = noise_input(&self.dr);
        self.cov_tangent = cov_step(&self.cov_tangent, &a, &g_prev, &g_next, &self.q, dt);
        self.j_tangent = a * self.j_tangent;
        Ok(())
    }

    /// Exact linear map from the plain tangent error state to the requested
    /// convention's error state.
    fn convention_map(&self) -> Mat15 {
        let mut c = Mat15::identity();
        match self.convention {
            Convention::TangentRight => {}
            Convention::ManifoldRight => {
                let rt = self.dr.transpose();
                c.fixed_view_mut::<3, 3>(POS, POS).copy_from(&rt);
                c.fixed_view_mut::<3, 3>(VEL, VEL).copy_from(&rt);
            }
            Convention::Forster => {
                for i in 0..9 {
                    c[(i, i)] = -1.0;
                }
            }
        }
        // Bias rows obey db_se = -db in all three conventions.
        for i in 9..15 {
            c[(i, i)] = -1.0;
        }
        c
    }

    /// Assembles the preintegrated measurement under the configured
    /// convention.
    pub fn finish(&self) -> PreintegratedMeasurement {
        let c = self.convention_map();
        let cov = c * self.cov_tangent * c.transpose();
        // The start-bias perturbation obeys the same sign convention as the
        // bias rows, hence the leading minus; the bias rows themselves do not
        // depend on the start bias at all.
        let mut j_bias = -c * self.j_tangent;
        j_bias.fixed_view_mut::<6, 6>(BG, 0).fill(0.0);
        PreintegratedMeasurement {
            dr: self.dr,
            dp: self.dp,
            dv: self.dv,
            db: Vec6::zeros(),
            dt_total: self.dt_total,
            j_bias,
            cov: (cov + cov.transpose()) * 0.5,
            bias_lin: self.bias,
            convention: self.convention,
        }
    }
}

/// Preintegrates a full sample sequence at the given bias estimate.
pub fn preintegrate(
    bias: &ImuBias,
    seq: &[ImuSample],
    np: &NoiseParams,
    convention: Convention,
) -> Result<PreintegratedMeasurement> {
    validate_sequence(seq)?;
    let mut integrator = Preintegrator::new(*bias, np, convention);
    for s in seq {
        integrator.push(*s)?;
    }
    Ok(integrator.finish())
}

/// Difference of a re-integrated measurement relative to `base` under the
/// convention's retraction, stacked as `[dtheta, dp, dv]`.
fn increment_difference(
    base: &PreintegratedMeasurement,
    other: &PreintegratedMeasurement,
) -> nalgebra::SVector<f64, 9> {
    let mut d = nalgebra::SVector::<f64, 9>::zeros();
    let dtheta = so3::log(&(base.dr.transpose() * other.dr));
    match base.convention {
        Convention::TangentRight => {
            d.fixed_rows_mut::<3>(0).copy_from(&dtheta);
            d.fixed_rows_mut::<3>(3).copy_from(&(other.dp - base.dp));
            d.fixed_rows_mut::<3>(6).copy_from(&(other.dv - base.dv));
        }
        Convention::ManifoldRight => {
            d.fixed_rows_mut::<3>(0).copy_from(&dtheta);
            d.fixed_rows_mut::<3>(3)
                .copy_from(&(other.dr.transpose() * (other.dp - base.dp)));
            d.fixed_rows_mut::<3>(6)
                .copy_from(&(other.dr.transpose() * (other.dv - base.dv)));
        }
        Convention::Forster => {
            d.fixed_rows_mut::<3>(0).copy_from(&(-dtheta));
            d.fixed_rows_mut::<3>(3).copy_from(&(-(other.dp - base.dp)));
            d.fixed_rows_mut::<3>(6).copy_from(&(-(other.dv - base.dv)));
        }
    }
    d
}

/// Central-difference validation of the analytic bias Jacobian.
///
/// Re-preintegrates the sequence at `bias_lin -/+ eps e_i` (the convention's
/// bias retraction), forms the numerical derivative of the increments under
/// the convention's retraction and returns the maximum absolute deviation
/// from the analytic top 9x6 block.
pub fn bias_jacobian_check(
    pm: &PreintegratedMeasurement,
    seq: &[ImuSample],
    np: &NoiseParams,
) -> Result<f64> {
    let eps = 1e-6;
    let mut max_dev: f64 = 0.0;
    for i in 0..6 {
        let mut delta = Vec6::zeros();
        delta[i] = eps;
        // b boxplus db = b - db under the preint bias convention.
        let b_plus = ImuBias::from_vector(&(pm.bias_lin.vector() - delta));
        let b_minus = ImuBias::from_vector(&(pm.bias_lin.vector() + delta));
        let pm_plus = preintegrate(&b_plus, seq, np, pm.convention)?;
        let pm_minus = preintegrate(&b_minus, seq, np, pm.convention)?;
        let numeric =
            (increment_difference(pm, &pm_plus) - increment_difference(pm, &pm_minus)) / (2.0 * eps);
        for row in 0..9 {
            max_dev = max_dev.max((pm.j_bias[(row, i)] - numeric[row]).abs());
        }
    }
    Ok(max_dev)
}

/// First-order update of `(dR, dp, dv)` to a new bias estimate using the
/// stored bias Jacobian. Accuracy degrades quadratically with the bias step.
pub fn apply_bias_correction(
    pm: &PreintegratedMeasurement,
    b_new: &ImuBias,
) -> (Mat3, Vec3, Vec3) {
    // b_new = bias_lin boxplus db with b boxplus db = b - db.
    let db = -(b_new.vector() - pm.bias_lin.vector());
    let dx = pm.j_bias * db;
    let dtheta = dx.fixed_rows::<3>(THETA).into_owned();
    let dpos = dx.fixed_rows::<3>(POS).into_owned();
    let dvel = dx.fixed_rows::<3>(VEL).into_owned();
    match pm.convention {
        Convention::TangentRight => (pm.dr * so3::exp(&dtheta), pm.dp + dpos, pm.dv + dvel),
        Convention::ManifoldRight => {
            let dr = pm.dr * so3::exp(&dtheta);
            (dr, pm.dp + dr * dpos, pm.dv + dr * dvel)
        }
        Convention::Forster => (pm.dr * so3::exp(&-dtheta), pm.dp - dpos, pm.dv - dvel),
    }
}
