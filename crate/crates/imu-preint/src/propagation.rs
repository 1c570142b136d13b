//! Strapdown propagation: state integration over an IMU sequence together
//! with the 15x15 error-state transition matrix and trapezoidal covariance
//! propagation, all under the left error state.
//!
//! The sequence chain advances the state with [`zoh_step`], the discrete
//! strapdown recursion that holds each interval's left sample constant, and
//! accumulates [`step_jacobian`], its exact left-error Jacobian. Keeping the
//! integration scheme and its linearization exactly paired is what lets a
//! preintegration module be synthesized from this one (and vice versa) to
//! floating-point precision; see the `bridge` module.
//!
//! [`rk4_step`] is the classical Runge-Kutta alternative for callers that
//! want a higher-order state integrator on slowly varying inputs.

use crate::error::{Error, Result};
use crate::model::{
    correct, error_dynamics, state_derivative, validate_sequence, FullState, ImuSample,
    NoiseParams,
};
use crate::so3;
use crate::{Mat12, Mat15, Mat15x12, Mat3, BA, BG, POS, THETA, VEL};

/// Predicted state with its accumulated transition matrix and covariance.
#[derive(Debug, Clone)]
pub struct PropagationResult {
    /// State at the end of the interval, `x_{e|s}`.
    pub state: FullState,
    /// Transition matrix `Phi(t_e, t_s)` of the left error state.
    pub phi: Mat15,
    /// Covariance of the left error state at `t_e`.
    pub cov: Mat15,
}

/// One classical RK4 step from `z_prev.t` to `z_next.t`.
///
/// IMU inputs are linearly interpolated at the half step and the rotation is
/// projected back onto SO(3) after the ambient-space update.
pub fn rk4_step(
    x: &FullState,
    z_prev: &ImuSample,
    z_next: &ImuSample,
    np: &NoiseParams,
) -> Result<FullState> {
    let dt = z_next.t - z_prev.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidSequence(format!(
            "non-increasing timestamps: {} -> {}",
            z_prev.t, z_next.t
        )));
    }
    if !(z_prev.is_finite() && z_next.is_finite()) {
        return Err(Error::NonFinite("imu sample".into()));
    }
    let z_mid = ImuSample::new(
        z_prev.t + 0.5 * dt,
        0.5 * (z_prev.gyro + z_next.gyro),
        0.5 * (z_prev.accel + z_next.accel),
    );

    let eval = |rot: Mat3, vel, sample: &ImuSample| {
        let probe = FullState {
            nav: crate::model::NavState { rot, pos: x.nav.pos, vel },
            bias: x.bias,
        };
        state_derivative(&probe, sample, np)
    };

    let k1 = eval(x.nav.rot, x.nav.vel, z_prev);
    let k2 = eval(
        x.nav.rot + k1.rot_dot * (0.5 * dt),
        x.nav.vel + k1.vel_dot * (0.5 * dt),
        &z_mid,
    );
    let k3 = eval(
        x.nav.rot + k2.rot_dot * (0.5 * dt),
        x.nav.vel + k2.vel_dot * (0.5 * dt),
        &z_mid,
    );
    let k4 = eval(
        x.nav.rot + k3.rot_dot * dt,
        x.nav.vel + k3.vel_dot * dt,
        z_next,
    );

    let sixth = dt / 6.0;
    let rot_raw = x.nav.rot + (k1.rot_dot + 2.0 * k2.rot_dot + 2.0 * k3.rot_dot + k4.rot_dot) * sixth;
    // p_dot depends on v only; combine the four velocity evaluations.
    let pos = x.nav.pos
        + (k1.pos_dot
            + 2.0 * (x.nav.vel + k1.vel_dot * (0.5 * dt))
            + 2.0 * (x.nav.vel + k2.vel_dot * (0.5 * dt))
            + (x.nav.vel + k3.vel_dot * dt))
            * sixth;
    let vel = x.nav.vel + (k1.vel_dot + 2.0 * k2.vel_dot + 2.0 * k3.vel_dot + k4.vel_dot) * sixth;

    Ok(FullState {
        nav: crate::model::NavState {
            rot: so3::project_to_rotation(&rot_raw),
            pos,
            vel,
        },
        bias: x.bias,
    })
}

/// One zero-order-hold strapdown step: the interval's left sample is held
/// constant over `dt`.
///
/// `R <- R Exp(w dt)`, `v <- v + g dt + R a dt`,
/// `p <- p + v dt + 1/2 g dt^2 + 1/2 R a dt^2` with bias-corrected `w`, `a`.
pub fn zoh_step(x: &FullState, z: &ImuSample, dt: f64, np: &NoiseParams) -> FullState {
    let (omega, accel) = correct(z, &x.bias);
    let rot_accel = x.nav.rot * accel;
    FullState {
        nav: crate::model::NavState {
            rot: x.nav.rot * so3::exp(&(omega * dt)),
            pos: x.nav.pos
                + x.nav.vel * dt
                + (np.gravity_w + rot_accel) * (0.5 * dt * dt),
            vel: x.nav.vel + np.gravity_w * dt + rot_accel * dt,
        },
        bias: x.bias,
    }
}

/// Exact Jacobian of [`zoh_step`] with respect to the left error state.
///
/// Gravity is state-independent so it does not appear; the only non-identity
/// blocks are the velocity/position couplings and the bias feed-throughs,
/// with the gyro-bias column carrying the left Jacobian of the step rotation.
pub fn step_jacobian(x: &FullState, z: &ImuSample, dt: f64) -> Mat15 {
    let (omega, accel) = correct(z, &x.bias);
    let r = x.nav.rot;
    let skew_ra = so3::skew(&(r * accel));
    let mut phi = Mat15::identity();
    // d(theta+) / d(bg) = -R Exp(w dt) Jr(w dt) dt = -R Jl(w dt) dt
    phi.fixed_view_mut::<3, 3>(THETA, BG)
        .copy_from(&(-(r * so3::left_jacobian(&(omega * dt))) * dt));
    phi.fixed_view_mut::<3, 3>(POS, THETA)
        .copy_from(&(-skew_ra * (0.5 * dt * dt)));
    phi.fixed_view_mut::<3, 3>(POS, VEL)
        .copy_from(&(Mat3::identity() * dt));
    phi.fixed_view_mut::<3, 3>(POS, BA)
        .copy_from(&(-r * (0.5 * dt * dt)));
    phi.fixed_view_mut::<3, 3>(VEL, THETA)
        .copy_from(&(-skew_ra * dt));
    phi.fixed_view_mut::<3, 3>(VEL, BA).copy_from(&(-r * dt));
    phi
}

/// Matrix exponential `exp(F dt)` of the left error dynamics frozen at the
/// step's start state and measurement.
///
/// `F` is nilpotent (no error component feeds back on itself), so the series
/// terminates after the cubic term and the result is exact.
pub fn phi_step(x: &FullState, sample: &ImuSample, dt: f64) -> Mat15 {
    let (f, _) = error_dynamics(x, sample);
    let fdt = f * dt;
    let mut phi = Mat15::identity();
    let mut term = Mat15::identity();
    for k in 1..=4 {
        term = term * fdt / k as f64;
        phi += term;
    }
    phi
}

/// Trapezoidal covariance step:
/// `S <- Phi S Phi^T + (dt/2) [Phi G0 Q G0^T Phi^T + G1 Q G1^T]`, symmetrized.
pub fn cov_step(
    cov: &Mat15,
    phi_k: &Mat15,
    g_prev: &Mat15x12,
    g_next: &Mat15x12,
    q: &Mat12,
    dt: f64,
) -> Mat15 {
    let phig = phi_k * g_prev;
    let prop = phi_k * cov * phi_k.transpose();
    let noise = (phig * q * phig.transpose() + g_next * q * g_next.transpose()) * (0.5 * dt);
    let total = prop + noise;
    (total + total.transpose()) * 0.5
}

/// Propagates state, transition matrix and covariance over a sample sequence.
///
/// The first sample defines `t_s` and contributes no step; each consecutive
/// pair forms one interval integrated with [`zoh_step`], with the per-step
/// transition [`step_jacobian`] left-multiplied into the accumulated matrix
/// and the covariance advanced by [`cov_step`].
pub fn propagate(
    x_s: &FullState,
    cov_s: &Mat15,
    seq: &[ImuSample],
    np: &NoiseParams,
) -> Result<PropagationResult> {
    validate_sequence(seq)?;
    let q = np.q_matrix();
    let mut x = *x_s;
    let mut phi = Mat15::identity();
    let mut cov = *cov_s;
    for w in seq.windows(2) {
        let dt = w[1].t - w[0].t;
        let phi_k = step_jacobian(&x, &w[0], dt);
        let (_, g_prev) = error_dynamics(&x, &w[0]);
        let x_next = zoh_step(&x, &w[0], dt, np);
        let (_, g_next) = error_dynamics(&x_next, &w[1]);
        cov = cov_step(&cov, &phi_k, &g_prev, &g_next, &q, dt);
        phi = phi_k * phi;
        x = x_next;
    }
    Ok(PropagationResult { state: x, phi, cov })
}

/// Largest absolute deviation of `m` from its transpose.
pub fn symmetry_error(m: &Mat15) -> f64 {
    (m - m.transpose()).amax()
}

/// Smallest eigenvalue of the symmetrized matrix.
pub fn min_symmetric_eigenvalue(m: &Mat15) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    eig.iter().cloned().fold(f64::INFINITY, f64::min)
}
