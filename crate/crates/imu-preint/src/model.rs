//! Core IMU data types, measurement correction, continuous-time state
//! dynamics and the left error-state linearization.
//!
//! The error state is the 15-vector `[dtheta, dp, dv, dbg, dba]`; process
//! noise is ordered `[ng, na, nwg, nwa]` with continuous PSD
//! `Q = diag(sg^2 I, sa^2 I, swg^2 I, swa^2 I)`.

use crate::error::{Error, Result};
use crate::so3;
use crate::{Mat12, Mat15, Mat15x12, Mat3, Vec15, Vec3, BA, BG, POS, THETA, VEL};

/// One 6-axis IMU measurement: angular rate and specific force at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Timestamp in seconds.
    pub t: f64,
    /// Measured angular rate `w_m` in rad/s.
    pub gyro: Vec3,
    /// Measured specific force `a_m` in m/s^2.
    pub accel: Vec3,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vec3, accel: Vec3) -> Self {
        Self { t, gyro, accel }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.gyro.iter().all(|x| x.is_finite())
            && self.accel.iter().all(|x| x.is_finite())
    }
}

/// Gyroscope and accelerometer bias pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuBias {
    /// Gyro bias in rad/s.
    pub bg: Vec3,
    /// Accel bias in m/s^2.
    pub ba: Vec3,
}

impl ImuBias {
    pub fn new(bg: Vec3, ba: Vec3) -> Self {
        Self { bg, ba }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Stacked `[bg, ba]` 6-vector.
    pub fn vector(&self) -> nalgebra::Vector6<f64> {
        let mut v = nalgebra::Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.bg);
        v.fixed_rows_mut::<3>(3).copy_from(&self.ba);
        v
    }

    pub fn from_vector(v: &nalgebra::Vector6<f64>) -> Self {
        Self {
            bg: v.fixed_rows::<3>(0).into_owned(),
            ba: v.fixed_rows::<3>(3).into_owned(),
        }
    }
}

impl std::ops::Sub for ImuBias {
    type Output = ImuBias;
    fn sub(self, rhs: ImuBias) -> ImuBias {
        ImuBias::new(self.bg - rhs.bg, self.ba - rhs.ba)
    }
}

impl std::ops::Add for ImuBias {
    type Output = ImuBias;
    fn add(self, rhs: ImuBias) -> ImuBias {
        ImuBias::new(self.bg + rhs.bg, self.ba + rhs.ba)
    }
}

/// Orientation, position and velocity of the IMU in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    /// World-from-sensor rotation.
    pub rot: Mat3,
    /// Position in m.
    pub pos: Vec3,
    /// Velocity in m/s.
    pub vel: Vec3,
}

impl NavState {
    pub fn new(rot: Mat3, pos: Vec3, vel: Vec3) -> Self {
        Self { rot, pos, vel }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros(), Vec3::zeros())
    }

    pub fn validate(&self) -> Result<()> {
        so3::validate_rotation(&self.rot)?;
        if !(self.pos.iter().all(|x| x.is_finite()) && self.vel.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite("nav state".into()));
        }
        Ok(())
    }
}

/// IMU noise densities and the gravity vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Gyro noise density, rad/s/sqrt(Hz).
    pub sigma_g: f64,
    /// Accel noise density, m/s^2/sqrt(Hz).
    pub sigma_a: f64,
    /// Gyro bias random-walk density, rad/s^2/sqrt(Hz).
    pub sigma_wg: f64,
    /// Accel bias random-walk density, m/s^3/sqrt(Hz).
    pub sigma_wa: f64,
    /// Gravity in the world frame, m/s^2.
    pub gravity_w: Vec3,
}

impl NoiseParams {
    /// Typical consumer/MEMS-grade densities, world z-up gravity.
    pub fn default_mems() -> Self {
        Self {
            sigma_g: 1.7e-4,
            sigma_a: 2.0e-3,
            sigma_wg: 1.9e-5,
            sigma_wa: 3.0e-3,
            gravity_w: Vec3::new(0.0, 0.0, -9.80665),
        }
    }

    /// Same noise densities with gravity forced to zero.
    pub fn with_zero_gravity(&self) -> Self {
        Self {
            gravity_w: Vec3::zeros(),
            ..*self
        }
    }

    /// Continuous PSD matrix over `[ng, na, nwg, nwa]`.
    pub fn q_matrix(&self) -> Mat12 {
        let mut q = Mat12::zeros();
        for i in 0..3 {
            q[(i, i)] = self.sigma_g * self.sigma_g;
            q[(3 + i, 3 + i)] = self.sigma_a * self.sigma_a;
            q[(6 + i, 6 + i)] = self.sigma_wg * self.sigma_wg;
            q[(9 + i, 9 + i)] = self.sigma_wa * self.sigma_wa;
        }
        q
    }
}

/// Navigation state plus IMU bias: everything the 15-dimensional error state
/// perturbs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub nav: NavState,
    pub bias: ImuBias,
}

impl FullState {
    pub fn new(nav: NavState, bias: ImuBias) -> Self {
        Self { nav, bias }
    }

    pub fn identity() -> Self {
        Self::new(NavState::identity(), ImuBias::zero())
    }
}

/// Time derivative of the deterministic state (biases are constant; their
/// random walk enters only the covariance).
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub rot_dot: Mat3,
    pub pos_dot: Vec3,
    pub vel_dot: Vec3,
}

/// Bias-corrected angular rate and specific force.
pub fn correct(sample: &ImuSample, bias: &ImuBias) -> (Vec3, Vec3) {
    (sample.gyro - bias.bg, sample.accel - bias.ba)
}

/// Continuous-time deterministic dynamics:
/// `p_dot = v`, `R_dot = R skew(w_m - bg)`, `v_dot = g + R (a_m - ba)`.
pub fn state_derivative(x: &FullState, sample: &ImuSample, np: &NoiseParams) -> StateDerivative {
    let (omega, accel) = correct(sample, &x.bias);
    StateDerivative {
        rot_dot: x.nav.rot * so3::skew(&omega),
        pos_dot: x.nav.vel,
        vel_dot: np.gravity_w + x.nav.rot * accel,
    }
}

/// Left error-state dynamics matrices `(F, G)` with
/// `d(dx)/dt = F dx + G n`.
///
/// Nonzero blocks: `F[theta,bg] = -R`, `F[p,v] = I`,
/// `F[v,theta] = -skew(R a_hat)`, `F[v,ba] = -R`,
/// `G[theta,ng] = -R`, `G[v,na] = -R`, `G[bg,nwg] = G[ba,nwa] = I`.
pub fn error_dynamics(x: &FullState, sample: &ImuSample) -> (Mat15, Mat15x12) {
    let (_, accel) = correct(sample, &x.bias);
    let r = x.nav.rot;
    let mut f = Mat15::zeros();
    f.fixed_view_mut::<3, 3>(THETA, BG).copy_from(&(-r));
    f.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&Mat3::identity());
    f.fixed_view_mut::<3, 3>(VEL, THETA)
        .copy_from(&(-so3::skew(&(r * accel))));
    f.fixed_view_mut::<3, 3>(VEL, BA).copy_from(&(-r));

    let mut g = Mat15x12::zeros();
    g.fixed_view_mut::<3, 3>(THETA, 0).copy_from(&(-r));
    g.fixed_view_mut::<3, 3>(VEL, 3).copy_from(&(-r));
    g.fixed_view_mut::<3, 3>(BG, 6).copy_from(&Mat3::identity());
    g.fixed_view_mut::<3, 3>(BA, 9).copy_from(&Mat3::identity());
    (f, g)
}

/// Left retraction: `R <- exp(dtheta) R`, additive `p`, `v` and biases.
pub fn boxplus_left(x: &FullState, dx: &Vec15) -> FullState {
    let dtheta = dx.fixed_rows::<3>(THETA).into_owned();
    FullState {
        nav: NavState {
            rot: so3::exp(&dtheta) * x.nav.rot,
            pos: x.nav.pos + dx.fixed_rows::<3>(POS).into_owned(),
            vel: x.nav.vel + dx.fixed_rows::<3>(VEL).into_owned(),
        },
        bias: ImuBias {
            bg: x.bias.bg + dx.fixed_rows::<3>(BG).into_owned(),
            ba: x.bias.ba + dx.fixed_rows::<3>(BA).into_owned(),
        },
    }
}

/// Exact inverse of [`boxplus_left`]: the left error of `x` relative to `x_hat`.
pub fn boxminus_left(x: &FullState, x_hat: &FullState) -> Vec15 {
    let mut dx = Vec15::zeros();
    dx.fixed_rows_mut::<3>(THETA)
        .copy_from(&so3::log(&(x.nav.rot * x_hat.nav.rot.transpose())));
    dx.fixed_rows_mut::<3>(POS).copy_from(&(x.nav.pos - x_hat.nav.pos));
    dx.fixed_rows_mut::<3>(VEL).copy_from(&(x.nav.vel - x_hat.nav.vel));
    dx.fixed_rows_mut::<3>(BG).copy_from(&(x.bias.bg - x_hat.bias.bg));
    dx.fixed_rows_mut::<3>(BA).copy_from(&(x.bias.ba - x_hat.bias.ba));
    dx
}

/// Right retraction in the NavState style: `R <- R exp(dtheta)`, `p` and `v`
/// shifted in the body frame of the retracted rotation, additive biases.
pub fn boxplus_navstate_right(x: &FullState, dx: &Vec15) -> FullState {
    let dtheta = dx.fixed_rows::<3>(THETA).into_owned();
    let rot = x.nav.rot * so3::exp(&dtheta);
    FullState {
        nav: NavState {
            rot,
            pos: x.nav.pos + rot * dx.fixed_rows::<3>(POS).into_owned(),
            vel: x.nav.vel + rot * dx.fixed_rows::<3>(VEL).into_owned(),
        },
        bias: ImuBias {
            bg: x.bias.bg + dx.fixed_rows::<3>(BG).into_owned(),
            ba: x.bias.ba + dx.fixed_rows::<3>(BA).into_owned(),
        },
    }
}

/// Exact inverse of [`boxplus_navstate_right`].
pub fn boxminus_navstate_right(x: &FullState, x_hat: &FullState) -> Vec15 {
    let mut dx = Vec15::zeros();
    dx.fixed_rows_mut::<3>(THETA)
        .copy_from(&so3::log(&(x_hat.nav.rot.transpose() * x.nav.rot)));
    dx.fixed_rows_mut::<3>(POS)
        .copy_from(&(x.nav.rot.transpose() * (x.nav.pos - x_hat.nav.pos)));
    dx.fixed_rows_mut::<3>(VEL)
        .copy_from(&(x.nav.rot.transpose() * (x.nav.vel - x_hat.nav.vel)));
    dx.fixed_rows_mut::<3>(BG).copy_from(&(x.bias.bg - x_hat.bias.bg));
    dx.fixed_rows_mut::<3>(BA).copy_from(&(x.bias.ba - x_hat.bias.ba));
    dx
}

/// Checks that consecutive timestamps strictly increase and samples are finite.
pub fn validate_sequence(seq: &[ImuSample]) -> Result<()> {
    if seq.len() < 2 {
        return Err(Error::InvalidSequence(format!(
            "need at least 2 samples, got {}",
            seq.len()
        )));
    }
    for (i, s) in seq.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
        if i > 0 && s.t <= seq[i - 1].t {
            return Err(Error::InvalidSequence(format!(
                "timestamps not strictly increasing at index {i}: {} -> {}",
                seq[i - 1].t,
                s.t
            )));
        }
    }
    Ok(())
}
