//! IMU propagation and IMU preintegration as two realizations of the same
//! computation.
//!
//! The crate provides:
//!
//! - [`so3`]: rotation-group kernel (exp/log maps, left/right Jacobians,
//!   quaternion kinematics helpers),
//! - [`model`]: IMU sample/bias/state types, continuous-time dynamics and the
//!   left error-state linearization,
//! - [`propagation`]: strapdown state integration with a 15x15 transition
//!   matrix and trapezoidal covariance propagation under the left error state,
//! - [`preintegration`]: direct computation of the preintegrated measurement
//!   (dR, dp, dv, db, dt), its bias Jacobian and covariance under the
//!   tangent-right, manifold-right and Forster perturbation conventions,
//! - [`bridge`]: exact conversions that synthesize preintegration from a
//!   propagation routine and recover propagation from a preintegration module,
//! - [`factors`]: preintegration residuals, residual Jacobians and residual
//!   covariances for graph optimization,
//! - [`synth`]: seeded random IMU sequence generation,
//! - [`experiments`]: the equivalence experiments and self tests behind the
//!   `imu-preint` binary.
//!
//! Every numerical routine operates on plain `nalgebra` value types and is a
//! pure function; all of it is safe to call concurrently.
//!
//! The error-state ordering is fixed crate-wide as
//! `[dtheta(3), dp(3), dv(3), dbg(3), dba(3)]` and the process-noise ordering
//! as `[ng(3), na(3), nwg(3), nwa(3)]`.

pub mod bridge;
pub mod error;
pub mod experiments;
pub mod factors;
pub mod model;
pub mod preintegration;
pub mod propagation;
pub mod so3;
pub mod synth;

pub use error::Error;

/// 3-vector of f64.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 6-vector of f64.
pub type Vec6 = nalgebra::Vector6<f64>;
/// 15-vector holding an error state `[dtheta, dp, dv, dbg, dba]`.
pub type Vec15 = nalgebra::SVector<f64, 15>;
/// 3x3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
/// 4x4 matrix.
pub type Mat4 = nalgebra::Matrix4<f64>;
/// 6x6 matrix.
pub type Mat6 = nalgebra::Matrix6<f64>;
/// 15x15 matrix over the error state.
pub type Mat15 = nalgebra::SMatrix<f64, 15, 15>;
/// 15x6 bias Jacobian.
pub type Mat15x6 = nalgebra::SMatrix<f64, 15, 6>;
/// 15x12 noise input matrix.
pub type Mat15x12 = nalgebra::SMatrix<f64, 15, 12>;
/// 12x12 continuous noise PSD matrix.
pub type Mat12 = nalgebra::SMatrix<f64, 12, 12>;

/// Row/column offset of the attitude error block.
pub const THETA: usize = 0;
/// Row/column offset of the position error block.
pub const POS: usize = 3;
/// Row/column offset of the velocity error block.
pub const VEL: usize = 6;
/// Row/column offset of the gyro-bias error block.
pub const BG: usize = 9;
/// Row/column offset of the accel-bias error block.
pub const BA: usize = 12;
