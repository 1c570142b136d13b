//! Rotation-group kernel: exponential/logarithm maps, left/right Jacobians,
//! the skew operator and quaternion kinematics helpers.
//!
//! Rotation matrices are plain `Matrix3<f64>` (world-from-sensor style,
//! `det = +1`), rotation vectors are `Vector3<f64>` in radians, quaternions
//! are Hamilton `[w, x, y, z]` stored as `Vector4<f64>`.
//!
//! Below the small-angle threshold all maps fall back to second-order Taylor
//! expansions so that nothing divides by a vanishing angle.

use crate::error::{Error, Result};
use crate::{Mat3, Mat4, Vec3};
use nalgebra::Vector4;

/// Angle below which Taylor expansions replace the closed forms.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric (cross-product) matrix: `skew(v) * w == v x w`.
#[rustfmt::skip]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(
         0.0, -v.z,  v.y,
         v.z,  0.0, -v.x,
        -v.y,  v.x,  0.0,
    )
}

/// Inverse of [`skew`] on antisymmetric matrices.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Exponential map: rotation vector to rotation matrix (Rodrigues formula).
pub fn exp(phi: &Vec3) -> Mat3 {
    exp_with_branch(phi, phi.norm() < SMALL_ANGLE)
}

pub(crate) fn exp_with_branch(phi: &Vec3, taylor: bool) -> Mat3 {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let (a, b) = if taylor {
        // sin(t)/t and (1-cos(t))/t^2 to second order
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + a * k + b * (k * k)
}

/// Logarithm map: rotation matrix to rotation vector with norm <= pi.
///
/// Assumes `r` is a valid rotation; use [`log_checked`] on untrusted input.
pub fn log(r: &Mat3) -> Vec3 {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let antisym = vee(&(r - r.transpose())) * 0.5; // = sin(theta) * axis

    if theta < SMALL_ANGLE {
        // phi = theta/sin(theta) * antisym, expanded to second order
        return antisym * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // Near pi the antisymmetric part degenerates; recover the axis from
        // the largest diagonal element of the symmetric part.
        let b = (r + r.transpose()) * 0.5 - Mat3::identity() * cos_theta;
        // b = (1 - cos(theta)) * axis * axis^T
        let i = (0..3)
            .max_by(|&a, &c| b[(a, a)].partial_cmp(&b[(c, c)]).unwrap())
            .unwrap();
        let col = b.column(i).into_owned();
        let mut axis = col / (b[(i, i)] * (1.0 - cos_theta)).sqrt().max(f64::MIN_POSITIVE);
        axis = axis.normalize();
        // Keep the sign consistent with the antisymmetric part when it still
        // carries signal.
        if axis.dot(&antisym) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    antisym * (theta / theta.sin())
}

/// [`log`] with an orthonormality check on the input.
pub fn log_checked(r: &Mat3) -> Result<Vec3> {
    validate_rotation(r)?;
    Ok(log(r))
}

/// Verifies `r^T r = I` and `det(r) = +1` to the rotation-matrix tolerance.
pub fn validate_rotation(r: &Mat3) -> Result<()> {
    if !r.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("rotation matrix".into()));
    }
    let gram = r.transpose() * r - Mat3::identity();
    let max_dev = gram.amax();
    if max_dev > 1e-9 {
        return Err(Error::InvalidRotation(format!(
            "R^T R deviates from identity by {max_dev:.3e}"
        )));
    }
    let det_dev = (r.determinant() - 1.0).abs();
    if det_dev > 1e-9 {
        return Err(Error::InvalidRotation(format!(
            "det(R) deviates from +1 by {det_dev:.3e}"
        )));
    }
    Ok(())
}

/// Nearest rotation matrix in the Frobenius sense (polar projection).
pub fn project_to_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let d = (u * vt).determinant();
    u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d.signum())) * vt
}

/// Right Jacobian of SO(3): `exp(phi + d) ~ exp(phi) * exp(Jr(phi) * d)`.
pub fn right_jacobian(phi: &Vec3) -> Mat3 {
    right_jacobian_with_branch(phi, phi.norm() < SMALL_ANGLE)
}

pub(crate) fn right_jacobian_with_branch(phi: &Vec3, taylor: bool) -> Mat3 {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let (a, b) = if taylor {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Mat3::identity() - a * k + b * (k * k)
}

/// Left Jacobian of SO(3): `exp(phi + d) ~ exp(Jl(phi) * d) * exp(phi)`.
pub fn left_jacobian(phi: &Vec3) -> Mat3 {
    right_jacobian(&-phi)
}

/// Inverse of the right Jacobian.
pub fn inverse_right_jacobian(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let c = if theta2.sqrt() < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        // (1 + cos)/(2 t sin) written via cot(t/2) to stay finite at t = pi
        let half = 0.5 * theta;
        1.0 / theta2 - half.cos() / (2.0 * theta * half.sin())
    };
    Mat3::identity() + 0.5 * k + c * (k * k)
}

/// Inverse of the left Jacobian.
pub fn inverse_left_jacobian(phi: &Vec3) -> Mat3 {
    inverse_right_jacobian(&-phi)
}

/// Quaternion kinematics matrix: `q_dot = 1/2 * omega_matrix(w) * q` for
/// Hamilton quaternions `[w, x, y, z]`.
#[rustfmt::skip]
pub fn omega_matrix(w: &Vec3) -> Mat4 {
    Mat4::new(
        0.0, -w.x, -w.y, -w.z,
        w.x,  0.0,  w.z, -w.y,
        w.y, -w.z,  0.0,  w.x,
        w.z,  w.y, -w.x,  0.0,
    )
}

/// Rotation matrix of a unit Hamilton quaternion `[w, x, y, z]`.
pub fn quat_to_rot(q: &Vector4<f64>) -> Mat3 {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Unit Hamilton quaternion `[w, x, y, z]` of a rotation matrix.
///
/// Uses Shepperd's max-trace branch selection; the result is normalized and
/// sign-canonicalized to `w >= 0`.
pub fn rot_to_quat(r: &Mat3) -> Vector4<f64> {
    let t = r.trace();
    let mut q;
    if t > r[(0, 0)] && t > r[(1, 1)] && t > r[(2, 2)] {
        let s = (t + 1.0).sqrt() * 2.0;
        q = Vector4::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        );
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        q = Vector4::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        );
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        q = Vector4::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        );
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        q = Vector4::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        );
    }
    q.normalize_mut();
    if q[0] < 0.0 {
        q = -q;
    }
    q
}
