//! Two-way synthesis between propagation and preintegration: a preintegrated
//! measurement (increments, bias Jacobian, covariance) built by wrapping the
//! propagation routine, and propagation quantities (transition matrix,
//! covariance) recovered from a preintegration module.
//!
//! All conversions run between the left error state on the propagation side
//! and one of the right preint perturbation conventions; the conversion
//! Jacobian `A = d(dx_pred_left) / d(dx_preint)` is block diagonal with
//! rotation blocks determined by the convention and a `-I` bias block from
//! the `db_se = -db` sign convention.

use crate::error::{Error, Result};
use crate::model::{FullState, ImuBias, ImuSample, NavState, NoiseParams};
use crate::preintegration::{
    apply_bias_correction, Convention, PreintegratedMeasurement,
};
use crate::propagation::{propagate, PropagationResult};
use crate::so3;
use crate::{Mat15, Mat15x6, Mat3, Mat6, BA, BG, POS, THETA, VEL};

/// Jacobians converting between the propagation-side left error state and a
/// preint-side right perturbation.
#[derive(Debug, Clone)]
pub struct ConversionJacobians {
    /// `d(dx_{e|s} left) / d(dx_se preint)`, 15x15.
    pub a: Mat15,
    /// `d(db_s preint) / d(db_s left)`, 6x6.
    pub p_b: Mat6,
    /// Convention of the preint side; the propagation side is always the
    /// left error state.
    pub preint_convention: Convention,
}

impl ConversionJacobians {
    /// Inverse of `a` with a conditioning guard.
    pub fn a_inverse(&self) -> Result<Mat15> {
        let inv = self
            .a
            .try_inverse()
            .ok_or_else(|| Error::Conditioning("conversion Jacobian is singular".into()))?;
        let residual = (self.a * inv - Mat15::identity()).amax();
        if residual > 1e-10 {
            return Err(Error::Conditioning(format!(
                "A * A^-1 deviates from identity by {residual:.3e}"
            )));
        }
        Ok(inv)
    }
}

/// Propagation quantities recovered from a preintegrated measurement.
#[derive(Debug, Clone)]
pub struct RecoveredProp {
    /// Transition matrix of the left error state over the interval.
    pub phi: Mat15,
    /// `d(dx_{e|s}) / d(dx_se)`: block-structured noise input of the
    /// recovered propagation (9x9 nav block, 6x6 bias block, zeros off the
    /// diagonal).
    pub gmat: Mat15,
    /// Recovered covariance of the left error state at the interval end.
    pub cov: Mat15,
}

/// Predicts the end state from the start state and a preintegrated
/// measurement:
/// `R = R_ws dR`, `p = p_s + v_s dt + 1/2 g dt^2 + R_ws dp`,
/// `v = v_s + R_ws dv + g dt`, `b = b_s + db`.
pub fn predict(
    x_s: &FullState,
    bias_s: &ImuBias,
    pm: &PreintegratedMeasurement,
    np: &NoiseParams,
) -> FullState {
    let r_ws = x_s.nav.rot;
    let dt = pm.dt_total;
    let g = np.gravity_w;
    FullState {
        nav: NavState {
            rot: r_ws * pm.dr,
            pos: x_s.nav.pos + x_s.nav.vel * dt + g * (0.5 * dt * dt) + r_ws * pm.dp,
            vel: x_s.nav.vel + r_ws * pm.dv + g * dt,
        },
        bias: *bias_s + ImuBias::from_vector(&pm.db),
    }
}

/// Analytic conversion Jacobians between the left error of the predicted
/// state and the preint perturbation of the increments.
///
/// Rotation blocks: `R_pred` on attitude for every convention; `R_ws`
/// (tangent), `R_pred` (manifold) or `-R_ws` (Forster) on position/velocity;
/// `-I` on the bias block. `P_b = -I` for all three conventions.
pub fn conversion_jacobians(
    x_s: &FullState,
    x_pred: &FullState,
    preint_convention: Convention,
) -> ConversionJacobians {
    let r_ws = x_s.nav.rot;
    let r_pred = x_pred.nav.rot;
    let mut a = Mat15::identity();
    let (rot_block, pv_block) = match preint_convention {
        Convention::TangentRight => (r_pred, r_ws),
        Convention::ManifoldRight => (r_pred, r_pred),
        Convention::Forster => (-r_pred, -r_ws),
    };
    a.fixed_view_mut::<3, 3>(THETA, THETA).copy_from(&rot_block);
    a.fixed_view_mut::<3, 3>(POS, POS).copy_from(&pv_block);
    a.fixed_view_mut::<3, 3>(VEL, VEL).copy_from(&pv_block);
    a.fixed_view_mut::<6, 6>(BG, BG).copy_from(&(-Mat6::identity()));
    ConversionJacobians {
        a,
        p_b: -Mat6::identity(),
        preint_convention,
    }
}

/// Builds a preintegrated measurement by running the propagation module from
/// the canonical start state (identity navigation, zero gravity, zero
/// covariance) and converting its outputs.
pub fn preint_by_prop(
    bias_s: &ImuBias,
    seq: &[ImuSample],
    np: &NoiseParams,
    preint_convention: Convention,
) -> Result<PreintegratedMeasurement> {
    let start = FullState::new(NavState::identity(), *bias_s);
    let zero_g = np.with_zero_gravity();
    let res = propagate(&start, &Mat15::zeros(), seq, &zero_g)?;
    let dt_total = seq[seq.len() - 1].t - seq[0].t;
    convert_propagation(&start, &res, dt_total, bias_s, preint_convention)
}

/// Conversion core shared by [`preint_by_prop`]: maps a canonical zero-g
/// propagation result into a preintegrated measurement.
fn convert_propagation(
    start: &FullState,
    res: &PropagationResult,
    dt_total: f64,
    bias_s: &ImuBias,
    preint_convention: Convention,
) -> Result<PreintegratedMeasurement> {
    let conv = conversion_jacobians(start, &res.state, preint_convention);
    let a_inv = conv.a_inverse()?;
    let p_b_inv = conv
        .p_b
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("P_b is singular".into()))?;

    // Bias sensitivity of the predicted state through the increments: the
    // bias block-column of Phi minus the direct feed-through of the constant
    // bias (its bottom 6x6 identity), leaving zero bias rows.
    let mut middle = Mat15x6::zeros();
    middle
        .fixed_view_mut::<9, 6>(0, 0)
        .copy_from(&res.phi.fixed_view::<9, 6>(0, BG).into_owned());

    let mut j_bias = a_inv * middle * p_b_inv;
    j_bias.fixed_view_mut::<6, 6>(BG, 0).fill(0.0);

    let cov = a_inv * res.cov * a_inv.transpose();

    Ok(PreintegratedMeasurement {
        dr: res.state.nav.rot,
        dp: res.state.nav.pos,
        dv: res.state.nav.vel,
        db: crate::Vec6::zeros(),
        dt_total,
        j_bias,
        cov: (cov + cov.transpose()) * 0.5,
        bias_lin: *bias_s,
        convention: preint_convention,
    })
}

/// Recovers the transition matrix, noise-input matrix and propagated
/// covariance from a preintegrated measurement.
///
/// If `pm` was linearized at a different bias than `bias_s`, its increments
/// are first-order corrected to `bias_s` before the prediction Jacobians are
/// assembled.
pub fn prop_by_preint(
    x_s: &FullState,
    cov_s: &Mat15,
    bias_s: &ImuBias,
    pm: &PreintegratedMeasurement,
    np: &NoiseParams,
) -> Result<RecoveredProp> {
    so3::validate_rotation(&pm.dr)?;
    let bias_step = (bias_s.vector() - pm.bias_lin.vector()).amax();
    let pm_local;
    let pm = if bias_step > 0.0 {
        let (dr, dp, dv) = apply_bias_correction(pm, bias_s);
        pm_local = PreintegratedMeasurement {
            dr,
            dp,
            dv,
            bias_lin: *bias_s,
            ..pm.clone()
        };
        &pm_local
    } else {
        pm
    };

    let x_pred = predict(x_s, bias_s, pm, np);
    let r_ws = x_s.nav.rot;

    // Partial derivative of the prediction equations with respect to the
    // start-state left error, holding the increments fixed.
    let mut d = Mat15::identity();
    d.fixed_view_mut::<3, 3>(POS, THETA)
        .copy_from(&(-so3::skew(&(r_ws * pm.dp))));
    d.fixed_view_mut::<3, 3>(POS, VEL)
        .copy_from(&(Mat3::identity() * pm.dt_total));
    d.fixed_view_mut::<3, 3>(VEL, THETA)
        .copy_from(&(-so3::skew(&(r_ws * pm.dv))));

    let conv = conversion_jacobians(x_s, &x_pred, pm.convention);
    let g_nn = conv.a.fixed_view::<9, 9>(0, 0).into_owned();
    let j_n = pm.j_bias.fixed_view::<9, 6>(0, 0).into_owned();

    let mut phi = d;
    let correction = g_nn * j_n * conv.p_b;
    phi.fixed_view_mut::<9, 6>(0, BG).copy_from(
        &(phi.fixed_view::<9, 6>(0, BG).into_owned() + correction),
    );

    let cov = phi * cov_s * phi.transpose() + conv.a * pm.cov * conv.a.transpose();
    Ok(RecoveredProp {
        phi,
        gmat: conv.a,
        cov: (cov + cov.transpose()) * 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{boxminus_left, boxplus_left};
    use crate::preintegration::{bias_jacobian_check, preintegrate, Preintegrator};
    use crate::propagation::{min_symmetric_eigenvalue, symmetry_error};
    use crate::synth::{generate, TrialSpec};
    use crate::{Vec15, Vec3};

    /// Retracts a 15-dim perturbation onto the increments of `pm` under its
    /// convention (test-side inverse of the perturbation definitions).
    fn retract_pm(pm: &PreintegratedMeasurement, dx: &Vec15) -> PreintegratedMeasurement {
        let dtheta = dx.fixed_rows::<3>(THETA).into_owned();
        let dpos = dx.fixed_rows::<3>(POS).into_owned();
        let dvel = dx.fixed_rows::<3>(VEL).into_owned();
        let dbias = dx.fixed_rows::<6>(BG).into_owned();
        let mut out = pm.clone();
        match pm.convention {
            Convention::TangentRight => {
                out.dr = pm.dr * so3::exp(&dtheta);
                out.dp = pm.dp + dpos;
                out.dv = pm.dv + dvel;
            }
            Convention::ManifoldRight => {
                out.dr = pm.dr * so3::exp(&dtheta);
                out.dp = pm.dp + out.dr * dpos;
                out.dv = pm.dv + out.dr * dvel;
            }
            Convention::Forster => {
                out.dr = pm.dr * so3::exp(&-dtheta);
                out.dp = pm.dp - dpos;
                out.dv = pm.dv - dvel;
            }
        }
        // db_se = -db in every convention.
        out.db = pm.db - dbias;
        out
    }

    #[test]
    fn predict_identity_start_zero_gravity_returns_increments() {
        let spec = TrialSpec::new(7);
        let (seq, _, b0) = generate(&spec);
        let np = spec.noise.with_zero_gravity();
        let pm = preintegrate(&b0, &seq, &np, Convention::TangentRight).unwrap();
        let x = predict(&FullState::new(NavState::identity(), b0), &b0, &pm, &np);
        assert_eq!(x.nav.rot, pm.dr);
        assert_eq!(x.nav.pos, pm.dp);
        assert_eq!(x.nav.vel, pm.dv);
    }

    #[test]
    fn predict_static_imu_cancels_gravity() {
        let np = NoiseParams::default_mems();
        let r_ws = so3::exp(&Vec3::new(0.4, -0.7, 0.2));
        let x_s = FullState::new(
            NavState::new(r_ws, Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.3, -0.1, 0.2)),
            ImuBias::zero(),
        );
        let reaction = -(r_ws.transpose() * np.gravity_w);
        let seq: Vec<ImuSample> = (0..=400)
            .map(|k| ImuSample::new(k as f64 * 0.005, Vec3::zeros(), reaction))
            .collect();
        let pm = preintegrate(&ImuBias::zero(), &seq, &np, Convention::TangentRight).unwrap();
        let pred = predict(&x_s, &ImuBias::zero(), &pm, &np);
        assert!((pred.nav.vel - x_s.nav.vel).norm() < 1e-8);
        assert!((pred.nav.pos - (x_s.nav.pos + x_s.nav.vel * 2.0)).norm() < 1e-8);
    }

    #[test]
    fn predict_matches_propagation_end_state() {
        let spec = TrialSpec::new(113);
        let (seq, x0, b0) = generate(&spec);
        let np = spec.noise;
        let x_s = FullState::new(x0.nav, b0);
        let direct = propagate(&x_s, &Mat15::zeros(), &seq, &np).unwrap();
        let pm = preintegrate(&b0, &seq, &np, Convention::ManifoldRight).unwrap();
        let pred = predict(&x_s, &b0, &pm, &np);
        assert!((pred.nav.rot - direct.state.nav.rot).amax() < 1e-8);
        assert!((pred.nav.pos - direct.state.nav.pos).norm() < 1e-8);
        assert!((pred.nav.vel - direct.state.nav.vel).norm() < 1e-8);
    }

    #[test]
    fn conversion_rotation_block_is_identity_at_identity() {
        let x = FullState::identity();
        let conv = conversion_jacobians(&x, &x, Convention::TangentRight);
        assert_eq!(
            conv.a.fixed_view::<3, 3>(THETA, THETA).into_owned(),
            Mat3::identity()
        );
        assert_eq!(conv.p_b, -Mat6::identity());
    }

    #[test]
    fn conversion_jacobian_matches_finite_differences() {
        let eps = 1e-6;
        for trial in 0..20 {
            let spec = TrialSpec {
                duration: 0.5,
                ..TrialSpec::new(200 + trial)
            };
            let (seq, x0, b0) = generate(&spec);
            let np = spec.noise;
            let x_s = FullState::new(x0.nav, b0);
            for conv_tag in Convention::ALL {
                let pm = preintegrate(&b0, &seq, &np, conv_tag).unwrap();
                let x_pred = predict(&x_s, &b0, &pm, &np);
                let a = conversion_jacobians(&x_s, &x_pred, conv_tag).a;
                for col in 0..15 {
                    let mut dx = Vec15::zeros();
                    dx[col] = eps;
                    let plus = predict(&x_s, &b0, &retract_pm(&pm, &dx), &np);
                    dx[col] = -eps;
                    let minus = predict(&x_s, &b0, &retract_pm(&pm, &dx), &np);
                    let numeric = boxminus_left(&plus, &minus) / (2.0 * eps);
                    let dev = (numeric - a.column(col)).amax();
                    assert!(
                        dev < 1e-6,
                        "{} column {col}: deviation {dev:.3e}",
                        conv_tag.name()
                    );
                }
            }
        }
    }

    #[test]
    fn conversion_inverse_is_well_conditioned() {
        let spec = TrialSpec::new(301);
        let (seq, x0, b0) = generate(&spec);
        let x_s = FullState::new(x0.nav, b0);
        let pm = preintegrate(&b0, &seq, &spec.noise, Convention::Forster).unwrap();
        let x_pred = predict(&x_s, &b0, &pm, &spec.noise);
        let conv = conversion_jacobians(&x_s, &x_pred, Convention::Forster);
        let inv = conv.a_inverse().unwrap();
        assert!((conv.a * inv - Mat15::identity()).amax() < 1e-10);
    }

    #[test]
    fn preint_by_prop_matches_direct_preintegration() {
        let spec = TrialSpec::new(401);
        let (seq, _, b0) = generate(&spec);
        let np = spec.noise;
        for conv in Convention::ALL {
            let direct = preintegrate(&b0, &seq, &np, conv).unwrap();
            let bridged = preint_by_prop(&b0, &seq, &np, conv).unwrap();
            assert!((bridged.dr - direct.dr).amax() < 1e-9);
            assert!((bridged.dp - direct.dp).norm() < 1e-9);
            assert!((bridged.dv - direct.dv).norm() < 1e-9);
            assert!(
                (bridged.j_bias - direct.j_bias).amax() < 1e-6,
                "{}: J_b deviates by {:.3e}",
                conv.name(),
                (bridged.j_bias - direct.j_bias).amax()
            );
            let denom = direct.cov.amax();
            assert!(
                (bridged.cov - direct.cov).amax() / denom < 1e-6,
                "{}: cov deviates by {:.3e} relative",
                conv.name(),
                (bridged.cov - direct.cov).amax() / denom
            );
        }
    }

    #[test]
    fn preint_by_prop_satisfies_measurement_invariants() {
        let spec = TrialSpec::new(419);
        let (seq, _, b0) = generate(&spec);
        let pm = preint_by_prop(&b0, &seq, &spec.noise, Convention::TangentRight).unwrap();
        assert_eq!(pm.j_bias.fixed_view::<6, 6>(BG, 0).amax(), 0.0);
        assert!(so3::validate_rotation(&pm.dr).is_ok());
        assert!(symmetry_error(&pm.cov) < 1e-10);
        assert!(min_symmetric_eigenvalue(&pm.cov) > -1e-10);
        let dev = bias_jacobian_check(&pm, &seq, &spec.noise).unwrap();
        assert!(dev < 1e-4, "bridged J_b finite-difference deviation {dev:.3e}");
    }

    #[test]
    fn prop_by_preint_zero_length_interval() {
        let np = NoiseParams::default_mems();
        let pm = Preintegrator::new(ImuBias::zero(), &np, Convention::TangentRight).finish();
        let mut cov_s = Mat15::identity();
        cov_s[(0, 0)] = 0.3;
        let rec = prop_by_preint(&FullState::identity(), &cov_s, &ImuBias::zero(), &pm, &np).unwrap();
        assert_eq!(rec.phi, Mat15::identity());
        assert_eq!(rec.cov, cov_s);
    }

    #[test]
    fn prop_by_preint_matches_direct_propagation() {
        let spec = TrialSpec::new(433);
        let (seq, x0, b0) = generate(&spec);
        let np = spec.noise;
        let x_s = FullState::new(x0.nav, b0);
        let cov_s = crate::experiments::default_initial_covariance();
        let direct = propagate(&x_s, &cov_s, &seq, &np).unwrap();
        for conv in Convention::ALL {
            let pm = preintegrate(&b0, &seq, &np, conv).unwrap();
            let rec = prop_by_preint(&x_s, &cov_s, &b0, &pm, &np).unwrap();
            let rel = |a: &Mat15, b: &Mat15| (a - b).amax() / b.amax();
            assert!(rel(&rec.phi, &direct.phi) < 1e-4, "{}", conv.name());
            assert!(rel(&rec.cov, &direct.cov) < 1e-4, "{}", conv.name());
            // Off-diagonal blocks of the recovered noise input stay zero.
            assert_eq!(rec.gmat.fixed_view::<9, 6>(0, BG).amax(), 0.0);
            assert_eq!(rec.gmat.fixed_view::<6, 9>(BG, 0).amax(), 0.0);
        }
    }

    #[test]
    fn round_trip_reproduces_propagation() {
        let np = NoiseParams::default_mems();
        let cov_s = crate::experiments::default_initial_covariance();
        for trial in 0..100 {
            let spec = TrialSpec {
                duration: 1.0,
                ..TrialSpec::new(1000 + trial)
            };
            let (seq, x0, b0) = generate(&spec);
            let x_s = FullState::new(x0.nav, b0);
            let direct = propagate(&x_s, &cov_s, &seq, &np).unwrap();
            let pm = preint_by_prop(&b0, &seq, &np, Convention::ManifoldRight).unwrap();
            let rec = prop_by_preint(&x_s, &cov_s, &b0, &pm, &np).unwrap();
            let pred = predict(&x_s, &b0, &pm, &np);
            assert!(boxminus_left(&pred, &direct.state).amax() < 1e-9);
            assert!((rec.phi - direct.phi).amax() / direct.phi.amax() < 1e-6);
            assert!((rec.cov - direct.cov).amax() / direct.cov.amax() < 1e-6);
        }
    }

    #[test]
    fn prop_by_preint_applies_bias_correction() {
        let spec = TrialSpec::new(509);
        let (seq, x0, b0) = generate(&spec);
        let np = spec.noise;
        let x_s = FullState::new(x0.nav, b0);
        let cov_s = Mat15::identity() * 1e-4;
        let direct = propagate(&x_s, &cov_s, &seq, &np).unwrap();
        // Integrate at a slightly wrong bias; the recovery corrects to b0.
        let b_off = ImuBias::new(b0.bg + Vec3::new(2e-3, -1e-3, 1e-3), b0.ba);
        let pm = preintegrate(&b_off, &seq, &np, Convention::TangentRight).unwrap();
        let rec = prop_by_preint(&x_s, &cov_s, &b0, &pm, &np).unwrap();
        let rel = (rec.phi - direct.phi).amax() / direct.phi.amax();
        assert!(rel < 1e-2, "phi relative deviation {rel:.3e}");
    }

    #[test]
    fn first_order_transition_against_perturbed_propagation() {
        // The recovered Phi predicts the effect of start-state perturbations.
        let spec = TrialSpec {
            duration: 2.0,
            ..TrialSpec::new(601)
        };
        let (seq, x0, b0) = generate(&spec);
        let np = spec.noise;
        let x_s = FullState::new(x0.nav, b0);
        let pm = preintegrate(&b0, &seq, &np, Convention::TangentRight).unwrap();
        let rec = prop_by_preint(&x_s, &Mat15::zeros(), &b0, &pm, &np).unwrap();
        let base = propagate(&x_s, &Mat15::zeros(), &seq, &np).unwrap();
        let eps = 1e-5;
        let mut dv = Vec15::zeros();
        dv[1] = eps;
        dv[7] = -eps;
        dv[10] = 0.5 * eps;
        let xp = boxplus_left(&x_s, &dv);
        let perturbed = propagate(&xp, &Mat15::zeros(), &seq, &np).unwrap();
        let numeric = boxminus_left(&perturbed.state, &base.state);
        assert!((numeric - rec.phi * dv).norm() < 1e-8);
    }
}

