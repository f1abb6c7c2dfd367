//! Generalized torque components of the unconstrained 24-DOF model.
//!
//! `τ = M(X) Ẍ + C(X, Ẋ) Ẋ + (∂U/∂X)ᵀ`, split into the actuated rows `τ_a`
//! and the body rows `τ_b`. The velocity-product term uses the standard
//! symmetric contraction of the mass-matrix partials; those partials are
//! taken by central finite differences of the mass matrix, which is exact
//! enough at step 1e-6 and keeps every configuration-dependent term in one
//! code path.

use nalgebra::{DMatrix, DVector, Vector6};

use crate::kinematics::RobotGeometry;
use crate::JOINT_COUNT;

use super::spatial::{com_jacobians, link_frames, mass_matrix};
use super::{RobotState, Vector18, DOF_COUNT};

const MASS_FD_STEP: f64 = 1e-6;

/// Partial derivatives of the mass matrix along each generalized coordinate.
/// The body translation coordinates are skipped: the mass matrix is
/// translation invariant.
fn mass_matrix_partials(state: &RobotState, geom: &RobotGeometry) -> Vec<DMatrix<f64>> {
    let x = state.position();
    let mut partials = Vec::with_capacity(DOF_COUNT);
    for k in 0..DOF_COUNT {
        if (JOINT_COUNT..JOINT_COUNT + 3).contains(&k) {
            partials.push(DMatrix::zeros(DOF_COUNT, DOF_COUNT));
            continue;
        }
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += MASS_FD_STEP;
        minus[k] -= MASS_FD_STEP;
        let m_plus = mass_matrix(&state.with_position(&plus), geom);
        let m_minus = mass_matrix(&state.with_position(&minus), geom);
        partials.push((m_plus - m_minus) / (2.0 * MASS_FD_STEP));
    }
    partials
}

/// Gravity loading `(∂U/∂X)ᵀ` through the centre-of-mass Jacobians (N·mm).
pub fn gravity_torque(state: &RobotState, geom: &RobotGeometry) -> DVector<f64> {
    let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
    let g = geom.gravity_vec();
    let mut tau = DVector::zeros(DOF_COUNT);
    for (mass_t, jv) in com_jacobians(&frames, geom) {
        // U = -Σ m gᵀ p_com  ⇒  ∂U/∂X = -Σ m gᵀ J_com.
        tau -= mass_t * jv.transpose() * g;
    }
    tau
}

/// Generalized torque components `(τ_a, τ_b)` for the full state with
/// velocities and accelerations, in N·mm.
pub fn torque_components(state: &RobotState, geom: &RobotGeometry) -> (Vector18, Vector6<f64>) {
    let m = mass_matrix(state, geom);
    let dm = mass_matrix_partials(state, geom);
    let xd = state.velocity();
    let xdd = state.acceleration();

    // Velocity-product term: (CẊ)_i = Σ_k (∂M/∂x_k Ẋ)_i ẋ_k − ½ Ẋᵀ ∂M/∂x_i Ẋ.
    let mut bias = DVector::zeros(DOF_COUNT);
    for k in 0..DOF_COUNT {
        if xd[k] != 0.0 {
            bias += &dm[k] * &xd * xd[k];
        }
    }
    for i in 0..DOF_COUNT {
        bias[i] -= 0.5 * (xd.transpose() * &dm[i] * &xd)[(0, 0)];
    }

    let tau = m * xdd + bias + gravity_torque(state, geom);
    let tau_a = Vector18::from_iterator(tau.iter().take(JOINT_COUNT).copied());
    let tau_b = Vector6::from_iterator(tau.iter().skip(JOINT_COUNT).copied());
    (tau_a, tau_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec6;
    use approx::assert_relative_eq;

    #[test]
    fn everything_zero_without_motion_and_gravity() {
        let mut geom = RobotGeometry::default();
        geom.gravity = [0.0; 3];
        let state = RobotState::standing(
            Vector18::from_fn(|i, _| (i as f64) * 0.05 - 0.4),
            Vec6::new(10.0, -5.0, 100.0, 0.1, -0.05, 0.3),
        );
        let (tau_a, tau_b) = torque_components(&state, &geom);
        assert_relative_eq!(tau_a.norm(), 0.0, epsilon = 1e-9);
        assert_relative_eq!(tau_b.norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn static_stand_reduces_to_gravity_loading() {
        let geom = RobotGeometry::default();
        let state = RobotState::standing(
            Vector18::from_fn(|i, _| if i % 3 == 2 { 1.5 } else { 0.1 }),
            Vec6::new(0.0, 0.0, 100.0, 0.0, 0.0, 0.0),
        );
        let (tau_a, tau_b) = torque_components(&state, &geom);
        let grav = gravity_torque(&state, &geom);
        for i in 0..JOINT_COUNT {
            assert_relative_eq!(tau_a[i], grav[i], epsilon = 1e-9);
        }
        for i in 0..6 {
            assert_relative_eq!(tau_b[i], grav[JOINT_COUNT + i], epsilon = 1e-9);
        }
        // Vertical body row carries the whole weight.
        let weight = geom.total_mass() * 1e-3 * 9810.0;
        assert_relative_eq!(tau_b[2], weight, max_relative = 1e-9);
    }

    #[test]
    fn gravity_torque_matches_potential_finite_difference() {
        let geom = RobotGeometry::default();
        let state = RobotState::standing(
            Vector18::from_fn(|i, _| (i as f64 * 0.37).sin() * 0.6),
            Vec6::new(20.0, -40.0, 110.0, 0.2, -0.15, 0.8),
        );
        let grav = gravity_torque(&state, &geom);
        let x = state.position();
        let h = 1e-6;
        for k in 0..DOF_COUNT {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (crate::dynamics::potential_energy(&state.with_position(&plus), &geom)
                - crate::dynamics::potential_energy(&state.with_position(&minus), &geom))
                / (2.0 * h);
            let scale = grav[k].abs().max(1.0);
            assert!(
                (grav[k] - fd).abs() / scale < 1e-5,
                "coordinate {k}: analytic {} vs fd {}",
                grav[k],
                fd
            );
        }
    }

    #[test]
    fn bias_vanishes_at_zero_rates() {
        let geom = RobotGeometry::default();
        let mut state = RobotState::standing(
            Vector18::from_fn(|i, _| (i as f64 * 0.21).cos() * 0.5),
            Vec6::new(0.0, 0.0, 100.0, 0.1, 0.2, -0.4),
        );
        state.actuators.acc = Vector18::from_fn(|i, _| (i as f64).sin());
        state.body.acc = Vec6::new(10.0, 0.0, -4.0, 0.1, 0.0, 0.2);
        let (tau_a, tau_b) = torque_components(&state, &geom);
        // With zero rates the bias term drops and τ = MẌ + G.
        let m = mass_matrix(&state, &geom);
        let expected = m * state.acceleration() + gravity_torque(&state, &geom);
        for i in 0..JOINT_COUNT {
            assert_relative_eq!(tau_a[i], expected[i], max_relative = 1e-9, epsilon = 1e-9);
        }
        for i in 0..6 {
            assert_relative_eq!(
                tau_b[i],
                expected[JOINT_COUNT + i],
                max_relative = 1e-9,
                epsilon = 1e-9
            );
        }
    }
}
