//! Independent validation oracle for the torque components.
//!
//! Evaluates the Lagrange equations `τ = d/dt(∂T/∂q̇) − ∂T/∂q + ∂U/∂q`
//! entirely through central finite differences of the scalar kinetic and
//! potential energies, so no Jacobian, Christoffel or gravity-term code from
//! the analytic path is reused. It needs a consistent trajectory sample
//! `(X, Ẋ, Ẍ)` to form the time derivative.

use nalgebra::{DVector, Vector6};

use crate::kinematics::RobotGeometry;
use crate::JOINT_COUNT;

use super::spatial::{mass_matrix, potential_energy};
use super::{RobotState, Vector18, DOF_COUNT};

/// Step for partials in coordinates and rates.
const COORD_STEP: f64 = 1e-6;
/// Step for the time derivative along the trajectory.
const TIME_STEP: f64 = 5e-4;

fn kinetic(state: &RobotState, geom: &RobotGeometry, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let m = mass_matrix(&state.with_position(x), geom);
    0.5 * (v.transpose() * m * v)[(0, 0)]
}

/// ∂T/∂q̇ at `(x, v)` by central differences in each rate.
fn momentum(
    state: &RobotState,
    geom: &RobotGeometry,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    let mut p = DVector::zeros(DOF_COUNT);
    for k in 0..DOF_COUNT {
        let mut plus = v.clone();
        let mut minus = v.clone();
        plus[k] += COORD_STEP;
        minus[k] -= COORD_STEP;
        p[k] = (kinetic(state, geom, x, &plus) - kinetic(state, geom, x, &minus))
            / (2.0 * COORD_STEP);
    }
    p
}

/// Generalized torques from finite differences of the energies, split into
/// the actuated and body partitions (N·mm).
pub fn fd_lagrangian_oracle(state: &RobotState, geom: &RobotGeometry) -> (Vector18, Vector6<f64>) {
    let x = state.position();
    let v = state.velocity();
    let a = state.acceleration();

    // d/dt(∂T/∂q̇) along the trajectory x(t) = x + tv + ½t²a.
    let dt = TIME_STEP;
    let x_plus = &x + &v * dt + &a * (0.5 * dt * dt);
    let x_minus = &x - &v * dt + &a * (0.5 * dt * dt);
    let v_plus = &v + &a * dt;
    let v_minus = &v - &a * dt;
    let p_dot = (momentum(state, geom, &x_plus, &v_plus)
        - momentum(state, geom, &x_minus, &v_minus))
        / (2.0 * dt);

    let mut tau = p_dot;
    for k in 0..DOF_COUNT {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += COORD_STEP;
        minus[k] -= COORD_STEP;
        let dt_dq = (kinetic(state, geom, &plus, &v) - kinetic(state, geom, &minus, &v))
            / (2.0 * COORD_STEP);
        let du_dq = (potential_energy(&state.with_position(&plus), geom)
            - potential_energy(&state.with_position(&minus), geom))
            / (2.0 * COORD_STEP);
        tau[k] += -dt_dq + du_dq;
    }

    let tau_a = Vector18::from_iterator(tau.iter().take(JOINT_COUNT).copied());
    let tau_b = Vector6::from_iterator(tau.iter().skip(JOINT_COUNT).copied());
    (tau_a, tau_b)
}
