//! Constrained Lagrangian torque model.
//!
//! The robot is modelled as an unconstrained 24-DOF system (18 actuated
//! joints plus the 6-DOF body) with grounded feet expressed as velocity
//! constraints. Generalized torques from the actuated and body coordinates
//! are composed into actuator torques through the constraint Jacobians and a
//! left pseudoinverse.
//!
//! Masses enter in kg and lengths in mm; internally the model works in the
//! mm-tonne-second system so all energies and torques come out in N·mm
//! directly.

mod constraints;
mod oracle;
mod spatial;
mod torque;

pub use constraints::{
    actuator_torque, assemble_constraints, compose_torque, constrained_torque, constraint_blocks,
    joint_axes, leg_constraints, JointAxes,
};
pub use oracle::fd_lagrangian_oracle;
pub use spatial::{kinetic_energy, link_frames, mass_matrix, potential_energy, LegFrames, LinkFrames};
pub use torque::{gravity_torque, torque_components};

use nalgebra::{DVector, SVector};
use thiserror::Error;

use crate::math::Vec6;
use crate::{JOINT_COUNT, LEG_COUNT};

/// Full generalized coordinate count: actuated joints plus body DOF.
pub const DOF_COUNT: usize = JOINT_COUNT + 6;

/// Conversion from config masses (kg) to the internal mm-tonne-second mass
/// unit that makes torques come out in N·mm.
pub(crate) const KG_TO_T: f64 = 1e-3;

pub type Vector18 = SVector<f64, 18>;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(
        "constraint matrix rank deficient (rank {rank} with {grounded} grounded legs); \
         need at least 3 grounded legs in a non-degenerate pose"
    )]
    RankDeficient { rank: usize, grounded: usize },
}

/// Body degrees of freedom `(x, y, z, rot_x, rot_y, rot_z)` with their first
/// and second time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub pose: Vec6,
    pub vel: Vec6,
    pub acc: Vec6,
}

impl BodyState {
    pub fn at_rest(pose: Vec6) -> Self {
        Self {
            pose,
            vel: Vec6::zeros(),
            acc: Vec6::zeros(),
        }
    }
}

/// Stacked actuated coordinates for all six legs, leg-major
/// `(θ₁, φ₁, ψ₁, θ₂, …)`, with their rates and accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorState {
    pub pos: Vector18,
    pub vel: Vector18,
    pub acc: Vector18,
}

impl ActuatorState {
    pub fn at_rest(pos: Vector18) -> Self {
        Self {
            pos,
            vel: Vector18::zeros(),
            acc: Vector18::zeros(),
        }
    }

    pub fn leg_angles(&self, leg: usize) -> crate::kinematics::JointAngles {
        crate::kinematics::JointAngles {
            theta: self.pos[leg * 3],
            phi: self.pos[leg * 3 + 1],
            psi: self.pos[leg * 3 + 2],
        }
    }
}

/// Complete robot state used by the torque model.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub actuators: ActuatorState,
    pub body: BodyState,
}

impl RobotState {
    pub fn standing(pos: Vector18, pose: Vec6) -> Self {
        Self {
            actuators: ActuatorState::at_rest(pos),
            body: BodyState::at_rest(pose),
        }
    }

    /// Full position vector, actuated coordinates first.
    pub fn position(&self) -> DVector<f64> {
        let mut x = DVector::zeros(DOF_COUNT);
        x.rows_mut(0, JOINT_COUNT).copy_from(&self.actuators.pos);
        x.rows_mut(JOINT_COUNT, 6).copy_from(&self.body.pose);
        x
    }

    pub fn velocity(&self) -> DVector<f64> {
        let mut x = DVector::zeros(DOF_COUNT);
        x.rows_mut(0, JOINT_COUNT).copy_from(&self.actuators.vel);
        x.rows_mut(JOINT_COUNT, 6).copy_from(&self.body.vel);
        x
    }

    pub fn acceleration(&self) -> DVector<f64> {
        let mut x = DVector::zeros(DOF_COUNT);
        x.rows_mut(0, JOINT_COUNT).copy_from(&self.actuators.acc);
        x.rows_mut(JOINT_COUNT, 6).copy_from(&self.body.acc);
        x
    }

    pub fn with_position(&self, x: &DVector<f64>) -> Self {
        let mut s = self.clone();
        s.actuators.pos = Vector18::from_iterator(x.iter().take(JOINT_COUNT).copied());
        s.body.pose = Vec6::from_iterator(x.iter().skip(JOINT_COUNT).copied());
        s
    }
}

/// Per-leg grounded booleans: true when the foot is constrained to terrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContactFlags(pub [bool; LEG_COUNT]);

impl ContactFlags {
    pub fn all_grounded() -> Self {
        Self([true; LEG_COUNT])
    }

    pub fn none() -> Self {
        Self([false; LEG_COUNT])
    }

    pub fn grounded_count(&self) -> usize {
        self.0.iter().filter(|&&f| f).count()
    }

    pub fn with_grounded(mut self, leg: usize) -> Self {
        self.0[leg] = true;
        self
    }
}

/// Actuator torques in N·mm, leg-major ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueVector(pub Vector18);

impl TorqueVector {
    pub fn zeros() -> Self {
        Self(Vector18::zeros())
    }

    /// The three torques of one leg: coxa, femur, tibia.
    pub fn leg(&self, leg: usize) -> [f64; 3] {
        [self.0[leg * 3], self.0[leg * 3 + 1], self.0[leg * 3 + 2]]
    }
}
