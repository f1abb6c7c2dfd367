//! Grounded-foot velocity constraints and the pseudoinverse torque
//! composition.
//!
//! A grounded foot acts as a hinge: its linear velocity must vanish. Per leg
//! that couples the body twist (through the lever arm to the foot) with the
//! three joint rates (through moment-arm cross products), giving the
//! per-leg blocks of `A_c · Ẋ_b + B_c · Ẋ_a = 0`.

use nalgebra::{DMatrix, Matrix3, Matrix3x6, Vector6};

use crate::kinematics::RobotGeometry;
use crate::math::{left_pseudoinverse, skew, MathError, Vec3};
use crate::{JOINT_COUNT, LEG_COUNT};

use super::spatial::{link_frames, LinkFrames};
use super::torque::torque_components;
use super::{ContactFlags, DynamicsError, RobotState, TorqueVector, Vector18};

/// World-frame joint axes of one leg with their application points.
#[derive(Debug, Clone, Copy)]
pub struct JointAxes {
    pub coxa_axis: Vec3,
    pub coxa_point: Vec3,
    pub femur_axis: Vec3,
    pub femur_point: Vec3,
    pub tibia_axis: Vec3,
    pub tibia_point: Vec3,
}

/// Unit rotation axes of the coxa, femur and tibia joints in the world frame.
pub fn joint_axes(state: &RobotState, geom: &RobotGeometry, leg: usize) -> JointAxes {
    let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
    axes_from_frames(&frames, leg)
}

fn axes_from_frames(frames: &LinkFrames, leg: usize) -> JointAxes {
    let lf = &frames.legs[leg];
    JointAxes {
        coxa_axis: lf.coxa_axis,
        coxa_point: lf.coxa_joint,
        femur_axis: lf.femur_axis,
        femur_point: lf.femur_joint,
        tibia_axis: lf.tibia_axis,
        tibia_point: lf.tibia_joint,
    }
}

/// Per-leg constraint blocks `(A_c_leg: 3×6, B_c_leg: 3×3)` for a grounded
/// foot: `A` maps body DOF rates to the foot velocity, `B` maps the leg's
/// joint rates to it.
pub fn leg_constraints(
    state: &RobotState,
    geom: &RobotGeometry,
    leg: usize,
) -> (Matrix3x6<f64>, Matrix3<f64>) {
    let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
    leg_constraints_from_frames(&frames, leg)
}

pub(crate) fn leg_constraints_from_frames(
    frames: &LinkFrames,
    leg: usize,
) -> (Matrix3x6<f64>, Matrix3<f64>) {
    let lf = &frames.legs[leg];
    let foot = lf.foot;

    // Foot velocity per unit joint rate: axis × (foot − joint).
    let mut b = Matrix3::zeros();
    for (col, (axis, point)) in [
        (lf.coxa_axis, lf.coxa_joint),
        (lf.femur_axis, lf.femur_joint),
        (lf.tibia_axis, lf.tibia_joint),
    ]
    .iter()
    .enumerate()
    {
        let v = -skew(&(foot - point)) * axis;
        b.set_column(col, &v);
    }

    // Foot velocity per unit body twist, with the twist produced from the
    // body DOF rates by the Euler-rate map.
    let body_origin = frames.world_from_body.translation();
    let mut a = Matrix3x6::zeros();
    a.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-skew(&(foot - body_origin)) * frames.euler_columns));
    (a, b)
}

/// Stacks the per-leg blocks into the full constraint matrices, masking out
/// swinging legs: `A_c` is 18×6, `B_c` is 18×18 block diagonal.
pub fn assemble_constraints(
    blocks: &[(Matrix3x6<f64>, Matrix3<f64>); LEG_COUNT],
    flags: &ContactFlags,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a_c = DMatrix::zeros(JOINT_COUNT, 6);
    let mut b_c = DMatrix::zeros(JOINT_COUNT, JOINT_COUNT);
    for (leg, (a, b)) in blocks.iter().enumerate() {
        if flags.0[leg] {
            a_c.view_mut((leg * 3, 0), (3, 6)).copy_from(a);
            b_c.view_mut((leg * 3, leg * 3), (3, 3)).copy_from(b);
        }
    }
    (a_c, b_c)
}

/// Per-leg constraint blocks for every leg at the given configuration.
pub fn constraint_blocks(
    frames: &LinkFrames,
) -> [(Matrix3x6<f64>, Matrix3<f64>); LEG_COUNT] {
    std::array::from_fn(|leg| leg_constraints_from_frames(frames, leg))
}

/// Composes actuator torques from the generalized components:
/// `τ = τ_a + (−A_c⁺ B_c)ᵀ τ_b`.
///
/// Fails when the grounded set leaves the body motion under-constrained
/// (fewer than three grounded legs, or a degenerate pose).
pub fn actuator_torque(
    tau_a: &Vector18,
    tau_b: &Vector6<f64>,
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    grounded: usize,
) -> Result<TorqueVector, DynamicsError> {
    let pinv = left_pseudoinverse(a_c).map_err(|e| match e {
        MathError::RankDeficient { rank, .. } => DynamicsError::RankDeficient { rank, grounded },
        MathError::NonFinite(_) => DynamicsError::RankDeficient { rank: 0, grounded },
    })?;
    let projection = (-(pinv * b_c)).transpose();
    let tau = tau_a + projection * tau_b;
    Ok(TorqueVector(tau))
}

/// Constraint assembly plus torque composition for precomputed generalized
/// components, letting callers flip contact flags without re-deriving them.
pub fn compose_torque(
    tau_a: &Vector18,
    tau_b: &Vector6<f64>,
    frames: &LinkFrames,
    flags: &ContactFlags,
) -> Result<TorqueVector, DynamicsError> {
    let blocks = constraint_blocks(frames);
    let (a_c, b_c) = assemble_constraints(&blocks, flags);
    actuator_torque(tau_a, tau_b, &a_c, &b_c, flags.grounded_count())
}

/// Full pipeline: torque components plus constraint composition for the
/// given contact flags.
pub fn constrained_torque(
    state: &RobotState,
    geom: &RobotGeometry,
    flags: &ContactFlags,
) -> Result<TorqueVector, DynamicsError> {
    let (tau_a, tau_b) = torque_components(state, geom);
    let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
    compose_torque(&tau_a, &tau_b, &frames, flags)
}
