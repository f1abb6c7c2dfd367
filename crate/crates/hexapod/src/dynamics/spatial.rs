//! Link frames, link Jacobians, the assembled mass matrix and the potential
//! energy of the full 24-DOF system.

use nalgebra::{DMatrix, Matrix3, Matrix6};

use crate::kinematics::{body_to_coxa, coxa_to_femur, femur_to_tibia, LinkInertia, RobotGeometry};
use crate::math::{euler_rate_columns, pose_transform, skew, Transform4, Vec3, Vec6};
use crate::{JOINT_COUNT, LEG_COUNT};

use super::{RobotState, DOF_COUNT, KG_TO_T};

/// World frames and joint data of one leg.
#[derive(Debug, Clone)]
pub struct LegFrames {
    pub world_from_coxa: Transform4,
    pub world_from_femur: Transform4,
    pub world_from_tibia: Transform4,
    /// Joint centres in the world frame.
    pub coxa_joint: Vec3,
    pub femur_joint: Vec3,
    pub tibia_joint: Vec3,
    /// Unit joint axes in the world frame.
    pub coxa_axis: Vec3,
    pub femur_axis: Vec3,
    pub tibia_axis: Vec3,
    /// Foot position in the world frame.
    pub foot: Vec3,
}

/// World frames of every link for one robot configuration.
#[derive(Debug, Clone)]
pub struct LinkFrames {
    pub world_from_body: Transform4,
    pub legs: [LegFrames; LEG_COUNT],
    /// Angular-rate columns of the body twist map at this pose.
    pub euler_columns: Matrix3<f64>,
}

/// Computes all link frames for the given body pose and joint angles.
pub fn link_frames(pose: &Vec6, angles: &super::Vector18, geom: &RobotGeometry) -> LinkFrames {
    let world_from_body = pose_transform(pose);
    let legs = std::array::from_fn(|leg| {
        let theta = angles[leg * 3];
        let phi = angles[leg * 3 + 1];
        let psi = angles[leg * 3 + 2];
        let world_from_coxa = world_from_body * body_to_coxa(geom, leg, theta);
        let world_from_femur = world_from_coxa * coxa_to_femur(geom, phi);
        let world_from_tibia = world_from_femur * femur_to_tibia(geom, psi);
        LegFrames {
            coxa_joint: world_from_coxa.translation(),
            femur_joint: world_from_femur.translation(),
            tibia_joint: world_from_tibia.translation(),
            coxa_axis: world_from_coxa.apply_dir(&Vec3::z()),
            femur_axis: world_from_femur.apply_dir(&Vec3::y()),
            tibia_axis: world_from_tibia.apply_dir(&Vec3::y()),
            foot: world_from_tibia.apply_point(&Vec3::new(geom.l_t, 0.0, 0.0)),
            world_from_coxa,
            world_from_femur,
            world_from_tibia,
        }
    });
    LinkFrames {
        world_from_body,
        legs,
        euler_columns: euler_rate_columns(pose[4], pose[5]),
    }
}

/// Which link of a leg a Jacobian row-block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LegLink {
    Coxa,
    Femur,
    Tibia,
}

/// 6×24 Jacobian mapping full-state rates to the world twist `(v; ω)` of a
/// link frame origin.
fn link_jacobian(frames: &LinkFrames, leg: Option<(usize, LegLink)>) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, DOF_COUNT);
    let body_origin = frames.world_from_body.translation();
    let origin = match leg {
        None => body_origin,
        Some((l, LegLink::Coxa)) => frames.legs[l].coxa_joint,
        Some((l, LegLink::Femur)) => frames.legs[l].femur_joint,
        Some((l, LegLink::Tibia)) => frames.legs[l].tibia_joint,
    };

    // Body columns: linear velocity picks up the lever arm from the body
    // origin, angular velocity is the Euler-rate map.
    let e = frames.euler_columns;
    let arm = skew(&(origin - body_origin));
    j.fixed_view_mut::<3, 3>(0, JOINT_COUNT)
        .copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, JOINT_COUNT + 3)
        .copy_from(&(-arm * e));
    j.fixed_view_mut::<3, 3>(3, JOINT_COUNT + 3).copy_from(&e);

    // Joint columns along the chain to this link.
    if let Some((l, link)) = leg {
        let lf = &frames.legs[l];
        let joints: &[(Vec3, Vec3)] = match link {
            LegLink::Coxa => &[(lf.coxa_axis, lf.coxa_joint)],
            LegLink::Femur => &[
                (lf.coxa_axis, lf.coxa_joint),
                (lf.femur_axis, lf.femur_joint),
            ],
            LegLink::Tibia => &[
                (lf.coxa_axis, lf.coxa_joint),
                (lf.femur_axis, lf.femur_joint),
                (lf.tibia_axis, lf.tibia_joint),
            ],
        };
        for (k, (axis, point)) in joints.iter().enumerate() {
            let col = l * 3 + k;
            let v = axis.cross(&(origin - point));
            j.fixed_view_mut::<3, 1>(0, col).copy_from(&v);
            j.fixed_view_mut::<3, 1>(3, col).copy_from(axis);
        }
    }
    j
}

/// 6×6 spatial inertia of a link about its frame origin, expressed in world
/// axes, in tonne/mm units.
fn spatial_inertia_world(link: &LinkInertia, rot: &Matrix3<f64>) -> Matrix6<f64> {
    let m = link.mass * KG_TO_T;
    let c_w = rot * link.com_vec();
    let i_w = rot * (link.inertia_matrix() * KG_TO_T) * rot.transpose();
    let c_hat = skew(&c_w);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * m));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-c_hat * m));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(c_hat * m));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(i_w - m * c_hat * c_hat));
    out
}

fn links_of(
    frames: &LinkFrames,
    geom: &RobotGeometry,
) -> Vec<(Option<(usize, LegLink)>, Matrix3<f64>, LinkInertia)> {
    let mut links = Vec::with_capacity(1 + 3 * LEG_COUNT);
    links.push((None, frames.world_from_body.rotation(), geom.body));
    for leg in 0..LEG_COUNT {
        let lf = &frames.legs[leg];
        links.push((
            Some((leg, LegLink::Coxa)),
            lf.world_from_coxa.rotation(),
            geom.coxa,
        ));
        links.push((
            Some((leg, LegLink::Femur)),
            lf.world_from_femur.rotation(),
            geom.femur,
        ));
        links.push((
            Some((leg, LegLink::Tibia)),
            lf.world_from_tibia.rotation(),
            geom.tibia,
        ));
    }
    links
}

/// Full 24×24 mass matrix: sum of `JᵀMJ` over the body and all 18 leg links.
///
/// Rows 0..18 are the actuated partition, rows 18..24 the body partition.
/// The matrix is invariant to the body translation coordinates.
pub fn mass_matrix(state: &RobotState, geom: &RobotGeometry) -> DMatrix<f64> {
    let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
    let mut m = DMatrix::zeros(DOF_COUNT, DOF_COUNT);
    for (leg, rot, inertia) in links_of(&frames, geom) {
        let j = link_jacobian(&frames, leg);
        let spatial = spatial_inertia_world(&inertia, &rot);
        m += j.transpose() * spatial * j;
    }
    m
}

/// Gravitational potential energy in N·mm.
pub fn potential_energy(state: &RobotState, geom: &RobotGeometry) -> f64 {
    let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
    let g = geom.gravity_vec();
    let mut u = 0.0;
    for (leg, _, inertia) in links_of(&frames, geom) {
        let world = match leg {
            None => &frames.world_from_body,
            Some((l, LegLink::Coxa)) => &frames.legs[l].world_from_coxa,
            Some((l, LegLink::Femur)) => &frames.legs[l].world_from_femur,
            Some((l, LegLink::Tibia)) => &frames.legs[l].world_from_tibia,
        };
        let com = world.apply_point(&inertia.com_vec());
        u -= inertia.mass * KG_TO_T * g.dot(&com);
    }
    u
}

/// Linear-velocity Jacobians of every link's centre of mass, paired with the
/// link mass in tonnes. Used for the analytic gravity term.
pub(crate) fn com_jacobians(
    frames: &LinkFrames,
    geom: &RobotGeometry,
) -> Vec<(f64, DMatrix<f64>)> {
    links_of(frames, geom)
        .into_iter()
        .map(|(leg, rot, inertia)| {
            let j = link_jacobian(frames, leg);
            let mut c_hat = DMatrix::zeros(3, 3);
            c_hat.copy_from(&skew(&(rot * inertia.com_vec())));
            let jv = j.rows(0, 3).into_owned() - c_hat * j.rows(3, 3).into_owned();
            (inertia.mass * KG_TO_T, jv)
        })
        .collect()
}

/// Kinetic energy `½ ẊᵀM(X)Ẋ` in N·mm.
pub fn kinetic_energy(state: &RobotState, geom: &RobotGeometry) -> f64 {
    let m = mass_matrix(state, geom);
    let v = state.velocity();
    0.5 * (v.transpose() * m * v)[(0, 0)]
}
