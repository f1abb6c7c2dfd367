//! Body transform chain: accumulates gait instructions, terrain compensation
//! and user pose into the world-from-body transform, and propagates endpoint
//! positions through it.

use crate::math::{rotation, translation, Axis, Transform4, Vec3};
use crate::terrain::{TerrainError, TerrainModel};

use super::geometry::RobotGeometry;
use super::{Frame, KinematicsError, LegEndpoint};

/// Direct user command of the body pose, applied after the gait chain and
/// terrain compensation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BodyPoseInput {
    /// Body translation offset (mm).
    pub pos: [f64; 3],
    /// Body rotation (rot_x, rot_y, rot_z) (rad).
    pub rot: [f64; 3],
}

impl BodyPoseInput {
    fn transform(&self) -> Transform4 {
        translation(self.pos[0], self.pos[1], self.pos[2]).unwrap()
            * rotation(Axis::Z, self.rot[2]).unwrap()
            * rotation(Axis::Y, self.rot[1]).unwrap()
            * rotation(Axis::X, self.rot[0]).unwrap()
    }
}

/// Per-tick state of the body transform chain.
///
/// `gait_pose` is the running product of per-tick gait translations and yaw
/// rotations, seeded with the starting position. The world-from-body pose is
/// reassembled each tick as
/// `gait_pose * terrain_comp * Mov * RotZ * RotY * RotX`.
#[derive(Debug, Clone)]
pub struct BodyChainState {
    gait_pose: Transform4,
    terrain_comp: Transform4,
    user_pose: BodyPoseInput,
    world_from_body: Transform4,
    prev_world_from_body: Transform4,
}

impl BodyChainState {
    /// Chain at the deployment pose: pure translation to the start position.
    pub fn new(geom: &RobotGeometry) -> Self {
        let sp = geom.start_vec();
        let start = translation(sp.x, sp.y, sp.z).expect("finite start position");
        Self {
            gait_pose: start,
            terrain_comp: Transform4::identity(),
            user_pose: BodyPoseInput::default(),
            world_from_body: start,
            prev_world_from_body: start,
        }
    }

    pub fn gait_pose(&self) -> &Transform4 {
        &self.gait_pose
    }

    pub fn terrain_comp(&self) -> &Transform4 {
        &self.terrain_comp
    }

    pub fn world_from_body(&self) -> &Transform4 {
        &self.world_from_body
    }

    pub fn prev_world_from_body(&self) -> &Transform4 {
        &self.prev_world_from_body
    }

    /// Advances the chain by one tick of gait instructions.
    ///
    /// `gait_delta` is the incremental `(δx, δy, δrot_z)` movement of the body
    /// commanded by the gait engine for this tick; `terrain_comp` is the
    /// terrain compensation transform to apply this tick.
    pub fn advance_chain(
        &mut self,
        gait_delta: (f64, f64, f64),
        user_pose: BodyPoseInput,
        terrain_comp: Transform4,
    ) {
        let (dx, dy, drot) = gait_delta;
        let step = translation(dx, dy, 0.0).expect("finite gait delta")
            * rotation(Axis::Z, drot).expect("finite gait rotation");
        self.gait_pose = self.gait_pose * step;
        self.terrain_comp = terrain_comp;
        self.user_pose = user_pose;
        self.prev_world_from_body = self.world_from_body;
        self.world_from_body = self.gait_pose * self.terrain_comp * self.user_pose.transform();
    }

    /// Net body movement of the last tick: `previous⁻¹ * current`.
    pub fn body_increment(&self) -> Transform4 {
        self.prev_world_from_body.inverse() * self.world_from_body
    }

    /// Moves body-frame endpoints of pushing legs so their global positions
    /// stay fixed while the body moves by `body_step`.
    pub fn update_push_endpoints(
        endpoints: &mut [LegEndpoint],
        body_step: &Transform4,
    ) -> Result<(), KinematicsError> {
        let inv = body_step.inverse();
        for e in endpoints.iter_mut() {
            e.expect_frame(Frame::Body)?;
            e.position = inv.apply_point(&e.position);
        }
        Ok(())
    }

    /// Places a swinging leg's endpoint.
    ///
    /// The global target is built from the neutral endpoint displaced by the
    /// gait's absolute instructions (`rot_disp` yaw about the chain origin
    /// applied before the translation), its height is replaced with the swing
    /// altitude plus the terrain elevation at the target footprint, and the
    /// result is mapped back into the body frame.
    pub fn place_swing_endpoint(
        &self,
        neutral: &LegEndpoint,
        gait_abs: (f64, f64, f64),
        z_gait: f64,
        terrain: &TerrainModel,
    ) -> Result<LegEndpoint, SwingPlacementError> {
        neutral.expect_frame(Frame::Body)?;
        let (x_disp, y_disp, rot_disp) = gait_abs;
        let target = self.gait_pose
            * self.terrain_comp
            * rotation(Axis::Z, rot_disp).expect("finite swing rotation")
            * translation(x_disp, y_disp, 0.0).expect("finite swing displacement");
        let mut global = target.apply_point(&neutral.position);
        global.z = z_gait + terrain.elevation(global.x, global.y)?;
        let body = self.world_from_body.inverse().apply_point(&global);
        Ok(LegEndpoint::body(body))
    }

    /// Global position of a body-frame endpoint under the current pose.
    pub fn to_global(&self, endpoint: &LegEndpoint) -> Result<Vec3, KinematicsError> {
        endpoint.expect_frame(Frame::Body)?;
        Ok(self.world_from_body.apply_point(&endpoint.position))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SwingPlacementError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}
