//! Per-leg inverse/forward kinematics and the full endpoint pipeline:
//! body transform chain, pushing-leg endpoint updates and swinging-leg
//! placement over terrain.

mod chain;
mod geometry;
mod leg;

pub use chain::{BodyChainState, BodyPoseInput};
pub use geometry::{LegMount, LinkInertia, RobotGeometry};
pub use leg::{
    body_to_coxa, body_to_leg, coxa_to_femur, femur_to_tibia, leg_fk, leg_fk_body, leg_ik,
};

use crate::math::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("leg {leg}: endpoint unreachable: {detail}")]
    Unreachable { leg: usize, detail: String },
    #[error("invalid leg index {0}")]
    InvalidLeg(usize),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("endpoint frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },
}

/// Coordinate frame an endpoint position is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Global,
    Body,
    Leg,
}

/// Actuated coordinates of one leg: coxa, femur and tibia angles (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAngles {
    pub theta: f64,
    pub phi: f64,
    pub psi: f64,
}

/// A 3-D foot position tagged with the frame it lives in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegEndpoint {
    pub position: Vec3,
    pub frame: Frame,
}

impl LegEndpoint {
    pub fn new(position: Vec3, frame: Frame) -> Self {
        Self { position, frame }
    }

    pub fn body(position: Vec3) -> Self {
        Self::new(position, Frame::Body)
    }

    pub fn global(position: Vec3) -> Self {
        Self::new(position, Frame::Global)
    }

    pub fn leg(position: Vec3) -> Self {
        Self::new(position, Frame::Leg)
    }

    pub fn expect_frame(&self, frame: Frame) -> Result<(), KinematicsError> {
        if self.frame == frame {
            Ok(())
        } else {
            Err(KinematicsError::FrameMismatch {
                expected: frame,
                found: self.frame,
            })
        }
    }
}
