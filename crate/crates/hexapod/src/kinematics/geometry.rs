//! Robot structural description: link lengths, joint mount poses, masses,
//! inertias and the deployment stance everything is referenced to.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::LEG_COUNT;

use super::KinematicsError;

/// Per-leg mount data, all in the body frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LegMount {
    /// Joint x position (mm).
    pub x_j: f64,
    /// Joint y position (mm).
    pub y_j: f64,
    /// Shoulder interest-point height above the body plane (mm).
    pub z_j: f64,
    /// Mount orientation of the leg's outward direction (rad).
    pub epsilon: f64,
}

/// Mass, centre-of-mass offset and rotational inertia of one link.
///
/// The inertia tensor is taken about the centre of mass, axis-aligned with
/// the link frame, in kg·mm².
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinkInertia {
    /// Mass (kg).
    pub mass: f64,
    /// Centre-of-mass offset in the link frame (mm).
    pub com: [f64; 3],
    /// Principal rotational inertia about the COM (kg·mm²).
    pub inertia: [f64; 3],
}

impl LinkInertia {
    pub fn com_vec(&self) -> Vec3 {
        Vector3::from(self.com)
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }
}

/// Full structural description of the robot.
///
/// Lengths in mm, masses in kg, gravity in mm/s². Legs are indexed
/// right-front, right-middle, right-rear, left-front, left-middle, left-rear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotGeometry {
    /// Coxa length (mm).
    pub l_c: f64,
    /// Femur length (mm).
    pub l_f: f64,
    /// Tibia length (mm).
    pub l_t: f64,
    /// Per-leg joint mounts.
    pub legs: [LegMount; LEG_COUNT],
    /// Body link inertia (body frame).
    pub body: LinkInertia,
    /// Coxa link inertia (coxa frame, shared by all legs).
    pub coxa: LinkInertia,
    /// Femur link inertia (femur frame).
    pub femur: LinkInertia,
    /// Tibia link inertia (tibia frame).
    pub tibia: LinkInertia,
    /// Gravity vector in the world frame (mm/s²).
    pub gravity: [f64; 3],
    /// Starting position of the body origin in the world frame (mm).
    pub start_position: [f64; 3],
    /// Horizontal distance from the coxa joint to the neutral foot (mm).
    pub neutral_radius: f64,
    /// Symmetric actuator travel limit (rad).
    pub actuator_limit: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        let mount = |x_j: f64, y_j: f64, epsilon: f64| LegMount {
            x_j,
            y_j,
            z_j: 0.0,
            epsilon,
        };
        Self {
            l_c: 52.0,
            l_f: 66.0,
            l_t: 133.0,
            legs: [
                mount(120.0, -60.0, -FRAC_PI_4),
                mount(0.0, -75.0, -FRAC_PI_2),
                mount(-120.0, -60.0, -3.0 * FRAC_PI_4),
                mount(120.0, 60.0, FRAC_PI_4),
                mount(0.0, 75.0, FRAC_PI_2),
                mount(-120.0, 60.0, 3.0 * FRAC_PI_4),
            ],
            body: LinkInertia {
                mass: 1.2,
                com: [0.0, 0.0, 5.0],
                inertia: [1690.0, 6010.0, 7200.0],
            },
            coxa: LinkInertia {
                mass: 0.024,
                com: [26.0, 0.0, 0.0],
                inertia: [0.5, 5.4, 5.4],
            },
            femur: LinkInertia {
                mass: 0.065,
                com: [33.0, 0.0, 0.0],
                inertia: [0.7, 23.6, 23.6],
            },
            tibia: LinkInertia {
                mass: 0.065,
                com: [45.0, 0.0, 0.0],
                inertia: [1.0, 95.8, 95.8],
            },
            gravity: [0.0, 0.0, -9810.0],
            start_position: [0.0, 0.0, 100.0],
            neutral_radius: 132.0,
            actuator_limit: 5.0 * std::f64::consts::PI / 6.0,
        }
    }
}

impl RobotGeometry {
    pub fn gravity_vec(&self) -> Vec3 {
        Vector3::from(self.gravity)
    }

    pub fn start_vec(&self) -> Vec3 {
        Vector3::from(self.start_position)
    }

    /// Body height of the deployment stance (mm).
    pub fn stance_height(&self) -> f64 {
        self.start_position[2]
    }

    /// Total mass including all leg links (kg).
    pub fn total_mass(&self) -> f64 {
        self.body.mass
            + LEG_COUNT as f64 * (self.coxa.mass + self.femur.mass + self.tibia.mass)
    }

    /// Neutral foot position for a leg, body frame: radially out from the
    /// joint along the mount direction, the stance height below the body.
    pub fn neutral_endpoint(&self, leg: usize) -> Vec3 {
        let m = &self.legs[leg];
        Vec3::new(
            m.x_j + self.neutral_radius * m.epsilon.cos(),
            m.y_j + self.neutral_radius * m.epsilon.sin(),
            -self.stance_height(),
        )
    }

    /// Shoulder interest point of a leg in the body frame.
    pub fn shoulder_point(&self, leg: usize) -> Vec3 {
        let m = &self.legs[leg];
        Vec3::new(m.x_j, m.y_j, m.z_j)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.l_c > 0.0 && self.l_f > 0.0 && self.l_t > 0.0) {
            return Err(KinematicsError::InvalidGeometry(
                "link lengths must be positive".into(),
            ));
        }
        for link in [&self.body, &self.coxa, &self.femur, &self.tibia] {
            if link.mass <= 0.0 {
                return Err(KinematicsError::InvalidGeometry(
                    "link masses must be positive".into(),
                ));
            }
            if link.inertia.iter().any(|&i| i < 0.0) {
                return Err(KinematicsError::InvalidGeometry(
                    "rotational inertia must be non-negative".into(),
                ));
            }
        }
        if self.actuator_limit <= 0.0 {
            return Err(KinematicsError::InvalidGeometry(
                "actuator limit must be positive".into(),
            ));
        }
        // Left legs mirror right legs in lateral offset and mount angle.
        for side in 0..LEG_COUNT / 2 {
            let right = &self.legs[side];
            let left = &self.legs[side + LEG_COUNT / 2];
            let mirrored = (right.y_j + left.y_j).abs() < 1e-9
                && (right.epsilon + left.epsilon).abs() < 1e-9
                && (right.x_j - left.x_j).abs() < 1e-9;
            if !mirrored {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "legs {side} and {} are not mirror-symmetric",
                    side + LEG_COUNT / 2
                )));
            }
        }
        Ok(())
    }
}
