//! Control stack for a six-legged walking robot, together with a deterministic
//! simulation harness that exercises it against mismatched terrain models.
//!
//! The crate is organised around the data flow of the controller:
//!
//! * [`math`] — homogeneous transforms and the small matrix toolbox everything
//!   else is built on.
//! * [`kinematics`] — robot geometry, per-leg inverse/forward kinematics and
//!   the body transform chain that turns gait instructions into endpoint
//!   positions.
//! * [`gait`] — phase-table gait engine (tripod / ripple / wave) producing
//!   per-tick push/swing roles and displacement instructions.
//! * [`terrain`] — elevation models plus the body-pose optimizer that keeps
//!   the chassis isolated from terrain shape.
//! * [`dynamics`] — constrained Lagrangian torque model with a
//!   finite-difference oracle for validation.
//! * [`control`] — torque-feedback terrain-touch controller for lowering legs.
//! * [`harness`] — scenario runner, simulated servo plant, and CSV trace
//!   logging.
//!
//! Units are millimetres, radians, seconds and kilograms throughout the public
//! API; torques are reported in N·mm.

pub mod control;
pub mod dynamics;
pub mod gait;
pub mod harness;
pub mod kinematics;
pub mod math;
pub mod terrain;

/// Number of legs on the platform.
pub const LEG_COUNT: usize = 6;

/// Number of actuated joints (three per leg, leg-major order).
pub const JOINT_COUNT: usize = 18;
