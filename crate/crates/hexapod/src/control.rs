//! Torque-feedback terrain-touch controller.
//!
//! During the lowering window of a swing, each descending leg is checked
//! against the torque signature it would show if its foot were grounded:
//! the contact flag of the leg is hypothetically set, the constraint
//! matrices are rebuilt, and the composed torques are compared against the
//! sensed ones. A match means the terrain was reached: the leg is stopped
//! and its endpoint re-synchronised through forward kinematics. A leg that
//! finishes its commanded descent without touching is sent further down in
//! fixed increments until it either touches or runs out of reach.

use thiserror::Error;

use crate::dynamics::{
    compose_torque, link_frames, torque_components, ContactFlags, DynamicsError, RobotState,
    TorqueVector, Vector18,
};
use crate::kinematics::{leg_fk_body, JointAngles, LegEndpoint, RobotGeometry};
use crate::LEG_COUNT;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("leg {leg}: ground not reached after extending {extended:.0} mm")]
    UnreachableGround { leg: usize, extended: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Correspondence test configuration: per-actuator agreement band between
/// expected and sensed torques.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CorrespondenceConfig {
    /// Relative tolerance on the expected torque.
    pub rel_tolerance: f64,
    /// Absolute floor (N·mm) so near-zero expectations stay comparable.
    pub abs_floor: f64,
}

impl Default for CorrespondenceConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 0.15,
            abs_floor: 5.0,
        }
    }
}

/// Touch-control parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TouchControlConfig {
    pub correspondence: CorrespondenceConfig,
    /// Extra descent commanded per missed target (mm).
    pub lowering_increment: f64,
    /// Maximum total extension below the planned target (mm).
    pub max_extend: f64,
}

impl Default for TouchControlConfig {
    fn default() -> Self {
        Self {
            correspondence: CorrespondenceConfig::default(),
            lowering_increment: 10.0,
            max_extend: 100.0,
        }
    }
}

/// Outcome for one lowering leg on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TouchOutcome {
    /// Terrain reached: motors stopped, endpoint re-synchronised.
    Touched,
    /// Still descending toward the commanded target.
    KeepLowering,
    /// Commanded target reached without touch; target lowered further.
    ExtendDown,
}

/// Decision record for one leg; `endpoint` is the measured body-frame foot
/// position when the outcome is `Touched`.
#[derive(Debug, Clone, Copy)]
pub struct TouchDecision {
    pub leg: usize,
    pub outcome: TouchOutcome,
    pub endpoint: Option<LegEndpoint>,
}

/// One synchronous reading from the plant (or servo bus).
#[derive(Debug, Clone)]
pub struct PlantSample {
    /// Sensed actuator torques (N·mm), leg-major.
    pub torques: TorqueVector,
    /// Measured actuator angles (rad), leg-major.
    pub angles: Vector18,
    /// Per-leg flag: true while any of the leg's servos is still moving
    /// toward its commanded angle.
    pub leg_moving: [bool; LEG_COUNT],
}

/// Synchronous per-tick torque/angle source: the simulated plant here, a
/// servo driver on hardware.
pub trait TorqueSource {
    fn sample(&mut self, tick: u64) -> PlantSample;
}

/// Expected torques with the given leg hypothetically grounded; the passed
/// flags are not modified.
pub fn expected_touch_torque(
    state: &RobotState,
    geom: &RobotGeometry,
    flags: &ContactFlags,
    leg: usize,
) -> Result<TorqueVector, DynamicsError> {
    let hypothetical = flags.with_grounded(leg);
    let (tau_a, tau_b) = torque_components(state, geom);
    let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
    compose_torque(&tau_a, &tau_b, &frames, &hypothetical)
}

/// Per-actuator agreement between expected and sensed torques on the given
/// leg: `|sensed − expected| ≤ max(rel · |expected|, abs_floor)` for all
/// three actuators.
pub fn correspondence(
    expected: &TorqueVector,
    sensed: &TorqueVector,
    cfg: &CorrespondenceConfig,
    leg: usize,
) -> bool {
    expected
        .leg(leg)
        .iter()
        .zip(sensed.leg(leg).iter())
        .all(|(e, s)| (s - e).abs() <= (cfg.rel_tolerance * e.abs()).max(cfg.abs_floor))
}

/// Forward kinematics at the measured angles: the body-frame endpoint the
/// stopped leg actually reached.
pub fn resync_endpoint(
    leg: usize,
    measured: &JointAngles,
    geom: &RobotGeometry,
) -> LegEndpoint {
    LegEndpoint::body(leg_fk_body(measured, geom, leg))
}

#[derive(Debug, Clone, Copy, Default)]
struct LegLowerState {
    active: bool,
    extend_count: u32,
    extend_offset: f64,
}

/// State machine driving all currently-lowering legs.
#[derive(Debug, Clone)]
pub struct LoweringController {
    pub config: TouchControlConfig,
    legs: [LegLowerState; LEG_COUNT],
}

impl LoweringController {
    pub fn new(config: TouchControlConfig) -> Self {
        Self {
            legs: [LegLowerState::default(); LEG_COUNT],
            config,
        }
    }

    /// Marks a leg as entering its lowering window.
    pub fn begin_lowering(&mut self, leg: usize) {
        self.legs[leg] = LegLowerState {
            active: true,
            extend_count: 0,
            extend_offset: 0.0,
        };
    }

    /// Clears a leg (touched, lifted, or scenario reset).
    pub fn clear(&mut self, leg: usize) {
        self.legs[leg] = LegLowerState::default();
    }

    pub fn is_lowering(&self, leg: usize) -> bool {
        self.legs[leg].active
    }

    pub fn any_lowering(&self) -> bool {
        self.legs.iter().any(|l| l.active)
    }

    /// Extra descent currently commanded below the planned target (mm).
    pub fn extension_offset(&self, leg: usize) -> f64 {
        self.legs[leg].extend_offset
    }

    /// Lowering increments issued for the leg's current descent.
    pub fn extend_count(&self, leg: usize) -> u32 {
        self.legs[leg].extend_count
    }

    /// Runs one feedback step over all lowering legs.
    ///
    /// `model_state` is the believed full state used for the expected-torque
    /// prediction; `believed` carries the believed contact flags and is
    /// updated as legs are detected touching. Decisions are returned in leg
    /// order; touched legs leave the lowering set immediately so later
    /// predictions within the same tick see the updated flags.
    pub fn lowering_step(
        &mut self,
        model_state: &RobotState,
        geom: &RobotGeometry,
        believed: &mut ContactFlags,
        sensed: &PlantSample,
    ) -> Result<Vec<TouchDecision>, ControlError> {
        let mut decisions = Vec::new();
        let (tau_a, tau_b) = torque_components(model_state, geom);
        let frames = link_frames(&model_state.body.pose, &model_state.actuators.pos, geom);
        for leg in 0..LEG_COUNT {
            if !self.legs[leg].active {
                continue;
            }
            let expected = compose_torque(&tau_a, &tau_b, &frames, &believed.with_grounded(leg))?;
            if correspondence(&expected, &sensed.torques, &self.config.correspondence, leg) {
                let measured = JointAngles {
                    theta: sensed.angles[leg * 3],
                    phi: sensed.angles[leg * 3 + 1],
                    psi: sensed.angles[leg * 3 + 2],
                };
                let endpoint = resync_endpoint(leg, &measured, geom);
                believed.0[leg] = true;
                self.clear(leg);
                decisions.push(TouchDecision {
                    leg,
                    outcome: TouchOutcome::Touched,
                    endpoint: Some(endpoint),
                });
            } else if !sensed.leg_moving[leg] {
                let state = &mut self.legs[leg];
                state.extend_count += 1;
                state.extend_offset += self.config.lowering_increment;
                if state.extend_offset > self.config.max_extend {
                    return Err(ControlError::UnreachableGround {
                        leg,
                        extended: state.extend_offset,
                    });
                }
                decisions.push(TouchDecision {
                    leg,
                    outcome: TouchOutcome::ExtendDown,
                    endpoint: None,
                });
            } else {
                decisions.push(TouchDecision {
                    leg,
                    outcome: TouchOutcome::KeepLowering,
                    endpoint: None,
                });
            }
        }
        Ok(decisions)
    }
}
