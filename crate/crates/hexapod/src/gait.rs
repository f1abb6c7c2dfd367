//! Phase-table gait engine.
//!
//! Each gait is a cyclic table of swing windows. Per tick the engine assigns
//! every leg a push or swing role and produces two kinds of displacement
//! data: one incremental `(δx, δy, δrot_z)` triple that advances the body
//! transform chain, and per-swing-leg absolute displacements from the
//! neutral stance plus a swing altitude. Swing feet travel from half a
//! stride behind neutral to half a stride ahead, so that a full cycle of
//! pushing returns them to the lift-off offset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::LEG_COUNT;

#[derive(Debug, Error)]
pub enum GaitError {
    #[error("unknown gait `{0}`")]
    UnknownGait(String),
    #[error("invalid gait parameters: {0}")]
    InvalidParams(String),
}

/// User locomotion command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GaitCommand {
    /// Forward speed (mm/s).
    pub vx: f64,
    /// Lateral speed (mm/s).
    pub vy: f64,
    /// Yaw rate (rad/s).
    pub wz: f64,
}

impl GaitCommand {
    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.wz == 0.0
    }
}

/// Gait family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitKind {
    Tripod,
    Ripple,
    Wave,
}

impl GaitKind {
    /// Swing windows as `(start_phase, phase_count)` per leg. Legs are
    /// indexed right-front, right-middle, right-rear, left-front,
    /// left-middle, left-rear.
    fn swing_windows(self) -> [(u32, u32); LEG_COUNT] {
        match self {
            // Two alternating sets of three.
            GaitKind::Tripod => [(0, 1), (1, 1), (0, 1), (1, 1), (0, 1), (1, 1)],
            // Overlapping pairs, each leg swinging for two of six phases.
            GaitKind::Ripple => [(0, 2), (4, 2), (2, 2), (3, 2), (1, 2), (5, 2)],
            // One leg at a time, rear-to-front on each side.
            GaitKind::Wave => [(2, 1), (1, 1), (0, 1), (5, 1), (4, 1), (3, 1)],
        }
    }

    fn phase_count(self) -> u32 {
        match self {
            GaitKind::Tripod => 2,
            GaitKind::Ripple | GaitKind::Wave => 6,
        }
    }
}

/// Gait engine parameters. `dt` is the control tick period.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaitParams {
    pub kind: GaitKind,
    /// Ticks per table phase.
    pub steps_per_phase: u32,
    /// Peak swing altitude above terrain (mm).
    pub lift_height: f64,
    /// Ticks at the end of each swing spent lowering the foot.
    pub lowering_ticks: u32,
    /// Tick period (s).
    pub dt: f64,
    /// Saturation limits for the command.
    pub max_speed: f64,
    pub max_lateral_speed: f64,
    pub max_yaw_rate: f64,
    /// Largest stride half-length the legs can absorb (mm).
    pub workspace_radius: f64,
}

/// Parameter set for a named gait with the stack's defaults.
pub fn select_gait(name: &str) -> Result<GaitParams, GaitError> {
    let kind = match name {
        "tripod" => GaitKind::Tripod,
        "ripple" => GaitKind::Ripple,
        "wave" => GaitKind::Wave,
        other => return Err(GaitError::UnknownGait(other.to_string())),
    };
    Ok(GaitParams {
        kind,
        steps_per_phase: 8,
        lift_height: 30.0,
        lowering_ticks: 3,
        dt: 1.0 / 30.0,
        max_speed: 60.0,
        max_lateral_speed: 40.0,
        max_yaw_rate: 0.4,
        workspace_radius: 45.0,
    })
}

impl GaitParams {
    pub fn cycle_ticks(&self) -> u32 {
        self.kind.phase_count() * self.steps_per_phase
    }

    pub fn cycle_time(&self) -> f64 {
        self.cycle_ticks() as f64 * self.dt
    }

    /// Ticks a leg spends pushing per cycle.
    fn push_ticks(&self) -> u32 {
        let swing_phases = self.kind.swing_windows()[0].1;
        (self.kind.phase_count() - swing_phases) * self.steps_per_phase
    }

    /// Stride half-length for a given speed (mm).
    fn half_stride(&self, speed: f64) -> f64 {
        speed * self.push_ticks() as f64 * self.dt / 2.0
    }

    pub fn validate(&self) -> Result<(), GaitError> {
        if self.steps_per_phase == 0 {
            return Err(GaitError::InvalidParams("cycle length must be > 0".into()));
        }
        if self.dt <= 0.0 {
            return Err(GaitError::InvalidParams("tick period must be > 0".into()));
        }
        if self.lowering_ticks == 0 || self.lowering_ticks >= self.swing_ticks() {
            return Err(GaitError::InvalidParams(
                "lowering window must fit inside the swing".into(),
            ));
        }
        let stride = self
            .half_stride(self.max_speed)
            .max(self.half_stride(self.max_lateral_speed));
        if stride > self.workspace_radius {
            return Err(GaitError::InvalidParams(format!(
                "stride {stride:.1} mm exceeds workspace radius {:.1} mm",
                self.workspace_radius
            )));
        }
        Ok(())
    }

    fn swing_ticks(&self) -> u32 {
        self.kind.swing_windows()[0].1 * self.steps_per_phase
    }
}

/// Role and displacement instruction for one leg this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LegRole {
    /// Supporting leg. Carries the foot-relative displacement instruction:
    /// pushing feet move opposite the body, so this is the negated body
    /// increment.
    Push { foot_delta: (f64, f64, f64) },
    /// Repositioning leg. Displacements are absolute offsets from the
    /// neutral stance; `z_gait` is the commanded altitude above terrain.
    Swing {
        x_disp: f64,
        y_disp: f64,
        rot_disp: f64,
        z_gait: f64,
        /// True during the final descent ticks, when touch control engages.
        lowering: bool,
        /// Swing progress in (0, 1], 1 at touchdown.
        progress: f64,
    },
}

impl LegRole {
    pub fn is_push(&self) -> bool {
        matches!(self, LegRole::Push { .. })
    }

    pub fn is_lowering(&self) -> bool {
        matches!(
            self,
            LegRole::Swing { lowering: true, .. }
        )
    }
}

/// Per-tick output of the gait engine.
#[derive(Debug, Clone)]
pub struct StepPlan {
    /// Incremental body movement `(δx, δy, δrot_z)` for the transform chain.
    pub body_delta: (f64, f64, f64),
    pub roles: [LegRole; LEG_COUNT],
    /// Tick duration (s).
    pub dt: f64,
    /// Set when the command had to be clamped to the configured maxima.
    pub saturated: bool,
}

impl StepPlan {
    pub fn all_push(dt: f64) -> Self {
        Self {
            body_delta: (0.0, 0.0, 0.0),
            roles: [LegRole::Push {
                foot_delta: (0.0, 0.0, 0.0),
            }; LEG_COUNT],
            dt,
            saturated: false,
        }
    }

    pub fn push_count(&self) -> usize {
        self.roles.iter().filter(|r| r.is_push()).count()
    }
}

/// Cyclic phase state of the engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GaitPhase {
    /// Tick index within the gait cycle.
    pub cycle_tick: u32,
}

fn saturate(value: f64, limit: f64) -> (f64, bool) {
    if value.abs() > limit {
        (value.signum() * limit, true)
    } else {
        (value, false)
    }
}

/// Advances the gait by one tick.
///
/// A zero command parks the engine: every leg pushes with zero deltas and the
/// phase does not advance. Commands beyond the configured maxima are clamped
/// and the plan is flagged as saturated.
pub fn gait_tick(
    cmd: &GaitCommand,
    phase: GaitPhase,
    params: &GaitParams,
) -> Result<(StepPlan, GaitPhase), GaitError> {
    params.validate()?;
    if cmd.is_zero() {
        return Ok((StepPlan::all_push(params.dt), phase));
    }

    let (vx, sx) = saturate(cmd.vx, params.max_speed);
    let (vy, sy) = saturate(cmd.vy, params.max_lateral_speed);
    let (wz, sw) = saturate(cmd.wz, params.max_yaw_rate);
    let saturated = sx || sy || sw;

    let dt = params.dt;
    let body_delta = (vx * dt, vy * dt, wz * dt);
    let half = (
        params.half_stride(vx),
        params.half_stride(vy),
        params.half_stride(wz),
    );

    let cycle = params.cycle_ticks();
    let tick = phase.cycle_tick % cycle;
    let windows = params.kind.swing_windows();
    let swing_len = params.swing_ticks();

    let mut roles = [LegRole::Push {
        foot_delta: (-body_delta.0, -body_delta.1, -body_delta.2),
    }; LEG_COUNT];
    for (leg, role) in roles.iter_mut().enumerate() {
        let start = windows[leg].0 * params.steps_per_phase;
        let into = (tick + cycle - start) % cycle;
        if into < swing_len {
            // Progress measured at the end of this tick so the final swing
            // tick lands exactly at the forward stride offset.
            let progress = (into + 1) as f64 / swing_len as f64;
            let reach = 2.0 * progress - 1.0;
            let lowering_from = swing_len - params.lowering_ticks;
            let peak = lowering_from as f64 / swing_len as f64;
            let z_gait = if progress <= peak {
                params.lift_height * progress / peak
            } else {
                params.lift_height * (1.0 - progress) / (1.0 - peak)
            };
            *role = LegRole::Swing {
                x_disp: half.0 * reach,
                y_disp: half.1 * reach,
                rot_disp: half.2 * reach,
                z_gait,
                lowering: into >= lowering_from,
                progress,
            };
        }
    }

    let next = GaitPhase {
        cycle_tick: (tick + 1) % cycle,
    };
    Ok((
        StepPlan {
            body_delta,
            roles,
            dt,
            saturated,
        },
        next,
    ))
}
