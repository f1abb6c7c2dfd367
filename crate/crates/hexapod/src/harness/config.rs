//! Scenario configuration: TOML schema, loading and validation.
//!
//! A scenario file has sections `[scenario]`, `[terrain.believed]`,
//! `[terrain.true]`, optional `[robot]`, `[gait]`, `[control]`, `[servo]`
//! and a list of `[[command]]` entries. Numbers are mm, rad and seconds.
//! When `[robot]` is omitted the default geometry ships; when present it
//! must be complete.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::TouchControlConfig;
use crate::gait::{select_gait, GaitCommand, GaitError, GaitParams};
use crate::kinematics::{KinematicsError, RobotGeometry};
use crate::terrain::{GridTerrain, TerrainError, TerrainModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}

impl From<KinematicsError> for ConfigError {
    fn from(e: KinematicsError) -> Self {
        ConfigError::Validation {
            field: "robot".into(),
            message: e.to_string(),
        }
    }
}

impl From<GaitError> for ConfigError {
    fn from(e: GaitError) -> Self {
        ConfigError::Validation {
            field: "gait".into(),
            message: e.to_string(),
        }
    }
}

/// Feed-forward only, or with the terrain-touch feedback loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    OpenLoop,
    ClosedLoop,
}

/// How the compensation solution is turned into the body transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationMode {
    /// Vertical shift plus pitch and roll.
    Full,
    /// Vertical shift only; the chassis stays level.
    HorizontalBody,
    /// Identity transform.
    Off,
}

/// Simulated servo response parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ServoParams {
    /// First-order lag time constant (s).
    pub time_constant_s: f64,
    /// Angle error below which a servo reports stopped (rad).
    pub stop_eps_rad: f64,
    /// Foot-to-terrain distance that counts as contact (mm).
    pub contact_eps: f64,
    /// Lift above the contact point that releases it (mm).
    pub release_eps: f64,
}

impl Default for ServoParams {
    fn default() -> Self {
        Self {
            time_constant_s: 0.04,
            stop_eps_rad: 0.005,
            contact_eps: 2.0,
            release_eps: 3.0,
        }
    }
}

/// A command active from time `t` onward.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimedCommand {
    pub t: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub wz: f64,
}

impl TimedCommand {
    pub fn command(&self) -> GaitCommand {
        GaitCommand {
            vx: self.vx,
            vy: self.vy,
            wz: self.wz,
        }
    }
}

/// Fully resolved scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: RobotGeometry,
    pub believed: TerrainModel,
    pub truth: TerrainModel,
    pub gait: GaitParams,
    pub commands: Vec<TimedCommand>,
    pub mode: ControlMode,
    pub compensation: CompensationMode,
    pub duration_s: f64,
    pub tick_hz: f64,
    pub payload_kg: f64,
    pub seed: u64,
    /// Injected believed-vs-true body position error per tick (mm).
    pub drift_per_tick: [f64; 2],
    /// Zero-mean torque sensing noise (N·mm).
    pub torque_noise_sigma: f64,
    pub control: TouchControlConfig,
    pub servo: ServoParams,
}

impl Scenario {
    pub fn command_at(&self, t: f64) -> GaitCommand {
        let mut current = GaitCommand::default();
        for c in &self.commands {
            if c.t <= t {
                current = c.command();
            }
        }
        current
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration_s * self.tick_hz).round() as u64
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    robot: Option<RobotGeometry>,
    gait: Option<RawGait>,
    terrain: RawTerrains,
    #[serde(default)]
    command: Vec<TimedCommand>,
    #[serde(default)]
    control: Option<TouchControlConfig>,
    #[serde(default)]
    servo: Option<ServoParams>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    mode: ControlMode,
    #[serde(default = "default_compensation")]
    compensation: CompensationMode,
    duration_s: f64,
    #[serde(default = "default_tick_hz")]
    tick_hz: f64,
    #[serde(default)]
    payload_kg: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    drift_per_tick: [f64; 2],
    #[serde(default = "default_noise")]
    torque_noise_sigma: f64,
}

fn default_compensation() -> CompensationMode {
    CompensationMode::Full
}

fn default_tick_hz() -> f64 {
    30.0
}

fn default_noise() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGait {
    kind: String,
    steps_per_phase: Option<u32>,
    lift_height: Option<f64>,
    lowering_ticks: Option<u32>,
    max_speed: Option<f64>,
    max_lateral_speed: Option<f64>,
    max_yaw_rate: Option<f64>,
    workspace_radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerrains {
    believed: TerrainSpec,
    #[serde(rename = "true")]
    truth: TerrainSpec,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum TerrainSpec {
    Flat {
        #[serde(default)]
        z0: f64,
    },
    Ramp {
        x_start: f64,
        angle: f64,
        #[serde(default)]
        base: f64,
    },
    Sine {
        amplitude: f64,
        length_scale: f64,
    },
    Box {
        #[serde(default)]
        z0: f64,
        height: f64,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    Grid {
        path: String,
    },
}

impl TerrainSpec {
    fn resolve(&self, base_dir: &Path) -> Result<TerrainModel, ConfigError> {
        Ok(match self {
            TerrainSpec::Flat { z0 } => TerrainModel::flat(*z0),
            TerrainSpec::Ramp {
                x_start,
                angle,
                base,
            } => TerrainModel::ramp(*x_start, *angle, *base),
            TerrainSpec::Sine {
                amplitude,
                length_scale,
            } => TerrainModel::sine(*amplitude, *length_scale),
            TerrainSpec::Box {
                z0,
                height,
                x_min,
                x_max,
                y_min,
                y_max,
            } => TerrainModel::BoxObstacle {
                z0: *z0,
                height: *height,
                x_min: *x_min,
                x_max: *x_max,
                y_min: *y_min,
                y_max: *y_max,
            },
            TerrainSpec::Grid { path } => {
                let full = base_dir.join(path);
                TerrainModel::Grid(GridTerrain::from_file(&full)?)
            }
        })
    }
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base_dir = path.parent().unwrap_or(Path::new("."));

    let mut geometry = raw.robot.unwrap_or_default();
    geometry.validate()?;
    if raw.scenario.payload_kg < 0.0 {
        return Err(ConfigError::Validation {
            field: "scenario.payload_kg".into(),
            message: "payload must be non-negative".into(),
        });
    }
    geometry.body.mass += raw.scenario.payload_kg;

    let mut gait = match &raw.gait {
        Some(g) => {
            let mut params = select_gait(&g.kind)?;
            if let Some(v) = g.steps_per_phase {
                params.steps_per_phase = v;
            }
            if let Some(v) = g.lift_height {
                params.lift_height = v;
            }
            if let Some(v) = g.lowering_ticks {
                params.lowering_ticks = v;
            }
            if let Some(v) = g.max_speed {
                params.max_speed = v;
            }
            if let Some(v) = g.max_lateral_speed {
                params.max_lateral_speed = v;
            }
            if let Some(v) = g.max_yaw_rate {
                params.max_yaw_rate = v;
            }
            if let Some(v) = g.workspace_radius {
                params.workspace_radius = v;
            }
            params
        }
        None => select_gait("tripod")?,
    };
    if raw.scenario.tick_hz <= 0.0 {
        return Err(ConfigError::Validation {
            field: "scenario.tick_hz".into(),
            message: "tick rate must be positive".into(),
        });
    }
    if raw.scenario.duration_s <= 0.0 {
        return Err(ConfigError::Validation {
            field: "scenario.duration_s".into(),
            message: "duration must be positive".into(),
        });
    }
    gait.dt = 1.0 / raw.scenario.tick_hz;
    gait.validate()?;

    let believed = raw.terrain.believed.resolve(base_dir)?;
    let truth = raw.terrain.truth.resolve(base_dir)?;

    let mut commands = raw.command;
    commands.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());

    let scenario = Scenario {
        geometry,
        believed,
        truth,
        gait,
        commands,
        mode: raw.scenario.mode,
        compensation: raw.scenario.compensation,
        duration_s: raw.scenario.duration_s,
        tick_hz: raw.scenario.tick_hz,
        payload_kg: raw.scenario.payload_kg,
        seed: raw.scenario.seed,
        drift_per_tick: raw.scenario.drift_per_tick,
        torque_noise_sigma: raw.scenario.torque_noise_sigma,
        control: raw.control.unwrap_or_default(),
        servo: raw.servo.unwrap_or_default(),
    };
    probe_terrains(&scenario)?;
    Ok(scenario)
}

/// Samples both terrains along the commanded path to catch unevaluable
/// regions (grid bounds) before the run starts.
fn probe_terrains(s: &Scenario) -> Result<(), ConfigError> {
    let reach = 350.0;
    let mut x = s.geometry.start_position[0];
    let mut y = s.geometry.start_position[1];
    let dt = 1.0 / s.tick_hz;
    let steps = s.total_ticks().max(1);
    let stride = (steps / 50).max(1);
    let mut probe = |terrain: &TerrainModel, field: &str, x: f64, y: f64| {
        for (px, py) in [
            (x - reach, y - reach),
            (x + reach, y - reach),
            (x - reach, y + reach),
            (x + reach, y + reach),
            (x, y),
        ] {
            if let Err(e) = terrain.elevation(px, py) {
                return Err(ConfigError::Validation {
                    field: field.to_string(),
                    message: format!("not evaluable over planned footprint: {e}"),
                });
            }
        }
        Ok(())
    };
    for tick in (0..steps).step_by(stride as usize) {
        let cmd = s.command_at(tick as f64 * dt);
        x += cmd.vx * dt * stride as f64;
        y += cmd.vy * dt * stride as f64;
        probe(&s.believed, "terrain.believed", x, y)?;
        probe(&s.truth, "terrain.true", x, y)?;
    }
    Ok(())
}

/// Parses and fully validates a config, returning a human-oriented summary
/// line on success.
pub fn validate_scenario(path: &Path) -> Result<String, ConfigError> {
    let s = load_scenario(path)?;
    Ok(format!(
        "ok: {:?} {:?}, {} ticks at {} Hz, {} command(s)",
        s.mode,
        s.compensation,
        s.total_ticks(),
        s.tick_hz,
        s.commands.len()
    ))
}
