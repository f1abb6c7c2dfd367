//! Terrain elevation models and the terrain-compensation optimizer that
//! produces the body reorientation transform from the elevation function.

mod compensate;
mod model;

pub use compensate::{
    build_q_ter, build_q_ter_horizontal, cold_start, compensate, cost_with_samples,
    freeze_samples, gradient_with_samples, lagrangian_gradient, lagrangian_with_samples,
    shoulder_points_global, CompensationOptions, CompensationSolution, ShoulderSample,
};
pub use model::{GridTerrain, TerrainModel};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("terrain query ({x:.1}, {y:.1}) outside grid bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("terrain file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("terrain file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("compensation solution did not converge")]
    Unconverged,
}
