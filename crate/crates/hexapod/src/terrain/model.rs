//! Terrain elevation models: flat planes, analytic shapes and gridded
//! elevation maps with bilinear interpolation.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TerrainError;

/// Terrain elevation function `h(x, y)` in mm over ground-plane coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainModel {
    /// Constant elevation everywhere.
    Flat { z0: f64 },
    /// Flat approach at `base`, then a plane rising at `angle` for
    /// `x > x_start`.
    Ramp { x_start: f64, angle: f64, base: f64 },
    /// `amplitude * (sin(x / length_scale) + cos(y / length_scale))`.
    Sine { amplitude: f64, length_scale: f64 },
    /// Flat plane with a raised rectangular plate.
    #[serde(rename = "box")]
    BoxObstacle {
        z0: f64,
        height: f64,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    /// Gridded elevation samples, bilinear interpolation between nodes.
    Grid(GridTerrain),
}

impl TerrainModel {
    pub fn flat(z0: f64) -> Self {
        TerrainModel::Flat { z0 }
    }

    pub fn ramp(x_start: f64, angle: f64, base: f64) -> Self {
        TerrainModel::Ramp {
            x_start,
            angle,
            base,
        }
    }

    pub fn sine(amplitude: f64, length_scale: f64) -> Self {
        TerrainModel::Sine {
            amplitude,
            length_scale,
        }
    }

    /// Elevation at `(x, y)`. Grid terrains reject queries outside their
    /// extent; the analytic variants are defined everywhere.
    pub fn elevation(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        match self {
            TerrainModel::Flat { z0 } => Ok(*z0),
            TerrainModel::Ramp {
                x_start,
                angle,
                base,
            } => {
                if x <= *x_start {
                    Ok(*base)
                } else {
                    Ok(base + (x - x_start) * angle.tan())
                }
            }
            TerrainModel::Sine {
                amplitude,
                length_scale,
            } => Ok(amplitude * ((x / length_scale).sin() + (y / length_scale).cos())),
            TerrainModel::BoxObstacle {
                z0,
                height,
                x_min,
                x_max,
                y_min,
                y_max,
            } => {
                if x >= *x_min && x <= *x_max && y >= *y_min && y <= *y_max {
                    Ok(z0 + height)
                } else {
                    Ok(*z0)
                }
            }
            TerrainModel::Grid(grid) => grid.elevation(x, y),
        }
    }
}

/// Regular elevation grid: origin, square cell size, row-major samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridTerrain {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl GridTerrain {
    pub fn new(
        origin: (f64, f64),
        cell: f64,
        nx: usize,
        ny: usize,
        data: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if cell <= 0.0 || nx < 2 || ny < 2 || data.len() != nx * ny {
            return Err(TerrainError::Parse {
                line: 0,
                msg: format!(
                    "grid needs cell > 0, dims >= 2x2 and {} samples, got {}",
                    nx * ny,
                    data.len()
                ),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TerrainError::Parse {
                line: 0,
                msg: "grid contains non-finite elevation".into(),
            });
        }
        Ok(Self {
            origin_x: origin.0,
            origin_y: origin.1,
            cell,
            nx,
            ny,
            data,
        })
    }

    fn sample(&self, ix: usize, iy: usize) -> f64 {
        self.data[iy * self.nx + ix]
    }

    pub fn elevation(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        let gx = (x - self.origin_x) / self.cell;
        let gy = (y - self.origin_y) / self.cell;
        if gx < 0.0 || gy < 0.0 || gx > (self.nx - 1) as f64 || gy > (self.ny - 1) as f64 {
            return Err(TerrainError::OutOfBounds { x, y });
        }
        let ix = (gx.floor() as usize).min(self.nx - 2);
        let iy = (gy.floor() as usize).min(self.ny - 2);
        let fx = gx - ix as f64;
        let fy = gy - iy as f64;
        let h00 = self.sample(ix, iy);
        let h10 = self.sample(ix + 1, iy);
        let h01 = self.sample(ix, iy + 1);
        let h11 = self.sample(ix + 1, iy + 1);
        Ok(h00 * (1.0 - fx) * (1.0 - fy)
            + h10 * fx * (1.0 - fy)
            + h01 * (1.0 - fx) * fy
            + h11 * fx * fy)
    }

    /// Parses the plain-text grid format:
    ///
    /// ```text
    /// origin <x> <y>
    /// cell <size>
    /// dims <nx> <ny>
    /// <nx * ny elevation values, row-major, whitespace separated>
    /// ```
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TerrainError> {
        let mut origin = None;
        let mut cell = None;
        let mut dims = None;
        let mut data = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let head = parts.next().unwrap();
            let parse = |tok: &str| -> Result<f64, TerrainError> {
                tok.parse::<f64>().map_err(|_| TerrainError::Parse {
                    line: lineno,
                    msg: format!("expected number, found `{tok}`"),
                })
            };
            match head {
                "origin" => {
                    let x = parse(parts.next().ok_or(TerrainError::Parse {
                        line: lineno,
                        msg: "origin needs two values".into(),
                    })?)?;
                    let y = parse(parts.next().ok_or(TerrainError::Parse {
                        line: lineno,
                        msg: "origin needs two values".into(),
                    })?)?;
                    origin = Some((x, y));
                }
                "cell" => {
                    cell = Some(parse(parts.next().ok_or(TerrainError::Parse {
                        line: lineno,
                        msg: "cell needs a value".into(),
                    })?)?);
                }
                "dims" => {
                    let nx = parse(parts.next().ok_or(TerrainError::Parse {
                        line: lineno,
                        msg: "dims needs two values".into(),
                    })?)? as usize;
                    let ny = parse(parts.next().ok_or(TerrainError::Parse {
                        line: lineno,
                        msg: "dims needs two values".into(),
                    })?)? as usize;
                    dims = Some((nx, ny));
                }
                _ => {
                    for tok in std::iter::once(head).chain(parts) {
                        data.push(parse(tok)?);
                    }
                }
            }
        }
        let origin = origin.ok_or(TerrainError::Parse {
            line: 0,
            msg: "missing `origin` header".into(),
        })?;
        let cell = cell.ok_or(TerrainError::Parse {
            line: 0,
            msg: "missing `cell` header".into(),
        })?;
        let (nx, ny) = dims.ok_or(TerrainError::Parse {
            line: 0,
            msg: "missing `dims` header".into(),
        })?;
        Self::new(origin, cell, nx, ny, data)
    }

    pub fn from_file(path: &Path) -> Result<Self, TerrainError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }
}
