//! Body-pose terrain compensation.
//!
//! The body is allowed three degrees of freedom relative to its gait-engine
//! pose: a vertical shift, a pitch about the body y-axis and a roll about the
//! body x-axis. The optimizer picks them so that the six shoulder points keep
//! their deployment height above the terrain, by steepest descent on the
//! quadratic height error with the trigonometric substitutions
//! `(a, b, c, d, e) = (δz, sin α, cos β, cos α, sin β)` held consistent
//! through their circle constraints.

use crate::kinematics::{BodyChainState, RobotGeometry};
use crate::math::{rotation, translation, Axis, Transform4, Vec3};
use crate::LEG_COUNT;

use super::{TerrainError, TerrainModel};

/// Optimizer knobs. The defaults reproduce the reference behaviour:
/// step weight 1e-5, stop when the iterate moves less than 0.01.
#[derive(Debug, Clone, Copy)]
pub struct CompensationOptions {
    pub weight: f64,
    pub tol: f64,
    pub max_iters: u32,
}

impl Default for CompensationOptions {
    fn default() -> Self {
        Self {
            weight: 1e-5,
            tol: 0.01,
            max_iters: 10_000,
        }
    }
}

/// Result of one compensation solve.
#[derive(Debug, Clone, Copy)]
pub struct CompensationSolution {
    /// Vertical body shift (mm).
    pub dz: f64,
    /// Rotation about the body y-axis (rad).
    pub alpha: f64,
    /// Rotation about the body x-axis (rad).
    pub beta: f64,
    /// Iterations spent.
    pub iterations: u32,
    /// Whether the stopping condition was met before the iteration cap.
    pub converged: bool,
    /// Final height-error cost (mm²).
    pub cost: f64,
    /// Raw optimizer state `(a, b, c, d, e, λ1, λ2)`, kept for warm starts.
    pub state: [f64; 7],
}

impl CompensationSolution {
    /// Identity solution (flat ground, no shift).
    pub fn zero() -> Self {
        Self {
            dz: 0.0,
            alpha: 0.0,
            beta: 0.0,
            iterations: 0,
            converged: true,
            cost: 0.0,
            state: cold_start(),
        }
    }
}

/// Cold-start optimizer state: zero pose, unit cosines, zero multipliers.
pub fn cold_start() -> [f64; 7] {
    [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]
}

/// One terrain sample point: shoulder coordinates in the body frame plus the
/// elevation frozen at the current trial footprint.
#[derive(Debug, Clone, Copy)]
pub struct ShoulderSample {
    pub x_j: f64,
    pub y_j: f64,
    pub z_j: f64,
    pub h: f64,
}

/// Global positions of the six shoulder points for a trial `(δz, α, β)`.
pub fn shoulder_points_global(
    chain: &BodyChainState,
    trial: (f64, f64, f64),
    geom: &RobotGeometry,
) -> [Vec3; LEG_COUNT] {
    let (dz, alpha, beta) = trial;
    let t = *chain.gait_pose()
        * translation(0.0, 0.0, dz).unwrap()
        * rotation(Axis::Y, alpha).unwrap()
        * rotation(Axis::X, beta).unwrap();
    std::array::from_fn(|leg| t.apply_point(&geom.shoulder_point(leg)))
}

/// Trial shoulder position using the raw substitution variables. Off the
/// constraint circles this is the literal linearised chain, which is what the
/// cost and its partial derivatives are written against.
fn trial_point(vars: &[f64; 7], gait_pose: &Transform4, p: &Vec3) -> Vec3 {
    let [a, b, c, d, e, _, _] = *vars;
    let local = Vec3::new(
        d * p.x + b * e * p.y + b * c * p.z,
        c * p.y - e * p.z,
        a - b * p.x + d * e * p.y + d * c * p.z,
    );
    gait_pose.apply_point(&local)
}

/// Samples the terrain at the trial footprints of all six shoulders.
pub fn freeze_samples(
    vars: &[f64; 7],
    chain: &BodyChainState,
    terrain: &TerrainModel,
    geom: &RobotGeometry,
) -> Result<[ShoulderSample; LEG_COUNT], TerrainError> {
    let gait_pose = chain.gait_pose();
    let mut samples = [ShoulderSample {
        x_j: 0.0,
        y_j: 0.0,
        z_j: 0.0,
        h: 0.0,
    }; LEG_COUNT];
    for (leg, sample) in samples.iter_mut().enumerate() {
        let p = geom.shoulder_point(leg);
        let world = trial_point(vars, gait_pose, &p);
        sample.x_j = p.x;
        sample.y_j = p.y;
        sample.z_j = p.z;
        sample.h = terrain.elevation(world.x, world.y)?;
    }
    Ok(samples)
}

/// Height error of one shoulder for the given variables and frozen sample:
/// distance above the terrain minus the deployment height.
fn residual(vars: &[f64; 7], s: &ShoulderSample, base_z: f64, sp_z: f64) -> f64 {
    let [a, b, c, d, e, _, _] = *vars;
    base_z + a - s.x_j * b + s.z_j * c * d + s.y_j * d * e - s.h - sp_z
}

/// Quadratic height-error cost over frozen samples (mm²).
pub fn cost_with_samples(
    vars: &[f64; 7],
    samples: &[ShoulderSample; LEG_COUNT],
    base_z: f64,
    sp_z: f64,
) -> f64 {
    samples
        .iter()
        .map(|s| residual(vars, s, base_z, sp_z).powi(2))
        .sum()
}

/// Value of the full Lagrangian over frozen samples: cost plus the
/// multiplier-weighted circle constraints.
pub fn lagrangian_with_samples(
    vars: &[f64; 7],
    samples: &[ShoulderSample; LEG_COUNT],
    base_z: f64,
    sp_z: f64,
) -> f64 {
    let [_, b, c, d, e, l1, l2] = *vars;
    cost_with_samples(vars, samples, base_z, sp_z)
        + l1 * (c * c + e * e - 1.0)
        + l2 * (b * b + d * d - 1.0)
}

/// The seven partial derivatives of the Lagrangian over frozen samples.
pub fn gradient_with_samples(
    vars: &[f64; 7],
    samples: &[ShoulderSample; LEG_COUNT],
    base_z: f64,
    sp_z: f64,
) -> [f64; 7] {
    let [_, b, c, d, e, l1, l2] = *vars;
    let mut g = [0.0; 7];
    for s in samples {
        let eps = residual(vars, s, base_z, sp_z);
        g[0] += 2.0 * eps;
        g[1] += 2.0 * eps * (-s.x_j);
        g[2] += 2.0 * eps * (s.z_j * d);
        g[3] += 2.0 * eps * (s.z_j * c + s.y_j * e);
        g[4] += 2.0 * eps * (s.y_j * d);
    }
    g[1] += 2.0 * l2 * b;
    g[2] += 2.0 * l1 * c;
    g[3] += 2.0 * l2 * d;
    g[4] += 2.0 * l1 * e;
    g[5] = c * c + e * e - 1.0;
    g[6] = b * b + d * d - 1.0;
    g
}

/// Gradient of the Lagrangian with the terrain term frozen at the current
/// trial footprint of `vars`.
pub fn lagrangian_gradient(
    vars: &[f64; 7],
    chain: &BodyChainState,
    terrain: &TerrainModel,
    geom: &RobotGeometry,
    sp_z: f64,
) -> Result<[f64; 7], TerrainError> {
    let samples = freeze_samples(vars, chain, terrain, geom)?;
    let base_z = chain.gait_pose().translation().z;
    Ok(gradient_with_samples(vars, &samples, base_z, sp_z))
}

/// Rescales the trig pairs `(b, d)` and `(c, e)` back onto their unit
/// circles. Angle recovery through `atan2` is unaffected by the radial part,
/// so this only removes scale drift between iterations.
fn project(vars: &mut [f64; 7]) {
    let n_bd = (vars[1] * vars[1] + vars[3] * vars[3]).sqrt();
    if n_bd > 1e-12 {
        vars[1] /= n_bd;
        vars[3] /= n_bd;
    }
    let n_ce = (vars[2] * vars[2] + vars[4] * vars[4]).sqrt();
    if n_ce > 1e-12 {
        vars[2] /= n_ce;
        vars[4] /= n_ce;
    }
}

/// One descent step over frozen samples. Returns the norm of the actual
/// state change (after the circle rescale).
pub(crate) fn descent_step(
    vars: &mut [f64; 7],
    samples: &[ShoulderSample; LEG_COUNT],
    base_z: f64,
    sp_z: f64,
    weight: f64,
) -> f64 {
    let g = gradient_with_samples(vars, samples, base_z, sp_z);
    let before = *vars;
    for (v, gi) in vars.iter_mut().zip(g.iter()) {
        *v -= weight * gi;
    }
    project(vars);
    before
        .iter()
        .zip(vars.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Runs the steepest-descent compensation solve.
///
/// Each iteration re-samples the terrain at the current trial footprint and
/// treats those elevations as constants for the gradient; the iteration stops
/// once the state moves less than `tol` between iterations. Warm starting
/// from the previous tick's state keeps walking-rate solves short.
pub fn compensate(
    chain: &BodyChainState,
    terrain: &TerrainModel,
    geom: &RobotGeometry,
    opts: &CompensationOptions,
    warm_start: Option<[f64; 7]>,
) -> Result<CompensationSolution, TerrainError> {
    let mut vars = warm_start.unwrap_or_else(cold_start);
    project(&mut vars);
    let base_z = chain.gait_pose().translation().z;
    let sp_z = geom.stance_height();

    let mut converged = false;
    let mut iterations = opts.max_iters;
    for it in 1..=opts.max_iters {
        let samples = freeze_samples(&vars, chain, terrain, geom)?;
        let moved = descent_step(&mut vars, &samples, base_z, sp_z, opts.weight);
        if moved <= opts.tol {
            converged = true;
            iterations = it;
            break;
        }
    }

    let samples = freeze_samples(&vars, chain, terrain, geom)?;
    let cost = cost_with_samples(&vars, &samples, base_z, sp_z);
    Ok(CompensationSolution {
        dz: vars[0],
        alpha: vars[1].atan2(vars[3]),
        beta: vars[4].atan2(vars[2]),
        iterations,
        converged,
        cost,
        state: vars,
    })
}

/// Builds the compensation transform `Disp(δz) * RotY(α) * RotX(β)`.
pub fn build_q_ter(sol: &CompensationSolution) -> Result<Transform4, TerrainError> {
    if !sol.converged {
        return Err(TerrainError::Unconverged);
    }
    Ok(translation(0.0, 0.0, sol.dz).unwrap()
        * rotation(Axis::Y, sol.alpha).unwrap()
        * rotation(Axis::X, sol.beta).unwrap())
}

/// Horizontal-body variant: keeps only the vertical shift so the chassis
/// stays level while tracking terrain height.
pub fn build_q_ter_horizontal(sol: &CompensationSolution) -> Result<Transform4, TerrainError> {
    if !sol.converged {
        return Err(TerrainError::Unconverged);
    }
    Ok(translation(0.0, 0.0, sol.dz).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::BodyPoseInput;
    use approx::assert_relative_eq;

    fn setup() -> (BodyChainState, RobotGeometry) {
        let geom = RobotGeometry::default();
        (BodyChainState::new(&geom), geom)
    }

    #[test]
    fn shoulder_points_at_start() {
        let (chain, geom) = setup();
        let points = shoulder_points_global(&chain, (0.0, 0.0, 0.0), &geom);
        let sp = geom.start_vec();
        for (leg, p) in points.iter().enumerate() {
            let expected = sp + geom.shoulder_point(leg);
            assert_relative_eq!(*p, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn shoulder_points_pure_lift() {
        let (chain, geom) = setup();
        let d = 12.0;
        let lifted = shoulder_points_global(&chain, (d, 0.0, 0.0), &geom);
        let base = shoulder_points_global(&chain, (0.0, 0.0, 0.0), &geom);
        for (a, b) in lifted.iter().zip(base.iter()) {
            assert_relative_eq!(a - b, Vec3::new(0.0, 0.0, d), epsilon = 1e-12);
        }
    }

    #[test]
    fn shoulder_points_pitch_heights() {
        let (chain, geom) = setup();
        let alpha = 0.3;
        let points = shoulder_points_global(&chain, (0.0, alpha, 0.0), &geom);
        for (leg, p) in points.iter().enumerate() {
            let sp = geom.shoulder_point(leg);
            let expected =
                geom.stance_height() - sp.x * alpha.sin() + sp.z * alpha.cos();
            assert_relative_eq!(p.z, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_zero_at_flat_solution() {
        let (chain, geom) = setup();
        let terrain = TerrainModel::flat(0.0);
        let g = lagrangian_gradient(
            &cold_start(),
            &chain,
            &terrain,
            &geom,
            geom.stance_height(),
        )
        .unwrap();
        for v in g {
            assert_relative_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constraint_rows_report_residual() {
        let (chain, geom) = setup();
        let terrain = TerrainModel::flat(0.0);
        let mut vars = cold_start();
        vars[1] = 0.6;
        vars[3] = 0.8;
        let g =
            lagrangian_gradient(&vars, &chain, &terrain, &geom, geom.stance_height()).unwrap();
        assert_relative_eq!(g[6], 0.0, epsilon = 1e-12); // 0.36 + 0.64 - 1
        assert_relative_eq!(g[5], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (chain, geom) = setup();
        let terrain = TerrainModel::sine(50.0, 100.0);
        let sp_z = geom.stance_height();
        let base_z = chain.gait_pose().translation().z;
        let mut seed = 7u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed % 2000) as f64 / 1000.0 - 1.0
        };
        for _ in 0..100 {
            let vars = [
                next() * 30.0,
                next() * 0.4,
                1.0 + next() * 0.2,
                1.0 + next() * 0.2,
                next() * 0.4,
                next() * 5.0,
                next() * 5.0,
            ];
            let samples = freeze_samples(&vars, &chain, &terrain, &geom).unwrap();
            let g = gradient_with_samples(&vars, &samples, base_z, sp_z);
            let h = 1e-6;
            for k in 0..7 {
                let mut plus = vars;
                let mut minus = vars;
                plus[k] += h;
                minus[k] -= h;
                let fd = (lagrangian_with_samples(&plus, &samples, base_z, sp_z)
                    - lagrangian_with_samples(&minus, &samples, base_z, sp_z))
                    / (2.0 * h);
                let scale = g[k].abs().max(fd.abs()).max(1.0);
                assert!(
                    (g[k] - fd).abs() / scale < 1e-4,
                    "partial {k}: analytic {} vs fd {}",
                    g[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn flat_terrain_identity_within_two_iterations() {
        let (chain, geom) = setup();
        let terrain = TerrainModel::flat(0.0);
        let sol = compensate(
            &chain,
            &terrain,
            &geom,
            &CompensationOptions::default(),
            None,
        )
        .unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 2, "iterations {}", sol.iterations);
        assert_relative_eq!(sol.dz, 0.0, epsilon = 0.01);
        assert_relative_eq!(sol.alpha, 0.0, epsilon = 0.01);
        assert_relative_eq!(sol.beta, 0.0, epsilon = 0.01);
        let q = build_q_ter(&sol).unwrap();
        assert!((q.matrix() - nalgebra::Matrix4::<f64>::identity()).norm() < 1e-9);
    }

    #[test]
    fn ramp_matches_slope() {
        let (mut chain, geom) = setup();
        // Walk the body well onto a 10 degree ramp that starts behind it.
        let gamma = 10f64.to_radians();
        let terrain = TerrainModel::ramp(-600.0, gamma, 0.0);
        let mut warm = None;
        let mut sol = None;
        for _ in 0..200 {
            chain.advance_chain((2.0, 0.0, 0.0), BodyPoseInput::default(), Transform4::identity());
            let s = compensate(
                &chain,
                &terrain,
                &geom,
                &CompensationOptions::default(),
                warm,
            )
            .unwrap();
            warm = Some(s.state);
            sol = Some(s);
        }
        let sol = sol.unwrap();
        assert!(sol.converged);
        // Nose-up pitch on an ascending ramp is negative alpha under the
        // y-axis rotation convention; magnitude matches the ramp slope.
        assert!(
            (sol.alpha.abs() - gamma).abs() < 0.5f64.to_radians(),
            "alpha {} vs gamma {}",
            sol.alpha,
            gamma
        );
        assert!(sol.alpha < 0.0);
        // Constraint circles hold at convergence.
        let [_, b, c, d, e, _, _] = sol.state;
        assert!((b * b + d * d - 1.0).abs() < 1e-6);
        assert!((c * c + e * e - 1.0).abs() < 1e-6);
    }

    #[test]
    fn horizontal_mode_keeps_rotation_identity() {
        let sol = CompensationSolution {
            dz: 14.0,
            alpha: 0.4,
            beta: -0.2,
            iterations: 3,
            converged: true,
            cost: 0.0,
            state: cold_start(),
        };
        let q = build_q_ter_horizontal(&sol).unwrap();
        assert_eq!(q.translation(), Vec3::new(0.0, 0.0, 14.0));
        assert_eq!(q.rotation(), nalgebra::Matrix3::identity());
        let zero = CompensationSolution::zero();
        let q0 = build_q_ter_horizontal(&zero).unwrap();
        assert!((q0.matrix() - nalgebra::Matrix4::<f64>::identity()).norm() == 0.0);
    }

    #[test]
    fn unconverged_solution_rejected() {
        let mut sol = CompensationSolution::zero();
        sol.converged = false;
        assert!(matches!(build_q_ter(&sol), Err(TerrainError::Unconverged)));
        assert!(matches!(
            build_q_ter_horizontal(&sol),
            Err(TerrainError::Unconverged)
        ));
    }

    #[test]
    fn q_ter_is_factor_product() {
        let sol = CompensationSolution {
            dz: 8.0,
            alpha: 0.25,
            beta: -0.1,
            iterations: 1,
            converged: true,
            cost: 0.0,
            state: cold_start(),
        };
        let q = build_q_ter(&sol).unwrap();
        let direct = translation(0.0, 0.0, 8.0).unwrap()
            * rotation(Axis::Y, 0.25).unwrap()
            * rotation(Axis::X, -0.1).unwrap();
        assert_relative_eq!((q.matrix() - direct.matrix()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn descent_cost_monotone_on_frozen_samples() {
        let (chain, geom) = setup();
        let terrain = TerrainModel::sine(50.0, 100.0);
        let sp_z = geom.stance_height();
        let base_z = chain.gait_pose().translation().z;
        let mut vars = cold_start();
        let samples = freeze_samples(&vars, &chain, &terrain, &geom).unwrap();
        let mut prev = cost_with_samples(&vars, &samples, base_z, sp_z);
        for _ in 0..2000 {
            let moved = descent_step(&mut vars, &samples, base_z, sp_z, 1e-5);
            let now = cost_with_samples(&vars, &samples, base_z, sp_z);
            assert!(
                now <= prev + 1e-12,
                "cost increased from {prev} to {now}"
            );
            prev = now;
            if moved < 1e-6 {
                break;
            }
        }
    }
}
