//! Simulated servo-and-contact plant.
//!
//! Stands in for the physical robot: servos follow commanded angles through
//! a first-order lag, feet ground themselves on the true terrain, and the
//! actual body pose is the rigid least-squares fit of the grounded feet to
//! their contact points. Sensed torques come from the same dynamics model
//! evaluated with the true contact flags, plus optional zero-mean noise.
//!
//! The believed and true worlds are linked by an optional per-tick drift:
//! contact points creep by the drift bias, so the fitted body pose slides
//! away from the believed pose the way a slipping stance would.

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::control::PlantSample;
use crate::dynamics::{
    link_frames, torque_components, ActuatorState, BodyState, ContactFlags, RobotState,
    TorqueVector, Vector18,
};
use crate::kinematics::{leg_fk_body, JointAngles, RobotGeometry};
use crate::math::{pose_dof, pose_transform, Transform4, Vec3, Vec6};
use crate::terrain::TerrainModel;
use crate::LEG_COUNT;

use super::config::ServoParams;

/// Commanded inputs for one plant tick.
pub struct PlantCommand {
    /// Commanded servo angles, leg-major (rad).
    pub angles: Vector18,
    /// True for legs meant to carry the body (push role or stopped on
    /// ground); false for legs in flight.
    pub support: [bool; LEG_COUNT],
}

/// Simulated plant state.
#[derive(Debug, Clone)]
pub struct PlantState {
    /// Actual servo angles after lag (rad).
    pub actual: Vector18,
    /// Per-leg ground contact in the true world.
    pub grounded: [bool; LEG_COUNT],
    /// Contact points of grounded feet (true world, mm).
    pub contacts: [Option<Vec3>; LEG_COUNT],
    /// Fitted actual body pose in the true world.
    pub body_pose: Transform4,
    /// Angles frozen while a swinging foot rests on the ground.
    held: [Option<[f64; 3]>; LEG_COUNT],
    /// Pose/angle history for rate estimation.
    pose_hist: [Vec6; 2],
    angle_hist: [Vector18; 2],
    ticks: u64,
    /// Last successful constraint projection, reused on rank loss.
    last_projection: Option<nalgebra::DMatrix<f64>>,
    /// Count of torque evaluations that had to fall back.
    pub rank_fallbacks: u32,
}

impl PlantState {
    /// Plant standing at the initial pose with all feet grounded under
    /// their neutral positions.
    pub fn standing(initial_pose: &Transform4, angles: &Vector18, geom: &RobotGeometry) -> Self {
        let contacts = std::array::from_fn(|leg| {
            let a = JointAngles {
                theta: angles[leg * 3],
                phi: angles[leg * 3 + 1],
                psi: angles[leg * 3 + 2],
            };
            Some(initial_pose.apply_point(&leg_fk_body(&a, geom, leg)))
        });
        let dof = pose_dof(initial_pose);
        Self {
            actual: *angles,
            grounded: [true; LEG_COUNT],
            contacts,
            body_pose: *initial_pose,
            held: [None; LEG_COUNT],
            pose_hist: [dof, dof],
            angle_hist: [*angles, *angles],
            ticks: 0,
            last_projection: None,
            rank_fallbacks: 0,
        }
    }

    fn leg_angles(&self, leg: usize) -> JointAngles {
        JointAngles {
            theta: self.actual[leg * 3],
            phi: self.actual[leg * 3 + 1],
            psi: self.actual[leg * 3 + 2],
        }
    }

    /// Body-frame foot positions at the actual angles.
    fn feet_body(&self, geom: &RobotGeometry) -> [Vec3; LEG_COUNT] {
        std::array::from_fn(|leg| leg_fk_body(&self.leg_angles(leg), geom, leg))
    }

    /// World foot position of one leg under the current fitted pose.
    pub fn foot_world(&self, geom: &RobotGeometry, leg: usize) -> Vec3 {
        self.body_pose
            .apply_point(&leg_fk_body(&self.leg_angles(leg), geom, leg))
    }

    /// Advances the plant one tick and returns the sensor sample.
    #[allow(clippy::too_many_arguments)]
    pub fn plant_tick<R: Rng>(
        &mut self,
        cmd: &PlantCommand,
        truth: &TerrainModel,
        geom: &RobotGeometry,
        servo: &ServoParams,
        dt: f64,
        drift: [f64; 2],
        noise_sigma: f64,
        rng: &mut R,
    ) -> PlantSample {
        // Stance slip: contacts creep by the injected positioning error.
        let drift_v = Vec3::new(drift[0], drift[1], 0.0);
        for c in self.contacts.iter_mut().flatten() {
            *c += drift_v;
        }

        // First-order servo lag toward the commanded angles; feet resting on
        // the ground during a swing hold their angles instead of descending
        // through the terrain.
        let k = dt / (dt + servo.time_constant_s);
        for leg in 0..LEG_COUNT {
            if let Some(frozen) = self.held[leg] {
                for j in 0..3 {
                    self.actual[leg * 3 + j] = frozen[j];
                }
                continue;
            }
            for j in 0..3 {
                let i = leg * 3 + j;
                self.actual[i] += k * (cmd.angles[i] - self.actual[i]);
            }
        }

        // Fit the body to the grounded feet, then update the contact set.
        self.fit_body(geom, &drift_v);
        self.update_contacts(cmd, truth, geom, servo);
        self.fit_body(geom, &drift_v);

        // Rates from pose/angle history, then the sensed torques with the
        // true contact flags.
        let dof = self.unwrapped_dof();
        let angles = self.actual;
        let vel_b = (dof - self.pose_hist[0]) / dt;
        let acc_b = (dof - 2.0 * self.pose_hist[0] + self.pose_hist[1]) / (dt * dt);
        let vel_a = (angles - self.angle_hist[0]) / dt;
        let acc_a = (angles - 2.0 * self.angle_hist[0] + self.angle_hist[1]) / (dt * dt);
        let (vel_b, acc_b, vel_a, acc_a) = if self.ticks < 2 {
            (Vec6::zeros(), Vec6::zeros(), Vector18::zeros(), Vector18::zeros())
        } else {
            (vel_b, acc_b, vel_a, acc_a)
        };
        let state = RobotState {
            actuators: ActuatorState {
                pos: angles,
                vel: vel_a,
                acc: acc_a,
            },
            body: BodyState {
                pose: dof,
                vel: vel_b,
                acc: acc_b,
            },
        };
        let torques = self.true_torques(&state, geom);

        self.pose_hist = [dof, self.pose_hist[0]];
        self.angle_hist = [angles, self.angle_hist[0]];
        self.ticks += 1;

        let mut sensed = torques;
        if noise_sigma > 0.0 {
            let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
            for v in sensed.0.iter_mut() {
                *v += normal.sample(rng);
            }
        }

        let leg_moving = std::array::from_fn(|leg| {
            (0..3).any(|j| {
                (cmd.angles[leg * 3 + j] - self.actual[leg * 3 + j]).abs() > servo.stop_eps_rad
            })
        });
        PlantSample {
            torques: sensed,
            angles: self.actual,
            leg_moving,
        }
    }

    /// Contact bookkeeping: ground descending feet that reach the true
    /// terrain, release feet lifted clear of their contact.
    fn update_contacts(
        &mut self,
        cmd: &PlantCommand,
        truth: &TerrainModel,
        geom: &RobotGeometry,
        servo: &ServoParams,
    ) {
        for leg in 0..LEG_COUNT {
            let world = self.foot_world(geom, leg);
            if self.grounded[leg] {
                // Release check: a swinging leg whose command pulls the foot
                // above the contact lets go and tracks the servos again.
                if !cmd.support[leg] {
                    let cmd_angles = JointAngles {
                        theta: cmd.angles[leg * 3],
                        phi: cmd.angles[leg * 3 + 1],
                        psi: cmd.angles[leg * 3 + 2],
                    };
                    let cmd_world = self
                        .body_pose
                        .apply_point(&leg_fk_body(&cmd_angles, geom, leg));
                    let contact_z = self.contacts[leg].map(|c| c.z).unwrap_or(0.0);
                    if cmd_world.z > contact_z + servo.release_eps {
                        self.grounded[leg] = false;
                        self.contacts[leg] = None;
                        self.held[leg] = None;
                    }
                }
                continue;
            }
            // Grounding check against the true terrain; out-of-bounds grid
            // queries mean the foot is off the mapped area and stays free.
            if let Ok(h) = truth.elevation(world.x, world.y) {
                if world.z <= h + servo.contact_eps {
                    self.grounded[leg] = true;
                    self.contacts[leg] = Some(Vec3::new(world.x, world.y, h));
                    if !cmd.support[leg] {
                        // Crossing during a swing freezes the servos until
                        // the controller (or the next lift) takes over.
                        let a = self.leg_angles(leg);
                        self.held[leg] = Some([a.theta, a.phi, a.psi]);
                    }
                }
            }
        }
    }

    /// Rigid least-squares fit of the grounded feet (body frame, actual
    /// angles) onto their contact points.
    fn fit_body(&mut self, geom: &RobotGeometry, drift_v: &Vec3) {
        let feet = self.feet_body(geom);
        let pairs: Vec<(Vec3, Vec3)> = (0..LEG_COUNT)
            .filter(|&l| self.grounded[l])
            .filter_map(|l| self.contacts[l].map(|c| (feet[l], c)))
            .collect();
        if pairs.len() < 3 {
            // Under-constrained: keep the previous attitude, follow the slip.
            self.body_pose =
                crate::math::translation(drift_v.x, drift_v.y, 0.0).unwrap() * self.body_pose;
            return;
        }
        let n = pairs.len() as f64;
        let centroid_a: Vec3 = pairs.iter().map(|p| p.0).sum::<Vec3>() / n;
        let centroid_b: Vec3 = pairs.iter().map(|p| p.1).sum::<Vec3>() / n;
        let mut h = Matrix3::<f64>::zeros();
        for (a, b) in &pairs {
            h += (a - centroid_a) * (b - centroid_b).transpose();
        }
        let svd = h.svd(true, true);
        let u = svd.u.unwrap();
        let v_t = svd.v_t.unwrap();
        let mut r = v_t.transpose() * u.transpose();
        if r.determinant() < 0.0 {
            let mut flip = Matrix3::identity();
            flip[(2, 2)] = -1.0;
            r = v_t.transpose() * flip * u.transpose();
        }
        let t = centroid_b - r * centroid_a;
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        if let Ok(pose) = Transform4::from_matrix(m) {
            self.body_pose = pose;
        }
    }

    /// Yaw-continuous body DOF of the fitted pose.
    fn unwrapped_dof(&self) -> Vec6 {
        let mut dof = pose_dof(&self.body_pose);
        let prev = self.pose_hist[0][5];
        while dof[5] - prev > std::f64::consts::PI {
            dof[5] -= std::f64::consts::TAU;
        }
        while dof[5] - prev < -std::f64::consts::PI {
            dof[5] += std::f64::consts::TAU;
        }
        dof
    }

    /// Model torques with the true contact flags; a rank-deficient support
    /// set reuses the last good constraint projection.
    fn true_torques(&mut self, state: &RobotState, geom: &RobotGeometry) -> TorqueVector {
        let flags = ContactFlags(self.grounded);
        let (tau_a, tau_b) = torque_components(state, geom);
        let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
        let blocks = crate::dynamics::constraint_blocks(&frames);
        let (a_c, b_c) = crate::dynamics::assemble_constraints(&blocks, &flags);
        match crate::math::left_pseudoinverse(&a_c) {
            Ok(pinv) => {
                let projection = (-(pinv * b_c)).transpose();
                let tau = tau_a + &projection * tau_b;
                self.last_projection = Some(projection);
                TorqueVector(tau)
            }
            Err(_) => {
                self.rank_fallbacks += 1;
                match &self.last_projection {
                    Some(projection) => TorqueVector(tau_a + projection * tau_b),
                    None => TorqueVector(tau_a),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{body_to_leg, leg_ik, LegEndpoint};
    use crate::math::translation;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    fn neutral_angles(geom: &RobotGeometry) -> Vector18 {
        let mut pos = Vector18::zeros();
        for leg in 0..LEG_COUNT {
            let p = body_to_leg(geom, leg)
                .unwrap()
                .inverse()
                .apply_point(&geom.neutral_endpoint(leg));
            let a = leg_ik(&LegEndpoint::leg(p), geom, leg).unwrap();
            pos[leg * 3] = a.theta;
            pos[leg * 3 + 1] = a.phi;
            pos[leg * 3 + 2] = a.psi;
        }
        pos
    }

    fn standing_plant(geom: &RobotGeometry) -> (PlantState, Vector18) {
        let pose = translation(0.0, 0.0, geom.stance_height()).unwrap();
        let angles = neutral_angles(geom);
        (PlantState::standing(&pose, &angles, geom), angles)
    }

    #[test]
    fn steady_command_keeps_state() {
        let geom = RobotGeometry::default();
        let (mut plant, angles) = standing_plant(&geom);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cmd = PlantCommand {
            angles,
            support: [true; LEG_COUNT],
        };
        let truth = TerrainModel::flat(0.0);
        let before = plant.actual;
        let sample = plant.plant_tick(
            &cmd,
            &truth,
            &geom,
            &ServoParams::default(),
            1.0 / 30.0,
            [0.0, 0.0],
            0.0,
            &mut rng,
        );
        assert!((plant.actual - before).norm() < 1e-12);
        assert!(sample.leg_moving.iter().all(|m| !m));
        assert_eq!(plant.grounded, [true; LEG_COUNT]);
    }

    #[test]
    fn noiseless_torques_match_model_with_true_flags() {
        let geom = RobotGeometry::default();
        let (mut plant, angles) = standing_plant(&geom);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cmd = PlantCommand {
            angles,
            support: [true; LEG_COUNT],
        };
        let truth = TerrainModel::flat(0.0);
        // Two warmup ticks so rates settle to zero.
        for _ in 0..3 {
            plant.plant_tick(
                &cmd,
                &truth,
                &geom,
                &ServoParams::default(),
                1.0 / 30.0,
                [0.0, 0.0],
                0.0,
                &mut rng,
            );
        }
        let sample = plant.plant_tick(
            &cmd,
            &truth,
            &geom,
            &ServoParams::default(),
            1.0 / 30.0,
            [0.0, 0.0],
            0.0,
            &mut rng,
        );
        let state = RobotState::standing(
            plant.actual,
            pose_dof(&plant.body_pose),
        );
        let expected =
            crate::dynamics::constrained_torque(&state, &geom, &ContactFlags::all_grounded())
                .unwrap();
        assert!(
            (sample.torques.0 - expected.0).norm() < 1e-6,
            "plant vs model torque gap {}",
            (sample.torques.0 - expected.0).norm()
        );
    }

    #[test]
    fn descending_foot_grounds_and_freezes() {
        let geom = RobotGeometry::default();
        let (mut plant, mut angles) = standing_plant(&geom);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = TerrainModel::flat(0.0);
        // Lift leg 0 clear of the ground first.
        let lifted = {
            let p = body_to_leg(&geom, 0)
                .unwrap()
                .inverse()
                .apply_point(&(geom.neutral_endpoint(0) + Vec3::new(0.0, 0.0, 40.0)));
            leg_ik(&LegEndpoint::leg(p), &geom, 0).unwrap()
        };
        angles[0] = lifted.theta;
        angles[1] = lifted.phi;
        angles[2] = lifted.psi;
        let mut support = [true; LEG_COUNT];
        support[0] = false;
        for _ in 0..40 {
            plant.plant_tick(
                &PlantCommand { angles, support },
                &truth,
                &geom,
                &ServoParams::default(),
                1.0 / 30.0,
                [0.0, 0.0],
                0.0,
                &mut rng,
            );
        }
        assert!(!plant.grounded[0], "lifted foot should be free");
        // Command it well below the true ground: it must stop at the
        // terrain, not pass through.
        let deep = {
            let p = body_to_leg(&geom, 0)
                .unwrap()
                .inverse()
                .apply_point(&(geom.neutral_endpoint(0) + Vec3::new(0.0, 0.0, -40.0)));
            leg_ik(&LegEndpoint::leg(p), &geom, 0).unwrap()
        };
        angles[0] = deep.theta;
        angles[1] = deep.phi;
        angles[2] = deep.psi;
        let mut crossing_tick = None;
        for tick in 0..60 {
            plant.plant_tick(
                &PlantCommand { angles, support },
                &truth,
                &geom,
                &ServoParams::default(),
                1.0 / 30.0,
                [0.0, 0.0],
                0.0,
                &mut rng,
            );
            if plant.grounded[0] {
                crossing_tick = Some(tick);
                break;
            }
        }
        let crossed = crossing_tick.expect("foot should ground");
        let frozen = plant.actual;
        let foot_z = plant.foot_world(&geom, 0).z;
        assert!(
            foot_z.abs() <= ServoParams::default().contact_eps + 1e-6,
            "foot stopped {foot_z} mm from ground at tick {crossed}"
        );
        // Further ticks leave the held angles unchanged.
        for _ in 0..10 {
            plant.plant_tick(
                &PlantCommand { angles, support },
                &truth,
                &geom,
                &ServoParams::default(),
                1.0 / 30.0,
                [0.0, 0.0],
                0.0,
                &mut rng,
            );
        }
        assert!((plant.actual - frozen).norm() < 1e-12);
    }

    #[test]
    fn drift_slides_the_fitted_pose() {
        let geom = RobotGeometry::default();
        let (mut plant, angles) = standing_plant(&geom);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = TerrainModel::flat(0.0);
        let cmd = PlantCommand {
            angles,
            support: [true; LEG_COUNT],
        };
        for _ in 0..10 {
            plant.plant_tick(
                &cmd,
                &truth,
                &geom,
                &ServoParams::default(),
                1.0 / 30.0,
                [-0.5, 0.0],
                0.0,
                &mut rng,
            );
        }
        let x = plant.body_pose.translation().x;
        assert!((x + 5.0).abs() < 1e-6, "drifted pose x = {x}");
    }
}
