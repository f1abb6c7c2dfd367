//! Scenario runner: drives the gait engine, terrain compensation, endpoint
//! pipeline and (optionally) the touch controller against the simulated
//! plant, collecting tick logs and a run summary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::{ControlError, LoweringController, TouchOutcome};
use crate::dynamics::{
    assemble_constraints, constraint_blocks, link_frames, torque_components, ActuatorState,
    BodyState, ContactFlags, RobotState, TorqueVector, Vector18,
};
use crate::gait::{gait_tick, GaitPhase, LegRole, StepPlan};
use crate::kinematics::{
    body_to_leg, leg_ik, BodyChainState, BodyPoseInput, JointAngles, LegEndpoint,
};
use crate::math::{left_pseudoinverse, pose_dof, Transform4, Vec6};
use crate::terrain::{
    build_q_ter, build_q_ter_horizontal, compensate, CompensationOptions, CompensationSolution,
};
use crate::{JOINT_COUNT, LEG_COUNT};

use super::config::{CompensationMode, ControlMode, Scenario};
use super::log::TickLog;
use super::plant::{PlantCommand, PlantState};
use super::HarnessError;

/// Grounding gap beyond which a push transition counts as an overstep (mm).
const OVERSTEP_THRESHOLD_MM: f64 = 10.0;
/// Push ticks allowed for servo settling before a free foot counts as
/// hanging.
const HANG_SETTLE_TICKS: u64 = 6;
/// Consecutive gait-hold ticks before the run is declared stalled.
const MAX_CONSECUTIVE_HOLDS: u64 = 600;

/// Outcome statistics of one scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub completed: bool,
    pub aborted: Option<String>,
    pub ticks: u64,
    pub hold_ticks: u64,
    pub overstep_events: u32,
    pub hang_events: u32,
    pub touch_events: u32,
    pub extend_events: u32,
    pub max_roll_dev_deg: f64,
    pub max_pitch_dev_deg: f64,
    pub comp_failures: u32,
    pub comp_iterations: Vec<u32>,
    pub model_rank_fallbacks: u32,
    pub plant_rank_fallbacks: u32,
    pub saturated_ticks: u64,
    pub believed_final_x: f64,
    pub actual_final_x: f64,
}

/// Logs plus summary of one run.
#[derive(Debug)]
pub struct RunResult {
    pub logs: Vec<TickLog>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Copy)]
struct LegTracker {
    stopped: bool,
    stopped_angles: JointAngles,
    was_push: bool,
    push_start: u64,
    hang_flagged: bool,
    last_swing_disp: (f64, f64, f64),
}

impl LegTracker {
    fn new() -> Self {
        Self {
            stopped: false,
            stopped_angles: JointAngles {
                theta: 0.0,
                phi: 0.0,
                psi: 0.0,
            },
            was_push: true,
            push_start: 0,
            hang_flagged: false,
            last_swing_disp: (0.0, 0.0, 0.0),
        }
    }
}

/// Believed-model torque with reuse of the last good constraint projection
/// when the believed support set is rank deficient.
struct ModelTorque {
    last_projection: Option<nalgebra::DMatrix<f64>>,
    fallbacks: u32,
}

impl ModelTorque {
    fn new() -> Self {
        Self {
            last_projection: None,
            fallbacks: 0,
        }
    }

    fn compute(
        &mut self,
        state: &RobotState,
        geom: &crate::kinematics::RobotGeometry,
        flags: &ContactFlags,
    ) -> TorqueVector {
        let (tau_a, tau_b) = torque_components(state, geom);
        let frames = link_frames(&state.body.pose, &state.actuators.pos, geom);
        let blocks = constraint_blocks(&frames);
        let (a_c, b_c) = assemble_constraints(&blocks, flags);
        match left_pseudoinverse(&a_c) {
            Ok(pinv) => {
                let projection = (-(pinv * b_c)).transpose();
                let tau = tau_a + &projection * tau_b;
                self.last_projection = Some(projection);
                TorqueVector(tau)
            }
            Err(_) => {
                self.fallbacks += 1;
                match &self.last_projection {
                    Some(p) => TorqueVector(tau_a + p * tau_b),
                    None => TorqueVector(tau_a),
                }
            }
        }
    }
}

/// Runs a scenario to completion (or abort) and returns logs plus summary.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult, HarnessError> {
    let geom = &scenario.geometry;
    let dt = 1.0 / scenario.tick_hz;
    let mut gait = scenario.gait;
    gait.dt = dt;
    gait.validate().map_err(HarnessError::Gait)?;
    let closed = scenario.mode == ControlMode::ClosedLoop;

    let neutral: [LegEndpoint; LEG_COUNT] =
        std::array::from_fn(|leg| LegEndpoint::body(geom.neutral_endpoint(leg)));
    let mut endpoints = neutral;

    // Initial stance angles.
    let mut commanded = Vector18::zeros();
    for leg in 0..LEG_COUNT {
        let p = body_to_leg(geom, leg)
            .map_err(HarnessError::Kinematics)?
            .inverse()
            .apply_point(&neutral[leg].position);
        let a = leg_ik(&crate::kinematics::LegEndpoint::leg(p), geom, leg)
            .map_err(HarnessError::Kinematics)?;
        commanded[leg * 3] = a.theta;
        commanded[leg * 3 + 1] = a.phi;
        commanded[leg * 3 + 2] = a.psi;
    }

    let mut chain = BodyChainState::new(geom);
    let mut plant = PlantState::standing(chain.world_from_body(), &commanded, geom);
    let mut controller = LoweringController::new(scenario.control);
    let mut model_torque = ModelTorque::new();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut phase = GaitPhase::default();
    let mut believed_flags = ContactFlags::all_grounded();
    let mut trackers = [LegTracker::new(); LEG_COUNT];
    let mut warm: Option<[f64; 7]> = None;
    let mut q_ter_last = Transform4::identity();
    let mut comp_last = CompensationSolution::zero();
    let comp_opts = CompensationOptions::default();

    // Believed pose/angle history for rate estimation.
    let dof0 = pose_dof(chain.world_from_body());
    let mut hist_b = [dof0, dof0];
    let mut hist_a = [commanded, commanded];

    let mut logs: Vec<TickLog> = Vec::new();
    let mut summary = RunSummary {
        completed: false,
        aborted: None,
        ticks: 0,
        hold_ticks: 0,
        overstep_events: 0,
        hang_events: 0,
        touch_events: 0,
        extend_events: 0,
        max_roll_dev_deg: 0.0,
        max_pitch_dev_deg: 0.0,
        comp_failures: 0,
        comp_iterations: Vec::new(),
        model_rank_fallbacks: 0,
        plant_rank_fallbacks: 0,
        saturated_ticks: 0,
        believed_final_x: 0.0,
        actual_final_x: 0.0,
    };

    let total = scenario.total_ticks();
    let mut consecutive_holds: u64 = 0;
    let mut tick: u64 = 0;
    let mut abort: Option<String> = None;

    'ticks: while tick < total {
        let t = tick as f64 * dt;
        let mut events: Vec<String> = Vec::new();

        // 1. Gait plan, with the phase held while lowering legs finish.
        let cmd = scenario.command_at(t);
        let (mut plan, mut next_phase) = gait_tick(&cmd, phase, &gait).map_err(HarnessError::Gait)?;
        let mut hold = false;
        if closed && controller.any_lowering() {
            for leg in 0..LEG_COUNT {
                if controller.is_lowering(leg) && plan.roles[leg].is_push() {
                    hold = true;
                }
            }
        }
        if hold {
            consecutive_holds += 1;
            summary.hold_ticks += 1;
            if consecutive_holds > MAX_CONSECUTIVE_HOLDS {
                abort = Some("gait hold stalled: lowering legs never touched".into());
                break 'ticks;
            }
            plan = hold_plan(&controller, &trackers, dt);
            next_phase = phase;
            events.push("hold".into());
        } else {
            consecutive_holds = 0;
        }
        if plan.saturated {
            summary.saturated_ticks += 1;
        }

        // 2. Terrain compensation at the post-step chain pose.
        let q_ter = if scenario.compensation == CompensationMode::Off {
            Transform4::identity()
        } else {
            let mut probe = chain.clone();
            probe.advance_chain(plan.body_delta, BodyPoseInput::default(), Transform4::identity());
            match compensate(&probe, &scenario.believed, geom, &comp_opts, warm) {
                Ok(sol) => {
                    summary.comp_iterations.push(sol.iterations);
                    if sol.converged {
                        warm = Some(sol.state);
                        comp_last = sol;
                        let q = match scenario.compensation {
                            CompensationMode::Full => build_q_ter(&sol),
                            CompensationMode::HorizontalBody => build_q_ter_horizontal(&sol),
                            CompensationMode::Off => unreachable!(),
                        };
                        match q {
                            Ok(q) => q,
                            Err(e) => {
                                abort = Some(format!("compensation transform: {e}"));
                                break 'ticks;
                            }
                        }
                    } else {
                        // Keep the last good transform, flag the failure.
                        summary.comp_failures += 1;
                        events.push("comp_unconverged".into());
                        q_ter_last
                    }
                }
                Err(e) => {
                    abort = Some(format!("terrain compensation failed: {e}"));
                    break 'ticks;
                }
            }
        };
        q_ter_last = q_ter;

        // 3. Advance the chain.
        chain.advance_chain(plan.body_delta, BodyPoseInput::default(), q_ter);
        let q_body = chain.body_increment();
        let q_body_inv = q_body.inverse();

        // 4. Endpoint updates and role transitions.
        let mut entering_push = [false; LEG_COUNT];
        for leg in 0..LEG_COUNT {
            let tracker = &mut trackers[leg];
            match plan.roles[leg] {
                LegRole::Push { .. } => {
                    if !tracker.was_push {
                        entering_push[leg] = true;
                        tracker.push_start = tick;
                        tracker.hang_flagged = false;
                        tracker.stopped = false;
                        believed_flags.0[leg] = true;
                        controller.clear(leg);
                    }
                    endpoints[leg].position = q_body_inv.apply_point(&endpoints[leg].position);
                }
                LegRole::Swing {
                    x_disp,
                    y_disp,
                    rot_disp,
                    z_gait,
                    lowering,
                    ..
                } => {
                    if tracker.was_push {
                        believed_flags.0[leg] = false;
                        tracker.stopped = false;
                        controller.clear(leg);
                    }
                    if tracker.stopped || believed_flags.0[leg] {
                        // Touched mid-window: the foot is planted, counter-move it.
                        endpoints[leg].position =
                            q_body_inv.apply_point(&endpoints[leg].position);
                    } else {
                        let placed = chain.place_swing_endpoint(
                            &neutral[leg],
                            (x_disp, y_disp, rot_disp),
                            z_gait,
                            &scenario.believed,
                        );
                        let mut target = match placed {
                            Ok(p) => p,
                            Err(e) => {
                                abort = Some(format!("swing placement leg {leg}: {e}"));
                                break 'ticks;
                            }
                        };
                        let ext = controller.extension_offset(leg);
                        if closed && ext > 0.0 {
                            let mut g = chain.to_global(&target).expect("body frame");
                            g.z -= ext;
                            target = LegEndpoint::body(
                                chain.world_from_body().inverse().apply_point(&g),
                            );
                        }
                        endpoints[leg] = target;
                        tracker.last_swing_disp = (x_disp, y_disp, rot_disp);
                        if lowering && closed && !controller.is_lowering(leg) {
                            controller.begin_lowering(leg);
                        }
                    }
                }
            }
            trackers[leg].was_push = plan.roles[leg].is_push();
        }

        // 5. Inverse kinematics to commanded angles.
        for leg in 0..LEG_COUNT {
            if trackers[leg].stopped {
                let a = trackers[leg].stopped_angles;
                commanded[leg * 3] = a.theta;
                commanded[leg * 3 + 1] = a.phi;
                commanded[leg * 3 + 2] = a.psi;
                continue;
            }
            let to_leg = body_to_leg(geom, leg).expect("valid leg").inverse();
            let p = crate::kinematics::LegEndpoint::leg(to_leg.apply_point(&endpoints[leg].position));
            match leg_ik(&p, geom, leg) {
                Ok(a) => {
                    commanded[leg * 3] = a.theta;
                    commanded[leg * 3 + 1] = a.phi;
                    commanded[leg * 3 + 2] = a.psi;
                }
                Err(e) => {
                    abort = Some(format!("inverse kinematics: {e}"));
                    break 'ticks;
                }
            }
        }

        // 6. Believed model state with finite-difference rates.
        let mut dof = pose_dof(chain.world_from_body());
        while dof[5] - hist_b[0][5] > std::f64::consts::PI {
            dof[5] -= std::f64::consts::TAU;
        }
        while dof[5] - hist_b[0][5] < -std::f64::consts::PI {
            dof[5] += std::f64::consts::TAU;
        }
        let (vel_b, acc_b, vel_a, acc_a) = if tick < 2 {
            (Vec6::zeros(), Vec6::zeros(), Vector18::zeros(), Vector18::zeros())
        } else {
            (
                (dof - hist_b[0]) / dt,
                (dof - 2.0 * hist_b[0] + hist_b[1]) / (dt * dt),
                (commanded - hist_a[0]) / dt,
                (commanded - 2.0 * hist_a[0] + hist_a[1]) / (dt * dt),
            )
        };
        let model_state = RobotState {
            actuators: ActuatorState {
                pos: commanded,
                vel: vel_a,
                acc: acc_a,
            },
            body: BodyState {
                pose: dof,
                vel: vel_b,
                acc: acc_b,
            },
        };
        hist_b = [dof, hist_b[0]];
        hist_a = [commanded, hist_a[0]];

        // 7. Plant tick.
        let support = std::array::from_fn(|leg| {
            plan.roles[leg].is_push() || believed_flags.0[leg]
        });
        let sample = plant.plant_tick(
            &PlantCommand {
                angles: commanded,
                support,
            },
            &scenario.truth,
            geom,
            &scenario.servo,
            dt,
            scenario.drift_per_tick,
            scenario.torque_noise_sigma,
            &mut rng,
        );

        // 8. Believed-model torque for the log.
        let model_tau = model_torque.compute(&model_state, geom, &believed_flags);

        // 9. Touch feedback.
        if closed && controller.any_lowering() {
            match controller.lowering_step(&model_state, geom, &mut believed_flags, &sample) {
                Ok(decisions) => {
                    for d in decisions {
                        match d.outcome {
                            TouchOutcome::Touched => {
                                let endpoint = d.endpoint.expect("touched carries endpoint");
                                endpoints[d.leg] = endpoint;
                                trackers[d.leg].stopped = true;
                                trackers[d.leg].stopped_angles = JointAngles {
                                    theta: sample.angles[d.leg * 3],
                                    phi: sample.angles[d.leg * 3 + 1],
                                    psi: sample.angles[d.leg * 3 + 2],
                                };
                                summary.touch_events += 1;
                                events.push(format!("touch:{}", d.leg));
                            }
                            TouchOutcome::ExtendDown => {
                                summary.extend_events += 1;
                                events.push(format!("extend:{}", d.leg));
                            }
                            TouchOutcome::KeepLowering => {}
                        }
                    }
                }
                Err(ControlError::UnreachableGround { leg, extended }) => {
                    abort = Some(format!(
                        "leg {leg} found no ground within {extended:.0} mm"
                    ));
                    break 'ticks;
                }
                Err(e) => {
                    abort = Some(format!("touch control: {e}"));
                    break 'ticks;
                }
            }
        }

        // 10. Event metrics against the plant truth.
        for leg in 0..LEG_COUNT {
            if entering_push[leg] {
                if let (true, Some(contact)) = (plant.grounded[leg], plant.contacts[leg]) {
                    let believed_z = chain
                        .to_global(&endpoints[leg])
                        .expect("body frame")
                        .z;
                    if contact.z - believed_z > OVERSTEP_THRESHOLD_MM {
                        summary.overstep_events += 1;
                        events.push(format!("overstep:{leg}"));
                    }
                }
            }
            let tracker = &mut trackers[leg];
            if plan.roles[leg].is_push()
                && tick.saturating_sub(tracker.push_start) >= HANG_SETTLE_TICKS
                && !plant.grounded[leg]
                && !tracker.hang_flagged
            {
                summary.hang_events += 1;
                tracker.hang_flagged = true;
                events.push(format!("hang:{leg}"));
            }
        }
        let actual_dof = pose_dof(&plant.body_pose);
        let roll_dev = (actual_dof[3] - dof[3]).abs().to_degrees();
        let pitch_dev = (actual_dof[4] - dof[4]).abs().to_degrees();
        summary.max_roll_dev_deg = summary.max_roll_dev_deg.max(roll_dev);
        summary.max_pitch_dev_deg = summary.max_pitch_dev_deg.max(pitch_dev);

        // 11. Log.
        logs.push(TickLog {
            tick,
            time: t,
            believed_dof: dof.into(),
            actual_dof: actual_dof.into(),
            commanded: vector18_array(&commanded),
            measured: vector18_array(&sample.angles),
            model_torque: vector18_array(&model_tau.0),
            plant_torque: vector18_array(&sample.torques.0),
            grounded: plant.grounded,
            believed_grounded: believed_flags.0,
            comp_dz: comp_last.dz,
            comp_alpha: comp_last.alpha,
            comp_beta: comp_last.beta,
            comp_iters: comp_last.iterations,
            comp_converged: comp_last.converged,
            events,
        });

        phase = next_phase;
        tick += 1;
    }

    summary.ticks = tick;
    summary.aborted = abort;
    summary.completed = summary.aborted.is_none() && tick == total;
    summary.believed_final_x = chain.world_from_body().translation().x;
    summary.actual_final_x = plant.body_pose.translation().x;
    summary.model_rank_fallbacks = model_torque.fallbacks;
    summary.plant_rank_fallbacks = plant.rank_fallbacks;
    Ok(RunResult { logs, summary })
}

/// Plan used while the gait is held for unfinished lowering legs: zero body
/// motion, still-lowering legs keep their final swing instruction.
fn hold_plan(
    controller: &LoweringController,
    trackers: &[LegTracker; LEG_COUNT],
    dt: f64,
) -> StepPlan {
    let mut plan = StepPlan::all_push(dt);
    for leg in 0..LEG_COUNT {
        if controller.is_lowering(leg) {
            let (x, y, r) = trackers[leg].last_swing_disp;
            plan.roles[leg] = LegRole::Swing {
                x_disp: x,
                y_disp: y,
                rot_disp: r,
                z_gait: 0.0,
                lowering: true,
                progress: 1.0,
            };
        }
    }
    plan
}

fn vector18_array(v: &Vector18) -> [f64; JOINT_COUNT] {
    let mut out = [0.0; JOINT_COUNT];
    for (o, x) in out.iter_mut().zip(v.iter()) {
        *o = *x;
    }
    out
}
