//! Tick logs, CSV output and per-actuator plot traces.
//!
//! `run.csv` column order (one row per tick):
//!
//! 1. `tick`, `time`
//! 2. `bel_x bel_y bel_z bel_rx bel_ry bel_rz` — believed body DOF
//! 3. `act_x act_y act_z act_rx act_ry act_rz` — fitted actual body DOF
//! 4. `cmd_0 .. cmd_17` — commanded angles (rad), leg-major
//! 5. `meas_0 .. meas_17` — actual angles (rad)
//! 6. `model_tau_0 .. model_tau_17` — believed-model torques (N·mm)
//! 7. `plant_tau_0 .. plant_tau_17` — sensed plant torques (N·mm)
//! 8. `ground_0 .. ground_5` — true contact flags (0/1)
//! 9. `bel_ground_0 .. bel_ground_5` — believed contact flags (0/1)
//! 10. `comp_dz comp_alpha comp_beta comp_iters comp_converged`
//! 11. `events` — semicolon-joined event tags for the tick
//!
//! Floats are written with fixed precision so identical runs produce
//! byte-identical files.

use std::io::Write;
use std::path::Path;

use crate::{JOINT_COUNT, LEG_COUNT};

use super::HarnessError;

/// One record per control tick.
#[derive(Debug, Clone)]
pub struct TickLog {
    pub tick: u64,
    pub time: f64,
    pub believed_dof: [f64; 6],
    pub actual_dof: [f64; 6],
    pub commanded: [f64; JOINT_COUNT],
    pub measured: [f64; JOINT_COUNT],
    pub model_torque: [f64; JOINT_COUNT],
    pub plant_torque: [f64; JOINT_COUNT],
    pub grounded: [bool; LEG_COUNT],
    pub believed_grounded: [bool; LEG_COUNT],
    pub comp_dz: f64,
    pub comp_alpha: f64,
    pub comp_beta: f64,
    pub comp_iters: u32,
    pub comp_converged: bool,
    pub events: Vec<String>,
}

pub fn csv_header() -> String {
    let mut cols: Vec<String> = vec!["tick".into(), "time".into()];
    for n in ["bel", "act"] {
        for c in ["x", "y", "z", "rx", "ry", "rz"] {
            cols.push(format!("{n}_{c}"));
        }
    }
    for n in ["cmd", "meas", "model_tau", "plant_tau"] {
        for i in 0..JOINT_COUNT {
            cols.push(format!("{n}_{i}"));
        }
    }
    for n in ["ground", "bel_ground"] {
        for i in 0..LEG_COUNT {
            cols.push(format!("{n}_{i}"));
        }
    }
    for n in ["comp_dz", "comp_alpha", "comp_beta", "comp_iters", "comp_converged", "events"] {
        cols.push(n.into());
    }
    cols.join(",")
}

fn write_row(out: &mut String, log: &TickLog) {
    use std::fmt::Write as _;
    let _ = write!(out, "{},{:.6}", log.tick, log.time);
    for v in log.believed_dof.iter().chain(log.actual_dof.iter()) {
        let _ = write!(out, ",{v:.6}");
    }
    for v in log
        .commanded
        .iter()
        .chain(log.measured.iter())
        .chain(log.model_torque.iter())
        .chain(log.plant_torque.iter())
    {
        let _ = write!(out, ",{v:.6}");
    }
    for b in log.grounded.iter().chain(log.believed_grounded.iter()) {
        let _ = write!(out, ",{}", u8::from(*b));
    }
    let _ = write!(
        out,
        ",{:.6},{:.9},{:.9},{},{},{}",
        log.comp_dz,
        log.comp_alpha,
        log.comp_beta,
        log.comp_iters,
        u8::from(log.comp_converged),
        log.events.join(";")
    );
    out.push('\n');
}

/// Writes the per-run CSV (`run.csv`) into `out_dir`.
pub fn write_log(logs: &[TickLog], out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let path = out_dir.join("run.csv");
    let mut text = csv_header();
    text.push('\n');
    for log in logs {
        write_row(&mut text, log);
    }
    let mut f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}

const JOINT_NAMES: [&str; 3] = ["coxa", "femur", "tibia"];

/// Emits per-actuator angle/torque trace files
/// (`trace_leg<L>_<joint>.csv`), one row per tick, ready for plotting.
pub fn emit_plot_data(logs: &[TickLog], out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    for leg in 0..LEG_COUNT {
        for (j, name) in JOINT_NAMES.iter().enumerate() {
            let idx = leg * 3 + j;
            let path = out_dir.join(format!("trace_leg{leg}_{name}.csv"));
            let mut text = String::from("tick,time,cmd_angle,meas_angle,model_tau,plant_tau\n");
            for log in logs {
                use std::fmt::Write as _;
                let _ = writeln!(
                    text,
                    "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    log.tick,
                    log.time,
                    log.commanded[idx],
                    log.measured[idx],
                    log.model_torque[idx],
                    log.plant_torque[idx]
                );
            }
            let mut f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            f.write_all(text.as_bytes())
                .map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_log(tick: u64) -> TickLog {
        TickLog {
            tick,
            time: tick as f64 / 30.0,
            believed_dof: [0.0; 6],
            actual_dof: [0.0; 6],
            commanded: [0.1; JOINT_COUNT],
            measured: [0.1; JOINT_COUNT],
            model_torque: [5.0; JOINT_COUNT],
            plant_torque: [5.0; JOINT_COUNT],
            grounded: [true; LEG_COUNT],
            believed_grounded: [true; LEG_COUNT],
            comp_dz: 0.0,
            comp_alpha: 0.0,
            comp_beta: 0.0,
            comp_iters: 1,
            comp_converged: true,
            events: vec![],
        }
    }

    #[test]
    fn empty_log_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        write_log(&[], dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("tick,time,bel_x"));
    }

    #[test]
    fn rows_match_schema_width() {
        let dir = tempfile::tempdir().unwrap();
        write_log(&[dummy_log(0), dummy_log(1)], dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let header_cols = lines[0].split(',').count();
        for row in &lines[1..] {
            assert_eq!(row.split(',').count(), header_cols);
        }
    }

    #[test]
    fn traces_cover_all_actuators() {
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(&[dummy_log(0)], dir.path()).unwrap();
        let count = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .starts_with("trace_")
            })
            .count();
        assert_eq!(count, JOINT_COUNT);
    }
}
