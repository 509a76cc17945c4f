//! The measurement suite: grasp success rate, average time per instance,
//! error rate, hover RMSE, disturbance peak offset and visual-servoing
//! deviations.
//!
//! Every metric is computed from the decimated telemetry records, the event
//! log and the small run-meta sidecar, and from nothing else. The replay
//! path parses those files and calls the same function, so an independent
//! reader reproduces the in-process report exactly.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::autonomy::{GraspEvent, GraspOutcome, Phase};
use crate::harness::config::{ExperimentKind, ServoScript};
use crate::harness::telemetry::TelemetryRecord;

/// Sidecar written next to the telemetry: everything replay needs that is
/// not a per-tick signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub measure_start: f64,
    pub arm_offset: [f64; 3],
    /// Present for servo benches: the target script and its start time.
    pub servo: Option<ServoMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoMeta {
    pub script: ServoScript,
    pub script_start: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoDeviation {
    /// Mean absolute deviation from the commanded standoff configuration,
    /// per world axis, meters.
    pub mean_abs: [f64; 3],
    pub std: [f64; 3],
    pub yaw_mean_abs_deg: f64,
    pub yaw_std_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSummary {
    pub instance_id: u32,
    pub fruit_id: Option<u32>,
    pub t_selected: f64,
    pub t_grasped: Option<f64>,
    pub t_delivered: Option<f64>,
    pub outcome: Option<String>,
}

/// The quantitative outputs of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub grasp_success_rate: Option<f64>,
    pub avg_time_per_instance: Option<f64>,
    pub error_rate: Option<f64>,
    pub hover_rmse: Option<f64>,
    pub peak_offset: Option<f64>,
    pub servo_deviation: Option<ServoDeviation>,
    pub attempts: u32,
    pub events: Vec<EventSummary>,
}

/// (full + partial) / attempts; an attempt is an event whose grasp trial ran
/// (it has an outcome). None with zero attempts.
pub fn compute_success_rate(events: &[GraspEvent]) -> Option<f64> {
    let attempts = events.iter().filter(|e| e.outcome.is_some()).count();
    if attempts == 0 {
        return None;
    }
    let success = events
        .iter()
        .filter(|e| {
            matches!(
                e.outcome,
                Some(GraspOutcome::FullGrasp) | Some(GraspOutcome::PartialGrasp)
            )
        })
        .count();
    Some(success as f64 / attempts as f64)
}

/// Mean of (t_delivered - t_selected) over delivered events; None when
/// nothing was delivered.
pub fn compute_avg_time(events: &[GraspEvent]) -> Option<f64> {
    let times: Vec<f64> = events
        .iter()
        .filter_map(|e| e.t_delivered.map(|td| td - e.t_selected))
        .collect();
    if times.is_empty() {
        return None;
    }
    Some(times.iter().sum::<f64>() / times.len() as f64)
}

/// Drops in transit over grasped items; None when nothing was grasped.
pub fn compute_error_rate(events: &[GraspEvent]) -> Option<f64> {
    let grasped = events
        .iter()
        .filter(|e| {
            matches!(
                e.outcome,
                Some(GraspOutcome::FullGrasp)
                    | Some(GraspOutcome::PartialGrasp)
                    | Some(GraspOutcome::DroppedInTransit)
            )
        })
        .count();
    if grasped == 0 {
        return None;
    }
    let dropped = events
        .iter()
        .filter(|e| matches!(e.outcome, Some(GraspOutcome::DroppedInTransit)))
        .count();
    Some(dropped as f64 / grasped as f64)
}

/// RMS of the truth-to-setpoint distance over Hover records in the window.
pub fn compute_hover_rmse(records: &[TelemetryRecord], window_start: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        if r.phase == Phase::Hover && r.t >= window_start {
            let e = [r.p[0] - r.sp[0], r.p[1] - r.sp[1], r.p[2] - r.sp[2]];
            sum += e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    Some((sum / n as f64).sqrt())
}

/// Largest truth-to-setpoint distance over Hover records in the window.
pub fn compute_peak_offset(records: &[TelemetryRecord], window_start: f64) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.phase == Phase::Hover && r.t >= window_start)
        .map(|r| {
            let e = [r.p[0] - r.sp[0], r.p[1] - r.sp[1], r.p[2] - r.sp[2]];
            (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
        })
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a;
    while x > std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    while x < -std::f64::consts::PI {
        x += 2.0 * std::f64::consts::PI;
    }
    x
}

/// Deviation from the commanded standoff configuration over ReachTarget
/// records: the true wrist against the point `standoff` before the scripted
/// target, per world axis, plus the yaw error against the line of sight.
pub fn compute_servo_deviation(
    records: &[TelemetryRecord],
    meta: &ServoMeta,
    arm_offset: [f64; 3],
    window_start: f64,
) -> Option<ServoDeviation> {
    let mut devs: Vec<[f64; 3]> = Vec::new();
    let mut yaw_errs: Vec<f64> = Vec::new();

    for r in records {
        if r.phase != Phase::ReachTarget || r.t < window_start {
            continue;
        }
        let target = Vector3::from(meta.script.target_at(r.t, meta.script_start));
        let rot = Rotation3::from_euler_angles(r.rpy[0], r.rpy[1], r.rpy[2]);
        let p = Vector3::from(r.p);
        let wrist = p + rot * Vector3::from(arm_offset);
        let mut los = target - wrist;
        los.z = 0.0;
        let los = if los.norm() < 1e-9 { Vector3::x() } else { los.normalize() };
        let desired = target - meta.script.standoff * los;
        let dev = wrist - desired;
        devs.push([dev.x, dev.y, dev.z]);

        let yaw_des = (target.y - p.y).atan2(target.x - p.x);
        yaw_errs.push(wrap_angle(r.rpy[2] - yaw_des));
    }
    if devs.is_empty() {
        return None;
    }

    let n = devs.len() as f64;
    let mut mean_abs = [0.0; 3];
    let mut mean = [0.0; 3];
    for d in &devs {
        for i in 0..3 {
            mean_abs[i] += d[i].abs();
            mean[i] += d[i];
        }
    }
    for i in 0..3 {
        mean_abs[i] /= n;
        mean[i] /= n;
    }
    let mut var = [0.0; 3];
    for d in &devs {
        for i in 0..3 {
            var[i] += (d[i] - mean[i]).powi(2);
        }
    }
    let std = [(var[0] / n).sqrt(), (var[1] / n).sqrt(), (var[2] / n).sqrt()];

    let ny = yaw_errs.len() as f64;
    let yaw_mean_abs = yaw_errs.iter().map(|x| x.abs()).sum::<f64>() / ny;
    let yaw_mean = yaw_errs.iter().sum::<f64>() / ny;
    let yaw_std = (yaw_errs.iter().map(|x| (x - yaw_mean).powi(2)).sum::<f64>() / ny).sqrt();

    Some(ServoDeviation {
        mean_abs,
        std,
        yaw_mean_abs_deg: yaw_mean_abs.to_degrees(),
        yaw_std_deg: yaw_std.to_degrees(),
    })
}

/// Builds the full report from the persisted signals. Used identically by
/// the live run and the replay path.
pub fn compute_report(
    records: &[TelemetryRecord],
    events: &[GraspEvent],
    meta: &RunMeta,
) -> MetricsReport {
    let (hover_rmse, peak_offset) = match meta.experiment {
        ExperimentKind::HoverBench | ExperimentKind::DisturbBench => (
            compute_hover_rmse(records, meta.measure_start),
            compute_peak_offset(records, meta.measure_start),
        ),
        _ => (None, None),
    };
    let servo_deviation = meta
        .servo
        .as_ref()
        .and_then(|s| compute_servo_deviation(records, s, meta.arm_offset, meta.measure_start));

    MetricsReport {
        schema_version: meta.schema_version,
        experiment: meta.experiment.name().to_string(),
        seed: meta.seed,
        grasp_success_rate: compute_success_rate(events),
        avg_time_per_instance: compute_avg_time(events),
        error_rate: compute_error_rate(events),
        hover_rmse,
        peak_offset,
        servo_deviation,
        attempts: events.iter().filter(|e| e.outcome.is_some()).count() as u32,
        events: events
            .iter()
            .map(|e| EventSummary {
                instance_id: e.instance_id,
                fruit_id: e.fruit_id,
                t_selected: e.t_selected,
                t_grasped: e.t_grasped,
                t_delivered: e.t_delivered,
                outcome: e.outcome.map(|o| o.name().to_string()),
            })
            .collect(),
    }
}
