//! Telemetry and event records with bit-stable CSV encoding.
//!
//! Floats are written in Rust's shortest round-trip representation, so a
//! parsed file reproduces the in-memory values exactly and metrics
//! recomputed from disk match the in-process report byte for byte.

use std::io::{BufRead, Write};

use crate::autonomy::{GraspEvent, GraspOutcome, Phase};
use crate::error::{Result, SimError};

pub const TELEMETRY_HEADER: &str = "t,px,py,pz,roll,pitch,yaw,ex,ey,ez,eroll,epitch,eyaw,spx,spy,spz,phase,thrust,cmd_roll,cmd_pitch,cmd_yaw,thrust_eff,target_id,tracker_lost";

pub const EVENTS_HEADER: &str = "instance_id,fruit_id,t_selected,t_grasped,t_delivered,outcome";

/// One 100 Hz telemetry row.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    /// Truth pose.
    pub p: [f64; 3],
    pub rpy: [f64; 3],
    /// Estimated pose.
    pub p_est: [f64; 3],
    pub rpy_est: [f64; 3],
    /// Position setpoint (per-axis; velocity-mode axes carry the held value).
    pub sp: [f64; 3],
    pub phase: Phase,
    /// Command sent to the attitude loop.
    pub thrust: f64,
    pub cmd_rpy: [f64; 3],
    pub thrust_eff: f64,
    /// Selected map instance, -1 when none.
    pub target_id: i64,
    pub tracker_lost: bool,
}

impl TelemetryRecord {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.p[0],
            self.p[1],
            self.p[2],
            self.rpy[0],
            self.rpy[1],
            self.rpy[2],
            self.p_est[0],
            self.p_est[1],
            self.p_est[2],
            self.rpy_est[0],
            self.rpy_est[1],
            self.rpy_est[2],
            self.sp[0],
            self.sp[1],
            self.sp[2],
            self.phase.name(),
            self.thrust,
            self.cmd_rpy[0],
            self.cmd_rpy[1],
            self.cmd_rpy[2],
            self.thrust_eff,
            self.target_id,
            self.tracker_lost as u8,
        )
    }
}

pub fn write_telemetry_csv<W: Write>(mut w: W, records: &[TelemetryRecord]) -> Result<()> {
    writeln!(w, "{TELEMETRY_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| SimError::TelemetryParse { line, msg: format!("bad float '{field}'") })
}

pub fn read_telemetry_csv<R: BufRead>(r: R) -> Result<Vec<TelemetryRecord>> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == TELEMETRY_HEADER => {}
        Some((_, Ok(h))) => {
            return Err(SimError::TelemetryParse { line: 1, msg: format!("unexpected header '{h}'") })
        }
        _ => return Err(SimError::TelemetryParse { line: 1, msg: "empty file".into() }),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 24 {
            return Err(SimError::TelemetryParse { line: n, msg: format!("{} fields, expected 24", f.len()) });
        }
        let phase = Phase::from_name(f[16])
            .ok_or_else(|| SimError::TelemetryParse { line: n, msg: format!("bad phase '{}'", f[16]) })?;
        out.push(TelemetryRecord {
            t: parse_f64(f[0], n)?,
            p: [parse_f64(f[1], n)?, parse_f64(f[2], n)?, parse_f64(f[3], n)?],
            rpy: [parse_f64(f[4], n)?, parse_f64(f[5], n)?, parse_f64(f[6], n)?],
            p_est: [parse_f64(f[7], n)?, parse_f64(f[8], n)?, parse_f64(f[9], n)?],
            rpy_est: [parse_f64(f[10], n)?, parse_f64(f[11], n)?, parse_f64(f[12], n)?],
            sp: [parse_f64(f[13], n)?, parse_f64(f[14], n)?, parse_f64(f[15], n)?],
            phase,
            thrust: parse_f64(f[17], n)?,
            cmd_rpy: [parse_f64(f[18], n)?, parse_f64(f[19], n)?, parse_f64(f[20], n)?],
            thrust_eff: parse_f64(f[21], n)?,
            target_id: f[22]
                .parse::<i64>()
                .map_err(|_| SimError::TelemetryParse { line: n, msg: "bad target id".into() })?,
            tracker_lost: f[23] == "1",
        });
    }
    Ok(out)
}

fn opt_f64_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_events_csv<W: Write>(mut w: W, events: &[GraspEvent]) -> Result<()> {
    writeln!(w, "{EVENTS_HEADER}")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.instance_id,
            e.fruit_id.map(|x| x.to_string()).unwrap_or_default(),
            e.t_selected,
            opt_f64_field(e.t_grasped),
            opt_f64_field(e.t_delivered),
            e.outcome.map(|o| o.name()).unwrap_or(""),
        )?;
    }
    Ok(())
}

pub fn read_events_csv<R: BufRead>(r: R) -> Result<Vec<GraspEvent>> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == EVENTS_HEADER => {}
        _ => return Err(SimError::TelemetryParse { line: 1, msg: "bad events header".into() }),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(SimError::TelemetryParse { line: n, msg: format!("{} fields, expected 6", f.len()) });
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { parse_f64(s, n).map(Some) }
        };
        out.push(GraspEvent {
            instance_id: f[0]
                .parse()
                .map_err(|_| SimError::TelemetryParse { line: n, msg: "bad instance id".into() })?,
            fruit_id: if f[1].is_empty() {
                None
            } else {
                Some(f[1].parse().map_err(|_| SimError::TelemetryParse {
                    line: n,
                    msg: "bad fruit id".into(),
                })?)
            },
            t_selected: parse_f64(f[2], n)?,
            t_grasped: opt(f[3])?,
            t_delivered: opt(f[4])?,
            outcome: if f[5].is_empty() {
                None
            } else {
                Some(GraspOutcome::from_name(f[5]).ok_or_else(|| SimError::TelemetryParse {
                    line: n,
                    msg: format!("bad outcome '{}'", f[5]),
                })?)
            },
        });
    }
    Ok(out)
}
