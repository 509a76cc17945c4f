//! Benchmark suites: paired controller comparisons for hover robustness,
//! battery decay and disturbance rejection, the grasping grid, and the
//! visual-servoing table, each judged against fixed thresholds.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::control::ControllerKind;
use crate::dynamics::BatteryConfig;
use crate::error::{Result, SimError};
use crate::harness::config::{ExperimentKind, ScenarioConfig};
use crate::harness::metrics::MetricsReport;
use crate::harness::sim::{run_scenario, RunArtifacts};
use crate::world::DisturbanceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteName {
    Fig6aMass,
    Fig6aBattery,
    Fig6bDisturb,
    GraspTables,
    ServoTable,
}

impl SuiteName {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fig6a_mass" => SuiteName::Fig6aMass,
            "fig6a_battery" => SuiteName::Fig6aBattery,
            "fig6b_disturb" => SuiteName::Fig6bDisturb,
            "grasp_tables" => SuiteName::GraspTables,
            "servo_table" => SuiteName::ServoTable,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SuiteName::Fig6aMass => "fig6a_mass",
            SuiteName::Fig6aBattery => "fig6a_battery",
            SuiteName::Fig6bDisturb => "fig6b_disturb",
            SuiteName::GraspTables => "grasp_tables",
            SuiteName::ServoTable => "servo_table",
        }
    }

    pub fn all() -> &'static [SuiteName] {
        &[
            SuiteName::Fig6aMass,
            SuiteName::Fig6aBattery,
            SuiteName::Fig6bDisturb,
            SuiteName::GraspTables,
            SuiteName::ServoTable,
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub verdicts: Vec<Verdict>,
    pub runs: Vec<MetricsReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Hover-bench scenario with a controller kind, true and assumed mass, and
/// an optional battery decay schedule.
pub fn hover_scenario(
    kind: ControllerKind,
    seed: u64,
    true_mass: f64,
    assumed_mass: f64,
    battery: Option<BatteryConfig>,
    duration: f64,
) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        experiment: ExperimentKind::HoverBench,
        seed,
        duration,
        ..ScenarioConfig::default()
    };
    cfg.vehicle.mass = true_mass;
    cfg.vehicle.battery = battery;
    cfg.control.kind = kind;
    cfg.control.assumed_mass = Some(assumed_mass);
    cfg
}

/// Disturbance-rejection scenario: a lateral force pulse during hover.
pub fn disturb_scenario(kind: ControllerKind, seed: u64, force_n: f64, mass: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        experiment: ExperimentKind::DisturbBench,
        seed,
        duration: 25.0,
        ..ScenarioConfig::default()
    };
    cfg.vehicle.mass = mass;
    cfg.control.kind = kind;
    cfg.control.assumed_mass = Some(mass);
    cfg.scene.disturbances.push(DisturbanceEvent {
        start_time: 15.0,
        duration: 1.0,
        force: [force_n, 0.0, 0.0],
    });
    cfg
}

/// Grasp-mission scenario over `n` randomly placed fruits.
pub fn mission_scenario(n_fruits: usize, seed: u64, noiseless: bool) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { seed, duration: 120.0, ..ScenarioConfig::default() };
    cfg.scene.random_fruits = n_fruits;
    cfg.sensors.noiseless = noiseless;
    cfg
}

/// Servo-bench scenario with a target-speed scale factor.
pub fn servo_scenario(seed: u64, speed_scale: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        experiment: ExperimentKind::ServoBench,
        seed,
        duration: 60.0,
        ..ScenarioConfig::default()
    };
    cfg.servo.speed_scale = speed_scale;
    cfg
}

fn hover_rmse_of(artifacts: &RunArtifacts) -> Result<f64> {
    artifacts
        .report
        .hover_rmse
        .ok_or_else(|| SimError::Config("bench run produced no hover window".into()))
}

/// Runs TMAF and DA on the same hover scenario and returns their RMSEs.
pub fn paired_hover_rmse(
    seed: u64,
    true_mass: f64,
    assumed_mass: f64,
    battery: Option<BatteryConfig>,
    duration: f64,
) -> Result<(f64, f64)> {
    let tmaf = run_scenario(&hover_scenario(
        ControllerKind::Tmaf,
        seed,
        true_mass,
        assumed_mass,
        battery.clone(),
        duration,
    ))?;
    let da = run_scenario(&hover_scenario(
        ControllerKind::Da,
        seed,
        true_mass,
        assumed_mass,
        battery,
        duration,
    ))?;
    Ok((hover_rmse_of(&tmaf)?, hover_rmse_of(&da)?))
}

/// Runs TMAF and DA through the disturbance pulse and returns peak offsets.
pub fn paired_disturb_peak(seed: u64, force_n: f64, mass: f64) -> Result<(f64, f64)> {
    let tmaf = run_scenario(&disturb_scenario(ControllerKind::Tmaf, seed, force_n, mass))?;
    let da = run_scenario(&disturb_scenario(ControllerKind::Da, seed, force_n, mass))?;
    let peak = |a: &RunArtifacts| {
        a.report
            .peak_offset
            .ok_or_else(|| SimError::Config("bench run produced no hover window".into()))
    };
    Ok((peak(&tmaf)?, peak(&da)?))
}

fn err_series_csv(artifacts: &RunArtifacts) -> String {
    let mut out = String::from("t,err\n");
    for r in &artifacts.records {
        let e = [r.p[0] - r.sp[0], r.p[1] - r.sp[1], r.p[2] - r.sp[2]];
        let err = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
        out.push_str(&format!("{},{}\n", r.t, err));
    }
    out
}

fn write_artifacts(out: Option<&Path>, name: &str, artifacts: &RunArtifacts) -> Result<()> {
    if let Some(dir) = out {
        let run_dir = dir.join(name);
        artifacts.write_outputs(&run_dir)?;
        std::fs::write(run_dir.join("error_series.csv"), err_series_csv(artifacts))?;
    }
    Ok(())
}

fn suite_fig6a_mass(seeds: u64, out: Option<&Path>) -> Result<SuiteReport> {
    let assumed = 3.4;
    let true_mass = assumed * 1.2;
    let pairs: Vec<(u64, Result<(RunArtifacts, RunArtifacts)>)> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let tmaf = run_scenario(&hover_scenario(ControllerKind::Tmaf, seed, true_mass, assumed, None, 40.0));
            let da = run_scenario(&hover_scenario(ControllerKind::Da, seed, true_mass, assumed, None, 40.0));
            (seed, tmaf.and_then(|t| da.map(|d| (t, d))))
        })
        .collect();

    let mut verdicts = Vec::new();
    let mut runs = Vec::new();
    for (seed, pair) in pairs {
        let (tmaf, da) = pair?;
        let (rt, rd) = (hover_rmse_of(&tmaf)?, hover_rmse_of(&da)?);
        verdicts.push(Verdict {
            check: format!("seed {seed}: da >= 3x tmaf and tmaf <= 0.05"),
            pass: rd >= 3.0 * rt && rt <= 0.05,
            detail: format!("tmaf {rt:.4} m, da {rd:.4} m"),
        });
        write_artifacts(out, &format!("seed{seed}_tmaf"), &tmaf)?;
        write_artifacts(out, &format!("seed{seed}_da"), &da)?;
        runs.push(tmaf.report);
        runs.push(da.report);
    }
    Ok(SuiteReport { suite: "fig6a_mass".into(), verdicts, runs })
}

fn suite_fig6a_battery(out: Option<&Path>) -> Result<SuiteReport> {
    let battery = Some(BatteryConfig { floor: 0.5, horizon: 60.0 });
    let tmaf = run_scenario(&hover_scenario(ControllerKind::Tmaf, 0, 3.4, 3.4, battery.clone(), 70.0))?;
    let da = run_scenario(&hover_scenario(ControllerKind::Da, 0, 3.4, 3.4, battery, 70.0))?;
    let (rt, rd) = (hover_rmse_of(&tmaf)?, hover_rmse_of(&da)?);
    let verdicts = vec![
        Verdict {
            check: "tmaf rmse <= 0.05 under 50% battery decay".into(),
            pass: rt <= 0.05,
            detail: format!("tmaf {rt:.4} m"),
        },
        Verdict {
            check: "da rmse >= 0.10 under 50% battery decay".into(),
            pass: rd >= 0.10,
            detail: format!("da {rd:.4} m"),
        },
    ];
    write_artifacts(out, "battery_tmaf", &tmaf)?;
    write_artifacts(out, "battery_da", &da)?;
    Ok(SuiteReport { suite: "fig6a_battery".into(), verdicts, runs: vec![tmaf.report, da.report] })
}

fn suite_fig6b_disturb(out: Option<&Path>) -> Result<SuiteReport> {
    let tmaf = run_scenario(&disturb_scenario(ControllerKind::Tmaf, 0, 15.0, 3.4))?;
    let da = run_scenario(&disturb_scenario(ControllerKind::Da, 0, 15.0, 3.4))?;
    let pt = tmaf.report.peak_offset.ok_or_else(|| SimError::Config("no peak".into()))?;
    let pd = da.report.peak_offset.ok_or_else(|| SimError::Config("no peak".into()))?;
    let verdicts = vec![Verdict {
        check: "15 N pulse: tmaf peak < da peak, ratio >= 2".into(),
        pass: pt < pd && pd / pt >= 2.0,
        detail: format!("tmaf {pt:.4} m, da {pd:.4} m, ratio {:.2}", pd / pt),
    }];
    write_artifacts(out, "disturb_tmaf", &tmaf)?;
    write_artifacts(out, "disturb_da", &da)?;
    Ok(SuiteReport { suite: "fig6b_disturb".into(), verdicts, runs: vec![tmaf.report, da.report] })
}

/// The grasping grid: noiseless runs must be perfect; nominal-noise runs
/// must keep the overall success rate and per-delivery time in band.
fn suite_grasp_tables(seeds: u64, out: Option<&Path>) -> Result<SuiteReport> {
    let counts = [2usize, 3, 6, 8];
    let mut verdicts = Vec::new();
    let mut runs = Vec::new();

    let noiseless: Vec<(usize, Result<RunArtifacts>)> = counts
        .par_iter()
        .map(|&n| (n, run_scenario(&mission_scenario(n, 1000 + n as u64, true))))
        .collect();
    for (n, artifacts) in noiseless {
        let artifacts = artifacts?;
        let sr = artifacts.report.grasp_success_rate;
        let er = artifacts.report.error_rate;
        verdicts.push(Verdict {
            check: format!("noiseless {n} fruits: success 100%, error 0"),
            pass: sr == Some(1.0) && er == Some(0.0),
            detail: format!("success {sr:?}, error {er:?}"),
        });
        write_artifacts(out, &format!("noiseless_{n}"), &artifacts)?;
        runs.push(artifacts.report);
    }

    let grid: Vec<((usize, u64), Result<RunArtifacts>)> = counts
        .iter()
        .flat_map(|&n| (0..seeds).map(move |s| (n, s)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(n, s)| ((n, s), run_scenario(&mission_scenario(n, s, false))))
        .collect();

    let mut attempts = 0u64;
    let mut successes = 0u64;
    let mut times = Vec::new();
    for ((n, s), artifacts) in grid {
        let artifacts = artifacts?;
        let report = &artifacts.report;
        let a = report.attempts as u64;
        attempts += a;
        if let Some(sr) = report.grasp_success_rate {
            successes += (sr * a as f64).round() as u64;
        }
        if let Some(t) = report.avg_time_per_instance {
            times.push(t);
        }
        if out.is_some() {
            write_artifacts(out, &format!("nominal_{n}f_seed{s}"), &artifacts)?;
        }
        runs.push(artifacts.report);
    }
    let overall = if attempts > 0 { successes as f64 / attempts as f64 } else { 0.0 };
    let avg_time = if times.is_empty() { f64::NAN } else { times.iter().sum::<f64>() / times.len() as f64 };
    verdicts.push(Verdict {
        check: "nominal grid: overall success >= 0.66".into(),
        pass: overall >= 0.66,
        detail: format!("{successes}/{attempts} = {overall:.3}"),
    });
    verdicts.push(Verdict {
        check: "nominal grid: avg time per delivered instance in [3, 15] s".into(),
        pass: (3.0..=15.0).contains(&avg_time),
        detail: format!("{avg_time:.2} s"),
    });

    // five fruits, varied layouts from documented seeds; per-layout times
    let layouts: Vec<(u64, Result<RunArtifacts>)> = (0..4u64)
        .into_par_iter()
        .map(|i| (i, run_scenario(&mission_scenario(5, 2000 + i, false))))
        .collect();
    for (i, artifacts) in layouts {
        let artifacts = artifacts?;
        let t = artifacts.report.avg_time_per_instance;
        verdicts.push(Verdict {
            check: format!("5-fruit layout {i}: avg time in [3, 15] s"),
            pass: t.map(|t| (3.0..=15.0).contains(&t)).unwrap_or(false),
            detail: format!("{t:?} s"),
        });
        write_artifacts(out, &format!("layout5_{i}"), &artifacts)?;
        runs.push(artifacts.report);
    }
    Ok(SuiteReport { suite: "grasp_tables".into(), verdicts, runs })
}

fn suite_servo_table(out: Option<&Path>) -> Result<SuiteReport> {
    let base = run_scenario(&servo_scenario(0, 1.0))?;
    let fast = run_scenario(&servo_scenario(0, 2.0))?;
    let dev = base
        .report
        .servo_deviation
        .clone()
        .ok_or_else(|| SimError::Config("servo bench produced no deviation window".into()))?;
    let dev_fast = fast
        .report
        .servo_deviation
        .clone()
        .ok_or_else(|| SimError::Config("servo bench produced no deviation window".into()))?;

    let mut verdicts = vec![
        Verdict {
            check: "per-axis deviation means <= 0.05 m".into(),
            pass: dev.mean_abs.iter().all(|&m| m <= 0.05),
            detail: format!(
                "x {:.4}, y {:.4}, z {:.4} m",
                dev.mean_abs[0], dev.mean_abs[1], dev.mean_abs[2]
            ),
        },
        Verdict {
            check: "yaw deviation <= 5 deg".into(),
            pass: dev.yaw_mean_abs_deg <= 5.0,
            detail: format!("{:.2} deg", dev.yaw_mean_abs_deg),
        },
    ];
    let norm = |d: &[f64; 3]| d.iter().map(|x| x * x).sum::<f64>().sqrt();
    verdicts.push(Verdict {
        check: "doubling target speed does not reduce deviations".into(),
        pass: norm(&dev_fast.mean_abs) >= 0.95 * norm(&dev.mean_abs),
        detail: format!("1x {:.4}, 2x {:.4}", norm(&dev.mean_abs), norm(&dev_fast.mean_abs)),
    });
    write_artifacts(out, "servo_1x", &base)?;
    write_artifacts(out, "servo_2x", &fast)?;
    Ok(SuiteReport { suite: "servo_table".into(), verdicts, runs: vec![base.report, fast.report] })
}

/// Runs one suite. `seeds` controls Monte-Carlo width where a suite sweeps
/// seeds; the comparative suites run paired scenarios on seed 0.
pub fn bench_suite(name: SuiteName, seeds: u64, out: Option<&Path>) -> Result<SuiteReport> {
    let report = match name {
        SuiteName::Fig6aMass => suite_fig6a_mass(seeds, out)?,
        SuiteName::Fig6aBattery => suite_fig6a_battery(out)?,
        SuiteName::Fig6bDisturb => suite_fig6b_disturb(out)?,
        SuiteName::GraspTables => suite_grasp_tables(seeds, out)?,
        SuiteName::ServoTable => suite_servo_table(out)?,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(format!("{}_report.json", report.suite)),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(report)
}
