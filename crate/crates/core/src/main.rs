//! Command-line entry point: run scenarios, execute benchmark suites,
//! validate scenario files and replay metrics from telemetry.
//!
//! Exit codes: 0 success / all verdicts pass, 1 acceptance failure,
//! 2 config or usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use harvest_sim::harness::bench::{bench_suite, SuiteName};
use harvest_sim::harness::sim::{replay_metrics, run_scenario};
use harvest_sim::harness::ScenarioConfig;
use harvest_sim::SimError;

#[derive(Parser)]
#[command(name = "harvest-sim", about = "Deterministic aerial fruit-grasping simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write telemetry, events and metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to $HARVEST_SIM_OUT or ./out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark suite and print one verdict line per check.
    Bench {
        /// fig6a_mass | fig6a_battery | fig6b_disturb | grasp_tables |
        /// servo_table | all
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seeds for the Monte-Carlo suites.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Recompute the metrics JSON from a telemetry file (events.csv and
    /// run_meta.json are read from the same directory).
    ReplayMetrics {
        #[arg(long)]
        telemetry: PathBuf,
    },
}

fn out_dir(cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| std::env::var_os("HARVEST_SIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn real_main() -> Result<ExitCode, SimError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let mut config = ScenarioConfig::from_file(&scenario)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let artifacts = run_scenario(&config)?;
            let dir = out_dir(out);
            artifacts.write_outputs(&dir)?;
            println!(
                "run complete: {} ticks, final phase {}, outputs in {}",
                artifacts.records.len(),
                artifacts.final_phase.name(),
                dir.display()
            );
            println!("{}", serde_json::to_string_pretty(&artifacts.report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { suite, out, seeds } => {
            let suites: Vec<SuiteName> = if suite == "all" {
                SuiteName::all().to_vec()
            } else {
                vec![SuiteName::parse(&suite)
                    .ok_or_else(|| SimError::Config(format!("unknown suite '{suite}'")))?]
            };
            let dir = out.map(|d| out_dir(Some(d)));
            let mut all_pass = true;
            for s in suites {
                let report = bench_suite(s, seeds, dir.as_deref())?;
                for v in &report.verdicts {
                    println!(
                        "[{}] {} {}: {}",
                        report.suite,
                        if v.pass { "PASS" } else { "FAIL" },
                        v.check,
                        v.detail
                    );
                }
                all_pass &= report.passed();
            }
            Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Validate { scenario } => {
            ScenarioConfig::from_file(&scenario)?;
            println!("ok: {}", scenario.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ReplayMetrics { telemetry } => {
            let report = replay_metrics(&telemetry)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e @ SimError::Config(_)) | Err(e @ SimError::Scene(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
