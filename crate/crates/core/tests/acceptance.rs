//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `--nocapture` to see them).

use nalgebra::{Matrix3, Vector3};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use harvest_sim::autonomy::{validate_phase_sequence, Phase};
use harvest_sim::control::{
    control_step, tmaf_thrust, AxisModes, ControlConfig, ControllerStates, Setpoint,
    ThrustControllerState,
};
use harvest_sim::dynamics::{
    step_dynamics, BatteryConfig, ControlCommand, PayloadAttachment, RigidBodyState,
    VehicleConfig, PHYSICS_DT,
};
use harvest_sim::estimation::{ekf_predict, ekf_update_pose, EkfConfig, EkfState};
use harvest_sim::harness::bench::{
    bench_suite, mission_scenario, paired_disturb_peak, paired_hover_rmse, servo_scenario,
    SuiteName,
};
use harvest_sim::harness::config::ExperimentKind;
use harvest_sim::harness::sim::run_scenario;
use harvest_sim::harness::ScenarioConfig;
use harvest_sim::perception::InstanceMap;
use harvest_sim::rng::{stream_rng, Stream};
use harvest_sim::sensors::{ImuSample, SlamPoseSample};

#[test]
fn criterion_01_physics_oracle() {
    let params = VehicleConfig::default().params().unwrap();

    // free fall vs closed form over one simulated second
    let mut state = RigidBodyState::at_rest(Vector3::zeros());
    let cmd = ControlCommand::zero();
    for _ in 0..1000 {
        state = step_dynamics(&state, &cmd, &params, None, &Vector3::zeros(), PHYSICS_DT).unwrap();
    }
    let z_exact = -0.5 * params.g;
    let fall_err = (state.p.z - z_exact).abs();
    assert!(fall_err < 1e-9, "free-fall error {fall_err}");

    // hover equilibrium over one simulated second
    let mut state = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 1.0));
    let hover = ControlCommand { thrust: params.mass * params.g, roll: 0.0, pitch: 0.0, yaw: 0.0 };
    for _ in 0..1000 {
        state = step_dynamics(&state, &hover, &params, None, &Vector3::zeros(), PHYSICS_DT).unwrap();
    }
    let hover_err = (state.p - Vector3::new(0.0, 0.0, 1.0)).norm();
    assert!(hover_err < 1e-9, "hover drift {hover_err}");

    // orthonormality drift over 1e5 tumbling steps
    let mut state = RigidBodyState::at_rest(Vector3::zeros());
    state.omega = Vector3::new(0.6, -0.4, 1.0);
    let spin = ControlCommand { thrust: 20.0, roll: 0.3, pitch: -0.2, yaw: 1.0 };
    for _ in 0..100_000 {
        state = step_dynamics(&state, &spin, &params, None, &Vector3::zeros(), PHYSICS_DT).unwrap();
    }
    let ortho = (state.rot.transpose() * state.rot - Matrix3::identity()).norm();
    assert!(ortho < 1e-6, "orthonormality drift {ortho}");

    println!("ACCEPTANCE 01 PASS physics oracle: fall {fall_err:.2e} m, hover {hover_err:.2e} m, ortho {ortho:.2e}");
}

#[test]
fn criterion_02_thrust_law_fixed_point() {
    let mut ctrl = ThrustControllerState::new(0.8, 0.02, 0.0);
    ctrl.prev_f_star = Vector3::new(1.25, -0.5, 31.7);
    ctrl.initialized = true;
    let a = Vector3::new(0.3, -0.2, 0.9);
    let first = tmaf_thrust(&a, &a, &mut ctrl, 100.0, 0.01).unwrap();
    for step in 0..1000 {
        let f = tmaf_thrust(&a, &a, &mut ctrl, 100.0, 0.01).unwrap();
        assert_eq!(f.x.to_bits(), first.x.to_bits(), "step {step}");
        assert_eq!(f.y.to_bits(), first.y.to_bits(), "step {step}");
        assert_eq!(f.z.to_bits(), first.z.to_bits(), "step {step}");
    }
    println!("ACCEPTANCE 02 PASS thrust fixed point: bit-identical over 1000 steps");
}

#[test]
fn criterion_03_mass_robustness_ten_seeds() {
    let assumed = 3.4;
    let true_mass = assumed * 1.2;
    let mut worst_ratio = f64::INFINITY;
    let mut worst_tmaf: f64 = 0.0;
    for seed in 0..10 {
        let (tmaf, da) = paired_hover_rmse(seed, true_mass, assumed, None, 40.0).unwrap();
        assert!(
            da >= 3.0 * tmaf && tmaf <= 0.05,
            "seed {seed}: tmaf {tmaf:.4}, da {da:.4}"
        );
        worst_ratio = worst_ratio.min(da / tmaf);
        worst_tmaf = worst_tmaf.max(tmaf);
    }
    println!("ACCEPTANCE 03 PASS mass robustness: worst ratio {worst_ratio:.1}, worst tmaf {worst_tmaf:.4} m over 10 seeds");
}

#[test]
fn criterion_04_battery_decay() {
    let battery = Some(BatteryConfig { floor: 0.5, horizon: 60.0 });
    let (tmaf, da) = paired_hover_rmse(0, 3.4, 3.4, battery, 70.0).unwrap();
    assert!(tmaf <= 0.05, "tmaf {tmaf:.4}");
    assert!(da >= 0.10, "da {da:.4}");
    println!("ACCEPTANCE 04 PASS battery decay: tmaf {tmaf:.4} m, da {da:.4} m");
}

#[test]
fn criterion_05_disturbance_rejection() {
    let (tmaf, da) = paired_disturb_peak(0, 15.0, 3.4).unwrap();
    assert!(tmaf < da && da / tmaf >= 2.0, "tmaf {tmaf:.4}, da {da:.4}");
    println!(
        "ACCEPTANCE 05 PASS disturbance: tmaf peak {tmaf:.4} m, da peak {da:.4} m, ratio {:.1}",
        da / tmaf
    );
}

#[test]
fn criterion_06_mass_gravity_agnosticism() {
    // one fixed (alpha, beta) pair must pass the mass, battery and
    // disturbance checks for any true mass in [2.5, 4.1] kg
    for &mass in &[2.5, 3.0, 3.4, 4.1] {
        let (tmaf, da) = paired_hover_rmse(0, mass * 1.2, mass, None, 40.0).unwrap();
        assert!(
            da >= 3.0 * tmaf && tmaf <= 0.05,
            "mass check at {mass}: tmaf {tmaf:.4}, da {da:.4}"
        );

        let battery = Some(BatteryConfig { floor: 0.5, horizon: 60.0 });
        let (tmaf_b, da_b) = paired_hover_rmse(0, mass, mass, battery, 70.0).unwrap();
        assert!(tmaf_b <= 0.05, "battery check at {mass}: tmaf {tmaf_b:.4}");
        assert!(da_b >= 0.10, "battery check at {mass}: da {da_b:.4}");

        let (tmaf_d, da_d) = paired_disturb_peak(0, 15.0, mass).unwrap();
        assert!(
            tmaf_d < da_d && da_d / tmaf_d >= 2.0,
            "disturbance check at {mass}: tmaf {tmaf_d:.4}, da {da_d:.4}"
        );
    }
    println!("ACCEPTANCE 06 PASS mass/gravity agnosticism over [2.5, 4.1] kg with fixed gains");
}

/// Closed-loop hover with perfect state feedback; the payload attaches
/// mid-run and the pitch transient plus position deviation are tracked.
#[test]
fn criterion_07_off_center_payload_transient() {
    let params = VehicleConfig::default().params().unwrap();
    let control = ControlConfig::default();
    let mut states = ControllerStates::new(&control);
    states.thrust.prev_f_star = Vector3::new(0.0, 0.0, params.mass * params.g);
    states.thrust.initialized = true;

    let hover_p = Vector3::new(0.0, 0.0, 1.0);
    let mut truth = RigidBodyState::at_rest(hover_p);
    let sp = Setpoint::hold(hover_p, 0.0);
    let mut cmd = ControlCommand { thrust: params.mass * params.g, roll: 0.0, pitch: 0.0, yaw: 0.0 };
    let mut payload: Option<PayloadAttachment> = None;

    let t_attach = 5.0;
    let mut max_pitch_after_2s: f64 = 0.0;
    let mut max_dev: f64 = 0.0;
    let mut max_pitch_transient: f64 = 0.0;

    for k in 1..=11_000u64 {
        let t = k as f64 * PHYSICS_DT;
        if t >= t_attach && payload.is_none() {
            payload = Some(PayloadAttachment { mass: 0.3, offset: Vector3::new(0.84, 0.0, -0.2) });
        }
        truth = step_dynamics(&truth, &cmd, &params, payload.as_ref(), &Vector3::zeros(), PHYSICS_DT)
            .unwrap();
        if k % 10 == 0 {
            let a_world = harvest_sim::dynamics::acceleration(
                &truth.rot,
                &truth.v,
                cmd.thrust,
                &params,
                payload.as_ref(),
                &Vector3::zeros(),
            );
            let est = harvest_sim::estimation::EstimateSnapshot {
                t,
                p: truth.p,
                v: truth.v,
                rot: truth.rot,
                yaw: truth.euler_angles().2,
                a_world,
            };
            cmd = control_step(
                &est,
                t,
                &sp,
                &AxisModes::ALL_POSITION,
                &control,
                params.mass,
                params.g,
                params.max_thrust,
                &mut states,
                0.01,
            )
            .unwrap();
        }
        if t > t_attach {
            let pitch = truth.euler_angles().1.abs();
            max_pitch_transient = max_pitch_transient.max(pitch);
            if t >= t_attach + 2.0 {
                max_pitch_after_2s = max_pitch_after_2s.max(pitch);
            }
            max_dev = max_dev.max((truth.p - hover_p).norm());
        }
    }

    let deg = max_pitch_after_2s.to_degrees();
    assert!(deg < 2.0, "pitch after 2 s: {deg:.2} deg");
    assert!(max_dev < 0.15, "deviation {max_dev:.3} m");
    println!(
        "ACCEPTANCE 07 PASS off-center payload: peak pitch {:.2} deg, settled {:.2} deg, deviation {:.3} m",
        max_pitch_transient.to_degrees(),
        deg,
        max_dev
    );
}

#[test]
fn criterion_08_servoing_deviation() {
    let artifacts = run_scenario(&servo_scenario(0, 1.0)).unwrap();
    let dev = artifacts.report.servo_deviation.expect("servo window");
    for (axis, m) in ["x", "y", "z"].iter().zip(dev.mean_abs) {
        assert!(m <= 0.05, "{axis} deviation {m:.4}");
    }
    assert!(dev.yaw_mean_abs_deg <= 5.0, "yaw {:.2}", dev.yaw_mean_abs_deg);
    println!(
        "ACCEPTANCE 08 PASS servoing: means ({:.3}, {:.3}, {:.3}) m, yaw {:.2} deg",
        dev.mean_abs[0], dev.mean_abs[1], dev.mean_abs[2], dev.yaw_mean_abs_deg
    );
}

#[test]
fn criterion_09_grasping_tables() {
    let report = bench_suite(SuiteName::GraspTables, 20, None).unwrap();
    for v in &report.verdicts {
        assert!(v.pass, "{}: {}", v.check, v.detail);
    }
    let overall = report
        .verdicts
        .iter()
        .find(|v| v.check.contains("overall success"))
        .map(|v| v.detail.clone())
        .unwrap_or_default();
    println!("ACCEPTANCE 09 PASS grasping tables: noiseless perfect, nominal {overall}");
}

#[test]
fn criterion_10_ekf_convergence_and_nees() {
    // noiseless convergence: 0.1 m initial offset, error < 1e-6 within 100
    // updates against near-exact measurements
    let cfg = EkfConfig {
        sigma_p_meas: 1e-4,
        sigma_ang_meas: 1e-4,
        gate_sigma: 1e9,
        ..EkfConfig::default()
    };
    let truth_p = Vector3::new(0.0, 0.0, 1.0);
    let mut ekf = EkfState::new(truth_p + Vector3::new(0.1, 0.0, 0.0), 0.0, 0.0, &cfg);
    let dt = 0.005;
    let hover = |t: f64| ImuSample { accel: Vector3::new(0.0, 0.0, 9.81), gyro: Vector3::zeros(), t };
    let mut updates = 0;
    let mut k = 0u64;
    while updates < 100 {
        k += 1;
        let t = k as f64 * dt;
        ekf_predict(&mut ekf, &hover(t), dt, &cfg).unwrap();
        if k % 3 == 0 {
            let slam = SlamPoseSample { p: truth_p, rpy: (0.0, 0.0, 0.0), t, valid: true };
            ekf_update_pose(&mut ekf, &slam, &cfg).unwrap();
            updates += 1;
        }
    }
    let conv_err = (ekf.p - truth_p).norm();
    assert!(conv_err < 1e-6, "convergence error {conv_err}");

    // position NEES over 50 Monte-Carlo runs of a static hover with nominal
    // noise; the truth noise model matches the filter model exactly
    use rand::Rng;
    use rand_distr::{Distribution, Normal};
    let cfg = EkfConfig::default();
    let n_runs = 50;
    let duration_steps = 3000u64; // 15 s at 200 Hz
    let window_start = 1000u64;
    let mut nees_sums = vec![0.0f64; (duration_steps - window_start) as usize / 3 + 1];
    let mut nees_counts = vec![0usize; nees_sums.len()];

    for run in 0..n_runs {
        let mut rng = stream_rng(9000 + run, Stream::ImuNoise);
        let mut draw = |std: f64| -> f64 {
            if std <= 0.0 {
                0.0
            } else {
                Normal::new(0.0, std).unwrap().sample(&mut rng)
            }
        };
        let mut ba = Vector3::new(draw(cfg.init_std_ba), draw(cfg.init_std_ba), draw(cfg.init_std_ba));
        let mut bg = Vector3::new(draw(cfg.init_std_bg), draw(cfg.init_std_bg), draw(cfg.init_std_bg));
        let p0_err = Vector3::new(draw(cfg.init_std_p), draw(cfg.init_std_p), draw(cfg.init_std_p));
        let truth_p = Vector3::new(0.0, 0.0, 1.0);
        let mut ekf = EkfState::new(truth_p + p0_err, 0.0, 0.0, &cfg);
        let dt = 0.005;
        let mut slot = 0usize;
        for k in 1..=duration_steps {
            let t = k as f64 * dt;
            // truth biases random-walk exactly like the filter models
            for i in 0..3 {
                ba[i] += draw(cfg.sigma_ba_rw * dt.sqrt());
                bg[i] += draw(cfg.sigma_bg_rw * dt.sqrt());
            }
            let imu = ImuSample {
                accel: Vector3::new(0.0, 0.0, 9.81)
                    + ba
                    + Vector3::new(draw(cfg.sigma_a), draw(cfg.sigma_a), draw(cfg.sigma_a)),
                gyro: bg + Vector3::new(draw(cfg.sigma_g), draw(cfg.sigma_g), draw(cfg.sigma_g)),
                t,
            };
            ekf_predict(&mut ekf, &imu, dt, &cfg).unwrap();
            if k % 3 == 0 {
                let noise_p = Vector3::new(
                    draw(cfg.sigma_p_meas),
                    draw(cfg.sigma_p_meas),
                    draw(cfg.sigma_p_meas),
                );
                let noise_a = (
                    draw(cfg.sigma_ang_meas),
                    draw(cfg.sigma_ang_meas),
                    draw(cfg.sigma_ang_meas),
                );
                let slam = SlamPoseSample {
                    p: truth_p + noise_p,
                    rpy: noise_a,
                    t,
                    valid: true,
                };
                ekf_update_pose(&mut ekf, &slam, &cfg).unwrap();
                if k >= window_start {
                    let e = ekf.p - truth_p;
                    let p_pos = ekf.cov.fixed_view::<3, 3>(0, 0).into_owned();
                    let nees = (e.transpose() * p_pos.try_inverse().unwrap() * e)[(0, 0)];
                    if slot < nees_sums.len() {
                        nees_sums[slot] += nees;
                        nees_counts[slot] += 1;
                    }
                    slot += 1;
                }
            }
        }
        let _ = rng.gen::<u64>();
    }

    let per_time: Vec<f64> = nees_sums
        .iter()
        .zip(&nees_counts)
        .filter(|(_, &c)| c == n_runs as usize)
        .map(|(&s, &c)| s / c as f64)
        .collect();
    let avg_nees = per_time.iter().sum::<f64>() / per_time.len() as f64;

    let dof = 3.0 * n_runs as f64;
    let chi = ChiSquared::new(dof).unwrap();
    let lo = chi.inverse_cdf(0.025) / n_runs as f64;
    let hi = chi.inverse_cdf(0.975) / n_runs as f64;
    assert!(
        avg_nees >= lo && avg_nees <= hi,
        "time-averaged NEES {avg_nees:.3} outside [{lo:.3}, {hi:.3}]"
    );
    println!(
        "ACCEPTANCE 10 PASS ekf: convergence {conv_err:.2e} m, NEES {avg_nees:.3} in [{lo:.3}, {hi:.3}]"
    );
}

#[test]
fn criterion_11_instance_mapping_oracle() {
    use rand_distr::{Distribution, Normal};
    let sigma = 0.01;
    let truth = Vector3::new(1.0, 0.2, 1.1);
    let mut wins = 0;
    for trial in 0..100u64 {
        let mut rng = stream_rng(500 + trial, Stream::Detector);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut map = InstanceMap::default();
        let mut first_err = None;
        for k in 0..20 {
            let det = truth
                + Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                );
            if first_err.is_none() {
                first_err = Some((det - truth).norm());
            }
            map.update(&[det], k as f64 / 30.0);
        }
        let map_err = (map.query_target(0).unwrap() - truth).norm();
        if map_err < first_err.unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 90, "map beat a single detection in only {wins}/100 trials");

    // map state is invariant to within-frame detection ordering (bitwise)
    let dets = [
        Vector3::new(1.00, 0.00, 1.0),
        Vector3::new(1.05, 0.01, 1.0),
        Vector3::new(1.30, -0.20, 1.2),
    ];
    let mut a = InstanceMap::default();
    a.update(&dets, 0.0);
    let rev: Vec<_> = dets.iter().rev().cloned().collect();
    let mut b = InstanceMap::default();
    b.update(&rev, 0.0);
    assert_eq!(a.instances().len(), b.instances().len());
    for (ia, ib) in a.instances().iter().zip(b.instances()) {
        assert_eq!(ia.centroid, ib.centroid);
    }
    println!("ACCEPTANCE 11 PASS instance mapping: {wins}/100 trials beat a single detection; order-invariant");
}

#[test]
fn criterion_12_state_machine() {
    // legal edges across a representative suite of runs
    let mut configs: Vec<ScenarioConfig> = vec![
        mission_scenario(0, 42, true),
        mission_scenario(3, 7, false),
        mission_scenario(6, 11, false),
        servo_scenario(2, 1.0),
    ];
    configs[0].duration = 30.0;
    for cfg in &configs {
        let artifacts = run_scenario(cfg).unwrap();
        let phases: Vec<Phase> = artifacts.records.iter().map(|r| r.phase).collect();
        validate_phase_sequence(&phases).unwrap_or_else(|(a, b)| {
            panic!("illegal edge {:?} -> {:?} in {:?}", a, b, cfg.experiment)
        });
    }

    // "no targets" path: a zero-fruit mission walks the exact landing branch
    let empty = mission_scenario(0, 1, true);
    let artifacts = run_scenario(&empty).unwrap();
    let mut sequence = Vec::new();
    for r in &artifacts.records {
        if sequence.last() != Some(&r.phase) {
            sequence.push(r.phase);
        }
    }
    assert_eq!(
        sequence,
        vec![
            Phase::ArmMotors,
            Phase::TakeOff,
            Phase::Hover,
            Phase::DetectApples,
            Phase::SelectTarget,
            Phase::Landing,
            Phase::Disarm
        ],
        "empty-mission phase walk"
    );
    assert!(artifacts.report.grasp_success_rate.is_none());

    // kill switch from every airborne phase reaches Disarm within the
    // landing timeout
    let probe = run_scenario(&mission_scenario(2, 5, true)).unwrap();
    let mut kill_times = Vec::new();
    for pair in probe.transitions.windows(2) {
        let phase = pair[0].to;
        if phase.airborne() && phase != Phase::Landing {
            kill_times.push((phase, (pair[0].t + pair[1].t) / 2.0));
        }
    }
    assert!(kill_times.len() >= 5, "probe mission touched too few phases");
    for (phase, kt) in kill_times {
        let mut cfg = mission_scenario(2, 5, true);
        cfg.kill_at = Some(kt);
        let killed = run_scenario(&cfg).unwrap();
        assert_eq!(killed.final_phase, Phase::Disarm, "kill during {phase:?}");
        let disarm_t = killed
            .transitions
            .iter()
            .find(|tr| tr.to == Phase::Disarm)
            .map(|tr| tr.t)
            .unwrap();
        assert!(
            disarm_t <= kt + cfg.mission.timeouts.landing + 1.0,
            "kill during {phase:?}: disarm at {disarm_t:.2} after kill at {kt:.2}"
        );
        let phases: Vec<Phase> = killed.records.iter().map(|r| r.phase).collect();
        validate_phase_sequence(&phases).unwrap();
    }
    println!("ACCEPTANCE 12 PASS state machine: legal edges, landing branch, kill switch from all airborne phases");
}

#[test]
fn criterion_13_determinism_and_replay() {
    use harvest_sim::harness::telemetry::write_telemetry_csv;

    let cfg = mission_scenario(3, 99, false);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();

    let mut csv_a = Vec::new();
    write_telemetry_csv(&mut csv_a, &a.records).unwrap();
    let mut csv_b = Vec::new();
    write_telemetry_csv(&mut csv_b, &b.records).unwrap();
    assert_eq!(csv_a, csv_b, "telemetry bytes differ between identical runs");

    let json_a = serde_json::to_string_pretty(&a.report).unwrap();
    let json_b = serde_json::to_string_pretty(&b.report).unwrap();
    assert_eq!(json_a, json_b, "metrics bytes differ between identical runs");

    // replay from persisted files reproduces the metrics exactly
    let dir = tempfile::tempdir().unwrap();
    a.write_outputs(dir.path()).unwrap();
    let replayed =
        harvest_sim::harness::sim::replay_metrics(&dir.path().join("telemetry.csv")).unwrap();
    let json_replayed = serde_json::to_string_pretty(&replayed).unwrap();
    assert_eq!(json_a, json_replayed, "replayed metrics differ");

    // and through the CLI binary end to end
    let exe = env!("CARGO_BIN_EXE_harvest-sim");
    let scenario_path = dir.path().join("scenario.json");
    std::fs::write(&scenario_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        let status = std::process::Command::new(exe)
            .args(["run", "--scenario"])
            .arg(&scenario_path)
            .arg("--out")
            .arg(out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    }
    let t1 = std::fs::read(out1.join("telemetry.csv")).unwrap();
    let t2 = std::fs::read(out2.join("telemetry.csv")).unwrap();
    assert_eq!(t1, t2, "CLI telemetry bytes differ");
    let m1 = std::fs::read(out1.join("metrics.json")).unwrap();
    let m2 = std::fs::read(out2.join("metrics.json")).unwrap();
    assert_eq!(m1, m2, "CLI metrics bytes differ");

    let replay_out = std::process::Command::new(exe)
        .args(["replay-metrics", "--telemetry"])
        .arg(out1.join("telemetry.csv"))
        .output()
        .unwrap();
    assert!(replay_out.status.success());
    let replay_json = String::from_utf8(replay_out.stdout).unwrap();
    let stored = String::from_utf8(m1).unwrap();
    assert_eq!(replay_json.trim(), stored.trim(), "CLI replay differs from stored metrics");

    println!("ACCEPTANCE 13 PASS determinism: byte-identical telemetry and metrics, exact replay");
}

/// The full benchmark suite set stays green and every run's phase log is
/// legal (backs criterion 12's "over the full bench suite" clause).
#[test]
fn bench_suites_all_pass() {
    for &suite in SuiteName::all() {
        // GraspTables at its acceptance width runs in criterion 09; use a
        // narrower grid here to keep the suite sweep affordable
        let seeds = match suite {
            SuiteName::GraspTables => 2,
            SuiteName::Fig6aMass => 3,
            _ => 1,
        };
        let report = bench_suite(suite, seeds, None).unwrap();
        for v in &report.verdicts {
            assert!(v.pass, "[{}] {}: {}", report.suite, v.check, v.detail);
        }
    }
    println!("ACCEPTANCE XX PASS bench suite sweep");
}

/// Mission scenarios honor the experiment-kind contract used by criterion 9:
/// a noiseless run grasps everything and the measured phases support it.
#[test]
fn mission_noiseless_end_to_end_detail() {
    let cfg = mission_scenario(2, 1, true);
    let artifacts = run_scenario(&cfg).unwrap();
    assert_eq!(artifacts.final_phase, Phase::Disarm);
    assert_eq!(artifacts.report.grasp_success_rate, Some(1.0));
    assert_eq!(artifacts.report.error_rate, Some(0.0));
    let t = artifacts.report.avg_time_per_instance.unwrap();
    assert!((3.0..=15.0).contains(&t), "avg time {t}");
    // experiment kind recorded for replay
    assert_eq!(artifacts.meta.experiment, ExperimentKind::Mission);
}
