use super::*;
use crate::geometry::PoincareState;

fn rimless() -> Model {
    Model::by_id("rimless-wheel").unwrap()
}

fn compass() -> Model {
    Model::by_id("compass-gait").unwrap()
}

fn passive() -> PolicySpec {
    PolicySpec::passive("passive")
}

fn sim(
    model: &Model,
    x0: &PoincareState,
    policy: &PolicySpec,
    gamma: &Disturbance,
    cfg: &SimConfig,
) -> SimulationOutcome {
    simulate_gait_cycle(x0, policy, gamma, model, cfg).unwrap()
}

#[test]
fn rimless_limit_cycle_is_a_fixed_point() {
    let model = rimless();
    let omega_star = match &model {
        Model::RimlessWheel(m) => m.limit_cycle_omega(),
        _ => unreachable!(),
    };
    let x0 = PoincareState::new(vec![omega_star]).unwrap();
    let out = sim(&model, &x0, &passive(), &Disturbance::null(), &SimConfig::default());
    match out.result {
        CycleResult::Step(next) => {
            assert!(
                (next.coords()[0] - omega_star).abs() < 1e-8,
                "returned {} vs closed-form fixed point {}",
                next.coords()[0],
                omega_star
            );
        }
        CycleResult::Failure(c) => panic!("unexpected failure {c:?}"),
    }
    assert!(out.cycle_time > 0.3);
}

#[test]
fn rimless_simulated_map_matches_closed_form_per_cycle() {
    // One gait cycle = two applications of the closed-form spoke-step map.
    let model = rimless();
    let wheel = match &model {
        Model::RimlessWheel(m) => m.clone(),
        _ => unreachable!(),
    };
    for omega0 in [1.0, 1.2, 1.5, 2.0] {
        let expected = wheel
            .spoke_step_map(omega0)
            .and_then(|w| wheel.spoke_step_map(w));
        let out = sim(
            &model,
            &PoincareState::new(vec![omega0]).unwrap(),
            &passive(),
            &Disturbance::null(),
            &SimConfig::default(),
        );
        match (expected, out.result) {
            (Some(w), CycleResult::Step(next)) => {
                assert!(
                    (next.coords()[0] - w).abs() < 1e-7,
                    "omega0 {omega0}: simulated {} vs closed form {w}",
                    next.coords()[0]
                );
            }
            (None, CycleResult::Failure(FailureCause::Fell)) => {}
            (e, r) => panic!("omega0 {omega0}: closed form {e:?} vs simulated {r:?}"),
        }
    }
}

#[test]
fn rimless_converges_to_limit_cycle_within_fifty_cycles() {
    let model = rimless();
    let omega_star = match &model {
        Model::RimlessWheel(m) => m.limit_cycle_omega(),
        _ => unreachable!(),
    };
    let cfg = SimConfig::default();
    for omega0 in [1.0, 1.3, 1.8, 2.5] {
        let mut x = PoincareState::new(vec![omega0]).unwrap();
        let mut converged = false;
        for _ in 0..50 {
            match sim(&model, &x, &passive(), &Disturbance::null(), &cfg).result {
                CycleResult::Step(next) => {
                    x = next;
                    if (x.coords()[0] - omega_star).abs() < 1e-6 {
                        converged = true;
                        break;
                    }
                }
                CycleResult::Failure(c) => panic!("fell during convergence: {c:?}"),
            }
        }
        assert!(converged, "omega0 {omega0} did not converge");
    }
}

#[test]
fn rimless_backward_push_failure_matches_energy_threshold_oracle() {
    // Oracle: after the push window ends (still before mid-stance apex),
    // the wheel fails iff its kinetic energy cannot lift the hub to the
    // apex. The simulator only knows about stalls and reversals.
    let model = rimless();
    let wheel = match &model {
        Model::RimlessWheel(m) => m.clone(),
        _ => unreachable!(),
    };
    let (g, l) = (wheel.params.gravity, wheel.params.leg_length);
    let omega_star = wheel.limit_cycle_omega();
    let x0 = PoincareState::new(vec![omega_star]).unwrap();
    let mut cfg = SimConfig::default();
    cfg.record_trajectory = true;
    let push_start = 0.05;
    let push_dur = 0.008;

    for magnitude in [-50.0, -150.0, -250.0, -400.0, -700.0, -1200.0] {
        let gamma = Disturbance::push(magnitude, push_start, push_dur);
        let out = sim(&model, &x0, &passive(), &gamma, &cfg);
        let traj = out.trajectory.as_ref().unwrap();
        // State at the end of the push window (first sample at or after it).
        let (_, state) = traj
            .iter()
            .find(|(t, _)| *t >= push_start + push_dur)
            .expect("trajectory covers the push window");
        let (theta, omega) = (state[0], state[1]);
        assert!(theta < 0.0, "push must end before the apex for this oracle");
        let deficit = omega <= 0.0
            || 0.5 * l * l * omega * omega < g * l * (1.0 - theta.cos());
        match (deficit, out.is_failure()) {
            (true, true) | (false, false) => {}
            (oracle, simulated) => panic!(
                "magnitude {magnitude}: oracle deficit {oracle} vs simulated failure {simulated}"
            ),
        }
        if out.is_failure() {
            assert!(matches!(
                out.result,
                CycleResult::Failure(FailureCause::Fell)
            ));
        }
    }
}

#[test]
fn null_magnitude_push_identical_to_no_push() {
    let model = rimless();
    let x0 = PoincareState::new(vec![1.1]).unwrap();
    let cfg = SimConfig::default();
    let a = sim(&model, &x0, &passive(), &Disturbance::null(), &cfg);
    let zero_push = Disturbance::push(0.0, 0.1, 0.008);
    let b = sim(&model, &x0, &passive(), &zero_push, &cfg);
    assert_eq!(a, b);
}

#[test]
fn simulation_is_bit_exact_deterministic() {
    let cfg = SimConfig::default();
    let gamma = Disturbance::push(-120.0, 0.12, 0.008);
    for model in [rimless(), compass()] {
        let x0 = model.default_initial();
        let policy = match model {
            Model::CompassGait(_) => {
                let mut p = std::collections::BTreeMap::new();
                p.insert("kp".into(), 2.0);
                p.insert("kd".into(), 0.5);
                p.insert("alpha_ref".into(), 0.5);
                PolicySpec::pd("pd", p)
            }
            _ => passive(),
        };
        let a = sim(&model, &x0, &policy, &gamma, &cfg);
        let b = sim(&model, &x0, &policy, &gamma, &cfg);
        assert_eq!(a, b, "model {} not deterministic", model.id());
        match (&a.result, &b.result) {
            (CycleResult::Step(s1), CycleResult::Step(s2)) => {
                // bit-exact, not merely close
                for (c1, c2) in s1.coords().iter().zip(s2.coords()) {
                    assert_eq!(c1.to_bits(), c2.to_bits());
                }
            }
            (CycleResult::Failure(f1), CycleResult::Failure(f2)) => assert_eq!(f1, f2),
            _ => panic!("outcome kinds differ"),
        }
    }
}

#[test]
fn rimless_energy_constant_between_impacts_and_lost_at_impact() {
    let model = rimless();
    let wheel = match &model {
        Model::RimlessWheel(m) => m.clone(),
        _ => unreachable!(),
    };
    let mut cfg = SimConfig::default();
    cfg.record_trajectory = true;
    let x0 = model.default_initial();
    let out = sim(&model, &x0, &passive(), &Disturbance::null(), &cfg);
    let traj = out.trajectory.as_ref().unwrap();
    assert!(!out.is_failure());

    // Impacts appear as consecutive samples at identical times; between
    // them energy must be conserved to 1e-6 relative.
    let mut phase_start_energy = wheel.energy(&traj[0].1);
    let mut kinetic_drops = 0;
    for pair in traj.windows(2) {
        let ((t0, x_pre), (t1, x_post)) = (&pair[0], &pair[1]);
        if t0 == t1 {
            // impact: kinetic energy must not increase (positions frozen)
            let ke_pre = 0.5 * x_pre[1] * x_pre[1];
            let ke_post = 0.5 * x_post[1] * x_post[1];
            assert!(ke_post <= ke_pre + 1e-12);
            kinetic_drops += 1;
            phase_start_energy = wheel.energy(x_post);
        } else {
            let e = wheel.energy(x_post);
            assert!(
                (e - phase_start_energy).abs() / phase_start_energy.abs() < 1e-6,
                "energy drift {} -> {}",
                phase_start_energy,
                e
            );
        }
    }
    assert_eq!(kinetic_drops, 2, "one gait cycle has two impacts");
}

#[test]
fn compass_energy_conserved_between_impacts() {
    let model = compass();
    let walker = match &model {
        Model::CompassGait(m) => m.clone(),
        _ => unreachable!(),
    };
    let mut cfg = SimConfig::default();
    cfg.record_trajectory = true;
    let x0 = model.default_initial();
    let out = sim(&model, &x0, &passive(), &Disturbance::null(), &cfg);
    let traj = out.trajectory.as_ref().unwrap();

    let mut phase_start_energy = walker.energy(&traj[0].1);
    let mut impacts = 0;
    for pair in traj.windows(2) {
        let ((t0, x_pre), (t1, x_post)) = (&pair[0], &pair[1]);
        if t0 == t1 {
            let ke_pre = walker.kinetic_energy(x_pre);
            let ke_post = walker.kinetic_energy(x_post);
            assert!(
                ke_post <= ke_pre + 1e-9,
                "impact gained energy: {ke_pre} -> {ke_post}"
            );
            impacts += 1;
            phase_start_energy = walker.energy(x_post);
        } else {
            let e = walker.energy(x_post);
            assert!(
                (e - phase_start_energy).abs() / phase_start_energy.abs().max(1.0) < 1e-6,
                "energy drift {} -> {} at t={}",
                phase_start_energy,
                e,
                t1
            );
        }
    }
    assert!(impacts >= 1, "no impacts recorded");
}

#[test]
fn push_impulse_matches_momentum_change() {
    // A short push of duration δ injects horizontal momentum
    // F·cos²θ·δ + O(δ²) into the pin-constrained hub (the spoke redirects
    // the rest into the ground). Halving δ must shrink the O(δ²) remainder
    // by roughly 4x, and halving the integrator step must not move the
    // measurement at all.
    let model = rimless();
    let wheel = match &model {
        Model::RimlessWheel(m) => m.clone(),
        _ => unreachable!(),
    };
    let (m, l) = (wheel.params.mass, wheel.params.leg_length);
    let x0 = model.default_initial();
    let force = 200.0;
    let t_push = 0.1;
    let mut cfg = SimConfig::default();
    cfg.record_trajectory = true;

    let horizontal_momentum = |state: &[f64]| m * l * state[1] * state[0].cos();
    let state_at = |traj: &[(f64, Vec<f64>)], t: f64| -> Vec<f64> {
        traj.iter()
            .find(|(tt, _)| (*tt - t).abs() < 1e-9)
            .map(|(_, x)| x.clone())
            .unwrap_or_else(|| panic!("no sample at t={t}"))
    };
    let momentum_delta = |delta: f64, cfg: &SimConfig| -> (f64, f64) {
        let gamma = Disturbance::push(force, t_push, delta);
        let pushed = sim(&model, &x0, &passive(), &gamma, cfg);
        let nullrun = sim(&model, &x0, &passive(), &Disturbance::null(), cfg);
        let t_end = t_push + delta;
        let p1 = horizontal_momentum(&state_at(pushed.trajectory.as_ref().unwrap(), t_end));
        let p0 = horizontal_momentum(&state_at(nullrun.trajectory.as_ref().unwrap(), t_end));
        // mid-window hub angle of the undisturbed run fixes the projection
        let theta_mid = state_at(nullrun.trajectory.as_ref().unwrap(), t_push + 0.5 * delta)[0];
        (p1 - p0, force * delta * theta_mid.cos().powi(2))
    };

    let mut errors = Vec::new();
    for delta in [0.032, 0.016] {
        let (dp, predicted) = momentum_delta(delta, &cfg);
        errors.push((dp - predicted).abs());
        assert!(
            (dp - predicted).abs() < 0.02 * predicted.abs(),
            "delta {delta}: measured {dp} vs predicted {predicted}"
        );
    }
    // O(δ²) remainder: halving δ shrinks the error by about 4x
    assert!(
        errors[0] / errors[1] > 2.5 && errors[0] / errors[1] < 6.5,
        "errors {errors:?} not O(delta^2)"
    );
    // halved-step integration: the measurement is not an integrator artifact
    let (dp_h, _) = momentum_delta(0.032, &cfg);
    let mut cfg_half = cfg.clone();
    cfg_half.time_step = 0.001;
    let (dp_h2, _) = momentum_delta(0.032, &cfg_half);
    assert!(
        (dp_h - dp_h2).abs() < 1e-9 * dp_h.abs().max(1.0),
        "momentum change moved under step halving: {dp_h} vs {dp_h2}"
    );
}

#[test]
fn degenerate_creep_policy_times_out() {
    // High-gain rate regulation toward a tiny hub rate: the wheel keeps
    // creeping forward but cannot finish a cycle inside the episode limit.
    let model = rimless();
    let mut params = std::collections::BTreeMap::new();
    params.insert("kp".into(), 1000.0);
    params.insert("omega_ref".into(), 0.05);
    let policy = PolicySpec::pd("creep", params);
    let out = sim(
        &model,
        &model.default_initial(),
        &policy,
        &Disturbance::null(),
        &SimConfig::default(),
    );
    assert!(
        matches!(out.result, CycleResult::Failure(FailureCause::Timeout)),
        "expected timeout, got {:?}",
        out.result
    );
}

#[test]
fn detect_failure_height_thresholds() {
    let cfg = SimConfig::default();
    let model = rimless();
    // full standing height, rolling forward: nominal
    assert_eq!(detect_failure(&model, &[0.0, 1.0], 1.0, &cfg), None);
    // hub at ground level: fell
    assert_eq!(
        detect_failure(&model, &[std::f64::consts::FRAC_PI_2, 1.0], 1.0, &cfg),
        Some(FailureCause::Fell)
    );
    // past the episode limit: timeout
    assert_eq!(
        detect_failure(&model, &[0.0, 1.0], 9.0, &cfg),
        Some(FailureCause::Timeout)
    );
    // non-finite state: integration error
    assert_eq!(
        detect_failure(&model, &[f64::NAN, 1.0], 1.0, &cfg),
        Some(FailureCause::IntegrationError)
    );
}

#[test]
fn compass_heel_strike_dissipates_kinetic_energy() {
    let model = compass();
    let walker = match &model {
        Model::CompassGait(m) => m.clone(),
        _ => unreachable!(),
    };
    // plausible pre-impact states: stance past vertical, swing ahead
    for (w_st, w_sw) in [(1.0, -0.4), (1.5, 0.2), (0.8, -1.0)] {
        let pre = [0.25, -0.25, w_st, w_sw];
        let post = walker.heel_strike(&pre);
        assert_eq!(post[0], pre[1]);
        assert_eq!(post[1], pre[0]);
        let ke_pre = walker.kinetic_energy(&pre);
        let ke_post = walker.kinetic_energy(&post);
        assert!(
            ke_post <= ke_pre + 1e-9,
            "impact increased KE: {ke_pre} -> {ke_post} for ({w_st}, {w_sw})"
        );
    }
}

#[test]
fn dimension_mismatch_and_unknown_model_are_rejected() {
    let model = rimless();
    let bad = PoincareState::new(vec![1.0, 2.0]).unwrap();
    assert!(simulate_gait_cycle(
        &bad,
        &passive(),
        &Disturbance::null(),
        &model,
        &SimConfig::default()
    )
    .is_err());
    assert!(Model::by_id("five-link-biped").is_err());
}

#[test]
fn profile_validation() {
    let p = DisturbanceProfile::with_null(
        "p",
        vec![Disturbance::push(100.0, 0.1, 0.008)],
        0.4,
    )
    .unwrap();
    assert_eq!(p.len(), 2);
    assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-15);

    // bad: probabilities not summing to one
    let bad = DisturbanceProfile {
        id: "bad".into(),
        disturbances: vec![Disturbance::null(), Disturbance::push(1.0, 0.0, 0.1)],
        probabilities: vec![0.4, 0.5],
    };
    assert!(bad.validate().is_err());

    // bad: first entry not the null push
    let bad2 = DisturbanceProfile {
        id: "bad2".into(),
        disturbances: vec![Disturbance::push(1.0, 0.0, 0.1), Disturbance::null()],
        probabilities: vec![0.5, 0.5],
    };
    assert!(bad2.validate().is_err());
}

#[test]
fn external_zero_policy_matches_passive() {
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || {
        if let Ok((mut stream, _)) = listener.accept() {
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) | Err(_) => break,
                    Ok(_) => {
                        if stream.write_all(b"{\"act\": [0.0]}\n").is_err() {
                            break;
                        }
                    }
                }
            }
        }
    });

    let model = rimless();
    let x0 = model.default_initial();
    let cfg = SimConfig::default();
    let external = PolicySpec {
        id: "ext-zero".into(),
        kind: PolicyKind::External {
            endpoint: Endpoint::Tcp { addr },
            deadline_ms: 1000,
        },
        torque_limit: 100.0,
    };
    let a = sim(&model, &x0, &external, &Disturbance::null(), &cfg);
    let b = sim(&model, &x0, &passive(), &Disturbance::null(), &cfg);
    assert_eq!(a, b);
}

#[test]
fn simulation_counter_increments() {
    let model = rimless();
    let before = simulation_call_count();
    let _ = sim(
        &model,
        &model.default_initial(),
        &passive(),
        &Disturbance::null(),
        &SimConfig::default(),
    );
    assert!(simulation_call_count() > before);
}
