//! Dev scratch: calibrate acceptance thresholds.
use gaitmesh::dynamics::*;
use gaitmesh::geometry::*;
use gaitmesh::markov::*;
use gaitmesh::meshing::*;
use rand::prelude::*;

fn synth_sweep(k: usize, thresholds: &[f64]) {
    let model = Model::from_spec(&ModelSpec::SyntheticScatter(SyntheticParams {
        ambient_dim: 13, intrinsic_dim: k, seed: 20 + k as u64,
    })).unwrap();
    let pushes: Vec<Disturbance> = (1..=19).map(|i| Disturbance::push(i as f64, 0.0, 0.008)).collect();
    let profile = DisturbanceProfile::with_null("s", pushes, 0.05).unwrap();
    let t0 = std::time::Instant::now();
    let sweep = mesh_growth_sweep(
        &model.default_initial(), &[PolicySpec::passive("p")], &profile,
        thresholds, &model, &SimConfig::default(), &BuildOptions::default(),
    ).unwrap();
    let pairs: Vec<(f64, usize)> = sweep.iter().map(|(d, n)| (*d, *n.as_ref().unwrap())).collect();
    let sims: usize = pairs.iter().map(|(_, n)| n * 20).sum();
    let fit = estimate_dimension(&pairs).unwrap();
    println!("k={k} thresholds={thresholds:?} -> pairs={pairs:?} n_hat={:.3} r2={:.4} sims={sims} ({:.1}s)",
        fit.n_hat, fit.r_squared, t0.elapsed().as_secs_f64());
}

fn mc_check() {
    // five-push rimless: mesh M vs direct MC with burn-in
    let model = Model::by_id("rimless-wheel").unwrap();
    let pushes = vec![
        Disturbance::push(300.0, 0.1, 0.008),
        Disturbance::push(-300.0, 0.1, 0.008),
        Disturbance::push(500.0, 0.4, 0.008),
        Disturbance::push(-500.0, 0.4, 0.008),
    ];
    let profile = DisturbanceProfile::with_null("five", pushes, 0.4).unwrap();
    let cfg = SimConfig::default();
    let policy = PolicySpec::passive("p");
    for d_tr in [0.01, 0.003] {
        let t0 = std::time::Instant::now();
        let build = build_mesh(&model.default_initial(), &[policy.clone()], &profile, d_tr, &model, &cfg, &BuildOptions::default()).unwrap();
        let t = assemble_stochastic(&build.table, 0, &profile).unwrap();
        let s = spectral_summary(&t).unwrap();
        let build_t = t0.elapsed().as_secs_f64();

        // MC with burn-in
        let t1 = std::time::Instant::now();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let episodes = 10_000usize;
        let burn = 8u32;
        let mut total = 0.0; let mut count = 0usize; let mut sumsq = 0.0;
        let mut runtime = PolicyRuntime::connect(&policy).unwrap();
        while count < episodes {
            let mut x = model.default_initial();
            let mut alive = true;
            for _ in 0..burn {
                let d = pick(&profile, &mut rng);
                match model.simulate_cycle(&x, &mut runtime, policy.torque_limit, &profile.disturbances[d], &cfg).unwrap().result {
                    CycleResult::Step(next) => x = next,
                    CycleResult::Failure(_) => { alive = false; break; }
                }
            }
            if !alive { continue; }
            let mut steps = 0u64;
            loop {
                let d = pick(&profile, &mut rng);
                match model.simulate_cycle(&x, &mut runtime, policy.torque_limit, &profile.disturbances[d], &cfg).unwrap().result {
                    CycleResult::Step(next) => { x = next; steps += 1; if steps > 100_000 { break; } }
                    CycleResult::Failure(_) => { steps += 1; break; }
                }
            }
            total += steps as f64; sumsq += (steps*steps) as f64; count += 1;
        }
        let mean = total / count as f64;
        let se = ((sumsq / count as f64 - mean*mean).max(0.0) / count as f64).sqrt();
        println!("d_tr={d_tr}: N={} M_exact={:.4} MC={:.4} (SE {:.3}) rel_diff={:.3}% build={:.1}s mc={:.1}s",
            build.mesh.len(), s.m_exact, mean, se,
            100.0*(s.m_exact-mean).abs()/mean, build_t, t1.elapsed().as_secs_f64());
    }
}

fn pick(p: &DisturbanceProfile, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, pr) in p.probabilities.iter().enumerate() {
        acc += pr;
        if u <= acc { return i; }
    }
    p.probabilities.len() - 1
}

fn main() {
    synth_sweep(4, &[0.095, 0.12, 0.15]);
}
