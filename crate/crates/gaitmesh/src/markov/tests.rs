use super::*;
use crate::dynamics::Disturbance;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Table with one controller: rows[i] lists the successor per disturbance
/// for state i+1.
fn table(rows: &[Vec<usize>], n_dist: usize) -> DeterministicTransitionTable {
    let mut t = DeterministicTransitionTable::new(rows.len() + 1, 1, n_dist);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), n_dist);
        for (d, &succ) in row.iter().enumerate() {
            t.set(i + 1, 0, d, succ);
        }
    }
    t
}

fn profile(probs: &[f64]) -> DisturbanceProfile {
    let mut disturbances = vec![Disturbance::null()];
    for i in 1..probs.len() {
        disturbances.push(Disturbance::push(100.0 * i as f64, 0.1, 0.008));
    }
    DisturbanceProfile {
        id: "test".into(),
        disturbances,
        probabilities: probs.to_vec(),
    }
}

/// Random absorbing chain: every state keeps a direct failure leak so the
/// MFPT is finite and Monte Carlo rollouts stay short.
fn random_chain(rng: &mut ChaCha8Rng, n_sub: usize, leak: f64) -> StochasticMatrix {
    let n = n_sub + 1;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![vec![(0, 1.0)]];
    for _ in 0..n_sub {
        let mut weights: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        let p0 = leak * rng.gen_range(0.5..1.5);
        weights.insert(0, p0);
        let targets = rng.gen_range(2..=5usize);
        for _ in 0..targets {
            let j = rng.gen_range(1..n);
            *weights.entry(j).or_insert(0.0) += rng.gen_range(0.1..1.0);
        }
        let total: f64 = weights.values().sum();
        let mut row: Vec<(usize, f64)> = weights
            .into_iter()
            .map(|(j, w)| (j, w / total))
            .collect();
        // force the row sum to exactly 1 on the largest entry
        let sum: f64 = row.iter().map(|(_, p)| p).sum();
        let imax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
            .unwrap()
            .0;
        row[imax].1 += 1.0 - sum;
        rows.push(row);
    }
    StochasticMatrix::from_rows(rows, 0, "random".into()).unwrap()
}

/// Row samplers for Monte Carlo rollouts.
fn cumulative_rows(t: &StochasticMatrix) -> Vec<Vec<(f64, usize)>> {
    (0..t.n())
        .map(|i| {
            let (cols, vals) = t.row(i);
            let mut acc = 0.0;
            cols.iter()
                .zip(vals)
                .map(|(&j, &p)| {
                    acc += p;
                    (acc, j as usize)
                })
                .collect()
        })
        .collect()
}

fn sample_next(cum: &[(f64, usize)], u: f64) -> usize {
    for &(c, j) in cum {
        if u <= c {
            return j;
        }
    }
    cum.last().unwrap().1
}

/// Monte Carlo first-passage mean and standard error from a fixed start.
fn mc_first_passage(
    t: &StochasticMatrix,
    start: usize,
    episodes: usize,
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let cum = cumulative_rows(t);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let mut state = start;
        let mut steps = 0u64;
        while state != 0 && steps < cap {
            state = sample_next(&cum[state], rng.gen::<f64>());
            steps += 1;
        }
        let s = steps as f64;
        sum += s;
        sum_sq += s * s;
    }
    let mean = sum / episodes as f64;
    let var = (sum_sq / episodes as f64 - mean * mean).max(0.0);
    (mean, (var / episodes as f64).sqrt())
}

/// Dense oracle: λ₂ as the largest eigenvalue magnitude of T̂ via the
/// general-purpose eigensolver, φ via shifted inverse iteration on T̂ᵀ.
fn dense_spectral_oracle(t: &StochasticMatrix) -> (f64, Vec<f64>) {
    let n = t.n_sub();
    let sub = t.sub_dense();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| sub[i][j]);
    let eigs = a.clone().complex_eigenvalues();
    let lambda2 = eigs.iter().map(|e| e.norm()).fold(0.0f64, f64::max);

    // inverse iteration on T̂ᵀ with a slightly detuned shift
    let shift = lambda2 + 1e-8;
    let shifted = a.transpose() - nalgebra::DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..100 {
        let solved = lu.solve(&v).expect("shifted matrix is nonsingular");
        let norm = solved.amax();
        v = solved / norm;
    }
    // dominant left eigenvector of a nonnegative block: single sign
    let total: f64 = v.iter().sum();
    let phi: Vec<f64> = v.iter().map(|x| x / total).collect();
    (lambda2, phi)
}

#[test]
fn assemble_all_failure_row_is_unit_vector() {
    let t = table(&[vec![0, 0, 0]], 3);
    let m = assemble_stochastic(&t, 0, &profile(&[0.5, 0.25, 0.25])).unwrap();
    let (cols, vals) = m.row(1);
    assert_eq!(cols, [0]);
    assert_eq!(vals, [1.0]);
}

#[test]
fn assemble_matches_worked_example() {
    // P = (0.4, 0.15, 0.15, 0.15, 0.15) over successors (2, 1, 3, 3, 2):
    // T(i,1) = 0.15, T(i,2) = 0.55, T(i,3) = 0.30
    let t = table(
        &[
            vec![2, 1, 3, 3, 2],
            vec![2, 2, 2, 2, 2],
            vec![3, 3, 3, 3, 3],
        ],
        5,
    );
    let m = assemble_stochastic(&t, 0, &profile(&[0.4, 0.15, 0.15, 0.15, 0.15])).unwrap();
    assert!((m.prob(1, 1) - 0.15).abs() < 1e-15);
    assert!((m.prob(1, 2) - 0.55).abs() < 1e-15);
    assert!((m.prob(1, 3) - 0.30).abs() < 1e-15);
    assert_eq!(m.prob(1, 0), 0.0);
}

#[test]
fn assemble_matches_dense_oracle_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n_sub = rng.gen_range(2..12);
        let n_dist = rng.gen_range(1..6);
        let rows: Vec<Vec<usize>> = (0..n_sub)
            .map(|_| (0..n_dist).map(|_| rng.gen_range(0..=n_sub)).collect())
            .collect();
        let t = table(&rows, n_dist);
        let mut probs: Vec<f64> = (0..n_dist).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let sum: f64 = probs.iter().sum();
        probs[0] += 1.0 - sum;
        let prof = profile(&probs);
        let sparse = assemble_stochastic(&t, 0, &prof).unwrap();

        // dense oracle: accumulate in the same declared order
        let n = n_sub + 1;
        let mut dense = vec![vec![0.0f64; n]; n];
        dense[0][0] = 1.0;
        for i in 1..n {
            for d in 0..n_dist {
                let succ = rows[i - 1][d];
                dense[i][succ] += probs[d];
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    sparse.prob(i, j),
                    dense[i][j],
                    "entry ({i}, {j}) differs from dense assembly"
                );
            }
        }
    }
}

#[test]
fn assemble_rejects_profile_length_mismatch() {
    let t = table(&[vec![1, 1]], 2);
    assert!(assemble_stochastic(&t, 0, &profile(&[0.5, 0.25, 0.25])).is_err());
    assert!(assemble_stochastic(&t, 1, &profile(&[0.5, 0.5])).is_err());
}

#[test]
fn mfpt_two_state_geometric() {
    // single state with self-probability p: m = 1/(1-p)
    let m = StochasticMatrix::from_rows(
        vec![vec![(0, 1.0)], vec![(0, 0.1), (1, 0.9)]],
        0,
        "geo".into(),
    )
    .unwrap();
    let v = mfpt_vector(&m).unwrap();
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 10.0).abs() < 1e-12, "m = {}", v[1]);
}

#[test]
fn mfpt_permutation_block_is_infinite() {
    // non-failure block is a 3-cycle: failure unreachable, m = +inf
    let m = StochasticMatrix::from_rows(
        vec![
            vec![(0, 1.0)],
            vec![(2, 1.0)],
            vec![(3, 1.0)],
            vec![(1, 1.0)],
        ],
        0,
        "perm".into(),
    )
    .unwrap();
    let v = mfpt_vector(&m).unwrap();
    assert!(v[1..].iter().all(|x| x.is_infinite()));
}

#[test]
fn mfpt_partially_infinite_when_some_states_escape_failure() {
    // state 1 can fall into the safe 2-cycle {2, 3}: every entry infinite
    // except... 1 reaches the cycle with positive probability, so it is
    // infinite too; state 4 always fails in one step and stays finite.
    let m = StochasticMatrix::from_rows(
        vec![
            vec![(0, 1.0)],
            vec![(0, 0.5), (2, 0.5)],
            vec![(3, 1.0)],
            vec![(2, 1.0)],
            vec![(0, 1.0)],
        ],
        0,
        "mixed".into(),
    )
    .unwrap();
    let v = mfpt_vector(&m).unwrap();
    assert!(v[1].is_infinite());
    assert!(v[2].is_infinite());
    assert!(v[3].is_infinite());
    assert!((v[4] - 1.0).abs() < 1e-12);
}

#[test]
fn mfpt_matches_dense_solve_and_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for round in 0..5 {
        let n_sub = rng.gen_range(10..=50);
        let chain = random_chain(&mut rng, n_sub, 0.15);
        let m = mfpt_vector(&chain).unwrap();

        // dense direct solve oracle
        let sub = chain.sub_dense();
        let mut a = nalgebra::DMatrix::identity(n_sub, n_sub);
        for i in 0..n_sub {
            for j in 0..n_sub {
                a[(i, j)] -= sub[i][j];
            }
        }
        let b = nalgebra::DVector::from_element(n_sub, 1.0);
        let dense = a.lu().solve(&b).unwrap();
        for i in 0..n_sub {
            let rel = (m[i + 1] - dense[i]).abs() / dense[i].abs();
            assert!(rel < 1e-9, "round {round} state {}: rel err {rel}", i + 1);
        }

        // Monte Carlo oracle from one fixed start
        let (mc_mean, mc_se) = mc_first_passage(&chain, 1, 150_000, 1_000_000, &mut rng);
        let diff = (m[1] - mc_mean).abs();
        assert!(
            diff <= 3.0 * mc_se + 1e-9,
            "round {round}: solver {} vs MC {mc_mean} (3SE = {})",
            m[1],
            3.0 * mc_se
        );
    }
}

#[test]
fn metastable_symmetric_two_state_is_uniform() {
    let m = StochasticMatrix::from_rows(
        vec![
            vec![(0, 1.0)],
            vec![(0, 0.1), (1, 0.45), (2, 0.45)],
            vec![(0, 0.1), (1, 0.45), (2, 0.45)],
        ],
        0,
        "sym".into(),
    )
    .unwrap();
    let phi = metastable_distribution(&m).unwrap();
    assert!((phi[0] - 0.5).abs() < 1e-9);
    assert!((phi[1] - 0.5).abs() < 1e-9);
}

#[test]
fn metastable_satisfies_eigenpair_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let n_sub = rng.gen_range(5..40);
        let chain = random_chain(&mut rng, n_sub, 0.05);
        let phi = metastable_distribution(&chain).unwrap();
        let (lam, _, _) = lambda2(&chain, 0.1).unwrap();
        let mut phit = vec![0.0; chain.n_sub()];
        chain.sub_matvec_t(&phi, &mut phit);
        let residual: f64 = phit
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - lam * b).abs())
            .sum();
        assert!(residual <= 1e-9, "residual {residual}");
        let total: f64 = phi.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(phi.iter().all(|p| *p >= 0.0));
    }
}

#[test]
fn metastable_matches_conditional_histogram_oracle() {
    // simulate the chain, discard failed runs, histogram states at step 200
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let chain = random_chain(&mut rng, 20, 0.001);
    let phi = metastable_distribution(&chain).unwrap();

    let cum = cumulative_rows(&chain);
    let episodes = 200_000;
    let horizon = 200;
    let mut counts = vec![0u64; chain.n()];
    let mut survivors = 0u64;
    for _ in 0..episodes {
        let mut state = 1usize;
        for _ in 0..horizon {
            if state == 0 {
                break;
            }
            state = sample_next(&cum[state], rng.gen::<f64>());
        }
        if state != 0 {
            survivors += 1;
            counts[state] += 1;
        }
    }
    assert!(survivors > 10_000, "chain too deadly for the oracle");
    for i in 1..chain.n() {
        let observed = counts[i] as f64 / survivors as f64;
        let se = (phi[i - 1] * (1.0 - phi[i - 1]) / survivors as f64)
            .sqrt()
            .max(1e-6);
        assert!(
            (observed - phi[i - 1]).abs() <= 3.0 * se + 1e-3,
            "state {i}: observed {observed} vs phi {} (3SE = {})",
            phi[i - 1],
            3.0 * se
        );
    }
}

#[test]
fn lambda2_single_state_block_is_exact() {
    let m = StochasticMatrix::from_rows(
        vec![vec![(0, 1.0)], vec![(0, 0.1), (1, 0.9)]],
        0,
        "geo".into(),
    )
    .unwrap();
    let (lam, lam3, _) = lambda2(&m, 0.1).unwrap();
    assert_eq!(lam, 0.9);
    assert_eq!(lam3, 0.0);
    assert!((mfpt_from_lambda2(lam) - 10.0).abs() < 1e-12);
}

#[test]
fn lambda2_matches_dense_eigensolver_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..6 {
        let n_sub = rng.gen_range(20..=100);
        let chain = random_chain(&mut rng, n_sub, 0.05);
        let (lam, _, _) = lambda2(&chain, 0.1).unwrap();
        let (lam_oracle, phi_oracle) = dense_spectral_oracle(&chain);
        assert!(
            (lam - lam_oracle).abs() < 1e-9,
            "lambda2 {lam} vs oracle {lam_oracle}"
        );
        let phi = metastable_distribution(&chain).unwrap();
        for (a, b) in phi.iter().zip(&phi_oracle) {
            assert!((a - b).abs() < 1e-8, "phi {a} vs oracle {b}");
        }
    }
}

#[test]
fn full_matrix_dominant_eigenvalue_is_one() {
    // structural: the absorbing row pins λ₁ = 1 on the full matrix
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let chain = random_chain(&mut rng, 12, 0.1);
    let n = chain.n();
    let full = nalgebra::DMatrix::from_fn(n, n, |i, j| chain.prob(i, j));
    let max_eig = full
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0f64, f64::max);
    assert!((max_eig - 1.0).abs() < 1e-12);
}

#[test]
fn eigen_mfpt_formula_regression() {
    // reported system MFPTs as formula fixtures
    assert!((mfpt_from_lambda2(1.0 - 1.0 / 117.0) - 117.0).abs() < 1e-9);
    assert!((mfpt_from_lambda2(1.0 - 1.0 / 32.0) - 32.0).abs() < 1e-9);
    assert!(mfpt_from_lambda2(1.0).is_infinite());
    assert!(mfpt_from_lambda2(1.0 - 1e-13).is_infinite());
}

#[test]
fn system_mfpt_weighted_sum_and_infinity() {
    assert_eq!(system_mfpt(&[1.0], &[0.0, 10.0]).unwrap(), 10.0);
    assert_eq!(
        system_mfpt(&[0.5, 0.5], &[0.0, 4.0, 6.0]).unwrap(),
        5.0
    );
    assert!(system_mfpt(&[0.5, 0.5], &[0.0, 4.0, f64::INFINITY])
        .unwrap()
        .is_infinite());
    // zero-weight infinite entries do not poison the sum
    assert_eq!(
        system_mfpt(&[1.0, 0.0], &[0.0, 4.0, f64::INFINITY]).unwrap(),
        4.0
    );
    assert!(system_mfpt(&[1.0], &[0.0, 1.0, 2.0]).is_err());
}

#[test]
fn exact_and_eigen_mfpt_agree_within_gap_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut checked = 0;
    for _ in 0..20 {
        let n_sub = rng.gen_range(5..60);
        let chain = random_chain(&mut rng, n_sub, 0.02);
        let s = spectral_summary(&chain).unwrap();
        if !s.gap_ok || !s.m_exact.is_finite() {
            continue;
        }
        checked += 1;
        let rel = (s.m_exact - s.m_eigen).abs() / s.m_exact;
        assert!(
            rel <= (1.0 - s.lambda2) + 1e-6,
            "rel {rel} vs bound {}",
            1.0 - s.lambda2
        );
    }
    assert!(checked > 0, "no chain had a usable spectral gap");
}

#[test]
fn system_mfpt_matches_phi_weighted_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let chain = random_chain(&mut rng, 15, 0.1);
    let s = spectral_summary(&chain).unwrap();

    // draw starts from phi, roll to failure
    let cum = cumulative_rows(&chain);
    let mut phi_cum = Vec::with_capacity(s.phi.len());
    let mut acc = 0.0;
    for (i, p) in s.phi.iter().enumerate() {
        acc += p;
        phi_cum.push((acc, i + 1));
    }
    let episodes = 200_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let mut state = sample_next(&phi_cum, rng.gen::<f64>());
        let mut steps = 0u64;
        while state != 0 && steps < 1_000_000 {
            state = sample_next(&cum[state], rng.gen::<f64>());
            steps += 1;
        }
        sum += steps as f64;
        sum_sq += (steps as f64) * (steps as f64);
    }
    let mean = sum / episodes as f64;
    let se = ((sum_sq / episodes as f64 - mean * mean).max(0.0) / episodes as f64).sqrt();
    assert!(
        (s.m_exact - mean).abs() <= 3.0 * se,
        "M_exact {} vs MC {mean} (3SE = {})",
        s.m_exact,
        3.0 * se
    );
}

#[test]
fn n_step_failure_probabilities() {
    assert!((n_step_failure_prob(0.9, 1).unwrap() - 0.1).abs() < 1e-15);
    assert!((n_step_failure_prob(0.9, 3).unwrap() - 0.081).abs() < 1e-15);
    assert!(n_step_failure_prob(1.1, 1).is_err());
    assert!(n_step_failure_prob(0.5, 0).is_err());

    // geometric series sums to 1
    for lam in [0.3, 0.9, 0.999] {
        let mut total = 0.0;
        let mut n = 1u64;
        loop {
            let p = n_step_failure_prob(lam, n).unwrap();
            total += p;
            if p < 1e-13 && n > 10 {
                break;
            }
            n += 1;
        }
        assert!((total - 1.0).abs() <= 1e-9, "lambda {lam}: sum {total}");
    }
}

#[test]
fn dangerous_states_thresholds_and_scan_oracle() {
    let m = StochasticMatrix::from_rows(
        vec![
            vec![(0, 1.0)],
            vec![(0, 1.0)],                  // always fails
            vec![(0, 0.99), (2, 0.01)],      // exactly at the threshold
            vec![(0, 0.995), (3, 0.005)],    // above
            vec![(1, 0.5), (4, 0.5)],        // never fails directly
        ],
        0,
        "danger".into(),
    )
    .unwrap();
    let d = dangerous_states(&m, 0.99).unwrap();
    assert_eq!(d, vec![1, 3], "strict inequality at the boundary");
    assert_eq!(dangerous_states(&m, 0.5).unwrap(), vec![1, 2, 3]);
    assert!(dangerous_states(&m, 0.0).is_err());
    assert!(dangerous_states(&m, 1.5).is_err());

    // scan oracle on random matrices
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..10 {
        let chain = random_chain(&mut rng, 30, 0.3);
        let got = dangerous_states(&chain, 0.4).unwrap();
        let expect: Vec<usize> = (1..chain.n())
            .filter(|&i| chain.prob(i, 0) > 0.4)
            .collect();
        assert_eq!(got, expect);
    }
}

#[test]
fn sensitivity_sweep_analytic_and_infinite_cases() {
    // disturbance B (index 2) kills from every state; null and A never fail
    let t = table(
        &[
            vec![1, 2, 0],
            vec![2, 1, 0],
            vec![3, 3, 0],
        ],
        3,
    );
    let base = profile(&[0.4, 0.3, 0.3]);
    let sweep = sensitivity_sweep(&t, 0, &base, &SweepWeights::default()).unwrap();
    assert_eq!(sweep.len(), 2);
    // interest = A: failure only via B at the remainder weight 0.1 -> M = 10
    let (d1, m1) = (&sweep[0].0, sweep[0].1.as_ref().unwrap());
    assert_eq!(*d1, 1);
    assert!((m1 - 10.0).abs() < 1e-9, "M = {m1}");
    // interest = B: every state fails with p_interest = 0.5 -> M = 2
    let (d2, m2) = (&sweep[1].0, sweep[1].1.as_ref().unwrap());
    assert_eq!(*d2, 2);
    assert!((m2 - 2.0).abs() < 1e-9, "M = {m2}");

    // every disturbance self-transitions: all infinite
    let t_self = table(&[vec![1, 1, 1], vec![2, 2, 2]], 3);
    let sweep = sensitivity_sweep(&t_self, 0, &profile(&[0.4, 0.3, 0.3]), &SweepWeights::default())
        .unwrap();
    for (_, m) in &sweep {
        assert!(m.as_ref().unwrap().is_infinite());
    }
}

#[test]
fn mixing_effect_two_harmless_disturbances_combine_to_fail() {
    // A maps state 1 into B's kill zone (state 2) and kills state 3;
    // B maps state 1 into A's kill zone (state 3) and kills state 2.
    let t = table(
        &[
            vec![1, 2, 3],
            vec![2, 1, 0],
            vec![3, 0, 1],
        ],
        3,
    );
    let m_a_only = {
        let m = assemble_stochastic(&t, 0, &profile(&[0.6, 0.4, 0.0])).unwrap();
        let s = spectral_summary(&m).unwrap();
        s.m_exact
    };
    let m_b_only = {
        let m = assemble_stochastic(&t, 0, &profile(&[0.6, 0.0, 0.4])).unwrap();
        let s = spectral_summary(&m).unwrap();
        s.m_exact
    };
    let m_mixed = {
        let m = assemble_stochastic(&t, 0, &profile(&[0.6, 0.2, 0.2])).unwrap();
        let s = spectral_summary(&m).unwrap();
        s.m_exact
    };
    assert!(m_a_only.is_infinite(), "A alone must never fail");
    assert!(m_b_only.is_infinite(), "B alone must never fail");
    assert!(m_mixed.is_finite(), "A+B must mix into failures");
    assert!(m_mixed > 1.0);
}

#[test]
fn more_null_mass_never_hurts_when_null_is_a_self_transition() {
    // provable monotone case: the null push holds every state in place, so
    // extra null mass only slows the embedded jump chain
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    for _ in 0..5 {
        let n_sub = rng.gen_range(3..20);
        let n_dist = 4;
        let rows: Vec<Vec<usize>> = (1..=n_sub)
            .map(|i| {
                let mut row = vec![i]; // null push: stay put
                for _ in 1..n_dist {
                    row.push(rng.gen_range(0..=n_sub));
                }
                row
            })
            .collect();
        let t = table(&rows, n_dist);
        let m_at = |p_null: f64| -> f64 {
            let share = (1.0 - p_null) / (n_dist - 1) as f64;
            let mut probs = vec![share; n_dist];
            probs[0] = p_null;
            let m = assemble_stochastic(&t, 0, &profile(&probs)).unwrap();
            let s = spectral_summary(&m).unwrap();
            s.m_exact
        };
        let lo = m_at(0.4);
        let hi = m_at(0.6);
        if lo.is_finite() {
            assert!(
                hi >= lo * (1.0 - 1e-9),
                "more null mass reduced MFPT: {lo} -> {hi}"
            );
        } else {
            assert!(hi.is_infinite());
        }
    }
}

#[test]
fn sparse_and_dense_mfpt_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let chain = random_chain(&mut rng, 400, 0.05);
    let iterative = mfpt_vector(&chain).unwrap();
    // force the dense path by making the iterative tolerance unreachable
    let opts = MfptOptions {
        tolerance: 0.0,
        dense_threshold: 2000,
    };
    let dense = mfpt_vector_with(&chain, &opts).unwrap();
    for (a, b) in iterative.iter().zip(&dense).skip(1) {
        let rel = (a - b).abs() / b.abs();
        assert!(rel < 1e-9, "{a} vs {b}");
    }
}
