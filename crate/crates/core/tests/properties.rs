use crosspoint_core::spectral::{general_eigenvalues, symmetric_eigenvalues};
use crosspoint_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Random symmetric nonnegative matrix made diagonally dominant, so it is PD.
fn dominant_spd(n: usize, vals: &[f64], margin: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            a[(i, j)] = vals[k];
            a[(j, i)] = vals[k];
            k += 1;
        }
    }
    for i in 0..n {
        let row: f64 = a.row(i).sum();
        a[(i, i)] = row + margin;
    }
    a
}

fn spd_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..7).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0.0f64..1.0, n * (n - 1) / 2),
            0.05f64..2.0,
        )
            .prop_map(|(n, vals, margin)| dominant_spd(n, &vals, margin))
    })
}

fn quiet_policy(levels: usize, ratio: f64) -> DevicePolicy {
    DevicePolicy {
        num_levels: levels,
        ratio,
        noise: NoiseRule::None,
        ..DevicePolicy::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapping_is_idempotent_and_monotone(
        levels in 2usize..128,
        ratio in 2.0f64..1e4,
        t1 in 0.0f64..2e-4,
        t2 in 0.0f64..2e-4,
    ) {
        let ls = build_level_set(&quiet_policy(levels, ratio)).unwrap();
        let s1 = ls.snap(t1);
        prop_assert_eq!(ls.snap(s1), s1);
        prop_assert!(s1 == 0.0 || ls.levels().contains(&s1));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(ls.snap(lo) <= ls.snap(hi));
    }

    #[test]
    fn noiseless_programming_is_within_half_a_step(a in spd_strategy()) {
        let policy = quiet_policy(64, 1e3);
        let cm = program(&a, &policy).unwrap();
        let eff = read_effective(&cm);
        let gamma = cm.g0;
        let ls = build_level_set(&policy).unwrap();
        let step = (ls.levels()[1] - ls.levels()[0]) / gamma;
        for (orig, got) in a.iter().zip(eff.iter()) {
            // entries under the window floor may be rounded to the floor or to 0
            let floor = policy.g_min() / gamma;
            let tol = if *orig < floor { floor } else { 0.5 * step + 1e-12 };
            prop_assert!((orig - got).abs() <= tol, "{} vs {}", orig, got);
        }
    }

    #[test]
    fn noisy_devices_stay_in_window(a in spd_strategy(), seed in any::<u64>()) {
        let policy = DevicePolicy { seed, ..DevicePolicy::default() };
        let cm = program(&a, &policy).unwrap();
        let sigma = policy.sigma();
        for &g in cm.g.iter() {
            prop_assert!(g == 0.0
                || (g >= policy.g_min() - 3.0 * sigma - 1e-18
                    && g <= policy.g_max + 3.0 * sigma + 1e-18));
        }
    }

    #[test]
    fn eigenvalues_of_m_match_the_symmetrised_form(a in spd_strategy()) {
        let sys = build_feedback(&a).unwrap();
        // M = U A is similar to U^1/2 A U^1/2
        let sq = sys.u.map(f64::sqrt);
        let sym = DMatrix::from_diagonal(&sq) * &a * DMatrix::from_diagonal(&sq);
        let mut expect = symmetric_eigenvalues(&sym).unwrap();
        let mut got: Vec<f64> = general_eigenvalues(&sys.m).unwrap().iter().map(|c| c.re).collect();
        expect.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (e, g) in expect.iter().zip(&got) {
            prop_assert!((e - g).abs() <= 1e-9 * (1.0 + e.abs()));
        }
        let rep = spectral_report(&a).unwrap();
        prop_assert!(rep.lambda_m_min >= rep.u_min * rep.lambda_min_a * (1.0 - 1e-10));
    }

    #[test]
    fn circuit_converges_to_the_direct_solution(
        a in spd_strategy(),
        seed in any::<u64>(),
    ) {
        let n = a.nrows();
        let b = random_vector(n, seed, -1.0, 1.0).unwrap();
        let cfg = SolveConfig { epsilon: 1e-6, ..SolveConfig::default() };
        let circuit = Circuit::new(build_feedback(&a).unwrap(), OpAmpModel::default(), cfg).unwrap();
        let res = circuit.solve(&b).unwrap();
        prop_assert!(res.converged);
        prop_assert!((&res.x_final - &res.x_star).norm() <= 1e-6);
        let direct = direct_solve(&a, &b).unwrap();
        prop_assert!((&direct - &res.x_star).norm() <= 1e-9 * (1.0 + direct.norm()));
    }

    #[test]
    fn fixed_point_is_stationary(a in spd_strategy(), seed in any::<u64>()) {
        let n = a.nrows();
        let b = random_vector(n, seed, -1.0, 1.0).unwrap();
        let cfg = SolveConfig { epsilon: 1e-9, max_steps: 1, ..SolveConfig::default() };
        let circuit = Circuit::new(build_feedback(&a).unwrap(), OpAmpModel::default(), cfg).unwrap();
        let x_star = circuit.direct_solve(&b).unwrap();
        let res = circuit.solve_from(&b, &x_star).unwrap();
        prop_assert!((&res.x_final - &x_star).norm() <= 1e-12 * (1.0 + x_star.norm()));
    }

    #[test]
    fn a_norm_error_never_grows(a in spd_strategy(), seed in any::<u64>()) {
        let n = a.nrows();
        let b = random_vector(n, seed, -1.0, 1.0).unwrap();
        let cfg = SolveConfig {
            epsilon: 1e-8,
            norm: NormKind::ANorm,
            record_trace: true,
            ..SolveConfig::default()
        };
        let circuit = Circuit::new(build_feedback(&a).unwrap(), OpAmpModel::default(), cfg).unwrap();
        let res = circuit.solve(&b).unwrap();
        let trace = res.trace.unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1].error <= w[0].error * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn measured_time_respects_the_bound(a in spd_strategy(), seed in any::<u64>()) {
        let n = a.nrows();
        let b = random_vector(n, seed, -1.0, 1.0).unwrap();
        let oa = OpAmpModel::default();
        let sys = build_feedback(&a).unwrap();
        let cfg = SolveConfig { epsilon: 1e-4, norm: NormKind::ANorm, ..SolveConfig::default() };
        let res = Circuit::new(sys.clone(), oa, cfg).unwrap().solve(&b).unwrap();
        let bound = time_bound(&sys, &b, 1e-4, &oa).unwrap();
        prop_assert!(res.tau <= bound * (1.0 + 1e-9) + res.dt);
    }

    #[test]
    fn sparse_generator_meets_its_contract(
        n in 2usize..60,
        s_frac in 0.0f64..1.0,
        lambda in 0.01f64..2.0,
        seed in any::<u64>(),
    ) {
        let s = 1 + ((n - 1) as f64 * s_frac) as usize;
        let a = sparse_pd(&SparsePdSpec { n, s, lambda_target: lambda, seed }).unwrap();
        prop_assert!(is_symmetric(&a, 0.0));
        prop_assert!(a.iter().all(|v| *v >= 0.0));
        for i in 0..n {
            let nnz = a.row(i).iter().filter(|v| **v != 0.0).count();
            prop_assert!(nnz <= s);
        }
        let eig = symmetric_eigenvalues(&a).unwrap();
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((min - lambda).abs() <= 1e-9 * (1.0 + a.amax()));
    }

    #[test]
    fn covariance_matrices_are_pd(n in 2usize..40, beta in 0.2f64..4.0) {
        let a = covariance_matrix(&CovarianceSpec { n, beta }).unwrap();
        prop_assert!(is_symmetric(&a, 0.0));
        let eig = symmetric_eigenvalues(&a).unwrap();
        prop_assert!(eig.iter().all(|l| *l > 0.0));
    }

    #[test]
    fn cg_agrees_with_direct_solve(a in spd_strategy(), seed in any::<u64>()) {
        let n = a.nrows();
        let b = random_vector(n, seed, -1.0, 1.0).unwrap();
        let cg = conjugate_gradient(&a, &b, 1e-12, 10 * n).unwrap();
        let direct = direct_solve(&a, &b).unwrap();
        prop_assert!(cg.converged);
        prop_assert!((&cg.x - &direct).norm() <= 1e-6 * (1.0 + direct.norm()));
    }

    #[test]
    fn scaling_fit_recovers_clean_models(
        c0 in 0.5f64..2.0,
        c1 in 0.5f64..2.0,
        which in 0usize..3,
    ) {
        let sizes = [3.0, 10.0, 30.0, 100.0, 300.0];
        let f = |n: f64| match which {
            0 => c0,
            1 => c0 + c1 * n.ln(),
            _ => c0 + c1 * n,
        };
        let pts: Vec<(f64, f64)> = sizes.iter().map(|&n| (n, f(n))).collect();
        let fit = fit_scaling(&pts).unwrap();
        let expect = [ModelKind::Constant, ModelKind::Logarithmic, ModelKind::Linear][which];
        prop_assert_eq!(fit.model_kind, expect);
    }
}

#[test]
fn unit_rhs_keeps_vector_bounds() {
    let v = random_vector(1000, 9, -1.0, 1.0).unwrap();
    assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
    let same = random_vector(1000, 9, -1.0, 1.0).unwrap();
    assert_eq!(v, same);
    assert_ne!(v, DVector::zeros(1000));
}
