//! Simulation engine and replication study against distributional and
//! structural references.

use approx::assert_abs_diff_eq;
use ndarray::{arr2, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfcast::basis::{gram_matrix, project_onto_basis, synthesize};
use surfcast::far::FarVariant;
use surfcast::grid::mse;
use surfcast::linalg::frobenius;
use surfcast::rng::mix_seed;
use surfcast::simulate::{
    mvt_sample, run_study, simulate_far1, CiMethod, InnovationKind, SimulationConfig, StudyCase,
    StudyConfig,
};
use surfcast::stats::{clopper_pearson_ci99, normal_ci99};

fn small_sim(t_len: usize, seed: u64) -> SimulationConfig<f64> {
    SimulationConfig { n1: 12, n2: 12, t_len, seed, ..SimulationConfig::default() }
}

#[test]
fn names_round_trip() {
    assert_eq!(InnovationKind::parse("t"), Some(InnovationKind::StudentT));
    assert_eq!(InnovationKind::parse("student-t"), Some(InnovationKind::StudentT));
    assert_eq!(InnovationKind::parse("gaussian"), Some(InnovationKind::Gaussian));
    assert_eq!(InnovationKind::parse("normal"), Some(InnovationKind::Gaussian));
    assert_eq!(InnovationKind::parse("cauchy"), None);
    assert_eq!(InnovationKind::StudentT.name(), "t");
    assert_eq!(InnovationKind::Gaussian.name(), "gaussian");

    assert_eq!(CiMethod::parse("normal"), Some(CiMethod::Normal));
    assert_eq!(CiMethod::parse("exact"), Some(CiMethod::ClopperPearson));
    assert_eq!(CiMethod::parse("clopper-pearson"), Some(CiMethod::ClopperPearson));
    assert_eq!(CiMethod::Normal.name(), "normal");
    assert_eq!(CiMethod::ClopperPearson.name(), "exact");
}

#[test]
fn scaled_kernel_keeps_structure_and_target_norm() {
    let (ds, kernel) = simulate_far1(&small_sim(3, 5)).unwrap();
    let psi = kernel.psi();
    assert_eq!(psi.dim(), (25, 25));
    assert_abs_diff_eq!(frobenius(&psi.view()), 0.9, epsilon = 1e-12);

    // The unscaled matrix has 0.8 on the diagonal and 0.3 elsewhere, so its
    // squared norm is 25·0.64 + 600·0.09 = 70 and the common factor is
    // 0.9/sqrt(70).
    let factor = 0.9 / 70.0f64.sqrt();
    for i in 0..25 {
        for j in 0..25 {
            let want = if i == j { 0.8 * factor } else { 0.3 * factor };
            assert_abs_diff_eq!(psi[[i, j]], want, epsilon = 1e-14);
        }
    }

    // The stored quadrature matrix is the one computed on the same grid.
    let w = gram_matrix(kernel.basis(), ds.domain()).unwrap();
    assert_eq!(kernel.gram(), &w);
}

#[test]
fn frames_lie_in_the_basis_span() {
    let (ds, kernel) = simulate_far1(&small_sim(6, 11)).unwrap();
    let expansion = project_onto_basis(&ds, kernel.basis()).unwrap();
    let rebuilt = synthesize(&expansion, ds.domain()).unwrap();
    for t in 0..ds.t_len() {
        assert!(mse(ds.frame(t), rebuilt.frame(t)).unwrap() < 1e-18);
    }
}

#[test]
fn same_seed_reproduces_bitwise() {
    let (a, _) = simulate_far1(&small_sim(8, 77)).unwrap();
    let (b, _) = simulate_far1(&small_sim(8, 77)).unwrap();
    for t in 0..8 {
        assert_eq!(a.frame(t), b.frame(t));
    }
    let (c, _) = simulate_far1(&small_sim(8, 78)).unwrap();
    assert_ne!(a.frame(0), c.frame(0));
}

#[test]
fn warm_up_changes_the_recorded_segment_and_stays_bounded() {
    let cold = SimulationConfig { warm_up: 0, ..small_sim(100, 3) };
    let warm = SimulationConfig { warm_up: 50, ..small_sim(100, 3) };
    let (ds_cold, _) = simulate_far1(&cold).unwrap();
    let (ds_warm, _) = simulate_far1(&warm).unwrap();
    assert_ne!(ds_cold.frame(0), ds_warm.frame(0));
    for ds in [&ds_cold, &ds_warm] {
        for t in 0..ds.t_len() {
            for v in ds.frame(t).values() {
                assert!(v.is_finite());
                assert!(v.abs() < 1e3, "stationary series should stay bounded");
            }
        }
    }
}

#[test]
fn gaussian_sample_matches_first_two_moments() {
    let scale = arr2(&[[1.0, 0.5], [0.5, 2.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let n = 200_000usize;
    let mut sum = [0.0f64; 2];
    let mut cross = [[0.0f64; 2]; 2];
    for _ in 0..n {
        let x = mvt_sample(&scale.view(), None, &mut rng).unwrap();
        for i in 0..2 {
            sum[i] += x[i];
            for j in 0..2 {
                cross[i][j] += x[i] * x[j];
            }
        }
    }
    for i in 0..2 {
        assert_abs_diff_eq!(sum[i] / n as f64, 0.0, epsilon = 0.02);
        for j in 0..2 {
            assert_abs_diff_eq!(cross[i][j] / n as f64, scale[[i, j]], epsilon = 0.05);
        }
    }
}

#[test]
fn student_t_inflates_covariance_by_the_df_ratio() {
    // For df = 10 the covariance is df/(df-2) = 1.25 times the scale matrix.
    let scale = arr2(&[[1.0, 0.5], [0.5, 2.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(4321);
    let n = 200_000usize;
    let mut cross = [[0.0f64; 2]; 2];
    for _ in 0..n {
        let x = mvt_sample(&scale.view(), Some(10.0), &mut rng).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                cross[i][j] += x[i] * x[j];
            }
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            let got = cross[i][j] / n as f64;
            let want = 1.25 * scale[[i, j]];
            assert!((got - want).abs() < 0.05 * want.abs().max(1.0), "cov[{i}][{j}] = {got}, want {want}");
        }
    }
}

#[test]
fn student_t_quantile_matches_four_degrees_of_freedom() {
    // The 90th percentile of a standard t with 4 degrees of freedom is 1.5332.
    let scale = arr2(&[[1.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 100_000usize;
    let mut draws: Vec<f64> = (0..n)
        .map(|_| mvt_sample(&scale.view(), Some(4.0), &mut rng).unwrap()[0])
        .collect();
    draws.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let q90 = draws[(0.9 * n as f64) as usize];
    assert_abs_diff_eq!(q90, 1.5332, epsilon = 0.05);
    let mean = draws.iter().sum::<f64>() / n as f64;
    assert_abs_diff_eq!(mean, 0.0, epsilon = 0.05);
}

#[test]
fn sampler_rejects_bad_inputs() {
    let scale = arr2(&[[1.0, 0.5], [0.5, 2.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(mvt_sample(&scale.view(), Some(0.0), &mut rng).is_err());
    assert!(mvt_sample(&scale.view(), Some(-2.0), &mut rng).is_err());
    let indefinite = arr2(&[[1.0, 2.0], [2.0, 1.0]]);
    assert!(mvt_sample(&indefinite.view(), None, &mut rng).is_err());
}

#[test]
fn innovations_recovered_from_the_series_match_their_design() {
    // Project the frames back to coefficients (exact: frames lie in the
    // span), undo the recursion, and compare the innovation sample with the
    // structured covariance it was drawn from.
    let cfg = SimulationConfig {
        innovation: InnovationKind::Gaussian,
        ..small_sim(4000, 42)
    };
    let (ds, kernel) = simulate_far1(&cfg).unwrap();
    let coeffs = project_onto_basis(&ds, kernel.basis()).unwrap().coefficients().clone();
    let op = kernel.psi().dot(kernel.gram());
    let k = op.nrows();

    let count = ds.t_len() - 1;
    let mut eps = Array2::<f64>::zeros((count, k));
    for t in 1..ds.t_len() {
        let prev = coeffs.row(t - 1);
        let pred = op.dot(&prev);
        for j in 0..k {
            eps[[t - 1, j]] = coeffs[[t, j]] - pred[j];
        }
    }

    let mean = eps.sum_axis(ndarray::Axis(0)) / count as f64;
    for j in 0..k {
        assert_abs_diff_eq!(mean[j], 0.0, epsilon = 0.06);
    }
    let mut cov = Array2::<f64>::zeros((k, k));
    for row in eps.rows() {
        for i in 0..k {
            for j in 0..k {
                cov[[i, j]] += row[i] * row[j];
            }
        }
    }
    cov.mapv_inplace(|v| v / count as f64);
    let want = Array2::from_shape_fn((k, k), |(i, j)| if i == j { 0.5 } else { 0.3 });
    let diff = &cov - &want;
    let rel = frobenius(&diff.view()) / frobenius(&want.view());
    assert!(rel < 0.1, "innovation covariance off by {rel:.3} in relative norm");
}

fn smoke_study() -> StudyConfig<f64> {
    let mut cfg = StudyConfig::new(
        vec![FarVariant::Naive, FarVariant::Ek, FarVariant::Oracle],
        vec![StudyCase { t_len: 40, block_size: 1 }],
        5,
    );
    cfg.master_seed = 7;
    cfg.sim = small_sim(0, 0); // t_len and seed are overridden per replication
    cfg
}

#[test]
fn study_records_are_ordered_seeded_and_fully_accounted() {
    let cfg = smoke_study();
    let result = run_study(&cfg).unwrap();

    // Every (rep, method) shows up exactly once, in (rep, method-list) order.
    assert!(result.failures.is_empty(), "failures: {:?}", result.failures);
    assert_eq!(result.records.len(), 15);
    for (idx, r) in result.records.iter().enumerate() {
        let rep = idx / 3;
        let method = cfg.methods[idx % 3];
        assert_eq!(r.rep, rep);
        assert_eq!(r.method, method);
        assert_eq!(r.t_len, 40);
        assert_eq!(r.block_size, 1);
        assert_eq!(r.seed, mix_seed(cfg.master_seed, &[0, rep as u64]));
        assert!(r.band_size.is_finite() && r.band_size >= 0.0);
    }

    // Aggregates restate the records.
    assert_eq!(result.aggregates.len(), 3);
    for agg in &result.aggregates {
        let of_method: Vec<_> =
            result.records.iter().filter(|r| r.method == agg.method).collect();
        assert_eq!(agg.n_ok, of_method.len());
        assert_eq!(agg.n_failed, 0);
        let covered = of_method.iter().filter(|r| r.covered).count();
        assert_abs_diff_eq!(agg.coverage, covered as f64 / 5.0, epsilon = 1e-15);
        let mean_size =
            of_method.iter().map(|r| r.band_size).sum::<f64>() / of_method.len() as f64;
        assert_abs_diff_eq!(agg.mean_band_size, mean_size, epsilon = 1e-12);
        let (lo, hi) = normal_ci99(agg.coverage, agg.n_ok);
        assert_eq!((agg.ci_low, agg.ci_high), (lo, hi));
    }

    // Bitwise reproducibility.
    let again = run_study(&cfg).unwrap();
    assert_eq!(result, again);
}

#[test]
fn study_results_do_not_depend_on_thread_count() {
    let cfg = smoke_study();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_study(&cfg).unwrap());
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_study(&cfg).unwrap());
    assert_eq!(one, four);
}

#[test]
fn study_exact_intervals_come_from_the_binomial_tail() {
    let mut cfg = smoke_study();
    cfg.methods = vec![FarVariant::Naive];
    cfg.ci = CiMethod::ClopperPearson;
    let result = run_study(&cfg).unwrap();
    let agg = &result.aggregates[0];
    let covered = result.records.iter().filter(|r| r.covered).count();
    let (lo, hi) = clopper_pearson_ci99(covered, agg.n_ok);
    assert_eq!((agg.ci_low, agg.ci_high), (lo, hi));
}

#[test]
fn study_validates_its_shape() {
    let ok = smoke_study();
    let mut bad = ok.clone();
    bad.methods.clear();
    assert!(run_study(&bad).is_err());
    let mut bad = ok.clone();
    bad.cases.clear();
    assert!(run_study(&bad).is_err());
    let mut bad = ok.clone();
    bad.n_reps = 0;
    assert!(run_study(&bad).is_err());
    let mut bad = ok.clone();
    bad.cases = vec![StudyCase { t_len: 4, block_size: 1 }];
    assert!(run_study(&bad).is_err());
    let mut bad = ok;
    bad.cases = vec![StudyCase { t_len: 40, block_size: 0 }];
    assert!(run_study(&bad).is_err());
}

#[test]
fn normal_interval_hand_values() {
    let (lo, hi) = normal_ci99(0.9f64, 100);
    let half = 2.575_829_303_548_900_4 * (0.9f64 * 0.1 / 100.0).sqrt();
    assert_abs_diff_eq!(lo, 0.9 - half, epsilon = 1e-15);
    assert_abs_diff_eq!(hi, 0.9 + half, epsilon = 1e-15);

    let (lo, hi) = normal_ci99(0.99f64, 10);
    assert!(hi == 1.0, "clamped above");
    assert!(lo > 0.0);
    assert_eq!(normal_ci99(0.0f64, 50), (0.0, 0.0));
    assert_eq!(normal_ci99(0.5f64, 0), (0.0, 1.0));
}

/// Plain-float binomial CDF, independent of the library's log-space version.
fn binom_cdf(k: i64, n: usize, p: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let q = 1.0 - p;
    let mut term = q.powi(n as i32);
    let mut sum = term;
    for i in 0..(k as usize).min(n) {
        term *= ((n - i) as f64) / ((i + 1) as f64) * (p / q);
        sum += term;
    }
    sum.min(1.0)
}

#[test]
fn exact_interval_bounds_sit_on_the_tail_equations() {
    for &(k, n) in &[(45usize, 50usize), (3, 10), (29, 30), (1, 40)] {
        let (lo, hi) = clopper_pearson_ci99(k, n);
        assert!(lo < k as f64 / n as f64 && (k as f64 / n as f64) < hi);
        // P(X >= k | lo) = 0.005 and P(X <= k | hi) = 0.005.
        let upper_tail = 1.0 - binom_cdf(k as i64 - 1, n, lo);
        assert_abs_diff_eq!(upper_tail, 0.005, epsilon = 1e-6);
        let lower_tail = binom_cdf(k as i64, n, hi);
        assert_abs_diff_eq!(lower_tail, 0.005, epsilon = 1e-6);
    }
    let (lo, hi) = clopper_pearson_ci99(0, 20);
    assert_eq!(lo, 0.0);
    assert!(hi < 1.0);
    let (lo, hi) = clopper_pearson_ci99(20, 20);
    assert!(lo > 0.0);
    assert_eq!(hi, 1.0);

    // Bounds move monotonically with the success count.
    let mut last = (0.0, 0.0);
    for k in 0..=12 {
        let (lo, hi) = clopper_pearson_ci99(k, 12);
        assert!(lo >= last.0 && hi >= last.1);
        last = (lo, hi);
    }
}
