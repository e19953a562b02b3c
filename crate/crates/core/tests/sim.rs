use gaplm::sim::{self, KnotChoice, Method, Scenario, Truth};
use gaplm::SimConfig;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    cov(a, b) / (cov(a, a) * cov(b, b)).sqrt()
}

#[test]
fn first_scenario_covariate_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (data, truth) = sim::generate_s1(&mut rng, 10_000).unwrap();
    assert_eq!(truth.beta, vec![3.0, 1.5, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    assert_eq!(truth.zero_indices(), vec![2, 3, 4, 5, 7]);
    assert!((mean(&data.z[0]) - 0.5).abs() <= 0.01);
    assert!((cov(&data.z[0], &data.z[0]) - 0.09).abs() <= 0.005);
    assert!((corr(&data.z[0], &data.z[1]) - 0.5).abs() <= 0.03);
    for k in 0..2 {
        assert!(data.x[k].iter().all(|&u| (0.0..=1.0).contains(&u)));
    }
}

#[test]
fn second_scenario_covariate_moments() {
    for rho in [0.5, 0.7] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (data, truth) = sim::generate_s2(&mut rng, 10_000, rho).unwrap();
        assert_eq!(truth.beta.len(), 3);
        assert!((mean(&data.z[2]) - 0.5).abs() <= 0.02);
        assert!((corr(&data.z[0], &data.z[1]) - rho).abs() <= 0.03);
        assert!(mean(&data.z[0]).abs() <= 0.01);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(sim::generate_s2(&mut rng, 10, 1.0).is_err());
}

#[test]
fn centered_second_component_has_zero_grid_mean() {
    let grid = 100_000;
    let avg = (0..grid).map(|g| sim::true_component(1, (g as f64 + 0.5) / grid as f64)).sum::<f64>() / grid as f64;
    assert!(avg.abs() <= 1e-6, "{avg}");
}

#[test]
fn second_moment_matches_monte_carlo() {
    let draws = 1_000_000;
    for (scenario, d) in [(Scenario::S1, 8), (Scenario::S2, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (data, _) = sim::generate(&mut rng, scenario, draws, 0.5).unwrap();
        let empirical = DMatrix::from_fn(d, d, |i, j| {
            data.z[i].iter().zip(&data.z[j]).map(|(a, b)| a * b).sum::<f64>() / draws as f64
        });
        let exact = sim::second_moment(scenario, 0.5);
        let gap = (&empirical - &exact).amax();
        assert!(gap <= 0.003, "{scenario:?}: {gap}");
    }
}

fn truth_with(m: Vec<f64>) -> Truth {
    Truth { scenario: Scenario::S1, beta: Scenario::S1.beta(), m, eta: Vec::new() }
}

#[test]
fn prediction_error_examples() {
    let m = vec![-1.0, 0.0, 2.0];
    let truth = truth_with(m.clone());
    assert_eq!(sim::prediction_error(&m, &truth), 0.0);
    let shifted: Vec<f64> = m.iter().map(|v| v + 0.5).collect();
    let p = |x: f64| 1.0 / (1.0 + (-x).exp());
    let direct = m.iter().map(|&v| (p(v + 0.5) - p(v)).powi(2)).sum::<f64>() / 3.0;
    let pe = sim::prediction_error(&shifted, &truth);
    assert!(pe > 0.0 && (pe - direct).abs() <= 1e-15);
}

#[test]
fn model_error_examples() {
    let beta = [1.0, -2.0, 0.5];
    assert_eq!(sim::model_error(&beta, &beta, &DMatrix::identity(3, 3)).unwrap(), 0.0);
    let me = sim::model_error(&[2.0, 0.0, 0.5], &beta, &DMatrix::identity(3, 3)).unwrap();
    assert!((me - 5.0).abs() <= 1e-15);
    assert!(sim::model_error(&beta[..2], &beta, &DMatrix::identity(3, 3)).is_err());
}

fn small_config(reps: usize, methods: Vec<Method>) -> SimConfig {
    let mut cfg = SimConfig::new(Scenario::S1, 120, reps, 314);
    cfg.knots = KnotChoice::Fixed { knots: vec![1, 1] };
    cfg.methods = methods;
    cfg.lambda_grid = gaplm::select::log_grid(1e-2, 10.0, 10);
    cfg
}

#[test]
fn runs_are_reproducible_and_replicates_independent() {
    let all = vec![Method::Oracle, Method::Scad, Method::Lasso, Method::Bic];
    let a = gaplm::run_monte_carlo(&small_config(4, all.clone())).unwrap();
    let b = gaplm::run_monte_carlo(&small_config(4, all.clone())).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let shorter = gaplm::run_monte_carlo(&small_config(2, all)).unwrap();
    for (x, y) in shorter.replicates.iter().zip(&a.replicates) {
        assert_eq!(format!("{x:?}"), format!("{y:?}"));
    }
}

#[test]
fn zero_counts_add_up() {
    let s = gaplm::run_monte_carlo(&small_config(3, vec![Method::Oracle, Method::Scad, Method::Lasso])).unwrap();
    assert_eq!(s.true_zeros, 5);
    for r in &s.replicates {
        for m in &r.methods {
            let kept_zeros = [2, 3, 4, 5, 7].iter().filter(|&&j| m.beta[j] != 0.0).count();
            assert_eq!(m.correct_zeros + kept_zeros, 5);
            assert!(m.incorrect_zeros <= 3);
            if m.method == Method::Oracle {
                assert_eq!((m.correct_zeros, m.incorrect_zeros), (5, 0));
            }
        }
    }
    for m in &s.methods {
        assert!((0.0..=5.0).contains(&m.c) && (0.0..=3.0).contains(&m.i));
    }
}

#[test]
fn oracle_beats_the_unpenalized_fit_in_median_model_error() {
    let mut cfg = small_config(100, vec![Method::Oracle]);
    cfg.n = 200;
    let s = gaplm::run_monte_carlo(&cfg).unwrap();
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) }
    };
    let used: Vec<_> = s.replicates.iter().filter(|r| !r.methods.is_empty() && r.unpenalized_me.is_finite()).collect();
    assert!(used.len() >= 90, "only {} replicates fitted", used.len());
    let oracle = median(used.iter().map(|r| r.methods[0].model_error).collect());
    let full = median(used.iter().map(|r| r.unpenalized_me).collect());
    assert!(oracle <= full, "{oracle} > {full}");
}

#[test]
fn knot_search_with_one_candidate_returns_it() {
    let mut rng = sim::replicate_rng(5, 0);
    let (data, truth) = sim::generate_s1(&mut rng, 150).unwrap();
    let sel = sim::select_knots(
        &data,
        &gaplm::QuasiFamily::binomial(),
        &[vec![3], vec![1]],
        sim::KnotCriterion::Pe(&truth),
        4,
        gaplm::KnotPlacement::Quantile,
        &gaplm::FitOptions::default(),
    )
    .unwrap();
    assert_eq!(sel.knots, vec![3, 1]);
}

#[test]
fn prediction_error_shrinks_with_sample_size() {
    let median_pe = |n: usize| {
        let mut cfg = SimConfig::new(Scenario::S1, n, 20, 77);
        cfg.methods = vec![Method::Oracle];
        let s = gaplm::run_monte_carlo(&cfg).unwrap();
        let mut pe: Vec<f64> = s.replicates.iter().map(|r| r.unpenalized_pe).filter(|p| p.is_finite()).collect();
        pe.sort_by(f64::total_cmp);
        pe[pe.len() / 2]
    };
    let (small, large) = (median_pe(100), median_pe(400));
    assert!(large < small, "{small} -> {large}");
}
