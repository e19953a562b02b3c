mod common;

use common::*;
use gaplm::{AdditiveSplineBasis, Dataset, FamilyKind, FitOptions, KnotPlacement, QuasiFamily, Scale};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn matches_irls_without_splines() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for kind in [FamilyKind::BinomialLogit, FamilyKind::PoissonLog] {
        for _ in 0..20 {
            let n = rng.random_range(60..150);
            let d2 = rng.random_range(1..5);
            let data = random_glm(&mut rng, n, d2, kind);
            let fit = gaplm::fit(&data, &no_splines(&data), &QuasiFamily::new(kind), &FitOptions::default()).unwrap();
            let (beta, cov) = irls(&intercept_design(&data), &data.y, kind);
            assert!(fit.converged);
            assert!((fit.intercept - beta[0]).abs() <= 1e-8, "{kind:?} {} {} iters={} score={}", fit.intercept, beta[0], fit.iterations, fit.score_norm);
            assert_close(&fit.beta_hat, &beta.as_slice()[1..], 1e-8);
            for i in 0..d2 {
                for j in 0..d2 {
                    assert!((fit.beta_covariance[(i, j)] - cov[(i + 1, j + 1)]).abs() <= 1e-8);
                }
            }
        }
    }
}

fn smooth_data(seed: u64, n: usize) -> (Dataset, AdditiveSplineBasis) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_gaplm(&mut rng, n, &[1.0, -0.5, 0.0]);
    let (basis, _) = AdditiveSplineBasis::from_knot_counts(&data, &[3], 4, KnotPlacement::Quantile).unwrap();
    (data, basis)
}

#[test]
fn gaussian_fit_solves_normal_equations() {
    let (mut data, basis) = smooth_data(11, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    data.y.iter_mut().for_each(|y| *y += rng.random::<f64>() * 3.0);
    let fit = gaplm::fit(&data, &basis, &QuasiFamily::gaussian(), &FitOptions::default()).unwrap();
    let (x, _) = gaplm::design_matrix(&data, &basis);
    let xtx = x.transpose() * &x;
    let coef = xtx.lu().solve(&(x.transpose() * DVector::from_column_slice(&data.y))).unwrap();
    assert_close(&fit.coefficients, coef.as_slice(), 1e-10);
}

#[test]
fn pima_logistic_baseline() {
    let linear = ["NumPreg", "DBP", "DPF", "PGC", "BMI", "AGE"];
    let (data, basis) = pima(&linear, &[], &[]);
    assert_eq!(data.n(), 724);
    let fit = gaplm::fit(&data, &basis, &QuasiFamily::binomial(), &FitOptions::default()).unwrap();
    let published = [0.118, -0.009, 0.961, 0.035, 0.091, 0.017];
    let published_se = [0.033, 0.009, 0.306, 0.004, 0.016, 0.01];
    assert_close(&fit.beta_hat, &published, 0.005);
    assert_close(&fit.beta_se(), &published_se, 0.005);
}

#[test]
fn quasi_likelihood_never_decreases() {
    for seed in 0..10 {
        let (data, basis) = smooth_data(seed, 150);
        let fit = gaplm::fit(&data, &basis, &QuasiFamily::binomial(), &FitOptions::default()).unwrap();
        assert!(fit.history.len() >= 2);
        for w in fit.history.windows(2) {
            assert!(w[1] >= w[0], "{:?}", fit.history);
        }
    }
}

#[test]
fn score_vanishes_at_convergence() {
    let (data, basis) = smooth_data(13, 300);
    let family = QuasiFamily::binomial();
    let fit = gaplm::fit(&data, &basis, &family, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let (x, _) = gaplm::design_matrix(&data, &basis);
    let m = &x * DVector::from_column_slice(&fit.coefficients);
    let q1 = DVector::from_fn(data.n(), |i, _| family.eval_q1(m[i], data.y[i]).unwrap());
    let score = x.transpose() * q1 / data.n() as f64;
    assert!(score.amax() <= 1e-8, "{}", score.amax());
}

#[test]
fn covariance_is_symmetric_psd() {
    let (data, basis) = smooth_data(14, 300);
    let fit = gaplm::fit(&data, &basis, &QuasiFamily::binomial(), &FitOptions::default()).unwrap();
    let c = &fit.beta_covariance;
    assert!((c - c.transpose()).amax() <= 1e-12);
    assert!(c.clone().symmetric_eigenvalues().iter().all(|&e| e >= -1e-12));
}

#[test]
fn duplicating_rows_halves_variances() {
    let (data, basis) = smooth_data(15, 200);
    let family = QuasiFamily::binomial();
    let once = gaplm::fit(&data, &basis, &family, &FitOptions::default()).unwrap();
    let doubled = data.duplicated();
    let basis2 = AdditiveSplineBasis::build(&doubled, basis.knots.clone()).unwrap();
    let twice = gaplm::fit(&doubled, &basis2, &family, &FitOptions::default()).unwrap();
    assert_close(&twice.beta_hat, &once.beta_hat, 1e-8);
    for (a, b) in twice.beta_covariance.iter().zip(once.beta_covariance.iter()) {
        assert!((a / b - 0.5).abs() <= 1e-10, "{a} {b}");
    }
}

#[test]
fn mean_response_is_matched_for_canonical_links() {
    for kind in [FamilyKind::BinomialLogit, FamilyKind::PoissonLog, FamilyKind::GaussianIdentity] {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut data = random_glm(&mut rng, 200, 2, kind);
        let x: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        data = Dataset::new(data.y, vec![x], data.z).unwrap();
        let (basis, _) = AdditiveSplineBasis::from_knot_counts(&data, &[2], 4, KnotPlacement::Quantile).unwrap();
        let fit = gaplm::fit(&data, &basis, &QuasiFamily::new(kind), &FitOptions::default()).unwrap();
        let ybar = data.y.iter().sum::<f64>() / 200.0;
        let mubar = fit.fitted.iter().sum::<f64>() / 200.0;
        assert!((mubar - ybar).abs() <= 1e-8, "{kind:?}");
        if kind == FamilyKind::GaussianIdentity {
            let mbar = fit.linear_predictor.iter().sum::<f64>() / 200.0;
            assert!((mbar - ybar).abs() <= 1e-8);
        }
    }
}

fn original_x(data: &Dataset, k: usize, i: usize) -> f64 {
    let (lo, hi) = data.x_ranges[k];
    lo + data.x[k][i] * (hi - lo)
}

#[test]
fn predictions_reproduce_training_rows_and_decompose() {
    let (data, basis) = smooth_data(17, 250);
    let fit = gaplm::fit(&data, &basis, &QuasiFamily::binomial(), &FitOptions::default()).unwrap();
    let xs: Vec<f64> = (0..data.n()).map(|i| original_x(&data, 0, i)).collect();
    let comp = gaplm::component(&fit, &basis, 0, &xs).unwrap();
    assert!((comp.iter().sum::<f64>() / data.n() as f64).abs() <= 1e-10);
    for i in 0..data.n() {
        let z = data.z_row(i);
        let p = gaplm::predict(&fit, &basis, &[xs[i]], &z, Scale::Linear).unwrap();
        assert!(!p.extrapolated);
        assert!((p.value - fit.linear_predictor[i]).abs() <= 1e-12);
        let mean = gaplm::predict(&fit, &basis, &[xs[i]], &z, Scale::Mean).unwrap();
        assert_eq!(mean.value, fit.family.mean(p.value));
        let linear: f64 = z.iter().zip(&fit.beta_hat).map(|(a, b)| a * b).sum();
        assert!((comp[i] + linear + fit.intercept - fit.linear_predictor[i]).abs() <= 1e-9);
    }
    let mut flat = fit.clone();
    flat.gamma_hat.iter_mut().for_each(|g| *g = 0.0);
    assert!(gaplm::component(&flat, &basis, 0, &xs[..10]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn recovers_a_linear_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let n = 5000;
    let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let m = 2.0 * x[i] - 1.0 + z[i];
            (rng.random::<f64>() < 1.0 / (1.0 + (-m).exp())) as u8 as f64
        })
        .collect();
    let data = Dataset::new(y, vec![x], vec![z]).unwrap();
    let (basis, _) = AdditiveSplineBasis::from_knot_counts(&data, &[2], 4, KnotPlacement::Quantile).unwrap();
    let fit = gaplm::fit(&data, &basis, &QuasiFamily::binomial(), &FitOptions::default()).unwrap();
    let (lo, hi) = data.x_ranges[0];
    let grid: Vec<f64> = (0..=20).map(|g| lo + (hi - lo) * g as f64 / 20.0).collect();
    let values = gaplm::component(&fit, &basis, 0, &grid).unwrap();
    let gm = grid.iter().sum::<f64>() / grid.len() as f64;
    let vm = values.iter().sum::<f64>() / values.len() as f64;
    let slope = grid.iter().zip(&values).map(|(g, v)| (g - gm) * (v - vm)).sum::<f64>()
        / grid.iter().map(|g| (g - gm).powi(2)).sum::<f64>();
    // x already spans [0, 1] up to sampling, so the slope is in unit terms
    assert!((slope / (hi - lo) - 2.0).abs() <= 0.2, "{slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn rescaling_a_linear_covariate(seed in 0u64..1000, c in prop_oneof![0.01f64..0.5, 2.0f64..100.0], j in 0usize..3) {
        let (data, basis) = smooth_data(seed, 200);
        let family = QuasiFamily::binomial();
        let fit = gaplm::fit(&data, &basis, &family, &FitOptions::default()).unwrap();
        let mut scaled = data.clone();
        scaled.z[j].iter_mut().for_each(|v| *v *= c);
        let refit = gaplm::fit(&scaled, &basis, &family, &FitOptions::default()).unwrap();
        // coefficients are pinned down to the score tolerance, fitted means much tighter
        prop_assert!((refit.beta_hat[j] * c - fit.beta_hat[j]).abs() <= 1e-6 * fit.beta_hat[j].abs().max(1.0));
        for (a, b) in refit.fitted.iter().zip(&fit.fitted) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }
}
