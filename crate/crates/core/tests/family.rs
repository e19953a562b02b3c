use gaplm::{FamilyKind, QuasiFamily};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAMILIES: [FamilyKind; 3] = [FamilyKind::BinomialLogit, FamilyKind::GaussianIdentity, FamilyKind::PoissonLog];

fn random_point<R: Rng>(rng: &mut R, kind: FamilyKind) -> (f64, f64) {
    match kind {
        FamilyKind::BinomialLogit => (rng.random_range(-8.0..8.0), rng.random::<f64>()),
        FamilyKind::GaussianIdentity => (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)),
        FamilyKind::PoissonLog => (rng.random_range(-4.0..4.0), rng.random_range(0..30) as f64),
    }
}

#[test]
fn first_and_second_derivatives_match_finite_differences() {
    let h = 1e-5;
    for kind in FAMILIES {
        let fam = QuasiFamily::new(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(kind as u64 + 1);
        for _ in 0..1000 {
            let (m, y) = random_point(&mut rng, kind);
            let q = |m: f64| fam.eval_q(m, y).unwrap();
            let q1 = fam.eval_q1(m, y).unwrap();
            let fd1 = (q(m + h) - q(m - h)) / (2.0 * h);
            assert!((q1 - fd1).abs() <= 1e-6 * q1.abs().max(1.0), "{kind:?} m={m} y={y}: {q1} vs {fd1}");
            let q2 = fam.eval_q2(m, y).unwrap();
            let fd2 = (fam.eval_q1(m + h, y).unwrap() - fam.eval_q1(m - h, y).unwrap()) / (2.0 * h);
            assert!((q2 - fd2).abs() <= 1e-6 * q2.abs().max(1.0), "{kind:?} m={m} y={y}: {q2} vs {fd2}");
        }
    }
}

#[test]
fn deviance_of_perfect_fit_is_zero() {
    let fam = QuasiFamily::poisson();
    let y = [0.5, 1.0, 4.0, 9.0];
    assert!(fam.deviance(&y, &y).unwrap().abs() < 1e-12);
    assert!(fam.deviance(&y, &y[..3]).is_err());
}

proptest! {
    #[test]
    fn second_derivative_is_negative(m in -10.0f64..10.0, u in 0.0f64..1.0, k in 0usize..3) {
        let kind = FAMILIES[k];
        let y = match kind {
            FamilyKind::BinomialLogit => u,
            FamilyKind::GaussianIdentity => 20.0 * u - 10.0,
            FamilyKind::PoissonLog => (u * 20.0).floor(),
        };
        prop_assert!(QuasiFamily::new(kind).eval_q2(m, y).unwrap() < 0.0);
    }

    #[test]
    fn canonical_score_is_residual(m in -10.0f64..10.0, u in 0.0f64..1.0, logit in any::<bool>()) {
        let (fam, y) = if logit {
            (QuasiFamily::binomial(), u)
        } else {
            (QuasiFamily::poisson(), (u * 50.0).floor())
        };
        prop_assert!((fam.eval_rho(1, m).unwrap() - 1.0).abs() <= 1e-12);
        let residual = y - fam.mean(m);
        prop_assert!((fam.eval_q1(m, y).unwrap() - residual).abs() <= 1e-12 * residual.abs().max(1.0));
    }

    #[test]
    fn link_inverts_mean(m in -5.0f64..5.0, k in 0usize..3) {
        // beyond this the logistic mean rounds to 1 and the round trip loses digits
        let fam = QuasiFamily::new(FAMILIES[k]);
        let back = fam.linear_predictor(fam.mean(m));
        prop_assert!((back - m).abs() <= 1e-12, "{m} -> {back}");
    }

    #[test]
    fn deviance_is_nonnegative(ys in prop::collection::vec(0.0f64..1.0, 1..20), ms in prop::collection::vec(-5.0f64..5.0, 20)) {
        let fam = QuasiFamily::binomial();
        let mu: Vec<f64> = ms[..ys.len()].iter().map(|&m| fam.mean(m)).collect();
        prop_assert!(fam.deviance(&ys, &mu).unwrap() >= 0.0);
    }
}
