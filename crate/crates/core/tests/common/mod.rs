#![allow(dead_code)]

use std::path::PathBuf;

use gaplm::{AdditiveSplineBasis, Dataset, FamilyKind, KnotPlacement, ModelSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const PIMA_LINEAR: [&str; 4] = ["NumPreg", "DBP", "DPF", "PGC"];
pub const PIMA_SMOOTH: [&str; 2] = ["BMI", "AGE"];

pub fn pima_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pima.csv")
}

pub fn pima(linear: &[&str], nonparametric: &[&str], knots: &[usize]) -> (Dataset, AdditiveSplineBasis) {
    let spec = ModelSpec {
        response: "Diabetes".into(),
        linear: linear.iter().map(|s| s.to_string()).collect(),
        nonparametric: nonparametric.iter().map(|s| s.to_string()).collect(),
        family: FamilyKind::BinomialLogit,
        knots: knots.to_vec(),
        ..ModelSpec::default()
    };
    let data = gaplm::ingest_csv(pima_path(), &spec).expect("bundled data reads").data;
    let (basis, _) =
        AdditiveSplineBasis::from_knot_counts(&data, &spec.knot_counts().unwrap(), 4, KnotPlacement::Quantile)
            .unwrap();
    (data, basis)
}

pub fn no_splines(data: &Dataset) -> AdditiveSplineBasis {
    AdditiveSplineBasis::from_knot_counts(data, &[], 4, KnotPlacement::Quantile).unwrap().0
}

/// Plain IRLS on a design that already holds every column, written from the
/// textbook recursion without sharing code with the library.
pub fn irls(x: &DMatrix<f64>, y: &[f64], kind: FamilyKind) -> (DVector<f64>, DMatrix<f64>) {
    let inv = |m: f64| match kind {
        FamilyKind::BinomialLogit => 1.0 / (1.0 + (-m).exp()),
        FamilyKind::PoissonLog => m.exp(),
        FamilyKind::GaussianIdentity => m,
    };
    let weight = |mu: f64| match kind {
        FamilyKind::BinomialLogit => mu * (1.0 - mu),
        FamilyKind::PoissonLog => mu,
        FamilyKind::GaussianIdentity => 1.0,
    };
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(x.ncols());
    let mut xtwx;
    for _ in 0..200 {
        let eta = x * &beta;
        let mu = eta.map(inv);
        let w = mu.map(weight);
        let z = DVector::from_fn(y.len(), |i, _| eta[i] + (yv[i] - mu[i]) / w[i]);
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        xtwx = x.transpose() * &xw;
        let next = xtwx.clone().lu().solve(&(xw.transpose() * z)).expect("oracle system solvable");
        let change = (&next - &beta).amax();
        beta = next;
        if change < 1e-13 {
            break;
        }
    }
    let eta = x * &beta;
    let w = eta.map(|m| weight(inv(m)));
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    xtwx = x.transpose() * xw;
    let cov = xtwx.try_inverse().expect("oracle information invertible");
    (beta, cov)
}

/// `[1 | z]` for the oracle.
pub fn intercept_design(data: &Dataset) -> DMatrix<f64> {
    DMatrix::from_fn(data.n(), data.d2() + 1, |i, j| if j == 0 { 1.0 } else { data.z[j - 1][i] })
}

/// Small GLM dataset with `d2` normal covariates and no smooth terms.
pub fn random_glm<R: Rng>(rng: &mut R, n: usize, d2: usize, kind: FamilyKind) -> Dataset {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let z: Vec<Vec<f64>> = (0..d2).map(|_| (0..n).map(|_| normal.sample(rng)).collect()).collect();
    let beta: Vec<f64> = (0..d2).map(|j| 0.5 - 0.3 * j as f64).collect();
    let y = (0..n)
        .map(|i| {
            let m = 0.2 + (0..d2).map(|j| beta[j] * z[j][i]).sum::<f64>();
            match kind {
                FamilyKind::BinomialLogit => (rng.random::<f64>() < 1.0 / (1.0 + (-m).exp())) as u8 as f64,
                FamilyKind::PoissonLog => rand_distr::Poisson::new(m.exp()).unwrap().sample(rng),
                FamilyKind::GaussianIdentity => m + normal.sample(rng),
            }
        })
        .collect();
    Dataset::new(y, Vec::new(), z).unwrap()
}

/// One smooth covariate and `d2` linear ones under a logistic model.
pub fn random_gaplm<R: Rng>(rng: &mut R, n: usize, beta: &[f64]) -> Dataset {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let z: Vec<Vec<f64>> = beta.iter().map(|_| (0..n).map(|_| normal.sample(rng)).collect()).collect();
    let y = (0..n)
        .map(|i| {
            let m = (2.0 * std::f64::consts::PI * x[i]).sin()
                + beta.iter().enumerate().map(|(j, b)| b * z[j][i]).sum::<f64>();
            (rng.random::<f64>() < 1.0 / (1.0 + (-m).exp())) as u8 as f64
        })
        .collect();
    Dataset::new(y, vec![x], z).unwrap()
}
