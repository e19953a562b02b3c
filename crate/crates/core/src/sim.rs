//! Monte Carlo harness for the selection procedures.
//!
//! Two logistic data generators are provided. Both draw a latent Gaussian
//! vector with AR(1) correlation and transform its coordinates to the
//! required marginals: nonparametric covariates become Uniform(0, 1) through
//! the standard normal CDF, continuous linear covariates are affine images
//! of the latent coordinates.
//!
//! Replicate `r` draws from `ChaCha20Rng::seed_from_u64(seed)` switched to
//! stream `r`, so each replicate depends only on the master seed and its own
//! index.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{GaplmError, Result};
use crate::family::QuasiFamily;
use crate::fit::{self, component_values, FitOptions, GaplmFit};
use crate::select::{self, PenaltyKind, SelectOptions, DEFAULT_SCAD_A};
use crate::spline::{quantile_sorted, AdditiveSplineBasis, KnotPlacement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Eight linear covariates, three of them active.
    S1,
    /// Three active linear covariates, one of them binary, correlation `rho`.
    S2,
}

impl FromStr for Scenario {
    type Err = GaplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1" => Ok(Scenario::S1),
            "s2" => Ok(Scenario::S2),
            other => Err(GaplmError::Config(format!("unknown scenario `{other}`; expected s1 or s2"))),
        }
    }
}

impl Scenario {
    pub fn beta(self) -> Vec<f64> {
        match self {
            Scenario::S1 => vec![3.0, 1.5, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0],
            Scenario::S2 => vec![3.0, 1.5, 2.0],
        }
    }

    /// Latent correlation of the first scenario.
    pub const S1_RHO: f64 = 0.5;
}

pub fn eta1(u: f64) -> f64 {
    (4.0 * PI * u).sin()
}

pub fn eta2_uncentered(u: f64) -> f64 {
    10.0 * ((-3.25 * u).exp() + 4.0 * (-6.5 * u).exp() + 3.0 * (-9.75 * u).exp())
}

/// Mean of [`eta2_uncentered`] under Uniform(0, 1).
pub fn eta2_mean() -> f64 {
    let term = |rate: f64| (1.0 - (-rate).exp()) / rate;
    10.0 * (term(3.25) + 4.0 * term(6.5) + 3.0 * term(9.75))
}

/// True component `k` (zero-based), centered to mean zero under
/// Uniform(0, 1). `sin(4 pi u)` already integrates to zero.
pub fn true_component(k: usize, u: f64) -> f64 {
    match k {
        0 => eta1(u),
        _ => eta2_uncentered(u) - eta2_mean(),
    }
}

/// What generated a simulated dataset.
#[derive(Clone, Debug, Serialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub beta: Vec<f64>,
    /// True linear predictor per row.
    pub m: Vec<f64>,
    /// True centered components per row, column-major.
    pub eta: Vec<Vec<f64>>,
}

impl Truth {
    pub fn zero_indices(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] == 0.0).collect()
    }

    pub fn nonzero_indices(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }
}

fn ar1_latent<R: Rng + ?Sized>(rng: &mut R, dim: usize, rho: f64) -> Vec<f64> {
    let innovation = (1.0 - rho * rho).sqrt();
    let mut w = Vec::with_capacity(dim);
    let mut prev: f64 = rng.sample(StandardNormal);
    w.push(prev);
    for _ in 1..dim {
        let e: f64 = rng.sample(StandardNormal);
        prev = rho * prev + innovation * e;
        w.push(prev);
    }
    w
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

fn finish<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: Scenario,
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
) -> Result<(Dataset, Truth)> {
    let beta = scenario.beta();
    let n = x[0].len();
    let eta: Vec<Vec<f64>> = x
        .iter()
        .enumerate()
        .map(|(k, col)| col.iter().map(|&u| true_component(k, u)).collect())
        .collect();
    let m: Vec<f64> = (0..n)
        .map(|i| eta[0][i] + eta[1][i] + z.iter().zip(&beta).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();
    let y: Vec<f64> = m
        .iter()
        .map(|&mi| {
            let p = 1.0 / (1.0 + (-mi).exp());
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let data = Dataset::new(y, x, z)?;
    Ok((
        data,
        Truth {
            scenario,
            beta,
            m,
            eta,
        },
    ))
}

/// First scenario: latent AR(1) with correlation 0.5 over
/// `(Z1..Z8, X1, X2)`; `Z_j = 0.5 + 0.3 W_j`, `X_k = Phi(W_k)`.
pub fn generate_s1<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<(Dataset, Truth)> {
    if n < 2 {
        return Err(GaplmError::InvalidInput("need at least two observations".into()));
    }
    let phi = std_normal();
    let mut x = (0..2).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
    let mut z = (0..8).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
    for _ in 0..n {
        let w = ar1_latent(rng, 10, Scenario::S1_RHO);
        for j in 0..8 {
            z[j].push(0.5 + 0.3 * w[j]);
        }
        x[0].push(phi.cdf(w[8]));
        x[1].push(phi.cdf(w[9]));
    }
    finish(rng, Scenario::S1, x, z)
}

/// Second scenario: latent AR(1) with correlation `rho` over
/// `(Z1, Z2, X1, X2)` scaled to variance 0.09, `Z3 ~ Bernoulli(0.5)`
/// independent. The nonparametric covariates enter through `Phi(W_k)`.
pub fn generate_s2<R: Rng + ?Sized>(rng: &mut R, n: usize, rho: f64) -> Result<(Dataset, Truth)> {
    if n < 2 {
        return Err(GaplmError::InvalidInput("need at least two observations".into()));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(GaplmError::Config(format!("correlation must lie in (-1, 1), got {rho}")));
    }
    let phi = std_normal();
    let coin = Bernoulli::new(0.5).expect("probability is valid");
    let mut x = (0..2).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
    let mut z = (0..3).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
    for _ in 0..n {
        let w = ar1_latent(rng, 4, rho);
        z[0].push(0.3 * w[0]);
        z[1].push(0.3 * w[1]);
        z[2].push(if coin.sample(rng) { 1.0 } else { 0.0 });
        x[0].push(phi.cdf(w[2]));
        x[1].push(phi.cdf(w[3]));
    }
    finish(rng, Scenario::S2, x, z)
}

pub fn generate<R: Rng + ?Sized>(rng: &mut R, scenario: Scenario, n: usize, rho: f64) -> Result<(Dataset, Truth)> {
    match scenario {
        Scenario::S1 => generate_s1(rng, n),
        Scenario::S2 => generate_s2(rng, n, rho),
    }
}

/// `E(Z Z')` of the linear covariates, in closed form.
pub fn second_moment(scenario: Scenario, rho: f64) -> DMatrix<f64> {
    match scenario {
        Scenario::S1 => DMatrix::from_fn(8, 8, |i, j| {
            0.25 + 0.09 * Scenario::S1_RHO.powi((i as i32 - j as i32).abs())
        }),
        Scenario::S2 => DMatrix::from_row_slice(3, 3, &[0.09, 0.09 * rho, 0.0, 0.09 * rho, 0.09, 0.0, 0.0, 0.0, 0.5]),
    }
}

/// Mean squared difference of fitted and true success probabilities.
pub fn prediction_error(fitted_linear: &[f64], truth: &Truth) -> f64 {
    let logistic = |m: f64| 1.0 / (1.0 + (-m).exp());
    let n = truth.m.len() as f64;
    fitted_linear
        .iter()
        .zip(&truth.m)
        .map(|(a, b)| (logistic(*a) - logistic(*b)).powi(2))
        .sum::<f64>()
        / n
}

/// `(beta_hat - beta)' E(Z Z') (beta_hat - beta)`.
pub fn model_error(beta_hat: &[f64], beta_true: &[f64], second_moment: &DMatrix<f64>) -> Result<f64> {
    let d = beta_true.len();
    if beta_hat.len() != d || second_moment.nrows() != d || second_moment.ncols() != d {
        return Err(GaplmError::InvalidInput(format!(
            "model error needs {d} coefficients and a {d}x{d} moment matrix"
        )));
    }
    let diff: Vec<f64> = beta_hat.iter().zip(beta_true).map(|(a, b)| a - b).collect();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            total += diff[i] * second_moment[(i, j)] * diff[j];
        }
    }
    Ok(total)
}

/// Empirical norm `sqrt(n^-1 sum (eta_hat - eta0)^2)` of the additive part,
/// with the true sum centered at its sample mean.
pub fn eta_error_norm(fit: &GaplmFit, basis: &AdditiveSplineBasis, data: &Dataset, truth: &Truth) -> f64 {
    let n = data.n();
    let ns = basis.num_columns();
    let mut row = vec![0.0; ns];
    let truth_sum: Vec<f64> = (0..n).map(|i| truth.eta.iter().map(|c| c[i]).sum()).collect();
    let mean = truth_sum.iter().sum::<f64>() / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        basis.fill_spline_row(&data.x_row(i), &mut row);
        let fitted: f64 = row.iter().zip(&fit.gamma_hat).map(|(a, b)| a * b).sum();
        total += (fitted - (truth_sum[i] - mean)).powi(2);
    }
    (total / n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Oracle,
    Scad,
    Lasso,
    Bic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Scad => "scad",
            Method::Lasso => "lasso",
            Method::Bic => "bic",
        }
    }

    pub fn all() -> Vec<Method> {
        vec![Method::Oracle, Method::Scad, Method::Lasso, Method::Bic]
    }
}

impl FromStr for Method {
    type Err = GaplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Method::Oracle),
            "scad" => Ok(Method::Scad),
            "lasso" | "l1" => Ok(Method::Lasso),
            "bic" => Ok(Method::Bic),
            other => Err(GaplmError::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// How the number of interior knots is chosen in each replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum KnotChoice {
    Fixed { knots: Vec<usize> },
    /// Smallest prediction error against the truth over `0..=max` per covariate.
    Pe { max: usize },
    /// Smallest `folds`-fold held-out deviance over `0..=max` per covariate.
    Cv { folds: usize, max: usize },
}

/// Model whose model error is the denominator of the relative model error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MrmeBaseline {
    /// Unpenalized fit of the same additive partial linear model.
    #[default]
    Gaplm,
    /// Logistic regression with every covariate entered linearly.
    LinearGlm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub replicates: usize,
    pub rho: f64,
    pub knots: KnotChoice,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub order: usize,
    pub placement: KnotPlacement,
    pub lambda_grid: Vec<f64>,
    pub mrme_baseline: MrmeBaseline,
    /// Points of the component-curve grid; 0 skips the curves.
    pub curve_points: usize,
}

impl SimConfig {
    pub fn new(scenario: Scenario, n: usize, replicates: usize, seed: u64) -> Self {
        let knots = if n <= 200 { vec![2, 2] } else { vec![5, 3] };
        SimConfig {
            scenario,
            n,
            replicates,
            rho: 0.5,
            knots: KnotChoice::Fixed { knots },
            methods: Method::all(),
            seed,
            order: 4,
            placement: KnotPlacement::Quantile,
            lambda_grid: select::default_lambda_grid(),
            mrme_baseline: MrmeBaseline::Gaplm,
            curve_points: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(GaplmError::Config("at least one replicate is required".into()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(GaplmError::Config(format!("correlation must lie in (-1, 1), got {}", self.rho)));
        }
        if self.n < 10 {
            return Err(GaplmError::Config(format!("n = {} is too small", self.n)));
        }
        match &self.knots {
            KnotChoice::Fixed { knots } if knots.len() != 2 => {
                Err(GaplmError::Config("both scenarios have two nonparametric covariates; give two knot counts".into()))
            }
            KnotChoice::Cv { folds, .. } if *folds < 2 => Err(GaplmError::Config("cross-validation needs at least two folds".into())),
            _ => Ok(()),
        }
    }
}

/// Random stream of replicate `index`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodRecord {
    pub method: Method,
    pub beta: Vec<f64>,
    pub correct_zeros: usize,
    pub incorrect_zeros: usize,
    pub model_error: f64,
    pub relative_model_error: f64,
    pub prediction_error: f64,
    pub lambda: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub knots: Vec<usize>,
    pub converged: bool,
    pub unpenalized_pe: f64,
    pub unpenalized_me: f64,
    pub baseline_me: f64,
    pub eta_error: f64,
    pub methods: Vec<MethodRecord>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    curves: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean number of true zeros estimated as zero.
    pub c: f64,
    /// Mean number of true nonzeros estimated as zero.
    pub i: f64,
    /// Monte Carlo standard errors of `c` and `i`.
    pub c_se: f64,
    pub i_se: f64,
    pub mrme: f64,
    pub median_pe: f64,
    pub replicates_used: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentCurve {
    pub covariate: usize,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub true_zeros: usize,
    pub true_nonzeros: usize,
    pub nonconverged: usize,
    pub methods: Vec<MethodSummary>,
    pub knot_counts: BTreeMap<String, usize>,
    pub replicates: Vec<ReplicateRecord>,
    pub curves: Vec<ComponentCurve>,
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn knot_key(knots: &[usize]) -> String {
    knots.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

/// Criterion for [`select_knots`].
pub enum KnotCriterion<'a> {
    /// Prediction error against the true linear predictor.
    Pe(&'a Truth),
    /// `folds`-fold cross-validated deviance with a seeded shuffle.
    Cv { folds: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct KnotScore {
    pub knots: Vec<usize>,
    pub score: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KnotSelection {
    pub knots: Vec<usize>,
    pub score: f64,
    pub scores: Vec<KnotScore>,
    pub warnings: Vec<String>,
}

fn cartesian(candidates: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for options in candidates {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |&k| {
                    let mut next = prefix.clone();
                    next.push(k);
                    next
                })
            })
            .collect();
    }
    out
}

fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

fn cv_deviance(
    data: &Dataset,
    family: &QuasiFamily,
    knots: &[usize],
    order: usize,
    placement: KnotPlacement,
    fold: &[usize],
    folds: usize,
    opts: &FitOptions,
) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..data.n()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..data.n()).filter(|&i| fold[i] == f).collect();
        let train_data = data.subset_rows(&train);
        let (basis, _) = AdditiveSplineBasis::from_knot_counts(&train_data, knots, order, placement)?;
        let fitted = fit::fit(&train_data, &basis, family, opts)?;
        let mut y = Vec::with_capacity(test.len());
        let mut m = Vec::with_capacity(test.len());
        for &i in &test {
            let row = basis.design_row(&data.x_row(i), &data.z_row(i))?;
            let ns = basis.num_columns();
            let value = fitted.intercept
                + row[..ns].iter().zip(&fitted.gamma_hat).map(|(a, b)| a * b).sum::<f64>()
                + row[ns..].iter().zip(&fitted.beta_hat).map(|(a, b)| a * b).sum::<f64>();
            y.push(data.y[i]);
            m.push(value);
        }
        total += family.deviance_linear(&y, &m);
    }
    Ok(total)
}

/// Exhaustive search over interior-knot counts. `candidates[k]` lists the
/// counts tried for covariate `k`. Ties go to the fewest total knots;
/// combinations whose fit fails are skipped.
pub fn select_knots(
    data: &Dataset,
    family: &QuasiFamily,
    candidates: &[Vec<usize>],
    criterion: KnotCriterion<'_>,
    order: usize,
    placement: KnotPlacement,
    opts: &FitOptions,
) -> Result<KnotSelection> {
    if candidates.len() != data.d1() || candidates.iter().any(Vec::is_empty) {
        return Err(GaplmError::InvalidInput(format!(
            "need a nonempty candidate list for each of {} nonparametric covariates",
            data.d1()
        )));
    }
    let fold = match criterion {
        KnotCriterion::Cv { folds, seed } => {
            if folds < 2 || folds > data.n() {
                return Err(GaplmError::Config(format!("cannot use {folds} folds with {} rows", data.n())));
            }
            Some((fold_assignment(data.n(), folds, seed), folds))
        }
        KnotCriterion::Pe(_) => None,
    };
    let mut scores = Vec::new();
    let mut warnings = Vec::new();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for knots in cartesian(candidates) {
        let score = match (&criterion, &fold) {
            (KnotCriterion::Pe(truth), _) => {
                AdditiveSplineBasis::from_knot_counts(data, &knots, order, placement)
                    .and_then(|(basis, _)| fit::fit(data, &basis, family, opts))
                    .map(|f| prediction_error(&f.linear_predictor, truth))
            }
            (KnotCriterion::Cv { .. }, Some((fold, folds))) => {
                cv_deviance(data, family, &knots, order, placement, fold, *folds, opts)
            }
            _ => unreachable!("fold assignment exists for cross-validation"),
        };
        match score {
            Ok(s) if s.is_finite() => {
                let total: usize = knots.iter().sum();
                let better = match &best {
                    None => true,
                    Some((bs, bt, _)) => s < *bs || (s == *bs && total < *bt),
                };
                if better {
                    best = Some((s, total, knots.clone()));
                }
                scores.push(KnotScore { knots, score: Some(s) });
            }
            Ok(_) => {
                warnings.push(format!("knots ({}) gave a non-finite score", knot_key(&knots)));
                scores.push(KnotScore { knots, score: None });
            }
            Err(e) => {
                warnings.push(format!("knots ({}) skipped: {e}", knot_key(&knots)));
                scores.push(KnotScore { knots, score: None });
            }
        }
    }
    let Some((score, _, knots)) = best else {
        return Err(GaplmError::AllFitsFailed(warnings));
    };
    Ok(KnotSelection {
        knots,
        score,
        scores,
        warnings,
    })
}

fn linear_baseline(data: &Dataset, family: &QuasiFamily, opts: &FitOptions) -> Result<Vec<f64>> {
    let mut z = data.z.clone();
    for (k, col) in data.x.iter().enumerate() {
        let (lo, hi) = data.x_ranges[k];
        z.push(col.iter().map(|u| lo + u * (hi - lo)).collect());
    }
    let linear = Dataset::new(data.y.clone(), Vec::new(), z)?;
    let (basis, _) = AdditiveSplineBasis::from_knot_counts(&linear, &[], 4, KnotPlacement::Quantile)?;
    let f = fit::fit(&linear, &basis, family, opts)?;
    Ok(f.beta_hat[..data.d2()].to_vec())
}

fn run_method(
    method: Method,
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    init: &GaplmFit,
    truth: &Truth,
    cfg: &SimConfig,
) -> Result<(Vec<f64>, Vec<f64>, Option<f64>, bool)> {
    let opts = SelectOptions::default();
    match method {
        Method::Oracle => {
            let keep = truth.nonzero_indices();
            let f = fit::fit(&data.select_z(&keep), basis, family, &opts.fit)?;
            let mut beta = vec![0.0; data.d2()];
            for (a, &j) in keep.iter().enumerate() {
                beta[j] = f.beta_hat[a];
            }
            Ok((beta, f.linear_predictor, None, f.converged))
        }
        Method::Scad | Method::Lasso => {
            let kind = if method == Method::Scad { PenaltyKind::Scad } else { PenaltyKind::L1 };
            let t = select::tune_lambda_from(data, basis, family, init, kind, DEFAULT_SCAD_A, &cfg.lambda_grid, &[], &opts)?;
            Ok((t.result.beta_mpl, t.result.linear_predictor, Some(t.lambda), t.result.converged))
        }
        Method::Bic => {
            let r = select::best_subset_bic(data, basis, family, &[], &opts.fit)?;
            Ok((r.beta_mpl, r.linear_predictor, None, r.converged))
        }
    }
}

fn curve_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| (i as f64 + 0.5) / points as f64).collect()
}

fn run_replicate(cfg: &SimConfig, index: usize, moment: &DMatrix<f64>) -> ReplicateRecord {
    let family = QuasiFamily::binomial();
    let fit_opts = FitOptions::default();
    let mut rng = replicate_rng(cfg.seed, index);
    let mut record = ReplicateRecord {
        replicate: index,
        knots: Vec::new(),
        converged: false,
        unpenalized_pe: f64::NAN,
        unpenalized_me: f64::NAN,
        baseline_me: f64::NAN,
        eta_error: f64::NAN,
        methods: Vec::new(),
        warnings: Vec::new(),
        curves: Vec::new(),
    };
    let (data, truth) = match generate(&mut rng, cfg.scenario, cfg.n, cfg.rho) {
        Ok(v) => v,
        Err(e) => {
            record.warnings.push(format!("generation failed: {e}"));
            return record;
        }
    };
    let candidates = |max: usize| vec![(0..=max).collect::<Vec<_>>(); 2];
    let knots = match &cfg.knots {
        KnotChoice::Fixed { knots } => Ok(knots.clone()),
        KnotChoice::Pe { max } => select_knots(
            &data,
            &family,
            &candidates(*max),
            KnotCriterion::Pe(&truth),
            cfg.order,
            cfg.placement,
            &fit_opts,
        )
        .map(|s| s.knots),
        KnotChoice::Cv { folds, max } => select_knots(
            &data,
            &family,
            &candidates(*max),
            KnotCriterion::Cv {
                folds: *folds,
                seed: rng.random(),
            },
            cfg.order,
            cfg.placement,
            &fit_opts,
        )
        .map(|s| s.knots),
    };
    let knots = match knots {
        Ok(k) => k,
        Err(e) => {
            record.warnings.push(format!("knot selection failed: {e}"));
            return record;
        }
    };
    record.knots = knots.clone();
    let fitted = AdditiveSplineBasis::from_knot_counts(&data, &knots, cfg.order, cfg.placement)
        .and_then(|(basis, _)| fit::fit(&data, &basis, &family, &fit_opts).map(|f| (basis, f)));
    let (basis, init) = match fitted {
        Ok(v) => v,
        Err(e) => {
            record.warnings.push(format!("unpenalized fit failed: {e}"));
            return record;
        }
    };
    record.converged = init.converged;
    record.warnings.extend(init.warnings.iter().cloned());
    record.unpenalized_pe = prediction_error(&init.linear_predictor, &truth);
    record.unpenalized_me = model_error(&init.beta_hat, &truth.beta, moment).unwrap_or(f64::NAN);
    record.eta_error = eta_error_norm(&init, &basis, &data, &truth);
    record.baseline_me = match cfg.mrme_baseline {
        MrmeBaseline::Gaplm => record.unpenalized_me,
        MrmeBaseline::LinearGlm => match linear_baseline(&data, &family, &fit_opts) {
            Ok(b) => model_error(&b, &truth.beta, moment).unwrap_or(f64::NAN),
            Err(e) => {
                record.warnings.push(format!("linear baseline failed: {e}"));
                f64::NAN
            }
        },
    };
    if cfg.curve_points > 0 {
        let grid = curve_grid(cfg.curve_points);
        for k in 0..basis.d1() {
            let unit: Vec<f64> = grid.iter().map(|&g| basis.to_unit(k, g).0).collect();
            record
                .curves
                .push(component_values(&init.gamma_hat, &basis, k, &unit).unwrap_or_default());
        }
    }
    if !init.converged {
        return record;
    }
    let zeros = truth.zero_indices();
    let nonzeros = truth.nonzero_indices();
    for &method in &cfg.methods {
        let rec = match run_method(method, &data, &basis, &family, &init, &truth, cfg) {
            Ok((beta, eta, lambda, converged)) => {
                let me = model_error(&beta, &truth.beta, moment).unwrap_or(f64::NAN);
                MethodRecord {
                    method,
                    correct_zeros: zeros.iter().filter(|&&j| beta[j] == 0.0).count(),
                    incorrect_zeros: nonzeros.iter().filter(|&&j| beta[j] == 0.0).count(),
                    model_error: me,
                    relative_model_error: me / record.baseline_me,
                    prediction_error: prediction_error(&eta, &truth),
                    beta,
                    lambda,
                    converged,
                    error: None,
                }
            }
            Err(e) => MethodRecord {
                method,
                beta: Vec::new(),
                correct_zeros: 0,
                incorrect_zeros: 0,
                model_error: f64::NAN,
                relative_model_error: f64::NAN,
                prediction_error: f64::NAN,
                lambda: None,
                converged: false,
                error: Some(e.to_string()),
            },
        };
        record.methods.push(rec);
    }
    record
}

/// Runs every replicate in parallel and aggregates per method. Replicates
/// whose unpenalized fit does not converge are counted and left out of the
/// aggregates; so are individual method fits that fail.
pub fn run_monte_carlo(cfg: &SimConfig) -> Result<SimSummary> {
    cfg.validate()?;
    let moment = second_moment(cfg.scenario, cfg.rho);
    let beta = cfg.scenario.beta();
    let true_zeros = beta.iter().filter(|&&b| b == 0.0).count();
    let replicates: Vec<ReplicateRecord> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r, &moment))
        .collect();

    let nonconverged = replicates.iter().filter(|r| !r.converged).count();
    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let recs: Vec<&MethodRecord> = replicates
                .iter()
                .filter(|r| r.converged)
                .flat_map(|r| r.methods.iter().filter(move |m| m.method == method))
                .collect();
            let ok: Vec<&&MethodRecord> = recs.iter().filter(|m| m.error.is_none()).collect();
            let c: Vec<f64> = ok.iter().map(|m| m.correct_zeros as f64).collect();
            let i: Vec<f64> = ok.iter().map(|m| m.incorrect_zeros as f64).collect();
            let rme: Vec<f64> = ok.iter().map(|m| m.relative_model_error).filter(|v| v.is_finite()).collect();
            let pe: Vec<f64> = ok.iter().map(|m| m.prediction_error).collect();
            let (c_mean, c_se) = mean_and_se(&c);
            let (i_mean, i_se) = mean_and_se(&i);
            MethodSummary {
                method,
                c: c_mean,
                i: i_mean,
                c_se,
                i_se,
                mrme: median(&rme),
                median_pe: median(&pe),
                replicates_used: ok.len(),
                failures: recs.len() - ok.len(),
            }
        })
        .collect();

    let mut knot_counts = BTreeMap::new();
    for r in &replicates {
        if !r.knots.is_empty() {
            *knot_counts.entry(knot_key(&r.knots)).or_insert(0) += 1;
        }
    }

    let mut curves = Vec::new();
    if cfg.curve_points > 0 {
        let grid = curve_grid(cfg.curve_points);
        for k in 0..2 {
            let mut mean = Vec::with_capacity(grid.len());
            let mut lower = Vec::with_capacity(grid.len());
            let mut upper = Vec::with_capacity(grid.len());
            for g in 0..grid.len() {
                let mut vals: Vec<f64> = replicates
                    .iter()
                    .filter(|r| r.converged && r.curves.len() > k && r.curves[k].len() == grid.len())
                    .map(|r| r.curves[k][g])
                    .collect();
                vals.sort_by(f64::total_cmp);
                if vals.is_empty() {
                    mean.push(f64::NAN);
                    lower.push(f64::NAN);
                    upper.push(f64::NAN);
                } else {
                    mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
                    lower.push(quantile_sorted(&vals, 0.025));
                    upper.push(quantile_sorted(&vals, 0.975));
                }
            }
            curves.push(ComponentCurve {
                covariate: k,
                truth: grid.iter().map(|&u| true_component(k, u)).collect(),
                grid: grid.clone(),
                mean,
                lower,
                upper,
            });
        }
    }

    Ok(SimSummary {
        config: cfg.clone(),
        true_zeros,
        true_nonzeros: beta.len() - true_zeros,
        nonconverged,
        methods,
        knot_counts,
        replicates,
        curves,
    })
}

/// Knot counts chosen by the prediction-error criterion in `runs`
/// independent datasets, keyed by `"J1,J2"`.
pub fn knot_selection_experiment(
    scenario: Scenario,
    n: usize,
    runs: usize,
    max: usize,
    seed: u64,
) -> BTreeMap<String, usize> {
    let family = QuasiFamily::binomial();
    let chosen: Vec<Option<Vec<usize>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let (data, truth) = generate(&mut rng, scenario, n, 0.5).ok()?;
            select_knots(
                &data,
                &family,
                &vec![(0..=max).collect(); 2],
                KnotCriterion::Pe(&truth),
                4,
                KnotPlacement::Quantile,
                &FitOptions::default(),
            )
            .ok()
            .map(|s| s.knots)
        })
        .collect();
    let mut counts = BTreeMap::new();
    for k in chosen.into_iter().flatten() {
        *counts.entry(knot_key(&k)).or_insert(0) += 1;
    }
    counts
}

/// Most frequent key, ties to the first in key order.
pub fn modal_choice(counts: &BTreeMap<String, usize>) -> Option<(String, usize)> {
    let mut best: Option<(String, usize)> = None;
    for (k, &c) in counts {
        if best.as_ref().is_none_or(|(_, bc)| c > *bc) {
            best = Some((k.clone(), c));
        }
    }
    best
}
