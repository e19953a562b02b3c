//! Penalized selection of the linear coefficients.
//!
//! The penalized quasi-likelihood
//!
//! ```text
//! L_P(gamma, beta) = sum_i Q(m_i, y_i) - n * sum_j p_{lambda_j}(|beta_j|)
//! ```
//!
//! is maximized by Fisher scoring in which each penalty is replaced, at the
//! current iterate, by its local quadratic approximation
//! `p(|b|) ~ p(|b0|) + 0.5 * p'(|b0|) / |b0| * (b^2 - b0^2)`. Coefficients
//! whose magnitude falls below a small multiple of their unpenalized
//! standard error are set to exactly zero and stay there.
//!
//! Penalties act on the coefficients of the linear covariates after each
//! covariate has been divided by its sample standard deviation, so the
//! selected model does not depend on the units of `z`. Results are reported
//! on the original scale.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GaplmError, Result};
use crate::family::QuasiFamily;
use crate::fit::{self, design_matrix, fisher_scoring, FitOptions, GaplmFit, Problem};
use crate::linalg;
use crate::spline::AdditiveSplineBasis;

pub const DEFAULT_SCAD_A: f64 = 3.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Scad,
    #[serde(alias = "lasso")]
    L1,
    L0,
}

impl PenaltyKind {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::Scad => "scad",
            PenaltyKind::L1 => "lasso",
            PenaltyKind::L0 => "l0",
        }
    }
}

impl FromStr for PenaltyKind {
    type Err = GaplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scad" => Ok(PenaltyKind::Scad),
            "lasso" | "l1" => Ok(PenaltyKind::L1),
            "l0" => Ok(PenaltyKind::L0),
            other => Err(GaplmError::Config(format!("unknown penalty `{other}`"))),
        }
    }
}

/// SCAD derivative `p'_lambda(b)` for `b >= 0`.
pub fn scad_derivative(lambda: f64, a: f64, b: f64) -> f64 {
    if b <= lambda {
        lambda
    } else {
        (a * lambda - b).max(0.0) / (a - 1.0)
    }
}

/// SCAD penalty, the integral of [`scad_derivative`] from 0.
pub fn scad_value(lambda: f64, a: f64, b: f64) -> f64 {
    let b = b.abs();
    if b <= lambda {
        lambda * b
    } else if b <= a * lambda {
        (2.0 * a * lambda * b - b * b - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

/// Penalty family with one tuning value per linear coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub lambda: Vec<f64>,
    pub a: f64,
    /// Linear coefficients that are never penalized. The intercept is always
    /// exempt and is not indexed here.
    pub unpenalized: Vec<usize>,
}

impl Penalty {
    pub fn new(kind: PenaltyKind, lambda: Vec<f64>, a: f64) -> Result<Self> {
        if kind == PenaltyKind::Scad && !(a > 2.0) {
            return Err(GaplmError::Config(format!("SCAD shape a must exceed 2, got {a}")));
        }
        if lambda.iter().any(|&l| !(l >= 0.0)) {
            return Err(GaplmError::Config("penalty weights must be nonnegative".into()));
        }
        Ok(Penalty {
            kind,
            lambda,
            a,
            unpenalized: Vec::new(),
        })
    }

    pub fn scad(lambda: Vec<f64>) -> Result<Self> {
        Self::new(PenaltyKind::Scad, lambda, DEFAULT_SCAD_A)
    }

    pub fn l1(lambda: Vec<f64>) -> Result<Self> {
        Self::new(PenaltyKind::L1, lambda, DEFAULT_SCAD_A)
    }

    pub fn with_unpenalized(mut self, indices: Vec<usize>) -> Self {
        self.unpenalized = indices;
        self
    }

    pub fn lambda_for(&self, j: usize) -> f64 {
        if self.unpenalized.contains(&j) {
            0.0
        } else {
            self.lambda[j]
        }
    }

    pub fn is_penalized(&self, j: usize) -> bool {
        self.lambda_for(j) > 0.0
    }

    /// `p_{lambda_j}(|beta|)`.
    pub fn value(&self, j: usize, beta: f64) -> f64 {
        let lambda = self.lambda_for(j);
        let b = beta.abs();
        match self.kind {
            PenaltyKind::Scad => scad_value(lambda, self.a, b),
            PenaltyKind::L1 => lambda * b,
            PenaltyKind::L0 => {
                if b != 0.0 {
                    0.5 * lambda * lambda
                } else {
                    0.0
                }
            }
        }
    }

    /// `p'_{lambda_j}(|beta|)`; the L0 penalty is flat away from 0.
    pub fn derivative(&self, j: usize, beta: f64) -> f64 {
        let lambda = self.lambda_for(j);
        let b = beta.abs();
        match self.kind {
            PenaltyKind::Scad => scad_derivative(lambda, self.a, b),
            PenaltyKind::L1 => lambda,
            PenaltyKind::L0 => 0.0,
        }
    }
}

/// Estimator of the score variance in the sandwich.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreCovariance {
    /// Model-based: the Fisher information times the dispersion.
    #[default]
    Fisher,
    /// Centered outer product of per-observation score vectors.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    /// Stop when no coefficient moves by more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Coefficients below `zero_threshold * SE` (unpenalized SE) are set to 0.
    pub zero_threshold: f64,
    /// Added to `|beta_j|` in the quadratic approximation's denominator.
    pub lqa_epsilon: f64,
    pub score_covariance: ScoreCovariance,
    pub standardize: bool,
    pub fit: FitOptions,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            tolerance: 1e-8,
            max_iterations: 100,
            max_halvings: 30,
            zero_threshold: 1e-3,
            lqa_epsilon: 1e-8,
            score_covariance: ScoreCovariance::Fisher,
            standardize: true,
            fit: FitOptions::default(),
        }
    }
}

/// Outcome of a selection procedure.
#[derive(Clone, Debug)]
pub struct SelectionResult {
    pub method: String,
    pub beta_names: Vec<String>,
    pub beta_mpl: Vec<f64>,
    pub intercept: f64,
    /// Spline coefficients refitted with `beta` held at `beta_mpl`.
    pub gamma_mpl: Vec<f64>,
    /// Indices of linear coefficients that are exactly zero.
    pub zero_set: Vec<usize>,
    /// Sandwich (penalized fits) or model-based (subset fits) covariance of
    /// `beta_mpl`, zero in the rows and columns of `zero_set`.
    pub covariance: DMatrix<f64>,
    pub se: Vec<f64>,
    pub gcv: Option<f64>,
    /// `e(lambda)` for penalized fits, number of nonzero coefficients for
    /// subset fits.
    pub effective_params: f64,
    pub deviance: f64,
    pub bic: Option<f64>,
    /// Scalar `lambda` in `lambda_j = lambda * SE_j` when tuned.
    pub lambda: Option<f64>,
    pub penalty: Option<Penalty>,
    /// Standard deviations used to scale the linear covariates.
    pub scales: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub linear_predictor: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SelectionResult {
    pub fn nonzero(&self) -> Vec<usize> {
        (0..self.beta_mpl.len()).filter(|j| !self.zero_set.contains(j)).collect()
    }
}

struct Scaled {
    x: DMatrix<f64>,
    scales: Vec<f64>,
    ns: usize,
}

fn column_scales(data: &Dataset, standardize: bool) -> Vec<f64> {
    data.z
        .iter()
        .map(|col| {
            if !standardize {
                return 1.0;
            }
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

fn scaled_design(data: &Dataset, basis: &AdditiveSplineBasis, scales: Vec<f64>) -> Scaled {
    let (mut x, _) = design_matrix(data, basis);
    let ns = basis.num_columns();
    for (j, s) in scales.iter().enumerate() {
        x.column_mut(ns + 1 + j).unscale_mut(*s);
    }
    Scaled { x, scales, ns }
}

fn to_internal(gamma: &[f64], intercept: f64, beta: &[f64], scales: &[f64]) -> DVector<f64> {
    let mut v = Vec::with_capacity(gamma.len() + 1 + beta.len());
    v.extend_from_slice(gamma);
    v.push(intercept);
    v.extend(beta.iter().zip(scales).map(|(b, s)| b * s));
    DVector::from_vec(v)
}

struct LqaOutcome {
    theta: DVector<f64>,
    zeroed: Vec<bool>,
    iterations: usize,
    converged: bool,
    warnings: Vec<String>,
}

fn penalized_objective(problem: &Problem<'_>, theta: &DVector<f64>, penalty: &Penalty, ns: usize) -> f64 {
    let n = problem.n() as f64;
    let pen: f64 = (0..penalty.lambda.len())
        .map(|j| penalty.value(j, theta[ns + 1 + j]))
        .sum();
    problem.objective(theta) - n * pen
}

fn mean_change(problem: &Problem<'_>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let fam = &problem.family;
    problem
        .eta(a)
        .iter()
        .zip(problem.eta(b))
        .map(|(x, y)| {
            let (x, _) = fam.clamp_linear_predictor(*x);
            let (y, _) = fam.clamp_linear_predictor(y);
            (fam.mean(x) - fam.mean(y)).abs()
        })
        .fold(0.0, f64::max)
}

fn lqa(
    problem: &Problem<'_>,
    ns: usize,
    penalty: &Penalty,
    start: DVector<f64>,
    thresholds: &[f64],
    opts: &SelectOptions,
) -> Result<LqaOutcome> {
    let n = problem.n() as f64;
    let d2 = penalty.lambda.len();
    let p = start.len();
    let mut theta = start;
    let mut zeroed = vec![false; d2];
    let mut recent: Vec<DVector<f64>> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        for j in 0..d2 {
            if !zeroed[j] && penalty.is_penalized(j) && theta[ns + 1 + j].abs() < thresholds[j] {
                zeroed[j] = true;
                theta[ns + 1 + j] = 0.0;
            }
        }
        let active: Vec<usize> = (0..p)
            .filter(|&c| c <= ns || !zeroed[c - ns - 1])
            .collect();
        let eval = problem.evaluate(&theta);
        let mut a = eval.info.select_rows(&active).select_columns(&active);
        let mut rhs = eval.score.select_rows(&active);
        for (pos, &c) in active.iter().enumerate() {
            if c > ns {
                let j = c - ns - 1;
                if penalty.is_penalized(j) {
                    let b = theta[c];
                    let sigma = penalty.derivative(j, b) / (b.abs() + opts.lqa_epsilon);
                    a[(pos, pos)] += n * sigma;
                    rhs[pos] -= n * sigma * b;
                }
            }
        }
        let (delta, _) = linalg::solve_spd(&a, &rhs, opts.fit.ridge)?;

        let current = penalized_objective(problem, &theta, penalty, ns);
        let slack = 1e-10 * (1.0 + current.abs());
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..=opts.max_halvings {
            let mut cand = theta.clone();
            for (pos, &c) in active.iter().enumerate() {
                cand[c] += step * delta[pos];
            }
            let value = penalized_objective(problem, &cand, penalty, ns);
            if value.is_finite() && value >= current - slack {
                next = Some((cand, value));
                break;
            }
            step *= 0.5;
        }
        let Some((next, value)) = next else {
            let change = step * delta.amax();
            converged = change <= opts.tolerance.sqrt();
            if !converged {
                warnings.push("penalized step-halving stalled".into());
            }
            break;
        };
        iterations += 1;
        let change = (&next - &theta).amax();
        let crosses = (0..d2).any(|j| {
            !zeroed[j] && penalty.is_penalized(j) && next[ns + 1 + j].abs() < thresholds[j]
        });
        if change <= opts.tolerance && !crosses {
            theta = next;
            converged = true;
            break;
        }
        // Separated data leave the objective flat along some spline
        // directions; stop once the linear part has settled.
        let beta_change = (0..d2)
            .map(|j| (next[ns + 1 + j] - theta[ns + 1 + j]).abs())
            .fold(0.0, f64::max);
        let flat = value - current <= 1e-12 * (1.0 + current.abs());
        let settled = flat
            && !crosses
            && (beta_change <= 1e-6 || mean_change(problem, &theta, &next) <= 1e-10);
        if settled {
            theta = next;
            converged = true;
            if change > opts.tolerance.sqrt() {
                warnings.push("penalized objective is flat along some spline directions (possible separation); stopped once the fit settled".into());
            }
            break;
        }
        let cycling = recent
            .iter()
            .rev()
            .skip(1)
            .any(|old| (&next - old).amax() <= opts.tolerance);
        if cycling {
            let best = recent
                .iter()
                .chain(std::iter::once(&next))
                .max_by(|x, y| {
                    penalized_objective(problem, x, penalty, ns)
                        .total_cmp(&penalized_objective(problem, y, penalty, ns))
                })
                .cloned()
                .unwrap_or(next);
            theta = best;
            warnings.push("coefficient path oscillates; returning the best of the last iterates".into());
            break;
        }
        recent.push(next.clone());
        if recent.len() > 4 {
            recent.remove(0);
        }
        theta = next;
    }
    if !converged && !warnings.iter().any(|w| w.contains("oscillates")) {
        warnings.push(format!("penalized fit did not converge in {iterations} iterations"));
    }
    Ok(LqaOutcome {
        theta,
        zeroed,
        iterations,
        converged,
        warnings,
    })
}

/// Maximizes the spline part with the linear part fixed at `theta`'s
/// `beta` block. Returns the updated internal parameter vector.
fn refit_spline_part(
    scaled: &Scaled,
    y: &[f64],
    family: &QuasiFamily,
    theta: &DVector<f64>,
    opts: &FitOptions,
) -> Result<(DVector<f64>, bool)> {
    let ns = scaled.ns;
    let p = theta.len();
    let zb = scaled.x.columns(ns + 1, p - ns - 1) * theta.rows(ns + 1, p - ns - 1);
    let problem = Problem {
        x: scaled.x.columns(0, ns + 1).into_owned(),
        y,
        offset: Some(zb.iter().copied().collect()),
        family: *family,
    };
    let out = fisher_scoring(&problem, Some(theta.rows(0, ns + 1).into_owned()), opts)?;
    let mut refit = theta.clone();
    refit.rows_mut(0, ns + 1).copy_from(&out.theta);
    Ok((refit, out.converged))
}

struct PenalizedStats {
    covariance: DMatrix<f64>,
    effective_params: f64,
    deviance: f64,
    gcv: f64,
    eta: Vec<f64>,
}

/// Sandwich covariance, `e(lambda)` and GCV at an internal parameter vector.
fn penalized_stats(
    scaled: &Scaled,
    y: &[f64],
    family: &QuasiFamily,
    penalty: &Penalty,
    theta: &DVector<f64>,
    zeroed: &[bool],
    score_cov: ScoreCovariance,
    lqa_epsilon: f64,
    ridge: f64,
) -> Result<PenalizedStats> {
    let ns = scaled.ns;
    let d2 = zeroed.len();
    let n = y.len();
    let problem = Problem {
        x: scaled.x.clone(),
        y,
        offset: None,
        family: *family,
    };
    let (eta, q1, w) = problem.working(theta);
    // intercept plus nonzero linear coefficients
    let block: Vec<usize> = std::iter::once(ns)
        .chain((0..d2).filter(|&j| !zeroed[j]).map(|j| ns + 1 + j))
        .collect();
    let xb = scaled.x.select_columns(&block);
    let info = linalg::weighted_gram(&xb, &w);
    let mut a = info.clone();
    for (pos, &c) in block.iter().enumerate().skip(1) {
        let j = c - ns - 1;
        if penalty.is_penalized(j) {
            let b = theta[c];
            a[(pos, pos)] += n as f64 * penalty.derivative(j, b) / (b.abs() + lqa_epsilon);
        }
    }
    let (a_inv, _) = linalg::inverse_spd(&a, ridge)?;
    let middle = match score_cov {
        ScoreCovariance::Fisher => &info * family.dispersion,
        ScoreCovariance::Empirical => {
            let k = block.len();
            let mut scores = DMatrix::zeros(n, k);
            for i in 0..n {
                for c in 0..k {
                    scores[(i, c)] = q1[i] * xb[(i, c)];
                }
            }
            let means = scores.row_mean();
            for i in 0..n {
                for c in 0..k {
                    scores[(i, c)] -= means[c];
                }
            }
            scores.tr_mul(&scores)
        }
    };
    let mut cov_block = &a_inv * middle * &a_inv;
    linalg::symmetrize(&mut cov_block);
    let hat = &a_inv * &info;
    let effective_params: f64 = (1..block.len()).map(|pos| hat[(pos, pos)]).sum();

    let mut covariance = DMatrix::zeros(d2, d2);
    for (pa, &ca) in block.iter().enumerate().skip(1) {
        for (pb, &cb) in block.iter().enumerate().skip(1) {
            let (ja, jb) = (ca - ns - 1, cb - ns - 1);
            covariance[(ja, jb)] = cov_block[(pa, pb)] / (scaled.scales[ja] * scaled.scales[jb]);
        }
    }
    let deviance = family.deviance_linear(y, &eta);
    let nf = n as f64;
    let gcv = if effective_params >= nf {
        f64::INFINITY
    } else {
        deviance / (nf * (1.0 - effective_params / nf).powi(2))
    };
    Ok(PenalizedStats {
        covariance,
        effective_params,
        deviance,
        gcv,
        eta,
    })
}

fn run_penalized(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    penalty: &Penalty,
    init: &GaplmFit,
    start: DVector<f64>,
    opts: &SelectOptions,
) -> Result<SelectionResult> {
    let d2 = data.d2();
    if penalty.lambda.len() != d2 {
        return Err(GaplmError::InvalidInput(format!(
            "penalty has {} weights for {d2} linear covariates",
            penalty.lambda.len()
        )));
    }
    if penalty.kind == PenaltyKind::L0 {
        return Err(GaplmError::Config(
            "the L0 penalty is handled by best-subset search, not by quadratic approximation".into(),
        ));
    }
    let scaled = scaled_design(data, basis, column_scales(data, opts.standardize));
    let ns = scaled.ns;
    let mut warnings = Vec::new();
    if !init.converged {
        warnings.push("unpenalized starting fit did not converge".into());
    }
    let thresholds: Vec<f64> = init
        .beta_se()
        .iter()
        .zip(&scaled.scales)
        .map(|(se, s)| opts.zero_threshold * se * s)
        .collect();
    let problem = Problem {
        x: scaled.x.clone(),
        y: &data.y,
        offset: None,
        family: *family,
    };
    let out = lqa(&problem, ns, penalty, start, &thresholds, opts)?;
    warnings.extend(out.warnings);
    let (theta, refit_ok) = refit_spline_part(&scaled, &data.y, family, &out.theta, &opts.fit)?;
    if !refit_ok {
        warnings.push("spline refit with fixed linear part did not converge".into());
    }
    let stats = penalized_stats(
        &scaled,
        &data.y,
        family,
        penalty,
        &theta,
        &out.zeroed,
        opts.score_covariance,
        opts.lqa_epsilon,
        opts.fit.ridge,
    )?;
    let beta: Vec<f64> = (0..d2).map(|j| theta[ns + 1 + j] / scaled.scales[j]).collect();
    let zero_set: Vec<usize> = (0..d2).filter(|&j| beta[j] == 0.0).collect();
    let se = (0..d2).map(|j| stats.covariance[(j, j)].max(0.0).sqrt()).collect();
    Ok(SelectionResult {
        method: penalty.kind.name().to_string(),
        beta_names: data.z_names.clone(),
        beta_mpl: beta,
        intercept: theta[ns],
        gamma_mpl: theta.rows(0, ns).iter().copied().collect(),
        zero_set,
        covariance: stats.covariance,
        se,
        gcv: Some(stats.gcv),
        effective_params: stats.effective_params,
        deviance: stats.deviance,
        bic: None,
        lambda: None,
        penalty: Some(penalty.clone()),
        scales: scaled.scales,
        iterations: out.iterations,
        converged: out.converged && refit_ok,
        linear_predictor: stats.eta,
        warnings,
    })
}

/// Penalized fit started from the unpenalized fit `init`. Penalty weights
/// apply to coefficients of the standardized linear covariates (see the
/// module docs).
pub fn fit_penalized(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    penalty: &Penalty,
    init: &GaplmFit,
    opts: &SelectOptions,
) -> Result<SelectionResult> {
    let scales = column_scales(data, opts.standardize);
    let start = to_internal(&init.gamma_hat, init.intercept, &init.beta_hat, &scales);
    run_penalized(data, basis, family, penalty, init, start, opts)
}

/// Restarts the penalized iteration from an earlier result, keeping its
/// penalty. `init` supplies the unpenalized standard errors.
pub fn refit_penalized(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    previous: &SelectionResult,
    init: &GaplmFit,
    opts: &SelectOptions,
) -> Result<SelectionResult> {
    let penalty = previous
        .penalty
        .as_ref()
        .ok_or_else(|| GaplmError::InvalidInput("result was not produced by a penalized fit".into()))?;
    let scales = column_scales(data, opts.standardize);
    let start = to_internal(&previous.gamma_mpl, previous.intercept, &previous.beta_mpl, &scales);
    let mut out = run_penalized(data, basis, family, penalty, init, start, opts)?;
    out.lambda = previous.lambda;
    Ok(out)
}

fn stats_for(
    result: &SelectionResult,
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    score_cov: ScoreCovariance,
) -> Result<PenalizedStats> {
    let d2 = data.d2();
    let penalty = result
        .penalty
        .clone()
        .unwrap_or(Penalty::new(PenaltyKind::L1, vec![0.0; d2], DEFAULT_SCAD_A)?);
    let scaled = scaled_design(data, basis, result.scales.clone());
    let theta = to_internal(&result.gamma_mpl, result.intercept, &result.beta_mpl, &scaled.scales);
    let zeroed: Vec<bool> = (0..d2).map(|j| result.zero_set.contains(&j)).collect();
    penalized_stats(
        &scaled,
        &data.y,
        family,
        &penalty,
        &theta,
        &zeroed,
        score_cov,
        SelectOptions::default().lqa_epsilon,
        0.0,
    )
}

/// Sandwich covariance of the nonzero coefficients,
/// `{l'' - n Sigma_lambda}^{-1} cov(l') {l'' - n Sigma_lambda}^{-1}`, with the
/// spline coefficients held at `gamma_mpl`.
pub fn sandwich_covariance(
    result: &SelectionResult,
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    score_cov: ScoreCovariance,
) -> Result<DMatrix<f64>> {
    Ok(stats_for(result, data, basis, family, score_cov)?.covariance)
}

/// Standard errors from [`sandwich_covariance`]; zero for zeroed
/// coefficients.
pub fn sandwich_se(
    result: &SelectionResult,
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    score_cov: ScoreCovariance,
) -> Result<Vec<f64>> {
    let cov = sandwich_covariance(result, data, basis, family, score_cov)?;
    Ok((0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect())
}

/// `(GCV, e(lambda))` recomputed from a result.
pub fn gcv(
    result: &SelectionResult,
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
) -> Result<(f64, f64)> {
    let s = stats_for(result, data, basis, family, ScoreCovariance::default())?;
    Ok((s.gcv, s.effective_params))
}

/// 50 log-spaced values on `[1e-3, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-3, 1e2, 50)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub gcv: Option<f64>,
    pub effective_params: Option<f64>,
    pub zero_set: Vec<usize>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub lambda: f64,
    pub result: SelectionResult,
    pub path: Vec<PathPoint>,
}

/// Grid search over `lambda` with `lambda_j = lambda * SE(beta_j)` from the
/// unpenalized fit; minimizes GCV, breaking ties toward larger `lambda`.
pub fn tune_lambda(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    kind: PenaltyKind,
    grid: &[f64],
    unpenalized: &[usize],
    opts: &SelectOptions,
) -> Result<TuneResult> {
    let init = fit::fit(data, basis, family, &opts.fit)?;
    tune_lambda_from(data, basis, family, &init, kind, DEFAULT_SCAD_A, grid, unpenalized, opts)
}

/// [`tune_lambda`] with a precomputed unpenalized fit and explicit SCAD
/// shape.
#[allow(clippy::too_many_arguments)]
pub fn tune_lambda_from(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    init: &GaplmFit,
    kind: PenaltyKind,
    a: f64,
    grid: &[f64],
    unpenalized: &[usize],
    opts: &SelectOptions,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(GaplmError::Config("lambda grid is empty".into()));
    }
    let scales = column_scales(data, opts.standardize);
    let se_internal: Vec<f64> = init.beta_se().iter().zip(&scales).map(|(se, s)| se * s).collect();
    let fits: Vec<(f64, Result<SelectionResult>)> = grid
        .par_iter()
        .map(|&lambda| {
            let weights = se_internal.iter().map(|se| lambda * se).collect();
            let res = Penalty::new(kind, weights, a).and_then(|p| {
                let p = p.with_unpenalized(unpenalized.to_vec());
                fit_penalized(data, basis, family, &p, init, opts)
            });
            (lambda, res)
        })
        .collect();

    let mut path = Vec::with_capacity(fits.len());
    let mut best: Option<(f64, f64, usize)> = None;
    for (idx, (lambda, res)) in fits.iter().enumerate() {
        match res {
            Ok(r) => {
                let g = r.gcv.unwrap_or(f64::INFINITY);
                path.push(PathPoint {
                    lambda: *lambda,
                    gcv: Some(g),
                    effective_params: Some(r.effective_params),
                    zero_set: r.zero_set.clone(),
                    converged: r.converged,
                    error: None,
                });
                let better = match best {
                    None => true,
                    Some((bg, bl, _)) => {
                        let tol = 1e-10 * bg.abs().max(1e-300);
                        g < bg - tol || ((g - bg).abs() <= tol && *lambda > bl)
                    }
                };
                if better && g.is_finite() {
                    best = Some((g, *lambda, idx));
                }
            }
            Err(e) => path.push(PathPoint {
                lambda: *lambda,
                gcv: None,
                effective_params: None,
                zero_set: Vec::new(),
                converged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    let Some((_, lambda, idx)) = best else {
        return Err(GaplmError::AllFitsFailed(
            path.iter()
                .map(|p| format!("lambda={}: {}", p.lambda, p.error.clone().unwrap_or_else(|| "infinite GCV".into())))
                .collect(),
        ));
    };
    let (_, res) = fits.into_iter().nth(idx).expect("index from enumeration");
    let mut result = res?;
    result.lambda = Some(lambda);
    Ok(TuneResult { lambda, result, path })
}

/// Exhaustive search over subsets of the penalized linear covariates,
/// minimizing `deviance + (#nonzero beta + #spline columns + 1) * log n`.
pub fn best_subset_bic(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    unpenalized: &[usize],
    opts: &FitOptions,
) -> Result<SelectionResult> {
    let d2 = data.d2();
    let candidates: Vec<usize> = (0..d2).filter(|j| !unpenalized.contains(j)).collect();
    if candidates.len() > 20 {
        return Err(GaplmError::TooManySubsets { count: candidates.len() });
    }
    let ns = basis.num_columns();
    let log_n = (data.n() as f64).ln();
    let fits: Vec<(Vec<usize>, Result<GaplmFit>)> = (0..1usize << candidates.len())
        .into_par_iter()
        .map(|mask| {
            let mut cols: Vec<usize> = unpenalized.to_vec();
            cols.extend(
                candidates
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask & (1 << bit) != 0)
                    .map(|(_, &j)| j),
            );
            cols.sort_unstable();
            let sub = data.select_z(&cols);
            let res = fit::fit(&sub, basis, family, opts);
            (cols, res)
        })
        .collect();

    let mut best: Option<(f64, usize)> = None;
    let mut errors = Vec::new();
    let mut nonconverged = 0;
    for (idx, (cols, res)) in fits.iter().enumerate() {
        match res {
            Ok(f) => {
                if !f.converged {
                    nonconverged += 1;
                }
                let bic = f.deviance + (cols.len() + ns + 1) as f64 * log_n;
                let better = match best {
                    None => true,
                    Some((b, bi)) => bic < b || (bic == b && cols.len() < fits[bi].0.len()),
                };
                if better {
                    best = Some((bic, idx));
                }
            }
            Err(e) => errors.push(format!("subset {cols:?}: {e}")),
        }
    }
    let Some((bic, idx)) = best else {
        return Err(GaplmError::AllFitsFailed(errors));
    };
    let (cols, res) = &fits[idx];
    let f = res.as_ref().expect("best subset fit succeeded");
    let mut beta = vec![0.0; d2];
    let mut covariance = DMatrix::zeros(d2, d2);
    for (a, &ja) in cols.iter().enumerate() {
        beta[ja] = f.beta_hat[a];
        for (b, &jb) in cols.iter().enumerate() {
            covariance[(ja, jb)] = f.beta_covariance[(a, b)];
        }
    }
    let mut warnings = f.warnings.clone();
    if !errors.is_empty() {
        warnings.push(format!("{} subset fits failed and were skipped", errors.len()));
    }
    if nonconverged > 0 {
        warnings.push(format!("{nonconverged} subset fits did not converge"));
    }
    Ok(SelectionResult {
        method: "bic".into(),
        beta_names: data.z_names.clone(),
        zero_set: (0..d2).filter(|j| !cols.contains(j)).collect(),
        se: (0..d2).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect(),
        beta_mpl: beta,
        intercept: f.intercept,
        gamma_mpl: f.gamma_hat.clone(),
        covariance,
        gcv: None,
        effective_params: cols.len() as f64,
        deviance: f.deviance,
        bic: Some(bic),
        lambda: None,
        penalty: None,
        scales: vec![1.0; d2],
        iterations: f.iterations,
        converged: f.converged,
        linear_predictor: f.linear_predictor.clone(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scad_derivative_examples() {
        assert_abs_diff_eq!(scad_derivative(1.0, 3.7, 0.5), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(scad_derivative(1.0, 3.7, 2.0), 1.7 / 2.7, epsilon = 1e-15);
        assert_abs_diff_eq!(scad_derivative(1.0, 3.7, 2.0), 0.6296296296296297, epsilon = 1e-15);
        assert_eq!(scad_derivative(1.0, 3.7, 4.0), 0.0);
    }

    #[test]
    fn l1_examples() {
        let p = Penalty::l1(vec![0.3]).unwrap();
        assert_abs_diff_eq!(p.value(0, 2.0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.value(0, -2.0), 0.6, epsilon = 1e-15);
        assert_eq!(p.derivative(0, 2.0), 0.3);
    }

    #[test]
    fn zero_at_origin() {
        for kind in [PenaltyKind::Scad, PenaltyKind::L1, PenaltyKind::L0] {
            let p = Penalty::new(kind, vec![0.7], 3.7).unwrap();
            assert_eq!(p.value(0, 0.0), 0.0);
        }
        let l0 = Penalty::new(PenaltyKind::L0, vec![2.0], 3.7).unwrap();
        assert_eq!(l0.value(0, 0.1), 2.0);
    }

    #[test]
    fn scad_shape_must_exceed_two() {
        assert!(matches!(Penalty::new(PenaltyKind::Scad, vec![1.0], 2.0), Err(GaplmError::Config(_))));
        assert!(Penalty::new(PenaltyKind::L1, vec![1.0], 2.0).is_ok());
        assert!(Penalty::l1(vec![-1.0]).is_err());
    }

    #[test]
    fn unpenalized_indices_are_exempt() {
        let p = Penalty::scad(vec![1.0, 1.0]).unwrap().with_unpenalized(vec![1]);
        assert!(p.is_penalized(0));
        assert!(!p.is_penalized(1));
        assert_eq!(p.value(1, 5.0), 0.0);
    }

    #[test]
    fn grid_endpoints() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 50);
        assert_abs_diff_eq!(g[0], 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(g[49], 1e2, epsilon = 1e-10);
    }
}
