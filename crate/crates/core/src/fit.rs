//! Maximum quasi-likelihood fitting of the additive partial linear model
//!
//! ```text
//! g(mu_i) = sum_k eta_k(x_ik) + alpha + z_i' beta,    eta_k(x) = B_k(x)' gamma_k
//! ```
//!
//! by Fisher scoring with step-halving. The parameter vector is laid out as
//! `(gamma, alpha, beta)`: centered spline coefficients for every
//! nonparametric covariate, an intercept (the centered splines cannot carry
//! the overall level), then the linear coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GaplmError, Result};
use crate::family::QuasiFamily;
use crate::linalg;
use crate::spline::AdditiveSplineBasis;

pub const INTERCEPT_NAME: &str = "(Intercept)";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on `max_j |n^{-1} sum_i q1(m_i, y_i) D_ij|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Starting ridge (relative to the mean information diagonal) used when
    /// the information matrix is singular; escalates to `1e-8`.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iterations: 100,
            max_halvings: 30,
            ridge: 0.0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || !(self.ridge >= 0.0) {
            return Err(GaplmError::Config(
                "tolerance and max iterations must be positive, ridge nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Full design matrix `(B_i, 1, Z_i)` and its column names.
pub fn design_matrix(data: &Dataset, basis: &AdditiveSplineBasis) -> (DMatrix<f64>, Vec<String>) {
    let ns = basis.num_columns();
    let p = ns + 1 + data.d2();
    let mut x = DMatrix::zeros(data.n(), p);
    let mut row = vec![0.0; ns];
    let mut xi = vec![0.0; data.d1()];
    for i in 0..data.n() {
        for (k, col) in data.x.iter().enumerate() {
            xi[k] = col[i];
        }
        basis.fill_spline_row(&xi, &mut row);
        for (c, v) in row.iter().enumerate() {
            x[(i, c)] = *v;
        }
        x[(i, ns)] = 1.0;
        for (j, col) in data.z.iter().enumerate() {
            x[(i, ns + 1 + j)] = col[i];
        }
    }
    let mut names = basis.column_names();
    names.push(INTERCEPT_NAME.to_string());
    names.extend(data.z_names.iter().cloned());
    (x, names)
}

/// One quasi-likelihood maximization problem: design, response, optional
/// fixed offset in the linear predictor.
pub(crate) struct Problem<'a> {
    pub x: DMatrix<f64>,
    pub y: &'a [f64],
    pub offset: Option<Vec<f64>>,
    pub family: QuasiFamily,
}

pub(crate) struct Evaluation {
    pub eta: Vec<f64>,
    pub objective: f64,
    pub score: DVector<f64>,
    pub info: DMatrix<f64>,
    pub clamped: usize,
}

impl Problem<'_> {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn eta(&self, theta: &DVector<f64>) -> Vec<f64> {
        let m = &self.x * theta;
        match &self.offset {
            Some(off) => m.iter().zip(off).map(|(a, b)| a + b).collect(),
            None => m.iter().copied().collect(),
        }
    }

    /// `sum_i Q(m_i, y_i)` with clamped linear predictors.
    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        self.eta(theta)
            .iter()
            .zip(self.y)
            .map(|(&m, &y)| self.family.q_unchecked(self.family.clamp_linear_predictor(m).0, y))
            .sum()
    }

    pub fn evaluate(&self, theta: &DVector<f64>) -> Evaluation {
        let eta = self.eta(theta);
        let n = self.n();
        let mut q1 = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut objective = 0.0;
        let mut clamped = 0;
        for i in 0..n {
            let (m, was_clamped) = self.family.clamp_linear_predictor(eta[i]);
            clamped += was_clamped as usize;
            let y = self.y[i];
            objective += self.family.q_unchecked(m, y);
            q1[i] = (y - self.family.mean(m)) * self.family.rho1_unchecked(m);
            w[i] = self.family.weight(m);
        }
        let score = self.x.tr_mul(&DVector::from_vec(q1));
        let info = linalg::weighted_gram(&self.x, &w);
        Evaluation {
            eta,
            objective,
            score,
            info,
            clamped,
        }
    }

    /// Per-row `(m_i, q1_i, rho_2(m_i))` with clamped linear predictors.
    pub fn working(&self, theta: &DVector<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let eta = self.eta(theta);
        let mut q1 = Vec::with_capacity(eta.len());
        let mut w = Vec::with_capacity(eta.len());
        for (&m, &y) in eta.iter().zip(self.y) {
            let m = self.family.clamp_linear_predictor(m).0;
            q1.push((y - self.family.mean(m)) * self.family.rho1_unchecked(m));
            w.push(self.family.weight(m));
        }
        (eta, q1, w)
    }

    /// One weighted least squares step from the family's default starting
    /// means.
    fn start_from_response(&self, ridge: f64) -> Result<DVector<f64>> {
        let n = self.n();
        let ybar = self.y.iter().sum::<f64>() / n as f64;
        let mut w = vec![0.0; n];
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mu0 = self.family.initial_mean(self.y[i], ybar);
            let m0 = self.family.linear_predictor(mu0);
            let d = self.family.link.mu_eta(m0);
            w[i] = self.family.weight(m0);
            let off = self.offset.as_ref().map_or(0.0, |o| o[i]);
            z[i] = m0 - off + (self.y[i] - mu0) / d;
        }
        let gram = linalg::weighted_gram(&self.x, &w);
        let wz = DVector::from_iterator(n, (0..n).map(|i| w[i] * z[i]));
        let rhs = self.x.tr_mul(&wz);
        Ok(linalg::solve_spd(&gram, &rhs, ridge)?.0)
    }
}

pub(crate) struct ScoringOutcome {
    pub theta: DVector<f64>,
    pub eval: Evaluation,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub history: Vec<f64>,
    pub ridge_used: f64,
    pub stalled: bool,
}

pub(crate) fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Fisher scoring with step-halving on the quasi-likelihood. Steps are only
/// accepted if the objective does not decrease.
pub(crate) fn fisher_scoring(
    problem: &Problem<'_>,
    start: Option<DVector<f64>>,
    opts: &FitOptions,
) -> Result<ScoringOutcome> {
    let n = problem.n() as f64;
    let mut theta = match start {
        Some(t) => t,
        None => problem.start_from_response(opts.ridge)?,
    };
    let mut eval = problem.evaluate(&theta);
    let mut history = vec![eval.objective];
    let mut iterations = 0;
    let mut ridge_used: f64 = 0.0;
    let mut stalled = false;

    while iterations < opts.max_iterations {
        if sup_norm(&eval.score) / n <= opts.tolerance {
            break;
        }
        let (delta, used) = linalg::solve_spd(&eval.info, &eval.score, opts.ridge)?;
        ridge_used = ridge_used.max(used);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &theta + &delta * step;
            let value = problem.objective(&candidate);
            if value.is_finite() && value >= eval.objective {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(candidate) => {
                theta = candidate;
                eval = problem.evaluate(&theta);
                history.push(eval.objective);
                iterations += 1;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    // Below tolerance a full step is still quadratically convergent; take a
    // few more while they help so coefficients are accurate well past the
    // score threshold.
    if !stalled && sup_norm(&eval.score) / n <= opts.tolerance {
        for _ in 0..3 {
            let current = sup_norm(&eval.score);
            if current == 0.0 {
                break;
            }
            let Ok((delta, _)) = linalg::solve_spd(&eval.info, &eval.score, opts.ridge) else {
                break;
            };
            let candidate = &theta + &delta;
            let next = problem.evaluate(&candidate);
            // Objective differences are lost in rounding here. For a concave
            // (canonical) objective f(t + d) - f(t) >= grad f(t + d)' d, so a nonnegative
            // directional derivative at the candidate certifies ascent.
            let certified = next.objective >= eval.objective
                || (problem.family.is_canonical() && next.score.dot(&delta) >= 0.0);
            if !(certified && sup_norm(&next.score) < current) {
                break;
            }
            theta = candidate;
            eval = next;
            iterations += 1;
        }
    }
    // re-evaluated from scratch rather than trusting the loop state
    let fresh = problem.evaluate(&theta);
    let score_norm = sup_norm(&fresh.score) / n;
    Ok(ScoringOutcome {
        theta,
        converged: score_norm <= opts.tolerance,
        eval: fresh,
        iterations,
        score_norm,
        history,
        ridge_used,
        stalled,
    })
}

/// A fitted additive partial linear model.
#[derive(Clone, Debug)]
pub struct GaplmFit {
    pub family: QuasiFamily,
    pub column_names: Vec<String>,
    pub spline_block_sizes: Vec<usize>,
    /// `(gamma, alpha, beta)`.
    pub coefficients: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub intercept: f64,
    pub beta_hat: Vec<f64>,
    pub beta_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    /// `sum_i Q(m_i, y_i)` at the final iterate.
    pub quasi_likelihood: f64,
    /// Objective after every accepted step-halving iteration, starting value
    /// first. Polishing steps taken once the score is below tolerance are not
    /// recorded.
    pub history: Vec<f64>,
    pub deviance: f64,
    pub linear_predictor: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Inverse information of all parameters, scaled by the dispersion.
    pub covariance: DMatrix<f64>,
    /// `d2 x d2` block of [`GaplmFit::covariance`] belonging to `beta`.
    pub beta_covariance: DMatrix<f64>,
    pub pearson_dispersion: f64,
    pub clamped_rows: usize,
    pub warnings: Vec<String>,
}

impl GaplmFit {
    pub fn n_spline(&self) -> usize {
        self.gamma_hat.len()
    }

    pub fn beta_se(&self) -> Vec<f64> {
        (0..self.beta_hat.len())
            .map(|j| self.beta_covariance[(j, j)].max(0.0).sqrt())
            .collect()
    }

    pub fn intercept_se(&self) -> f64 {
        let c = self.n_spline();
        self.covariance[(c, c)].max(0.0).sqrt()
    }
}

/// Fits the model by Fisher scoring from a GLM start (`gamma = 0`, `beta`
/// and intercept from a fit without the spline columns).
pub fn fit(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    opts: &FitOptions,
) -> Result<GaplmFit> {
    opts.validate()?;
    if basis.d1() != data.d1() {
        return Err(GaplmError::InvalidInput(format!(
            "basis has {} covariates, dataset has {}",
            basis.d1(),
            data.d1()
        )));
    }
    if let Some(bad) = data.y.iter().find(|&&y| !family.valid_response(y)) {
        return Err(GaplmError::InvalidInput(format!(
            "response value {bad} is outside the range of the {} family",
            family.kind
        )));
    }
    let (x, names) = design_matrix(data, basis);
    let p = x.ncols();
    if data.n() <= p {
        return Err(GaplmError::InvalidInput(format!(
            "need more observations ({}) than parameters ({p})",
            data.n()
        )));
    }
    let dependent = linalg::dependent_columns(&x, 1e-9);
    if !dependent.is_empty() {
        return Err(GaplmError::RankDeficient {
            columns: dependent.into_iter().map(|j| names[j].clone()).collect(),
        });
    }

    let ns = basis.num_columns();
    let mut warnings = Vec::new();
    let start = if ns == 0 {
        None
    } else {
        let glm = Problem {
            x: x.columns(ns, p - ns).into_owned(),
            y: &data.y,
            offset: None,
            family: *family,
        };
        let out = fisher_scoring(&glm, None, opts)?;
        if !out.converged {
            warnings.push("starting GLM fit did not converge".to_string());
        }
        let mut theta = DVector::zeros(p);
        theta.rows_mut(ns, p - ns).copy_from(&out.theta);
        Some(theta)
    };

    let problem = Problem {
        x,
        y: &data.y,
        offset: None,
        family: *family,
    };
    let out = fisher_scoring(&problem, start, opts)?;
    finish_fit(data, basis, family, names, out, warnings)
}

fn finish_fit(
    data: &Dataset,
    basis: &AdditiveSplineBasis,
    family: &QuasiFamily,
    names: Vec<String>,
    out: ScoringOutcome,
    mut warnings: Vec<String>,
) -> Result<GaplmFit> {
    let n = data.n();
    let ns = basis.num_columns();
    let p = out.theta.len();
    if out.stalled && !out.converged {
        warnings.push("step-halving failed to increase the quasi-likelihood".into());
    }
    if !out.converged {
        warnings.push(format!(
            "did not converge after {} iterations (score norm {:.3e})",
            out.iterations, out.score_norm
        ));
    }
    if out.eval.clamped * 10 > n {
        warnings.push(format!(
            "{} of {n} linear predictors at the clamp; possible separation",
            out.eval.clamped
        ));
    }
    if out.ridge_used > 0.0 {
        warnings.push(format!("information matrix needed ridge {:.0e}", out.ridge_used));
    }
    let (inv, used) = linalg::inverse_spd(&out.eval.info, 0.0)?;
    if used > 0.0 {
        warnings.push(format!("covariance used ridge-jittered inverse ({used:.0e})"));
    }
    let covariance = inv * family.dispersion;
    let beta_covariance = covariance.view((ns + 1, ns + 1), (p - ns - 1, p - ns - 1)).into_owned();
    let fitted: Vec<f64> = out
        .eval
        .eta
        .iter()
        .map(|&m| family.mean(family.clamp_linear_predictor(m).0))
        .collect();
    let pearson: f64 = data
        .y
        .iter()
        .zip(&fitted)
        .map(|(&y, &mu)| (y - mu).powi(2) / family.variance.value(mu).max(f64::MIN_POSITIVE))
        .sum::<f64>()
        / (n - p) as f64;
    let theta: Vec<f64> = out.theta.iter().copied().collect();
    Ok(GaplmFit {
        family: *family,
        spline_block_sizes: basis.block_sizes(),
        gamma_hat: theta[..ns].to_vec(),
        intercept: theta[ns],
        beta_hat: theta[ns + 1..].to_vec(),
        beta_names: data.z_names.clone(),
        column_names: names,
        coefficients: theta,
        converged: out.converged,
        iterations: out.iterations,
        score_norm: out.score_norm,
        quasi_likelihood: out.eval.objective,
        history: out.history,
        deviance: family.deviance_linear(&data.y, &out.eval.eta),
        linear_predictor: out.eval.eta,
        fitted,
        covariance,
        beta_covariance,
        pearson_dispersion: pearson,
        clamped_rows: out.eval.clamped,
        warnings,
    })
}

/// `beta` block of the inverse information of the joint `(gamma, alpha,
/// beta)` problem at the fitted values, i.e. the information for `beta`
/// with the spline coefficients and intercept profiled out.
pub fn beta_covariance(fit: &GaplmFit, data: &Dataset, basis: &AdditiveSplineBasis) -> Result<DMatrix<f64>> {
    let (x, _) = design_matrix(data, basis);
    let problem = Problem {
        x,
        y: &data.y,
        offset: None,
        family: fit.family,
    };
    let eval = problem.evaluate(&DVector::from_column_slice(&fit.coefficients));
    let (inv, _) = linalg::inverse_spd(&eval.info, 0.0)?;
    let ns = basis.num_columns();
    let d2 = fit.beta_hat.len();
    Ok(inv.view((ns + 1, ns + 1), (d2, d2)).into_owned() * fit.family.dispersion)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Linear,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// Some nonparametric value was outside the training range and was
    /// clamped to it.
    pub extrapolated: bool,
}

fn linear_predictor_at(
    gamma: &[f64],
    intercept: f64,
    beta: &[f64],
    basis: &AdditiveSplineBasis,
    x_raw: &[f64],
    z: &[f64],
) -> Result<Prediction> {
    if x_raw.len() != basis.d1() || z.len() != beta.len() {
        return Err(GaplmError::InvalidInput(format!(
            "expected {} nonparametric and {} linear values",
            basis.d1(),
            beta.len()
        )));
    }
    let mut extrapolated = false;
    let unit: Vec<f64> = x_raw
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let (u, out) = basis.to_unit(k, v);
            extrapolated |= out;
            u
        })
        .collect();
    let row = basis.design_row(&unit, z)?;
    let ns = basis.num_columns();
    let spline: f64 = row[..ns].iter().zip(gamma).map(|(a, b)| a * b).sum();
    let linear: f64 = row[ns..].iter().zip(beta).map(|(a, b)| a * b).sum();
    Ok(Prediction {
        value: spline + intercept + linear,
        extrapolated,
    })
}

/// `eta_hat(x) + alpha + z' beta` (linear scale) or its inverse link. `x`
/// is on the covariates' original scale.
pub fn predict(
    fit: &GaplmFit,
    basis: &AdditiveSplineBasis,
    x: &[f64],
    z: &[f64],
    scale: Scale,
) -> Result<Prediction> {
    let mut p = linear_predictor_at(&fit.gamma_hat, fit.intercept, &fit.beta_hat, basis, x, z)?;
    if scale == Scale::Mean {
        p.value = fit.family.mean(p.value);
    }
    Ok(p)
}

pub(crate) fn component_values(
    gamma: &[f64],
    basis: &AdditiveSplineBasis,
    k: usize,
    grid_unit: &[f64],
) -> Result<Vec<f64>> {
    if k >= basis.d1() {
        return Err(GaplmError::InvalidInput(format!(
            "component index {k} out of range for {} nonparametric covariates",
            basis.d1()
        )));
    }
    let offset = basis.block_offsets()[k];
    let size = basis.block_sizes()[k];
    let coef = &gamma[offset..offset + size];
    grid_unit
        .iter()
        .map(|&u| {
            let b = basis.eval_centered(k, u)?;
            Ok(b.iter().zip(coef).map(|(a, c)| a * c).sum())
        })
        .collect()
}

/// Centered component `eta_hat_k` on a grid of original-scale values
/// (clamped to the training range). `k` is zero-based.
pub fn component(fit: &GaplmFit, basis: &AdditiveSplineBasis, k: usize, grid: &[f64]) -> Result<Vec<f64>> {
    if k >= basis.d1() {
        return Err(GaplmError::InvalidInput(format!(
            "component index {k} out of range for {} nonparametric covariates",
            basis.d1()
        )));
    }
    let unit: Vec<f64> = grid.iter().map(|&v| basis.to_unit(k, v).0).collect();
    component_values(&fit.gamma_hat, basis, k, &unit)
}
