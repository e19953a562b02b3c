//! Serializable summaries of fits and selections.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::fit::{GaplmFit, INTERCEPT_NAME};
use crate::ingest::ModelSpec;
use crate::select::{PathPoint, SelectionResult};
use crate::spline::{AdditiveSplineBasis, KnotReport};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    /// `None` for coefficients set to zero by a selector.
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
}

impl Coefficient {
    pub fn new(name: &str, estimate: f64, se: Option<f64>) -> Self {
        let z = se.filter(|s| *s > 0.0).map(|s| estimate / s);
        let normal = Normal::new(0.0, 1.0).expect("standard normal parameters are valid");
        Coefficient {
            name: name.to_string(),
            estimate,
            se,
            z,
            p_value: z.map(|z| 2.0 * normal.sf(z.abs())),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub spec: ModelSpec,
    pub data: DataSummary,
    pub family: String,
    pub knots: Vec<KnotReport>,
    pub intercept: Coefficient,
    pub coefficients: Vec<Coefficient>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub quasi_likelihood: f64,
    pub deviance: f64,
    pub pearson_dispersion: f64,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(spec: &ModelSpec, data: DataSummary, basis: &AdditiveSplineBasis, fit: &GaplmFit) -> Self {
        let se = fit.beta_se();
        FitReport {
            spec: spec.clone(),
            data,
            family: fit.family.name().to_string(),
            knots: basis.report(),
            intercept: Coefficient::new(INTERCEPT_NAME, fit.intercept, Some(fit.intercept_se())),
            coefficients: fit
                .beta_names
                .iter()
                .zip(&fit.beta_hat)
                .zip(&se)
                .map(|((n, b), s)| Coefficient::new(n, *b, Some(*s)))
                .collect(),
            converged: fit.converged,
            iterations: fit.iterations,
            score_norm: fit.score_norm,
            quasi_likelihood: fit.quasi_likelihood,
            deviance: fit.deviance,
            pearson_dispersion: fit.pearson_dispersion,
            warnings: fit.warnings.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectReport {
    pub spec: ModelSpec,
    pub data: DataSummary,
    pub method: String,
    pub lambda: Option<f64>,
    pub a: Option<f64>,
    pub unpenalized: Vec<String>,
    pub selected: Vec<String>,
    pub zero_set: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<Coefficient>,
    pub gcv: Option<f64>,
    pub effective_params: f64,
    pub deviance: f64,
    pub bic: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub knots: Vec<KnotReport>,
    pub path: Vec<PathPoint>,
    pub warnings: Vec<String>,
}

impl SelectReport {
    pub fn new(
        spec: &ModelSpec,
        data: DataSummary,
        basis: &AdditiveSplineBasis,
        result: &SelectionResult,
        unpenalized: &[usize],
        path: Vec<PathPoint>,
    ) -> Self {
        let name = |j: usize| result.beta_names[j].clone();
        let coefficients = (0..result.beta_mpl.len())
            .map(|j| {
                let zero = result.zero_set.contains(&j);
                Coefficient::new(&name(j), result.beta_mpl[j], (!zero).then(|| result.se[j]))
            })
            .collect();
        SelectReport {
            spec: spec.clone(),
            data,
            method: result.method.clone(),
            lambda: result.lambda,
            a: result.penalty.as_ref().map(|p| p.a),
            unpenalized: unpenalized.iter().map(|&j| name(j)).collect(),
            selected: result.nonzero().into_iter().map(name).collect(),
            zero_set: result.zero_set.iter().map(|&j| name(j)).collect(),
            intercept: result.intercept,
            coefficients,
            gcv: result.gcv,
            effective_params: result.effective_params,
            deviance: result.deviance,
            bic: result.bic,
            converged: result.converged,
            iterations: result.iterations,
            knots: basis.report(),
            path,
            warnings: result.warnings.clone(),
        }
    }
}

/// Aligned text table of coefficients; zeroed entries show "-" for the SE.
pub fn coefficient_table(intercept: Option<&Coefficient>, rows: &[Coefficient]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let all: Vec<&Coefficient> = intercept.into_iter().chain(rows).collect();
    let width = all.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:>10}  {:>10}  {:>8}  {:>8}\n", "term", "estimate", "se", "z", "p");
    for c in all {
        out.push_str(&format!(
            "{:<width$}  {:>10.4}  {:>10}  {:>8}  {:>8}\n",
            c.name,
            c.estimate,
            fmt(c.se),
            fmt(c.z),
            fmt(c.p_value)
        ));
    }
    out
}
