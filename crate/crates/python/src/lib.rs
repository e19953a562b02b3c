//! Python bindings: `Model` for fitting and selection on in-memory or CSV
//! data, plus the simulation scenarios and Monte Carlo runner.

use gaplm::ingest::ModelSpec;
use gaplm::select::PathPoint;
use gaplm::sim::{self, KnotChoice};
use gaplm::{
    AdditiveSplineBasis, Dataset, FamilyKind, FitOptions, GaplmError, GaplmFit, KnotPlacement, Method, PenaltyKind,
    QuasiFamily, Scale, Scenario, ScoreCovariance, SelectOptions, SelectionResult, SimConfig,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: GaplmError) -> PyErr {
    match e {
        GaplmError::Config(_)
        | GaplmError::InvalidInput(_)
        | GaplmError::UnknownColumn { .. }
        | GaplmError::NonNumeric { .. }
        | GaplmError::NoRows => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = GaplmError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Round-trips a serializable value through `json.loads`.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Data plus spline basis, ready to fit.
#[pyclass(module = "gaplm_py")]
struct Model {
    data: Dataset,
    basis: AdditiveSplineBasis,
    family: QuasiFamily,
    warnings: Vec<String>,
}

impl Model {
    fn build(data: Dataset, knots: Vec<usize>, order: usize, placement: &str, family: &str, warnings: Vec<String>) -> PyResult<Self> {
        let d1 = data.d1();
        let counts = match knots.len() {
            n if n == d1 => knots,
            1 => vec![knots[0]; d1],
            0 => vec![0; d1],
            n => return Err(PyValueError::new_err(format!("{n} knot counts for {d1} nonparametric covariates"))),
        };
        let placement: KnotPlacement = parse(placement)?;
        let (basis, mut more) = AdditiveSplineBasis::from_knot_counts(&data, &counts, order, placement).map_err(err)?;
        let mut all = warnings;
        all.append(&mut more);
        Ok(Model {
            data,
            basis,
            family: QuasiFamily::new(parse::<FamilyKind>(family)?),
            warnings: all,
        })
    }

    fn unpenalized_indices(&self, names: &[String]) -> PyResult<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.data
                    .z_names
                    .iter()
                    .position(|z| z == n)
                    .ok_or_else(|| PyValueError::new_err(format!("`{n}` is not a linear covariate")))
            })
            .collect()
    }
}

#[pymethods]
impl Model {
    /// `x` and `z` are lists of columns.
    #[new]
    #[pyo3(signature = (y, x, z, family="binomial-logit", knots=vec![0], order=4, placement="quantile", x_names=None, z_names=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        family: &str,
        knots: Vec<usize>,
        order: usize,
        placement: &str,
        x_names: Option<Vec<String>>,
        z_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let mut data = Dataset::new(y, x, z).map_err(err)?;
        if x_names.is_some() || z_names.is_some() {
            let xn = x_names.unwrap_or_else(|| data.x_names.clone());
            let zn = z_names.unwrap_or_else(|| data.z_names.clone());
            let xr: Vec<&str> = xn.iter().map(String::as_str).collect();
            let zr: Vec<&str> = zn.iter().map(String::as_str).collect();
            let response = data.response_name.clone();
            data = data.with_names(&response, &xr, &zr).map_err(err)?;
        }
        Model::build(data, knots, order, placement, family, Vec::new())
    }

    /// Reads a CSV, dropping rows with a missing model column.
    #[staticmethod]
    #[pyo3(signature = (path, response, linear, nonparametric, family="binomial-logit", knots=vec![0], order=4, placement="quantile"))]
    #[allow(clippy::too_many_arguments)]
    fn from_csv(
        path: &str,
        response: &str,
        linear: Vec<String>,
        nonparametric: Vec<String>,
        family: &str,
        knots: Vec<usize>,
        order: usize,
        placement: &str,
    ) -> PyResult<Self> {
        let spec = ModelSpec {
            response: response.to_string(),
            linear,
            nonparametric,
            family: parse(family)?,
            ..ModelSpec::default()
        };
        let ingested = gaplm::ingest_csv(path, &spec).map_err(err)?;
        Model::build(ingested.data, knots, order, placement, family, ingested.warnings)
    }

    #[getter]
    fn n(&self) -> usize {
        self.data.n()
    }

    #[getter]
    fn linear_names(&self) -> Vec<String> {
        self.data.z_names.clone()
    }

    #[getter]
    fn nonparametric_names(&self) -> Vec<String> {
        self.data.x_names.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }

    /// Unpenalized quasi-likelihood fit.
    #[pyo3(signature = (tolerance=None, max_iterations=None))]
    fn fit(&self, py: Python<'_>, tolerance: Option<f64>, max_iterations: Option<usize>) -> PyResult<Fit> {
        let mut opts = FitOptions::default();
        if let Some(t) = tolerance {
            opts.tolerance = t;
        }
        if let Some(m) = max_iterations {
            opts.max_iterations = m;
        }
        let fit = py
            .detach(|| gaplm::fit(&self.data, &self.basis, &self.family, &opts))
            .map_err(err)?;
        Ok(Fit {
            fit,
            basis: self.basis.clone(),
        })
    }

    /// Penalized selection: `"scad"`, `"lasso"` (GCV over `lambdas`) or
    /// `"bic"` (best subset).
    #[pyo3(signature = (penalty="scad", lambdas=None, unpenalized=vec![], a=3.7, score_covariance="fisher"))]
    fn select(
        &self,
        py: Python<'_>,
        penalty: &str,
        lambdas: Option<Vec<f64>>,
        unpenalized: Vec<String>,
        a: f64,
        score_covariance: &str,
    ) -> PyResult<Selection> {
        let unpenalized = self.unpenalized_indices(&unpenalized)?;
        let mut opts = SelectOptions::default();
        opts.score_covariance = match score_covariance {
            "fisher" => ScoreCovariance::Fisher,
            "empirical" => ScoreCovariance::Empirical,
            other => return Err(PyValueError::new_err(format!("unknown score covariance `{other}`"))),
        };
        let grid = lambdas.unwrap_or_else(gaplm::default_lambda_grid);
        let (result, path) = py
            .detach(|| -> gaplm::Result<(SelectionResult, Vec<PathPoint>)> {
                if penalty == "bic" {
                    let r = gaplm::best_subset_bic(&self.data, &self.basis, &self.family, &unpenalized, &opts.fit)?;
                    return Ok((r, Vec::new()));
                }
                let kind: PenaltyKind = penalty.parse()?;
                let init = gaplm::fit(&self.data, &self.basis, &self.family, &opts.fit)?;
                let t = gaplm::tune_lambda_from(&self.data, &self.basis, &self.family, &init, kind, a, &grid, &unpenalized, &opts)?;
                Ok((t.result, t.path))
            })
            .map_err(err)?;
        Ok(Selection { result, path })
    }
}

#[pyclass(module = "gaplm_py")]
struct Fit {
    fit: GaplmFit,
    basis: AdditiveSplineBasis,
}

#[pymethods]
impl Fit {
    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.fit.beta_hat.clone()
    }

    #[getter]
    fn se(&self) -> Vec<f64> {
        self.fit.beta_se()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.fit.beta_names.clone()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.fit.intercept
    }

    #[getter]
    fn spline_coefficients(&self) -> Vec<f64> {
        self.fit.gamma_hat.clone()
    }

    #[getter]
    fn deviance(&self) -> f64 {
        self.fit.deviance
    }

    #[getter]
    fn converged(&self) -> bool {
        self.fit.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.fit.iterations
    }

    #[getter]
    fn fitted(&self) -> Vec<f64> {
        self.fit.fitted.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.fit.warnings.clone()
    }

    /// Prediction at original-scale `x` and `z`; returns `(value, extrapolated)`.
    #[pyo3(signature = (x, z, scale="mean"))]
    fn predict(&self, x: Vec<f64>, z: Vec<f64>, scale: &str) -> PyResult<(f64, bool)> {
        let scale = match scale {
            "mean" => Scale::Mean,
            "linear" => Scale::Linear,
            other => return Err(PyValueError::new_err(format!("unknown scale `{other}`"))),
        };
        let p = gaplm::predict(&self.fit, &self.basis, &x, &z, scale).map_err(err)?;
        Ok((p.value, p.extrapolated))
    }

    /// Centered component `k` (zero-based) on original-scale grid values.
    fn component(&self, k: usize, grid: Vec<f64>) -> PyResult<Vec<f64>> {
        gaplm::component(&self.fit, &self.basis, k, &grid).map_err(err)
    }

    fn __repr__(&self) -> String {
        let terms: Vec<String> = self
            .fit
            .beta_names
            .iter()
            .zip(&self.fit.beta_hat)
            .map(|(n, b)| format!("{n}={b:.4}"))
            .collect();
        format!("Fit({}, converged={})", terms.join(", "), self.fit.converged)
    }
}

#[pyclass(module = "gaplm_py")]
struct Selection {
    result: SelectionResult,
    path: Vec<PathPoint>,
}

#[pymethods]
impl Selection {
    #[getter]
    fn method(&self) -> String {
        self.result.method.clone()
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.result.beta_mpl.clone()
    }

    /// Standard errors; `None` for coefficients set to zero.
    #[getter]
    fn se(&self) -> Vec<Option<f64>> {
        (0..self.result.beta_mpl.len())
            .map(|j| (!self.result.zero_set.contains(&j)).then(|| self.result.se[j]))
            .collect()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.result.beta_names.clone()
    }

    #[getter]
    fn selected(&self) -> Vec<String> {
        self.result
            .nonzero()
            .into_iter()
            .map(|j| self.result.beta_names[j].clone())
            .collect()
    }

    #[getter]
    fn zero_set(&self) -> Vec<String> {
        self.result.zero_set.iter().map(|&j| self.result.beta_names[j].clone()).collect()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.result.intercept
    }

    #[getter]
    fn lambda_(&self) -> Option<f64> {
        self.result.lambda
    }

    #[getter]
    fn gcv(&self) -> Option<f64> {
        self.result.gcv
    }

    #[getter]
    fn bic(&self) -> Option<f64> {
        self.result.bic
    }

    #[getter]
    fn effective_params(&self) -> f64 {
        self.result.effective_params
    }

    #[getter]
    fn converged(&self) -> bool {
        self.result.converged
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.result.warnings.clone()
    }

    /// GCV path as a list of dicts.
    fn path(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.path)
    }

    fn __repr__(&self) -> String {
        format!("Selection(method={}, selected={:?})", self.result.method, self.selected())
    }
}

/// One simulated dataset: a dict with `y`, `x` and `z` (lists of columns,
/// `x` on `[0, 1]`), `beta` and the true linear predictor `m`.
#[pyfunction]
#[pyo3(signature = (scenario, n, seed, replicate=0, rho=0.5))]
fn generate(py: Python<'_>, scenario: &str, n: usize, seed: u64, replicate: usize, rho: f64) -> PyResult<Py<PyAny>> {
    let scenario: Scenario = parse(scenario)?;
    let mut rng = sim::replicate_rng(seed, replicate);
    let (data, truth) = sim::generate(&mut rng, scenario, n, rho).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("y", data.y)?;
    out.set_item("x", data.x)?;
    out.set_item("z", data.z)?;
    out.set_item("beta", truth.beta)?;
    out.set_item("m", truth.m)?;
    Ok(out.into_any().unbind())
}

/// Monte Carlo study; returns the summary as nested dicts.
#[pyfunction]
#[pyo3(signature = (scenario, n, replicates, seed, knots=None, methods=None, rho=0.5, lambdas=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    scenario: &str,
    n: usize,
    replicates: usize,
    seed: u64,
    knots: Option<Vec<usize>>,
    methods: Option<Vec<String>>,
    rho: f64,
    lambdas: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let mut cfg = SimConfig::new(parse(scenario)?, n, replicates, seed);
    cfg.rho = rho;
    if let Some(knots) = knots {
        cfg.knots = KnotChoice::Fixed { knots };
    }
    if let Some(methods) = methods {
        cfg.methods = methods.iter().map(|m| parse::<Method>(m)).collect::<PyResult<_>>()?;
    }
    if let Some(grid) = lambdas {
        cfg.lambda_grid = grid;
    }
    cfg.validate().map_err(err)?;
    let summary = py.detach(|| gaplm::run_monte_carlo(&cfg)).map_err(err)?;
    to_py(py, &summary)
}

#[pymodule]
fn gaplm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Fit>()?;
    m.add_class::<Selection>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
