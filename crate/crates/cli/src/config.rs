use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every setting a subcommand can take. Flags and config files fill the same
/// struct; flags win.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// TOML file, or a JSON report whose embedded `config` is re-used.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Output directory for reports; without it JSON goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Master seed; a random one is drawn, printed and recorded if absent.
    #[arg(long)]
    pub seed: Option<u64>,

    /// binomial-logit, gaussian-identity or poisson-log.
    #[arg(long)]
    pub family: Option<String>,

    /// Response column (default: last column not used as a covariate).
    #[arg(long)]
    pub response: Option<String>,

    /// Comma-separated linear covariates.
    #[arg(long, value_delimiter = ',')]
    pub linear: Option<Vec<String>>,

    /// Comma-separated nonparametric covariates.
    #[arg(long, value_delimiter = ',')]
    pub nonparametric: Option<Vec<String>>,

    /// Interior knots per nonparametric covariate ("5,3"); `simulate` also
    /// takes "pe:MAX" and "cv:FOLDS:MAX".
    #[arg(long)]
    pub knots: Option<String>,

    /// Spline order (4 = cubic).
    #[arg(long)]
    pub order: Option<usize>,

    /// Knot placement: quantile or uniform.
    #[arg(long)]
    pub placement: Option<String>,

    /// scad, lasso or bic.
    #[arg(long)]
    pub penalty: Option<String>,

    /// SCAD shape parameter.
    #[arg(long)]
    pub a: Option<f64>,

    /// Comma-separated values or "LO:HI:COUNT" (log-spaced).
    #[arg(long)]
    pub lambda_grid: Option<String>,

    /// Linear covariates that are never penalized.
    #[arg(long, value_delimiter = ',')]
    pub unpenalized: Option<Vec<String>>,

    /// Sandwich middle term: fisher or empirical.
    #[arg(long)]
    pub score_covariance: Option<String>,

    /// Monte Carlo replicates (simulate) or runs (knots experiment).
    #[arg(long)]
    pub reps: Option<usize>,

    /// s1 or s2.
    #[arg(long)]
    pub scenario: Option<String>,

    /// Simulated sample size.
    #[arg(long)]
    pub n: Option<usize>,

    /// Latent correlation for s2.
    #[arg(long)]
    pub rho: Option<f64>,

    /// Comma-separated subset of oracle, scad, lasso, bic.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,

    /// Relative model error denominator: gaplm or linear-glm.
    #[arg(long)]
    pub mrme_baseline: Option<String>,

    /// Grid points for component-curve plot data (0 = none).
    #[arg(long)]
    pub plot_points: Option<usize>,

    /// Cross-validation folds for knot selection.
    #[arg(long)]
    pub folds: Option<usize>,

    /// Largest interior-knot count tried by knot selection.
    #[arg(long)]
    pub max_knots: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Config {
    /// Loads `--config` if given and lays the flags over it.
    pub fn resolve(flags: &Config) -> Result<Config, CliError> {
        let mut base = match &flags.config {
            Some(path) => load(path)?,
            None => Config::default(),
        };
        overlay!(
            base, flags, data, out, seed, family, response, linear, nonparametric, knots, order, placement, penalty, a,
            lambda_grid, unpenalized, score_covariance, reps, scenario, n, rho, methods, mrme_baseline, plot_points,
            folds, max_knots
        );
        Ok(base)
    }
}

fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid JSON in {}: {e}", path.display())))?;
        let inner = value.get("config").cloned().unwrap_or(value);
        serde_json::from_value(inner).map_err(|e| CliError::usage(format!("invalid config in {}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config in {}: {e}", path.display())))
    }
}
