use std::fmt::Write as _;
use std::path::Path;

use gaplm::ingest::{csv_header, suggest_roles};
use gaplm::report::{coefficient_table, DataSummary, FitReport, SelectReport};
use gaplm::select::{log_grid, PathPoint};
use gaplm::sim::{self, KnotChoice, KnotCriterion, MrmeBaseline};
use gaplm::{
    default_lambda_grid, AdditiveSplineBasis, FamilyKind, FitOptions, Ingested, KnotPlacement, Method, ModelSpec,
    PenaltyKind, QuasiFamily, Scenario, ScoreCovariance, SelectOptions, SimConfig,
};
use serde::Serialize;

use crate::config::Config;
use crate::CliError;

type CliResult<T> = Result<T, CliError>;

/// Columns with at most this many integer levels count as discrete when
/// roles are not given.
const DISCRETE_LEVELS: usize = 10;

fn parse<T: std::str::FromStr>(value: &str, what: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("invalid {what} `{value}`")))
}

fn parse_list<T: std::str::FromStr>(value: &str, what: &str) -> CliResult<Vec<T>> {
    value.split(',').map(|v| parse(v, what)).collect()
}

fn family(cfg: &Config) -> CliResult<FamilyKind> {
    match &cfg.family {
        Some(f) => Ok(f.parse()?),
        None => Ok(FamilyKind::BinomialLogit),
    }
}

fn placement(cfg: &Config) -> CliResult<KnotPlacement> {
    match &cfg.placement {
        Some(p) => Ok(p.parse()?),
        None => Ok(KnotPlacement::Quantile),
    }
}

fn lambda_grid(cfg: &Config) -> CliResult<Vec<f64>> {
    let Some(text) = &cfg.lambda_grid else {
        return Ok(default_lambda_grid());
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, hi, count] => {
            let (lo, hi): (f64, f64) = (parse(lo, "grid bound")?, parse(hi, "grid bound")?);
            let count: usize = parse(count, "grid size")?;
            if !(lo > 0.0 && hi >= lo) || count == 0 {
                return Err(CliError::usage("log grid needs 0 < LO <= HI and COUNT >= 1"));
            }
            log_grid(lo, hi, count)
        }
        [_] => parse_list(text, "lambda")?,
        _ => return Err(CliError::usage(format!("invalid lambda grid `{text}`"))),
    };
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(CliError::usage("lambda values must be nonnegative"));
    }
    Ok(grid)
}

fn ensure_seed(cfg: &mut Config) -> u64 {
    *cfg.seed.get_or_insert_with(|| {
        let seed = rand::random::<u64>();
        eprintln!("seed: {seed}");
        seed
    })
}

fn data_path(cfg: &Config) -> CliResult<&Path> {
    let path = cfg.data.as_deref().ok_or_else(|| CliError::usage("--data is required"))?;
    if !path.is_file() {
        return Err(CliError::io(format!("cannot read data file {}", path.display())));
    }
    Ok(path)
}

/// Fills in the column roles and builds the model spec.
fn model_spec(cfg: &mut Config) -> CliResult<ModelSpec> {
    let path = data_path(cfg)?.to_path_buf();
    let header = csv_header(&path)?;
    let listed: Vec<String> = cfg
        .linear
        .iter()
        .chain(&cfg.nonparametric)
        .flatten()
        .cloned()
        .collect();
    let response = match &cfg.response {
        Some(r) => r.clone(),
        None => header
            .iter()
            .rev()
            .find(|h| !listed.contains(h))
            .cloned()
            .ok_or_else(|| CliError::usage("no column left for the response"))?,
    };
    if cfg.linear.is_none() && cfg.nonparametric.is_none() {
        let rest: Vec<String> = header.iter().filter(|h| **h != response).cloned().collect();
        let (linear, nonparametric) = suggest_roles(&path, &rest, DISCRETE_LEVELS)?;
        cfg.linear = Some(linear);
        cfg.nonparametric = Some(nonparametric);
    }
    cfg.response = Some(response.clone());
    let nonparametric = cfg.nonparametric.clone().unwrap_or_default();
    let knots = match &cfg.knots {
        Some(k) => parse_list(k, "knot count")?,
        None => vec![0; nonparametric.len().max(1)],
    };
    let spec = ModelSpec {
        response,
        linear: cfg.linear.clone().unwrap_or_default(),
        nonparametric,
        family: family(cfg)?,
        knots,
        order: cfg.order.unwrap_or(4),
        placement: placement(cfg)?,
        seed: cfg.seed,
    };
    spec.validate()?;
    Ok(spec)
}

struct Loaded {
    spec: ModelSpec,
    ingested: Ingested,
    basis: AdditiveSplineBasis,
    family: QuasiFamily,
    warnings: Vec<String>,
}

impl Loaded {
    fn summary(&self) -> DataSummary {
        DataSummary {
            n: self.ingested.data.n(),
            rows_read: self.ingested.rows_read,
            rows_dropped: self.ingested.rows_dropped,
        }
    }
}

fn load(cfg: &mut Config) -> CliResult<Loaded> {
    let spec = model_spec(cfg)?;
    let ingested = gaplm::ingest_csv(data_path(cfg)?, &spec)?;
    let (basis, knot_warnings) =
        AdditiveSplineBasis::from_knot_counts(&ingested.data, &spec.knot_counts()?, spec.order, spec.placement)?;
    let mut warnings = ingested.warnings.clone();
    warnings.extend(knot_warnings);
    Ok(Loaded {
        family: QuasiFamily::new(spec.family),
        spec,
        ingested,
        basis,
        warnings,
    })
}

/// Embeds the resolved settings, minus the output directory, so a report can
/// be fed back through `--config`.
fn with_config<T: Serialize>(report: &T, cfg: &Config) -> CliResult<serde_json::Value> {
    let cfg = Config { out: None, ..cfg.clone() };
    let mut value = serde_json::to_value(report).map_err(|e| CliError::io(e.to_string()))?;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert(
            "config".into(),
            serde_json::to_value(&cfg).map_err(|e| CliError::io(e.to_string()))?,
        );
    }
    Ok(value)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

/// JSON to `--out/<name>` plus a human summary on stdout, or JSON on stdout.
fn emit(cfg: &Config, name: &str, value: &serde_json::Value, human: &str) -> CliResult<()> {
    match &cfg.out {
        Some(dir) => {
            write_file(dir, name, &pretty(value))?;
            print!("{human}");
            Ok(())
        }
        None => {
            print!("{}", pretty(value));
            Ok(())
        }
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn run_fit(flags: &Config) -> CliResult<()> {
    let mut cfg = Config::resolve(flags)?;
    let loaded = load(&mut cfg)?;
    let fit = gaplm::fit(&loaded.ingested.data, &loaded.basis, &loaded.family, &FitOptions::default())?;
    let mut report = FitReport::new(&loaded.spec, loaded.summary(), &loaded.basis, &fit);
    report.warnings.splice(0..0, loaded.warnings.iter().cloned());
    warn_all(&report.warnings);
    let mut human = format!(
        "n = {}, converged = {}, iterations = {}, deviance = {:.4}\n",
        report.data.n, report.converged, report.iterations, report.deviance
    );
    human.push_str(&coefficient_table(Some(&report.intercept), &report.coefficients));
    emit(&cfg, "fit.json", &with_config(&report, &cfg)?, &human)
}

fn indices_of(names: &[String], all: &[String]) -> CliResult<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            all.iter().position(|a| a == n).ok_or_else(|| {
                CliError::usage(format!("--unpenalized `{n}` is not a linear covariate ({})", all.join(", ")))
            })
        })
        .collect()
}

pub fn run_select(flags: &Config) -> CliResult<()> {
    let mut cfg = Config::resolve(flags)?;
    let loaded = load(&mut cfg)?;
    let data = &loaded.ingested.data;
    let unpenalized = indices_of(&cfg.unpenalized.clone().unwrap_or_default(), &data.z_names)?;
    let penalty = cfg.penalty.clone().unwrap_or_else(|| "scad".into());
    let mut opts = SelectOptions::default();
    if let Some(sc) = &cfg.score_covariance {
        opts.score_covariance = match sc.as_str() {
            "fisher" => ScoreCovariance::Fisher,
            "empirical" => ScoreCovariance::Empirical,
            other => return Err(CliError::usage(format!("unknown score covariance `{other}`"))),
        };
    }
    let (result, path): (_, Vec<PathPoint>) = if penalty == "bic" {
        (
            gaplm::best_subset_bic(data, &loaded.basis, &loaded.family, &unpenalized, &opts.fit)?,
            Vec::new(),
        )
    } else {
        let kind: PenaltyKind = penalty.parse()?;
        if kind == PenaltyKind::L0 {
            return Err(CliError::usage("use --penalty bic for the L0 penalty"));
        }
        let init = gaplm::fit(data, &loaded.basis, &loaded.family, &opts.fit)?;
        let tuned = gaplm::tune_lambda_from(
            data,
            &loaded.basis,
            &loaded.family,
            &init,
            kind,
            cfg.a.unwrap_or(gaplm::select::DEFAULT_SCAD_A),
            &lambda_grid(&cfg)?,
            &unpenalized,
            &opts,
        )?;
        (tuned.result, tuned.path)
    };
    let mut report = SelectReport::new(&loaded.spec, loaded.summary(), &loaded.basis, &result, &unpenalized, path);
    report.warnings.splice(0..0, loaded.warnings.iter().cloned());
    warn_all(&report.warnings);
    let mut human = format!(
        "method = {}, lambda = {}, selected = [{}], zero = [{}]\n",
        report.method,
        report.lambda.map_or_else(|| "-".into(), |l| format!("{l:.4}")),
        report.selected.join(", "),
        report.zero_set.join(", ")
    );
    human.push_str(&coefficient_table(None, &report.coefficients));
    emit(&cfg, "select.json", &with_config(&report, &cfg)?, &human)
}

fn knot_choice(cfg: &Config, n: usize) -> CliResult<KnotChoice> {
    let Some(text) = &cfg.knots else {
        let knots = if n <= 200 { vec![2, 2] } else { vec![5, 3] };
        return Ok(KnotChoice::Fixed { knots });
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["pe", max] => Ok(KnotChoice::Pe { max: parse(max, "knot maximum")? }),
        ["cv", folds, max] => Ok(KnotChoice::Cv {
            folds: parse(folds, "fold count")?,
            max: parse(max, "knot maximum")?,
        }),
        [_] => Ok(KnotChoice::Fixed {
            knots: parse_list(text, "knot count")?,
        }),
        _ => Err(CliError::usage(format!("invalid knot setting `{text}`"))),
    }
}

fn sim_config(cfg: &mut Config) -> CliResult<SimConfig> {
    let seed = ensure_seed(cfg);
    let scenario: Scenario = parse(cfg.scenario.as_deref().unwrap_or("s1"), "scenario")?;
    let n = cfg.n.unwrap_or(400);
    let mut sc = SimConfig::new(scenario, n, cfg.reps.unwrap_or(100), seed);
    sc.rho = cfg.rho.unwrap_or(0.5);
    sc.knots = knot_choice(cfg, n)?;
    if let Some(methods) = &cfg.methods {
        sc.methods = methods.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?;
    }
    sc.order = cfg.order.unwrap_or(4);
    sc.placement = placement(cfg)?;
    sc.lambda_grid = lambda_grid(cfg)?;
    sc.mrme_baseline = match cfg.mrme_baseline.as_deref() {
        None | Some("gaplm") => MrmeBaseline::Gaplm,
        Some("linear-glm") => MrmeBaseline::LinearGlm,
        Some(other) => return Err(CliError::usage(format!("unknown MRME baseline `{other}`"))),
    };
    sc.curve_points = cfg.plot_points.unwrap_or(0);
    sc.validate()?;
    Ok(sc)
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn run_simulate(flags: &Config) -> CliResult<()> {
    let mut cfg = Config::resolve(flags)?;
    let sc = sim_config(&mut cfg)?;
    let summary = gaplm::run_monte_carlo(&sc)?;

    let mut table = String::from("method\tC\tI\tMRME\tC_se\tI_se\treplicates\tfailures\n");
    for m in &summary.methods {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.method.name(),
            fmt_f(m.c),
            fmt_f(m.i),
            fmt_f(m.mrme),
            fmt_f(m.c_se),
            fmt_f(m.i_se),
            m.replicates_used,
            m.failures
        );
    }
    let Some(dir) = cfg.out.clone() else {
        print!("{table}");
        eprintln!("{} of {} replicates did not converge", summary.nonconverged, sc.replicates);
        return Ok(());
    };
    write_file(&dir, "table1.tsv", &table)?;

    let mut reps = String::from(
        "replicate,knots,converged,eta_error,method,correct_zeros,incorrect_zeros,model_error,relative_model_error,prediction_error,lambda,beta\n",
    );
    for r in &summary.replicates {
        let knots = r.knots.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
        if r.methods.is_empty() {
            let _ = writeln!(reps, "{},{knots},{},{},,,,,,,,", r.replicate, r.converged, r.eta_error);
        }
        for m in &r.methods {
            let beta = m.beta.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(";");
            let _ = writeln!(
                reps,
                "{},{knots},{},{},{},{},{},{},{},{},{},{beta}",
                r.replicate,
                r.converged,
                r.eta_error,
                m.method.name(),
                m.correct_zeros,
                m.incorrect_zeros,
                m.model_error,
                m.relative_model_error,
                m.prediction_error,
                m.lambda.map_or_else(String::new, |l| l.to_string()),
            );
        }
    }
    write_file(&dir, "replicates.csv", &reps)?;

    if !summary.curves.is_empty() {
        let mut curves = String::from("covariate\tx\ttruth\tmean\tlower\tupper\n");
        for c in &summary.curves {
            for g in 0..c.grid.len() {
                let _ = writeln!(
                    curves,
                    "x{}\t{}\t{}\t{}\t{}\t{}",
                    c.covariate + 1,
                    c.grid[g],
                    c.truth[g],
                    c.mean[g],
                    c.lower[g],
                    c.upper[g]
                );
            }
        }
        write_file(&dir, "curves.tsv", &curves)?;
    }
    write_file(&dir, "summary.json", &pretty(&with_config(&summary, &cfg)?))?;
    print!("{table}");
    Ok(())
}

pub fn run_knots(flags: &Config) -> CliResult<()> {
    let mut cfg = Config::resolve(flags)?;
    let seed = ensure_seed(&mut cfg);
    let max = cfg.max_knots.unwrap_or(7);
    if cfg.data.is_some() {
        let loaded = load(&mut cfg)?;
        let folds = cfg.folds.unwrap_or(5);
        let candidates = vec![(0..=max).collect::<Vec<_>>(); loaded.basis.d1()];
        let selection = sim::select_knots(
            &loaded.ingested.data,
            &loaded.family,
            &candidates,
            KnotCriterion::Cv { folds, seed },
            loaded.spec.order,
            loaded.spec.placement,
            &FitOptions::default(),
        )?;
        warn_all(&selection.warnings);
        let human = format!(
            "selected interior knots ({}): {:?}, {folds}-fold deviance {:.4}\n",
            loaded.spec.nonparametric.join(", "),
            selection.knots,
            selection.score
        );
        return emit(&cfg, "knots.json", &with_config(&selection, &cfg)?, &human);
    }
    let scenario: Scenario = parse(cfg.scenario.as_deref().unwrap_or("s1"), "scenario")?;
    let n = cfg.n.unwrap_or(100);
    let runs = cfg.reps.unwrap_or(200);
    let counts = sim::knot_selection_experiment(scenario, n, runs, max, seed);
    let mut table = String::from("knots\tcount\n");
    for (k, c) in &counts {
        let _ = writeln!(table, "{k}\t{c}");
    }
    match &cfg.out {
        Some(dir) => {
            write_file(dir, "knots.tsv", &table)?;
            let value = serde_json::json!({
                "counts": counts,
                "modal": sim::modal_choice(&counts).map(|(k, _)| k),
                "config": Config { out: None, ..cfg.clone() },
            });
            write_file(dir, "knots.json", &pretty(&value))?;
            print!("{table}");
        }
        None => print!("{table}"),
    }
    Ok(())
}
