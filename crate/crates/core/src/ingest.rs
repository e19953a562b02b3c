//! CSV ingestion with complete-case filtering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GaplmError, Result};
use crate::family::FamilyKind;
use crate::spline::KnotPlacement;

/// Cell values treated as missing (compared after trimming).
pub const MISSING_TOKENS: [&str; 5] = ["", "NA", "?", "nan", "NaN"];

/// Which columns play which role, plus the model settings a report needs to
/// be re-run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub response: String,
    pub linear: Vec<String>,
    pub nonparametric: Vec<String>,
    pub family: FamilyKind,
    /// Interior knots per nonparametric covariate. One value is recycled.
    pub knots: Vec<usize>,
    pub order: usize,
    pub placement: KnotPlacement,
    pub seed: Option<u64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            response: String::new(),
            linear: Vec::new(),
            nonparametric: Vec::new(),
            family: FamilyKind::BinomialLogit,
            knots: vec![0],
            order: 4,
            placement: KnotPlacement::Quantile,
            seed: None,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.response.is_empty() {
            return Err(GaplmError::Config("no response column given".into()));
        }
        if self.linear.is_empty() && self.nonparametric.is_empty() {
            return Err(GaplmError::Config("no covariates given".into()));
        }
        for name in &self.linear {
            if self.nonparametric.contains(name) {
                return Err(GaplmError::Config(format!(
                    "`{name}` is listed as both linear and nonparametric"
                )));
            }
        }
        if self.linear.contains(&self.response) || self.nonparametric.contains(&self.response) {
            return Err(GaplmError::Config(format!(
                "response `{}` is also listed as a covariate",
                self.response
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in self.linear.iter().chain(&self.nonparametric) {
            if !seen.insert(name) {
                return Err(GaplmError::Config(format!("`{name}` is listed twice")));
            }
        }
        self.knot_counts()?;
        Ok(())
    }

    /// Interior-knot count for each nonparametric covariate.
    pub fn knot_counts(&self) -> Result<Vec<usize>> {
        let d1 = self.nonparametric.len();
        match self.knots.len() {
            n if n == d1 => Ok(self.knots.clone()),
            1 => Ok(vec![self.knots[0]; d1]),
            0 if d1 == 0 => Ok(Vec::new()),
            n => Err(GaplmError::Config(format!(
                "{n} knot counts given for {d1} nonparametric covariates"
            ))),
        }
    }
}

/// A dataset together with what happened while reading it.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub data: Dataset,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub warnings: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.contains(&cell.trim())
}

pub fn ingest_csv(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<Ingested> {
    let reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    ingest_reader(reader, spec)
}

pub fn ingest_reader<R: std::io::Read>(mut reader: csv::Reader<R>, spec: &ModelSpec) -> Result<Ingested> {
    spec.validate()?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let locate = |name: &String| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GaplmError::UnknownColumn {
                name: name.clone(),
                available: headers.clone(),
            })
    };
    let used: Vec<&String> = std::iter::once(&spec.response)
        .chain(&spec.nonparametric)
        .chain(&spec.linear)
        .collect();
    let idx: Vec<usize> = used.iter().map(|n| locate(n)).collect::<Result<_>>()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); used.len()];
    let mut rows_read = 0;
    let mut rows_dropped = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        rows_read += 1;
        let mut row = Vec::with_capacity(idx.len());
        let mut missing = false;
        for (c, &i) in idx.iter().enumerate() {
            let cell = record.get(i).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                break;
            }
            let v: f64 = cell.trim().parse().map_err(|_| GaplmError::NonNumeric {
                // header is line 1
                row: r + 2,
                column: used[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                missing = true;
                break;
            }
            row.push(v);
        }
        if missing {
            rows_dropped += 1;
            continue;
        }
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    let mut warnings = Vec::new();
    if rows_dropped > 0 {
        warnings.push(format!(
            "dropped {rows_dropped} of {rows_read} rows with missing values in the model columns"
        ));
    }
    if columns[0].is_empty() {
        return Err(GaplmError::NoRows);
    }
    let mut y = columns.remove(0);
    if spec.family == FamilyKind::BinomialLogit {
        if let Some(w) = coerce_binary(&mut y, &spec.response)? {
            warnings.push(w);
        }
    }
    let d1 = spec.nonparametric.len();
    let z = columns.split_off(d1);
    let x = columns;
    let x_names: Vec<&str> = spec.nonparametric.iter().map(String::as_str).collect();
    let z_names: Vec<&str> = spec.linear.iter().map(String::as_str).collect();
    let data = Dataset::new(y, x, z)?.with_names(&spec.response, &x_names, &z_names)?;
    Ok(Ingested {
        data,
        rows_read,
        rows_dropped,
        warnings,
    })
}

/// Column names of a CSV file.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

/// Splits `columns` into (linear, nonparametric): integer-valued columns with
/// at most `max_levels` distinct values are treated as discrete and go to the
/// linear part, the rest are continuous and go to the nonparametric part.
pub fn suggest_roles(
    path: impl AsRef<Path>,
    columns: &[String],
    max_levels: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let idx: Vec<usize> = columns
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == name).ok_or_else(|| GaplmError::UnknownColumn {
                name: name.clone(),
                available: headers.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut discrete = vec![true; columns.len()];
    for record in reader.records() {
        let record = record?;
        for (c, &i) in idx.iter().enumerate() {
            let cell = record.get(i).unwrap_or("");
            if !discrete[c] || is_missing(cell) {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.fract() == 0.0 => {
                    if !levels[c].contains(&v) {
                        levels[c].push(v);
                    }
                    if levels[c].len() > max_levels {
                        discrete[c] = false;
                    }
                }
                _ => discrete[c] = false,
            }
        }
    }
    let mut linear = Vec::new();
    let mut nonparametric = Vec::new();
    for (c, name) in columns.iter().enumerate() {
        if discrete[c] {
            linear.push(name.clone());
        } else {
            nonparametric.push(name.clone());
        }
    }
    Ok((linear, nonparametric))
}

/// Maps a two-valued response onto `{0, 1}` (smaller value to 0). Responses
/// already in `[0, 1]` are left alone.
fn coerce_binary(y: &mut [f64], name: &str) -> Result<Option<String>> {
    if y.iter().all(|&v| (0.0..=1.0).contains(&v)) {
        return Ok(None);
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y.iter().any(|&v| v != lo && v != hi) {
        return Err(GaplmError::InvalidInput(format!(
            "binomial response `{name}` has more than two distinct values outside [0, 1]"
        )));
    }
    for v in y.iter_mut() {
        *v = if *v == hi { 1.0 } else { 0.0 };
    }
    Ok(Some(format!("response `{name}` recoded: {lo} -> 0, {hi} -> 1")))
}
