use serde::{Deserialize, Serialize};

use crate::error::{GaplmError, Result};

/// Observations `(y, x, z)`. Nonparametric covariates `x` are stored
/// rescaled to `[0, 1]`; the original ranges are kept so new points can be
/// mapped the same way.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// Column-major, `d1` columns of length `n`, each within `[0, 1]`.
    pub x: Vec<Vec<f64>>,
    /// Column-major, `d2` columns of length `n`.
    pub z: Vec<Vec<f64>>,
    pub x_ranges: Vec<(f64, f64)>,
    pub response_name: String,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from raw columns, rescaling each `x` column from its
    /// sample range to `[0, 1]`.
    pub fn new(y: Vec<f64>, x_raw: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(GaplmError::NoRows);
        }
        for (k, col) in x_raw.iter().chain(z.iter()).enumerate() {
            if col.len() != n {
                return Err(GaplmError::InvalidInput(format!(
                    "covariate column {k} has {} rows, response has {n}",
                    col.len()
                )));
            }
        }
        if y.iter().chain(x_raw.iter().flatten()).chain(z.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(GaplmError::InvalidInput("dataset contains non-finite values".into()));
        }
        let mut x = Vec::with_capacity(x_raw.len());
        let mut x_ranges = Vec::with_capacity(x_raw.len());
        for (k, col) in x_raw.into_iter().enumerate() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Err(GaplmError::InvalidInput(format!(
                    "nonparametric covariate {k} is constant and cannot carry a spline"
                )));
            }
            x.push(col.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect());
            x_ranges.push((lo, hi));
        }
        let x_names = (1..=x.len()).map(|k| format!("x{k}")).collect();
        let z_names = (1..=z.len()).map(|k| format!("z{k}")).collect();
        Ok(Dataset {
            y,
            x,
            z,
            x_ranges,
            response_name: "y".into(),
            x_names,
            z_names,
        })
    }

    pub fn with_names(mut self, response: &str, x_names: &[&str], z_names: &[&str]) -> Result<Self> {
        if x_names.len() != self.d1() || z_names.len() != self.d2() {
            return Err(GaplmError::InvalidInput("name count does not match column count".into()));
        }
        self.response_name = response.to_string();
        self.x_names = x_names.iter().map(|s| s.to_string()).collect();
        self.z_names = z_names.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d1(&self) -> usize {
        self.x.len()
    }

    pub fn d2(&self) -> usize {
        self.z.len()
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|c| c[i]).collect()
    }

    pub fn z_row(&self, i: usize) -> Vec<f64> {
        self.z.iter().map(|c| c[i]).collect()
    }

    /// Maps an original-scale value of covariate `k` to the unit interval.
    /// Values outside the training range are clamped and flagged.
    pub fn to_unit(&self, k: usize, raw: f64) -> (f64, bool) {
        to_unit(self.x_ranges[k], raw)
    }

    /// Rows `rows`, keeping the training-range rescaling of `x`.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |c: &Vec<f64>| rows.iter().map(|&i| c[i]).collect::<Vec<_>>();
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x: self.x.iter().map(pick).collect(),
            z: self.z.iter().map(pick).collect(),
            x_ranges: self.x_ranges.clone(),
            response_name: self.response_name.clone(),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
        }
    }

    /// Keeps only the linear covariates listed in `cols`.
    pub fn select_z(&self, cols: &[usize]) -> Dataset {
        let mut out = self.clone();
        out.z = cols.iter().map(|&j| self.z[j].clone()).collect();
        out.z_names = cols.iter().map(|&j| self.z_names[j].clone()).collect();
        out
    }

    /// Every row repeated twice.
    pub fn duplicated(&self) -> Dataset {
        let rows: Vec<usize> = (0..self.n()).chain(0..self.n()).collect();
        self.subset_rows(&rows)
    }
}

pub(crate) fn to_unit(range: (f64, f64), raw: f64) -> (f64, bool) {
    let (lo, hi) = range;
    let u = (raw - lo) / (hi - lo);
    if !(0.0..=1.0).contains(&u) {
        (u.clamp(0.0, 1.0), true)
    } else {
        (u, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescales_to_unit_interval() {
        let d = Dataset::new(vec![0.0, 1.0, 0.0], vec![vec![2.0, 4.0, 3.0]], vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(d.x[0], vec![0.0, 1.0, 0.5]);
        assert_eq!(d.x_ranges[0], (2.0, 4.0));
        assert_eq!(d.to_unit(0, 5.0), (1.0, true));
        assert_eq!(d.to_unit(0, 3.5), (0.75, false));
    }

    #[test]
    fn rejects_ragged_and_constant() {
        assert!(Dataset::new(vec![0.0, 1.0], vec![vec![1.0]], vec![]).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], vec![vec![1.0, 1.0]], vec![]).is_err());
        assert!(matches!(Dataset::new(vec![], vec![], vec![]), Err(GaplmError::NoRows)));
    }

    #[test]
    fn duplicated_doubles_rows() {
        let d = Dataset::new(vec![0.0, 1.0], vec![vec![0.0, 1.0]], vec![vec![5.0, 6.0]]).unwrap();
        let dd = d.duplicated();
        assert_eq!(dd.n(), 4);
        assert_eq!(dd.z[0], vec![5.0, 6.0, 5.0, 6.0]);
    }
}
