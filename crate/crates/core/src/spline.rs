//! Clamped B-spline bases on `[0, 1]` and the centered additive basis.
//!
//! For covariate `k` with `J` interior knots and order `r` the raw basis has
//! `J + r` functions forming a partition of unity. The centered basis drops
//! the first raw function and subtracts the training-sample mean from the
//! remaining `J + r - 1`, so every fitted component has empirical mean zero.
//! Because the raw functions sum to one, the dropped column is recoverable
//! from the others and the centered columns span exactly the empirically
//! centered spline space.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{GaplmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KnotPlacement {
    Uniform,
    #[default]
    Quantile,
}

impl FromStr for KnotPlacement {
    type Err = GaplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(KnotPlacement::Uniform),
            "quantile" => Ok(KnotPlacement::Quantile),
            other => Err(GaplmError::Config(format!(
                "unknown knot placement `{other}`; expected uniform or quantile"
            ))),
        }
    }
}

/// Order `r` and strictly increasing interior knots in `(0, 1)`; the
/// boundary knots 0 and 1 carry multiplicity `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    pub order: usize,
    pub interior: Vec<f64>,
}

impl KnotVector {
    pub fn new(order: usize, interior: Vec<f64>) -> Result<Self> {
        if order < 1 {
            return Err(GaplmError::Config("spline order must be at least 1".into()));
        }
        if interior.iter().any(|&k| !(k > 0.0 && k < 1.0)) {
            return Err(GaplmError::Config("interior knots must lie strictly inside (0, 1)".into()));
        }
        if interior.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GaplmError::Config("interior knots must be strictly increasing".into()));
        }
        Ok(KnotVector { order, interior })
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// `J + r`.
    pub fn dim(&self) -> usize {
        self.interior.len() + self.order
    }

    /// Full knot sequence of length `J + 2r`.
    pub fn full(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.order];
        t.extend_from_slice(&self.interior);
        t.extend(std::iter::repeat_n(1.0, self.order));
        t
    }

    /// Raw B-spline values at `x`, length `J + r`.
    pub fn eval_raw_basis(&self, x: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GaplmError::Domain { value: x });
        }
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    /// Cox-de Boor recursion over the single non-degenerate span holding
    /// `x`. Spans are right-continuous; `x = 1` falls in the last span.
    pub(crate) fn eval_into(&self, x: f64, out: &mut [f64]) {
        let r = self.order;
        let j = self.interior.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        let count = self.interior.partition_point(|&k| k <= x);
        // knot index of the left end of the span in the full sequence
        let span = r - 1 + count;
        let t = |idx: usize| -> f64 {
            if idx < r {
                0.0
            } else if idx < r + j {
                self.interior[idx - r]
            } else {
                1.0
            }
        };

        let mut n = vec![0.0; r];
        let mut left = vec![0.0; r];
        let mut right = vec![0.0; r];
        n[0] = 1.0;
        for deg in 1..r {
            left[deg] = x - t(span + 1 - deg);
            right[deg] = t(span + deg) - x;
            let mut saved = 0.0;
            for s in 0..deg {
                let temp = n[s] / (right[s + 1] + left[deg - s]);
                n[s] = saved + right[s + 1] * temp;
                saved = left[deg - s] * temp;
            }
            n[deg] = saved;
        }
        let first = span + 1 - r;
        out[first..first + r].copy_from_slice(&n);
    }
}

/// Quantile of a sorted sample (linear interpolation between order
/// statistics).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Builds a knot vector with `num_interior` interior knots. Quantile knots
/// that coincide (ties in the sample) or land on the boundary are dropped
/// and reported in the returned warnings.
pub fn make_knots(
    num_interior: usize,
    order: usize,
    placement: KnotPlacement,
    sample: &[f64],
) -> Result<(KnotVector, Vec<String>)> {
    if order < 2 {
        return Err(GaplmError::Config(format!("spline order must be at least 2, got {order}")));
    }
    let mut warnings = Vec::new();
    let interior = match placement {
        KnotPlacement::Uniform => (1..=num_interior)
            .map(|j| j as f64 / (num_interior + 1) as f64)
            .collect(),
        KnotPlacement::Quantile => {
            if num_interior == 0 {
                Vec::new()
            } else {
                if sample.is_empty() {
                    return Err(GaplmError::InvalidInput("quantile knots need a nonempty sample".into()));
                }
                let mut sorted = sample.to_vec();
                sorted.sort_by(|a, b| a.total_cmp(b));
                let mut knots: Vec<f64> = Vec::with_capacity(num_interior);
                for j in 1..=num_interior {
                    let q = quantile_sorted(&sorted, j as f64 / (num_interior + 1) as f64);
                    if q > 0.0 && q < 1.0 && knots.last().is_none_or(|&last| q > last) {
                        knots.push(q);
                    }
                }
                if knots.len() < num_interior {
                    warnings.push(format!(
                        "requested {num_interior} quantile knots but only {} are distinct; using {}",
                        knots.len(),
                        knots.len()
                    ));
                }
                knots
            }
        }
    };
    Ok((KnotVector::new(order, interior)?, warnings))
}

/// Serializable knot settings for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotReport {
    pub covariate: String,
    pub order: usize,
    pub num_interior: usize,
    /// Interior knots on the unit scale.
    pub interior: Vec<f64>,
    /// Interior knots on the covariate's original scale.
    pub interior_original: Vec<f64>,
}

/// Centered additive spline basis for the `d1` nonparametric covariates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdditiveSplineBasis {
    pub knots: Vec<KnotVector>,
    pub placement: KnotPlacement,
    /// Training means of raw columns `1..J+r` per covariate.
    pub means: Vec<Vec<f64>>,
    pub x_ranges: Vec<(f64, f64)>,
    pub x_names: Vec<String>,
}

impl AdditiveSplineBasis {
    /// Centers the bases on `data`'s training sample.
    pub fn build(data: &Dataset, knots: Vec<KnotVector>) -> Result<Self> {
        Self::build_with_placement(data, knots, KnotPlacement::Quantile)
    }

    pub fn build_with_placement(
        data: &Dataset,
        knots: Vec<KnotVector>,
        placement: KnotPlacement,
    ) -> Result<Self> {
        if knots.len() != data.d1() {
            return Err(GaplmError::InvalidInput(format!(
                "{} knot vectors supplied for {} nonparametric covariates",
                knots.len(),
                data.d1()
            )));
        }
        let n = data.n() as f64;
        let mut means = Vec::with_capacity(knots.len());
        for (k, kv) in knots.iter().enumerate() {
            let dim = kv.dim();
            let mut sums = vec![0.0; dim];
            let mut row = vec![0.0; dim];
            for &x in &data.x[k] {
                if !(0.0..=1.0).contains(&x) {
                    return Err(GaplmError::Domain { value: x });
                }
                kv.eval_into(x, &mut row);
                sums.iter_mut().zip(&row).for_each(|(s, v)| *s += v);
            }
            if let Some(empty) = sums.iter().position(|&s| s == 0.0) {
                return Err(GaplmError::EmptySpan {
                    covariate: data.x_names[k].clone(),
                    basis: empty,
                });
            }
            means.push(sums[1..].iter().map(|s| s / n).collect());
        }
        Ok(AdditiveSplineBasis {
            knots,
            placement,
            means,
            x_ranges: data.x_ranges.clone(),
            x_names: data.x_names.clone(),
        })
    }

    /// Uses `make_knots` for every covariate, then centers.
    pub fn from_knot_counts(
        data: &Dataset,
        counts: &[usize],
        order: usize,
        placement: KnotPlacement,
    ) -> Result<(Self, Vec<String>)> {
        if counts.len() != data.d1() {
            return Err(GaplmError::InvalidInput(format!(
                "{} knot counts supplied for {} nonparametric covariates",
                counts.len(),
                data.d1()
            )));
        }
        let mut warnings = Vec::new();
        let mut knots = Vec::with_capacity(counts.len());
        for (k, &j) in counts.iter().enumerate() {
            let (kv, w) = make_knots(j, order, placement, &data.x[k])?;
            warnings.extend(w.into_iter().map(|w| format!("{}: {w}", data.x_names[k])));
            knots.push(kv);
        }
        Ok((Self::build_with_placement(data, knots, placement)?, warnings))
    }

    pub fn d1(&self) -> usize {
        self.knots.len()
    }

    /// `J_k + r - 1` for each covariate.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.knots.iter().map(|kv| kv.dim() - 1).collect()
    }

    pub fn block_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.d1());
        let mut acc = 0;
        for size in self.block_sizes() {
            offsets.push(acc);
            acc += size;
        }
        offsets
    }

    /// Total number of centered spline columns.
    pub fn num_columns(&self) -> usize {
        self.block_sizes().iter().sum()
    }

    /// Centered basis of covariate `k` at a unit-scale point.
    pub fn eval_centered(&self, k: usize, x: f64) -> Result<Vec<f64>> {
        let raw = self.knots[k].eval_raw_basis(x)?;
        Ok(raw[1..].iter().zip(&self.means[k]).map(|(b, m)| b - m).collect())
    }

    pub(crate) fn fill_spline_row(&self, x: &[f64], out: &mut [f64]) {
        let mut offset = 0;
        for (k, kv) in self.knots.iter().enumerate() {
            let dim = kv.dim();
            let mut raw = vec![0.0; dim];
            kv.eval_into(x[k], &mut raw);
            for (c, (b, m)) in raw[1..].iter().zip(&self.means[k]).enumerate() {
                out[offset + c] = b - m;
            }
            offset += dim - 1;
        }
    }

    /// `(B(x), z)`: centered spline values for every covariate followed by
    /// the linear covariates. `x` is on the unit scale.
    pub fn design_row(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d1() {
            return Err(GaplmError::InvalidInput(format!(
                "expected {} nonparametric values, got {}",
                self.d1(),
                x.len()
            )));
        }
        if let Some(&bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GaplmError::Domain { value: bad });
        }
        let p = self.num_columns();
        let mut row = vec![0.0; p + z.len()];
        self.fill_spline_row(x, &mut row[..p]);
        row[p..].copy_from_slice(z);
        Ok(row)
    }

    /// Maps an original-scale value of covariate `k` to the unit interval,
    /// clamping (and flagging) values outside the training range.
    pub fn to_unit(&self, k: usize, raw: f64) -> (f64, bool) {
        data::to_unit(self.x_ranges[k], raw)
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.num_columns());
        for (k, size) in self.block_sizes().into_iter().enumerate() {
            for c in 1..=size {
                names.push(format!("s({})[{c}]", self.x_names[k]));
            }
        }
        names
    }

    pub fn report(&self) -> Vec<KnotReport> {
        self.knots
            .iter()
            .enumerate()
            .map(|(k, kv)| {
                let (lo, hi) = self.x_ranges[k];
                KnotReport {
                    covariate: self.x_names[k].clone(),
                    order: kv.order,
                    num_interior: kv.num_interior(),
                    interior: kv.interior.clone(),
                    interior_original: kv.interior.iter().map(|u| lo + u * (hi - lo)).collect(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_knots() {
        let (kv, w) = make_knots(2, 4, KnotPlacement::Uniform, &[]).unwrap();
        assert!(w.is_empty());
        assert_abs_diff_eq!(kv.interior[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kv.interior[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(kv.full().len(), 2 + 8);
    }

    #[test]
    fn no_interior_knots_gives_global_polynomial() {
        let (kv, _) = make_knots(0, 4, KnotPlacement::Uniform, &[]).unwrap();
        assert_eq!(kv.dim(), 4);
        assert_eq!(kv.full(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn order_below_two_rejected() {
        assert!(make_knots(2, 1, KnotPlacement::Uniform, &[]).is_err());
    }

    #[test]
    fn quantile_ties_reduce_knot_count() {
        let sample = [0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0];
        let (kv, w) = make_knots(3, 4, KnotPlacement::Quantile, &sample).unwrap();
        assert_eq!(kv.interior, vec![0.5]);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn boundary_values() {
        let kv = KnotVector::new(4, vec![0.3, 0.6]).unwrap();
        let b0 = kv.eval_raw_basis(0.0).unwrap();
        assert_eq!(b0[0], 1.0);
        assert!(b0[1..].iter().all(|&v| v == 0.0));
        let b1 = kv.eval_raw_basis(1.0).unwrap();
        assert_eq!(*b1.last().unwrap(), 1.0);
        assert!(b1[..b1.len() - 1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_hat_functions() {
        let kv = KnotVector::new(2, vec![0.5]).unwrap();
        assert_eq!(kv.full(), vec![0.0, 0.0, 0.5, 1.0, 1.0]);
        let b = kv.eval_raw_basis(0.25).unwrap();
        assert_abs_diff_eq!(b[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], 0.5, epsilon = 1e-15);
        assert_eq!(b[2], 0.0);
    }

    #[test]
    fn out_of_domain() {
        let kv = KnotVector::new(4, vec![]).unwrap();
        assert!(matches!(kv.eval_raw_basis(1.5), Err(GaplmError::Domain { .. })));
        assert!(kv.eval_raw_basis(-1e-9).is_err());
    }

    #[test]
    fn invalid_interior_knots() {
        assert!(KnotVector::new(4, vec![0.5, 0.5]).is_err());
        assert!(KnotVector::new(4, vec![1.0]).is_err());
    }

    #[test]
    fn empty_span_is_an_error() {
        // every x below 0.3, so the last basis function never fires
        let x: Vec<f64> = (0..50).map(|i| 0.3 * i as f64 / 49.0).collect();
        let mut d = Dataset::new(vec![0.0; 50], vec![x], vec![]).unwrap();
        d.x[0].iter_mut().for_each(|v| *v *= 0.3);
        let kv = KnotVector::new(4, vec![0.5]).unwrap();
        let err = AdditiveSplineBasis::build(&d, vec![kv]).unwrap_err();
        assert!(matches!(err, GaplmError::EmptySpan { basis: 4, .. }), "{err}");
    }

    #[test]
    fn design_row_layout() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let d = Dataset::new(vec![0.0; 20], vec![x], vec![vec![1.0; 20], vec![2.0; 20]]).unwrap();
        let (basis, _) = AdditiveSplineBasis::from_knot_counts(&d, &[0], 4, KnotPlacement::Uniform).unwrap();
        assert_eq!(basis.num_columns(), 3);
        let row = basis.design_row(&[0.4], &[0.0, 0.0]).unwrap();
        assert_eq!(row.len(), 5);
        assert_eq!(&row[3..], &[0.0, 0.0]);
        assert_eq!(row, basis.design_row(&[0.4], &[0.0, 0.0]).unwrap());
        assert!(basis.design_row(&[1.2], &[0.0, 0.0]).is_err());
    }
}
