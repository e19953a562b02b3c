use nalgebra::{DMatrix, DVector};

use crate::error::{GaplmError, Result};

const JITTER_STEPS: [f64; 4] = [1e-12, 1e-11, 1e-10, 1e-8];

fn diag_scale(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows().max(1) as f64;
    let s = a.diagonal().iter().map(|v| v.abs()).sum::<f64>() / p;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Cholesky factor of `a + ridge * I`, escalating the ridge (relative to the
/// mean diagonal) up to `1e-8` when the factorization fails. Returns the
/// factor and the relative ridge that was used.
pub(crate) fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    ridge: f64,
) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    let scale = diag_scale(a);
    let mut schedule = vec![ridge];
    schedule.extend(JITTER_STEPS.iter().copied().filter(|&j| j > ridge));
    for jitter in schedule {
        let mut m = a.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter * scale;
            }
        }
        if let Some(ch) = m.cholesky() {
            return Ok((ch, jitter));
        }
    }
    Err(GaplmError::Singular(format!(
        "{}x{} information matrix is not positive definite",
        a.nrows(),
        a.ncols()
    )))
}

pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<(DVector<f64>, f64)> {
    let (ch, used) = cholesky_with_jitter(a, ridge)?;
    Ok((ch.solve(b), used))
}

pub(crate) fn inverse_spd(a: &DMatrix<f64>, ridge: f64) -> Result<(DMatrix<f64>, f64)> {
    let (ch, used) = cholesky_with_jitter(a, ridge)?;
    let mut inv = ch.inverse();
    symmetrize(&mut inv);
    Ok((inv, used))
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let p = a.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// `X^T diag(w) X`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, &wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(wi);
    }
    let mut g = x.tr_mul(&xw);
    symmetrize(&mut g);
    g
}

/// Columns that are numerically linear combinations of earlier columns,
/// found by modified Gram-Schmidt with one reorthogonalization pass.
pub(crate) fn dependent_columns(x: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 == 0.0 {
            dependent.push(j);
            continue;
        }
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= rel_tol * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}
