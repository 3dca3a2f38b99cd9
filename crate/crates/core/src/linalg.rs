use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const JITTER_FACTOR: f64 = 1e-10;

/// Inverse of a symmetric positive-definite matrix via Cholesky.
///
/// On factorisation failure the diagonal is inflated once by
/// `1e-10 * mean(diag)`; a second failure is an error. The result is
/// symmetrised.
pub(crate) fn spd_inverse(m: DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(m);
    }
    let inv = match m.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            let mean_diag = m.diagonal().mean();
            let mut jittered = m;
            for i in 0..n {
                jittered[(i, i)] += JITTER_FACTOR * mean_diag.abs();
            }
            jittered
                .cholesky()
                .ok_or(Error::NotPositiveDefinite { context })?
                .inverse()
        }
    };
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { context });
    }
    Ok(symmetrize(inv))
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// log |m| for symmetric positive-definite `m`.
pub(crate) fn spd_log_det(m: &DMatrix<f64>) -> Option<f64> {
    let ch = m.clone().cholesky()?;
    Some(2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `tr(A B)` for square matrices without forming the product.
pub(crate) fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// `xᵀ M x`.
pub(crate) fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Largest relative change between two parameter slices, floored so that
/// entries sitting at zero do not blow the ratio up.
pub(crate) fn max_rel_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

pub(crate) const REL_FLOOR: f64 = 1e-10;

/// Largest change between two covariance matrices, entry `(i, j)` measured
/// against `sqrt(Σ_ii Σ_jj)`. Entries far below that bound come out of
/// cancellation, so their own size is the wrong yardstick for round-off.
pub(crate) fn cov_rel_change(old: &DMatrix<f64>, new: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..old.ncols() {
        for i in 0..old.nrows() {
            let scale = (old[(i, i)] * old[(j, j)]).abs().sqrt().max(REL_FLOOR);
            worst = worst.max((old[(i, j)] - new[(i, j)]).abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_identity_scaled() {
        let m = DMatrix::<f64>::identity(3, 3) * 4.0;
        let inv = spd_inverse(m, "test").unwrap();
        assert_eq!(inv, DMatrix::identity(3, 3) * 0.25);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            spd_inverse(m, "indef"),
            Err(Error::NotPositiveDefinite { context: "indef" })
        ));
    }

    #[test]
    fn trace_product_matches_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 3.0]);
        assert!((trace_of_product(&a, &b) - (a * b).trace()).abs() < 1e-15);
    }

    #[test]
    fn log_det_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((spd_log_det(&m).unwrap() - 6f64.ln()).abs() < 1e-15);
    }
}
