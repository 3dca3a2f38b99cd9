//! Optional unit-interval scaling of response and predictors, with the
//! maps needed to express posterior summaries on the original scale.
//!
//! Bounds are frozen from the warm-up data. Later values outside the
//! warm-up range map outside `[0, 1]`, which is harmless for the linear
//! terms and clamped by the spline bases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x ↦ (x − lo) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub lo: f64,
    pub scale: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap { lo: 0.0, scale: 1.0 };

    /// Map sending the smallest value to 0 and the largest to 1.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!(
                "cannot scale a column with range [{lo}, {hi}] to the unit interval"
            )));
        }
        Ok(AffineMap { lo, scale: hi - lo })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.lo) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        self.lo + self.scale * v
    }
}

/// Maps for the response and each linear predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub response: AffineMap,
    pub predictors: Vec<AffineMap>,
}

impl Scaling {
    pub fn identity(q: usize) -> Self {
        Scaling {
            response: AffineMap::IDENTITY,
            predictors: vec![AffineMap::IDENTITY; q],
        }
    }

    /// Back-transforms the leading `[intercept, slope₁ … slope_q]` block of
    /// a Normal coefficient vector.
    ///
    /// With `y = l_y + s_y ỹ` and `x̃_j = (x_j − l_j)/s_j`, the original
    /// coefficients are `β_j = s_y β̃_j / s_j` and
    /// `β₀ = l_y + s_y β̃₀ − Σ_j β_j l_j`, an affine map `a + Tβ̃` whose
    /// covariance is `T Σ̃ Tᵀ`.
    pub fn linear_coefficients(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let q = self.predictors.len();
        let d = q + 1;
        let sy = self.response.scale;
        let mut t = DMatrix::zeros(d, d);
        let mut a = DVector::zeros(d);
        a[0] = self.response.lo;
        t[(0, 0)] = sy;
        for (j, m) in self.predictors.iter().enumerate() {
            let f = sy / m.scale;
            t[(j + 1, j + 1)] = f;
            t[(0, j + 1)] = -f * m.lo;
        }
        let mu_t = a + &t * mu.rows(0, d);
        let sigma_t = &t * sigma.view((0, 0), (d, d)) * t.transpose();
        (mu_t, sigma_t)
    }

    /// Factor applied to the error variance.
    pub fn error_variance_factor(&self) -> f64 {
        self.response.scale * self.response.scale
    }

    /// Factor applied to the variance of a spline block in predictor `j`:
    /// `(x − κ)₊` scales with `s_j`, so coefficients scale by `s_y/s_j`.
    pub fn spline_variance_factor(&self, j: usize) -> f64 {
        (self.response.scale / self.predictors[j].scale).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_round_trip() {
        let m = AffineMap::from_values(&[2.0, 5.0, 3.0]).unwrap();
        assert_eq!(m.apply(2.0), 0.0);
        assert_eq!(m.apply(5.0), 1.0);
        assert!((m.invert(m.apply(4.2)) - 4.2).abs() < 1e-15);
        assert!(AffineMap::from_values(&[1.0, 1.0]).is_err());
        assert!(AffineMap::from_values(&[]).is_err());
    }

    #[test]
    fn exact_line_back_transforms() {
        // y = 1 + 2 x₁ − 3 x₂ holds exactly; fit on the scaled axes.
        let s = Scaling {
            response: AffineMap { lo: -4.0, scale: 10.0 },
            predictors: vec![AffineMap { lo: 1.0, scale: 2.0 }, AffineMap { lo: -1.0, scale: 4.0 }],
        };
        // ỹ = (y + 4)/10 with y written in x̃: x₁ = 1 + 2x̃₁, x₂ = −1 + 4x̃₂.
        let b0 = (1.0 + 2.0 * 1.0 - 3.0 * -1.0 + 4.0) / 10.0;
        let mu = DVector::from_vec(vec![b0, 4.0 / 10.0, -12.0 / 10.0]);
        let (m, v) = s.linear_coefficients(&mu, &DMatrix::identity(3, 3));
        for (got, want) in m.iter().zip([1.0, 2.0, -3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((v[(1, 1)] - 25.0).abs() < 1e-12);
        assert!((s.error_variance_factor() - 100.0).abs() < 1e-12);
    }
}
