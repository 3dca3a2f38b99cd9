//! Posterior summaries shared by the solvers and the CLI.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::special::{normal_pdf, InverseGammaParams, Z_975};

/// Number of points in a density grid.
pub const DENSITY_POINTS: usize = 201;

/// Mean, standard deviation and central 95% interval for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl ParamSummary {
    /// Summary of a Normal marginal with the given mean and variance.
    pub fn normal(label: impl Into<String>, mean: f64, var: f64) -> Self {
        let sd = var.max(0.0).sqrt();
        ParamSummary {
            label: label.into(),
            mean,
            sd,
            q025: mean - Z_975 * sd,
            q975: mean + Z_975 * sd,
        }
    }

    /// Summary of an Inverse-Gamma variable. When the mean or variance is
    /// undefined (shape ≤ 1 or ≤ 2) the median and an infinite SD are
    /// reported instead.
    pub fn inverse_gamma(label: impl Into<String>, ig: &InverseGammaParams) -> Self {
        ParamSummary {
            label: label.into(),
            mean: ig.mean().unwrap_or_else(|| ig.quantile(0.5)),
            sd: ig.variance().map_or(f64::INFINITY, f64::sqrt),
            q025: ig.quantile(0.025),
            q975: ig.quantile(0.975),
        }
    }

    /// Summary of `log v` for `v ~ Inverse-Gamma`.
    pub fn log_inverse_gamma(label: impl Into<String>, ig: &InverseGammaParams) -> Self {
        ParamSummary {
            label: label.into(),
            mean: ig.mean_log(),
            sd: ig.var_log().sqrt(),
            q025: ig.quantile(0.025).ln(),
            q975: ig.quantile(0.975).ln(),
        }
    }

    /// `95%` interval half-width.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.q975 - self.q025)
    }

    /// Applies `v ↦ offset + scale·v` to the location fields.
    pub fn affine(&self, offset: f64, scale: f64) -> Self {
        let (a, b) = (offset + scale * self.q025, offset + scale * self.q975);
        ParamSummary {
            label: self.label.clone(),
            mean: offset + scale * self.mean,
            sd: scale.abs() * self.sd,
            q025: a.min(b),
            q975: a.max(b),
        }
    }
}

/// Pointwise fit with a 95% band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub fit: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `cᵀμ ± z·sqrt(cᵀΣc)` for a Normal coefficient vector.
pub fn contrast_band(x: f64, c: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> CurvePoint {
    let fit = c.dot(mu);
    let sd = c.dot(&(sigma * c)).max(0.0).sqrt();
    CurvePoint {
        x,
        fit,
        lo: fit - Z_975 * sd,
        hi: fit + Z_975 * sd,
    }
}

/// Normal density on `DENSITY_POINTS` points spanning mean ± 4 SD.
pub fn normal_density_grid(mean: f64, sd: f64) -> Vec<(f64, f64)> {
    let lo = mean - 4.0 * sd;
    let step = 8.0 * sd / (DENSITY_POINTS - 1) as f64;
    (0..DENSITY_POINTS)
        .map(|i| {
            let x = lo + step * i as f64;
            (x, normal_pdf(x, mean, sd))
        })
        .collect()
}

/// Inverse-Gamma density on `DENSITY_POINTS` points spanning mean ± 4 SD,
/// truncated to the positive axis. Heavy-tailed cases without a finite SD
/// fall back to the 0.001 and 0.999 quantiles.
pub fn inverse_gamma_density_grid(ig: &InverseGammaParams) -> Vec<(f64, f64)> {
    let (lo, hi) = match (ig.mean(), ig.variance()) {
        (Some(m), Some(v)) => {
            let sd = v.sqrt();
            ((m - 4.0 * sd).max(ig.quantile(1e-6)), m + 4.0 * sd)
        }
        _ => (ig.quantile(1e-3), ig.quantile(0.999)),
    };
    let step = (hi - lo) / (DENSITY_POINTS - 1) as f64;
    (0..DENSITY_POINTS)
        .map(|i| {
            let x = lo + step * i as f64;
            (x, ig.density(x))
        })
        .collect()
}
