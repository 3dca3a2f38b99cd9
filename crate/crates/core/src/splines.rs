//! Truncated-line spline basis `z_k(x) = (x − κ_k)₊` with frozen knots.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knot count used when none is configured.
pub fn default_num_knots(n_warm: usize) -> usize {
    (n_warm / 4).clamp(1, 35)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplineBasis {
    knots: Vec<f64>,
    domain_lo: f64,
    domain_hi: f64,
    #[serde(skip)]
    exceedances: AtomicU64,
}

impl Clone for SplineBasis {
    fn clone(&self) -> Self {
        SplineBasis {
            knots: self.knots.clone(),
            domain_lo: self.domain_lo,
            domain_hi: self.domain_hi,
            exceedances: AtomicU64::new(self.exceedances()),
        }
    }
}

impl PartialEq for SplineBasis {
    fn eq(&self, other: &Self) -> bool {
        self.knots == other.knots && self.domain_lo == other.domain_lo && self.domain_hi == other.domain_hi
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SplineBasis {
    pub fn new(knots: Vec<f64>, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidSpec("spline basis needs at least one knot".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSpec("knots must be strictly increasing".into()));
        }
        if !(domain_lo < knots[0] && knots[knots.len() - 1] < domain_hi) {
            return Err(Error::InvalidSpec(format!(
                "knots must lie strictly inside the domain [{domain_lo}, {domain_hi}]"
            )));
        }
        Ok(SplineBasis {
            knots,
            domain_lo,
            domain_hi,
            exceedances: AtomicU64::new(0),
        })
    }

    /// Knots at the `k/(K+1)` sample quantiles of the warm-up values.
    pub fn from_warmup(values: &[f64], num_knots: usize) -> Result<Self> {
        if num_knots == 0 {
            return Err(Error::InvalidSpec("number of knots must be at least 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite value in spline warm-up data".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < num_knots + 2 {
            return Err(Error::InsufficientData {
                needed: num_knots + 2,
                got: distinct.len(),
            });
        }
        let knots: Vec<f64> = (1..=num_knots)
            .map(|k| quantile_sorted(&sorted, k as f64 / (num_knots + 1) as f64))
            .collect();
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let inside = knots.windows(2).all(|w| w[0] < w[1]) && lo < knots[0] && knots[num_knots - 1] < hi;
        if !inside {
            // Heavy ties: fall back to quantiles of the distinct values.
            let knots = (1..=num_knots)
                .map(|k| quantile_sorted(&distinct, k as f64 / (num_knots + 1) as f64))
                .collect();
            return Self::new(knots, lo, hi);
        }
        Self::new(knots, lo, hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    /// How many evaluations fell outside the domain and were clamped.
    pub fn exceedances(&self) -> u64 {
        self.exceedances.load(Ordering::Relaxed)
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let xc = if x < self.domain_lo || x > self.domain_hi {
            self.exceedances.fetch_add(1, Ordering::Relaxed);
            x.clamp(self.domain_lo, self.domain_hi)
        } else {
            x
        };
        for (o, k) in out.iter_mut().zip(&self.knots) {
            *o = (xc - k).max(0.0);
        }
    }

    pub fn eval(&self, x: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        self.eval_into(x, out.as_mut_slice());
        out
    }
}
