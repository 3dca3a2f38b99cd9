//! Gaussian linear regression with a Half-Cauchy prior on the error SD.
//!
//! ```text
//! y | β, σ² ~ N(Xβ, σ² I),   β ~ N(0, σ_β² I),
//! σ² | a ~ IG(½, 1/a),        a ~ IG(½, 1/A²)
//! ```
//!
//! [`LinRegState::cycle`] is one coordinate-ascent sweep over the current
//! sufficient statistics. Batch fitting repeats it on frozen statistics;
//! online fitting interleaves it with rank-one updates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cov_rel_change, max_rel_change, quad_form, spd_inverse, spd_log_det, trace_of_product};
use crate::special::{ln_gamma, InverseGammaParams};
use crate::suffstats::StreamingMoments;
use crate::summary::ParamSummary;
use crate::{BatchFit, FitOptions};

pub const DEFAULT_SIGSQ_BETA: f64 = 1e10;
pub const DEFAULT_A: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegHyper {
    pub sigsq_beta: f64,
    pub a: f64,
}

impl LinRegHyper {
    pub fn new(sigsq_beta: f64, a: f64) -> Result<Self> {
        let h = LinRegHyper { sigsq_beta, a };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigsq_beta > 0.0 && self.sigsq_beta.is_finite()) {
            return Err(Error::Domain(format!("sigsq_beta must be positive, got {}", self.sigsq_beta)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Domain(format!("A must be positive, got {}", self.a)));
        }
        Ok(())
    }
}

impl Default for LinRegHyper {
    fn default() -> Self {
        LinRegHyper {
            sigsq_beta: DEFAULT_SIGSQ_BETA,
            a: DEFAULT_A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegState {
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub mu_recip_sigsq: f64,
    pub mu_recip_a: f64,
}

/// Output of the shared Gaussian sweep: coefficient block plus the
/// error-variance pair.
pub(crate) struct GaussianSweep {
    pub sigma: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub mu_recip_a: f64,
    pub mu_recip_sigsq: f64,
}

/// `E‖y − Cβ‖²` under `β ~ N(μ, Σ)`, clamped at zero against cancellation.
pub(crate) fn expected_rss(stats: &StreamingMoments, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let v = stats.yty - 2.0 * mu.dot(&stats.cty)
        + trace_of_product(&stats.ctc, sigma)
        + quad_form(&stats.ctc, mu);
    v.max(0.0)
}

/// Σ, μ, μ_{q(1/a)}, μ_{q(1/σ²)} in that order, given the diagonal prior
/// precision of the coefficient vector.
pub(crate) fn gaussian_sweep(
    stats: &StreamingMoments,
    prior_precision: &DVector<f64>,
    mu_recip_sigsq: f64,
    a: f64,
    context: &'static str,
) -> Result<GaussianSweep> {
    let mut prec = &stats.ctc * mu_recip_sigsq;
    for (i, d) in prior_precision.iter().enumerate() {
        prec[(i, i)] += d;
    }
    let sigma = spd_inverse(prec, context)?;
    let mu = (&sigma * &stats.cty) * mu_recip_sigsq;
    let mu_recip_a = 1.0 / (mu_recip_sigsq + a.powi(-2));
    let denom = 2.0 * mu_recip_a + expected_rss(stats, &mu, &sigma);
    let mu_recip_sigsq = (stats.n as f64 + 1.0) / denom;
    Ok(GaussianSweep {
        sigma,
        mu,
        mu_recip_a,
        mu_recip_sigsq,
    })
}

impl LinRegState {
    /// Zero mean, identity covariance and μ_{q(1/σ²)} = μ_{q(1/a)} = 1.
    pub fn initial(p: usize) -> Self {
        Self::with_recip_sigsq(p, 1.0)
    }

    pub fn with_recip_sigsq(p: usize, mu_recip_sigsq: f64) -> Self {
        LinRegState {
            mu_beta: DVector::zeros(p),
            sigma_beta: DMatrix::identity(p, p),
            mu_recip_sigsq,
            mu_recip_a: 1.0,
        }
    }

    /// All parameters flattened, for convergence checks.
    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.mu_beta.iter().chain(self.sigma_beta.iter()).copied().collect();
        v.extend([self.mu_recip_sigsq, self.mu_recip_a]);
        v
    }

    /// Convergence measure against an earlier state.
    pub fn change_from(&self, prev: &Self) -> f64 {
        max_rel_change(prev.mu_beta.as_slice(), self.mu_beta.as_slice())
            .max(cov_rel_change(&prev.sigma_beta, &self.sigma_beta))
            .max(max_rel_change(&[prev.mu_recip_sigsq, prev.mu_recip_a], &[self.mu_recip_sigsq, self.mu_recip_a]))
    }

    pub fn dim(&self) -> usize {
        self.mu_beta.len()
    }

    /// One coordinate-ascent sweep.
    pub fn cycle(&mut self, stats: &StreamingMoments, hyper: &LinRegHyper) -> Result<()> {
        check_dim("linreg cycle", self.dim(), stats.dim())?;
        let prior = DVector::from_element(self.dim(), 1.0 / hyper.sigsq_beta);
        let s = gaussian_sweep(stats, &prior, self.mu_recip_sigsq, hyper.a, "linreg covariance")?;
        self.sigma_beta = s.sigma;
        self.mu_beta = s.mu;
        self.mu_recip_a = s.mu_recip_a;
        self.mu_recip_sigsq = s.mu_recip_sigsq;
        Ok(())
    }

    /// Marginal log-likelihood lower bound, valid right after a sweep.
    pub fn elbo(&self, stats: &StreamingMoments, hyper: &LinRegHyper) -> f64 {
        use std::f64::consts::PI;
        let p = self.dim() as f64;
        let n = stats.n as f64;
        let log_det = spd_log_det(&self.sigma_beta).unwrap_or(f64::NEG_INFINITY);
        0.5 * p - 0.5 * n * (2.0 * PI).ln() - 2.0 * PI.ln() + ln_gamma(0.5 * (n + 1.0))
            - 0.5 * p * hyper.sigsq_beta.ln()
            - hyper.a.ln()
            - (self.mu_beta.norm_squared() + self.sigma_beta.trace()) / (2.0 * hyper.sigsq_beta)
            + 0.5 * log_det
            - 0.5 * (n + 1.0) * ((n + 1.0) / (2.0 * self.mu_recip_sigsq)).ln()
            - (self.mu_recip_sigsq + hyper.a.powi(-2)).ln()
            + self.mu_recip_sigsq * self.mu_recip_a
    }

    /// Rank-one update of `stats` followed by exactly one sweep.
    pub fn step_online(
        &mut self,
        stats: &mut StreamingMoments,
        y_new: f64,
        x_new: &DVector<f64>,
        hyper: &LinRegHyper,
    ) -> Result<()> {
        check_dim("linreg online step", self.dim(), x_new.len())?;
        stats.update(y_new, x_new)?;
        self.cycle(stats, hyper)
    }

    /// q(σ²) = IG(½(n+1), (n+1)/(2μ_{q(1/σ²)})).
    pub fn sigma_sq_posterior(&self, n: usize) -> InverseGammaParams {
        let shape = 0.5 * (n as f64 + 1.0);
        InverseGammaParams::new(shape, 2.0 * shape / (2.0 * self.mu_recip_sigsq))
            .expect("positive moments give valid Inverse-Gamma parameters")
    }

    pub fn posterior_summary(&self, stats: &StreamingMoments) -> LinRegSummary {
        let coefficients = (0..self.dim())
            .map(|j| ParamSummary::normal(format!("beta_{j}"), self.mu_beta[j], self.sigma_beta[(j, j)]))
            .collect();
        let sigma_sq_params = self.sigma_sq_posterior(stats.n);
        LinRegSummary {
            coefficients,
            sigma_sq: ParamSummary::inverse_gamma("sigma_sq", &sigma_sq_params),
            sigma_sq_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinRegSummary {
    pub coefficients: Vec<ParamSummary>,
    pub sigma_sq: ParamSummary,
    pub sigma_sq_params: InverseGammaParams,
}

fn relative_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / new.abs().max(f64::MIN_POSITIVE)
}

/// Cycles from `state` on frozen `stats` until the relative increase of
/// the lower bound drops below `opts.tol` and no parameter moves by more
/// than `opts.tol` relative. The bound is flat at the optimum, so the first
/// test alone leaves parameters settled only to about `sqrt(tol)`.
pub fn fit_batch_from(
    mut state: LinRegState,
    stats: &StreamingMoments,
    hyper: &LinRegHyper,
    opts: &FitOptions,
) -> Result<BatchFit<LinRegState>> {
    hyper.validate()?;
    let mut prev: Option<f64> = None;
    for iter in 1..=opts.max_iter {
        let before = state.clone();
        state.cycle(stats, hyper)?;
        let elbo = state.elbo(stats, hyper);
        if let Some(old) = prev {
            if relative_change(old, elbo) < opts.tol && state.change_from(&before) < opts.tol {
                return Ok(BatchFit {
                    state,
                    iterations: iter,
                    converged: true,
                    elbo: Some(elbo),
                });
            }
        }
        prev = Some(elbo);
    }
    Ok(BatchFit {
        state,
        iterations: opts.max_iter,
        converged: false,
        elbo: prev,
    })
}

pub fn fit_batch(
    y: &[f64],
    x: &DMatrix<f64>,
    hyper: &LinRegHyper,
    opts: &FitOptions,
) -> Result<BatchFit<LinRegState>> {
    let stats = StreamingMoments::from_batch(y, x)?;
    fit_batch_from(LinRegState::initial(x.ncols()), &stats, hyper, opts)
}
