//! Bernoulli-logit mixed models through the Jaakkola-Jordan quadratic
//! bound on the logistic log-likelihood.
//!
//! ```text
//! y_i | β, u ~ Bernoulli(logit⁻¹{(Xβ + Zu)_i})
//! u | σ_u1²..σ_ur² ~ N(0, blockdiag(σ_u1² I_K1, …, σ_ur² I_Kr))
//! ```
//!
//! Online updates compute each observation's ξ once, from the state before
//! that observation is absorbed, and never revisit it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cov_rel_change, max_rel_change, quad_form, spd_inverse};
use crate::lmm::{recip_moment_to_ig, sweep_block_moments, BlockSpec};
use crate::special::InverseGammaParams;
use crate::splines::SplineBasis;
use crate::suffstats::LogisticMoments;
use crate::summary::{contrast_band, CurvePoint, ParamSummary};
use crate::{BatchFit, FitOptions};

/// Radicands in `[-XI_SLACK, 0)` are treated as zero.
const XI_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticState {
    pub mu_bu: DVector<f64>,
    pub sigma_bu: DMatrix<f64>,
    pub mu_recip_sigsq_u: Vec<f64>,
    pub mu_recip_a_u: Vec<f64>,
}

fn xi_from_second_moment(c: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let m = c.dot(mu);
    let r = quad_form(sigma, c) + m * m;
    if r < -XI_SLACK {
        return Err(Error::NegativeRadicand(r));
    }
    Ok(r.max(0.0).sqrt())
}

impl LogisticState {
    pub fn initial(spec: &BlockSpec) -> Self {
        let big_p = spec.total_dim();
        let r = spec.num_blocks();
        LogisticState {
            mu_bu: DVector::zeros(big_p),
            sigma_bu: DMatrix::identity(big_p, big_p),
            mu_recip_sigsq_u: vec![1.0; r],
            mu_recip_a_u: vec![1.0; r],
        }
    }

    /// `sqrt(cᵀ(Σ + μμᵀ)c)`.
    pub fn xi_for_row(&self, c_new: &DVector<f64>) -> Result<f64> {
        check_dim("logistic xi", self.mu_bu.len(), c_new.len())?;
        xi_from_second_moment(c_new, &self.mu_bu, &self.sigma_bu)
    }

    /// Σ and μ from the accumulated statistics, then the per-block pair.
    pub fn refresh(&mut self, stats: &LogisticMoments, spec: &BlockSpec) -> Result<()> {
        self.refresh_coefficients(stats, spec)?;
        sweep_block_moments(spec, &self.mu_bu, &self.sigma_bu, &mut self.mu_recip_sigsq_u, &mut self.mu_recip_a_u);
        Ok(())
    }

    fn refresh_coefficients(&mut self, stats: &LogisticMoments, spec: &BlockSpec) -> Result<()> {
        check_dim("logistic statistics", spec.total_dim(), stats.dim())?;
        check_dim("logistic blocks", spec.num_blocks(), self.mu_recip_sigsq_u.len())?;
        let mut prec = &stats.ct_lam_c * 2.0;
        for (i, d) in spec.prior_precision(&self.mu_recip_sigsq_u).iter().enumerate() {
            prec[(i, i)] += d;
        }
        self.sigma_bu = spd_inverse(prec, "logistic covariance")?;
        self.mu_bu = &self.sigma_bu * &stats.cty_half;
        Ok(())
    }

    /// ξ from the current state, absorb the observation, refresh. Returns
    /// the ξ used.
    pub fn step_online(
        &mut self,
        stats: &mut LogisticMoments,
        y_new: f64,
        c_new: &DVector<f64>,
        spec: &BlockSpec,
    ) -> Result<f64> {
        let xi = self.xi_for_row(c_new)?;
        stats.update(y_new, c_new, xi)?;
        self.refresh(stats, spec)?;
        Ok(xi)
    }

    /// Convergence measure against an earlier state.
    pub fn change_from(&self, prev: &Self) -> f64 {
        max_rel_change(prev.mu_bu.as_slice(), self.mu_bu.as_slice())
            .max(cov_rel_change(&prev.sigma_bu, &self.sigma_bu))
            .max(max_rel_change(&prev.mu_recip_sigsq_u, &self.mu_recip_sigsq_u))
            .max(max_rel_change(&prev.mu_recip_a_u, &self.mu_recip_a_u))
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.mu_bu.iter().copied().collect();
        v.extend(self.sigma_bu.iter());
        v.extend(&self.mu_recip_sigsq_u);
        v.extend(&self.mu_recip_a_u);
        v
    }

    pub fn coefficient(&self, j: usize, label: impl Into<String>) -> ParamSummary {
        ParamSummary::normal(label, self.mu_bu[j], self.sigma_bu[(j, j)])
    }

    pub fn sigma_sq_u_posterior(&self, spec: &BlockSpec, l: usize) -> InverseGammaParams {
        recip_moment_to_ig(spec.block_sizes[l] as f64 + 1.0, self.mu_recip_sigsq_u[l])
    }
}

/// Batch fit plus what the online solver needs to take over: the converged
/// ξ vector and the statistics accumulated with it.
#[derive(Debug, Clone)]
pub struct LogisticBatchFit {
    pub fit: BatchFit<LogisticState>,
    pub xi: Vec<f64>,
    pub stats: LogisticMoments,
}

/// One batch iteration: coefficients from the current ξ vector, then ξ
/// from the new coefficients, then the variance moments.
pub fn sweep(state: &mut LogisticState, xi: &mut [f64], y: &[f64], c: &DMatrix<f64>, spec: &BlockSpec) -> Result<()> {
    check_dim("logistic xi vector", c.nrows(), xi.len())?;
    let stats = LogisticMoments::from_batch(y, c, xi)?;
    state.refresh_coefficients(&stats, spec)?;
    for (i, x) in xi.iter_mut().enumerate() {
        *x = xi_from_second_moment(&c.row(i).transpose(), &state.mu_bu, &state.sigma_bu)?;
    }
    sweep_block_moments(spec, &state.mu_bu, &state.sigma_bu, &mut state.mu_recip_sigsq_u, &mut state.mu_recip_a_u);
    Ok(())
}

pub fn fit_batch_logistic_from(
    mut state: LogisticState,
    y: &[f64],
    c: &DMatrix<f64>,
    spec: &BlockSpec,
    opts: &FitOptions,
) -> Result<LogisticBatchFit> {
    spec.validate()?;
    check_dim("logistic design columns", spec.total_dim(), c.ncols())?;
    let n = y.len();
    let mut xi = vec![1.0; n];
    let mut iterations = opts.max_iter;
    let mut converged = false;
    for iter in 1..=opts.max_iter {
        let (prev, prev_xi) = (state.clone(), xi.clone());
        sweep(&mut state, &mut xi, y, c, spec)?;
        if state.change_from(&prev).max(max_rel_change(&prev_xi, &xi)) < opts.tol {
            iterations = iter;
            converged = true;
            break;
        }
    }
    let stats = LogisticMoments::from_batch(y, c, &xi)?;
    Ok(LogisticBatchFit {
        fit: BatchFit {
            state,
            iterations,
            converged,
            elbo: None,
        },
        xi,
        stats,
    })
}

pub fn fit_batch_logistic(y: &[f64], c: &DMatrix<f64>, spec: &BlockSpec, opts: &FitOptions) -> Result<LogisticBatchFit> {
    fit_batch_logistic_from(LogisticState::initial(spec), y, c, spec, opts)
}

/// Logit-scale fit and 95% band of the `[1, x, z(x)]` spline model on a
/// grid of `x` values.
pub fn posterior_curve(state: &LogisticState, basis: &SplineBasis, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    check_dim("logistic curve", 2 + basis.len(), state.mu_bu.len())?;
    Ok(grid
        .iter()
        .map(|&x| {
            let mut c = DVector::zeros(2 + basis.len());
            c[0] = 1.0;
            c[1] = x;
            basis.eval_into(x, &mut c.as_mut_slice()[2..]);
            contrast_band(x, &c, &state.mu_bu, &state.sigma_bu)
        })
        .collect())
}
