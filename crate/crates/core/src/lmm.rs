//! Gaussian linear mixed models.
//!
//! ```text
//! y | β, u, σ_ε² ~ N(Xβ + Zu, σ_ε² I)
//! u | σ_u1²..σ_ur² ~ N(0, blockdiag(σ_u1² I_K1, …, σ_ur² I_Kr))
//! ```
//!
//! with Half-Cauchy priors on every standard deviation. Random intercepts
//! and penalized-spline additive models are both instances: only the
//! design row changes. Coefficients are ordered `[β | u₁ | … | u_r]`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cov_rel_change, max_rel_change};
use crate::linreg::{gaussian_sweep, DEFAULT_A, DEFAULT_SIGSQ_BETA};
use crate::special::InverseGammaParams;
use crate::splines::SplineBasis;
use crate::suffstats::StreamingMoments;
use crate::summary::ParamSummary;
use crate::{BatchFit, FitOptions};

/// Layout of the coefficient vector plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub p: usize,
    pub block_sizes: Vec<usize>,
    pub sigsq_beta: f64,
    pub a_eps: f64,
    pub a_u: Vec<f64>,
}

impl BlockSpec {
    /// Spec with the default non-informative hyperparameters.
    pub fn new(p: usize, block_sizes: Vec<usize>) -> Result<Self> {
        let r = block_sizes.len();
        let spec = BlockSpec {
            p,
            block_sizes,
            sigsq_beta: DEFAULT_SIGSQ_BETA,
            a_eps: DEFAULT_A,
            a_u: vec![DEFAULT_A; r],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidSpec("at least one fixed-effect column is required".into()));
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::InvalidSpec("random-effect blocks must be non-empty".into()));
        }
        if self.a_u.len() != self.block_sizes.len() {
            return Err(Error::InvalidSpec(format!(
                "{} block sizes but {} A_u values",
                self.block_sizes.len(),
                self.a_u.len()
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.sigsq_beta) || !positive(self.a_eps) || !self.a_u.iter().all(|&v| positive(v)) {
            return Err(Error::Domain("hyperparameters must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    /// Total coefficient count `P = p + ΣK_ℓ`.
    pub fn total_dim(&self) -> usize {
        self.p + self.block_sizes.iter().sum::<usize>()
    }

    /// Index range of block `l` inside the coefficient vector.
    pub fn block_range(&self, l: usize) -> Range<usize> {
        let start = self.p + self.block_sizes[..l].iter().sum::<usize>();
        start..start + self.block_sizes[l]
    }

    /// Diagonal of `blockdiag(σ_β⁻² I_p, μ_{q(1/σ_u1²)} I_K1, …)`.
    pub fn prior_precision(&self, mu_recip_sigsq_u: &[f64]) -> DVector<f64> {
        let mut d = DVector::from_element(self.total_dim(), 1.0 / self.sigsq_beta);
        for (l, &m) in mu_recip_sigsq_u.iter().enumerate() {
            d.rows_range_mut(self.block_range(l)).fill(m);
        }
        d
    }
}

/// `(μ_{q(u_ℓ)}, Σ_{q(u_ℓ)})` for block `l`.
pub fn extract_block(spec: &BlockSpec, mu: &DVector<f64>, sigma: &DMatrix<f64>, l: usize) -> (DVector<f64>, DMatrix<f64>) {
    let r = spec.block_range(l);
    let k = r.len();
    (mu.rows(r.start, k).into_owned(), sigma.view((r.start, r.start), (k, k)).into_owned())
}

/// The per-block `μ_{q(1/a_uℓ)}`, `μ_{q(1/σ_uℓ²)}` pair, shared by the
/// Gaussian and logistic mixed models.
pub(crate) fn sweep_block_moments(
    spec: &BlockSpec,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    mu_recip_sigsq_u: &mut [f64],
    mu_recip_a_u: &mut [f64],
) {
    for l in 0..spec.num_blocks() {
        let r = spec.block_range(l);
        let k = r.len();
        let sq = mu.rows(r.start, k).norm_squared();
        let tr: f64 = r.clone().map(|i| sigma[(i, i)]).sum();
        mu_recip_a_u[l] = 1.0 / (mu_recip_sigsq_u[l] + spec.a_u[l].powi(-2));
        mu_recip_sigsq_u[l] = (k as f64 + 1.0) / (2.0 * mu_recip_a_u[l] + sq + tr);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmState {
    pub mu_bu: DVector<f64>,
    pub sigma_bu: DMatrix<f64>,
    pub mu_recip_sigsq_eps: f64,
    pub mu_recip_a_eps: f64,
    pub mu_recip_sigsq_u: Vec<f64>,
    pub mu_recip_a_u: Vec<f64>,
}

impl LmmState {
    /// Zero mean, identity covariance and every reciprocal moment 1.
    pub fn initial(spec: &BlockSpec) -> Self {
        let big_p = spec.total_dim();
        let r = spec.num_blocks();
        LmmState {
            mu_bu: DVector::zeros(big_p),
            sigma_bu: DMatrix::identity(big_p, big_p),
            mu_recip_sigsq_eps: 1.0,
            mu_recip_a_eps: 1.0,
            mu_recip_sigsq_u: vec![1.0; r],
            mu_recip_a_u: vec![1.0; r],
        }
    }

    fn check(&self, spec: &BlockSpec, stats: &StreamingMoments) -> Result<()> {
        check_dim("lmm state", spec.total_dim(), self.mu_bu.len())?;
        check_dim("lmm statistics", spec.total_dim(), stats.dim())?;
        check_dim("lmm blocks", spec.num_blocks(), self.mu_recip_sigsq_u.len())
    }

    pub fn cycle(&mut self, stats: &StreamingMoments, spec: &BlockSpec) -> Result<()> {
        self.check(spec, stats)?;
        let prior = spec.prior_precision(&self.mu_recip_sigsq_u);
        let s = gaussian_sweep(stats, &prior, self.mu_recip_sigsq_eps, spec.a_eps, "lmm covariance")?;
        self.sigma_bu = s.sigma;
        self.mu_bu = s.mu;
        self.mu_recip_a_eps = s.mu_recip_a;
        self.mu_recip_sigsq_eps = s.mu_recip_sigsq;
        sweep_block_moments(spec, &self.mu_bu, &self.sigma_bu, &mut self.mu_recip_sigsq_u, &mut self.mu_recip_a_u);
        Ok(())
    }

    pub fn step_online(
        &mut self,
        stats: &mut StreamingMoments,
        y_new: f64,
        c_new: &DVector<f64>,
        spec: &BlockSpec,
    ) -> Result<()> {
        check_dim("lmm online step", spec.total_dim(), c_new.len())?;
        stats.update(y_new, c_new)?;
        self.cycle(stats, spec)
    }

    /// Convergence measure against an earlier state.
    pub fn change_from(&self, prev: &Self) -> f64 {
        let scalars = |s: &Self| {
            let mut v = vec![s.mu_recip_sigsq_eps, s.mu_recip_a_eps];
            v.extend(&s.mu_recip_sigsq_u);
            v.extend(&s.mu_recip_a_u);
            v
        };
        max_rel_change(prev.mu_bu.as_slice(), self.mu_bu.as_slice())
            .max(cov_rel_change(&prev.sigma_bu, &self.sigma_bu))
            .max(max_rel_change(&scalars(prev), &scalars(self)))
    }

    /// All parameters flattened.
    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.mu_bu.iter().copied().collect();
        v.extend(self.sigma_bu.iter());
        v.push(self.mu_recip_sigsq_eps);
        v.push(self.mu_recip_a_eps);
        v.extend(&self.mu_recip_sigsq_u);
        v.extend(&self.mu_recip_a_u);
        v
    }

    pub fn coefficient(&self, j: usize, label: impl Into<String>) -> ParamSummary {
        ParamSummary::normal(label, self.mu_bu[j], self.sigma_bu[(j, j)])
    }

    /// q(σ_ε²) = IG(½(n+1), (n+1)/(2μ_{q(1/σ_ε²)})).
    pub fn sigma_sq_eps_posterior(&self, n: usize) -> InverseGammaParams {
        recip_moment_to_ig(n as f64 + 1.0, self.mu_recip_sigsq_eps)
    }

    /// q(σ_uℓ²) = IG(½(K_ℓ+1), (K_ℓ+1)/(2μ_{q(1/σ_uℓ²)})).
    pub fn sigma_sq_u_posterior(&self, spec: &BlockSpec, l: usize) -> InverseGammaParams {
        recip_moment_to_ig(spec.block_sizes[l] as f64 + 1.0, self.mu_recip_sigsq_u[l])
    }
}

/// Inverse-Gamma with shape `½·dof` whose reciprocal mean is `mu_recip`.
pub(crate) fn recip_moment_to_ig(dof: f64, mu_recip: f64) -> InverseGammaParams {
    InverseGammaParams::new(0.5 * dof, 0.5 * dof / mu_recip)
        .expect("positive moments give valid Inverse-Gamma parameters")
}

pub fn fit_batch_lmm_from(
    mut state: LmmState,
    stats: &StreamingMoments,
    spec: &BlockSpec,
    opts: &FitOptions,
) -> Result<BatchFit<LmmState>> {
    spec.validate()?;
    for iter in 1..=opts.max_iter {
        let prev = state.clone();
        state.cycle(stats, spec)?;
        if state.change_from(&prev) < opts.tol {
            return Ok(BatchFit {
                state,
                iterations: iter,
                converged: true,
                elbo: None,
            });
        }
    }
    Ok(BatchFit {
        state,
        iterations: opts.max_iter,
        converged: false,
        elbo: None,
    })
}

pub fn fit_batch_lmm(y: &[f64], c: &DMatrix<f64>, spec: &BlockSpec, opts: &FitOptions) -> Result<BatchFit<LmmState>> {
    check_dim("lmm design columns", spec.total_dim(), c.ncols())?;
    let stats = StreamingMoments::from_batch(y, c)?;
    fit_batch_lmm_from(LmmState::initial(spec), &stats, spec, opts)
}

/// `[1, x, e]` with `e` the indicator of `group` (1-based) among `m`.
pub fn build_row_random_intercept(x_new: f64, group: usize, m: usize) -> Result<DVector<f64>> {
    if group < 1 || group > m {
        return Err(Error::GroupOutOfRange { group, m });
    }
    let mut c = DVector::zeros(2 + m);
    c[0] = 1.0;
    c[1] = x_new;
    c[1 + group] = 1.0;
    Ok(c)
}

/// `[1, linear…, z¹(s₁)…, z²(s₂)…]`: intercept, linear terms, then one
/// spline block per smooth term in the order given.
pub fn build_row_additive(linear: &[f64], smooth: &[(f64, &SplineBasis)]) -> DVector<f64> {
    let total = 1 + linear.len() + smooth.iter().map(|(_, b)| b.len()).sum::<usize>();
    let mut c = DVector::zeros(total);
    c[0] = 1.0;
    c.as_mut_slice()[1..=linear.len()].copy_from_slice(linear);
    let mut at = 1 + linear.len();
    for (x, b) in smooth {
        b.eval_into(*x, &mut c.as_mut_slice()[at..at + b.len()]);
        at += b.len();
    }
    c
}
