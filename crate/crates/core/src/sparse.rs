//! Sparse signal regression with a Laplace-Zero prior on the basis
//! coefficients.
//!
//! ```text
//! y | β, γ, v, σ_ε² ~ N(1β + Z(γ ⊙ v), σ_ε² I)
//! v | σ_u², b ~ N(0, σ_u² diag(b)⁻¹),  b_k ~ IG(1, ½)
//! γ_k | ρ ~ Bernoulli(ρ),  ρ ~ Beta(A_ρ, B_ρ)
//! ```
//!
//! with Half-Cauchy priors on σ_u and σ_ε. The combined coefficient vector
//! is `[β | v]` with design `C = [1 Z]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cov_rel_change, max_rel_change, spd_inverse};
use crate::linreg::{DEFAULT_A, DEFAULT_SIGSQ_BETA};
use crate::lmm::recip_moment_to_ig;
use crate::special::{digamma_unchecked, logistic, InverseGammaParams};
use crate::suffstats::SparseMoments;
use crate::summary::ParamSummary;
use crate::{BatchFit, FitOptions};

/// Inclusion probabilities are kept inside `[GAMMA_FLOOR, 1 − GAMMA_FLOOR]`.
pub const GAMMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseHyper {
    pub sigsq_beta: f64,
    pub a_u: f64,
    pub a_eps: f64,
    pub a_rho: f64,
    pub b_rho: f64,
}

impl Default for SparseHyper {
    fn default() -> Self {
        SparseHyper {
            sigsq_beta: DEFAULT_SIGSQ_BETA,
            a_u: DEFAULT_A,
            a_eps: DEFAULT_A,
            a_rho: 1.0,
            b_rho: 1.0,
        }
    }
}

impl SparseHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.sigsq_beta, self.a_u, self.a_eps, self.a_rho, self.b_rho]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !ok {
            return Err(Error::Domain("sparse hyperparameters must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseState {
    pub mu_bv: DVector<f64>,
    pub sigma_bv: DMatrix<f64>,
    pub mu_b: DVector<f64>,
    pub mu_gamma: DVector<f64>,
    pub mu_w: DVector<f64>,
    pub omega_w: DMatrix<f64>,
    pub mu_recip_sigsq_u: f64,
    pub mu_recip_sigsq_eps: f64,
    pub mu_recip_a_u: f64,
    pub mu_recip_a_eps: f64,
    /// Number of inclusion probabilities clamped so far.
    pub gamma_clamps: u64,
}

/// `diag{w ⊙ (1 − w)} + w wᵀ`.
pub fn omega_from_w(w: &DVector<f64>) -> DMatrix<f64> {
    let mut om = w * w.transpose();
    for i in 0..w.len() {
        om[(i, i)] += w[i] * (1.0 - w[i]);
    }
    om
}

fn w_from_gamma(gamma: &DVector<f64>) -> DVector<f64> {
    let mut w = DVector::from_element(gamma.len() + 1, 1.0);
    w.rows_mut(1, gamma.len()).copy_from(gamma);
    w
}

impl SparseState {
    /// `μ_{q(γ)} = gamma0·1`, `μ_{q(b)} = 1`, reciprocal moments 1, zero mean.
    pub fn initial(k: usize, gamma0: f64) -> Self {
        let mu_gamma = DVector::from_element(k, gamma0);
        let mu_w = w_from_gamma(&mu_gamma);
        SparseState {
            mu_bv: DVector::zeros(k + 1),
            sigma_bv: DMatrix::identity(k + 1, k + 1),
            mu_b: DVector::from_element(k, 1.0),
            omega_w: omega_from_w(&mu_w),
            mu_gamma,
            mu_w,
            mu_recip_sigsq_u: 1.0,
            mu_recip_sigsq_eps: 1.0,
            mu_recip_a_u: 1.0,
            mu_recip_a_eps: 1.0,
            gamma_clamps: 0,
        }
    }

    pub fn num_basis(&self) -> usize {
        self.mu_gamma.len()
    }

    /// `μ_{q(γ•)} = Σ_k μ_{q(γ_k)}`.
    pub fn mu_gamma_sum(&self) -> f64 {
        self.mu_gamma.sum()
    }

    pub fn cycle(&mut self, stats: &SparseMoments, hyper: &SparseHyper) -> Result<()> {
        let k = self.num_basis();
        check_dim("sparse cycle", k, stats.dim())?;
        let kf = k as f64;
        let n = stats.n as f64;
        let (mu_s_eps, mu_s_u) = (self.mu_recip_sigsq_eps, self.mu_recip_sigsq_u);

        let mut prec = stats.ctc.component_mul(&self.omega_w) * mu_s_eps;
        prec[(0, 0)] += 1.0 / hyper.sigsq_beta;
        for j in 0..k {
            prec[(j + 1, j + 1)] += mu_s_u * self.mu_b[j];
        }
        let sigma = spd_inverse(prec, "sparse covariance")?;
        let mu = (&sigma * stats.cty.component_mul(&self.mu_w)) * mu_s_eps;

        let mu_v = mu.rows(1, k).into_owned();
        let sigma_v = sigma.view((1, 1), (k, k));
        let var_v = DVector::from_iterator(k, (0..k).map(|j| sigma[(j + 1, j + 1)]));
        let second_v = &var_v + mu_v.component_mul(&mu_v);
        let mu_b = second_v.map(|s| (mu_s_u * s).powf(-0.5));

        let gamma = &self.mu_gamma;
        let ztz_diag = stats.ztz.diagonal();
        let gamma_mu_v = gamma.component_mul(&mu_v);
        let ztz_gmv = &stats.ztz * &gamma_mu_v;
        let gamma_sum = gamma.sum();
        let prior_logit = digamma_unchecked(hyper.a_rho + gamma_sum) - digamma_unchecked(hyper.b_rho + kf - gamma_sum);
        let mut eta = DVector::zeros(k);
        for j in 0..k {
            // diagonal{ZᵀZ diag(μ_{q(γ)}) Σ_{q(v)}}_j
            let coupled: f64 = (0..k).map(|i| stats.ztz[(j, i)] * gamma[i] * sigma_v[(i, j)]).sum();
            let cross = sigma[(0, j + 1)] + mu[0] * mu_v[j];
            let bracket = ztz_diag[j] * second_v[j] - 2.0 * stats.zty[j] * mu_v[j]
                + 2.0 * stats.zt1[j] * cross
                + 2.0 * coupled
                - 2.0 * ztz_diag[j] * gamma[j] * var_v[j]
                + 2.0 * mu_v[j] * (ztz_gmv[j] - ztz_diag[j] * gamma_mu_v[j]);
            eta[j] = -0.5 * mu_s_eps * bracket + prior_logit;
        }

        let mut clamps = 0;
        let mu_gamma = eta.map(|e| {
            let g = logistic(e);
            let c = g.clamp(GAMMA_FLOOR, 1.0 - GAMMA_FLOOR);
            if c != g {
                clamps += 1;
            }
            c
        });
        let mu_w = w_from_gamma(&mu_gamma);
        let omega_w = omega_from_w(&mu_w);

        let mu_a_eps = 1.0 / (mu_s_eps + hyper.a_eps.powi(-2));
        let mu_a_u = 1.0 / (mu_s_u + hyper.a_u.powi(-2));

        let second = &sigma + &mu * mu.transpose();
        let hadamard_trace = stats.ctc.component_mul(&omega_w.component_mul(&second)).sum();
        let b_eps = mu_a_eps + 0.5 * stats.yty - mu_w.component_mul(&mu).dot(&stats.cty) + 0.5 * hadamard_trace;
        let b_u = mu_a_u + 0.5 * mu_b.dot(&second_v);
        if !(b_eps > 0.0 && b_u > 0.0) {
            return Err(Error::Domain(format!(
                "non-positive Inverse-Gamma rate in sparse sweep (B_eps = {b_eps}, B_u = {b_u})"
            )));
        }

        self.sigma_bv = sigma;
        self.mu_bv = mu;
        self.mu_b = mu_b;
        self.mu_gamma = mu_gamma;
        self.mu_w = mu_w;
        self.omega_w = omega_w;
        self.mu_recip_a_eps = mu_a_eps;
        self.mu_recip_a_u = mu_a_u;
        self.mu_recip_sigsq_u = 0.5 * (kf + 1.0) / b_u;
        self.mu_recip_sigsq_eps = 0.5 * (n + 1.0) / b_eps;
        self.gamma_clamps += clamps;
        Ok(())
    }

    pub fn step_online(
        &mut self,
        stats: &mut SparseMoments,
        y_new: f64,
        z_new: &DVector<f64>,
        hyper: &SparseHyper,
    ) -> Result<()> {
        check_dim("sparse online step", self.num_basis(), z_new.len())?;
        stats.update(y_new, z_new)?;
        self.cycle(stats, hyper)
    }

    /// Convergence measure against an earlier state.
    pub fn change_from(&self, prev: &Self) -> f64 {
        let scalars = |s: &Self| [s.mu_recip_sigsq_u, s.mu_recip_sigsq_eps, s.mu_recip_a_u, s.mu_recip_a_eps];
        [
            max_rel_change(prev.mu_bv.as_slice(), self.mu_bv.as_slice()),
            max_rel_change(prev.mu_b.as_slice(), self.mu_b.as_slice()),
            max_rel_change(prev.mu_gamma.as_slice(), self.mu_gamma.as_slice()),
            cov_rel_change(&prev.sigma_bv, &self.sigma_bv),
            max_rel_change(&scalars(prev), &scalars(self)),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.mu_bv.iter().copied().collect();
        v.extend(self.sigma_bv.iter());
        v.extend(self.mu_b.iter());
        v.extend(self.mu_gamma.iter());
        v.extend([
            self.mu_recip_sigsq_u,
            self.mu_recip_sigsq_eps,
            self.mu_recip_a_u,
            self.mu_recip_a_eps,
        ]);
        v
    }

    pub fn intercept(&self, label: impl Into<String>) -> ParamSummary {
        ParamSummary::normal(label, self.mu_bv[0], self.sigma_bv[(0, 0)])
    }

    /// Mean and variance of `γ_k v_k` under the product density.
    pub fn effective_coefficient(&self, j: usize) -> (f64, f64) {
        let (g, m, s) = (self.mu_gamma[j], self.mu_bv[j + 1], self.sigma_bv[(j + 1, j + 1)]);
        let mean = g * m;
        (mean, (g * (s + m * m) - mean * mean).max(0.0))
    }

    pub fn sigma_sq_eps_posterior(&self, n: usize) -> InverseGammaParams {
        recip_moment_to_ig(n as f64 + 1.0, self.mu_recip_sigsq_eps)
    }

    pub fn sigma_sq_u_posterior(&self) -> InverseGammaParams {
        recip_moment_to_ig(self.num_basis() as f64 + 1.0, self.mu_recip_sigsq_u)
    }
}

pub fn fit_batch_sparse_from(
    mut state: SparseState,
    stats: &SparseMoments,
    hyper: &SparseHyper,
    opts: &FitOptions,
) -> Result<BatchFit<SparseState>> {
    hyper.validate()?;
    for iter in 1..=opts.max_iter {
        let prev = state.clone();
        state.cycle(stats, hyper)?;
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

pub fn fit_batch_sparse(y: &[f64], z: &DMatrix<f64>, hyper: &SparseHyper, opts: &FitOptions) -> Result<BatchFit<SparseState>> {
    let stats = SparseMoments::from_batch(y, z)?;
    fit_batch_sparse_from(SparseState::initial(z.ncols(), 0.5), &stats, hyper, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::digamma;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn hyper() -> SparseHyper {
        SparseHyper {
            sigsq_beta: 100.0,
            a_u: 5.0,
            a_eps: 5.0,
            a_rho: 1.0,
            b_rho: 1.0,
        }
    }

    fn fixed_state(k: usize) -> SparseState {
        let mut s = SparseState::initial(k, 0.5);
        s.mu_recip_sigsq_eps = 1.3;
        s.mu_recip_sigsq_u = 0.7;
        s.mu_b = DVector::from_iterator(k, (0..k).map(|j| 0.8 + 0.1 * j as f64));
        s.mu_gamma = DVector::from_iterator(k, (0..k).map(|j| 0.3 + 0.15 * j as f64));
        s.mu_w = w_from_gamma(&s.mu_gamma);
        s.omega_w = omega_from_w(&s.mu_w);
        s
    }

    #[test]
    fn omega_example() {
        let om = omega_from_w(&DVector::from_vec(vec![1.0, 0.5]));
        assert_eq!(om, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.5]));
    }

    #[test]
    fn scalar_sweep_matches_hand_transcription() {
        let z = [0.4, -1.2, 0.9, 2.0, 0.1];
        let y = [1.0, -0.5, 0.8, 2.2, 0.3];
        let h = hyper();
        let stats = SparseMoments::from_batch(&y, &DMatrix::from_column_slice(5, 1, &z)).unwrap();
        let mut s = fixed_state(1);
        s.cycle(&stats, &h).unwrap();

        let n = 5.0;
        let (se, su, b, g) = (1.3, 0.7, 0.8, 0.3);
        let zt1: f64 = z.iter().sum();
        let zty: f64 = z.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ztz: f64 = z.iter().map(|v| v * v).sum();
        let yty: f64 = y.iter().map(|v| v * v).sum();
        let sy: f64 = y.iter().sum();
        // (CᵀC) ⊙ Ω with Ω = [[1, g], [g, g]]
        let p00 = se * n + 1.0 / h.sigsq_beta;
        let p01 = se * zt1 * g;
        let p11 = se * ztz * g + su * b;
        let det = p00 * p11 - p01 * p01;
        let (s00, s01, s11) = (p11 / det, -p01 / det, p00 / det);
        let r0 = sy;
        let r1 = g * zty;
        let m0 = se * (s00 * r0 + s01 * r1);
        let m1 = se * (s01 * r0 + s11 * r1);
        let mb = (su * (s11 + m1 * m1)).powf(-0.5);
        let eta = -0.5 * se * (ztz * (s11 + m1 * m1) - 2.0 * zty * m1 + 2.0 * zt1 * (s01 + m0 * m1))
            + digamma(1.0 + g).unwrap()
            - digamma(1.0 + 1.0 - g).unwrap();
        let gn = 1.0 / (1.0 + (-eta).exp());
        let ae = 1.0 / (se + 1.0 / 25.0);
        let au = 1.0 / (su + 1.0 / 25.0);
        let t00 = n * (s00 + m0 * m0);
        let t01 = zt1 * gn * (s01 + m0 * m1);
        let t11 = ztz * gn * (s11 + m1 * m1);
        let be = ae + 0.5 * yty - (m0 * sy + gn * m1 * zty) + 0.5 * (t00 + 2.0 * t01 + t11);
        let bu = au + 0.5 * mb * (s11 + m1 * m1);

        let close = |a: f64, b: f64| (a - b).abs() < 1e-12 * b.abs().max(1.0);
        assert!(close(s.sigma_bv[(0, 0)], s00) && close(s.sigma_bv[(0, 1)], s01) && close(s.sigma_bv[(1, 1)], s11));
        assert!(close(s.mu_bv[0], m0) && close(s.mu_bv[1], m1));
        assert!(close(s.mu_b[0], mb));
        assert!(close(s.mu_gamma[0], gn));
        assert!(close(s.mu_recip_a_eps, ae) && close(s.mu_recip_a_u, au));
        assert!(close(s.mu_recip_sigsq_u, 1.0 / bu));
        assert!(close(s.mu_recip_sigsq_eps, 3.0 / be));
        assert_eq!(s.mu_w[0], 1.0);
        assert_eq!(s.omega_w, omega_from_w(&s.mu_w));
    }

    #[test]
    fn multi_column_eta_matches_matrix_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let k = 3;
        let z = DMatrix::from_fn(12, k, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = hyper();
        let stats = SparseMoments::from_batch(&y, &z).unwrap();
        let start = fixed_state(k);
        let mut s = start.clone();
        s.cycle(&stats, &h).unwrap();

        // Each η line written with explicit matrices.
        let ztz = &stats.ztz;
        let g = &start.mu_gamma;
        let mu_v = s.mu_bv.rows(1, k).into_owned();
        let sig_v = s.sigma_bv.view((1, 1), (k, k)).into_owned();
        let dz = ztz.diagonal();
        let dv = sig_v.diagonal();
        let row = s.sigma_bv.view((0, 1), (1, k)).transpose();
        let line1 = dz.component_mul(&(&dv + mu_v.component_mul(&mu_v))) - 2.0 * stats.zty.component_mul(&mu_v);
        let line2 = 2.0 * stats.zt1.component_mul(&(row + &mu_v * s.mu_bv[0]));
        let line3 = 2.0 * (ztz * DMatrix::from_diagonal(g) * &sig_v).diagonal();
        let line4 = -2.0 * dz.component_mul(g).component_mul(&dv);
        let gv = g.component_mul(&mu_v);
        let line5 = 2.0 * mu_v.component_mul(&(ztz * &gv - dz.component_mul(&gv)));
        let gs = g.sum();
        let psi = digamma(h.a_rho + gs).unwrap() - digamma(h.b_rho + k as f64 - gs).unwrap();
        let eta = (line1 + line2 + line3 + line4 + line5) * (-0.5 * start.mu_recip_sigsq_eps)
            + DVector::from_element(k, psi);
        for j in 0..k {
            assert!((s.mu_gamma[j] - logistic(eta[j])).abs() < 1e-12);
        }
        assert!((s.mu_gamma_sum() - s.mu_gamma.iter().sum::<f64>()).abs() == 0.0);
    }

    fn planted(seed: u64, n: usize, k: usize, active: &[usize], amp: f64) -> (Vec<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                1.0 + active.iter().map(|&j| amp * z[(i, j)]).sum::<f64>() + e
            })
            .collect();
        (y, z)
    }

    #[test]
    fn planted_recovery_and_invariants() {
        let k = 40;
        let active = [3, 11, 25, 37];
        let (y, z) = planted(8, 400, k, &active, 3.0);
        let fit = fit_batch_sparse(&y, &z, &SparseHyper::default(), &FitOptions::default()).unwrap();
        let s = &fit.state;
        let on = active.iter().filter(|&&j| s.mu_gamma[j] > 0.5).count();
        let off = (0..k).filter(|j| !active.contains(j) && s.mu_gamma[*j] < 0.5).count();
        assert!(on as f64 >= 0.8 * active.len() as f64, "active found {on}");
        assert!(off as f64 >= 0.8 * (k - active.len()) as f64, "inactive found {off}");
        assert!(s.mu_gamma.iter().all(|g| *g > 0.0 && *g < 1.0));
        assert_eq!(s.mu_w[0], 1.0);
        assert!(s.mu_b.iter().all(|b| *b > 0.0));

        let stats = SparseMoments::from_batch(&y, &z).unwrap();
        let other = fit_batch_sparse_from(SparseState::initial(k, 0.9), &stats, &SparseHyper::default(), &FitOptions::default())
            .unwrap();
        for j in 0..k {
            assert_eq!(s.mu_gamma[j] > 0.5, other.state.mu_gamma[j] > 0.5, "column {j}");
        }
    }

    #[test]
    fn noise_only_stream_shrinks_inclusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 8;
        let h = SparseHyper {
            a_rho: 1.0,
            b_rho: 9.0,
            ..SparseHyper::default()
        };
        let mut s = SparseState::initial(k, 0.5);
        let mut stats = SparseMoments::new(k);
        let start = s.mu_gamma_sum();
        for _ in 0..200 {
            let z = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let y: f64 = StandardNormal.sample(&mut rng);
            s.step_online(&mut stats, y, &z, &h).unwrap();
        }
        assert!(s.mu_gamma_sum() < start);
    }

    #[test]
    fn zero_row_touches_only_count_and_yty() {
        let mut s = SparseState::initial(2, 0.5);
        let mut stats = SparseMoments::new(2);
        s.step_online(&mut stats, 1.0, &DVector::from_vec(vec![0.3, -0.2]), &hyper()).unwrap();
        let before = stats.clone();
        s.step_online(&mut stats, 2.0, &DVector::zeros(2), &hyper()).unwrap();
        assert_eq!(stats.zt1, before.zt1);
        assert_eq!(stats.zty, before.zty);
        assert_eq!(stats.ztz, before.ztz);
        assert_eq!(stats.n, 2);
        assert_eq!(stats.yty, before.yty + 4.0);
    }
}
