//! One interface over the four solvers, used by the diagnostics and the
//! command-line driver.
//!
//! A model consumes `(y, row)` pairs. For the sparse model the row is the
//! basis vector `z`; for every other model it is the full design row `c`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linreg::{self, LinRegHyper, LinRegState};
use crate::lmm::{self, BlockSpec, LmmState};
use crate::logistic::{self, LogisticState};
use crate::special::InverseGammaParams;
use crate::sparse::{self, SparseHyper, SparseState};
use crate::suffstats::{LogisticMoments, SparseMoments, StreamingMoments};
use crate::summary::ParamSummary;
use crate::FitOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    LinReg { p: usize, hyper: LinRegHyper },
    Lmm(BlockSpec),
    Sparse { k: usize, hyper: SparseHyper },
    Logistic(BlockSpec),
}

/// Solver state together with its sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    LinReg { state: LinRegState, stats: StreamingMoments },
    Lmm { state: LmmState, stats: StreamingMoments },
    Sparse { state: SparseState, stats: SparseMoments },
    Logistic { state: LogisticState, stats: LogisticMoments },
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub fitted: Fitted,
    pub converged: bool,
    pub iterations: usize,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::LinReg { .. } => "linreg",
            ModelSpec::Lmm(_) => "lmm",
            ModelSpec::Sparse { .. } => "sparse",
            ModelSpec::Logistic(_) => "logistic",
        }
    }

    /// Length of the row each observation carries.
    pub fn row_dim(&self) -> usize {
        match self {
            ModelSpec::LinReg { p, .. } => *p,
            ModelSpec::Lmm(s) | ModelSpec::Logistic(s) => s.total_dim(),
            ModelSpec::Sparse { k, .. } => *k,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, ModelSpec::Logistic(_))
    }

    pub fn fit_batch(&self, y: &[f64], rows: &DMatrix<f64>, opts: &FitOptions) -> Result<BatchOutcome> {
        check_dim("batch design columns", self.row_dim(), rows.ncols())?;
        Ok(match self {
            ModelSpec::LinReg { p, hyper } => {
                let stats = StreamingMoments::from_batch(y, rows)?;
                let f = linreg::fit_batch_from(LinRegState::initial(*p), &stats, hyper, opts)?;
                BatchOutcome {
                    fitted: Fitted::LinReg { state: f.state, stats },
                    converged: f.converged,
                    iterations: f.iterations,
                }
            }
            ModelSpec::Lmm(spec) => {
                let stats = StreamingMoments::from_batch(y, rows)?;
                let f = lmm::fit_batch_lmm_from(LmmState::initial(spec), &stats, spec, opts)?;
                BatchOutcome {
                    fitted: Fitted::Lmm { state: f.state, stats },
                    converged: f.converged,
                    iterations: f.iterations,
                }
            }
            ModelSpec::Sparse { k, hyper } => {
                let stats = SparseMoments::from_batch(y, rows)?;
                let f = sparse::fit_batch_sparse_from(SparseState::initial(*k, 0.5), &stats, hyper, opts)?;
                BatchOutcome {
                    fitted: Fitted::Sparse { state: f.state, stats },
                    converged: f.converged,
                    iterations: f.iterations,
                }
            }
            ModelSpec::Logistic(spec) => {
                let f = logistic::fit_batch_logistic(y, rows, spec, opts)?;
                BatchOutcome {
                    fitted: Fitted::Logistic {
                        state: f.fit.state,
                        stats: f.stats,
                    },
                    converged: f.fit.converged,
                    iterations: f.fit.iterations,
                }
            }
        })
    }
}

/// One reported quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SummaryItem {
    /// `offset + cᵀθ` for the Normal coefficient vector θ.
    Contrast { label: String, c: DVector<f64>, offset: f64 },
    /// Error variance times `factor`, or its log.
    ErrorVariance { label: String, factor: f64, log: bool },
    /// Variance of random-effect block `block` times `factor`, or its log.
    BlockVariance { label: String, block: usize, factor: f64, log: bool },
    /// Sparse inclusion probability of basis column `index`.
    Inclusion { label: String, index: usize },
    /// Sparse effective coefficient `γ_k v_k`, times `factor`.
    EffectiveCoefficient { label: String, index: usize, factor: f64 },
}

impl SummaryItem {
    pub fn label(&self) -> &str {
        match self {
            SummaryItem::Contrast { label, .. }
            | SummaryItem::ErrorVariance { label, .. }
            | SummaryItem::BlockVariance { label, .. }
            | SummaryItem::Inclusion { label, .. }
            | SummaryItem::EffectiveCoefficient { label, .. } => label,
        }
    }

    /// Plain coefficient `θ_j`.
    pub fn coefficient(label: impl Into<String>, j: usize, dim: usize) -> Self {
        let mut c = DVector::zeros(dim);
        c[j] = 1.0;
        SummaryItem::Contrast {
            label: label.into(),
            c,
            offset: 0.0,
        }
    }
}

fn scaled_ig(ig: InverseGammaParams, factor: f64) -> InverseGammaParams {
    InverseGammaParams::new(ig.shape(), ig.rate() * factor).expect("positive scale keeps parameters valid")
}

fn variance_summary(label: &str, ig: InverseGammaParams, factor: f64, log: bool) -> ParamSummary {
    let ig = scaled_ig(ig, factor);
    if log {
        ParamSummary::log_inverse_gamma(label, &ig)
    } else {
        ParamSummary::inverse_gamma(label, &ig)
    }
}

impl Fitted {
    pub fn n(&self) -> usize {
        match self {
            Fitted::LinReg { stats, .. } | Fitted::Lmm { stats, .. } => stats.n,
            Fitted::Sparse { stats, .. } => stats.n,
            Fitted::Logistic { stats, .. } => stats.n,
        }
    }

    /// Absorbs one observation with a single sweep.
    pub fn step(&mut self, spec: &ModelSpec, y: f64, row: &DVector<f64>) -> Result<()> {
        match (self, spec) {
            (Fitted::LinReg { state, stats }, ModelSpec::LinReg { hyper, .. }) => state.step_online(stats, y, row, hyper),
            (Fitted::Lmm { state, stats }, ModelSpec::Lmm(s)) => state.step_online(stats, y, row, s),
            (Fitted::Sparse { state, stats }, ModelSpec::Sparse { hyper, .. }) => state.step_online(stats, y, row, hyper),
            (Fitted::Logistic { state, stats }, ModelSpec::Logistic(s)) => state.step_online(stats, y, row, s).map(|_| ()),
            _ => Err(crate::Error::InvalidSpec("state does not belong to this model".into())),
        }
    }

    /// Mean and covariance of the Normal coefficient vector.
    pub fn coefficients(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        match self {
            Fitted::LinReg { state, .. } => (&state.mu_beta, &state.sigma_beta),
            Fitted::Lmm { state, .. } => (&state.mu_bu, &state.sigma_bu),
            Fitted::Sparse { state, .. } => (&state.mu_bv, &state.sigma_bv),
            Fitted::Logistic { state, .. } => (&state.mu_bu, &state.sigma_bu),
        }
    }

    pub fn error_variance(&self) -> Option<InverseGammaParams> {
        match self {
            Fitted::LinReg { state, stats } => Some(state.sigma_sq_posterior(stats.n)),
            Fitted::Lmm { state, stats } => Some(state.sigma_sq_eps_posterior(stats.n)),
            Fitted::Sparse { state, stats } => Some(state.sigma_sq_eps_posterior(stats.n)),
            Fitted::Logistic { .. } => None,
        }
    }

    pub fn block_variance(&self, spec: &ModelSpec, block: usize) -> Option<InverseGammaParams> {
        match (self, spec) {
            (Fitted::Lmm { state, .. }, ModelSpec::Lmm(s)) if block < s.num_blocks() => {
                Some(state.sigma_sq_u_posterior(s, block))
            }
            (Fitted::Logistic { state, .. }, ModelSpec::Logistic(s)) if block < s.num_blocks() => {
                Some(state.sigma_sq_u_posterior(s, block))
            }
            (Fitted::Sparse { state, .. }, _) if block == 0 => Some(state.sigma_sq_u_posterior()),
            _ => None,
        }
    }

    /// Summary of one item; `None` if the item does not apply to the model.
    pub fn summarize(&self, spec: &ModelSpec, item: &SummaryItem) -> Option<ParamSummary> {
        match item {
            SummaryItem::Contrast { label, c, offset } => {
                let (mu, sigma) = self.coefficients();
                if c.len() != mu.len() {
                    return None;
                }
                Some(ParamSummary::normal(label.clone(), offset + c.dot(mu), c.dot(&(sigma * c))))
            }
            SummaryItem::ErrorVariance { label, factor, log } => {
                self.error_variance().map(|ig| variance_summary(label, ig, *factor, *log))
            }
            SummaryItem::BlockVariance {
                label,
                block,
                factor,
                log,
            } => self.block_variance(spec, *block).map(|ig| variance_summary(label, ig, *factor, *log)),
            SummaryItem::Inclusion { label, index } => match self {
                Fitted::Sparse { state, .. } if *index < state.num_basis() => {
                    let g = state.mu_gamma[*index];
                    Some(ParamSummary {
                        label: label.clone(),
                        mean: g,
                        sd: (g * (1.0 - g)).sqrt(),
                        q025: if g > 0.975 { 1.0 } else { 0.0 },
                        q975: if g < 0.025 { 0.0 } else { 1.0 },
                    })
                }
                _ => None,
            },
            SummaryItem::EffectiveCoefficient { label, index, factor } => match self {
                Fitted::Sparse { state, .. } if *index < state.num_basis() => {
                    let (m, v) = state.effective_coefficient(*index);
                    Some(ParamSummary::normal(label.clone(), factor * m, factor * factor * v))
                }
                _ => None,
            },
        }
    }

    pub fn summarize_all(&self, spec: &ModelSpec, plan: &[SummaryItem]) -> Vec<ParamSummary> {
        plan.iter().filter_map(|item| self.summarize(spec, item)).collect()
    }

    /// Flattened parameters, for convergence and idempotence checks.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Fitted::LinReg { state, .. } => state.params(),
            Fitted::Lmm { state, .. } => state.params(),
            Fitted::Sparse { state, .. } => state.params(),
            Fitted::Logistic { state, .. } => state.params(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize) -> (Vec<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random() });
        let y = (0..n).map(|i| 1.0 + 2.0 * c[(i, 1)] + rng.random_range(-0.5..0.5)).collect();
        (y, c)
    }

    #[test]
    fn linreg_through_the_common_interface() {
        let (y, c) = data(50);
        let spec = ModelSpec::LinReg {
            p: 2,
            hyper: LinRegHyper::default(),
        };
        let out = spec.fit_batch(&y, &c, &FitOptions::default()).unwrap();
        assert!(out.converged);
        let direct = linreg::fit_batch(&y, &c, &LinRegHyper::default(), &FitOptions::default()).unwrap();
        assert_eq!(out.fitted.coefficients().0, &direct.state.mu_beta);

        let plan = vec![
            SummaryItem::coefficient("b1", 1, 2),
            SummaryItem::ErrorVariance {
                label: "s2".into(),
                factor: 1.0,
                log: false,
            },
            SummaryItem::Inclusion {
                label: "g".into(),
                index: 0,
            },
        ];
        let s = out.fitted.summarize_all(&spec, &plan);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].mean, direct.state.mu_beta[1]);
    }

    #[test]
    fn scaled_variance_moves_mean() {
        let (y, c) = data(50);
        let spec = ModelSpec::LinReg {
            p: 2,
            hyper: LinRegHyper::default(),
        };
        let f = spec.fit_batch(&y, &c, &FitOptions::default()).unwrap().fitted;
        let item = |factor| SummaryItem::ErrorVariance {
            label: "s".into(),
            factor,
            log: false,
        };
        let a = f.summarize(&spec, &item(1.0)).unwrap();
        let b = f.summarize(&spec, &item(4.0)).unwrap();
        assert!((b.mean - 4.0 * a.mean).abs() < 1e-12 * b.mean);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let (y, c) = data(10);
        let lin = ModelSpec::LinReg {
            p: 2,
            hyper: LinRegHyper::default(),
        };
        let mut f = lin.fit_batch(&y, &c, &FitOptions::default()).unwrap().fitted;
        let other = ModelSpec::Lmm(BlockSpec::new(2, vec![]).unwrap());
        assert!(f.step(&other, 1.0, &DVector::from_vec(vec![1.0, 0.5])).is_err());
        assert!(f.step(&lin, 1.0, &DVector::from_vec(vec![1.0, 0.5])).is_ok());
        assert_eq!(f.n(), 11);
    }
}
