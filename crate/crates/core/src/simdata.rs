//! Seeded simulation scenarios.
//!
//! Record `i` of a stream is drawn from a ChaCha8 generator seeded with
//! `seed` and positioned on stream `i`, so any record can be regenerated
//! on its own and prefixes replay exactly. Quantities fixed for the life
//! of a stream (group effects, the sparse active set) come from a reserved
//! stream.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{logistic, normal_cdf};

const FIXED_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    GaussianAdditive,
    LogisticAdditive,
    Binary1d,
    RandomIntercept,
    SparseSignal,
    Linear,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::GaussianAdditive,
        Scenario::LogisticAdditive,
        Scenario::Binary1d,
        Scenario::RandomIntercept,
        Scenario::SparseSignal,
        Scenario::Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::GaussianAdditive => "gaussian_additive",
            Scenario::LogisticAdditive => "logistic_additive",
            Scenario::Binary1d => "binary_1d",
            Scenario::RandomIntercept => "random_intercept",
            Scenario::SparseSignal => "sparse_signal",
            Scenario::Linear => "linear",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n: usize,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomInterceptParams {
    pub m: usize,
    pub beta: (f64, f64),
    pub sig_u: f64,
    pub sig_eps: f64,
}

impl Default for RandomInterceptParams {
    fn default() -> Self {
        RandomInterceptParams {
            m: 10,
            beta: (0.3, 0.7),
            sig_u: 0.5,
            sig_eps: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseSignalParams {
    pub k: usize,
    pub active: usize,
    pub amplitude: f64,
}

impl Default for SparseSignalParams {
    fn default() -> Self {
        SparseSignalParams {
            k: 64,
            active: 6,
            amplitude: 4.0,
        }
    }
}

/// Coefficients of the 12-column linear scenario (intercept first).
pub const LINEAR_BETA: [f64; 12] = [1.0, 0.5, -0.3, 0.2, 0.0, 0.8, -0.6, 0.1, 0.4, -0.2, 0.3, 0.0];

pub const GAUSSIAN_ADDITIVE_BETA: [f64; 3] = [0.2, -0.3, 0.6];
pub const LOGISTIC_ADDITIVE_BETA1: f64 = 0.2;

pub fn f4(x: f64) -> f64 {
    2.0 * normal_cdf(6.0 * x - 3.0)
}

pub fn f5(x: f64) -> f64 {
    (3.0 * PI * x.powi(3)).sin()
}

pub fn f6(x: f64) -> f64 {
    (4.0 * PI * x).cos()
}

/// `cos(4πx) + 2x`.
pub fn logistic_f2(x: f64) -> f64 {
    (4.0 * PI * x).cos() + 2.0 * x
}

/// `sin(2πx²)`.
pub fn logistic_f3(x: f64) -> f64 {
    (2.0 * PI * x * x).sin()
}

/// Success probability of the one-predictor binary scenario.
pub fn binary_1d_prob(x: f64) -> f64 {
    logistic((4.0 * PI * x).cos() + 2.0 * x - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub y: f64,
    pub x: Vec<f64>,
    /// 1-based group label, for the random-intercept scenario.
    pub group: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    ri: RandomInterceptParams,
    sp: SparseSignalParams,
    group_effects: Vec<f64>,
    sparse_coefs: Vec<f64>,
}

fn bernoulli_half(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        0.0
    }
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        Self::with_params(cfg, RandomInterceptParams::default(), SparseSignalParams::default())
    }

    pub fn with_params(cfg: SimConfig, ri: RandomInterceptParams, sp: SparseSignalParams) -> Result<Self> {
        if cfg.n == 0 {
            return Err(Error::InvalidSpec("simulation size must be at least 1".into()));
        }
        if ri.m < 1 {
            return Err(Error::InvalidSpec("random-intercept scenario needs at least one group".into()));
        }
        if !(ri.sig_u >= 0.0 && ri.sig_eps >= 0.0) {
            return Err(Error::Domain("standard deviations must be non-negative".into()));
        }
        if sp.active > sp.k {
            return Err(Error::InvalidSpec(format!(
                "{} active coefficients requested but only {} columns",
                sp.active, sp.k
            )));
        }
        let mut fixed = ChaCha8Rng::seed_from_u64(cfg.seed);
        fixed.set_stream(FIXED_STREAM);
        let group_effects = (0..ri.m).map(|_| ri.sig_u * std_normal(&mut fixed)).collect();
        let mut sparse_coefs = vec![0.0; sp.k];
        for j in sample(&mut fixed, sp.k, sp.active).into_iter() {
            let sign = if fixed.random::<bool>() { 1.0 } else { -1.0 };
            sparse_coefs[j] = sign * sp.amplitude;
        }
        Ok(Simulator {
            cfg,
            ri,
            sp,
            group_effects,
            sparse_coefs,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn group_effects(&self) -> &[f64] {
        &self.group_effects
    }

    /// Planted coefficients of the sparse scenario.
    pub fn sparse_coefficients(&self) -> &[f64] {
        &self.sparse_coefs
    }

    /// Predictor column names, in record order.
    pub fn predictor_names(&self) -> Vec<String> {
        let names = |pre: &str, r: std::ops::RangeInclusive<usize>| r.map(|i| format!("{pre}{i}")).collect();
        match self.cfg.scenario {
            Scenario::GaussianAdditive => names("x", 1..=6),
            Scenario::LogisticAdditive => names("x", 1..=3),
            Scenario::Binary1d | Scenario::RandomIntercept => vec!["x".into()],
            Scenario::SparseSignal => names("z", 1..=self.sp.k),
            Scenario::Linear => names("x", 1..=LINEAR_BETA.len() - 1),
        }
    }

    pub fn record(&self, index: u64) -> SimRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        let rng = &mut rng;
        match self.cfg.scenario {
            Scenario::GaussianAdditive => {
                let mut x: Vec<f64> = (0..3).map(|_| bernoulli_half(rng)).collect();
                x.extend((0..3).map(|_| std_normal(rng)));
                let mean = GAUSSIAN_ADDITIVE_BETA.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>()
                    + f4(x[3])
                    + f5(x[4])
                    + f6(x[5]);
                SimRecord {
                    y: mean + std_normal(rng),
                    x,
                    group: None,
                }
            }
            Scenario::LogisticAdditive => {
                let x = vec![bernoulli_half(rng), std_normal(rng), std_normal(rng)];
                let eta = LOGISTIC_ADDITIVE_BETA1 * x[0] + logistic_f2(x[1]) + logistic_f3(x[2]);
                let y = if rng.random::<f64>() < logistic(eta) { 1.0 } else { 0.0 };
                SimRecord { y, x, group: None }
            }
            Scenario::Binary1d => {
                let x: f64 = rng.random();
                let y = if rng.random::<f64>() < binary_1d_prob(x) { 1.0 } else { 0.0 };
                SimRecord {
                    y,
                    x: vec![x],
                    group: None,
                }
            }
            Scenario::RandomIntercept => {
                let g = rng.random_range(0..self.ri.m);
                let x: f64 = rng.random();
                let (b0, b1) = self.ri.beta;
                let y = b0 + self.group_effects[g] + b1 * x + self.ri.sig_eps * std_normal(rng);
                SimRecord {
                    y,
                    x: vec![x],
                    group: Some(g + 1),
                }
            }
            Scenario::SparseSignal => {
                let z: Vec<f64> = (0..self.sp.k).map(|_| std_normal(rng)).collect();
                let signal: f64 = z.iter().zip(&self.sparse_coefs).map(|(a, b)| a * b).sum();
                SimRecord {
                    y: signal + std_normal(rng),
                    x: z,
                    group: None,
                }
            }
            Scenario::Linear => {
                let x: Vec<f64> = (1..LINEAR_BETA.len()).map(|_| std_normal(rng)).collect();
                let mean = LINEAR_BETA[0] + LINEAR_BETA[1..].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
                SimRecord {
                    y: mean + std_normal(rng),
                    x,
                    group: None,
                }
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = SimRecord> + '_ {
        (0..self.cfg.n as u64).map(move |i| self.record(i))
    }
}
