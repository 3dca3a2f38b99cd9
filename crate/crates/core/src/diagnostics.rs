//! Warm-up tuning and batch-versus-online convergence checks.
//!
//! The online solver is seeded with a batch fit of the first `n_warm`
//! observations and run to `n_warm + n_valid`. At 11 sample sizes (the
//! warm-up size plus 10 equally spaced points) its summaries are compared
//! with independent batch fits of the same prefixes. The largest gap,
//! measured in batch 95% half-widths, is the divergence score.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{Fitted, ModelSpec, SummaryItem};
use crate::summary::ParamSummary;
use crate::FitOptions;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
const GRID_STEPS: usize = 10;
const HALF_WIDTH_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticTrace {
    pub n_warm: usize,
    pub n_valid: usize,
    pub sample_sizes: Vec<usize>,
    pub labels: Vec<String>,
    /// `batch[g][j]`: batch summary of parameter `j` at grid point `g`.
    pub batch: Vec<Vec<ParamSummary>>,
    pub online: Vec<Vec<ParamSummary>>,
    /// False if any prefix batch fit stopped at `max_iter`.
    pub all_converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recommendation {
    Accept,
    IncreaseWarmup { suggested_n_warm: usize },
}

/// `n_warm + round(i·n_valid/10)` for `i = 0..=10`.
pub fn sample_size_grid(n_warm: usize, n_valid: usize) -> Vec<usize> {
    (0..=GRID_STEPS)
        .map(|i| n_warm + ((i * n_valid) as f64 / GRID_STEPS as f64).round() as usize)
        .collect()
}

/// Result of the protocol: the trace plus the online state at
/// `n_warm + n_valid`, ready to keep streaming.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub trace: DiagnosticTrace,
    pub online: Fitted,
}

/// Runs the warm-up protocol on a buffered prefix `(y, rows)`.
pub fn run_warmup_protocol(
    y: &[f64],
    rows: &DMatrix<f64>,
    n_warm: usize,
    n_valid: usize,
    spec: &ModelSpec,
    plan: &[SummaryItem],
    opts: &FitOptions,
) -> Result<ProtocolRun> {
    check_dim("protocol rows", y.len(), rows.nrows())?;
    if n_valid < GRID_STEPS {
        return Err(Error::InvalidSpec(format!(
            "validation period must contain at least {GRID_STEPS} observations, got {n_valid}"
        )));
    }
    if n_warm == 0 {
        return Err(Error::InvalidSpec("warm-up size must be positive".into()));
    }
    let total = n_warm + n_valid;
    if y.len() < total {
        return Err(Error::InsufficientData {
            needed: total,
            got: y.len(),
        });
    }
    let grid = sample_size_grid(n_warm, n_valid);

    let prefix_fit = |n: usize| spec.fit_batch(&y[..n], &rows.rows(0, n).into_owned(), opts);
    let warm = prefix_fit(n_warm)?;

    // Prefix fits at the remaining grid points are independent.
    let later = std::thread::scope(|scope| {
        let handles: Vec<_> = grid[1..].iter().map(|&n| scope.spawn(move || prefix_fit(n))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prefix fit thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut online = warm.fitted.clone();
    let mut online_summaries = vec![online.summarize_all(spec, plan)];
    let mut next = 1;
    for i in n_warm..total {
        online.step(spec, y[i], &rows.row(i).transpose())?;
        if next < grid.len() && i + 1 == grid[next] {
            online_summaries.push(online.summarize_all(spec, plan));
            next += 1;
        }
    }
    // Duplicate grid points (possible only for tiny n_valid rounding) reuse
    // the last summary.
    while online_summaries.len() < grid.len() {
        let last = online_summaries.last().cloned().unwrap_or_default();
        online_summaries.push(last);
    }

    let all_converged = warm.converged && later.iter().all(|o| o.converged);
    let mut batch_summaries = vec![warm.fitted.summarize_all(spec, plan)];
    batch_summaries.extend(later.iter().map(|o| o.fitted.summarize_all(spec, plan)));

    let labels = batch_summaries[0].iter().map(|s| s.label.clone()).collect();
    Ok(ProtocolRun {
        trace: DiagnosticTrace {
            n_warm,
            n_valid,
            sample_sizes: grid,
            labels,
            batch: batch_summaries,
            online: online_summaries,
            all_converged,
        },
        online,
    })
}

/// Largest `|online mean − batch mean|` over grid points and parameters, in
/// units of the batch 95% half-width.
pub fn divergence_score(trace: &DiagnosticTrace) -> f64 {
    trace
        .batch
        .iter()
        .zip(&trace.online)
        .flat_map(|(b, o)| b.iter().zip(o))
        .map(|(b, o)| (o.mean - b.mean).abs() / b.half_width().max(HALF_WIDTH_FLOOR))
        .fold(0.0, f64::max)
}

pub fn recommend(trace: &DiagnosticTrace, threshold: f64) -> Recommendation {
    if divergence_score(trace) < threshold {
        Recommendation::Accept
    } else {
        Recommendation::IncreaseWarmup {
            suggested_n_warm: 2 * trace.n_warm,
        }
    }
}

impl DiagnosticTrace {
    /// CSV with columns `n,parameter,series,mean,q025,q975`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,parameter,series,mean,q025,q975")?;
        for (g, &n) in self.sample_sizes.iter().enumerate() {
            for (series, rows) in [("batch", &self.batch[g]), ("online", &self.online[g])] {
                for s in rows {
                    writeln!(w, "{n},{},{series},{},{},{}", s.label, s.mean, s.q025, s.q975)?;
                }
            }
        }
        Ok(())
    }
}

/// Stacks design rows into a matrix.
pub fn stack_rows(rows: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}
