//! The `fit` and `diagnose` flows.
//!
//! The first `n_warm + n_valid` records are buffered so the warm-up
//! protocol can replay every prefix. `fit` then keeps streaming with one
//! online update per record, refreshing `summary.csv` and the snapshot
//! every `cadence` records.

use std::fs;

use streamvb::diagnostics::{divergence_score, recommend, run_warmup_protocol, stack_rows, ProtocolRun, Recommendation};
use streamvb::model::SummaryItem;
use streamvb::FitOptions;

use crate::config::RunConfig;
use crate::design::Design;
use crate::error::CliError;
use crate::ingest::{Binding, CsvSource, Record, RecordStream};
use crate::output::{density, file_stem, render_curve, render_density, render_summary, write_atomic};
use crate::snapshot::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Fit,
    Diagnose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub recommendation: Recommendation,
    pub score: f64,
    pub n_warm: usize,
    /// Records absorbed by the final state.
    pub absorbed: usize,
    pub skipped: usize,
}

/// Pulls records until `buffer` holds `target`; false if the stream ends
/// first.
fn fill(buffer: &mut Vec<Record>, stream: &mut RecordStream, target: usize) -> Result<bool, CliError> {
    while buffer.len() < target {
        match stream.next() {
            Some(rec) => buffer.push(rec?),
            None => return Ok(false),
        }
    }
    Ok(true)
}

struct Protocol {
    design: Design,
    run: ProtocolRun,
    score: f64,
    recommendation: Recommendation,
}

fn protocol(cfg: &RunConfig, binding: &Binding, buffer: &[Record], n_warm: usize) -> Result<Protocol, CliError> {
    let n_valid = cfg.run.n_valid;
    let total = n_warm + n_valid;
    let design = Design::build(cfg, &binding.basis_names, &buffer[..n_warm], &buffer[..total])?;
    let rows: Vec<_> = buffer[..total]
        .iter()
        .map(|r| design.row(r).expect("levels come from this prefix"))
        .collect();
    let c = stack_rows(&rows, design.spec.row_dim());
    let y: Vec<f64> = buffer[..total].iter().map(|r| design.y(r)).collect();
    let opts = FitOptions {
        tol: cfg.run.tol,
        max_iter: cfg.run.max_iter,
    };
    // Inclusion probabilities have no meaningful interval half-width.
    let plan: Vec<SummaryItem> = design
        .plan
        .iter()
        .filter(|item| !matches!(item, SummaryItem::Inclusion { .. }))
        .cloned()
        .collect();
    let run = run_warmup_protocol(&y, &c, n_warm, n_valid, &design.spec, &plan, &opts)?;
    if !run.trace.all_converged {
        eprintln!("warning: some warm-up batch fits stopped at max_iter = {}", cfg.run.max_iter);
    }
    let score = divergence_score(&run.trace);
    let recommendation = recommend(&run.trace, cfg.run.threshold);
    Ok(Protocol {
        design,
        run,
        score,
        recommendation,
    })
}

fn report(p: &Protocol, n_warm: usize) -> String {
    match p.recommendation {
        Recommendation::Accept => format!("recommendation: accept (n_warm = {n_warm}, divergence score = {:.6})", p.score),
        Recommendation::IncreaseWarmup { suggested_n_warm } => format!(
            "recommendation: increase warm-up to {suggested_n_warm} (n_warm = {n_warm}, divergence score = {:.6})",
            p.score
        ),
    }
}

fn write_final(cfg: &RunConfig, snap: &Snapshot) -> Result<(), CliError> {
    let out = &cfg.run.out;
    let (design, fitted) = (&snap.design, &snap.fitted);
    write_atomic(&out.join("summary.csv"), render_summary(design, fitted).as_bytes())?;
    snap.save(out)?;
    for (s, sm) in design.smooth.iter().enumerate() {
        let text = render_curve(design, fitted, s);
        if s == 0 {
            write_atomic(&out.join("curve.csv"), text.as_bytes())?;
        }
        write_atomic(&out.join(format!("curve_{}.csv", file_stem(&sm.name))), text.as_bytes())?;
    }
    let all = cfg.run.densities.iter().any(|d| d == "all");
    for item in &design.plan {
        if all || cfg.run.densities.iter().any(|d| d == item.label()) {
            if let Some(grid) = density(design, fitted, item) {
                let path = out.join(format!("density_{}.csv", file_stem(item.label())));
                write_atomic(&path, render_density(&grid).as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Runs the warm-up protocol and, for `fit`, the streaming phase.
/// Progress lines go to standard error; the recommendation line is
/// returned inside the outcome and printed by the caller.
pub fn run(cfg: &RunConfig, header: &[String], rdr: CsvSource, mode: Mode) -> Result<(Outcome, String), CliError> {
    cfg.validate()?;
    let binding = Binding::resolve(header, cfg)?;
    fs::create_dir_all(&cfg.run.out)?;
    let mut stream = RecordStream::spawn(rdr, binding.clone(), cfg.run.queue);
    let mut buffer = Vec::new();
    let mut n_warm = cfg.run.n_warm;
    let needed = n_warm + cfg.run.n_valid;
    if !fill(&mut buffer, &mut stream, needed)? {
        return Err(CliError::StreamTooShort {
            needed,
            got: buffer.len(),
        });
    }

    let mut p = protocol(cfg, &binding, &buffer, n_warm)?;
    let mut lines = vec![report(&p, n_warm)];
    let mut retries = 0;
    while mode == Mode::Fit && retries < cfg.run.max_retries {
        let Recommendation::IncreaseWarmup { suggested_n_warm } = p.recommendation else {
            break;
        };
        if !fill(&mut buffer, &mut stream, suggested_n_warm + cfg.run.n_valid)? {
            eprintln!("warning: stream too short to retry with n_warm = {suggested_n_warm}; continuing");
            break;
        }
        n_warm = suggested_n_warm;
        p = protocol(cfg, &binding, &buffer, n_warm)?;
        lines.push(report(&p, n_warm));
        retries += 1;
    }
    let mut trace = Vec::new();
    p.run.trace.write_csv(&mut trace)?;
    write_atomic(&cfg.run.out.join("trace.csv"), &trace)?;

    let protocol_end = n_warm + cfg.run.n_valid;
    let mut snap = Snapshot {
        design: p.design,
        fitted: p.run.online,
        records_seen: protocol_end,
        skipped: 0,
    };
    let outcome = |snap: &Snapshot, skipped: usize| Outcome {
        recommendation: p.recommendation,
        score: p.score,
        n_warm,
        absorbed: snap.fitted.n(),
        skipped,
    };
    if mode == Mode::Diagnose {
        let skipped = stream.skipped();
        return Ok((outcome(&snap, skipped), lines.join("\n")));
    }
    if p.recommendation != Recommendation::Accept {
        eprintln!("warning: warm-up not validated; streaming anyway");
    }

    let summary_path = cfg.run.out.join("summary.csv");
    write_atomic(&summary_path, render_summary(&snap.design, &snap.fitted).as_bytes())?;
    let mut unseen = 0usize;
    let mut since_refresh = 0usize;
    let mut leftover = buffer.split_off(protocol_end).into_iter();
    drop(buffer);
    loop {
        let rec = match leftover.next() {
            Some(rec) => rec,
            None => match stream.next() {
                Some(rec) => rec?,
                None => break,
            },
        };
        snap.records_seen += 1;
        let Some(row) = snap.design.row(&rec) else {
            unseen += 1;
            if unseen <= 5 {
                eprintln!("warning: skipping record with a group label not seen during warm-up");
            }
            continue;
        };
        // On failure the last refreshed summary stays on disk.
        snap.fitted.step(&snap.design.spec, snap.design.y(&rec), &row)?;
        since_refresh += 1;
        if since_refresh == cfg.run.cadence {
            since_refresh = 0;
            snap.skipped = stream.skipped() + unseen;
            write_atomic(&summary_path, render_summary(&snap.design, &snap.fitted).as_bytes())?;
            snap.save(&cfg.run.out)?;
        }
    }
    snap.skipped = stream.skipped() + unseen;
    snap.records_seen += stream.skipped();
    write_final(cfg, &snap)?;
    if snap.skipped > 0 {
        eprintln!("skipped {} records", snap.skipped);
    }
    Ok((outcome(&snap, snap.skipped), lines.join("\n")))
}
