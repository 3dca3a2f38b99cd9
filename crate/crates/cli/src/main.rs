use std::fs;
use std::io::{self, Cursor, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streamvb::diagnostics::Recommendation;
use streamvb::simdata::{Scenario, SimConfig};
use streamvb_cli::config::{parse_config, RunConfig};
use streamvb_cli::ingest::{from_reader, open};
use streamvb_cli::output::{file_stem, render_curve, render_summary, write_atomic};
use streamvb_cli::run::{run, Mode};
use streamvb_cli::simulate::write_simulation;
use streamvb_cli::snapshot::Snapshot;
use streamvb_cli::CliError;

#[derive(Parser)]
#[command(name = "streamvb", version, about = "Streaming variational Bayes regression")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated data set as CSV.
    Simulate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the warm-up protocol, then stream the remaining records.
    Fit(RunArgs),
    /// Run the warm-up protocol only. Exits with status 3 when a longer
    /// warm-up is recommended.
    Diagnose(RunArgs),
    /// Print the summary stored in a snapshot.
    Summarize {
        /// A `state.bin` file.
        #[arg(long)]
        input: PathBuf,
        /// Also rewrite summary and curve files into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the configuration preset for a simulated scenario.
    Config {
        #[arg(long)]
        scenario: Scenario,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Model configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV input; `-` reads standard input.
    #[arg(long, default_value = "-")]
    input: PathBuf,
    /// Use the preset for this scenario when no config file is given.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Simulate this many records of `--scenario` instead of reading input.
    #[arg(long, requires = "scenario")]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    validate: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

fn run_cmd(args: RunArgs, mode: Mode) -> Result<ExitCode, CliError> {
    let (header, rdr) = match (args.scenario, args.n) {
        (Some(scenario), Some(n)) => {
            let mut buf = Vec::new();
            write_simulation(SimConfig { seed: args.seed, n, scenario }, &mut buf)?;
            from_reader(Box::new(Cursor::new(buf)))?
        }
        _ => open(&args.input)?,
    };
    let mut cfg = match (&args.config, args.scenario) {
        (Some(path), _) => parse_config(&fs::read_to_string(path)?)?,
        (None, Some(scenario)) => RunConfig::preset(scenario),
        (None, None) => RunConfig::infer(&header)?,
    };
    if let Some(v) = args.out {
        cfg.run.out = v;
    }
    if let Some(v) = args.warmup {
        cfg.run.n_warm = v;
    }
    if let Some(v) = args.validate {
        cfg.run.n_valid = v;
    }
    if let Some(v) = args.threshold {
        cfg.run.threshold = v;
    }
    let (outcome, report) = run(&cfg, &header, rdr, mode)?;
    println!("{report}");
    if mode == Mode::Fit {
        println!("absorbed {} records, skipped {}", outcome.absorbed, outcome.skipped);
    }
    let widen = matches!(outcome.recommendation, Recommendation::IncreaseWarmup { .. });
    Ok(if mode == Mode::Diagnose && widen {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn summarize(input: PathBuf, out: Option<PathBuf>) -> Result<ExitCode, CliError> {
    let snap = Snapshot::load(&input)?;
    let text = render_summary(&snap.design, &snap.fitted);
    io::stdout().write_all(text.as_bytes())?;
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("summary.csv"), text.as_bytes())?;
        for (s, sm) in snap.design.smooth.iter().enumerate() {
            let curve = render_curve(&snap.design, &snap.fitted, s);
            write_atomic(&dir.join(format!("curve_{}.csv", file_stem(&sm.name))), curve.as_bytes())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.cmd {
        Command::Simulate { scenario, n, seed, out } => {
            let cfg = SimConfig { seed, n, scenario };
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    write_simulation(cfg, &mut buf)?;
                    write_atomic(&path, &buf)?;
                }
                None => write_simulation(cfg, io::BufWriter::new(io::stdout().lock()))?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit(args) => run_cmd(args, Mode::Fit),
        Command::Diagnose(args) => run_cmd(args, Mode::Diagnose),
        Command::Summarize { input, out } => summarize(input, out),
        Command::Config { scenario } => {
            print!("{}", RunConfig::preset(scenario).emit());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
