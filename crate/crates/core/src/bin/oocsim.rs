use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use oocsim::metrics::write_metrics_csv;
use oocsim::reproduce::{compare_schemes, write_comparison_csv, Reproduction};
use oocsim::{run_scenario, ScenarioConfig, Scheme};

#[derive(Parser)]
#[command(
    name = "oocsim",
    version,
    about = "Window flow-control simulator with out-of-order caching schemes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// ooc1..ooc4; overrides the config file.
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics CSV path. Printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run one scenario under all four schemes.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a canned reproduction and check its claims.
    Paper {
        #[arg(value_enum)]
        which: Which,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Figure1,
    ForcedTimeouts,
    Congestion,
    LightLoad,
}

fn load(config: &Path, seed: Option<u64>) -> oocsim::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.cmd {
        Cmd::Run {
            config,
            scheme,
            seed,
            out,
            trace,
        } => {
            let mut cfg = load(&config, seed)?;
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if out.is_some() {
                cfg.metrics_out = out;
            }
            if trace.is_some() {
                cfg.trace_out = trace;
                cfg.trace = true;
            }
            let res = run_scenario(&cfg)?;
            if cfg.metrics_out.is_none() {
                write_metrics_csv(io::stdout().lock(), [&res.metrics])?;
            }
        }
        Cmd::Compare { config, seed, out } => {
            let rows = compare_schemes(&load(&config, seed)?)?;
            match out {
                Some(p) => write_comparison_csv(BufWriter::new(File::create(p)?), &rows)?,
                None => write_comparison_csv(io::stdout().lock(), &rows)?,
            }
        }
        Cmd::Paper { which } => {
            let repro = match which {
                Which::Figure1 => Reproduction::Figure1,
                Which::ForcedTimeouts => Reproduction::ForcedTimeouts,
                Which::Congestion => Reproduction::Congestion,
                Which::LightLoad => Reproduction::LightLoad,
            };
            let claims = repro.claims()?;
            let mut stdout = io::stdout().lock();
            for c in &claims {
                writeln!(stdout, "{c}")?;
            }
            return Ok(claims.iter().all(|c| c.pass));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("oocsim: {e}");
            ExitCode::from(2)
        }
    }
}
