//! `newstrade`: generate synthetic data, backtest and compare strategies,
//! train learners and run significance tests.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use newstrade::learning::LearnError;
use newstrade::marketdata::MarketError;
use newstrade::newsfeed::NewsError;
use newstrade::simulator::SimError;
use newstrade::synth::SynthError;

use config::{CommonFlags, DataFlags, RunConfig, SynthFlags};

/// Invalid user input: bad flags, config values or windows.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "newstrade", version, about = "News-driven trading backtester")]
struct Cli {
    #[command(flatten)]
    common: CommonFlags,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Learner {
    Forest,
    Qlearn,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic market.csv and news.csv.
    Synth {
        #[command(flatten)]
        synth: SynthFlags,
    },
    /// Run one strategy and report its metrics.
    Backtest {
        /// index, momentum, portfolio, news, sector:<name>, combined, forest or qlearn.
        #[arg(long)]
        strategy: Option<String>,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Train a learner on the training window and save the model.
    Train {
        #[arg(value_enum)]
        learner: Learner,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Run several strategies over the same window and tabulate them.
    Compare {
        /// Comma-separated strategy names, in report order.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Summary statistics and one-sided tests on a column of returns.
    Stats {
        /// CSV with a header row, such as a backtest returns file.
        input: PathBuf,
        #[arg(long, default_value = "gross")]
        column: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    cfg.apply_common(&cli.common);
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Synth { synth } => {
            cfg.apply_synth(&synth);
            cfg.derive_seeds();
            run::synth(&cfg, &argv)
        }
        Command::Backtest { strategy, data } => {
            cfg.apply_data(&data);
            cfg.derive_seeds();
            let name = strategy
                .or_else(|| cfg.strategies.first().cloned())
                .unwrap_or_else(|| "index".into());
            cfg.strategies = vec![name];
            cfg.validate()?;
            run::compare(&cfg, "backtest", &argv)
        }
        Command::Train { learner, data } => {
            cfg.apply_data(&data);
            cfg.derive_seeds();
            cfg.validate()?;
            run::train(&cfg, learner, &argv)
        }
        Command::Compare { strategies, data } => {
            cfg.apply_data(&data);
            cfg.derive_seeds();
            if let Some(s) = strategies {
                cfg.strategies = s;
            }
            cfg.validate()?;
            run::compare(&cfg, "compare", &argv)
        }
        Command::Stats { input, column } => run::stats(&cfg, &input, &column, &argv),
    }
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// 2 for invalid input anywhere in the error chain, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let invalid = err.chain().any(|e| {
        if e.is::<Invalid>() || e.is::<SynthError>() || e.is::<serde_json::Error>() {
            return true;
        }
        if let Some(m) = e.downcast_ref::<MarketError>() {
            return m.is_validation();
        }
        if let Some(n) = e.downcast_ref::<NewsError>() {
            return n.is_validation();
        }
        if let Some(l) = e.downcast_ref::<LearnError>() {
            return !matches!(l, LearnError::Io(_));
        }
        if let Some(s) = e.downcast_ref::<SimError>() {
            return matches!(s, SimError::BadWindow { .. } | SimError::BadFees(_));
        }
        false
    });
    if invalid {
        2
    } else {
        1
    }
}
