//! Run configuration: defaults, then an optional JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use newstrade::learning::{ForestParams, QParams};
use newstrade::newsfeed::ThresholdPair;
use newstrade::rng::derive_seed;
use newstrade::simulator::FeeSchedule;
use newstrade::strategies::StrategyConfig;
use newstrade::synth::SynthConfig;

use crate::Invalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub market: Option<PathBuf>,
    pub news: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: PathBuf,
    pub strategies: Vec<String>,
    pub strategy: StrategyConfig,
    /// Sentiment quantile for the news thresholds. `None` uses
    /// `strategy.thresholds` as given.
    pub news_quantile: Option<f64>,
    pub fees: FeeSchedule,
    pub forest: ForestParams,
    pub qlearn: QParams,
    pub train_window: Option<(usize, usize)>,
    pub test_window: Option<(usize, usize)>,
    pub seed: u64,
    pub format: Format,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            market: None,
            news: None,
            lexicon: None,
            models: None,
            out: PathBuf::from("newstrade-out"),
            strategies: DEFAULT_STRATEGIES.iter().map(|s| s.to_string()).collect(),
            strategy: StrategyConfig::default(),
            news_quantile: Some(0.1),
            fees: FeeSchedule::default(),
            forest: ForestParams::default(),
            qlearn: QParams::default(),
            train_window: None,
            test_window: None,
            seed: 0,
            format: Format::Text,
            synth: SynthConfig::default(),
        }
    }
}

pub const DEFAULT_STRATEGIES: [&str; 7] = ["index", "momentum", "portfolio", "news", "combined", "forest", "qlearn"];

/// Flags shared by every subcommand. Each one, when given, overrides the
/// config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonFlags {
    /// JSON run configuration; flags take precedence over its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for reports, result files and the manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; component seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Flags describing data, strategies and their parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct DataFlags {
    /// Market CSV (`day,ticker,close[,sector]`).
    #[arg(long)]
    pub market: Option<PathBuf>,
    /// Announcement CSV (`day,ticker,sentiment[,text]`).
    #[arg(long)]
    pub news: Option<PathBuf>,
    /// Lexicon used to score announcements without a sentiment value.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Directory holding trained models (`forest.json`, `qlearn.json`).
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Training window as `START:END` day indices (inclusive).
    #[arg(long, value_parser = parse_window)]
    pub train_window: Option<(usize, usize)>,
    /// Evaluation window as `START:END` day indices (inclusive).
    #[arg(long, value_parser = parse_window)]
    pub test_window: Option<(usize, usize)>,
    /// Proportional fee per operation.
    #[arg(long)]
    pub fee: Option<f64>,
    /// RoC lookback in days.
    #[arg(long)]
    pub delta: Option<usize>,
    /// Index lookback of the learning features.
    #[arg(long)]
    pub delta_index: Option<usize>,
    /// Quantile of the daily |RoC| cross-section used as momentum gate.
    #[arg(long)]
    pub theta_roc: Option<f64>,
    #[arg(long)]
    pub portfolio_size: Option<usize>,
    /// Sentiment quantile for the news thresholds.
    #[arg(long, conflicts_with = "thresholds")]
    pub news_quantile: Option<f64>,
    /// Fixed news thresholds as `MINUS,PLUS`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub thresholds: Option<(f64, f64)>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthFlags {
    #[arg(long)]
    pub n_stocks: Option<usize>,
    #[arg(long)]
    pub n_days: Option<usize>,
    /// Size of the planted announcement effect.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Noise added to the announcement sentiment.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub ann_prob: Option<f64>,
    #[arg(long)]
    pub penny_fraction: Option<f64>,
    /// Remove all background drift and volatility.
    #[arg(long)]
    pub deterministic: bool,
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected MINUS,PLUS")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
    }

    pub fn apply_common(&mut self, f: &CommonFlags) {
        if let Some(v) = &f.out {
            self.out = v.clone();
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = f.format {
            self.format = v;
        }
    }

    pub fn apply_data(&mut self, f: &DataFlags) {
        let set_path = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set_path(&mut self.market, &f.market);
        set_path(&mut self.news, &f.news);
        set_path(&mut self.lexicon, &f.lexicon);
        set_path(&mut self.models, &f.models);
        if f.train_window.is_some() {
            self.train_window = f.train_window;
        }
        if f.test_window.is_some() {
            self.test_window = f.test_window;
        }
        if let Some(v) = f.fee {
            self.fees = FeeSchedule::proportional(v);
        }
        let s = &mut self.strategy;
        s.delta = f.delta.unwrap_or(s.delta);
        s.delta_index = f.delta_index.unwrap_or(s.delta_index);
        s.theta_roc_quantile = f.theta_roc.unwrap_or(s.theta_roc_quantile);
        s.portfolio_size = f.portfolio_size.unwrap_or(s.portfolio_size);
        if let Some(q) = f.news_quantile {
            self.news_quantile = Some(q);
        }
        if let Some((lo, hi)) = f.thresholds {
            self.news_quantile = None;
            self.strategy.thresholds = ThresholdPair {
                theta_minus: lo,
                theta_plus: hi,
            };
        }
        self.forest.n_trees = f.n_trees.unwrap_or(self.forest.n_trees);
        if f.max_features.is_some() {
            self.forest.max_features = f.max_features;
        }
        let q = &mut self.qlearn;
        q.alpha = f.alpha.unwrap_or(q.alpha);
        q.gamma = f.gamma.unwrap_or(q.gamma);
        q.epsilon = f.epsilon.unwrap_or(q.epsilon);
        q.max_epochs = f.epochs.unwrap_or(q.max_epochs);
        q.patience = f.patience.unwrap_or(q.patience);
    }

    pub fn apply_synth(&mut self, f: &SynthFlags) {
        if f.deterministic {
            let base = SynthConfig::deterministic(self.synth.effect_kappa);
            self.synth = SynthConfig {
                n_stocks: self.synth.n_stocks,
                n_days: self.synth.n_days,
                ..base
            };
        }
        let s = &mut self.synth;
        s.n_stocks = f.n_stocks.unwrap_or(s.n_stocks);
        s.n_days = f.n_days.unwrap_or(s.n_days);
        s.effect_kappa = f.kappa.unwrap_or(s.effect_kappa);
        s.sentiment_noise = f.noise.unwrap_or(s.sentiment_noise);
        s.ann_prob = f.ann_prob.unwrap_or(s.ann_prob);
        s.penny_fraction = f.penny_fraction.unwrap_or(s.penny_fraction);
    }

    /// Replaces every component seed by the one derived from the master seed.
    pub fn derive_seeds(&mut self) {
        self.synth.seed = derive_seed(self.seed, "synth");
        self.forest.seed = derive_seed(self.seed, "forest");
        self.qlearn.seed = derive_seed(self.seed, "qlearn");
    }

    pub fn validate(&self) -> Result<(), Invalid> {
        self.strategy.validate().map_err(Invalid)?;
        if let Some(q) = self.news_quantile {
            if !(q > 0.0 && q <= 0.5) {
                return Err(Invalid(format!("news_quantile {q} outside (0, 0.5]")));
            }
        }
        if self.forest.n_trees == 0 {
            return Err(Invalid("n_trees must be at least 1".into()));
        }
        if self.forest.max_features == Some(0) {
            return Err(Invalid("max_features must be at least 1".into()));
        }
        for (name, w) in [("train", self.train_window), ("test", self.test_window)] {
            if let Some((a, b)) = w {
                if a > b {
                    return Err(Invalid(format!("{name} window {a}:{b} is reversed")));
                }
            }
        }
        Ok(())
    }
}
