//! Subcommand bodies. Every run ends by writing `manifest.json` into the
//! output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use newstrade::analytics::{
    median, t_test_one_sided, volatility, wilcoxon_one_sided, ComparisonRow, ComparisonTable, TestResult,
};
use newstrade::learning::{
    forest, forest_train, q_train, qlearn, Action, DisclosureEnv, ForestModel, LearnError, LearnedStrategy, QTable,
};
use newstrade::marketdata::{load_market, MarketData};
use newstrade::newsfeed::{
    first_per_day, load_news, quantile_thresholds, sector_filter, Lexicon, NewsFeed, ThresholdPair,
};
use newstrade::rng::derive_seed;
use newstrade::simulator::{
    run_backtest, BacktestResult, DecisionSource, IndexStrategy, MomentumStrategy, NewsStrategy, PortfolioStrategy,
};
use newstrade::synth::generate;

use crate::config::{Format, RunConfig};
use crate::{Invalid, Learner};

/// Fraction of the calendar used for training when no window is given.
const DEFAULT_TRAIN_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Kind {
    Index,
    Momentum,
    Portfolio,
    News,
    Sector(String),
    Combined,
    Forest,
    Qlearn,
}

impl Kind {
    fn parse(name: &str) -> Result<Self, Invalid> {
        Ok(match name {
            "index" => Kind::Index,
            "momentum" => Kind::Momentum,
            "portfolio" => Kind::Portfolio,
            "news" => Kind::News,
            "combined" => Kind::Combined,
            "forest" => Kind::Forest,
            "qlearn" => Kind::Qlearn,
            _ => match name.strip_prefix("sector:") {
                Some(s) if !s.is_empty() => Kind::Sector(s.to_string()),
                _ => return Err(Invalid(format!("unknown strategy '{name}'"))),
            },
        })
    }

    fn needs_news(&self) -> bool {
        !matches!(self, Kind::Index | Kind::Momentum | Kind::Portfolio)
    }

    fn is_learner(&self) -> bool {
        matches!(self, Kind::Forest | Kind::Qlearn)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Windows {
    train: (usize, usize),
    test: (usize, usize),
}

/// Resolves the train and test windows against a calendar of `len` days.
/// Without explicit windows the first 40 % of days train and the rest test.
fn windows(cfg: &RunConfig, len: usize, learners: bool) -> Result<Windows, Invalid> {
    if len < 2 {
        return Err(Invalid(format!("calendar of {len} days is too short")));
    }
    let split = ((len as f64 * DEFAULT_TRAIN_FRACTION) as usize).clamp(1, len - 1);
    let train = cfg.train_window.unwrap_or((0, split - 1));
    let test = cfg.test_window.unwrap_or((train.1 + 1, len - 1));
    for (name, (a, b)) in [("train", train), ("test", test)] {
        if a > b || b >= len {
            return Err(Invalid(format!("{name} window {a}:{b} outside calendar of {len} days")));
        }
    }
    if learners && train.1 >= test.0 {
        return Err(Invalid(format!(
            "train window {}:{} must end before test window {}:{} starts",
            train.0, train.1, test.0, test.1
        )));
    }
    Ok(Windows { train, test })
}

struct Data {
    market: MarketData,
    feed: Option<NewsFeed>,
    inputs: BTreeMap<String, String>,
}

fn load_data(cfg: &RunConfig, need_news: bool) -> anyhow::Result<Data> {
    let mut inputs = BTreeMap::new();
    let path = cfg
        .market
        .as_ref()
        .ok_or_else(|| Invalid("a market file is required (--market)".into()))?;
    let market = load_market(path).with_context(|| format!("loading {}", path.display()))?;
    inputs.insert(path.display().to_string(), file_digest(path)?);
    let feed = if need_news {
        let path = cfg
            .news
            .as_ref()
            .ok_or_else(|| Invalid("the selected strategies need a news file (--news)".into()))?;
        let lexicon = match &cfg.lexicon {
            Some(p) => {
                inputs.insert(p.display().to_string(), file_digest(p)?);
                Some(Lexicon::load(p).with_context(|| format!("loading {}", p.display()))?)
            }
            None => None,
        };
        let scorer = lexicon.as_ref().map(|l| l as &dyn newstrade::newsfeed::SentimentScorer);
        let feed = load_news(path, scorer, Some(&market)).with_context(|| format!("loading {}", path.display()))?;
        inputs.insert(path.display().to_string(), file_digest(path)?);
        Some(feed)
    } else {
        None
    };
    Ok(Data { market, feed, inputs })
}

/// News thresholds from first-of-day sentiments inside the training window.
fn thresholds(cfg: &RunConfig, feed: &NewsFeed, train: (usize, usize)) -> anyhow::Result<ThresholdPair> {
    match cfg.news_quantile {
        Some(q) => {
            let sample = first_per_day(feed).in_window(train.0, train.1).sentiments();
            Ok(quantile_thresholds(&sample, q).context("news thresholds over the training window")?)
        }
        None => Ok(cfg.strategy.thresholds),
    }
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: &'a [String],
    cli_version: &'static str,
    engine_version: &'static str,
    model_versions: BTreeMap<&'static str, u32>,
    seeds: BTreeMap<&'static str, u64>,
    config: &'a RunConfig,
    windows: Option<Windows>,
    inputs: &'a BTreeMap<String, String>,
    /// SHA-256 of every file written by the run.
    outputs: BTreeMap<String, String>,
}

struct Outputs {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.insert(name.to_string(), hex(&Sha256::digest(bytes)));
        Ok(path)
    }

    fn finish(
        mut self,
        command: &str,
        argv: &[String],
        cfg: &RunConfig,
        windows: Option<Windows>,
        inputs: &BTreeMap<String, String>,
    ) -> anyhow::Result<()> {
        let manifest = Manifest {
            command,
            argv,
            cli_version: env!("CARGO_PKG_VERSION"),
            engine_version: newstrade::VERSION,
            model_versions: BTreeMap::from([("forest", forest::MODEL_VERSION), ("qlearn", qlearn::MODEL_VERSION)]),
            seeds: BTreeMap::from([
                ("master", cfg.seed),
                ("synth", derive_seed(cfg.seed, "synth")),
                ("forest", derive_seed(cfg.seed, "forest")),
                ("qlearn", derive_seed(cfg.seed, "qlearn")),
            ]),
            config: cfg,
            windows,
            inputs,
            outputs: std::mem::take(&mut self.written),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

pub fn synth(cfg: &RunConfig, argv: &[String]) -> anyhow::Result<()> {
    let (market, feed) = generate(&cfg.synth)?;
    let mut out = Outputs::new(&cfg.out)?;
    let mut buf = Vec::new();
    market.write_csv(&mut buf)?;
    let m = out.write("market.csv", &buf)?;
    buf.clear();
    feed.write_csv(&mut buf)?;
    let n = out.write("news.csv", &buf)?;
    println!(
        "wrote {} ({} stocks, {} days) and {} ({} announcements)",
        m.display(),
        market.stocks.len(),
        market.len(),
        n.display(),
        feed.len()
    );
    out.finish("synth", argv, cfg, None, &BTreeMap::new())
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn model_path(cfg: &RunConfig, learner: Learner) -> Option<PathBuf> {
    let file = match learner {
        Learner::Forest => "forest.json",
        Learner::Qlearn => "qlearn.json",
    };
    cfg.models.as_ref().map(|d| d.join(file))
}

/// A saved model when one exists in the models directory, else a fresh fit
/// on the training window.
fn load_or_train_forest(
    cfg: &RunConfig,
    feed: &NewsFeed,
    market: &MarketData,
    train: (usize, usize),
) -> anyhow::Result<(ForestModel, Option<PathBuf>)> {
    if let Some(p) = model_path(cfg, Learner::Forest).filter(|p| p.exists()) {
        let model = ForestModel::from_json(&fs::read_to_string(&p)?)?;
        return Ok((model, Some(p)));
    }
    let mut env = DisclosureEnv::new(feed, market, &cfg.strategy, cfg.fees.rate(), train);
    Ok((forest_train(&env.labelled_samples(), &cfg.forest)?, None))
}

fn load_or_train_q(
    cfg: &RunConfig,
    feed: &NewsFeed,
    market: &MarketData,
    train: (usize, usize),
) -> anyhow::Result<(QTable, Option<PathBuf>)> {
    if let Some(p) = model_path(cfg, Learner::Qlearn).filter(|p| p.exists()) {
        let q = QTable::from_json(&fs::read_to_string(&p)?)?;
        return Ok((q, Some(p)));
    }
    let mut env = DisclosureEnv::new(feed, market, &cfg.strategy, cfg.fees.rate(), train);
    Ok((q_train(&mut env, &cfg.qlearn)?.0, None))
}

struct Run {
    result: BacktestResult,
    params: String,
    model: Option<PathBuf>,
}

fn run_one(
    kind: &Kind,
    name: &str,
    cfg: &RunConfig,
    data: &Data,
    th: Option<ThresholdPair>,
    w: Windows,
) -> anyhow::Result<Run> {
    let m = &data.market;
    let s = &cfg.strategy;
    let feed = || data.feed.as_ref().expect("news loaded for news strategies");
    let th = || th.expect("thresholds computed for news strategies");
    let th_echo = |t: ThresholdPair| format!("theta- = {}; theta+ = {}", t.theta_minus, t.theta_plus);
    let mut model = None;
    let (mut source, params): (Box<dyn DecisionSource>, String) = match kind {
        Kind::Index => (Box::new(IndexStrategy), String::new()),
        Kind::Momentum => (
            Box::new(MomentumStrategy { cfg: s.clone() }),
            format!("delta = {}; theta_roc quantile = {}", s.delta, s.theta_roc_quantile),
        ),
        Kind::Portfolio => (
            Box::new(PortfolioStrategy { cfg: s.clone() }),
            format!("delta = {}; size = {}", s.delta, s.portfolio_size),
        ),
        Kind::News => (
            Box::new(NewsStrategy::simple(feed(), th()).with_name(name)),
            th_echo(th()),
        ),
        Kind::Sector(sector) => {
            if !m
                .stocks
                .values()
                .any(|st| st.sector.as_deref() == Some(sector.as_str()))
            {
                return Err(Invalid(format!("no stock belongs to sector '{sector}'")).into());
            }
            let f = sector_filter(feed(), m, sector);
            (Box::new(NewsStrategy::simple(&f, th()).with_name(name)), th_echo(th()))
        }
        Kind::Combined => (
            Box::new(NewsStrategy::combined(feed(), th(), s.clone()).with_name(name)),
            format!(
                "{}; delta = {}; theta_roc quantile = {}",
                th_echo(th()),
                s.delta,
                s.theta_roc_quantile
            ),
        ),
        Kind::Forest => {
            let (f, p) = load_or_train_forest(cfg, feed(), m, w.train)?;
            let params = format!("trees = {}; seed = {}", f.trees.len(), f.params.seed);
            model = p;
            (Box::new(LearnedStrategy::new(name, f, feed(), m, s, w.test)), params)
        }
        Kind::Qlearn => {
            let (q, p) = load_or_train_q(cfg, feed(), m, w.train)?;
            let qp = q.params;
            let params = format!(
                "alpha = {}; gamma = {}; epsilon = {}; seed = {}",
                qp.alpha, qp.gamma, qp.epsilon, qp.seed
            );
            model = p;
            (Box::new(LearnedStrategy::new(name, q, feed(), m, s, w.test)), params)
        }
    };
    let result = run_backtest(m, source.as_mut(), &cfg.fees, w.test)?;
    Ok(Run { result, params, model })
}

fn comparison_row(name: &str, r: &BacktestResult, params: String) -> anyhow::Result<ComparisonRow> {
    Ok(ComparisonRow {
        strategy: name.to_string(),
        metrics: r.metrics()?,
        wilcoxon: wilcoxon_one_sided(r.window_gross()).ok(),
        t_test: t_test_one_sided(r.window_gross()).ok(),
        wilcoxon_abnormal: wilcoxon_one_sided(r.window_abnormal()).ok(),
        t_test_abnormal: t_test_one_sided(r.window_abnormal()).ok(),
        params,
    })
}

fn render(table: &ComparisonTable, format: Format) -> String {
    match format {
        Format::Text => table.to_text(),
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json() + "\n",
    }
}

/// Runs every configured strategy over the test window. `backtest` is the
/// single-strategy case of the same path.
pub fn compare(cfg: &RunConfig, command: &str, argv: &[String]) -> anyhow::Result<()> {
    if cfg.strategies.is_empty() {
        bail!(Invalid("no strategies selected".into()));
    }
    let kinds: Vec<Kind> = cfg
        .strategies
        .iter()
        .map(|n| Kind::parse(n))
        .collect::<Result<_, _>>()?;
    let need_news = kinds.iter().any(Kind::needs_news);
    let learners = kinds.iter().any(Kind::is_learner);
    cfg.fees.validate()?;
    let data = load_data(cfg, need_news)?;
    let w = windows(cfg, data.market.len(), learners)?;
    let th = match &data.feed {
        Some(f) => Some(thresholds(cfg, f, w.train)?),
        None => None,
    };
    info!(
        "running {} strategies over days {}..={}",
        kinds.len(),
        w.test.0,
        w.test.1
    );

    let runs: Vec<anyhow::Result<Run>> = kinds
        .par_iter()
        .zip(&cfg.strategies)
        .map(|(k, name)| run_one(k, name, cfg, &data, th, w).with_context(|| format!("strategy {name}")))
        .collect();

    let mut out = Outputs::new(&cfg.out)?;
    let mut inputs = data.inputs.clone();
    let mut rows = Vec::with_capacity(runs.len());
    for (name, run) in cfg.strategies.iter().zip(runs) {
        let run = run?;
        let mut csv = Vec::new();
        run.result.write_csv(&mut csv)?;
        out.write(&format!("{}.returns.csv", slug(name)), &csv)?;
        out.write(&format!("{}.result.json", slug(name)), run.result.to_json().as_bytes())?;
        if let Some(p) = &run.model {
            inputs.insert(p.display().to_string(), file_digest(p)?);
        }
        rows.push(comparison_row(name, &run.result, run.params)?);
    }
    let table = ComparisonTable { rows };
    let report = render(&table, cfg.format);
    out.write(&format!("report.{}", cfg.format.extension()), report.as_bytes())?;
    print!("{report}");
    out.finish(command, argv, cfg, Some(w), &inputs)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    learner: &'static str,
    train_window: (usize, usize),
    samples: usize,
    labels: BTreeMap<&'static str, usize>,
    model: String,
    trees: Option<usize>,
    training_accuracy: Option<f64>,
    epochs: Option<usize>,
    converged: Option<bool>,
}

fn label_name(a: Action) -> &'static str {
    match a {
        Action::HoldExisting => "hold_existing",
        Action::BuyDisclosedStock => "buy_disclosed_stock",
        Action::BuyIndex => "buy_index",
    }
}

pub fn train(cfg: &RunConfig, learner: Learner, argv: &[String]) -> anyhow::Result<()> {
    let data = load_data(cfg, true)?;
    let feed = data.feed.as_ref().expect("news loaded");
    let w = windows(cfg, data.market.len(), false)?;
    let env = || DisclosureEnv::new(feed, &data.market, &cfg.strategy, cfg.fees.rate(), w.train);
    let n = env().steps().len();
    if n < 2 {
        return Err(LearnError::TooFewDisclosures(n).into());
    }
    let samples = env().labelled_samples();
    let mut labels: BTreeMap<&'static str, usize> = Action::ALL.iter().map(|a| (label_name(*a), 0)).collect();
    for (_, a) in &samples {
        *labels.get_mut(label_name(*a)).expect("all actions counted") += 1;
    }

    let models_dir = cfg.models.clone().unwrap_or_else(|| cfg.out.clone());
    fs::create_dir_all(&models_dir).with_context(|| format!("creating {}", models_dir.display()))?;
    let model_file = model_path(
        &RunConfig {
            models: Some(models_dir),
            ..cfg.clone()
        },
        learner,
    )
    .expect("models dir set");
    let mut summary = TrainSummary {
        learner: "",
        train_window: w.train,
        samples: samples.len(),
        labels,
        model: model_file.display().to_string(),
        trees: None,
        training_accuracy: None,
        epochs: None,
        converged: None,
    };
    let json = match learner {
        Learner::Forest => {
            let model = forest_train(&samples, &cfg.forest)?;
            summary.learner = "forest";
            summary.trees = Some(model.trees.len());
            summary.training_accuracy = Some(forest::accuracy(&model, &samples));
            model.to_json()
        }
        Learner::Qlearn => {
            let (q, s) = q_train(&mut env(), &cfg.qlearn)?;
            summary.learner = "qlearn";
            summary.epochs = Some(s.epochs);
            summary.converged = Some(s.converged);
            q.to_json()
        }
    };
    let bytes = json.into_bytes();
    fs::write(&model_file, &bytes).with_context(|| format!("writing {}", model_file.display()))?;

    let mut out = Outputs::new(&cfg.out)?;
    let mut inputs = data.inputs.clone();
    inputs.insert(format!("model:{}", model_file.display()), hex(&Sha256::digest(&bytes)));
    let text = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&summary)? + "\n",
        Format::Csv => {
            let mut s = String::from("learner,samples,hold_existing,buy_disclosed_stock,buy_index,trees,training_accuracy,epochs,converged\n");
            let o = |x: Option<String>| x.unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                summary.learner,
                summary.samples,
                summary.labels["hold_existing"],
                summary.labels["buy_disclosed_stock"],
                summary.labels["buy_index"],
                o(summary.trees.map(|v| v.to_string())),
                o(summary.training_accuracy.map(|v| v.to_string())),
                o(summary.epochs.map(|v| v.to_string())),
                o(summary.converged.map(|v| v.to_string())),
            ));
            s
        }
        Format::Text => {
            let mut s = format!(
                "{} trained on days {}..={}: {} samples\nlabels: {}\n",
                summary.learner,
                w.train.0,
                w.train.1,
                summary.samples,
                summary
                    .labels
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            if let (Some(t), Some(a)) = (summary.trees, summary.training_accuracy) {
                s.push_str(&format!("trees: {t}, training accuracy: {:.4}\n", a));
            }
            if let (Some(e), Some(c)) = (summary.epochs, summary.converged) {
                s.push_str(&format!("epochs: {e}, converged: {c}\n"));
            }
            s.push_str(&format!("model: {}\n", summary.model));
            s
        }
    };
    out.write(
        &format!("train-{}.{}", summary.learner, cfg.format.extension()),
        text.as_bytes(),
    )?;
    print!("{text}");
    out.finish("train", argv, cfg, Some(w), &inputs)
}

#[derive(Debug, Serialize)]
struct StatsReport {
    column: String,
    n: usize,
    mean: f64,
    median: f64,
    volatility: Option<f64>,
    t_test: Option<TestResult>,
    wilcoxon: Option<TestResult>,
}

pub fn stats(cfg: &RunConfig, input: &Path, column: &str, argv: &[String]) -> anyhow::Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Invalid(format!("{} has no column '{column}'", input.display())))?;
    let mut x = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(idx).unwrap_or("").trim();
        let v: f64 = cell
            .parse()
            .map_err(|_| Invalid(format!("row {}: '{cell}' is not a number", i + 2)))?;
        x.push(v);
    }
    if x.is_empty() {
        bail!(Invalid(format!("{} has no data rows", input.display())));
    }
    let report = StatsReport {
        column: column.to_string(),
        n: x.len(),
        mean: newstrade::analytics::mean(&x),
        median: median(&x),
        volatility: volatility(&x).ok(),
        t_test: t_test_one_sided(&x).ok(),
        wilcoxon: wilcoxon_one_sided(&x).ok(),
    };
    let p = |t: Option<TestResult>| t.map(|t| t.p_value);
    let text = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => {
            let o = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            format!(
                "column,n,mean,median,volatility,t_p,wilcoxon_p\n{},{},{},{},{},{},{}\n",
                report.column,
                report.n,
                report.mean,
                report.median,
                o(report.volatility),
                o(p(report.t_test)),
                o(p(report.wilcoxon)),
            )
        }
        Format::Text => format!(
            "column {}: n = {}, mean = {:.6}, median = {:.6}, volatility = {}\nt-test (mean > 0): p = {}\nwilcoxon (median > 0): p = {}\n",
            report.column,
            report.n,
            report.mean,
            report.median,
            report.volatility.map_or_else(|| "---".into(), |v| format!("{v:.6}")),
            newstrade::analytics::format_p_value(p(report.t_test)),
            newstrade::analytics::format_p_value(p(report.wilcoxon)),
        ),
    };
    let mut out = Outputs::new(&cfg.out)?;
    out.write(&format!("stats.{}", cfg.format.extension()), text.as_bytes())?;
    print!("{text}");
    let inputs = BTreeMap::from([(input.display().to_string(), file_digest(input)?)]);
    out.finish("stats", argv, cfg, None, &inputs)
}
