//! Event-driven daily portfolio simulation.
//!
//! Timing: a decision taken for day `t` opens its positions at the close of
//! day `t - 1`, so the new book earns day `t`'s close-to-close return. This
//! is the optimistic "trade just before the price reaction" contract; the
//! reported numbers are an upper bound on what live execution would see.
//!
//! Positions persist until the next decision that changes them. Each close or
//! open of a non-cash position is one operation and costs the proportional
//! fee on that position's weight, charged on the day it happens.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, MetricsReport};
use crate::marketdata::{series_returns, MarketData};
use crate::newsfeed::{first_per_day, NewsFeed, ThresholdPair};
use crate::strategies::{
    combined_decide, index_decide, momentum_decide, news_decide, portfolio_decide, Action, Decision, StrategyConfig,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("window [{start}, {end}] outside calendar of {len} days")]
    BadWindow { start: usize, end: usize, len: usize },
    #[error("invalid fee schedule: {0}")]
    BadFees(String),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Asset {
    Stock(String),
    Index,
    Cash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Long,
    Short,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub asset: Asset,
    pub direction: Direction,
    pub weight: f64,
}

impl Position {
    pub fn cash(weight: f64) -> Self {
        Self {
            asset: Asset::Cash,
            direction: Direction::Long,
            weight,
        }
    }

    fn is_cash(&self) -> bool {
        self.asset == Asset::Cash
    }

    fn label(&self) -> String {
        match (&self.asset, self.direction) {
            (Asset::Stock(t), Direction::Long) => format!("LONG:{t}"),
            (Asset::Stock(t), Direction::Short) => format!("SHORT:{t}"),
            (Asset::Index, _) => "INDEX".into(),
            (Asset::Cash, _) => "CASH".into(),
        }
    }

    fn from_decision(d: &Decision, market: &MarketData) -> Option<Self> {
        let stock = |dir| {
            let ticker = d.ticker.as_ref()?;
            if market.stock(ticker).is_none() {
                log::warn!("decision references unknown ticker {ticker}; holding");
                return None;
            }
            Some(Self {
                asset: Asset::Stock(ticker.clone()),
                direction: dir,
                weight: d.weight,
            })
        };
        match d.action {
            Action::LongStock => stock(Direction::Long),
            Action::ShortStock => stock(Direction::Short),
            Action::LongIndex => Some(Self {
                asset: Asset::Index,
                direction: Direction::Long,
                weight: d.weight,
            }),
            Action::Hold => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeeSchedule {
    /// Fraction of the traded weight charged per operation.
    pub proportional: f64,
    /// Optional flat charge per operation, expressed against `notional`.
    #[serde(default)]
    pub fixed: Option<FixedFee>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedFee {
    pub amount: f64,
    pub notional: f64,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self {
            proportional: 0.001,
            fixed: None,
        }
    }
}

impl FeeSchedule {
    pub fn zero() -> Self {
        Self {
            proportional: 0.0,
            fixed: None,
        }
    }

    pub fn proportional(rate: f64) -> Self {
        Self {
            proportional: rate,
            fixed: None,
        }
    }

    /// Fraction of traded weight lost per operation.
    pub fn rate(&self) -> f64 {
        self.proportional + self.fixed.map_or(0.0, |f| f.amount / f.notional)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.proportional >= 0.0 && self.proportional < 1.0) {
            return Err(SimError::BadFees(format!(
                "proportional fee {} outside [0, 1)",
                self.proportional
            )));
        }
        if let Some(f) = self.fixed {
            if !(f.amount >= 0.0 && f.notional > 0.0) {
                return Err(SimError::BadFees("fixed fee needs amount >= 0 and notional > 0".into()));
            }
        }
        if self.rate() >= 1.0 {
            return Err(SimError::BadFees("combined fee rate must stay below 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeLogEntry {
    pub day: usize,
    pub closed: Position,
    pub opened: Position,
    pub operations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub strategy: String,
    pub window: (usize, usize),
    /// Calendar-aligned; zero outside the window.
    pub gross_returns: Vec<f64>,
    pub net_returns: Vec<f64>,
    pub abnormal_returns: Vec<f64>,
    pub index_returns: Vec<f64>,
    /// Book held during each day, e.g. `LONG:ABC` or `CASH`.
    pub positions: Vec<String>,
    pub trades: Vec<TradeLogEntry>,
    pub final_value: f64,
}

impl BacktestResult {
    fn slice<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.window.0..=self.window.1]
    }

    pub fn window_gross(&self) -> &[f64] {
        self.slice(&self.gross_returns)
    }

    pub fn window_net(&self) -> &[f64] {
        self.slice(&self.net_returns)
    }

    pub fn window_abnormal(&self) -> &[f64] {
        self.slice(&self.abnormal_returns)
    }

    pub fn window_index(&self) -> &[f64] {
        self.slice(&self.index_returns)
    }

    pub fn window_len(&self) -> usize {
        self.window.1 + 1 - self.window.0
    }

    /// Days on which at least one operation happened.
    pub fn n_trades(&self) -> usize {
        let mut days: Vec<usize> = self.trades.iter().map(|t| t.day).collect();
        days.dedup();
        days.len()
    }

    pub fn total_operations(&self) -> usize {
        self.trades.iter().map(|t| t.operations).sum()
    }

    pub fn gross_final_value(&self) -> f64 {
        self.window_gross().iter().map(|r| 1.0 + r).product()
    }

    pub fn metrics(&self) -> Result<MetricsReport, AnalyticsError> {
        MetricsReport::compute(
            self.window_gross(),
            self.window_net(),
            self.window_index(),
            self.n_trades(),
        )
    }

    /// `day,gross,net,abnormal,position` for every window day.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "day,gross,net,abnormal,position")?;
        for t in self.window.0..=self.window.1 {
            writeln!(
                w,
                "{t},{},{},{},{}",
                self.gross_returns[t], self.net_returns[t], self.abnormal_returns[t], self.positions[t]
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

/// Anything that tells the simulator what to hold.
pub trait DecisionSource {
    fn name(&self) -> String;

    /// Book to hold during day `t` (entered at the close of `t - 1`), or
    /// `None` to keep the current one. Hold decisions are ignored; a book
    /// with no tradeable entries also keeps the current positions.
    fn decide(&mut self, market: &MarketData, t: usize) -> Option<Vec<Decision>>;
}

impl<S: DecisionSource + ?Sized> DecisionSource for Box<S> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn decide(&mut self, market: &MarketData, t: usize) -> Option<Vec<Decision>> {
        (**self).decide(market, t)
    }
}

/// Runs `strategy` over `window = (start, end)` (inclusive).
pub fn run_backtest(
    market: &MarketData,
    strategy: &mut dyn DecisionSource,
    fees: &FeeSchedule,
    window: (usize, usize),
) -> Result<BacktestResult, SimError> {
    let len = market.len();
    let (start, end) = window;
    if start > end || end >= len {
        return Err(SimError::BadWindow { start, end, len });
    }
    fees.validate()?;
    let rate = fees.rate();

    let index_returns = market.index_returns();
    let stock_returns: HashMap<&str, Vec<f64>> = market
        .stocks
        .iter()
        .map(|(k, s)| (k.as_str(), series_returns(s)))
        .collect();

    let mut gross = vec![0.0; len];
    let mut net = vec![0.0; len];
    let mut labels = vec![String::from("CASH"); len];
    let mut trades = Vec::new();
    let mut book: Vec<Position> = Vec::new();
    let mut final_value = 1.0;

    for t in start..=end {
        let mut fee_mult = 1.0;
        if let Some(decisions) = strategy.decide(market, t) {
            let target: Vec<Position> = decisions
                .iter()
                .filter_map(|d| Position::from_decision(d, market))
                .collect();
            if !target.is_empty() {
                let closes: Vec<Position> = book.iter().filter(|p| !target.contains(p)).cloned().collect();
                let opens: Vec<Position> = target.iter().filter(|p| !book.contains(p)).cloned().collect();
                for p in closes.iter().chain(&opens) {
                    fee_mult *= 1.0 - rate * p.weight;
                }
                log_trades(&mut trades, t, closes, opens);
                book = target;
            }
        }

        let day_return: f64 = book
            .iter()
            .map(|p| {
                let r = match &p.asset {
                    Asset::Stock(ticker) => stock_returns[ticker.as_str()][t],
                    Asset::Index => index_returns[t],
                    Asset::Cash => 0.0,
                };
                let signed = match p.direction {
                    Direction::Long => r,
                    Direction::Short => -r,
                };
                p.weight * signed
            })
            .sum();
        gross[t] = day_return;
        net[t] = (1.0 + day_return) * fee_mult - 1.0;
        final_value *= (1.0 + day_return) * fee_mult;
        labels[t] = if book.is_empty() {
            "CASH".into()
        } else {
            book.iter().map(Position::label).collect::<Vec<_>>().join("|")
        };
    }

    let abnormal_returns = analytics::abnormal(&gross, &index_returns)?
        .into_iter()
        .enumerate()
        .map(|(t, a)| if t >= start && t <= end { a } else { 0.0 })
        .collect();

    Ok(BacktestResult {
        strategy: strategy.name(),
        window,
        gross_returns: gross,
        net_returns: net,
        abnormal_returns,
        index_returns,
        positions: labels,
        trades,
        final_value,
    })
}

/// Pairs closes with opens into log entries; unmatched legs pair with cash.
fn log_trades(log: &mut Vec<TradeLogEntry>, day: usize, closes: Vec<Position>, opens: Vec<Position>) {
    let n = closes.len().max(opens.len());
    let mut closes = closes.into_iter();
    let mut opens = opens.into_iter();
    for _ in 0..n {
        let closed = closes.next();
        let opened = opens.next();
        let weight = closed.as_ref().or(opened.as_ref()).map_or(1.0, |p| p.weight);
        let closed = closed.unwrap_or_else(|| Position::cash(weight));
        let opened = opened.unwrap_or_else(|| Position::cash(weight));
        let operations = usize::from(!closed.is_cash()) + usize::from(!opened.is_cash());
        log.push(TradeLogEntry {
            day,
            closed,
            opened,
            operations,
        });
    }
}

/// Always long the index.
#[derive(Debug, Clone, Default)]
pub struct IndexStrategy;

impl DecisionSource for IndexStrategy {
    fn name(&self) -> String {
        "index".into()
    }

    fn decide(&mut self, _market: &MarketData, _t: usize) -> Option<Vec<Decision>> {
        Some(vec![index_decide()])
    }
}

/// Single-stock momentum, re-evaluated every day from the previous close.
#[derive(Debug, Clone)]
pub struct MomentumStrategy {
    pub cfg: StrategyConfig,
}

impl DecisionSource for MomentumStrategy {
    fn name(&self) -> String {
        "momentum".into()
    }

    fn decide(&mut self, market: &MarketData, t: usize) -> Option<Vec<Decision>> {
        // The book entered at close t-1 may only use prices up to t-1.
        if t == 0 || t - 1 < self.cfg.delta {
            return None;
        }
        let d = momentum_decide(market, t - 1, &self.cfg);
        (!d.is_hold()).then(|| vec![d])
    }
}

/// Equal-weight top-|RoC| book, rebalanced daily from the previous close.
#[derive(Debug, Clone)]
pub struct PortfolioStrategy {
    pub cfg: StrategyConfig,
}

impl DecisionSource for PortfolioStrategy {
    fn name(&self) -> String {
        format!("portfolio({})", self.cfg.portfolio_size)
    }

    fn decide(&mut self, market: &MarketData, t: usize) -> Option<Vec<Decision>> {
        if t == 0 || t - 1 < self.cfg.delta {
            return None;
        }
        let book = portfolio_decide(market, t - 1, &self.cfg);
        (!book.is_empty()).then_some(book)
    }
}

#[derive(Debug, Clone)]
enum NewsMode {
    Simple,
    Combined(StrategyConfig),
}

/// Sentiment-threshold trading on the first announcement of each day,
/// optionally gated by momentum agreement.
#[derive(Debug, Clone)]
pub struct NewsStrategy {
    name: String,
    feed: NewsFeed,
    by_day: BTreeMap<usize, usize>,
    thresholds: ThresholdPair,
    mode: NewsMode,
}

impl NewsStrategy {
    fn build(name: String, feed: &NewsFeed, thresholds: ThresholdPair, mode: NewsMode) -> Self {
        let feed = first_per_day(feed);
        let by_day = feed.iter().enumerate().map(|(k, a)| (a.day, k)).collect();
        Self {
            name,
            feed,
            by_day,
            thresholds,
            mode,
        }
    }

    pub fn simple(feed: &NewsFeed, thresholds: ThresholdPair) -> Self {
        Self::build("news".into(), feed, thresholds, NewsMode::Simple)
    }

    pub fn combined(feed: &NewsFeed, thresholds: ThresholdPair, cfg: StrategyConfig) -> Self {
        Self::build("combined".into(), feed, thresholds, NewsMode::Combined(cfg))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn thresholds(&self) -> ThresholdPair {
        self.thresholds
    }
}

impl DecisionSource for NewsStrategy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn decide(&mut self, market: &MarketData, t: usize) -> Option<Vec<Decision>> {
        let ann = self.feed.get(*self.by_day.get(&t)?)?;
        let d = match &self.mode {
            NewsMode::Simple => news_decide(ann, &self.thresholds, market, t),
            NewsMode::Combined(cfg) => combined_decide(ann, &self.thresholds, market, t, cfg),
        };
        (!d.is_hold()).then(|| vec![d])
    }
}

/// Replays a fixed day -> book schedule.
#[derive(Debug, Clone, Default)]
pub struct ScriptedStrategy {
    pub name: String,
    pub schedule: BTreeMap<usize, Vec<Decision>>,
}

impl DecisionSource for ScriptedStrategy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn decide(&mut self, _market: &MarketData, t: usize) -> Option<Vec<Decision>> {
        self.schedule.get(&t).cloned()
    }
}
