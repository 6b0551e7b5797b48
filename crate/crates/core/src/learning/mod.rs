//! Strategy learning from disclosures: features, optimal-action labels, a
//! random forest classifier and tabular Q-learning.
//!
//! Each disclosure is a decision point. The chosen action is held from the
//! close before the disclosure day until the close before the next
//! disclosure (or the end of the evaluation window).

pub mod forest;
pub mod qlearn;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{is_penny, roc, series_returns, MarketData};
use crate::newsfeed::{first_per_day, Announcement, NewsFeed};
use crate::simulator::DecisionSource;
use crate::strategies::{Decision, StrategyConfig};

pub use forest::{forest_predict, forest_train, ForestModel, ForestParams};
pub use qlearn::{epsilon_greedy, q_train, q_update, QEnvironment, QParams, QTable, TrainingSummary};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no training samples")]
    EmptySamples,
    #[error("need at least 2 trainable disclosures, found {0}")]
    TooFewDisclosures(usize),
    #[error("disclosure {0} is not trainable (no predecessor or insufficient history)")]
    NotTrainable(usize),
    #[error("model file: {0}")]
    Model(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// What to do at a disclosure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    HoldExisting = 0,
    BuyDisclosedStock = 1,
    BuyIndex = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::HoldExisting, Action::BuyDisclosedStock, Action::BuyIndex];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax3<T: PartialOrd + Copy>(v: &[T; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

pub const N_FEATURES: usize = 10;

/// Sentiment, stock RoC, index RoC, index historic performance and penny
/// dummy, for the current disclosure (0..5) then the previous one (5..10).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The five per-disclosure quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Snapshot {
    sentiment: f64,
    stock_roc: f64,
    index_roc: f64,
    index_history: f64,
    penny: bool,
}

impl Snapshot {
    fn of(ann: &Announcement, market: &MarketData, cfg: &StrategyConfig) -> Option<Self> {
        let stock = market.stock(&ann.ticker)?;
        let t = ann.day;
        Some(Self {
            sentiment: ann.sentiment,
            stock_roc: roc(stock, t, cfg.delta).ok()?,
            index_roc: roc(&market.index, t, cfg.delta).ok()?,
            index_history: roc(&market.index, t, cfg.delta_index).ok()?,
            penny: is_penny(stock.close(t)),
        })
    }

    fn values(&self) -> [f64; 5] {
        [
            self.sentiment,
            self.stock_roc,
            self.index_roc,
            self.index_history,
            f64::from(u8::from(self.penny)),
        ]
    }

    /// Sign bits (>= 0 maps to 1) in feature order.
    fn sign_bits(&self) -> [bool; 4] {
        [
            self.sentiment >= 0.0,
            self.stock_roc >= 0.0,
            self.index_roc >= 0.0,
            self.index_history >= 0.0,
        ]
    }
}

fn snapshots(
    feed: &NewsFeed,
    k: usize,
    market: &MarketData,
    cfg: &StrategyConfig,
) -> Result<(Snapshot, Snapshot), LearnError> {
    if k == 0 || k >= feed.len() {
        return Err(LearnError::NotTrainable(k));
    }
    let cur = Snapshot::of(&feed.announcements()[k], market, cfg);
    let prev = Snapshot::of(&feed.announcements()[k - 1], market, cfg);
    match (cur, prev) {
        (Some(c), Some(p)) => Ok((c, p)),
        _ => Err(LearnError::NotTrainable(k)),
    }
}

pub fn build_features(
    feed: &NewsFeed,
    k: usize,
    market: &MarketData,
    cfg: &StrategyConfig,
) -> Result<FeatureVector, LearnError> {
    let (cur, prev) = snapshots(feed, k, market, cfg)?;
    let mut v = [0.0; N_FEATURES];
    v[..5].copy_from_slice(&cur.values());
    v[5..].copy_from_slice(&prev.values());
    Ok(FeatureVector(v))
}

/// One of 256 states: sign bits of the current disclosure in bits 0-3 and of
/// the previous one in bits 4-7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub u8);

impl StateId {
    pub const COUNT: usize = 256;

    pub fn from_signs(bits: [bool; 8]) -> Self {
        StateId(
            bits.iter()
                .enumerate()
                .fold(0u8, |acc, (i, b)| acc | (u8::from(*b) << i)),
        )
    }

    pub fn signs(self) -> [bool; 8] {
        std::array::from_fn(|i| self.0 >> i & 1 == 1)
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    /// Whether the current disclosure's sentiment is non-negative.
    pub fn current_sentiment_up(self) -> bool {
        self.0 & 1 == 1
    }
}

pub fn encode_state(
    feed: &NewsFeed,
    k: usize,
    market: &MarketData,
    cfg: &StrategyConfig,
) -> Result<StateId, LearnError> {
    let (cur, prev) = snapshots(feed, k, market, cfg)?;
    let mut bits = [false; 8];
    bits[..4].copy_from_slice(&cur.sign_bits());
    bits[4..].copy_from_slice(&prev.sign_bits());
    Ok(StateId::from_signs(bits))
}

/// What the learner currently owns.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Holding {
    #[default]
    Cash,
    Stock(String),
    Index,
}

/// Growth factors `1 + r_t` of every holdable asset, by day.
struct ReturnTable<'a> {
    stocks: BTreeMap<&'a str, Vec<f64>>,
    index: Vec<f64>,
}

impl<'a> ReturnTable<'a> {
    fn new(market: &'a MarketData) -> Self {
        Self {
            stocks: market
                .stocks
                .iter()
                .map(|(k, s)| (k.as_str(), series_returns(s)))
                .collect(),
            index: market.index_returns(),
        }
    }

    fn growth(&self, holding: &Holding, days: Range<usize>) -> f64 {
        let r: &[f64] = match holding {
            Holding::Cash => return 1.0,
            Holding::Index => &self.index,
            Holding::Stock(t) => &self.stocks[t.as_str()],
        };
        r[days].iter().map(|x| 1.0 + x).product()
    }
}

/// Net return of taking `action` while holding `held`, over `days`.
fn outcome(
    table: &ReturnTable<'_>,
    held: &Holding,
    action: Action,
    ticker: &str,
    days: Range<usize>,
    fee: f64,
) -> (f64, Holding) {
    let next = match action {
        Action::HoldExisting => held.clone(),
        Action::BuyDisclosedStock => Holding::Stock(ticker.to_string()),
        Action::BuyIndex => Holding::Index,
    };
    let ops = if next == *held {
        0
    } else {
        i32::from(*held != Holding::Cash) + 1
    };
    let net = table.growth(&next, days) * (1.0 - fee).powi(ops) - 1.0;
    (net, next)
}

/// Best of the three actions at disclosure `k` by realized net return up to
/// the next disclosure (or calendar end). Ties go to the lowest action index.
pub fn label_optimal_action(feed: &NewsFeed, k: usize, market: &MarketData, fee: f64, held: &Holding) -> Action {
    let ann = &feed.announcements()[k];
    let stop = feed.get(k + 1).map_or(market.len(), |a| a.day);
    let table = ReturnTable::new(market);
    let returns = Action::ALL.map(|a| outcome(&table, held, a, &ann.ticker, ann.day..stop, fee).0);
    Action::from_index(argmax3(&returns))
}

/// A decision point of the learning environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Position in the first-per-day feed.
    pub k: usize,
    pub day: usize,
    /// Exclusive end of the holding interval.
    pub stop: usize,
    pub ticker: String,
    pub features: FeatureVector,
    pub state: StateId,
}

/// Trainable disclosures within a day window, with the market needed to
/// realize each action's return.
pub struct DisclosureEnv<'a> {
    table: ReturnTable<'a>,
    steps: Vec<Step>,
    fee: f64,
    held: Holding,
}

impl<'a> DisclosureEnv<'a> {
    /// Builds steps for disclosures with `day` in `[window.0, window.1]`.
    /// Holding intervals end at the next disclosure or `window.1 + 1`.
    pub fn new(
        feed: &NewsFeed,
        market: &'a MarketData,
        cfg: &StrategyConfig,
        fee: f64,
        window: (usize, usize),
    ) -> Self {
        let feed = first_per_day(feed);
        let end = window.1.min(market.len() - 1) + 1;
        let mut steps = Vec::new();
        for (k, ann) in feed.iter().enumerate() {
            if ann.day < window.0 || ann.day > window.1 {
                continue;
            }
            let (Ok(features), Ok(state)) = (
                build_features(&feed, k, market, cfg),
                encode_state(&feed, k, market, cfg),
            ) else {
                continue;
            };
            let stop = feed.get(k + 1).map_or(end, |a| a.day.min(end));
            steps.push(Step {
                k,
                day: ann.day,
                stop,
                ticker: ann.ticker.clone(),
                features,
                state,
            });
        }
        Self {
            table: ReturnTable::new(market),
            steps,
            fee,
            held: Holding::Cash,
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Keeps only steps in `range` (by position).
    pub fn restrict(mut self, range: Range<usize>) -> Self {
        self.steps = self.steps[range].to_vec();
        self
    }

    pub fn holding(&self) -> &Holding {
        &self.held
    }

    /// Net return of each action at step `i` given the current holding.
    pub fn action_returns(&self, i: usize) -> [f64; 3] {
        let s = &self.steps[i];
        Action::ALL.map(|a| outcome(&self.table, &self.held, a, &s.ticker, s.day..s.stop, self.fee).0)
    }

    /// Applies `action` at step `i`, returning its net return.
    pub fn apply(&mut self, i: usize, action: Action) -> f64 {
        let s = &self.steps[i];
        let (r, next) = outcome(&self.table, &self.held, action, &s.ticker, s.day..s.stop, self.fee);
        self.held = next;
        r
    }

    /// Greedy hindsight labels, threading the holding from cash.
    pub fn optimal_labels(&mut self) -> Vec<Action> {
        self.held = Holding::Cash;
        let labels = (0..self.steps.len())
            .map(|i| {
                let a = Action::from_index(argmax3(&self.action_returns(i)));
                self.apply(i, a);
                a
            })
            .collect();
        self.held = Holding::Cash;
        labels
    }

    /// Training samples pairing features with hindsight labels.
    pub fn labelled_samples(&mut self) -> Vec<(FeatureVector, Action)> {
        let labels = self.optimal_labels();
        self.steps.iter().map(|s| s.features).zip(labels).collect()
    }
}

impl QEnvironment for DisclosureEnv<'_> {
    fn len(&self) -> usize {
        self.steps.len()
    }

    fn state(&self, i: usize) -> StateId {
        self.steps[i].state
    }

    fn reset(&mut self) {
        self.held = Holding::Cash;
    }

    fn step(&mut self, i: usize, action: Action) -> f64 {
        self.apply(i, action)
    }
}

/// How a learned strategy picks an action at a disclosure.
pub trait Policy {
    fn act(&self, step: &Step) -> Action;
}

impl Policy for ForestModel {
    fn act(&self, step: &Step) -> Action {
        forest_predict(self, &step.features)
    }
}

impl Policy for QTable {
    fn act(&self, step: &Step) -> Action {
        self.greedy(step.state)
    }
}

/// Fixed action per disclosure day, e.g. hindsight labels.
impl Policy for BTreeMap<usize, Action> {
    fn act(&self, step: &Step) -> Action {
        self.get(&step.day).copied().unwrap_or(Action::HoldExisting)
    }
}

/// Simulator adapter for a learned policy.
pub struct LearnedStrategy<P> {
    name: String,
    steps: BTreeMap<usize, Step>,
    policy: P,
}

impl<P: Policy> LearnedStrategy<P> {
    /// Decides at every trainable disclosure of `feed` whose day lies in
    /// `window`.
    pub fn new(
        name: impl Into<String>,
        policy: P,
        feed: &NewsFeed,
        market: &MarketData,
        cfg: &StrategyConfig,
        window: (usize, usize),
    ) -> Self {
        let env = DisclosureEnv::new(feed, market, cfg, 0.0, window);
        Self {
            name: name.into(),
            steps: env.steps.into_iter().map(|s| (s.day, s)).collect(),
            policy,
        }
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }
}

impl<P: Policy> DecisionSource for LearnedStrategy<P> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn decide(&mut self, _market: &MarketData, t: usize) -> Option<Vec<Decision>> {
        let step = self.steps.get(&t)?;
        match self.policy.act(step) {
            Action::HoldExisting => None,
            Action::BuyDisclosedStock => Some(vec![Decision::long(&step.ticker, 1.0)]),
            Action::BuyIndex => Some(vec![Decision::long_index()]),
        }
    }
}
