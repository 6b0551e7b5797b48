//! Rule-based decision functions.
//!
//! Every function here is pure: given the market, an optional announcement
//! and a day index it returns what to hold. Thresholds compare strictly, and
//! ties between stocks go to the lexicographically smallest ticker.

use serde::{Deserialize, Serialize};

use crate::marketdata::{is_penny, roc, MarketData};
use crate::newsfeed::{nearest_rank, Announcement, ThresholdPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    LongStock,
    ShortStock,
    LongIndex,
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub ticker: Option<String>,
    pub weight: f64,
}

impl Decision {
    pub fn hold() -> Self {
        Self {
            action: Action::Hold,
            ticker: None,
            weight: 1.0,
        }
    }

    pub fn long_index() -> Self {
        Self {
            action: Action::LongIndex,
            ticker: None,
            weight: 1.0,
        }
    }

    pub fn long(ticker: impl Into<String>, weight: f64) -> Self {
        Self {
            action: Action::LongStock,
            ticker: Some(ticker.into()),
            weight,
        }
    }

    pub fn short(ticker: impl Into<String>, weight: f64) -> Self {
        Self {
            action: Action::ShortStock,
            ticker: Some(ticker.into()),
            weight,
        }
    }

    /// Long for a non-negative signal, short otherwise.
    fn by_sign(ticker: &str, signal: f64, weight: f64) -> Self {
        if signal >= 0.0 {
            Self::long(ticker, weight)
        } else {
            Self::short(ticker, weight)
        }
    }

    pub fn is_hold(&self) -> bool {
        self.action == Action::Hold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// Quantile of the day's |RoC| cross-section the best stock must beat.
    pub theta_roc_quantile: f64,
    pub delta: usize,
    pub thresholds: ThresholdPair,
    pub portfolio_size: usize,
    /// Lookback of the index "historic performance" learning feature.
    pub delta_index: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            theta_roc_quantile: 0.5,
            delta: 200,
            thresholds: ThresholdPair {
                theta_minus: 0.0,
                theta_plus: 0.0,
            },
            portfolio_size: 20,
            delta_index: 200,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.delta < 1 {
            return Err("delta must be at least 1".into());
        }
        if self.portfolio_size < 1 {
            return Err("portfolio_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.theta_roc_quantile) {
            return Err("theta_roc_quantile must lie in [0, 1]".into());
        }
        if self.thresholds.theta_minus > self.thresholds.theta_plus {
            return Err("theta_minus exceeds theta_plus".into());
        }
        Ok(())
    }
}

/// (ticker, RoC) for every non-penny stock at day `t`, in ticker order.
fn eligible_rocs(market: &MarketData, t: usize, delta: usize) -> Vec<(&str, f64)> {
    market
        .stocks
        .values()
        .filter(|s| !is_penny(s.close(t)))
        .filter_map(|s| roc(s, t, delta).ok().map(|r| (s.ticker.as_str(), r)))
        .collect()
}

/// Sorts by |RoC| descending, ticker ascending.
fn rank_by_abs_roc(rocs: &mut [(&str, f64)]) {
    rocs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(b.0)));
}

/// Single stock with the largest |RoC|, traded in the RoC direction when it
/// beats the configured quantile of the day's |RoC| distribution.
pub fn momentum_decide(market: &MarketData, t: usize, cfg: &StrategyConfig) -> Decision {
    if t < cfg.delta || t >= market.len() {
        log::warn!("momentum: insufficient history at day {t}");
        return Decision::hold();
    }
    let mut rocs = eligible_rocs(market, t, cfg.delta);
    if rocs.is_empty() {
        return Decision::hold();
    }
    let mut abs: Vec<f64> = rocs.iter().map(|(_, r)| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let gate = nearest_rank(&abs, cfg.theta_roc_quantile);
    rank_by_abs_roc(&mut rocs);
    let (ticker, best) = rocs[0];
    if best.abs() > gate {
        Decision::by_sign(ticker, best, 1.0)
    } else {
        Decision::hold()
    }
}

/// Equal-weight book of the `portfolio_size` stocks with the largest |RoC|.
pub fn portfolio_decide(market: &MarketData, t: usize, cfg: &StrategyConfig) -> Vec<Decision> {
    if t < cfg.delta || t >= market.len() {
        log::warn!("portfolio: insufficient history at day {t}");
        return Vec::new();
    }
    let mut rocs = eligible_rocs(market, t, cfg.delta);
    if rocs.len() < cfg.portfolio_size {
        log::debug!(
            "portfolio: only {} eligible stocks for a book of {} on day {t}",
            rocs.len(),
            cfg.portfolio_size
        );
    }
    rank_by_abs_roc(&mut rocs);
    let n = rocs.len().min(cfg.portfolio_size);
    let w = 1.0 / n as f64;
    rocs[..n]
        .iter()
        .map(|(ticker, r)| Decision::by_sign(ticker, *r, w))
        .collect()
}

/// Trades the announced stock when its sentiment is beyond a threshold.
pub fn news_decide(ann: &Announcement, thresholds: &ThresholdPair, market: &MarketData, t: usize) -> Decision {
    debug_assert_eq!(ann.day, t);
    let Some(stock) = market.stock(&ann.ticker) else {
        log::warn!("news: unknown ticker {}", ann.ticker);
        return Decision::hold();
    };
    if t >= market.len() || is_penny(stock.close(t)) {
        return Decision::hold();
    }
    if ann.sentiment > thresholds.theta_plus {
        Decision::long(&ann.ticker, 1.0)
    } else if ann.sentiment < thresholds.theta_minus {
        Decision::short(&ann.ticker, 1.0)
    } else {
        Decision::hold()
    }
}

/// News signal gated by agreement with the stock's past RoC.
pub fn combined_decide(
    ann: &Announcement,
    thresholds: &ThresholdPair,
    market: &MarketData,
    t: usize,
    cfg: &StrategyConfig,
) -> Decision {
    let d = news_decide(ann, thresholds, market, t);
    if d.is_hold() {
        return d;
    }
    let Some(momentum) = market.stock(&ann.ticker).and_then(|s| roc(s, t, cfg.delta).ok()) else {
        return Decision::hold();
    };
    match d.action {
        Action::LongStock if momentum > 0.0 => d,
        Action::ShortStock if momentum < 0.0 => d,
        _ => Decision::hold(),
    }
}

pub fn index_decide() -> Decision {
    Decision::long_index()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{PriceSeries, INDEX_TICKER};

    /// Builds a market of `len` days where each stock moves linearly from
    /// `start` to `start * (1 + roc)` over the last `delta` days.
    fn market_with_rocs(stocks: &[(&str, f64, f64)], len: usize, delta: usize) -> MarketData {
        let idx = PriceSeries::new(INDEX_TICKER, None, vec![100.0; len]).unwrap();
        let series = stocks
            .iter()
            .map(|(t, start, r)| {
                let closes = (0..len)
                    .map(|d| {
                        if d + delta < len {
                            *start
                        } else {
                            start * (1.0 + r * (d + delta + 1 - len) as f64 / delta as f64)
                        }
                    })
                    .collect();
                PriceSeries::new(*t, None, closes).unwrap()
            })
            .collect();
        MarketData::new(idx, series).unwrap()
    }

    fn cfg(delta: usize, q: f64) -> StrategyConfig {
        StrategyConfig {
            theta_roc_quantile: q,
            delta,
            ..Default::default()
        }
    }

    fn ann(t: usize, ticker: &str, s: f64) -> Announcement {
        Announcement {
            day: t,
            ticker: ticker.into(),
            text: String::new(),
            sentiment: s,
        }
    }

    #[test]
    fn momentum_picks_largest_abs_roc() {
        let m = market_with_rocs(&[("A", 10.0, 0.30), ("B", 10.0, -0.10)], 11, 10);
        let d = momentum_decide(&m, 10, &cfg(10, 0.0));
        assert_eq!(d, Decision::long("A", 1.0));

        let m = market_with_rocs(&[("A", 10.0, 0.10), ("B", 10.0, -0.30)], 11, 10);
        assert_eq!(momentum_decide(&m, 10, &cfg(10, 0.0)), Decision::short("B", 1.0));

        let m = market_with_rocs(&[("A", 10.0, 0.0), ("B", 10.0, 0.0)], 11, 10);
        assert!(momentum_decide(&m, 10, &cfg(10, 0.0)).is_hold());

        assert!(momentum_decide(&m, 5, &cfg(10, 0.0)).is_hold());
    }

    #[test]
    fn momentum_ties_go_to_smallest_ticker() {
        let m = market_with_rocs(&[("Z", 10.0, 0.2), ("M", 10.0, -0.2), ("Q", 10.0, 0.05)], 11, 10);
        assert_eq!(momentum_decide(&m, 10, &cfg(10, 0.3)), Decision::short("M", 1.0));
    }

    #[test]
    fn momentum_skips_penny_stocks() {
        let m = market_with_rocs(&[("P", 2.0, 0.9), ("B", 10.0, 0.1), ("C", 10.0, 0.05)], 11, 10);
        assert_eq!(momentum_decide(&m, 10, &cfg(10, 0.0)), Decision::long("B", 1.0));
    }

    #[test]
    fn portfolio_uniform_weights() {
        let names: Vec<String> = (0..25).map(|i| format!("S{i:02}")).collect();
        let specs: Vec<(&str, f64, f64)> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), 10.0, 0.01 * (i as f64 + 1.0)))
            .collect();
        let m = market_with_rocs(&specs, 11, 10);
        let book = portfolio_decide(&m, 10, &cfg(10, 0.5));
        assert_eq!(book.len(), 20);
        assert!(book.iter().all(|d| (d.weight - 0.05).abs() < 1e-15));
        assert!(book.iter().all(|d| d.action == Action::LongStock));
        // the five smallest movers are excluded
        assert!(book.iter().all(|d| d.ticker.as_deref() > Some("S04")));

        let m = market_with_rocs(&specs[..10], 11, 10);
        let book = portfolio_decide(&m, 10, &cfg(10, 0.5));
        assert_eq!(book.len(), 10);
        assert!(book.iter().all(|d| (d.weight - 0.1).abs() < 1e-15));
    }

    #[test]
    fn news_threshold_rules() {
        let m = market_with_rocs(&[("A", 10.0, 0.1), ("P", 3.10, 0.1)], 11, 10);
        let th = ThresholdPair::new(-0.5, 0.5);
        assert_eq!(news_decide(&ann(10, "A", 0.9), &th, &m, 10), Decision::long("A", 1.0));
        assert_eq!(news_decide(&ann(10, "A", -0.9), &th, &m, 10), Decision::short("A", 1.0));
        assert!(news_decide(&ann(10, "A", 0.5), &th, &m, 10).is_hold());
        assert!(news_decide(&ann(10, "A", -0.5), &th, &m, 10).is_hold());
        assert!(news_decide(&ann(10, "P", -0.9), &th, &m, 10).is_hold());
        assert!(news_decide(&ann(10, "NOPE", 0.9), &th, &m, 10).is_hold());
    }

    #[test]
    fn combined_requires_agreement() {
        let th = ThresholdPair::new(-0.5, 0.5);
        let up = market_with_rocs(&[("A", 10.0, 0.2)], 11, 10);
        let down = market_with_rocs(&[("A", 10.0, -0.2)], 11, 10);
        let c = cfg(10, 0.5);
        assert_eq!(
            combined_decide(&ann(10, "A", 0.9), &th, &up, 10, &c),
            Decision::long("A", 1.0)
        );
        assert!(combined_decide(&ann(10, "A", 0.9), &th, &down, 10, &c).is_hold());
        assert_eq!(
            combined_decide(&ann(10, "A", -0.9), &th, &down, 10, &c),
            Decision::short("A", 1.0)
        );
        assert!(combined_decide(&ann(10, "A", 0.1), &th, &up, 10, &c).is_hold());
        // not enough history for the RoC leg
        assert!(combined_decide(&ann(5, "A", 0.9), &th, &up, 5, &c).is_hold());
    }

    #[test]
    fn index_always_long() {
        assert_eq!(index_decide().action, Action::LongIndex);
        assert_eq!(index_decide().weight, 1.0);
    }

    #[test]
    fn news_rule_exhaustive_grid() {
        let m = market_with_rocs(&[("A", 10.0, 0.1)], 11, 10);
        for i in -20..=20 {
            for lo in -4..=0 {
                for hi in 0..=4 {
                    let s = i as f64 / 10.0;
                    let th = ThresholdPair::new(lo as f64 / 2.0, hi as f64 / 2.0);
                    let d = news_decide(&ann(10, "A", s), &th, &m, 10);
                    assert_eq!(d.action == Action::ShortStock, s < th.theta_minus);
                    assert_eq!(d.action == Action::LongStock, s > th.theta_plus);
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn momentum_scale_invariant(
                rocs in prop::collection::vec(-0.5f64..0.5, 1..8),
                c in 1.0f64..50.0,
            ) {
                let names: Vec<String> = (0..rocs.len()).map(|i| format!("T{i}")).collect();
                let specs: Vec<(&str, f64, f64)> = names.iter().zip(&rocs).map(|(n, r)| (n.as_str(), 10.0, *r)).collect();
                let m = market_with_rocs(&specs, 11, 10);
                let c1 = cfg(10, 0.5);
                prop_assert_eq!(momentum_decide(&m, 10, &c1), momentum_decide(&m.scaled(c), 10, &c1));
            }

            #[test]
            fn portfolio_weights_and_ranking(
                rocs in prop::collection::vec(-0.5f64..0.5, 1..30),
                size in 1usize..25,
            ) {
                let names: Vec<String> = (0..rocs.len()).map(|i| format!("T{i:02}")).collect();
                let specs: Vec<(&str, f64, f64)> = names.iter().zip(&rocs).map(|(n, r)| (n.as_str(), 10.0, *r)).collect();
                let m = market_with_rocs(&specs, 11, 10);
                let c = StrategyConfig { portfolio_size: size, ..cfg(10, 0.5) };
                let book = portfolio_decide(&m, 10, &c);
                let total: f64 = book.iter().map(|d| d.weight).sum();
                prop_assert!(total <= 1.0 + 1e-12);
                let roc_of = |t: &str| roc(m.stock(t).unwrap(), 10, 10).unwrap().abs();
                let chosen: Vec<&str> = book.iter().map(|d| d.ticker.as_deref().unwrap()).collect();
                let min_in = chosen.iter().map(|t| roc_of(t)).fold(f64::INFINITY, f64::min);
                for n in &names {
                    if !chosen.contains(&n.as_str()) {
                        prop_assert!(roc_of(n) <= min_in);
                    }
                }
            }
        }
    }
}
