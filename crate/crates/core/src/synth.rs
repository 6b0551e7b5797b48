//! Seeded synthetic market and announcement generator with a planted news
//! effect.
//!
//! The index follows a geometric random walk. Stock `i` returns
//! `beta_i * r_m + idio_vol * e + J`, where `J` is non-zero only for the
//! stock announced that day: `J = s * effect_kappa * |g|` with an equiprobable
//! sign `s`. The announcement's sentiment is `s * |h| + sentiment_noise * z`,
//! so its sign predicts the jump's sign less reliably as the noise grows.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{MarketData, PriceSeries, INDEX_TICKER};
use crate::newsfeed::{Announcement, NewsFeed};

pub const SECTORS: [&str; 5] = ["automobile", "chemicals", "technology", "financials", "industrials"];

#[derive(Debug, Error)]
#[error("invalid synthetic config: {0}")]
pub struct SynthError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub index_drift: f64,
    pub index_vol: f64,
    pub beta_range: (f64, f64),
    pub idio_vol: f64,
    pub ann_prob: f64,
    pub effect_kappa: f64,
    pub sentiment_noise: f64,
    pub penny_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stocks: 50,
            n_days: 2000,
            index_drift: 0.0003,
            index_vol: 0.01,
            beta_range: (0.5, 1.5),
            idio_vol: 0.01,
            ann_prob: 0.9,
            effect_kappa: 0.02,
            sentiment_noise: 0.5,
            penny_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Noise-free environment: prices move only on announcement jumps and
    /// the sentiment sign always matches the jump sign.
    pub fn deterministic(effect_kappa: f64) -> Self {
        Self {
            index_drift: 0.0,
            index_vol: 0.0,
            idio_vol: 0.0,
            sentiment_noise: 0.0,
            effect_kappa,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError(m.into()));
        if self.n_days < 2 {
            return err("n_days must be at least 2");
        }
        if self.n_stocks == 0 {
            return err("n_stocks must be at least 1");
        }
        for (name, v) in [
            ("index_vol", self.index_vol),
            ("idio_vol", self.idio_vol),
            ("effect_kappa", self.effect_kappa),
            ("sentiment_noise", self.sentiment_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [("ann_prob", self.ann_prob), ("penny_fraction", self.penny_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError(format!("{name} must lie in [0, 1]")));
            }
        }
        let (lo, hi) = self.beta_range;
        if !self.index_drift.is_finite() || lo.is_nan() || hi.is_nan() || lo > hi {
            return err("index_drift must be finite and beta_range ordered");
        }
        Ok(())
    }
}

/// Ticker of the `i`-th synthetic stock.
pub fn ticker(i: usize) -> String {
    format!("S{i:03}")
}

/// Guards against a compounded price ever reaching zero.
fn floor_return(r: f64) -> f64 {
    r.max(-0.95)
}

pub fn generate(cfg: &SynthConfig) -> Result<(MarketData, NewsFeed), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_stocks;
    let n_penny = (cfg.penny_fraction * n as f64).round() as usize;

    let betas: Vec<f64> = (0..n)
        .map(|_| cfg.beta_range.0 + (cfg.beta_range.1 - cfg.beta_range.0) * rng.random::<f64>())
        .collect();
    let mut prices: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let p0 = if i < n_penny {
                rng.random_range(1.0..4.5)
            } else {
                rng.random_range(10.0..100.0)
            };
            let mut v = Vec::with_capacity(cfg.n_days);
            v.push(p0);
            v
        })
        .collect();
    let mut index = Vec::with_capacity(cfg.n_days);
    index.push(1000.0);

    let mut anns = Vec::new();
    for t in 1..cfg.n_days {
        // Every draw happens each day, so configs differing only in effect
        // size or noise share the same underlying paths.
        let z_m: f64 = rng.sample(StandardNormal);
        let u_ann: f64 = rng.random();
        let who = rng.random_range(0..n);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let g: f64 = rng.sample(StandardNormal);
        let h: f64 = rng.sample(StandardNormal);
        let z_s: f64 = rng.sample(StandardNormal);

        let r_m = floor_return(cfg.index_drift + cfg.index_vol * z_m);
        index.push(index[t - 1] * (1.0 + r_m));

        let announced = u_ann < cfg.ann_prob;
        let jump = sign * cfg.effect_kappa * g.abs();
        for (i, series) in prices.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            let mut r = betas[i] * r_m + cfg.idio_vol * e;
            if announced && i == who {
                r += jump;
            }
            let prev = series[t - 1];
            series.push(prev * (1.0 + floor_return(r)));
        }
        if announced {
            anns.push(Announcement {
                day: t,
                ticker: ticker(who),
                text: String::new(),
                sentiment: sign * h.abs() + cfg.sentiment_noise * z_s,
            });
        }
    }

    let index = PriceSeries::new(INDEX_TICKER, None, index).map_err(|e| SynthError(e.to_string()))?;
    let stocks = prices
        .into_iter()
        .enumerate()
        .map(|(i, closes)| PriceSeries::new(ticker(i), Some(SECTORS[i % SECTORS.len()].into()), closes))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SynthError(e.to_string()))?;
    let market = MarketData::new(index, stocks).map_err(|e| SynthError(e.to_string()))?;
    Ok((market, NewsFeed::new(anns)))
}
