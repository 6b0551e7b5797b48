//! Daily close prices on a shared trading calendar.
//!
//! Market files are long-format CSV (`day,ticker,close[,sector]`). The
//! benchmark index uses the reserved ticker [`INDEX_TICKER`]. Gaps are
//! forward-filled at load time and flagged; nothing is ever interpolated, so
//! no later price can leak into an earlier day.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// Reserved ticker for the benchmark index rows.
pub const INDEX_TICKER: &str = "__INDEX__";

/// Stocks priced strictly below this are penny stocks.
pub const PENNY_THRESHOLD: f64 = 5.0;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: non-positive price {price} for {ticker}")]
    InvalidPrice { line: usize, ticker: String, price: f64 },
    #[error("no index rows (ticker `{INDEX_TICKER}`) in market data")]
    MissingIndex,
    #[error("{ticker}: no price on day 0, cannot forward-fill")]
    LeadingGap { ticker: String },
    #[error("insufficient history: day {t} with lookback {delta}")]
    InsufficientHistory { t: usize, delta: usize },
    #[error("invalid market data: {0}")]
    Invalid(String),
}

impl MarketError {
    /// True for errors caused by bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, MarketError::Io(_))
    }
}

/// Business days `0..T`, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TradingCalendar {
    days: Vec<usize>,
}

impl TradingCalendar {
    pub fn with_len(len: usize) -> Self {
        Self {
            days: (0..len).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn days(&self) -> &[usize] {
        &self.days
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub sector: Option<String>,
    closes: Vec<f64>,
    /// `filled[t]` is set when `closes[t]` was carried forward from `t - 1`.
    filled: Vec<bool>,
}

impl PriceSeries {
    /// Builds a fully observed series. Every price must be finite and positive.
    pub fn new(ticker: impl Into<String>, sector: Option<String>, closes: Vec<f64>) -> Result<Self, MarketError> {
        let ticker = ticker.into();
        if let Some(&bad) = closes.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(MarketError::InvalidPrice {
                line: 0,
                ticker,
                price: bad,
            });
        }
        let filled = vec![false; closes.len()];
        Ok(Self {
            ticker,
            sector,
            closes,
            filled,
        })
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn close(&self, t: usize) -> f64 {
        self.closes[t]
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn was_filled(&self, t: usize) -> bool {
        self.filled[t]
    }

    pub fn fill_count(&self) -> usize {
        self.filled.iter().filter(|f| **f).count()
    }

    /// Rate-of-change `(p_t - p_{t-delta}) / p_{t-delta}`.
    pub fn roc(&self, t: usize, delta: usize) -> Result<f64, MarketError> {
        roc(self, t, delta)
    }

    pub fn daily_return(&self, t: usize) -> Result<f64, MarketError> {
        daily_return(self, t)
    }

    /// Same series with every price multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ticker: self.ticker.clone(),
            sector: self.sector.clone(),
            closes: self.closes.iter().map(|p| p * factor).collect(),
            filled: self.filled.clone(),
        }
    }
}

/// Index plus stocks, all aligned to one calendar. Immutable after load.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketData {
    pub calendar: TradingCalendar,
    pub index: PriceSeries,
    /// Keyed by ticker; iteration order is lexicographic.
    pub stocks: BTreeMap<String, PriceSeries>,
    fill_count: usize,
}

impl MarketData {
    pub fn new(index: PriceSeries, stocks: Vec<PriceSeries>) -> Result<Self, MarketError> {
        let len = index.len();
        if len == 0 {
            return Err(MarketError::Invalid("empty calendar".into()));
        }
        let mut map = BTreeMap::new();
        for s in stocks {
            if s.len() != len {
                return Err(MarketError::Invalid(format!(
                    "{} has {} prices, calendar has {}",
                    s.ticker,
                    s.len(),
                    len
                )));
            }
            if s.ticker == INDEX_TICKER {
                return Err(MarketError::Invalid("stock uses the index ticker".into()));
            }
            let ticker = s.ticker.clone();
            if map.insert(ticker.clone(), s).is_some() {
                return Err(MarketError::Invalid(format!("duplicate ticker {ticker}")));
            }
        }
        let fill_count = index.fill_count() + map.values().map(PriceSeries::fill_count).sum::<usize>();
        Ok(Self {
            calendar: TradingCalendar::with_len(len),
            index,
            stocks: map,
            fill_count,
        })
    }

    pub fn len(&self) -> usize {
        self.calendar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calendar.is_empty()
    }

    pub fn stock(&self, ticker: &str) -> Option<&PriceSeries> {
        self.stocks.get(ticker)
    }

    /// Number of cells forward-filled during load.
    pub fn fill_count(&self) -> usize {
        self.fill_count
    }

    /// Index daily returns with day 0 set to zero.
    pub fn index_returns(&self) -> Vec<f64> {
        series_returns(&self.index)
    }

    pub fn sector_of(&self, ticker: &str) -> Option<&str> {
        self.stocks.get(ticker).and_then(|s| s.sector.as_deref())
    }

    /// Copy with every price (index and stocks) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            calendar: self.calendar.clone(),
            index: self.index.scaled(factor),
            stocks: self.stocks.iter().map(|(k, v)| (k.clone(), v.scaled(factor))).collect(),
            fill_count: self.fill_count,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MarketError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["day", "ticker", "close", "sector"]).map_err(csv_io)?;
        for t in 0..self.len() {
            w.write_record([
                t.to_string(),
                INDEX_TICKER.to_string(),
                self.index.close(t).to_string(),
                String::new(),
            ])
            .map_err(csv_io)?;
            for s in self.stocks.values() {
                w.write_record([
                    t.to_string(),
                    s.ticker.clone(),
                    s.close(t).to_string(),
                    s.sector.clone().unwrap_or_default(),
                ])
                .map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> MarketError {
    MarketError::Io(std::io::Error::other(e))
}

/// Daily returns of a series, day 0 set to zero.
pub fn series_returns(series: &PriceSeries) -> Vec<f64> {
    let c = series.closes();
    let mut out = Vec::with_capacity(c.len());
    if !c.is_empty() {
        out.push(0.0);
    }
    out.extend(c.windows(2).map(|w| (w[1] - w[0]) / w[0]));
    out
}

/// Rate-of-change of `series` at day `t` over `delta` days.
pub fn roc(series: &PriceSeries, t: usize, delta: usize) -> Result<f64, MarketError> {
    if t < delta || t >= series.len() {
        return Err(MarketError::InsufficientHistory { t, delta });
    }
    let past = series.close(t - delta);
    Ok((series.close(t) - past) / past)
}

pub fn daily_return(series: &PriceSeries, t: usize) -> Result<f64, MarketError> {
    if t == 0 || t >= series.len() {
        return Err(MarketError::InsufficientHistory { t, delta: 1 });
    }
    let prev = series.close(t - 1);
    Ok((series.close(t) - prev) / prev)
}

pub fn is_penny(price: f64) -> bool {
    price < PENNY_THRESHOLD
}

pub fn load_market(path: impl AsRef<Path>) -> Result<MarketData, MarketError> {
    let file = std::fs::File::open(path)?;
    read_market(file)
}

struct RawSeries {
    sector: Option<String>,
    cells: BTreeMap<usize, f64>,
}

/// Parses market CSV from any reader. See the module docs for the format.
pub fn read_market<R: Read>(reader: R) -> Result<MarketData, MarketError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| MarketError::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let header: Vec<&str> = headers.iter().collect();
    if header.len() < 3 || header[..3] != ["day", "ticker", "close"] {
        return Err(MarketError::Parse {
            line: 1,
            msg: "expected header `day,ticker,close[,sector]`".into(),
        });
    }

    let mut raw: BTreeMap<String, RawSeries> = BTreeMap::new();
    let mut max_day = None::<usize>;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| MarketError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() < 3 {
            return Err(MarketError::Parse {
                line,
                msg: format!("expected at least 3 fields, found {}", rec.len()),
            });
        }
        let day: usize = rec[0].parse().map_err(|_| MarketError::Parse {
            line,
            msg: format!("bad day `{}`", &rec[0]),
        })?;
        let ticker = rec[1].to_string();
        if ticker.is_empty() {
            return Err(MarketError::Parse {
                line,
                msg: "empty ticker".into(),
            });
        }
        let close: f64 = rec[2].parse().map_err(|_| MarketError::Parse {
            line,
            msg: format!("bad close `{}`", &rec[2]),
        })?;
        if !(close.is_finite() && close > 0.0) {
            return Err(MarketError::InvalidPrice {
                line,
                ticker,
                price: close,
            });
        }
        let sector = rec.get(3).filter(|s| !s.is_empty()).map(str::to_string);

        let entry = raw.entry(ticker.clone()).or_insert_with(|| RawSeries {
            sector: None,
            cells: BTreeMap::new(),
        });
        if entry.sector.is_none() {
            entry.sector = sector;
        }
        if entry.cells.insert(day, close).is_some() {
            return Err(MarketError::Parse {
                line,
                msg: format!("duplicate row for {ticker} on day {day}"),
            });
        }
        max_day = Some(max_day.map_or(day, |m| m.max(day)));
    }

    let index_raw = raw.remove(INDEX_TICKER).ok_or(MarketError::MissingIndex)?;
    let len = max_day.map_or(0, |d| d + 1);
    let index = fill_series(INDEX_TICKER, None, index_raw.cells, len)?;
    let stocks = raw
        .into_iter()
        .map(|(ticker, r)| fill_series(&ticker, r.sector, r.cells, len))
        .collect::<Result<Vec<_>, _>>()?;
    let market = MarketData::new(index, stocks)?;
    if market.fill_count() > 0 {
        log::info!("forward-filled {} missing price cells", market.fill_count());
    }
    Ok(market)
}

fn fill_series(
    ticker: &str,
    sector: Option<String>,
    cells: BTreeMap<usize, f64>,
    len: usize,
) -> Result<PriceSeries, MarketError> {
    let mut closes = Vec::with_capacity(len);
    let mut filled = Vec::with_capacity(len);
    for t in 0..len {
        match cells.get(&t) {
            Some(&p) => {
                closes.push(p);
                filled.push(false);
            }
            None => {
                let prev = *closes.last().ok_or_else(|| MarketError::LeadingGap {
                    ticker: ticker.to_string(),
                })?;
                closes.push(prev);
                filled.push(true);
            }
        }
    }
    Ok(PriceSeries {
        ticker: ticker.to_string(),
        sector,
        closes,
        filled,
    })
}
