//! Announcement stream, lexicon scoring and sentiment thresholds.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::MarketData;

#[derive(Debug, Error)]
pub enum NewsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("cannot compute thresholds of an empty sample")]
    EmptySample,
    #[error("quantile {0} outside (0, 0.5]")]
    BadQuantile(f64),
}

impl NewsError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, NewsError::Io(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Announcement {
    pub day: usize,
    pub ticker: String,
    #[serde(default)]
    pub text: String,
    pub sentiment: f64,
}

/// Announcements sorted by day; same-day items keep arrival order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct NewsFeed {
    announcements: Vec<Announcement>,
}

impl NewsFeed {
    /// Sorts stably by day, so arrival order breaks same-day ties.
    pub fn new(mut announcements: Vec<Announcement>) -> Self {
        announcements.sort_by_key(|a| a.day);
        Self { announcements }
    }

    pub fn announcements(&self) -> &[Announcement] {
        &self.announcements
    }

    pub fn len(&self) -> usize {
        self.announcements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.announcements.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&Announcement> {
        self.announcements.get(k)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Announcement> {
        self.announcements.iter()
    }

    pub fn sentiments(&self) -> Vec<f64> {
        self.announcements.iter().map(|a| a.sentiment).collect()
    }

    /// Announcements whose day lies in `[start, end]`.
    pub fn in_window(&self, start: usize, end: usize) -> NewsFeed {
        NewsFeed {
            announcements: self
                .announcements
                .iter()
                .filter(|a| a.day >= start && a.day <= end)
                .cloned()
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), NewsError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| NewsError::Io(std::io::Error::other(e));
        w.write_record(["day", "ticker", "sentiment", "text"]).map_err(io)?;
        for a in &self.announcements {
            w.write_record([
                a.day.to_string(),
                a.ticker.clone(),
                a.sentiment.to_string(),
                a.text.clone(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<'a> IntoIterator for &'a NewsFeed {
    type Item = &'a Announcement;
    type IntoIter = std::slice::Iter<'a, Announcement>;

    fn into_iter(self) -> Self::IntoIter {
        self.announcements.iter()
    }
}

/// Anything that maps announcement text to a polarity score.
pub trait SentimentScorer {
    fn score(&self, text: &str) -> f64;
}

/// Positive and negative word lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl Lexicon {
    pub fn new<I, J, S, T>(positive: I, negative: J) -> Result<Self, NewsError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let positive: HashSet<String> = positive
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        let negative: HashSet<String> = negative
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if let Some(w) = positive.intersection(&negative).next() {
            return Err(NewsError::Lexicon(format!("`{w}` is both positive and negative")));
        }
        Ok(Self { positive, negative })
    }

    /// Parses the plain-text format: one word per line under `[positive]`
    /// and `[negative]` section headers. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, NewsError> {
        enum Section {
            None,
            Pos,
            Neg,
        }
        let mut section = Section::None;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.to_lowercase().as_str() {
                "[positive]" => section = Section::Pos,
                "[negative]" => section = Section::Neg,
                _ => match section {
                    Section::Pos => pos.push(line.to_string()),
                    Section::Neg => neg.push(line.to_string()),
                    Section::None => {
                        return Err(NewsError::Lexicon(format!(
                            "line {}: word outside a [positive]/[negative] section",
                            i + 1
                        )))
                    }
                },
            }
        }
        let lex = Self::new(pos, neg)?;
        if lex.is_empty() {
            return Err(NewsError::Lexicon("lexicon has no words".into()));
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NewsError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }
}

impl SentimentScorer for Lexicon {
    fn score(&self, text: &str) -> f64 {
        score_sentiment(text, self)
    }
}

/// Net positivity: `(#positive - #negative) / max(1, #tokens)`.
///
/// Tokens are lowercased runs of alphanumeric characters.
pub fn score_sentiment(text: &str, lexicon: &Lexicon) -> f64 {
    let lower = text.to_lowercase();
    let mut n = 0usize;
    let mut net = 0i64;
    for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        n += 1;
        if lexicon.positive.contains(tok) {
            net += 1;
        } else if lexicon.negative.contains(tok) {
            net -= 1;
        }
    }
    net as f64 / n.max(1) as f64
}

/// Keeps only the earliest announcement of each day.
pub fn first_per_day(feed: &NewsFeed) -> NewsFeed {
    let mut out: Vec<Announcement> = Vec::with_capacity(feed.len());
    for a in feed {
        if out.last().is_none_or(|last| last.day != a.day) {
            out.push(a.clone());
        }
    }
    NewsFeed { announcements: out }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub theta_minus: f64,
    pub theta_plus: f64,
}

impl ThresholdPair {
    pub fn new(theta_minus: f64, theta_plus: f64) -> Self {
        assert!(theta_minus <= theta_plus, "theta_minus must not exceed theta_plus");
        Self {
            theta_minus,
            theta_plus,
        }
    }
}

/// Nearest-rank empirical quantile of an ascending sample (1-based rank
/// `ceil(p * n)`, at least 1).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    // Guards against products like 0.9 * 10 landing just above an integer.
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Lower and upper sentiment thresholds at the `q` and `1 - q` quantiles.
pub fn quantile_thresholds(scores: &[f64], q: f64) -> Result<ThresholdPair, NewsError> {
    if scores.is_empty() {
        return Err(NewsError::EmptySample);
    }
    if !(q > 0.0 && q <= 0.5) {
        return Err(NewsError::BadQuantile(q));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ThresholdPair {
        theta_minus: nearest_rank(&sorted, q),
        theta_plus: nearest_rank(&sorted, 1.0 - q),
    })
}

/// Announcements for tickers tagged with `sector`.
pub fn sector_filter(feed: &NewsFeed, market: &MarketData, sector: &str) -> NewsFeed {
    let known = market.stocks.values().any(|s| s.sector.as_deref() == Some(sector));
    if !known {
        log::warn!("sector `{sector}` not present in market data");
        return NewsFeed::default();
    }
    NewsFeed {
        announcements: feed
            .iter()
            .filter(|a| market.sector_of(&a.ticker) == Some(sector))
            .cloned()
            .collect(),
    }
}

/// Loads a news CSV (`day,ticker,sentiment[,text]`).
///
/// Rows with an empty sentiment cell are scored from their text with
/// `scorer`. When `market` is given, rows outside its calendar or naming an
/// unknown ticker are skipped with a warning.
pub fn load_news(
    path: impl AsRef<Path>,
    scorer: Option<&dyn SentimentScorer>,
    market: Option<&MarketData>,
) -> Result<NewsFeed, NewsError> {
    let file = std::fs::File::open(path)?;
    read_news(file, scorer, market)
}

pub fn read_news<R: Read>(
    reader: R,
    scorer: Option<&dyn SentimentScorer>,
    market: Option<&MarketData>,
) -> Result<NewsFeed, NewsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| NewsError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.len() < 3 || header[..3] != ["day", "ticker", "sentiment"] {
        return Err(NewsError::Parse {
            line: 1,
            msg: "expected header `day,ticker,sentiment[,text]`".into(),
        });
    }

    let mut out = Vec::new();
    let mut skipped = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| NewsError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() < 3 {
            return Err(NewsError::Parse {
                line,
                msg: format!("expected at least 3 fields, found {}", rec.len()),
            });
        }
        let day: usize = rec[0].trim().parse().map_err(|_| NewsError::Parse {
            line,
            msg: format!("bad day `{}`", &rec[0]),
        })?;
        let ticker = rec[1].trim().to_string();
        let text = rec.get(3).unwrap_or("").to_string();
        let cell = rec[2].trim();
        let sentiment = if cell.is_empty() {
            let scorer = scorer.ok_or_else(|| NewsError::Parse {
                line,
                msg: "empty sentiment and no lexicon supplied".into(),
            })?;
            scorer.score(&text)
        } else {
            cell.parse::<f64>()
                .ok()
                .filter(|s| s.is_finite())
                .ok_or_else(|| NewsError::Parse {
                    line,
                    msg: format!("bad sentiment `{cell}`"),
                })?
        };
        if let Some(m) = market {
            if day >= m.len() || m.stock(&ticker).is_none() {
                log::debug!("line {line}: skipping announcement for {ticker} on day {day}");
                skipped += 1;
                continue;
            }
        }
        out.push(Announcement {
            day,
            ticker,
            text,
            sentiment,
        });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} announcements not matching market data");
    }
    Ok(NewsFeed::new(out))
}
