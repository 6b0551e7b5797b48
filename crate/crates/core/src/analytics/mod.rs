//! Performance metrics of daily return series and one-sided tests.

mod hypothesis;
mod report;

pub use hypothesis::{t_test_one_sided, wilcoxon_normal_p, wilcoxon_one_sided, TestResult, WILCOXON_EXACT_MAX_N};
pub use report::{format_p_value, significance_stars, ComparisonRow, ComparisonTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("need at least {need} observations, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Median; even-length samples average the two central order statistics.
pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample standard deviation (divisor `n - 1`).
pub fn volatility(returns: &[f64]) -> Result<f64, AnalyticsError> {
    let n = returns.len();
    if n < 2 {
        return Err(AnalyticsError::TooShort { need: 2, got: n });
    }
    let m = mean(returns);
    let ss: f64 = returns.iter().map(|r| (r - m) * (r - m)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Excess mean over the index divided by the strategy's volatility.
pub fn sharpe(returns: &[f64], index_returns: &[f64]) -> Result<f64, AnalyticsError> {
    if returns.len() != index_returns.len() {
        return Err(AnalyticsError::LengthMismatch(returns.len(), index_returns.len()));
    }
    let vol = volatility(returns)?;
    if vol == 0.0 {
        return Err(AnalyticsError::Undefined("sharpe ratio of a zero-volatility series"));
    }
    Ok((mean(returns) - mean(index_returns)) / vol)
}

/// Volatility over mean of daily returns.
pub fn coefficient_of_variation(returns: &[f64]) -> Result<f64, AnalyticsError> {
    let vol = volatility(returns)?;
    let m = mean(returns);
    if m == 0.0 {
        return Err(AnalyticsError::Undefined("coefficient of variation at zero mean"));
    }
    Ok(vol / m)
}

/// Geometric per-year rate of a total return earned over `years`.
pub fn annualized(total_return: f64, years: f64) -> Result<f64, AnalyticsError> {
    if total_return <= -1.0 {
        return Err(AnalyticsError::InvalidArgument("total return must exceed -100 %"));
    }
    if years <= 0.0 {
        return Err(AnalyticsError::InvalidArgument("years must be positive"));
    }
    Ok((1.0 + total_return).powf(1.0 / years) - 1.0)
}

/// Days per trade; `None` when nothing was traded.
pub fn delta_trades(total_days: usize, n_trades: usize) -> Option<f64> {
    (n_trades > 0).then(|| total_days as f64 / n_trades as f64)
}

/// Market-adjusted abnormal returns `r_t - r_{m,t}`.
pub fn abnormal(gross_returns: &[f64], index_returns: &[f64]) -> Result<Vec<f64>, AnalyticsError> {
    if gross_returns.len() != index_returns.len() {
        return Err(AnalyticsError::LengthMismatch(gross_returns.len(), index_returns.len()));
    }
    Ok(gross_returns.iter().zip(index_returns).map(|(r, m)| r - m).collect())
}

/// Business days per year used for annualization.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// One strategy's summary over its evaluation window. Undefined ratios are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_days: usize,
    pub mean_return: f64,
    pub median_return: f64,
    pub mean_abnormal: f64,
    pub median_abnormal: f64,
    pub volatility: Option<f64>,
    pub sharpe: Option<f64>,
    pub coefficient_of_variation: Option<f64>,
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_zero: usize,
    pub n_trades: usize,
    pub delta_trades: Option<f64>,
    pub mean_net_of_fees: f64,
    pub annualized_return: Option<f64>,
}

impl MetricsReport {
    /// Summarizes window-aligned gross, net and index return slices.
    pub fn compute(gross: &[f64], net: &[f64], index: &[f64], n_trades: usize) -> Result<Self, AnalyticsError> {
        let n = gross.len();
        if net.len() != n {
            return Err(AnalyticsError::LengthMismatch(n, net.len()));
        }
        let ab = abnormal(gross, index)?;
        if n == 0 {
            return Err(AnalyticsError::TooShort { need: 1, got: 0 });
        }
        let total: f64 = net.iter().map(|r| 1.0 + r).product::<f64>() - 1.0;
        Ok(Self {
            n_days: n,
            mean_return: mean(gross),
            median_return: median(gross),
            mean_abnormal: mean(&ab),
            median_abnormal: median(&ab),
            volatility: volatility(gross).ok(),
            sharpe: sharpe(gross, index).ok(),
            coefficient_of_variation: coefficient_of_variation(gross).ok(),
            n_positive: gross.iter().filter(|r| **r > 0.0).count(),
            n_negative: gross.iter().filter(|r| **r < 0.0).count(),
            n_zero: gross.iter().filter(|r| **r == 0.0).count(),
            n_trades,
            delta_trades: delta_trades(n, n_trades),
            mean_net_of_fees: mean(net),
            annualized_return: annualized(total, n as f64 / TRADING_DAYS_PER_YEAR).ok(),
        })
    }
}
