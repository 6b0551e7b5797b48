//! Comparison table rendering (text, CSV, JSON).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{MetricsReport, TestResult};

/// `***`, `**` or `*` at the 0.001 / 0.01 / 0.05 levels.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Four decimals followed by significance stars.
pub fn format_p_value(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.4}{}", significance_stars(p)),
        None => "---".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub metrics: MetricsReport,
    /// Tests on gross daily returns.
    pub wilcoxon: Option<TestResult>,
    pub t_test: Option<TestResult>,
    /// Tests on daily abnormal returns.
    pub wilcoxon_abnormal: Option<TestResult>,
    pub t_test_abnormal: Option<TestResult>,
    /// Free-form parameter echo, e.g. thresholds used.
    #[serde(default)]
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn pct(x: f64) -> String {
    format!("{:.4} %", 100.0 * x)
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "---".into(), |v| format!("{v:.digits$}"))
}

const COLUMNS: [&str; 17] = [
    "strategy",
    "mean",
    "median",
    "n_pos",
    "n_neg",
    "trades",
    "delta_trades",
    "abn_mean",
    "abn_median",
    "volatility",
    "mean_net",
    "sharpe",
    "cv",
    "wilcoxon_p",
    "t_test_p",
    "wilcoxon_abn_p",
    "t_test_abn_p",
];

impl ComparisonRow {
    fn cells(&self) -> Vec<String> {
        let m = &self.metrics;
        vec![
            self.strategy.clone(),
            pct(m.mean_return),
            pct(m.median_return),
            m.n_positive.to_string(),
            m.n_negative.to_string(),
            m.n_trades.to_string(),
            m.delta_trades.map_or_else(|| "---".into(), |d| format!("{d:.2} d")),
            pct(m.mean_abnormal),
            pct(m.median_abnormal),
            opt(m.volatility, 5),
            pct(m.mean_net_of_fees),
            opt(m.sharpe, 4),
            opt(m.coefficient_of_variation, 2),
            format_p_value(self.wilcoxon.map(|t| t.p_value)),
            format_p_value(self.t_test.map(|t| t.p_value)),
            format_p_value(self.wilcoxon_abnormal.map(|t| t.p_value)),
            format_p_value(self.t_test_abnormal.map(|t| t.p_value)),
        ]
    }
}

impl ComparisonTable {
    /// Column-aligned plain text, one row per strategy.
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self.rows.iter().map(ComparisonRow::cells).collect();
        let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i == 0 {
                    let _ = write!(out, "{c:<w$}");
                } else {
                    let _ = write!(out, "  {c:>w$}");
                }
            }
            out.push('\n');
        };
        let header: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
        line(&mut out, &header);
        let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for r in &rows {
            line(&mut out, r);
        }
        out.push_str("significance: *** p<0.001, ** p<0.01, * p<0.05\n");
        for r in self.rows.iter().filter(|r| !r.params.is_empty()) {
            let _ = writeln!(out, "{}: {}", r.strategy, r.params);
        }
        out
    }

    /// Machine-readable CSV with raw (unformatted) numbers.
    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push_str(",params\n");
        let num = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        for r in &self.rows {
            let m = &r.metrics;
            let cells = [
                r.strategy.clone(),
                m.mean_return.to_string(),
                m.median_return.to_string(),
                m.n_positive.to_string(),
                m.n_negative.to_string(),
                m.n_trades.to_string(),
                num(m.delta_trades),
                m.mean_abnormal.to_string(),
                m.median_abnormal.to_string(),
                num(m.volatility),
                m.mean_net_of_fees.to_string(),
                num(m.sharpe),
                num(m.coefficient_of_variation),
                num(r.wilcoxon.map(|t| t.p_value)),
                num(r.t_test.map(|t| t.p_value)),
                num(r.wilcoxon_abnormal.map(|t| t.p_value)),
                num(r.t_test_abnormal.map(|t| t.p_value)),
                csv_field(&r.params),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
