//! One-sided location tests (H1: mean / centre > 0).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::{mean, volatility, AnalyticsError};

/// Largest effective sample size whose Wilcoxon p-value is computed from the
/// exact null distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
}

/// One-sample t-test of H0: mean = 0 against H1: mean > 0.
pub fn t_test_one_sided(x: &[f64]) -> Result<TestResult, AnalyticsError> {
    let n = x.len();
    let sd = volatility(x)?;
    if sd == 0.0 {
        return Err(AnalyticsError::Undefined("t statistic of a zero-variance sample"));
    }
    let t = mean(x) / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let p = dist.sf(t).clamp(0.0, 1.0);
    Ok(TestResult {
        statistic: t,
        p_value: p,
        n_effective: n,
    })
}

/// Average ranks of `|x|` (1-based), doubled so that tied ranks stay integral.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let n = abs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // positions i..=j share rank ((i+1) + (j+1)) / 2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups among sorted ranks.
fn tie_groups(ranks: &[u64]) -> Vec<usize> {
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        out.push(j);
        i += j;
    }
    out
}

/// Exact upper tail `P(W+ >= w)` under the sign-symmetric null, counting the
/// distribution of doubled rank sums over all sign patterns.
fn exact_upper_tail(doubled: &[u64], w_doubled: u64) -> f64 {
    let total: u64 = doubled.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(doubled.len() as i32);
    let tail: f64 = counts[w_doubled as usize..].iter().sum();
    tail / all
}

/// Wilcoxon signed-rank test of symmetry about 0 against a positive shift.
///
/// Zeros are dropped and `n_effective` counts what is left. Up to
/// [`WILCOXON_EXACT_MAX_N`] observations use the exact null distribution;
/// beyond that a normal approximation with tie and continuity corrections.
pub fn wilcoxon_one_sided(x: &[f64]) -> Result<TestResult, AnalyticsError> {
    let nonzero: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
    if nonzero.is_empty() {
        return Err(AnalyticsError::Undefined("Wilcoxon test without non-zero observations"));
    }
    let abs: Vec<f64> = nonzero.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w_doubled: u64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let statistic = w_doubled as f64 / 2.0;
    let n = nonzero.len();
    let p_value = if n <= WILCOXON_EXACT_MAX_N {
        exact_upper_tail(&ranks, w_doubled)
    } else {
        normal_upper_tail(statistic, n, &ranks)
    };
    Ok(TestResult {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        n_effective: n,
    })
}

/// Normal approximation of `P(W+ >= w)` with tie-corrected variance and a
/// continuity correction of one half.
pub(crate) fn normal_upper_tail(w: f64, n: usize, doubled_ranks: &[u64]) -> f64 {
    let nf = n as f64;
    let mean_w = nf * (nf + 1.0) / 4.0;
    let tie_adj: f64 = tie_groups(doubled_ranks)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_adj;
    if var <= 0.0 {
        return if w > mean_w { 0.0 } else { 1.0 };
    }
    let z = (w - mean_w - 0.5) / var.sqrt();
    Normal::standard().sf(z)
}

/// Normal-approximation p-value for any sample size, exposed so callers can
/// compare it with the exact path.
pub fn wilcoxon_normal_p(x: &[f64]) -> Result<f64, AnalyticsError> {
    let nonzero: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
    if nonzero.is_empty() {
        return Err(AnalyticsError::Undefined("Wilcoxon test without non-zero observations"));
    }
    let abs: Vec<f64> = nonzero.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w: u64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| *r)
        .sum();
    Ok(normal_upper_tail(w as f64 / 2.0, nonzero.len(), &ranks))
}
