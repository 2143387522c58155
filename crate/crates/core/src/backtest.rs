//! Quantile loss and coverage tests for VaR forecast series.

use std::fmt::{self, Write as _};
use std::io::Write;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::quantile_regression::{check_loss, invert};
use crate::special::chi2_sf;

/// Lags of the hit sequence used by the dynamic quantile test unless overridden.
pub const DEFAULT_DQ_LAGS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct HitSeries {
    pub hits: Vec<bool>,
    pub tau: f64,
    pub forecasts: Vec<f64>,
}

impl HitSeries {
    pub fn new(hits: Vec<bool>, tau: f64, forecasts: Vec<f64>) -> Result<Self> {
        if hits.len() != forecasts.len() {
            return Err(Error::Alignment(format!("{} hits but {} forecasts", hits.len(), forecasts.len())));
        }
        check_tau(tau)?;
        Ok(Self { hits, tau, forecasts })
    }

    /// Hit `I_t = 1(y_t < q_t)`.
    pub fn from_forecasts<T: Scalar>(y: &[T], q: &[T], tau: f64) -> Result<Self> {
        if y.len() != q.len() {
            return Err(Error::Alignment(format!("{} returns but {} forecasts", y.len(), q.len())));
        }
        let hits = y.iter().zip(q).map(|(a, b)| a < b).collect();
        Self::new(hits, tau, q.iter().map(|v| v.as_f64()).collect())
    }

    pub fn count(&self) -> usize {
        self.hits.iter().filter(|h| **h).count()
    }

    pub fn rate(&self) -> f64 {
        if self.hits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.hits.len() as f64
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {tau}")));
    }
    Ok(())
}

/// Mean check loss of `y - q`.
pub fn quantile_loss<T: Scalar>(y: &[T], q: &[T], tau: T) -> Result<T> {
    if y.len() != q.len() {
        return Err(Error::Alignment(format!("{} returns but {} forecasts", y.len(), q.len())));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("quantile loss of an empty series".into()));
    }
    let total = y.iter().zip(q).fold(T::zero(), |s, (&a, &b)| s + check_loss(tau, a - b));
    Ok(total / T::from_usize_lossy(y.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `k * ln(p)` with `0 * ln(0) = 0`.
fn xlogy(k: f64, p: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * p.ln()
    }
}

fn bernoulli_loglik(x: f64, n: f64, p: f64) -> f64 {
    xlogy(x, p) + xlogy(n - x, 1.0 - p)
}

/// Unconditional coverage likelihood ratio, chi-squared with one degree of freedom.
pub fn lruc_test(hits: &[bool], tau: f64) -> Result<TestResult> {
    check_tau(tau)?;
    if hits.is_empty() {
        return Err(Error::InsufficientData("coverage test needs at least one observation".into()));
    }
    let n = hits.len() as f64;
    let x = hits.iter().filter(|h| **h).count() as f64;
    let stat = (2.0 * (bernoulli_loglik(x, n, x / n) - bernoulli_loglik(x, n, tau))).max(0.0);
    Ok(TestResult { statistic: stat, p_value: chi2_sf(stat, 1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrccResult {
    pub test: TestResult,
    /// `[n00, n01, n10, n11]`.
    pub transitions: [usize; 4],
    /// A row of the transition table had no observations.
    pub empty_row: bool,
}

/// Markov conditional coverage likelihood ratio, chi-squared with two degrees of freedom.
pub fn lrcc_test(hits: &[bool], tau: f64) -> Result<LrccResult> {
    check_tau(tau)?;
    if hits.len() < 2 {
        return Err(Error::InsufficientData("conditional coverage test needs at least two observations".into()));
    }
    let mut t = [0usize; 4];
    for w in hits.windows(2) {
        t[2 * w[0] as usize + w[1] as usize] += 1;
    }
    let [n00, n01, n10, n11] = t.map(|v| v as f64);
    let mut ll_markov = 0.0;
    let mut empty_row = false;
    for (stay, leave) in [(n00, n01), (n10, n11)] {
        let row = stay + leave;
        if row == 0.0 {
            empty_row = true;
        } else {
            ll_markov += bernoulli_loglik(leave, row, leave / row);
        }
    }
    let n = (hits.len() - 1) as f64;
    let x = n01 + n11;
    let stat = (2.0 * (ll_markov - bernoulli_loglik(x, n, tau))).max(0.0);
    Ok(LrccResult { test: TestResult { statistic: stat, p_value: chi2_sf(stat, 2.0) }, transitions: t, empty_row })
}

/// Dynamic quantile test: regress demeaned hits on a constant, `lags` own lags
/// and the forecast; chi-squared with `lags + 2` degrees of freedom.
pub fn dq_test(hits: &[bool], forecasts: &[f64], tau: f64, lags: usize) -> Result<TestResult> {
    check_tau(tau)?;
    if hits.len() != forecasts.len() {
        return Err(Error::Alignment(format!("{} hits but {} forecasts", hits.len(), forecasts.len())));
    }
    let n = hits.len();
    if n <= lags + 10 {
        return Err(Error::InsufficientData(format!("dynamic quantile test with {lags} lags needs more than {} observations", lags + 10)));
    }
    let k = lags + 2;
    let demeaned: Vec<f64> = hits.iter().map(|&h| h as u8 as f64 - tau).collect();
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    let mut row = vec![0.0; k];
    for i in lags..n {
        row[0] = 1.0;
        for l in 1..=lags {
            row[l] = demeaned[i - l];
        }
        row[k - 1] = forecasts[i];
        for a in 0..k {
            xty[a] += row[a] * demeaned[i];
            for b in 0..k {
                xtx[a * k + b] += row[a] * row[b];
            }
        }
    }
    let inv = invert(&xtx, k).ok_or_else(|| Error::Singular("dynamic quantile regressors are collinear".into()))?;
    let mut quad = 0.0;
    for a in 0..k {
        for b in 0..k {
            quad += xty[a] * inv[a * k + b] * xty[b];
        }
    }
    let stat = (quad / (tau * (1.0 - tau))).max(0.0);
    Ok(TestResult { statistic: stat, p_value: chi2_sf(stat, k as f64) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub model: String,
    pub tau: f64,
    pub forecasts: usize,
    pub avg_quantile_loss: f64,
    /// Average loss divided by the reference model's, once normalized.
    pub relative_loss: Option<f64>,
    pub hit_rate: f64,
    pub lruc: TestResult,
    pub lrcc: TestResult,
    pub lrcc_empty_row: bool,
    pub dq: Option<TestResult>,
    /// Reason the DQ test could not be computed.
    pub dq_error: Option<String>,
    pub skipped_days: usize,
}

impl BacktestReport {
    /// Scores an aligned series of returns and forecasts.
    pub fn evaluate(model: &str, y: &[f64], q: &[f64], tau: f64, lags: usize) -> Result<Self> {
        let series = HitSeries::from_forecasts(y, q, tau)?;
        let lrcc = lrcc_test(&series.hits, tau)?;
        let (dq, dq_error) = match dq_test(&series.hits, q, tau, lags) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok(Self {
            model: model.to_string(),
            tau,
            forecasts: y.len(),
            avg_quantile_loss: quantile_loss(y, q, tau)?,
            relative_loss: None,
            hit_rate: series.rate(),
            lruc: lruc_test(&series.hits, tau)?,
            lrcc: lrcc.test,
            lrcc_empty_row: lrcc.empty_row,
            dq,
            dq_error,
            skipped_days: 0,
        })
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.tau,
            self.avg_quantile_loss,
            opt(self.relative_loss),
            self.hit_rate,
            self.lruc.statistic,
            self.lruc.p_value,
            self.lrcc.statistic,
            self.lrcc.p_value,
            opt(self.dq.map(|t| t.statistic)),
            opt(self.dq.map(|t| t.p_value)),
        )
    }
}

impl fmt::Display for BacktestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model={}", self.model)?;
        writeln!(f, "tau={}", self.tau)?;
        writeln!(f, "forecasts={}", self.forecasts)?;
        writeln!(f, "skipped_days={}", self.skipped_days)?;
        writeln!(f, "avg_loss={}", self.avg_quantile_loss)?;
        if let Some(r) = self.relative_loss {
            writeln!(f, "rel_loss={r}")?;
        }
        writeln!(f, "hit_rate={}", self.hit_rate)?;
        writeln!(f, "lruc={} lruc_p={}", self.lruc.statistic, self.lruc.p_value)?;
        writeln!(f, "lrcc={} lrcc_p={}{}", self.lrcc.statistic, self.lrcc.p_value, if self.lrcc_empty_row { " (empty transition row)" } else { "" })?;
        match (&self.dq, &self.dq_error) {
            (Some(t), _) => write!(f, "dq={} dq_p={}", t.statistic, t.p_value),
            (None, Some(e)) => write!(f, "dq=NA ({e})"),
            (None, None) => write!(f, "dq=NA"),
        }
    }
}

pub const REPORT_CSV_HEADER: &str = "model,tau,avg_loss,rel_loss,hit_rate,lruc,lruc_p,lrcc,lrcc_p,dq,dq_p";

/// Divides each report's loss by the loss of `reference` at the same level.
pub fn normalize_relative(reports: &mut [BacktestReport], reference: &str) -> Result<()> {
    let refs: Vec<(f64, f64)> = reports.iter().filter(|r| r.model == reference).map(|r| (r.tau, r.avg_quantile_loss)).collect();
    for r in reports.iter_mut() {
        let base = refs
            .iter()
            .find(|(t, _)| (t - r.tau).abs() < 1e-9)
            .ok_or_else(|| Error::Config(format!("no {reference} report at tau={} to normalize against", r.tau)))?;
        r.relative_loss = Some(r.avg_quantile_loss / base.1);
    }
    Ok(())
}

pub fn write_report_csv<W: Write>(mut out: W, reports: &[BacktestReport]) -> Result<()> {
    let mut buf = String::from(REPORT_CSV_HEADER);
    buf.push('\n');
    for r in reports {
        writeln!(buf, "{}", r.csv_row()).unwrap();
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}
