//! Rolling-window out-of-sample forecasting and backtest aggregation.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::backtest::{BacktestReport, DEFAULT_DQ_LAGS};
use crate::error::{Error, Result};
use crate::market_data::DailyObservation;
use crate::models::{fit_models, FitOptions, ModelKind};

#[derive(Debug, Clone)]
pub struct RollingConfig {
    /// In-sample length of each fit.
    pub window: usize,
    /// Refit every `k` target days; intermediate days reuse the last fit.
    pub refit_every: usize,
    pub dq_lags: usize,
    pub seed: u64,
    pub fit: FitOptions<f64>,
}

impl RollingConfig {
    pub fn new(window: usize) -> Self {
        Self { window, refit_every: 1, dq_lags: DEFAULT_DQ_LAGS, seed: 0, fit: FitOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRecord {
    pub day: usize,
    pub y: f64,
    pub q_hat: f64,
    pub hit: bool,
}

#[derive(Debug, Clone)]
pub struct RollingResult {
    pub model: ModelKind,
    pub tau: f64,
    pub forecasts: Vec<ForecastRecord>,
    /// `(day, reason)` for every target day without a forecast.
    pub failures: Vec<(usize, String)>,
    pub report: Option<BacktestReport>,
    /// Why the report could not be computed, if it could not.
    pub report_error: Option<String>,
}

/// Rolling backtest of a single model at a single level.
pub fn rolling_backtest(obs: &[DailyObservation<f64>], model: ModelKind, tau: f64, cfg: &RollingConfig) -> Result<RollingResult> {
    Ok(rolling_backtest_many(obs, &[model], &[tau], cfg)?.pop().expect("one result"))
}

/// Rolling backtest of every `(model, tau)` pair. For each target day `t`
/// beyond the first `window` days, models are fitted on days `t-window..t-1`
/// and forecast day `t`. Results are ordered model-major.
pub fn rolling_backtest_many(obs: &[DailyObservation<f64>], models: &[ModelKind], taus: &[f64], cfg: &RollingConfig) -> Result<Vec<RollingResult>> {
    if cfg.window == 0 || obs.len() <= cfg.window {
        return Err(Error::Config(format!("window {} must be positive and shorter than the panel ({} days)", cfg.window, obs.len())));
    }
    if cfg.refit_every == 0 {
        return Err(Error::Config("refit interval must be at least 1".into()));
    }
    if models.is_empty() || taus.is_empty() {
        return Err(Error::Config("no models or quantile levels requested".into()));
    }
    let w = cfg.window;
    let targets: Vec<usize> = (w..obs.len()).collect();
    let blocks: Vec<&[usize]> = targets.chunks(cfg.refit_every).collect();

    // Each block: fit once on the window before its first target, forecast every target in it.
    type Cell = std::result::Result<f64, String>;
    let per_block: Vec<Vec<Vec<Vec<Cell>>>> = blocks
        .par_iter()
        .map(|block| {
            let t0 = block[0];
            let fits = fit_models(&obs[t0 - w..t0], models, taus, cfg.seed.wrapping_add(t0 as u64), &cfg.fit);
            fits.cells
                .iter()
                .map(|per_tau| {
                    per_tau
                        .iter()
                        .map(|fit| {
                            block
                                .iter()
                                .map(|&t| match fit {
                                    Ok(f) => f.forecast(&obs[t - w..t]).map_err(|e| e.to_string()),
                                    Err(e) => Err(format!("fit failed: {e}")),
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(models.len() * taus.len());
    for (mi, &model) in models.iter().enumerate() {
        for (ti, &tau) in taus.iter().enumerate() {
            let mut forecasts = Vec::new();
            let mut failures = Vec::new();
            for (block, cells) in blocks.iter().zip(&per_block) {
                for (&t, cell) in block.iter().zip(&cells[mi][ti]) {
                    let day = obs[t].day_index;
                    match cell {
                        Ok(q) if q.is_finite() => {
                            let y = obs[t].y;
                            forecasts.push(ForecastRecord { day, y, q_hat: *q, hit: y < *q });
                        }
                        Ok(q) => failures.push((day, format!("non-finite forecast {q}"))),
                        Err(e) => failures.push((day, e.clone())),
                    }
                }
            }
            let y: Vec<f64> = forecasts.iter().map(|f| f.y).collect();
            let q: Vec<f64> = forecasts.iter().map(|f| f.q_hat).collect();
            let (report, report_error) = match BacktestReport::evaluate(model.name(), &y, &q, tau, cfg.dq_lags) {
                Ok(mut r) => {
                    r.skipped_days = failures.len();
                    (Some(r), None)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(RollingResult { model, tau, forecasts, failures, report, report_error });
        }
    }
    Ok(out)
}

/// Writes `day,y,q_hat,hit`.
pub fn write_forecast_csv<W: Write>(mut out: W, forecasts: &[ForecastRecord]) -> Result<()> {
    let mut buf = String::from("day,y,q_hat,hit\n");
    for f in forecasts {
        writeln!(buf, "{},{},{},{}", f.day, f.y, f.q_hat, f.hit as u8).unwrap();
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}
