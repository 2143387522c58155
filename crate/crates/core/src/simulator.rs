//! Simulation of intraday panels from a realized-GARCH diffusion and Monte
//! Carlo experiments on the estimators.
//!
//! On day `i` the spot variance is `(w/lambda) h_i^2 (1+d_i)` during the session
//! and `((1-w)/(1-lambda)) h_i^2 (1+d_i)` overnight, so the session integrates to
//! `IV_i = w h_i^2 (1+d_i)`. The next conditional standard deviation follows the
//! recursion with `sqrt(IV_i)` and the simulated overnight return.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::competitors::{fit_qgarch_volatility, fit_rcaviar};
use crate::error::{Error, Result};
use crate::first_step::{fit_qmle_with, recursion_step, GarchParams, ParamBox, QmleOptions};
use crate::market_data::{build_daily_observations, DailyObservation, IntradayDay};
use crate::models::ModelKind;
use crate::num::lower_quantile_in_place;
use crate::quantile_regression::{fit_second_step, forecast_next, SecondStep};
use crate::special::normal_quantile;

/// Distribution of the variance shock `d_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShockDist {
    /// `d = X - 0.1` with `X` noncentral chi-squared; `df + noncentrality = 0.1`.
    NoncentralChiSquared { df: f64, noncentrality: f64 },
    /// `d = 0`.
    Zero,
}

impl Default for ShockDist {
    fn default() -> Self {
        ShockDist::NoncentralChiSquared { df: 0.05, noncentrality: 0.05 }
    }
}

/// Mean of the noncentral chi-squared draw before centering.
pub const SHOCK_MEAN: f64 = 0.1;

impl ShockDist {
    fn validate(&self) -> Result<()> {
        if let ShockDist::NoncentralChiSquared { df, noncentrality } = *self {
            if !(df >= 0.0 && noncentrality >= 0.0 && df + noncentrality > 0.0) {
                return Err(Error::Domain(format!("invalid shock distribution df={df}, noncentrality={noncentrality}")));
            }
            if ((df + noncentrality) - SHOCK_MEAN).abs() > 1e-12 {
                return Err(Error::Domain(format!("df + noncentrality must equal {SHOCK_MEAN}, got {}", df + noncentrality)));
            }
        }
        Ok(())
    }

    /// Draws `d`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ShockDist::Zero => 0.0,
            ShockDist::NoncentralChiSquared { df, noncentrality } => {
                // Poisson mixture of central chi-squared laws
                let k = if noncentrality > 0.0 {
                    Poisson::new(noncentrality / 2.0).expect("positive rate").sample(rng)
                } else {
                    0.0
                };
                let shape = 0.5 * (df + 2.0 * k);
                let x = if shape > 0.0 { Gamma::new(shape, 2.0).expect("positive shape").sample(rng) } else { 0.0 };
                x - SHOCK_MEAN
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub params: GarchParams<f64>,
    /// Share of daily variance realized during the session.
    pub w: f64,
    pub lambda: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub shock: ShockDist,
    /// Days simulated and discarded before recording.
    pub burn_in: usize,
    /// Initial log price.
    pub x0: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            params: GarchParams { omega: 1.0, gamma: 0.1, alpha: 0.5, beta: 0.2 },
            w: 0.75,
            lambda: 6.5 / 24.0,
            n: 500,
            m: 100,
            seed: 0,
            shock: ShockDist::default(),
            burn_in: 200,
            x0: 0.0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::Domain(format!("w must lie in (0,1), got {}", self.w)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Domain(format!("lambda must lie in (0,1), got {}", self.lambda)));
        }
        if self.n < 2 || self.m < 2 {
            return Err(Error::Domain(format!("need n >= 2 and m >= 2, got n={}, m={}", self.n, self.m)));
        }
        if !self.x0.is_finite() {
            return Err(Error::Domain("initial log price must be finite".into()));
        }
        self.shock.validate()
    }
}

/// Latent quantities behind a simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `h_1..h_n` of the recorded days.
    pub h: Vec<f64>,
    /// Session integrated variance `IV_i`.
    pub iv: Vec<f64>,
    pub d: Vec<f64>,
    /// Squared overnight return entering the recursion.
    pub ov: Vec<f64>,
    /// `h_{n+1}`.
    pub h_next: f64,
}

impl GroundTruth {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::from("day,h,iv,d,ov\n");
        for i in 0..self.h.len() {
            writeln!(buf, "{},{},{},{},{}", i + 1, self.h[i], self.iv[i], self.d[i], self.ov[i]).unwrap();
        }
        writeln!(buf, "# h_next={}", self.h_next).unwrap();
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Generates `cfg.n` days of session prices after `cfg.burn_in` discarded days.
pub fn simulate_panel(cfg: &DgpConfig) -> Result<(Vec<IntradayDay<f64>>, GroundTruth)> {
    cfg.validate()?;
    let p = cfg.params.to_array();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut h = cfg.params.omega / (1.0 - cfg.params.persistence());
    let mut x = cfg.x0;
    let m = cfg.m as f64;

    let mut days = Vec::with_capacity(cfg.n);
    let mut truth = GroundTruth {
        h: Vec::with_capacity(cfg.n),
        iv: Vec::with_capacity(cfg.n),
        d: Vec::with_capacity(cfg.n),
        ov: Vec::with_capacity(cfg.n),
        h_next: 0.0,
    };
    for k in 0..cfg.burn_in + cfg.n {
        let d = cfg.shock.sample(&mut rng);
        let var = h * h * (1.0 + d);
        let close_prev = x;
        let night_sd = ((1.0 - cfg.w) * var / m).sqrt();
        for _ in 0..cfg.m {
            let z: f64 = rng.sample(StandardNormal);
            x += night_sd * z;
        }
        let ov = (x - close_prev) * (x - close_prev);
        let session_sd = (cfg.w * var / m).sqrt();
        let mut prices = Vec::with_capacity(cfg.m + 1);
        prices.push(x);
        for _ in 0..cfg.m {
            let z: f64 = rng.sample(StandardNormal);
            x += session_sd * z;
            prices.push(x);
        }
        let iv = cfg.w * var;
        if k >= cfg.burn_in {
            let day_index = k - cfg.burn_in + 1;
            days.push(IntradayDay { day_index, log_prices: prices, close_prev, close_prev_imputed: false });
            truth.h.push(h);
            truth.iv.push(iv);
            truth.d.push(d);
            truth.ov.push(ov);
        }
        h = recursion_step(&p, h, iv.sqrt(), ov.sqrt());
    }
    truth.h_next = h;
    Ok((days, truth))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueQuantile {
    pub q: f64,
    /// Batch-means standard error of `q`.
    pub std_error: f64,
}

pub const MIN_TRUE_QUANTILE_REPS: usize = 100_000;
const QUANTILE_BATCHES: usize = 20;

/// Monte Carlo `tau`-quantile of `Z * sqrt(1 + d)`.
pub fn monte_carlo_true_quantile(shock: ShockDist, tau: f64, reps: usize, seed: u64) -> Result<TrueQuantile> {
    shock.validate()?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {tau}")));
    }
    if reps < MIN_TRUE_QUANTILE_REPS {
        return Err(Error::InsufficientData(format!("need at least {MIN_TRUE_QUANTILE_REPS} draws, got {reps}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<f64> = (0..reps)
        .map(|_| {
            let d = shock.sample(&mut rng);
            let z: f64 = rng.sample(StandardNormal);
            z * (1.0 + d).sqrt()
        })
        .collect();
    let per = reps / QUANTILE_BATCHES;
    let batch_q: Vec<f64> = draws.chunks_mut(per).take(QUANTILE_BATCHES).map(|c| lower_quantile_in_place(c, tau)).collect();
    let mean = batch_q.iter().sum::<f64>() / QUANTILE_BATCHES as f64;
    let var = batch_q.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (QUANTILE_BATCHES - 1) as f64;
    let q = lower_quantile_in_place(&mut draws, tau);
    Ok(TrueQuantile { q, std_error: (var / QUANTILE_BATCHES as f64).sqrt() })
}

/// Grid and settings of a Monte Carlo accuracy experiment.
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub taus: Vec<f64>,
    pub reps: usize,
    /// Models evaluated in the second step and forecast comparison. The first
    /// step is always evaluated when `Rg` or `Rr` is present.
    pub models: Vec<ModelKind>,
    /// Settings other than `n`, `m` and `seed` come from here.
    pub base: DgpConfig,
    pub true_quantile_reps: usize,
    pub qmle: QmleOptions<f64>,
}

/// Absolute errors of one estimated quantity across replications of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub n: usize,
    pub m: usize,
    /// `None` for first-step parameters.
    pub tau: Option<f64>,
    /// `qmle`, `rg`, `rr`, `qgarch`, `rcaviar` or `sq`.
    pub model: String,
    /// `omega`, `gamma`, `alpha`, `beta` or `forecast`.
    pub param: String,
    pub abs_errors: Vec<f64>,
    pub failures: usize,
}

impl ErrorSeries {
    pub fn mae(&self) -> f64 {
        self.abs_errors.iter().sum::<f64>() / self.abs_errors.len() as f64
    }

    pub fn median(&self) -> f64 {
        let mut v = self.abs_errors.clone();
        let k = v.len();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub series: Vec<ErrorSeries>,
    /// Monte Carlo `q_tau` per level.
    pub true_quantiles: Vec<(f64, TrueQuantile)>,
    /// Seed used for each `(n, m, replication)`.
    pub seeds: Vec<(usize, usize, usize, u64)>,
}

impl ExperimentResult {
    pub fn find(&self, n: usize, m: usize, tau: Option<f64>, model: &str, param: &str) -> Option<&ErrorSeries> {
        self.series.iter().find(|s| {
            s.n == n
                && s.m == m
                && s.model == model
                && s.param == param
                && match (s.tau, tau) {
                    (Some(a), Some(b)) => (a - b).abs() < 1e-9,
                    (None, None) => true,
                    _ => false,
                }
        })
    }

    /// Writes `n,m,tau,model,param,mae,reps_used`.
    pub fn write_mae_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::from("n,m,tau,model,param,mae,reps_used\n");
        for s in &self.series {
            let tau = s.tau.map(|t| t.to_string()).unwrap_or_default();
            let mae = if s.abs_errors.is_empty() { "NA".to_string() } else { s.mae().to_string() };
            writeln!(buf, "{},{},{},{},{},{},{}", s.n, s.m, tau, s.model, s.param, mae, s.abs_errors.len()).unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

const PARAM_NAMES: [&str; 4] = ["omega", "gamma", "alpha", "beta"];

/// Estimation errors of one replication, keyed like [`ErrorSeries`].
type RepErrors = Vec<((Option<usize>, String, String), std::result::Result<f64, String>)>;

fn replication(cfg: &DgpConfig, grid: &ExperimentGrid, q_true: &[(f64, TrueQuantile)]) -> Result<RepErrors> {
    let (days, truth) = simulate_panel(cfg)?;
    let obs: Vec<DailyObservation<f64>> = build_daily_observations(&days, &grid.taus)?;
    let theta = cfg.params.to_array();
    let mut out: RepErrors = Vec::new();
    let key = |ti: Option<usize>, model: &str, param: &str| (ti, model.to_string(), param.to_string());

    let two_step: Vec<ModelKind> = grid.models.iter().copied().filter(|m| matches!(m, ModelKind::Rg | ModelKind::Rr)).collect();
    let qmle = if two_step.is_empty() {
        None
    } else {
        let fit = fit_qmle_with(&obs, &ParamBox::default(), cfg.seed, &grid.qmle);
        for (k, name) in PARAM_NAMES.iter().enumerate() {
            let e = fit.as_ref().map(|f| (f.params.to_array()[k] - theta[k]).abs()).map_err(|e| e.to_string());
            out.push((key(None, "qmle", name), e));
        }
        Some(fit)
    };

    let y: Vec<f64> = obs.iter().map(|o| o.y).collect();
    let qgarch = grid.models.contains(&ModelKind::Qgarch).then(|| fit_qgarch_volatility(&y, cfg.seed, &grid.qmle));

    for (ti, &(tau, tq)) in q_true.iter().enumerate() {
        let q = tq.q;
        let target = truth.h_next * q;
        let z = normal_quantile(tau);
        for &model in &grid.models {
            match model {
                ModelKind::Rg | ModelKind::Rr => {
                    let step = if model == ModelKind::Rg { SecondStep::Rg } else { SecondStep::Rr };
                    let mut truth_coef = theta.map(|v| v * q);
                    if step == SecondStep::Rr {
                        truth_coef[2] = theta[2] * q / z;
                    }
                    let res = qmle
                        .as_ref()
                        .expect("qmle fitted")
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|f| {
                            let c = fit_second_step(&obs, &f.params, step, tau).map_err(|e| e.to_string())?;
                            let fc = forecast_next(&obs, &f.params, &c, step).map_err(|e| e.to_string())?;
                            Ok((c, fc))
                        });
                    for (k, name) in PARAM_NAMES.iter().enumerate() {
                        let e = res.as_ref().map(|(c, _)| (c.to_array()[k] - truth_coef[k]).abs()).map_err(Clone::clone);
                        out.push((key(Some(ti), model.name(), name), e));
                    }
                    out.push((key(Some(ti), model.name(), "forecast"), res.map(|(_, fc)| (fc - target).abs())));
                }
                ModelKind::Qgarch => {
                    let e = qgarch
                        .as_ref()
                        .expect("qgarch fitted")
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|v| v.fit_quantile(&y, tau).map_err(|e| e.to_string()))
                        .and_then(|f| f.forecast(&y).map_err(|e| e.to_string()))
                        .map(|fc| (fc - target).abs());
                    out.push((key(Some(ti), "qgarch", "forecast"), e));
                }
                ModelKind::Rcaviar => {
                    let e = fit_rcaviar(&obs, tau, cfg.seed)
                        .and_then(|f| f.forecast(&obs))
                        .map(|fc| (fc - target).abs())
                        .map_err(|e| e.to_string());
                    out.push((key(Some(ti), "rcaviar", "forecast"), e));
                }
                ModelKind::Sq => {
                    let mut v = y.clone();
                    let fc = lower_quantile_in_place(&mut v, tau);
                    out.push((key(Some(ti), "sq", "forecast"), Ok((fc - target).abs())));
                }
            }
        }
    }
    Ok(out)
}

/// Runs every `(n, m)` cell for `grid.reps` replications. Replication `r` of
/// cell `c` uses seed `base.seed + c * reps + r`.
pub fn mae_experiment(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    if grid.reps < 10 {
        return Err(Error::Config(format!("need at least 10 replications, got {}", grid.reps)));
    }
    if grid.ns.is_empty() || grid.ms.is_empty() || grid.taus.is_empty() || grid.models.is_empty() {
        return Err(Error::Config("experiment grid has an empty dimension".into()));
    }
    grid.base.validate()?;
    let true_quantiles = grid
        .taus
        .iter()
        .enumerate()
        .map(|(i, &tau)| {
            monte_carlo_true_quantile(grid.base.shock, tau, grid.true_quantile_reps, grid.base.seed.wrapping_add(i as u64)).map(|q| (tau, q))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut series = Vec::new();
    let mut seeds = Vec::new();
    let mut cell = 0u64;
    for &n in &grid.ns {
        for &m in &grid.ms {
            let cell_seeds: Vec<u64> = (0..grid.reps).map(|r| grid.base.seed.wrapping_add(cell * grid.reps as u64 + r as u64)).collect();
            cell += 1;
            let reps: Vec<Result<RepErrors>> = cell_seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = DgpConfig { n, m, seed, ..grid.base.clone() };
                    replication(&cfg, grid, &true_quantiles)
                })
                .collect();
            let mut cell_series: Vec<ErrorSeries> = Vec::new();
            for (r, rep) in reps.into_iter().enumerate() {
                seeds.push((n, m, r, cell_seeds[r]));
                let rep = rep?;
                for ((ti, model, param), e) in rep {
                    let tau = ti.map(|i| grid.taus[i]);
                    let idx = match cell_series.iter().position(|s| s.tau == tau && s.model == model && s.param == param) {
                        Some(i) => i,
                        None => {
                            cell_series.push(ErrorSeries { n, m, tau, model, param, abs_errors: Vec::new(), failures: 0 });
                            cell_series.len() - 1
                        }
                    };
                    match e {
                        Ok(v) if v.is_finite() => cell_series[idx].abs_errors.push(v),
                        _ => cell_series[idx].failures += 1,
                    }
                }
            }
            series.extend(cell_series);
        }
    }
    Ok(ExperimentResult { series, true_quantiles, seeds })
}
