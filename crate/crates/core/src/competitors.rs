//! Baseline quantile forecasters: two-step QGARCH on daily returns, realized
//! CAViaR, and the rolling sample quantile.
//!
//! QGARCH and CAViaR rescale the data by a power of two near its RMS before
//! fitting, so scaling the inputs by a power of two scales every forecast by
//! exactly that factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::first_step::{clamp_into, fit_recursion, filter_raw, BoxTransform, ConvergenceReport, ParamBox, QmleOptions};
use crate::market_data::DailyObservation;
use crate::num::{lower_quantile_in_place, Scalar};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::quantile_regression::{check_loss, solve_dense, Design};

/// Minimum sample length for the fitted competitors.
pub const MIN_COMPETITOR_DAYS: usize = 100;
/// Observations used to seed the CAViaR recursion and excluded from its objective.
pub const CAVIAR_BURN_IN: usize = 50;
pub const CAVIAR_STARTS: usize = 10;
/// Minimum window for the sample quantile.
pub const MIN_SQ_WINDOW: usize = 20;

fn rms<T: Scalar>(v: impl Iterator<Item = T>) -> (T, usize) {
    let mut n = 0;
    let mut s = T::zero();
    for x in v {
        s = s + x * x;
        n += 1;
    }
    ((s / T::from_usize_lossy(n.max(1))).sqrt(), n)
}

/// Power of two closest (in log scale) to `v`.
fn pow2_scale<T: Scalar>(v: T) -> T {
    T::lit(2.0).powi(v.log2().round().to_i32().unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QgarchParams<T> {
    pub omega: T,
    pub gamma: T,
    pub alpha: T,
}

/// First QGARCH step: `h_i = omega + gamma * h_{i-1} + alpha * |y_{i-1}|` fitted by
/// Gaussian QMLE on squared returns.
#[derive(Debug, Clone)]
pub struct QgarchVolatility<T> {
    /// Parameters in return units.
    pub params: QgarchParams<T>,
    raw: [T; 4],
    scale: T,
    pub report: ConvergenceReport,
}

/// Fitted two-step QGARCH forecaster.
#[derive(Debug, Clone)]
pub struct QgarchForecaster<T> {
    pub volatility: QgarchVolatility<T>,
    pub tau: T,
    /// `(intercept, h loading, |y| loading)` in return units.
    pub coeffs: [T; 3],
}

fn normalized_returns<T: Scalar>(y: &[T]) -> Result<(Vec<T>, T)> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("returns contain non-finite values".into()));
    }
    let (r, _) = rms(y.iter().copied());
    if r == T::zero() {
        return Err(Error::Config("returns are identically zero; the quantile design is rank deficient".into()));
    }
    let s = pow2_scale(r);
    Ok((y.iter().map(|&v| v / s).collect(), s))
}

fn qgarch_h<T: Scalar>(raw: &[T; 4], z: &[T]) -> Vec<T> {
    let abs: Vec<T> = z.iter().map(|v| v.abs()).collect();
    let zeros = vec![T::zero(); z.len()];
    let (h1, _) = rms(z.iter().copied());
    let mut h = Vec::new();
    filter_raw(raw, &abs, &zeros, h1.max(T::lit(1e-6)), &mut h);
    h
}

pub fn fit_qgarch_volatility<T: Scalar>(y: &[T], seed: u64, opts: &QmleOptions<T>) -> Result<QgarchVolatility<T>> {
    if y.len() < MIN_COMPETITOR_DAYS {
        return Err(Error::InsufficientData(format!("QGARCH needs at least {MIN_COMPETITOR_DAYS} returns, got {}", y.len())));
    }
    let (z, s) = normalized_returns(y)?;
    let abs: Vec<T> = z.iter().map(|v| v.abs()).collect();
    let zeros = vec![T::zero(); z.len()];
    let proxy: Vec<T> = z.iter().map(|v| *v * *v).collect();
    let (h1, _) = rms(z.iter().copied());
    let transform = BoxTransform { bounds: ParamBox::default(), active: [true, true, false] };
    let first = clamp_into(&transform.bounds, [h1 * T::lit(0.1), T::lit(0.8), T::lit(0.1), T::lit(0.001)]);
    let (raw, _, report) = fit_recursion(&abs, &zeros, &proxy, &transform, first, h1, seed, opts)?;
    Ok(QgarchVolatility { params: QgarchParams { omega: raw[0] * s, gamma: raw[1], alpha: raw[2] }, raw, scale: s, report })
}

impl<T: Scalar> QgarchVolatility<T> {
    /// Second step: quantile regression of `y_i` on `(1, h_{i-1}, |y_{i-1}|)`.
    pub fn fit_quantile(&self, y: &[T], tau: T) -> Result<QgarchForecaster<T>> {
        let z: Vec<T> = y.iter().map(|&v| v / self.scale).collect();
        let h = qgarch_h(&self.raw, &z);
        let x: Vec<T> = (1..z.len()).flat_map(|i| [T::one(), h[i - 1], z[i - 1].abs()]).collect();
        let sol = solve_dense(&Design { x: &x, p: 3 }, &z[1..], tau).map_err(|e| match e {
            Error::Singular(m) => Error::Config(format!("QGARCH design is rank deficient: {m}")),
            other => other,
        })?;
        let c = [sol.coef[0] * self.scale, sol.coef[1], sol.coef[2]];
        Ok(QgarchForecaster { volatility: self.clone(), tau, coeffs: c })
    }
}

impl<T: Scalar> QgarchForecaster<T> {
    /// Quantile for the day after the last return in `history`.
    pub fn forecast(&self, history: &[T]) -> Result<T> {
        let v = &self.volatility;
        if history.is_empty() {
            return Err(Error::InsufficientData("empty history".into()));
        }
        let z: Vec<T> = history.iter().map(|&x| x / v.scale).collect();
        let h = qgarch_h(&v.raw, &z);
        let n = z.len() - 1;
        Ok(self.coeffs[0] + (self.coeffs[1] * h[n] + self.coeffs[2] * z[n].abs()) * v.scale)
    }
}

/// Two-step QGARCH fit on daily returns.
pub fn fit_qgarch<T: Scalar>(y: &[T], tau: T, seed: u64) -> Result<QgarchForecaster<T>> {
    fit_qgarch_volatility(y, seed, &QmleOptions::default())?.fit_quantile(y, tau)
}

/// Coefficients of `Q_i = omega + gamma * Q_{i-1} + alpha * sqrt(rv_{i-1}) + beta * |y_{i-1}|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaviarParams<T> {
    pub omega: T,
    pub gamma: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> CaviarParams<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.omega, self.gamma, self.alpha, self.beta]
    }
}

#[derive(Debug, Clone)]
pub struct RcaviarFit<T> {
    /// Parameters in return units.
    pub params: CaviarParams<T>,
    pub tau: T,
    /// Mean check loss over the fitted range, in return units.
    pub objective: T,
    /// Objective value of each start after optimization, in start order.
    pub start_objectives: Vec<T>,
    /// Objective value at each starting point.
    pub initial_objectives: Vec<T>,
    pub best_start: usize,
}

struct CaviarData<T> {
    z: Vec<T>,
    x: Vec<T>,
    scale: T,
}

fn caviar_data<T: Scalar>(obs: &[DailyObservation<T>]) -> Result<CaviarData<T>> {
    let y: Vec<T> = obs.iter().map(|o| o.y).collect();
    let (z, scale) = normalized_returns(&y)?;
    if obs.iter().any(|o| !(o.rv >= T::zero()) || !o.rv.is_finite()) {
        return Err(Error::Numeric("realized variance must be finite and nonnegative".into()));
    }
    let x = obs.iter().map(|o| o.rv.sqrt() / scale).collect();
    Ok(CaviarData { z, x, scale })
}

/// Runs the recursion and returns `(Q_1..Q_n)`; `Q_1` is the sample quantile of the burn-in.
fn caviar_path<T: Scalar>(p: &[T; 4], d: &CaviarData<T>, tau: T) -> Vec<T> {
    let burn = CAVIAR_BURN_IN.min(d.z.len());
    let mut head = d.z[..burn].to_vec();
    let mut q = lower_quantile_in_place(&mut head, tau);
    let mut out = Vec::with_capacity(d.z.len());
    out.push(q);
    for i in 1..d.z.len() {
        q = p[0] + p[1] * q + p[2] * d.x[i - 1] + p[3] * d.z[i - 1].abs();
        out.push(q);
    }
    out
}

fn caviar_objective<T: Scalar>(p: &[T; 4], d: &CaviarData<T>, tau: T) -> T {
    if !(p[1].abs() < T::one()) {
        return T::infinity();
    }
    let q = caviar_path(p, d, tau);
    let n = d.z.len() - CAVIAR_BURN_IN;
    let total = (CAVIAR_BURN_IN..d.z.len()).fold(T::zero(), |s, i| s + check_loss(tau, d.z[i] - q[i]));
    total / T::from_usize_lossy(n)
}

/// Multi-start check-loss fit of the realized CAViaR recursion.
pub fn fit_rcaviar<T: Scalar>(obs: &[DailyObservation<T>], tau: T, seed: u64) -> Result<RcaviarFit<T>> {
    if !(tau > T::zero() && tau < T::one()) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {tau}")));
    }
    if obs.len() < MIN_COMPETITOR_DAYS {
        return Err(Error::InsufficientData(format!("realized CAViaR needs at least {MIN_COMPETITOR_DAYS} days, got {}", obs.len())));
    }
    let d = caviar_data(obs)?;
    let mut fit_range = d.z[CAVIAR_BURN_IN..].to_vec();
    let q_fit = lower_quantile_in_place(&mut fit_range, tau);
    let mut all = d.z.clone();
    let q_all = lower_quantile_in_place(&mut all, tau);
    let sign = if q_all < T::zero() { -T::one() } else { T::one() };

    let starts: Vec<[T; 4]> = (0..CAVIAR_STARTS)
        .map(|s| {
            if s == 0 {
                // the best constant forecast over the fitted range
                [q_fit, T::zero(), T::zero(), T::zero()]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
                let mut u = || T::lit(rng.random_range(0.0..1.0));
                [T::lit(2.0) * q_all * u(), T::lit(0.9) * u(), sign * T::lit(2.0) * u(), sign * T::lit(2.0) * u()]
            }
        })
        .collect();

    let opts = NelderMeadOptions { initial_step: T::lit(0.1), ..NelderMeadOptions::default() };
    let f = |z: &[T]| caviar_objective(&[z[0], z[1], z[2], z[3]], &d, tau);
    let runs: Vec<_> = starts.par_iter().map(|s0| (f(s0), nelder_mead(f, s0, &opts))).collect();

    let mut best: Option<usize> = None;
    for (i, (_, m)) in runs.iter().enumerate() {
        if m.value.is_finite() && best.is_none_or(|b| m.value < runs[b].1.value) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| Error::Optimization("no CAViaR start produced a finite objective".into()))?;
    let x = &runs[best].1.x;
    let s = d.scale;
    Ok(RcaviarFit {
        params: CaviarParams { omega: x[0] * s, gamma: x[1], alpha: x[2], beta: x[3] },
        tau,
        objective: runs[best].1.value * s,
        start_objectives: runs.iter().map(|(_, m)| m.value * s).collect(),
        initial_objectives: runs.iter().map(|(i, _)| *i * s).collect(),
        best_start: best,
    })
}

impl<T: Scalar> RcaviarFit<T> {
    fn normalized(&self, scale: T) -> [T; 4] {
        let p = self.params;
        [p.omega / scale, p.gamma, p.alpha, p.beta]
    }

    /// Mean check loss over the fitted range of `obs` at `params` (return units).
    pub fn objective_at(obs: &[DailyObservation<T>], params: &CaviarParams<T>, tau: T) -> Result<T> {
        let d = caviar_data(obs)?;
        let p = params.to_array();
        Ok(caviar_objective(&[p[0] / d.scale, p[1], p[2], p[3]], &d, tau) * d.scale)
    }

    /// Quantile for the day after the last observation in `history`.
    pub fn forecast(&self, history: &[DailyObservation<T>]) -> Result<T> {
        if history.is_empty() {
            return Err(Error::InsufficientData("empty history".into()));
        }
        let d = caviar_data(history)?;
        let p = self.normalized(d.scale);
        let q = caviar_path(&p, &d, self.tau);
        let n = d.z.len() - 1;
        Ok((p[0] + p[1] * q[n] + p[2] * d.x[n] + p[3] * d.z[n].abs()) * d.scale)
    }
}

/// Lower empirical `tau`-quantile of a trailing window of returns.
pub fn sample_quantile_forecast<T: Scalar>(window: &[T], tau: T) -> Result<T> {
    if window.len() < MIN_SQ_WINDOW {
        return Err(Error::InsufficientData(format!("sample quantile needs at least {MIN_SQ_WINDOW} returns, got {}", window.len())));
    }
    if !(tau > T::zero() && tau < T::one()) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {tau}")));
    }
    let mut w = window.to_vec();
    Ok(lower_quantile_in_place(&mut w, tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_quantile_values() {
        let w: Vec<f64> = (-3..17).map(f64::from).collect();
        assert_eq!(sample_quantile_forecast(&w, 0.05).unwrap(), -3.0);
        assert_eq!(sample_quantile_forecast(&vec![0.7; 25], 0.05).unwrap(), 0.7);
        let sym: Vec<f64> = (-10..=10).map(f64::from).collect();
        assert_eq!(sample_quantile_forecast(&sym, 0.5).unwrap(), 0.0);
        assert!(matches!(sample_quantile_forecast(&w[..19], 0.05), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn qgarch_zero_returns_is_config_error() {
        let y = vec![0.0f64; 200];
        assert!(matches!(fit_qgarch(&y, 0.05, 1), Err(Error::Config(_))));
    }

    #[test]
    fn pow2_scale_is_exact_power() {
        assert_eq!(pow2_scale(3.0f64), 4.0);
        assert_eq!(pow2_scale(0.01f64), 2f64.powi(-7));
    }
}
