//! Realized-GARCH volatility filter and its quasi-maximum-likelihood fit.
//!
//! The conditional standard deviation follows
//! `h_i = omega + gamma * h_{i-1} + alpha * sqrt(rv_{i-1}) + beta * sqrt(ov_{i-1})`
//! and the fit maximizes the Gaussian quasi-likelihood with `rv + ov` standing in
//! for the daily variance.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market_data::DailyObservation;
use crate::num::Scalar;
use crate::optim::{logit, nelder_mead, sigmoid, NelderMeadOptions};

/// Upper limit imposed on `gamma + alpha + beta` by the fit.
pub const PERSISTENCE_CAP: f64 = 1.0 - 1e-6;
/// Floor applied to the variance proxy inside the likelihood.
pub const PROXY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams<T> {
    pub omega: T,
    pub gamma: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> GarchParams<T> {
    pub fn new(omega: T, gamma: T, alpha: T, beta: T) -> Result<Self> {
        let p = Self { omega, gamma, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.to_array();
        if all.iter().any(|v| !v.is_finite() || *v <= T::zero()) {
            return Err(Error::Domain(format!("parameters must be finite and positive: {self:?}")));
        }
        if self.persistence() >= T::one() {
            return Err(Error::Domain(format!("gamma + alpha + beta must be below 1, got {}", self.persistence())));
        }
        Ok(())
    }

    pub fn persistence(&self) -> T {
        self.gamma + self.alpha + self.beta
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.omega, self.gamma, self.alpha, self.beta]
    }

    fn from_array(a: [T; 4]) -> Self {
        Self { omega: a[0], gamma: a[1], alpha: a[2], beta: a[3] }
    }
}

/// Componentwise bounds on `(omega, gamma, alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox<T> {
    pub lower: [T; 4],
    pub upper: [T; 4],
}

impl<T: Scalar> ParamBox<T> {
    pub fn new(lower: [T; 4], upper: [T; 4]) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            if !(self.lower[i] > T::zero() && self.lower[i] < self.upper[i]) || !self.upper[i].is_finite() {
                return Err(Error::Domain(format!("invalid bounds for component {i}: [{}, {}]", self.lower[i], self.upper[i])));
            }
        }
        if self.lower[1] + self.lower[2] + self.lower[3] >= T::lit(PERSISTENCE_CAP) {
            return Err(Error::Domain("lower bounds leave no room under gamma + alpha + beta < 1".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &GarchParams<T>) -> bool {
        p.to_array().iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }
}

impl<T: Scalar> Default for ParamBox<T> {
    fn default() -> Self {
        let lo = T::lit(1e-6);
        Self { lower: [lo; 4], upper: [T::lit(10.0), T::lit(0.999), T::lit(0.999), T::lit(0.999)] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolFilterState<T> {
    /// `h_1, ..., h_n`.
    pub h: Vec<T>,
    pub h1: T,
}

impl<T: Scalar> VolFilterState<T> {
    pub fn last(&self) -> T {
        *self.h.last().expect("filter output is nonempty")
    }
}

#[inline]
pub(crate) fn recursion_step<T: Scalar>(p: &[T; 4], h_prev: T, x: T, o: T) -> T {
    p[0] + p[1] * h_prev + p[2] * x + p[3] * o
}

/// Runs the recursion over `n` days given lagged innovations `(x_i, o_i)`.
pub(crate) fn filter_raw<T: Scalar>(p: &[T; 4], x: &[T], o: &[T], h1: T, out: &mut Vec<T>) {
    out.clear();
    out.reserve(x.len());
    let mut h = h1;
    out.push(h);
    for i in 1..x.len() {
        h = recursion_step(p, h, x[i - 1], o[i - 1]);
        out.push(h);
    }
}

fn check_h1<T: Scalar>(h1: T) -> Result<()> {
    if !(h1 > T::zero() && h1.is_finite()) {
        return Err(Error::Domain(format!("initial conditional standard deviation must be positive, got {h1}")));
    }
    Ok(())
}

fn innovations<T: Scalar>(obs: &[DailyObservation<T>]) -> (Vec<T>, Vec<T>) {
    obs.iter().map(|o| (o.rv.sqrt(), o.ov.sqrt())).unzip()
}

/// Conditional standard deviations `h_1 = h1`, `h_i` from the recursion for `i >= 2`.
pub fn filter_h<T: Scalar>(params: &GarchParams<T>, obs: &[DailyObservation<T>], h1: T) -> Result<VolFilterState<T>> {
    params.validate()?;
    check_h1(h1)?;
    if obs.is_empty() {
        return Err(Error::InsufficientData("filter needs at least one day".into()));
    }
    let (x, o) = innovations(obs);
    let mut h = Vec::new();
    filter_raw(&params.to_array(), &x, &o, h1, &mut h);
    Ok(VolFilterState { h, h1 })
}

/// One recursion step past the last filtered day.
pub fn forecast_h<T: Scalar>(params: &GarchParams<T>, h_last: T, last: &DailyObservation<T>) -> Result<T> {
    params.validate()?;
    check_h1(h_last)?;
    if !(last.rv >= T::zero() && last.ov >= T::zero()) {
        return Err(Error::Domain("realized measures must be nonnegative".into()));
    }
    Ok(recursion_step(&params.to_array(), h_last, last.rv.sqrt(), last.ov.sqrt()))
}

/// Mean Gaussian quasi-log-likelihood of `proxy` under variances `h^2`.
/// Returns the value and the number of floored proxy entries.
pub(crate) fn gaussian_quasi_loglik<T: Scalar>(h: &[T], proxy: &[T]) -> (T, usize) {
    let floor = T::lit(PROXY_FLOOR);
    let mut floored = 0;
    let mut acc = T::zero();
    for (&hi, &pi) in h.iter().zip(proxy) {
        let v = if pi < floor {
            floored += 1;
            floor
        } else {
            pi
        };
        let h2 = hi * hi;
        acc = acc + h2.ln() + v / h2;
    }
    (-(acc / T::from_usize_lossy(h.len())), floored)
}

/// `-(1/n) * sum_i [log h_i^2 + (rv_i + ov_i) / h_i^2]`.
pub fn qmle_objective<T: Scalar>(params: &GarchParams<T>, obs: &[DailyObservation<T>], h1: T) -> Result<T> {
    let state = filter_h(params, obs, h1)?;
    let proxy: Vec<T> = obs.iter().map(|o| o.rv + o.ov).collect();
    Ok(gaussian_quasi_loglik(&state.h, &proxy).0)
}

/// Default initial value: square root of the sample mean of `rv + ov`.
pub fn default_h1<T: Scalar>(obs: &[DailyObservation<T>]) -> T {
    let n = T::from_usize_lossy(obs.len().max(1));
    let mean = obs.iter().map(|o| o.rv + o.ov).sum::<T>() / n;
    mean.max(T::lit(PROXY_FLOOR)).sqrt()
}

#[derive(Debug, Clone)]
pub struct QmleOptions<T> {
    pub starts: usize,
    pub nelder_mead: NelderMeadOptions<T>,
    /// Overrides [`default_h1`].
    pub h1: Option<T>,
}

impl<T: Scalar> Default for QmleOptions<T> {
    fn default() -> Self {
        Self { starts: 8, nelder_mead: NelderMeadOptions::default(), h1: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub starts: Vec<StartOutcome>,
    pub best_start: usize,
    /// Days whose variance proxy was floored.
    pub floored_days: usize,
}

impl ConvergenceReport {
    pub fn total_iterations(&self) -> usize {
        self.starts.iter().map(|s| s.iterations).sum()
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let best = &self.starts[self.best_start];
        writeln!(f, "starts={}", self.starts.len())?;
        writeln!(f, "best_start={}", self.best_start)?;
        writeln!(f, "best_objective={}", best.objective)?;
        writeln!(f, "best_iterations={}", best.iterations)?;
        writeln!(f, "best_converged={}", best.converged)?;
        writeln!(f, "total_iterations={}", self.total_iterations())?;
        writeln!(f, "converged_starts={}", self.starts.iter().filter(|s| s.converged).count())?;
        write!(f, "floored_days={}", self.floored_days)
    }
}

#[derive(Debug, Clone)]
pub struct QmleFit<T> {
    pub params: GarchParams<T>,
    /// Quasi-log-likelihood at `params` (the maximized value).
    pub objective: T,
    pub h1: T,
    pub report: ConvergenceReport,
}

/// Maps unconstrained coordinates into the box with the persistence cap.
/// `active[k]` selects which of `(gamma, alpha, beta)` are free; inactive ones are 0.
pub(crate) struct BoxTransform<T> {
    pub bounds: ParamBox<T>,
    pub active: [bool; 3],
}

impl<T: Scalar> BoxTransform<T> {
    pub fn dim(&self) -> usize {
        1 + self.active.iter().filter(|a| **a).count()
    }

    pub fn decode(&self, z: &[T]) -> [T; 4] {
        let (lo, hi) = (self.bounds.lower, self.bounds.upper);
        let mut p = [T::zero(); 4];
        p[0] = lo[0] + (hi[0] - lo[0]) * sigmoid(z[0]);
        let mut k = 1;
        let (mut sum, mut sum_lo) = (T::zero(), T::zero());
        for j in 0..3 {
            if self.active[j] {
                p[j + 1] = lo[j + 1] + (hi[j + 1] - lo[j + 1]) * sigmoid(z[k]);
                sum = sum + p[j + 1];
                sum_lo = sum_lo + lo[j + 1];
                k += 1;
            }
        }
        let cap = T::lit(PERSISTENCE_CAP);
        if sum > cap {
            let shrink = (cap - sum_lo) / (sum - sum_lo);
            for j in 0..3 {
                if self.active[j] {
                    p[j + 1] = (lo[j + 1] + (p[j + 1] - lo[j + 1]) * shrink).min(cap);
                }
            }
        }
        p
    }

    /// Inverse of [`decode`] for points strictly inside the feasible set.
    pub fn encode(&self, p: &[T; 4]) -> Vec<T> {
        let (lo, hi) = (self.bounds.lower, self.bounds.upper);
        let clamp01 = |v: T| v.max(T::lit(1e-9)).min(T::one() - T::lit(1e-9));
        let mut z = vec![logit(clamp01((p[0] - lo[0]) / (hi[0] - lo[0])))];
        for j in 0..3 {
            if self.active[j] {
                z.push(logit(clamp01((p[j + 1] - lo[j + 1]) / (hi[j + 1] - lo[j + 1]))));
            }
        }
        z
    }
}

/// Multi-start quasi-likelihood fit of a recursion with lagged innovations `x`, `o`.
pub(crate) fn fit_recursion<T: Scalar>(
    x: &[T],
    o: &[T],
    proxy: &[T],
    transform: &BoxTransform<T>,
    first_start: [T; 4],
    h1: T,
    seed: u64,
    opts: &QmleOptions<T>,
) -> Result<([T; 4], T, ConvergenceReport)> {
    let dim = transform.dim();
    let objective = |z: &[T]| -> T {
        let p = transform.decode(z);
        let mut h = Vec::with_capacity(x.len());
        filter_raw(&p, x, o, h1, &mut h);
        -gaussian_quasi_loglik(&h, proxy).0
    };

    let starts = opts.starts.max(1);
    let runs: Vec<_> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let z0 = if s == 0 {
                transform.encode(&first_start)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
                (0..dim).map(|_| T::lit(rng.random_range(-3.0..3.0))).collect()
            };
            let initial = objective(&z0);
            let m = nelder_mead(&objective, &z0, &opts.nelder_mead);
            (m, initial)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, (m, _)) in runs.iter().enumerate() {
        if m.value.is_finite() && best.is_none_or(|b| m.value < runs[b].0.value) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| Error::Optimization("no start produced a finite objective".into()))?;
    let params = transform.decode(&runs[best].0.x);
    let mut h = Vec::new();
    filter_raw(&params, x, o, h1, &mut h);
    let (value, floored) = gaussian_quasi_loglik(&h, proxy);
    let report = ConvergenceReport {
        starts: runs
            .iter()
            .map(|(m, init)| StartOutcome {
                objective: -m.value.as_f64(),
                initial_objective: -init.as_f64(),
                iterations: m.iterations,
                evaluations: m.evaluations,
                converged: m.converged,
            })
            .collect(),
        best_start: best,
        floored_days: floored,
    };
    Ok((params, value, report))
}

/// Minimum sample length accepted by [`fit_qmle`].
pub const MIN_QMLE_DAYS: usize = 50;

/// Multi-start quasi-maximum-likelihood fit over `bounds`.
pub fn fit_qmle<T: Scalar>(obs: &[DailyObservation<T>], bounds: &ParamBox<T>, seed: u64) -> Result<QmleFit<T>> {
    fit_qmle_with(obs, bounds, seed, &QmleOptions::default())
}

pub fn fit_qmle_with<T: Scalar>(
    obs: &[DailyObservation<T>],
    bounds: &ParamBox<T>,
    seed: u64,
    opts: &QmleOptions<T>,
) -> Result<QmleFit<T>> {
    bounds.validate()?;
    if obs.len() < MIN_QMLE_DAYS {
        return Err(Error::InsufficientData(format!("QMLE needs at least {MIN_QMLE_DAYS} days, got {}", obs.len())));
    }
    if obs.iter().any(|o| !(o.rv >= T::zero() && o.ov >= T::zero() && o.rv.is_finite() && o.ov.is_finite())) {
        return Err(Error::Numeric("realized measures must be finite and nonnegative".into()));
    }
    let h1 = opts.h1.unwrap_or_else(|| default_h1(obs));
    check_h1(h1)?;
    let (x, o) = innovations(obs);
    let proxy: Vec<T> = obs.iter().map(|o| o.rv + o.ov).collect();
    let transform = BoxTransform { bounds: *bounds, active: [true; 3] };

    // Persistence 0.8 with the implied long-run level equal to h1.
    let first = clamp_into(bounds, [h1 * T::lit(0.2), T::lit(0.4), T::lit(0.25), T::lit(0.15)]);

    let (p, value, report) = fit_recursion(&x, &o, &proxy, &transform, first, h1, seed, opts)?;
    Ok(QmleFit { params: GarchParams::from_array(p), objective: value, h1, report })
}

pub(crate) fn clamp_into<T: Scalar>(bounds: &ParamBox<T>, mut p: [T; 4]) -> [T; 4] {
    for (i, v) in p.iter_mut().enumerate() {
        let span = bounds.upper[i] - bounds.lower[i];
        *v = v.max(bounds.lower[i] + span * T::lit(1e-3)).min(bounds.upper[i] - span * T::lit(1e-3));
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(rv: f64, ov: f64) -> DailyObservation<f64> {
        DailyObservation::new(0, 0.0, rv, ov)
    }

    #[test]
    fn filter_hand_value() {
        let p = GarchParams::new(1.0, 0.1, 0.5, 0.2).unwrap();
        let data = [obs(0.25, 0.01), obs(0.0, 0.0)];
        let st = filter_h(&p, &data, 1.0).unwrap();
        assert_eq!(st.h[0], 1.0);
        assert!((st.h[1] - 1.37).abs() < 1e-12);
        assert!((forecast_h(&p, 1.0, &data[0]).unwrap() - 1.37).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_without_innovations() {
        let p = GarchParams::new(1.0, 0.1, 0.5, 0.2).unwrap();
        let data = vec![obs(0.0, 0.0); 50];
        let fp = 1.0 / 0.9;
        let st = filter_h(&p, &data, fp).unwrap();
        assert!(st.h.iter().all(|h| (h - fp).abs() < 1e-12));
        assert!((forecast_h(&p, 2.0, &data[0]).unwrap() - (1.0 + 0.1 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn contraction_in_initial_value() {
        let p = GarchParams::new(0.3, 0.6, 0.2, 0.1).unwrap();
        let data: Vec<_> = (0..40).map(|i| obs(((i * 7) % 5) as f64 * 0.3, ((i * 3) % 4) as f64 * 0.1)).collect();
        let a = filter_h(&p, &data, 1.0).unwrap();
        let b = filter_h(&p, &data, 5.0).unwrap();
        for i in 0..data.len() {
            let bound = 0.6f64.powi(i as i32) * 4.0;
            assert!((a.h[i] - b.h[i]).abs() <= bound + 1e-12, "i={i}");
        }
    }

    #[test]
    fn filter_rejects_bad_inputs() {
        let p = GarchParams::new(1.0, 0.1, 0.5, 0.2).unwrap();
        assert!(matches!(filter_h(&p, &[obs(1.0, 1.0)], 0.0), Err(Error::Domain(_))));
        assert!(matches!(filter_h(&p, &[obs(1.0, 1.0)], -1.0), Err(Error::Domain(_))));
        assert!(GarchParams::new(1.0, 0.5, 0.4, 0.2).is_err());
        assert!(GarchParams::new(0.0, 0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn objective_hand_values() {
        let p = GarchParams::<f64>::new(1.0, 0.1, 0.5, 0.2).unwrap();
        assert!((qmle_objective(&p, &[obs(0.6, 0.4)], 1.0).unwrap() - -1.0).abs() < 1e-15);

        // h^2 = rv + ov = v on every day gives -(log v + 1)
        let fp: f64 = 1.0 / 0.9;
        let v = fp * fp;
        let h = vec![fp; 3];
        let (ll, _) = gaussian_quasi_loglik(&h, &[v, v, v]);
        assert!((ll - -(v.ln() + 1.0)).abs() < 1e-12);
        // per-term maximizer of -(log s + v/s) is s = v
        for s in [0.5 * v, 0.9 * v, 1.1 * v, 2.0 * v] {
            assert!(-(s.ln() + v / s) < ll);
        }
    }

    #[test]
    fn objective_is_a_mean() {
        let p = GarchParams::new(0.2, 0.1, 0.5, 0.2).unwrap();
        let fp = 0.2 / 0.9;
        let once = qmle_objective(&p, &vec![obs(0.0, 0.0); 4], fp).unwrap();
        let twice = qmle_objective(&p, &vec![obs(0.0, 0.0); 8], fp).unwrap();
        assert!((once - twice).abs() < 1e-12);
    }

    #[test]
    fn transform_stays_feasible() {
        let t = BoxTransform { bounds: ParamBox::<f64>::default(), active: [true; 3] };
        for z in [[-50.0, 50.0, 50.0, 50.0], [0.0, 3.0, -3.0, 10.0], [50.0, -50.0, -50.0, -50.0]] {
            let p = t.decode(&z);
            let gp = GarchParams::from_array(p);
            assert!(t.bounds.contains(&gp), "{p:?}");
            assert!(gp.persistence() <= PERSISTENCE_CAP);
        }
        let p = [1.0, 0.1, 0.5, 0.2];
        let back = t.decode(&t.encode(&p));
        for i in 0..4 {
            assert!((back[i] - p[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn param_box_validation() {
        assert!(ParamBox::new([1e-6; 4], [10.0, 0.999, 0.999, 0.999]).is_ok());
        assert!(ParamBox::new([1.0, 0.5, 0.3, 0.3], [10.0, 0.999, 0.999, 0.999]).is_err());
        assert!(ParamBox::new([1e-6; 4], [1e-7, 0.9, 0.9, 0.9]).is_err());
    }

    #[test]
    fn short_sample_rejected() {
        let data = vec![obs(1.0, 0.1); 10];
        assert!(matches!(fit_qmle(&data, &ParamBox::default(), 1), Err(Error::InsufficientData(_))));
    }
}
