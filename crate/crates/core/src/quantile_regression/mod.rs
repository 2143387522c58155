//! Linear quantile regression and the two second-step estimators built on it.
//!
//! Both estimators regress `y_i` on `(1, h_{i-1}, x_{i-1}, sqrt(ov_{i-1}))` for
//! `i = 2..n`, where `h` is the fitted volatility filter and `x` is either the
//! square root of realized variance (`Rg`) or the realized quantile (`Rr`).

mod simplex;

use std::fmt::Write as _;
use std::io::Write;

pub use simplex::{check_loss, solve_dense, Design, QrSolution, RANK_TOL};

use crate::error::{Error, Result};
use crate::first_step::{default_h1, filter_h, GarchParams};
use crate::market_data::DailyObservation;
use crate::num::Scalar;

pub(crate) use simplex::invert;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileCoeffs<T> {
    pub tau: T,
    pub omega_tau: T,
    pub gamma_tau: T,
    pub alpha_tau: T,
    pub beta_tau: T,
}

impl<T: Scalar> QuantileCoeffs<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.omega_tau, self.gamma_tau, self.alpha_tau, self.beta_tau]
    }

    pub fn from_array(tau: T, a: [T; 4]) -> Self {
        Self { tau, omega_tau: a[0], gamma_tau: a[1], alpha_tau: a[2], beta_tau: a[3] }
    }
}

/// Regressors `(1, h_{i-1}, x_{i-1}, sqrt(ov_{i-1}))` and response `y_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignRow<T> {
    pub a: [T; 4],
    pub y: T,
}

/// Which third regressor the second step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecondStep {
    /// Square root of realized variance.
    Rg,
    /// Realized quantile at the regression level.
    Rr,
}

impl SecondStep {
    pub fn name(self) -> &'static str {
        match self {
            SecondStep::Rg => "rg",
            SecondStep::Rr => "rr",
        }
    }
}

/// Minimum number of rows accepted by [`solve_qr`].
pub const MIN_QR_ROWS: usize = 5;

/// Exact quantile regression on four-column rows.
pub fn solve_qr<T: Scalar>(rows: &[DesignRow<T>], tau: T) -> Result<QuantileCoeffs<T>> {
    Ok(QuantileCoeffs::from_array(tau, solve_qr_full(rows, tau)?.coef.try_into().expect("four coefficients")))
}

/// Like [`solve_qr`] but returns residuals, basis and dual certificate.
pub fn solve_qr_full<T: Scalar>(rows: &[DesignRow<T>], tau: T) -> Result<QrSolution<T>> {
    if rows.len() < MIN_QR_ROWS {
        return Err(Error::InsufficientData(format!("quantile regression needs at least {MIN_QR_ROWS} rows, got {}", rows.len())));
    }
    let x: Vec<T> = rows.iter().flat_map(|r| r.a).collect();
    let y: Vec<T> = rows.iter().map(|r| r.y).collect();
    solve_dense(&Design { x: &x, p: 4 }, &y, tau)
}

fn third_regressor<T: Scalar>(o: &DailyObservation<T>, step: SecondStep, tau: T) -> Result<T> {
    match step {
        SecondStep::Rg => Ok(o.rv.sqrt()),
        SecondStep::Rr => o
            .rq(tau)
            .ok_or_else(|| Error::Config(format!("no realized quantile at level {tau} for day {}", o.day_index))),
    }
}

/// Rows for `i = 2..n` built from the filtered volatility under `fitted`.
pub fn design_rows<T: Scalar>(obs: &[DailyObservation<T>], fitted: &GarchParams<T>, step: SecondStep, tau: T) -> Result<Vec<DesignRow<T>>> {
    let state = filter_h(fitted, obs, default_h1(obs))?;
    (1..obs.len())
        .map(|i| {
            let prev = &obs[i - 1];
            Ok(DesignRow { a: [T::one(), state.h[i - 1], third_regressor(prev, step, tau)?, prev.ov.sqrt()], y: obs[i].y })
        })
        .collect()
}

pub fn fit_second_step<T: Scalar>(obs: &[DailyObservation<T>], fitted: &GarchParams<T>, step: SecondStep, tau: T) -> Result<QuantileCoeffs<T>> {
    solve_qr(&design_rows(obs, fitted, step, tau)?, tau)
}

/// Realized-volatility second step.
pub fn fit_rg<T: Scalar>(obs: &[DailyObservation<T>], fitted: &GarchParams<T>, tau: T) -> Result<QuantileCoeffs<T>> {
    fit_second_step(obs, fitted, SecondStep::Rg, tau)
}

/// Realized-quantile second step.
pub fn fit_rr<T: Scalar>(obs: &[DailyObservation<T>], fitted: &GarchParams<T>, tau: T) -> Result<QuantileCoeffs<T>> {
    fit_second_step(obs, fitted, SecondStep::Rr, tau)
}

/// `omega + gamma * h_n + alpha * x_n + beta * sqrt(ov_n)`.
pub fn forecast_quantile<T: Scalar>(coeffs: &QuantileCoeffs<T>, h_n: T, x_n: T, ov_n: T) -> Result<T> {
    if !(h_n > T::zero()) || !x_n.is_finite() || !(ov_n >= T::zero()) || !ov_n.is_finite() {
        return Err(Error::Domain(format!("invalid forecast inputs h={h_n}, x={x_n}, ov={ov_n}")));
    }
    Ok(coeffs.omega_tau + coeffs.gamma_tau * h_n + coeffs.alpha_tau * x_n + coeffs.beta_tau * ov_n.sqrt())
}

/// One-day-ahead quantile after the last day of `obs`.
pub fn forecast_next<T: Scalar>(
    obs: &[DailyObservation<T>],
    fitted: &GarchParams<T>,
    coeffs: &QuantileCoeffs<T>,
    step: SecondStep,
) -> Result<T> {
    let state = filter_h(fitted, obs, default_h1(obs))?;
    let last = obs.last().expect("filter checked nonempty");
    forecast_quantile(coeffs, state.last(), third_regressor(last, step, coeffs.tau)?, last.ov)
}

/// One row of the coefficient table.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffRecord {
    pub model: String,
    pub tau: f64,
    pub coeffs: [f64; 4],
    /// `ok` or a failure description.
    pub status: String,
}

pub const COEFF_CSV_HEADER: &str = "model,tau,omega,gamma,alpha,beta,status";

/// Writes `model,tau,omega,gamma,alpha,beta,status` rows.
pub fn write_coeff_csv<W: Write>(mut out: W, rows: &[CoeffRecord]) -> Result<()> {
    let mut buf = String::from(COEFF_CSV_HEADER);
    buf.push('\n');
    for r in rows {
        let status = r.status.replace([',', '\n'], ";");
        writeln!(buf, "{},{},{},{},{},{},{}", r.model, r.tau, r.coeffs[0], r.coeffs[1], r.coeffs[2], r.coeffs[3], status).unwrap();
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}
