//! Uniform fit/forecast interface over the proposed models and the competitors.

use std::fmt;
use std::str::FromStr;

use crate::competitors::{fit_qgarch_volatility, fit_rcaviar, sample_quantile_forecast, QgarchForecaster, QgarchVolatility, RcaviarFit};
use crate::error::{Error, Result};
use crate::first_step::{fit_qmle_with, GarchParams, ParamBox, QmleFit, QmleOptions};
use crate::market_data::DailyObservation;
use crate::num::Scalar;
use crate::quantile_regression::{fit_second_step, forecast_next, QuantileCoeffs, SecondStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Rg,
    Rr,
    Qgarch,
    Rcaviar,
    Sq,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Rg, ModelKind::Rr, ModelKind::Qgarch, ModelKind::Rcaviar, ModelKind::Sq];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rg => "rg",
            ModelKind::Rr => "rr",
            ModelKind::Qgarch => "qgarch",
            ModelKind::Rcaviar => "rcaviar",
            ModelKind::Sq => "sq",
        }
    }

    fn second_step(self) -> Option<SecondStep> {
        match self {
            ModelKind::Rg => Some(SecondStep::Rg),
            ModelKind::Rr => Some(SecondStep::Rr),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}; expected one of rg, rr, qgarch, rcaviar, sq")))
    }
}

/// A model fitted at one quantile level.
#[derive(Debug, Clone)]
pub enum Fitted<T> {
    TwoStep { step: SecondStep, params: GarchParams<T>, coeffs: QuantileCoeffs<T> },
    Qgarch(QgarchForecaster<T>),
    Rcaviar(RcaviarFit<T>),
    Sq { tau: T },
}

impl<T: Scalar> Fitted<T> {
    /// Quantile for the day after the last observation of `history`.
    pub fn forecast(&self, history: &[DailyObservation<T>]) -> Result<T> {
        match self {
            Fitted::TwoStep { step, params, coeffs } => forecast_next(history, params, coeffs, *step),
            Fitted::Qgarch(f) => f.forecast(&history.iter().map(|o| o.y).collect::<Vec<_>>()),
            Fitted::Rcaviar(f) => f.forecast(history),
            Fitted::Sq { tau } => sample_quantile_forecast(&history.iter().map(|o| o.y).collect::<Vec<_>>(), *tau),
        }
    }

    /// `(omega, gamma, alpha, beta)` of the quantile equation; unused slots are zero.
    pub fn coefficients(&self, history: &[DailyObservation<T>]) -> [T; 4] {
        match self {
            Fitted::TwoStep { coeffs, .. } => coeffs.to_array(),
            Fitted::Qgarch(f) => [f.coeffs[0], f.coeffs[1], f.coeffs[2], T::zero()],
            Fitted::Rcaviar(f) => f.params.to_array(),
            Fitted::Sq { .. } => {
                let q = self.forecast(history).unwrap_or_else(|_| T::nan());
                [q, T::zero(), T::zero(), T::zero()]
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions<T> {
    pub bounds: ParamBox<T>,
    pub qmle: QmleOptions<T>,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self { bounds: ParamBox::default(), qmle: QmleOptions::default() }
    }
}

/// Results of [`fit_models`], with the shared first steps kept for reporting.
#[derive(Debug)]
pub struct ModelFits<T> {
    /// Realized-GARCH QMLE, present when `rg` or `rr` was requested.
    pub qmle: Option<Result<QmleFit<T>>>,
    /// QGARCH volatility step, present when `qgarch` was requested.
    pub qgarch: Option<Result<QgarchVolatility<T>>>,
    /// Indexed `[model][tau]`.
    pub cells: Vec<Vec<Result<Fitted<T>>>>,
}

/// Fits every `(model, tau)` pair on `obs`, sharing the level-independent first steps.
pub fn fit_models<T: Scalar>(
    obs: &[DailyObservation<T>],
    models: &[ModelKind],
    taus: &[T],
    seed: u64,
    opts: &FitOptions<T>,
) -> ModelFits<T> {
    let needs_qmle = models.iter().any(|m| m.second_step().is_some());
    let qmle = needs_qmle.then(|| fit_qmle_with(obs, &opts.bounds, seed, &opts.qmle));
    let y: Vec<T> = obs.iter().map(|o| o.y).collect();
    let qgarch = models.contains(&ModelKind::Qgarch).then(|| fit_qgarch_volatility(&y, seed, &opts.qmle));

    let cells = models
        .iter()
        .map(|&model| {
            taus.iter()
                .map(|&tau| match model {
                    ModelKind::Rg | ModelKind::Rr => {
                        let step = model.second_step().expect("two-step model");
                        let fit = qmle.as_ref().expect("qmle requested").as_ref().map_err(Error::duplicate)?;
                        let coeffs = fit_second_step(obs, &fit.params, step, tau)?;
                        Ok(Fitted::TwoStep { step, params: fit.params, coeffs })
                    }
                    ModelKind::Qgarch => {
                        let vol = qgarch.as_ref().expect("qgarch requested").as_ref().map_err(Error::duplicate)?;
                        Ok(Fitted::Qgarch(vol.fit_quantile(&y, tau)?))
                    }
                    ModelKind::Rcaviar => Ok(Fitted::Rcaviar(fit_rcaviar(obs, tau, seed)?)),
                    ModelKind::Sq => {
                        sample_quantile_forecast(&y, tau)?;
                        Ok(Fitted::Sq { tau })
                    }
                })
                .collect()
        })
        .collect();
    ModelFits { qmle, qgarch, cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
        }
        assert_eq!("RG".parse::<ModelKind>().unwrap(), ModelKind::Rg);
        assert!(matches!("garch".parse::<ModelKind>(), Err(Error::Config(_))));
    }
}
