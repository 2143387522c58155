//! Realized variance and scaled realized quantiles of one session.

use crate::error::{Error, Result};
use crate::market_data::IntradayDay;
use crate::num::{lower_quantile_in_place, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedQuantileSpec<T> {
    tau: T,
    scale_exponent: T,
}

impl<T: Scalar> RealizedQuantileSpec<T> {
    /// Quantile level `tau` with the Brownian scaling exponent 0.5.
    pub fn new(tau: T) -> Result<Self> {
        Self::with_exponent(tau, T::lit(0.5))
    }

    pub fn with_exponent(tau: T, scale_exponent: T) -> Result<Self> {
        if !(tau > T::zero() && tau < T::one()) {
            return Err(Error::Domain(format!("quantile level must lie in (0,1), got {tau}")));
        }
        if !(scale_exponent > T::zero() && scale_exponent < T::one()) {
            return Err(Error::Domain(format!("scale exponent must lie in (0,1), got {scale_exponent}")));
        }
        Ok(Self { tau, scale_exponent })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn scale_exponent(&self) -> T {
        self.scale_exponent
    }
}

/// Sum of squared intraday increments.
pub fn realized_variance<T: Scalar>(day: &IntradayDay<T>) -> Result<T> {
    if day.log_prices.len() < 2 {
        return Err(Error::InsufficientData("realized variance needs at least one increment".into()));
    }
    let mut rv = T::zero();
    for dx in day.increments() {
        if !dx.is_finite() {
            return Err(Error::Numeric(format!("non-finite increment on day {}", day.day_index)));
        }
        rv = rv + dx * dx;
    }
    Ok(rv)
}

/// Empirical `tau`-quantile of the increments, scaled by `m^H` to the
/// open-to-close horizon.
pub fn realized_quantile<T: Scalar>(day: &IntradayDay<T>, spec: &RealizedQuantileSpec<T>) -> Result<T> {
    let m = day.log_prices.len().saturating_sub(1);
    if m < 2 {
        return Err(Error::InsufficientData(format!("realized quantile needs at least 2 increments, got {m}")));
    }
    let mut inc: Vec<T> = day.increments().collect();
    if inc.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite increment on day {}", day.day_index)));
    }
    let q = lower_quantile_in_place(&mut inc, spec.tau);
    Ok(q * T::from_usize_lossy(m).powf(spec.scale_exponent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day_from_increments(inc: &[f64]) -> IntradayDay<f64> {
        let mut prices = vec![0.0];
        for dx in inc {
            prices.push(prices.last().unwrap() + dx);
        }
        IntradayDay::new(1, prices, 0.0).unwrap()
    }

    #[test]
    fn rv_hand_value() {
        let day = IntradayDay::new(1, vec![0.0f64, 0.01, -0.01], 0.0).unwrap();
        assert!((realized_variance(&day).unwrap() - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn rv_constant_prices_is_zero() {
        let day = IntradayDay::new(1, vec![4.6; 10], 4.6).unwrap();
        assert_eq!(realized_variance(&day).unwrap(), 0.0);
    }

    #[test]
    fn rv_quadratic_homogeneity() {
        let day = IntradayDay::new(1, vec![0.0, 0.3, -0.2, 0.1], 0.0).unwrap();
        let doubled = IntradayDay::new(1, day.log_prices.iter().map(|x| 2.0 * x).collect(), 0.0).unwrap();
        let (a, b): (f64, f64) = (realized_variance(&day).unwrap(), realized_variance(&doubled).unwrap());
        assert!((b - 4.0 * a).abs() < 1e-14);
    }

    #[test]
    fn rq_constant_increments() {
        let m = 16;
        let prices: Vec<f64> = (0..=m).map(|i| 0.25 * i as f64).collect();
        let day = IntradayDay::new(1, prices, 0.0).unwrap();
        let spec = RealizedQuantileSpec::new(0.05).unwrap();
        assert_eq!(realized_quantile(&day, &spec).unwrap(), 0.25 * 4.0);
    }

    #[test]
    fn rq_median_of_symmetric_sample() {
        let day = day_from_increments(&[-0.3, -0.1, 0.0, 0.1, 0.3]);
        let spec = RealizedQuantileSpec::new(0.5).unwrap();
        assert!(realized_quantile(&day, &spec).unwrap().abs() < 1e-15);
    }

    #[test]
    fn rq_needs_two_increments() {
        let day = IntradayDay::new(1, vec![0.0, 1.0], 0.0).unwrap();
        let spec = RealizedQuantileSpec::new(0.05).unwrap();
        assert!(matches!(realized_quantile(&day, &spec), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn spec_rejects_bad_levels() {
        assert!(RealizedQuantileSpec::new(0.0f64).is_err());
        assert!(RealizedQuantileSpec::new(1.0f64).is_err());
        assert!(RealizedQuantileSpec::with_exponent(0.5f64, 1.0).is_err());
    }

    #[test]
    fn rq_matches_check_loss_brute_force() {
        let inc = [0.4, -1.2, 0.7, 0.05, -0.3, 2.0, -0.9, 0.1, 0.2, -0.05, 1.1];
        let day = day_from_increments(&inc);
        for tau in [0.05, 0.1, 0.25, 0.5, 0.9] {
            let loss = |b: f64| inc.iter().map(|x| { let r = x - b; r * (tau - if r < 0.0 { 1.0 } else { 0.0 }) }).sum::<f64>();
            // smallest candidate among the sample points that attains the minimum
            let mut cands = inc.to_vec();
            cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let best = cands.iter().map(|&b| loss(b)).fold(f64::INFINITY, f64::min);
            let argmin = *cands.iter().find(|&&b| loss(b) <= best + 1e-12).unwrap();
            let spec = RealizedQuantileSpec::new(tau).unwrap();
            let rq = realized_quantile(&day, &spec).unwrap();
            assert!((rq - argmin * (inc.len() as f64).sqrt()).abs() < 1e-12, "tau={tau}");
        }
    }

    #[test]
    fn works_in_f32() {
        let day = IntradayDay::new(1, vec![0.0f32, 0.01, -0.01], 0.0).unwrap();
        assert!((realized_variance(&day).unwrap() - 5e-4).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn rq_homogeneous_permutation_invariant_monotone(
            inc in proptest::collection::vec(-5.0f64..5.0, 3..40),
            c in 0.1f64..10.0,
            seed in 0u64..1000,
        ) {
            let day = day_from_increments(&inc);
            let spec = RealizedQuantileSpec::new(0.1).unwrap();
            let base = realized_quantile(&day, &spec).unwrap();

            let mut q_inc = inc.clone();
            let mut scaled_inc: Vec<f64> = inc.iter().map(|x| c * x).collect();
            let scaled = realized_quantile(&day_from_increments(&scaled_inc), &spec).unwrap();
            // quantile of scaled increments vs direct order statistic of scaled sample
            let direct = lower_quantile_in_place(&mut scaled_inc, 0.1) * (inc.len() as f64).sqrt();
            // increments pass through cumulative prices, so allow rounding
            prop_assert!((scaled - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            prop_assert!((scaled - c * base).abs() <= 1e-9 * (1.0 + base.abs() * c));

            let k = (seed as usize) % q_inc.len();
            q_inc.rotate_left(k);
            q_inc.reverse();
            let permuted = day_from_increments(&q_inc);
            prop_assert!((realized_quantile(&permuted, &spec).unwrap() - base).abs() < 1e-9);
            let rv = realized_variance(&day).unwrap();
            prop_assert!((realized_variance(&permuted).unwrap() - rv).abs() < 1e-9 * (1.0 + rv));

            let lo = realized_quantile(&day, &RealizedQuantileSpec::new(0.05).unwrap()).unwrap();
            let hi = realized_quantile(&day, &RealizedQuantileSpec::new(0.3).unwrap()).unwrap();
            prop_assert!(lo <= base && base <= hi);
        }
    }
}
