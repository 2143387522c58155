mod common;

use proptest::prelude::*;
use rgq_core::first_step::filter_h;
use rgq_core::market_data::build_daily_observations;
use rgq_core::quantile_regression::{design_rows, fit_rg, fit_rr, solve_dense, solve_qr, Design, DesignRow, SecondStep};
use rgq_core::simulator::{simulate_panel, DgpConfig, ShockDist};
use rgq_core::special::normal_quantile;
use rgq_core::{DailyObservation, Error};

use common::{brute_force_qr, objective, random_instance};

fn count_negative(r: &[f64]) -> usize {
    r.iter().filter(|v| **v < 0.0).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_vertex_enumeration(seed in 0u64..10_000, n in 6usize..20, p in 1usize..4, ti in 0usize..3) {
        let tau = [0.1, 0.5, 0.8][ti];
        let (x, y) = random_instance(seed, n, p);
        let sol = solve_dense(&Design { x: &x, p }, &y, tau).unwrap();
        let best = brute_force_qr(&x, p, &y, tau);
        prop_assert!((sol.objective - best).abs() <= 1e-9 * (1.0 + best), "{} vs {best}", sol.objective);
        prop_assert!((objective(&x, p, &y, &sol.coef, tau) - sol.objective).abs() < 1e-9);
    }

    #[test]
    fn certificate_holds(seed in 0u64..10_000, n in 10usize..120, p in 1usize..5, tau in 0.02f64..0.98) {
        let (x, y) = random_instance(seed, n, p);
        let sol = solve_dense(&Design { x: &x, p }, &y, tau).unwrap();
        let neg = count_negative(&sol.residuals) as f64;
        let nt = n as f64 * tau;
        prop_assert!(neg >= nt - p as f64 - 1e-9 && neg <= nt + 1e-9, "neg={neg}, n*tau={nt}");
        prop_assert_eq!(sol.basis.len(), p);
        for &i in &sol.basis {
            prop_assert_eq!(sol.residuals[i], 0.0);
        }
        for u in &sol.dual {
            prop_assert!(*u >= tau - 1.0 - 1e-9 && *u <= tau + 1e-9, "dual {u}");
        }
    }

    #[test]
    fn equivariance(seed in 0u64..10_000, n in 10usize..60, p in 1usize..4, tau in 0.05f64..0.95, c in 0.1f64..10.0) {
        let (x, y) = random_instance(seed, n, p);
        let d = Design { x: &x, p };
        let base = solve_dense(&d, &y, tau).unwrap();

        let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
        let s = solve_dense(&d, &scaled, tau).unwrap();
        prop_assert!((s.objective - c * base.objective).abs() <= 1e-9 * (1.0 + c * base.objective));

        // adding X b to the response shifts the optimum by b
        let shift: Vec<f64> = (0..p).map(|k| 0.5 - k as f64).collect();
        let moved: Vec<f64> = (0..n).map(|i| y[i] + (0..p).map(|k| x[i * p + k] * shift[k]).sum::<f64>()).collect();
        let m = solve_dense(&d, &moved, tau).unwrap();
        prop_assert!((m.objective - base.objective).abs() <= 1e-9 * (1.0 + base.objective));

        // negating the response mirrors the level
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let r = solve_dense(&d, &neg, 1.0 - tau).unwrap();
        prop_assert!((r.objective - base.objective).abs() <= 1e-9 * (1.0 + base.objective));
    }

    #[test]
    fn no_descent_direction_nearby(seed in 0u64..10_000, n in 10usize..60, p in 1usize..4, tau in 0.05f64..0.95) {
        let (x, y) = random_instance(seed, n, p);
        let sol = solve_dense(&Design { x: &x, p }, &y, tau).unwrap();
        for k in 0..p {
            for step in [1e-3, -1e-3, 0.1, -0.1] {
                let mut b = sol.coef.clone();
                b[k] += step;
                prop_assert!(objective(&x, p, &y, &b, tau) >= sol.objective - 1e-9);
            }
        }
    }
}

#[test]
fn four_column_rows_and_single_precision() {
    let rows: Vec<DesignRow<f32>> = (0..40)
        .map(|i| {
            let t = i as f32;
            DesignRow { a: [1.0, 1.0 + (t * 0.3).sin().abs(), (t * 0.7).cos(), (t * 0.11).sin()], y: (t * 1.7).sin() }
        })
        .collect();
    let c = solve_qr(&rows, 0.25).unwrap();
    assert!(c.to_array().iter().all(|v| v.is_finite()));
}

#[test]
fn collinear_columns_are_singular() {
    let x: Vec<f64> = (0..20).flat_map(|i| [1.0, i as f64, 2.0 * i as f64]).collect();
    let y: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
    assert!(matches!(solve_dense(&Design { x: &x, p: 3 }, &y, 0.5), Err(Error::Singular(_))));
}

fn gaussian_panel(seed: u64) -> (Vec<DailyObservation>, DgpConfig) {
    let cfg = DgpConfig { n: 2000, m: 500, seed, shock: ShockDist::Zero, ..DgpConfig::default() };
    let (days, _) = simulate_panel(&cfg).unwrap();
    (build_daily_observations(&days, &[0.05, 0.5]).unwrap(), cfg)
}

#[test]
fn rg_tracks_the_true_conditional_quantile() {
    // with Gaussian innovations the quantile map is theta * q_tau; the loadings on
    // h and sqrt(rv) are nearly collinear, so compare fitted quantiles, not coefficients
    let (obs, cfg) = gaussian_panel(31);
    let theta = cfg.params;
    let h = filter_h(&theta, &obs, obs.iter().map(|o| o.rv + o.ov).sum::<f64>().sqrt() / (obs.len() as f64).sqrt()).unwrap().h;
    for tau in [0.05, 0.5] {
        let c = fit_rg(&obs, &theta, tau).unwrap().to_array();
        let q = normal_quantile(tau);
        // twice the large-sample standard error of a fitted quantile with 4 regressors, in units of h
        let density = (-0.5 * q * q).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tol = 2.0 * (4.0 * tau * (1.0 - tau) / obs.len() as f64).sqrt() / density;
        let rows = design_rows(&obs, &theta, SecondStep::Rg, tau).unwrap();
        let mut gap = 0.0;
        for (i, r) in rows.iter().enumerate() {
            let fitted: f64 = r.a.iter().zip(&c).map(|(a, b)| a * b).sum();
            gap += (fitted - h[i + 1] * q).abs();
        }
        let mean_h = h.iter().sum::<f64>() / h.len() as f64;
        let rel = gap / rows.len() as f64 / mean_h;
        assert!(rel < tol, "tau={tau}: mean gap {rel} of mean h, tolerance {tol}");
    }
}

#[test]
fn rr_with_proportional_realized_quantile_reparameterizes_rg() {
    let (obs, cfg) = gaussian_panel(32);
    let z = -1.5;
    let scaled: Vec<DailyObservation> = obs
        .iter()
        .map(|o| {
            let mut s = o.clone();
            s.rq = vec![(0.05, z * o.rv.sqrt())];
            s
        })
        .collect();
    let rg = fit_rg(&scaled, &cfg.params, 0.05).unwrap();
    let rr = fit_rr(&scaled, &cfg.params, 0.05).unwrap();
    assert!((rr.alpha_tau * z - rg.alpha_tau).abs() < 1e-6 * (1.0 + rg.alpha_tau.abs()), "{rg:?} vs {rr:?}");
    for (a, b) in [(rg.omega_tau, rr.omega_tau), (rg.gamma_tau, rr.gamma_tau), (rg.beta_tau, rr.beta_tau)] {
        assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
    }
}
