//! Acceptance criteria, one line of output per criterion. Runs as a plain
//! binary so the verdict lines always reach the terminal.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rgq_core::backtest::{dq_test, lrcc_test, lruc_test};
use rgq_core::market_data::build_daily_observations;
use rgq_core::models::ModelKind;
use rgq_core::quantile_regression::{solve_dense, solve_qr_full, Design, DesignRow};
use rgq_core::realized::realized_quantile;
use rgq_core::rolling::{rolling_backtest, rolling_backtest_many, RollingConfig};
use rgq_core::simulator::{mae_experiment, simulate_panel, DgpConfig, ExperimentGrid, ExperimentResult};
use rgq_core::special::normal_quantile;
use rgq_core::{IntradayDay, RealizedQuantileSpec};

use common::{brute_force_qr, random_instance};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn qr_matches_vertex_enumeration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let p = rng.random_range(1..=3);
        let n = rng.random_range(p + 3..=30);
        let tau = [0.05, 0.25, 0.5][k % 3];
        let (x, y) = random_instance(10_000 + k as u64, n, p);
        let sol = solve_dense(&Design { x: &x, p }, &y, tau).map_err(|e| format!("instance {k}: {e}"))?;
        worst = worst.max((sol.objective - brute_force_qr(&x, p, &y, tau)).abs());
    }
    check(worst <= 1e-9, format!("200 instances, max |objective gap| = {worst:.3e} (tol 1e-9)"))
}

fn hit_count_certificate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let p = 4;
    for k in 0..100 {
        let n = rng.random_range(20..300);
        let tau: f64 = rng.random_range(0.01..0.99);
        let rows: Vec<DesignRow<f64>> = (0..n)
            .map(|_| {
                let a = [1.0, rng.random_range(0.5..3.0), rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)];
                let e: f64 = StandardNormal.sample(&mut rng);
                DesignRow { a, y: -0.5 * a[1] - 0.3 * a[2] + e * a[1] }
            })
            .collect();
        let sol = solve_qr_full(&rows, tau).map_err(|e| format!("fit {k}: {e}"))?;
        let neg = sol.residuals.iter().filter(|r| **r < 0.0).count() as f64;
        let nt = n as f64 * tau;
        if neg < nt - p as f64 || neg > nt {
            return Err(format!("fit {k}: {neg} negative residuals outside [{:.2}, {nt:.2}]", nt - p as f64));
        }
    }
    Ok("100 fits, negative-residual counts all within [n*tau - p, n*tau]".into())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn grid(ns: Vec<usize>, ms: Vec<usize>, taus: Vec<f64>, models: Vec<ModelKind>, seed: u64) -> ExperimentResult {
    let g = ExperimentGrid {
        ns,
        ms,
        taus,
        reps: 100,
        models,
        base: DgpConfig { seed, ..DgpConfig::default() },
        true_quantile_reps: 1_000_000,
        qmle: Default::default(),
    };
    mae_experiment(&g).expect("experiment runs")
}

fn first_step_trend() -> Outcome {
    let small = grid(vec![500], vec![100], vec![0.05], vec![ModelKind::Rg], 3_000);
    let large = grid(vec![2000], vec![1000], vec![0.05], vec![ModelKind::Rg], 3_500);
    let a = small.find(500, 100, None, "qmle", "alpha").unwrap();
    let b = large.find(2000, 1000, None, "qmle", "alpha").unwrap();
    let (ma, mb) = (median(&a.abs_errors), median(&b.abs_errors));
    check(
        mb < ma,
        format!("median |alpha_hat - 0.5|: (2000,1000) = {mb:.4} vs (500,100) = {ma:.4} [failures {} / {}]", b.failures, a.failures),
    )
}

fn second_step_trend() -> Outcome {
    let res = grid(vec![500, 2000], vec![100], vec![0.05, 0.15], vec![ModelKind::Rg, ModelKind::Rr], 4_000);
    let g500 = res.find(500, 100, Some(0.05), "rg", "gamma").unwrap();
    let g2000 = res.find(2000, 100, Some(0.05), "rg", "gamma").unwrap();
    let (m500, m2000) = (median(&g500.abs_errors), median(&g2000.abs_errors));
    let r05 = res.find(2000, 100, Some(0.05), "rr", "alpha").unwrap().mae();
    let r15 = res.find(2000, 100, Some(0.15), "rr", "alpha").unwrap().mae();
    check(
        m2000 < m500 && r05 >= r15,
        format!("median AE gamma_rg n=2000 {m2000:.4} < n=500 {m500:.4}; MAE alpha_rr tau=0.05 {r05:.4} >= tau=0.15 {r15:.4}"),
    )
}

fn forecast_ordering() -> Outcome {
    let res = grid(vec![1000], vec![500], vec![0.05], vec![ModelKind::Rg, ModelKind::Rr, ModelKind::Qgarch], 5_000);
    let mae = |model: &str| res.find(1000, 500, Some(0.05), model, "forecast").unwrap().mae();
    let (rg, rr, qg) = (mae("rg"), mae("rr"), mae("qgarch"));
    check(
        rg < qg && rg <= 1.1 * rr && rr <= 1.1 * rg,
        format!("forecast MAE rg = {rg:.4}, rr = {rr:.4}, qgarch = {qg:.4}"),
    )
}

fn realized_quantile_consistency() -> Outcome {
    let (m, tau, sigma, lambda) = (1000usize, 0.05, 1.0, 6.5 / 24.0);
    let step_sd = sigma * (lambda / m as f64).sqrt();
    let spec = RealizedQuantileSpec::new(tau).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut total = 0.0;
    for rep in 0..500 {
        let mut x = 0.0;
        let mut prices = vec![x];
        for _ in 0..m {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += step_sd * z;
            prices.push(x);
        }
        let day = IntradayDay::new(rep + 1, prices, 0.0).unwrap();
        total += realized_quantile(&day, &spec).unwrap();
    }
    let mean = total / 500.0;
    let target = normal_quantile(tau) * sigma * lambda.sqrt();
    let rel = (mean / target - 1.0).abs();
    check(rel <= 0.02, format!("mean {mean:.5} vs z*sigma*sqrt(lambda) = {target:.5}, relative gap {:.3}%", 100.0 * rel))
}

fn backtest_size() -> Outcome {
    let (n, tau, reps) = (1000usize, 0.05, 2000usize);
    let crit = |p: f64| p < 0.05;
    let mut rejections = [0usize; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..reps {
        let hits: Vec<bool> = (0..n).map(|_| rng.random_bool(tau)).collect();
        let q: Vec<f64> = (0..n).map(|_| -1.645 * (1.0 + 0.5 * rng.random::<f64>())).collect();
        rejections[0] += crit(lruc_test(&hits, tau).unwrap().p_value) as usize;
        rejections[1] += crit(lrcc_test(&hits, tau).unwrap().test.p_value) as usize;
        rejections[2] += crit(dq_test(&hits, &q, tau, 4).unwrap().p_value) as usize;
    }
    let rates = rejections.map(|r| r as f64 / reps as f64);
    check(
        rates.iter().all(|r| (0.02..=0.08).contains(r)),
        format!("rejection rates LRuc {:.4}, LRcc {:.4}, DQ {:.4} (band [0.02, 0.08])", rates[0], rates[1], rates[2]),
    )
}

fn lruc_hand_values() -> Outcome {
    let stat = |x: usize| lruc_test(&(0..100).map(|i| i < x).collect::<Vec<_>>(), 0.05).unwrap().statistic;
    let cases = [(5usize, 0.0), (10, 4.1324), (0, 10.2587)];
    let mut detail = Vec::new();
    let mut ok = true;
    for (x, want) in cases {
        let got = stat(x);
        let pass = (got - want).abs() <= 1e-3;
        ok &= pass;
        detail.push(format!("x={x}: {got:.6} vs {want} {}", if pass { "ok" } else { "outside 1e-3" }));
    }
    check(ok, detail.join("; "))
}

fn rolling_forecast_count() -> Outcome {
    let (days, _) = simulate_panel(&DgpConfig { n: 1758, m: 100, seed: 909, ..DgpConfig::default() }).unwrap();
    let obs = build_daily_observations(&days, &[0.05]).unwrap();
    let res = rolling_backtest_many(&obs, &ModelKind::ALL, &[0.05], &RollingConfig { seed: 909, ..RollingConfig::new(500) })
        .map_err(|e| e.to_string())?;
    let counts: Vec<String> = res.iter().map(|r| format!("{}={}", r.model, r.forecasts.len())).collect();
    check(res.len() == 5 && res.iter().all(|r| r.forecasts.len() == 1258), format!("forecasts per model: {}", counts.join(", ")))
}

fn coverage_calibration() -> Outcome {
    let (days, _) = simulate_panel(&DgpConfig { n: 1500, m: 100, seed: 1010, ..DgpConfig::default() }).unwrap();
    let obs = build_daily_observations(&days, &[0.05]).unwrap();
    let r = rolling_backtest(&obs, ModelKind::Rg, 0.05, &RollingConfig { seed: 1010, ..RollingConfig::new(500) }).map_err(|e| e.to_string())?;
    let rate = r.report.as_ref().ok_or("no report")?.hit_rate;
    let band = 3.0 * (0.05f64 * 0.95 / 1000.0).sqrt();
    check(
        r.forecasts.len() == 1000 && (rate - 0.05).abs() <= band,
        format!("{} forecasts, hit rate {rate:.4} (band 0.05 +/- {band:.4})", r.forecasts.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("quantile regression matches vertex enumeration", qr_matches_vertex_enumeration),
        ("hit-count certificate", hit_count_certificate),
        ("first-step consistency trend", first_step_trend),
        ("second-step trend", second_step_trend),
        ("forecast ordering", forecast_ordering),
        ("realized quantile consistency", realized_quantile_consistency),
        ("backtest size", backtest_size),
        ("LRuc hand values", lruc_hand_values),
        ("rolling forecast count", rolling_forecast_count),
        ("coverage calibration", coverage_calibration),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
