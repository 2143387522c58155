use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgq_core::backtest::{dq_test, lrcc_test, lruc_test, quantile_loss, BacktestReport};

proptest! {
    #[test]
    fn statistics_are_nonnegative_with_valid_p_values(bits in proptest::collection::vec(any::<bool>(), 20..200), tau in 0.01f64..0.5) {
        let uc = lruc_test(&bits, tau).unwrap();
        let cc = lrcc_test(&bits, tau).unwrap().test;
        for t in [uc, cc] {
            prop_assert!(t.statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&t.p_value));
        }
        let q: Vec<f64> = (0..bits.len()).map(|i| -1.0 - (i as f64 * 0.37).sin().abs()).collect();
        if let Ok(dq) = dq_test(&bits, &q, tau, 4) {
            prop_assert!(dq.statistic >= -1e-9);
            prop_assert!((0.0..=1.0).contains(&dq.p_value));
        }
    }

    #[test]
    fn lruc_is_minimal_at_nominal_coverage(n in 20usize..300, tau in 0.01f64..0.99) {
        let stat = |x: usize| {
            let hits: Vec<bool> = (0..n).map(|i| i < x).collect();
            lruc_test(&hits, tau).unwrap().statistic
        };
        let center = n as f64 * tau;
        for x in 0..n {
            if (x as f64) + 1.0 <= center {
                prop_assert!(stat(x) > stat(x + 1));
            } else if (x as f64) >= center {
                prop_assert!(stat(x + 1) > stat(x));
            }
        }
    }

    #[test]
    fn quantile_loss_properties(y in proptest::collection::vec(-5.0f64..5.0, 1..50), c in -3.0f64..3.0, tau in 0.01f64..0.99) {
        let q: Vec<f64> = y.iter().map(|v| v * 0.5 - 0.2).collect();
        let base = quantile_loss(&y, &q, tau).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert_eq!(quantile_loss(&y, &y, tau).unwrap(), 0.0);
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        let qs: Vec<f64> = q.iter().map(|v| v + c).collect();
        prop_assert!((quantile_loss(&ys, &qs, tau).unwrap() - base).abs() < 1e-9);
    }
}

#[test]
fn quantile_loss_hand_value() {
    assert!((quantile_loss(&[1.0f64, -1.0], &[0.0, 0.0], 0.05).unwrap() - 0.5).abs() < 1e-15);
    assert!(quantile_loss(&[1.0f64], &[0.0, 0.0], 0.05).is_err());
}

#[test]
fn dq_rejects_clustered_hits_more_strongly_with_more_data() {
    let tau = 0.05;
    let stat = |n: usize| {
        // runs of 5 consecutive hits every 100 days
        let hits: Vec<bool> = (0..n).map(|i| i % 100 < 5).collect();
        let q: Vec<f64> = (0..n).map(|i| -1.6 - 0.1 * ((i * 13) % 7) as f64).collect();
        dq_test(&hits, &q, tau, 4).unwrap()
    };
    let (a, b) = (stat(500), stat(2000));
    assert!(b.statistic > a.statistic);
    assert!(b.p_value < 1e-6);
}

#[test]
fn report_is_deterministic_and_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
    let q: Vec<f64> = (0..300).map(|i| -2.0 - 0.3 * ((i % 5) as f64)).collect();
    let a = BacktestReport::evaluate("rg", &y, &q, 0.05, 4).unwrap();
    let b = BacktestReport::evaluate("rg", &y, &q, 0.05, 4).unwrap();
    assert_eq!(a.csv_row(), b.csv_row());
    for t in [a.lruc, a.lrcc, a.dq.unwrap()] {
        assert!(t.statistic >= 0.0 && (0.0..=1.0).contains(&t.p_value));
    }
    assert!((0.0..=1.0).contains(&a.hit_rate));
}
