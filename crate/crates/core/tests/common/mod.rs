//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn check_loss(tau: f64, r: f64) -> f64 {
    r * (tau - if r < 0.0 { 1.0 } else { 0.0 })
}

pub fn objective(x: &[f64], p: usize, y: &[f64], b: &[f64], tau: f64) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, &yi)| check_loss(tau, yi - (0..p).map(|k| x[i * p + k] * b[k]).sum::<f64>()))
        .sum()
}

/// Solves a small square system by Gaussian elimination; `None` if near singular.
pub fn solve_square(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = (0..p).map(|i| {
        let mut row = a[i * p..(i + 1) * p].to_vec();
        row.push(b[i]);
        row
    }).collect();
    for c in 0..p {
        let r = (c..p).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[r][c].abs() < 1e-9 {
            return None;
        }
        m.swap(r, c);
        for i in 0..p {
            if i != c {
                let f = m[i][c] / m[c][c];
                for k in c..=p {
                    m[i][k] -= f * m[c][k];
                }
            }
        }
    }
    Some((0..p).map(|i| m[i][p] / m[i][i]).collect())
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..n {
        cur.push(i);
        subsets(n, k, i + 1, cur, f);
        cur.pop();
    }
}

/// Minimum check loss over every vertex fit through `p` rows.
pub fn brute_force_qr(x: &[f64], p: usize, y: &[f64], tau: f64) -> f64 {
    let n = y.len();
    let mut best = f64::INFINITY;
    subsets(n, p, 0, &mut Vec::new(), &mut |rows| {
        let a: Vec<f64> = rows.iter().flat_map(|&i| x[i * p..(i + 1) * p].to_vec()).collect();
        let b: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        if let Some(coef) = solve_square(&a, &b, p) {
            best = best.min(objective(x, p, y, &coef, tau));
        }
    });
    best
}

/// Random design with an intercept column and a heteroskedastic response.
pub fn random_instance(seed: u64, n: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut fit = 0.5;
        x.push(1.0);
        for k in 1..p {
            let v: f64 = rng.random_range(-2.0..2.0);
            fit += (k as f64) * v;
            x.push(v);
        }
        let e: f64 = rng.random_range(-1.0..1.0) * (1.0 + fit.abs());
        y.push(fit + e);
    }
    (x, y)
}
