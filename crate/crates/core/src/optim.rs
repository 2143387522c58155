//! Derivative-free simplex search used by the likelihood and check-loss fits.

use crate::num::Scalar;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions<T> {
    pub max_iter: usize,
    /// Stop once the spread of objective values across the simplex drops below this.
    pub ftol: T,
    /// Edge length of the initial simplex, per coordinate.
    pub initial_step: T,
    /// Number of restarts from the incumbent after convergence.
    pub restarts: usize,
}

impl<T: Scalar> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self { max_iter: 2000, ftol: T::lit(1e-10), initial_step: T::lit(0.5), restarts: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as `+inf`.
///
/// The returned value never exceeds `f(x0)`.
pub fn nelder_mead<T, F>(f: F, x0: &[T], opts: &NelderMeadOptions<T>) -> Minimum<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T,
{
    let mut evals = 0usize;
    let eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };

    let mut best_x = x0.to_vec();
    let mut best_v = eval(x0, &mut evals);
    let mut total_iter = 0usize;
    let mut converged = false;

    for _ in 0..=opts.restarts {
        if total_iter >= opts.max_iter {
            break;
        }
        let run = simplex_run(&eval, &best_x, best_v, opts, opts.max_iter - total_iter, &mut evals);
        total_iter += run.iterations;
        converged = run.converged;
        let improved = run.value < best_v;
        if run.value <= best_v {
            best_x = run.x;
            best_v = run.value;
        }
        if !improved {
            break;
        }
    }
    Minimum { x: best_x, value: best_v, iterations: total_iter, evaluations: evals, converged }
}

fn simplex_run<T, E>(eval: &E, x0: &[T], f0: T, opts: &NelderMeadOptions<T>, budget: usize, evals: &mut usize) -> Minimum<T>
where
    T: Scalar,
    E: Fn(&[T], &mut usize) -> T,
{
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut pts: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    pts.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = x[i] + opts.initial_step;
        let v = eval(&x, evals);
        pts.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        pts.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("objective is never NaN"));
        let (lo, hi) = (pts[0].1, pts[n].1);
        if hi.is_finite() && hi - lo <= opts.ftol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &pts[..n] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi;
            }
        }
        let nt = T::from_usize_lossy(n);
        centroid.iter_mut().for_each(|c| *c = *c / nt);

        let toward = |coef: T| -> Vec<T> {
            centroid.iter().zip(&pts[n].0).map(|(&c, &w)| c + coef * (c - w)).collect()
        };
        let xr = toward(alpha);
        let fr = eval(&xr, evals);
        if fr < pts[0].1 {
            let xe = toward(alpha * gamma);
            let fe = eval(&xe, evals);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < pts[n].1 {
                let xc = toward(alpha * rho);
                let fc = eval(&xc, evals);
                (xc, fc)
            } else {
                let xc = toward(-rho);
                let fc = eval(&xc, evals);
                (xc, fc)
            };
            if fc < pts[n].1.min(fr) {
                pts[n] = (xc, fc);
            } else {
                let best = pts[0].0.clone();
                for (x, v) in pts.iter_mut().skip(1) {
                    for (xi, &bi) in x.iter_mut().zip(&best) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                    *v = eval(x, evals);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("objective is never NaN"));
    let (x, value) = pts.swap_remove(0);
    Minimum { x, value, iterations, evaluations: 0, converged }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}
