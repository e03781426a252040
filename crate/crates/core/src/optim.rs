//! BFGS minimization with a strong-Wolfe line search.
//!
//! Dense inverse-Hessian update, suitable for the low-dimensional smooth
//! problems in this crate (12 parameters for the occupancy likelihood).
//! The line search brackets then zooms (bisection with a safeguarded
//! quadratic step), enforcing the strong Wolfe conditions so the BFGS
//! curvature condition holds on every accepted step.

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimize `f_g` (value and gradient) from `x0`.
///
/// Stops when the gradient 2-norm falls below `tol` (converged) or after
/// `max_iter` iterations or an irrecoverably stalled line search (not
/// converged; the best point found is still returned).
pub fn minimize(
    f_g: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f_g(&x);
    // Inverse Hessian approximation, dense row-major.
    let mut h = identity(n);
    let mut just_reset = true;

    for iter in 0..max_iter {
        let gnorm = norm(&g);
        if gnorm < tol {
            return OptimResult {
                x,
                f: fx,
                grad_norm: gnorm,
                converged: true,
                iterations: iter,
            };
        }

        let mut p = mat_vec(&h, &g);
        for v in &mut p {
            *v = -*v;
        }
        if dot(&p, &g) >= 0.0 {
            // Not a descent direction: fall back to steepest descent.
            h = identity(n);
            p = g.iter().map(|v| -v).collect();
            just_reset = true;
        }

        match wolfe_search(f_g, &x, fx, &g, &p) {
            Some((alpha, x_new, f_new, g_new)) => {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    if just_reset {
                        // Scale the initial inverse Hessian to the problem.
                        let scale = sy / dot(&y, &y);
                        h = identity(n);
                        for i in 0..n {
                            h[i * n + i] = scale;
                        }
                        just_reset = false;
                    }
                    bfgs_update(&mut h, &s, &y, sy);
                }
                let _ = alpha;
                x = x_new;
                fx = f_new;
                g = g_new;
            }
            None => {
                if just_reset {
                    // Even steepest descent cannot improve: stop here.
                    return OptimResult {
                        grad_norm: norm(&g),
                        x,
                        f: fx,
                        converged: false,
                        iterations: iter,
                    };
                }
                h = identity(n);
                just_reset = true;
            }
        }
    }
    OptimResult {
        grad_norm: norm(&g),
        x,
        f: fx,
        converged: false,
        iterations: max_iter,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

/// H <- (I - rho s yT) H (I - rho y sT) + rho s sT, rho = 1/sy.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}

type SearchHit = (f64, Vec<f64>, f64, Vec<f64>);

/// Strong-Wolfe line search along `p` (Nocedal-Wright bracketing scheme).
fn wolfe_search(
    f_g: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    x: &[f64],
    f0: f64,
    g0: &[f64],
    p: &[f64],
) -> Option<SearchHit> {
    let d0 = dot(g0, p);
    debug_assert!(d0 < 0.0);
    let mut eval = |alpha: f64| -> (f64, f64, Vec<f64>, Vec<f64>) {
        let xa: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect();
        let (fa, ga) = f_g(&xa);
        let da = dot(&ga, p);
        (fa, da, xa, ga)
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = d0;
    let mut alpha = 1.0;
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None;

    for i in 0..30 {
        let (fa, da, xa, ga) = eval(alpha);
        if !fa.is_finite() {
            // Step overshot into bad territory: treat as a high bracket.
            bracket = Some((alpha_prev, f_prev, d_prev, alpha, f64::INFINITY, f64::NAN));
            break;
        }
        if fa > f0 + C1 * alpha * d0 || (i > 0 && fa >= f_prev) {
            bracket = Some((alpha_prev, f_prev, d_prev, alpha, fa, da));
            break;
        }
        if da.abs() <= -C2 * d0 {
            return Some((alpha, xa, fa, ga));
        }
        if da >= 0.0 {
            bracket = Some((alpha, fa, da, alpha_prev, f_prev, d_prev));
            break;
        }
        alpha_prev = alpha;
        f_prev = fa;
        d_prev = da;
        alpha *= 2.0;
    }

    let (mut lo, mut f_lo, mut d_lo, mut hi, mut f_hi, _d_hi) = bracket?;
    for _ in 0..50 {
        // Quadratic interpolation through (lo, f_lo, d_lo) and (hi, f_hi),
        // safeguarded toward bisection.
        let mut a = if f_hi.is_finite() {
            let denom = 2.0 * (f_hi - f_lo - d_lo * (hi - lo));
            if denom.abs() > 1e-300 {
                lo - d_lo * (hi - lo) * (hi - lo) / denom
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let (lo_b, hi_b) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let width = hi_b - lo_b;
        if !(a.is_finite()) || a <= lo_b + 0.1 * width || a >= hi_b - 0.1 * width {
            a = 0.5 * (lo + hi);
        }
        let (fa, da, xa, ga) = eval(a);
        // Strict comparison against f_lo: in the flat region where f no
        // longer decreases representably, progress is judged by curvature.
        if !fa.is_finite() || fa > f0 + C1 * a * d0 || fa > f_lo {
            hi = a;
            f_hi = fa;
        } else {
            if da.abs() <= -C2 * d0 {
                return Some((a, xa, fa, ga));
            }
            if da * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = a;
            f_lo = fa;
            d_lo = da;
        }
        if (hi - lo).abs() < 1e-14 * lo.abs().max(1.0) {
            break;
        }
    }
    // Tolerance collapse: accept the best sufficient-decrease point if any.
    if f_lo < f0 && lo > 0.0 {
        let (fa, _, xa, ga) = eval(lo);
        return Some((lo, xa, fa, ga));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn minimizes_a_diagonal_quadratic_exactly() {
        let diag = [1.0, 4.0, 9.0, 0.5];
        let b = [1.0, -2.0, 3.0, 0.25];
        let mut f = |x: &[f64]| {
            let f: f64 = (0..4)
                .map(|i| 0.5 * diag[i] * x[i] * x[i] - b[i] * x[i])
                .sum();
            let g: Vec<f64> = (0..4).map(|i| diag[i] * x[i] - b[i]).collect();
            (f, g)
        };
        let r = minimize(&mut f, &[0.0; 4], 1e-10, 200);
        assert!(r.converged);
        for i in 0..4 {
            assert!((r.x[i] - b[i] / diag[i]).abs() < 1e-8, "{:?}", r.x);
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let mut f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (f, g)
        };
        let r = minimize(&mut f, &[-1.2, 1.0], 1e-8, 500);
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!((r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn descends_monotonically_under_wolfe_steps() {
        let mut trace = Vec::new();
        let mut f = |x: &[f64]| {
            let f = x[0].powi(4) + (x[0] - 2.0 * x[1]).powi(2) + (x[1] + 1.0).powi(2);
            trace.push(f);
            let g = vec![
                4.0 * x[0].powi(3) + 2.0 * (x[0] - 2.0 * x[1]),
                -4.0 * (x[0] - 2.0 * x[1]) + 2.0 * (x[1] + 1.0),
            ];
            (f, g)
        };
        let r = minimize(&mut f, &[3.0, -2.0], 1e-9, 300);
        assert!(r.converged);
        assert!(r.f <= trace[0]);
    }

    #[test]
    fn random_convex_problems_reach_small_gradients() {
        let mut rng = crate::seed::rng_for(601, "optim");
        for _ in 0..5 {
            let n = rng.gen_range(2..8);
            // A = M M^T + I, SPD by construction.
            let m: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += m[i * n + k] * m[j * n + k];
                    }
                    a[i * n + j] = s + if i == j { 1.0 } else { 0.0 };
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut f = |x: &[f64]| {
                let ax = mat_vec(&a, x);
                let f = 0.5 * dot(x, &ax) - dot(&b, x);
                let g: Vec<f64> = ax.iter().zip(&b).map(|(v, bi)| v - bi).collect();
                (f, g)
            };
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // 1e-6 keeps the target above the floating-point floor of
            // representable decrease for f of order one.
            let r = minimize(&mut f, &x0, 1e-6, 500);
            assert!(r.converged, "n={n} {r:?}");
            assert!(r.grad_norm < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_start_is_already_converged() {
        let mut f = |x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]);
        let r = minimize(&mut f, &[0.0], 1e-8, 100);
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }
}
