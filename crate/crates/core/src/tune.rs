//! Bayesian optimization of clustGeo's mixing weight and granularity.
//!
//! Fitness is the mean silhouette over unique locations, computed on
//! z-scored coordinate and habitat columns with uniform weights. A
//! squared-exponential Gaussian process models fitness over the unit
//! square; candidates maximize an upper confidence bound, and the best
//! observed pair wins.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustgeo::{zscore_columns, ClustGeoContext};
use crate::error::{Error, Result};
use crate::ingest::{format_f64, Checklist};
use crate::seed::derive_seed;

/// Exploration weight for the acquisition rule.
pub const UCB_KAPPA: f64 = 2.576;
/// Quasi-random points evaluated before the surrogate takes over.
pub const INITIAL_DESIGN: usize = 5;

/// Mean silhouette width over all points.
///
/// `s(i) = (b - a) / max(a, b)` with `a` the mean distance to the point's
/// own cluster and `b` the smallest mean distance to another cluster.
/// Points in singleton clusters contribute zero.
pub fn mean_silhouette(points: &[Vec<f64>], assignment: &[u32]) -> Result<f64> {
    if points.len() != assignment.len() {
        return Err(Error::Param(format!(
            "{} points but {} assignments",
            points.len(),
            assignment.len()
        )));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("no points to score".into()));
    }
    let k = assignment.iter().copied().max().unwrap() as usize + 1;
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c as usize] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SingleCluster);
    }
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0f64; k];
    for i in 0..n {
        let ci = assignment[i] as usize;
        if sizes[ci] == 1 {
            continue;
        }
        for v in sums.iter_mut() {
            *v = 0.0;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            sums[assignment[j] as usize] += d;
        }
        let a = sums[ci] / (sizes[ci] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != ci && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

/// Upper confidence bound acquisition value.
pub fn ucb(mu: f64, sigma: f64, kappa: f64) -> f64 {
    mu + kappa * sigma
}

/// Squared-exponential surrogate over the unit square.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    /// (normalized params, fitness) pairs.
    pub observations: Vec<([f64; 2], f64)>,
    pub length_scales: [f64; 2],
    /// Noise floor added to the kernel diagonal.
    pub jitter: f64,
}

impl GpSurrogate {
    pub fn new() -> Self {
        Self {
            observations: Vec::new(),
            length_scales: [0.2, 0.2],
            jitter: 1e-8,
        }
    }

    pub fn push(&mut self, x: [f64; 2], y: f64) {
        self.observations.push((x, y));
    }

    fn kernel(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        let mut s = 0.0;
        for d in 0..2 {
            let t = (a[d] - b[d]) / self.length_scales[d];
            s += t * t;
        }
        (-0.5 * s).exp()
    }
}

impl Default for GpSurrogate {
    fn default() -> Self {
        Self::new()
    }
}

/// Cholesky factor of a symmetric matrix, lower triangle in place.
fn cholesky(mat: &mut [Vec<f64>]) -> bool {
    let n = mat.len();
    for j in 0..n {
        let mut d = mat[j][j];
        for k in 0..j {
            d -= mat[j][k] * mat[j][k];
        }
        if d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        mat[j][j] = d;
        for i in j + 1..n {
            let mut v = mat[i][j];
            for k in 0..j {
                v -= mat[i][k] * mat[j][k];
            }
            mat[i][j] = v / d;
        }
    }
    true
}

/// Solve L Lᵀ x = b given the lower Cholesky factor.
fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i][k] * y[k];
        }
        y[i] = v / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in i + 1..n {
            v -= l[k][i] * x[k];
        }
        x[i] = v / l[i][i];
    }
    x
}

/// Exact posterior mean and standard deviation at `query`.
///
/// The targets are standardized internally; the jitter escalates tenfold
/// on factorization failure before giving up.
pub fn gp_posterior(surrogate: &GpSurrogate, query: [f64; 2]) -> Result<(f64, f64)> {
    let obs = &surrogate.observations;
    if obs.is_empty() {
        return Err(Error::EmptyInput("surrogate has no observations".into()));
    }
    let n = obs.len();
    let y_mean = obs.iter().map(|(_, y)| y).sum::<f64>() / n as f64;
    let y_var = obs.iter().map(|(_, y)| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_std = if y_var > 0.0 { y_var.sqrt() } else { 1.0 };

    let mut jitter = surrogate.jitter;
    let factor = loop {
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = surrogate.kernel(&obs[i].0, &obs[j].0);
                k[i][j] = v;
                k[j][i] = v;
            }
            k[i][i] += jitter;
        }
        if cholesky(&mut k) {
            break k;
        }
        jitter *= 10.0;
        if jitter > 1e-2 {
            return Err(Error::IllConditioned { max_jitter: jitter / 10.0 });
        }
    };

    let targets: Vec<f64> = obs.iter().map(|(_, y)| (y - y_mean) / y_std).collect();
    let alpha = chol_solve(&factor, &targets);
    let kstar: Vec<f64> = obs.iter().map(|(x, _)| surrogate.kernel(x, &query)).collect();
    let mu_std: f64 = kstar.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let v = chol_solve(&factor, &kstar);
    let var_std: f64 = surrogate.kernel(&query, &query)
        - kstar.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    let sigma_std = var_std.max(0.0).sqrt();
    Ok((y_mean + y_std * mu_std, y_std * sigma_std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0-based position in the evaluation order, initial design included.
    pub iteration: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_alpha: f64,
    pub best_lambda: f64,
    pub trace: Vec<TraceEntry>,
}

impl TuneResult {
    pub fn best_fitness(&self) -> f64 {
        self.trace
            .iter()
            .map(|t| t.fitness)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Write the trace as a small audit table.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,alpha,lambda,fitness")?;
        for t in &self.trace {
            writeln!(
                out,
                "{},{},{},{}",
                t.iteration,
                format_f64(t.alpha),
                format_f64(t.lambda),
                format_f64(t.fitness)
            )?;
        }
        Ok(())
    }

    pub fn write_trace_to_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_trace(file)
    }
}

/// Radical-inverse Halton value for 1-based index `i`.
fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Maximize the UCB acquisition over a lattice, then refine locally.
fn argmax_ucb(gp: &GpSurrogate, kappa: f64) -> Result<[f64; 2]> {
    let score = |x: [f64; 2]| -> Result<f64> {
        let (mu, sigma) = gp_posterior(gp, x)?;
        Ok(ucb(mu, sigma, kappa))
    };
    let m = 64;
    let mut best = [0.0, 0.0];
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..m {
        for j in 0..m {
            let x = [i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64];
            let v = score(x)?;
            if v > best_v {
                best_v = v;
                best = x;
            }
        }
    }
    let mut span = 1.0 / (m - 1) as f64;
    for _ in 0..3 {
        let center = best;
        for i in 0..9 {
            for j in 0..9 {
                let x = [
                    (center[0] + (i as f64 - 4.0) * span / 4.0).clamp(0.0, 1.0),
                    (center[1] + (j as f64 - 4.0) * span / 4.0).clamp(0.0, 1.0),
                ];
                let v = score(x)?;
                if v > best_v {
                    best_v = v;
                    best = x;
                }
            }
        }
        span /= 2.0;
    }
    Ok(best)
}

/// Run the optimization loop against an arbitrary fitness function.
///
/// `fitness` returns `None` on evaluation failure; failures enter the
/// trace as fitness −1 and the surrogate sees that value. Exposed so the
/// loop can be exercised against functions with known optima.
pub fn bayes_opt_with_fitness(
    mut fitness: impl FnMut(f64, f64) -> Option<f64>,
    alpha_range: [f64; 2],
    lambda_range: [f64; 2],
    iterations: usize,
    seed: u64,
) -> Result<TuneResult> {
    if !(alpha_range[0] < alpha_range[1]
        && alpha_range[0] >= 0.0
        && alpha_range[1] <= 1.0
        && lambda_range[0] < lambda_range[1]
        && lambda_range[0] >= 0.0
        && lambda_range[1] <= 100.0)
    {
        return Err(Error::Param(format!(
            "invalid tuning ranges alpha {alpha_range:?}, lambda {lambda_range:?}"
        )));
    }
    let to_params = |x: [f64; 2]| {
        (
            alpha_range[0] + x[0] * (alpha_range[1] - alpha_range[0]),
            lambda_range[0] + x[1] * (lambda_range[1] - lambda_range[0]),
        )
    };

    let mut gp = GpSurrogate::new();
    let mut trace = Vec::with_capacity(INITIAL_DESIGN + iterations);
    let mut evaluate = |x: [f64; 2], gp: &mut GpSurrogate, trace: &mut Vec<TraceEntry>| {
        let (alpha, lambda) = to_params(x);
        let fit = fitness(alpha, lambda).unwrap_or(-1.0);
        gp.push(x, fit);
        trace.push(TraceEntry {
            iteration: trace.len(),
            alpha,
            lambda,
            fitness: fit,
        });
    };

    // The seed offsets the quasi-random sequence, so distinct seeds give
    // distinct (still deterministic) initial designs.
    let offset = (derive_seed(seed, "tune-init") % 997) as usize;
    for i in 0..INITIAL_DESIGN {
        let idx = offset + i + 1;
        evaluate([halton(idx, 2), halton(idx, 3)], &mut gp, &mut trace);
    }
    for _ in 0..iterations {
        let x = argmax_ucb(&gp, UCB_KAPPA)?;
        evaluate(x, &mut gp, &mut trace);
    }

    let best = trace
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.fitness
                .partial_cmp(&b.fitness)
                .unwrap()
                .then(ib.cmp(ia))
        })
        .map(|(_, t)| t)
        .unwrap();
    Ok(TuneResult {
        best_alpha: best.alpha,
        best_lambda: best.lambda,
        trace,
    })
}

/// Z-scored (latitude, longitude, habitat) rows for the silhouette.
fn silhouette_rows(ctx: &ClustGeoContext) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = ctx
        .locations
        .iter()
        .map(|loc| {
            let mut row = Vec::with_capacity(7);
            row.push(loc.latitude);
            row.push(loc.longitude);
            row.extend_from_slice(&loc.occupancy_features);
            row
        })
        .collect();
    zscore_columns(&mut rows);
    rows
}

/// Tune clustGeo's (α, λ) for this checklist set.
///
/// Detections never enter the fitness: one tuned pair serves every
/// species drawn from the same checklists.
pub fn bayes_opt_clustgeo(
    cs: &[Checklist],
    iterations: usize,
    alpha_range: [f64; 2],
    lambda_range: [f64; 2],
    seed: u64,
) -> Result<TuneResult> {
    let ctx = ClustGeoContext::new(cs, None)?;
    let rows = silhouette_rows(&ctx);
    bayes_opt_with_fitness(
        |alpha, lambda| {
            let labels = ctx.labels(alpha, lambda).ok()?;
            mean_silhouette(&rows, &labels).ok()
        },
        alpha_range,
        lambda_range,
        iterations,
        seed,
    )
}

/// The ranges used throughout when nothing else is configured.
pub const DEFAULT_ALPHA_RANGE: [f64; 2] = [0.01, 0.99];
pub const DEFAULT_LAMBDA_RANGE: [f64; 2] = [10.0, 90.0];
pub const DEFAULT_ITERATIONS: usize = 30;
