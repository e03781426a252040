//! The latent-variable occupancy model.
//!
//! A site is occupied with probability psi_i = sigma(beta' X_i); visit t of
//! an occupied site detects with probability p_it = sigma(gamma' W_it);
//! unoccupied sites never produce detections. The site likelihood
//! marginalizes the latent state:
//!
//!   L_i = psi_i * prod_t p^y (1-p)^(1-y)  +  (1 - psi_i) * [all y = 0]
//!
//! Fitting maximizes the log likelihood with BFGS from several seeded
//! starts, on internally z-scored design columns (recorded, so prediction
//! takes raw-unit features).

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::SiteClustering;
use crate::error::{Error, Result};
use crate::ingest::Checklist;
use crate::optim;

/// Linear predictors are clipped here before exponentiation.
const PRED_CLAMP: f64 = 35.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteData {
    /// Detection outcome per visit.
    pub y: Vec<bool>,
    /// Visit design rows, leading intercept column.
    pub w: Vec<[f64; 6]>,
    /// Site design row, leading intercept.
    pub x: [f64; 6],
}

impl SiteData {
    pub fn detected(&self) -> bool {
        self.y.iter().any(|&v| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyDataset {
    pub species: String,
    pub sites: Vec<SiteData>,
}

impl OccupancyDataset {
    pub fn n_visits(&self) -> usize {
        self.sites.iter().map(|s| s.y.len()).sum()
    }

    pub fn n_detections(&self) -> usize {
        self.sites
            .iter()
            .map(|s| s.y.iter().filter(|&&v| v).count())
            .sum()
    }
}

/// Assemble per-site visit histories for one species from a clustering.
///
/// Sites appear in site-id order; visits keep checklist input order.
/// Checklists without an assignment (discarded or filtered) are excluded.
pub fn build_dataset(
    clustering: &SiteClustering,
    cs: &[Checklist],
    species: &str,
) -> Result<OccupancyDataset> {
    let by_id: HashMap<&str, &Checklist> = cs.iter().map(|c| (c.id.as_str(), c)).collect();
    for id in clustering.assignments.keys() {
        if !by_id.contains_key(id.as_str()) {
            return Err(Error::Param(format!(
                "clustering references unknown checklist {id}"
            )));
        }
    }
    let mut members: HashMap<u32, Vec<&Checklist>> = HashMap::new();
    for c in cs {
        if let Some(&site) = clustering.assignments.get(&c.id) {
            members.entry(site).or_default().push(c);
        }
    }
    let mut site_ids: Vec<u32> = members.keys().copied().collect();
    site_ids.sort_unstable();
    let mut sites = Vec::with_capacity(site_ids.len());
    for sid in site_ids {
        let group = &members[&sid];
        let mut y = Vec::with_capacity(group.len());
        let mut w = Vec::with_capacity(group.len());
        let mut xsum = [0.0f64; 5];
        for c in group.iter() {
            y.push(c.detected(species)?);
            let mut row = [1.0; 6];
            row[1..].copy_from_slice(&c.detection_features);
            w.push(row);
            for (s, v) in xsum.iter_mut().zip(c.occupancy_features) {
                *s += v;
            }
        }
        let mut x = [1.0; 6];
        for (xi, s) in x[1..].iter_mut().zip(xsum) {
            *xi = s / group.len() as f64;
        }
        sites.push(SiteData { y, w, x });
    }
    Ok(OccupancyDataset {
        species: species.to_string(),
        sites,
    })
}

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(z: f64) -> f64 {
    // log(1 + e^z), stable for any z.
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-PRED_CLAMP, PRED_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

fn clamp_pred(z: f64) -> f64 {
    z.clamp(-PRED_CLAMP, PRED_CLAMP)
}

/// Log of the marginalized site likelihood, log-sum-exp stabilized.
pub fn site_log_likelihood(beta: &[f64; 6], gamma: &[f64; 6], site: &SiteData) -> f64 {
    let eta = clamp_pred(dot6(beta, &site.x));
    let log_psi = log_sigmoid(eta);
    let log_1mpsi = log_sigmoid(-eta);
    let mut log_detect = 0.0;
    for (t, &yt) in site.y.iter().enumerate() {
        let z = clamp_pred(dot6(gamma, &site.w[t]));
        log_detect += if yt { log_sigmoid(z) } else { log_sigmoid(-z) };
    }
    if site.detected() {
        log_psi + log_detect
    } else {
        // log(psi * A + (1 - psi)) with A = prod(1 - p_t).
        let a = log_psi + log_detect;
        let b = log_1mpsi;
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// Add this site's log-likelihood gradient into `gb` (beta) and `gg` (gamma).
fn site_grad_accum(
    beta: &[f64; 6],
    gamma: &[f64; 6],
    site: &SiteData,
    gb: &mut [f64; 6],
    gg: &mut [f64; 6],
) {
    let eta = clamp_pred(dot6(beta, &site.x));
    let psi = sigmoid(eta);
    if site.detected() {
        for j in 0..6 {
            gb[j] += (1.0 - psi) * site.x[j];
        }
        for (t, &yt) in site.y.iter().enumerate() {
            let p = sigmoid(dot6(gamma, &site.w[t]));
            let resid = f64::from(u8::from(yt)) - p;
            for j in 0..6 {
                gg[j] += resid * site.w[t][j];
            }
        }
    } else {
        let mut log_a = 0.0;
        let mut pw_sum = [0.0f64; 6];
        for wt in &site.w {
            let z = clamp_pred(dot6(gamma, wt));
            log_a += log_sigmoid(-z);
            let p = sigmoid(z);
            for j in 0..6 {
                pw_sum[j] += p * wt[j];
            }
        }
        let a = log_a.exp();
        let l = psi * a + (1.0 - psi);
        let dpsi = psi * (1.0 - psi);
        for j in 0..6 {
            gb[j] += dpsi * (a - 1.0) / l * site.x[j];
            gg[j] -= psi * a / l * pw_sum[j];
        }
    }
}

pub fn total_log_likelihood(beta: &[f64; 6], gamma: &[f64; 6], ds: &OccupancyDataset) -> f64 {
    ds.sites
        .iter()
        .map(|s| site_log_likelihood(beta, gamma, s))
        .sum()
}

fn unpack(theta: &[f64]) -> ([f64; 6], [f64; 6]) {
    let mut beta = [0.0; 6];
    let mut gamma = [0.0; 6];
    beta.copy_from_slice(&theta[..6]);
    gamma.copy_from_slice(&theta[6..]);
    (beta, gamma)
}

/// Negative total log-likelihood and its gradient for the optimizer.
pub fn nll_and_grad(theta: &[f64], ds: &OccupancyDataset) -> (f64, Vec<f64>) {
    let (beta, gamma) = unpack(theta);
    let mut gb = [0.0; 6];
    let mut gg = [0.0; 6];
    let mut ll = 0.0;
    for site in &ds.sites {
        ll += site_log_likelihood(&beta, &gamma, site);
        site_grad_accum(&beta, &gamma, site, &mut gb, &mut gg);
    }
    let grad: Vec<f64> = gb.iter().chain(gg.iter()).map(|v| -v).collect();
    (-ll, grad)
}

/// Column means and standard deviations recorded at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub x_mean: [f64; 5],
    pub x_std: [f64; 5],
    pub w_mean: [f64; 5],
    pub w_std: [f64; 5],
}

impl FeatureScaling {
    fn scale_x(&self, x: &[f64; 5]) -> [f64; 6] {
        let mut out = [1.0; 6];
        for j in 0..5 {
            out[j + 1] = (x[j] - self.x_mean[j]) / self.x_std[j];
        }
        out
    }

    fn scale_w(&self, w: &[f64; 5]) -> [f64; 6] {
        let mut out = [1.0; 6];
        for j in 0..5 {
            out[j + 1] = (w[j] - self.w_mean[j]) / self.w_std[j];
        }
        out
    }
}

fn column_stats<const N: usize>(rows: impl Iterator<Item = [f64; N]> + Clone) -> ([f64; 5], [f64; 5]) {
    let n = rows.clone().count() as f64;
    let mut mean = [0.0; 5];
    let mut std = [1.0; 5];
    for j in 0..5 {
        let m = rows.clone().map(|r| r[j + 1]).sum::<f64>() / n;
        let var = rows.clone().map(|r| (r[j + 1] - m).powi(2)).sum::<f64>() / n;
        mean[j] = m;
        // Constant columns stay centered but unscaled.
        std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    (mean, std)
}

fn scale_dataset(ds: &OccupancyDataset) -> (OccupancyDataset, FeatureScaling) {
    let (x_mean, x_std) = column_stats(ds.sites.iter().map(|s| s.x));
    let (w_mean, w_std) = column_stats(ds.sites.iter().flat_map(|s| s.w.iter().copied()));
    let scaling = FeatureScaling {
        x_mean,
        x_std,
        w_mean,
        w_std,
    };
    let sites = ds
        .sites
        .iter()
        .map(|s| {
            let mut x = s.x;
            for j in 0..5 {
                x[j + 1] = (x[j + 1] - x_mean[j]) / x_std[j];
            }
            let w = s
                .w
                .iter()
                .map(|row| {
                    let mut r = *row;
                    for j in 0..5 {
                        r[j + 1] = (r[j + 1] - w_mean[j]) / w_std[j];
                    }
                    r
                })
                .collect();
            SiteData { y: s.y.clone(), x, w }
        })
        .collect();
    (
        OccupancyDataset {
            species: ds.species.clone(),
            sites,
        },
        scaling,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartDiag {
    pub init_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedOccupancyModel {
    pub species: String,
    /// Occupancy coefficients on the z-scored design (intercept first).
    pub beta: [f64; 6],
    /// Detection coefficients on the z-scored design (intercept first).
    pub gamma: [f64; 6],
    pub log_likelihood: f64,
    pub converged: bool,
    pub n_sites: usize,
    pub n_visits: usize,
    pub feature_scaling: FeatureScaling,
    /// All sites have a single visit: occupancy and detection intercepts
    /// are then not separately identifiable.
    pub single_visit_warning: bool,
    pub restarts: Vec<RestartDiag>,
}

impl FittedOccupancyModel {
    pub fn predict_psi(&self, x: &[f64; 5]) -> f64 {
        sigmoid(dot6(&self.beta, &self.feature_scaling.scale_x(x)))
    }

    pub fn predict_p(&self, w: &[f64; 5]) -> f64 {
        sigmoid(dot6(&self.gamma, &self.feature_scaling.scale_w(w)))
    }

    pub fn predict_observation_prob(&self, x: &[f64; 5], w: &[f64; 5]) -> f64 {
        self.predict_psi(x) * self.predict_p(w)
    }

    /// Occupancy coefficients transformed back to raw feature units.
    pub fn beta_raw(&self) -> [f64; 6] {
        unscale(&self.beta, &self.feature_scaling.x_mean, &self.feature_scaling.x_std)
    }

    /// Detection coefficients transformed back to raw feature units.
    pub fn gamma_raw(&self) -> [f64; 6] {
        unscale(&self.gamma, &self.feature_scaling.w_mean, &self.feature_scaling.w_std)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn unscale(coef: &[f64; 6], mean: &[f64; 5], std: &[f64; 5]) -> [f64; 6] {
    let mut raw = [0.0; 6];
    raw[0] = coef[0];
    for j in 0..5 {
        raw[j + 1] = coef[j + 1] / std[j];
        raw[0] -= coef[j + 1] * mean[j] / std[j];
    }
    raw
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maximum-likelihood fit from `restarts` seeded initializations.
///
/// Intercepts start at the logit of clamped naive rates; other
/// coefficients draw uniformly from [-0.5, 0.5]. The best final likelihood
/// wins; `converged` reports the winning run's gradient test.
pub fn fit(
    ds: &OccupancyDataset,
    restarts: usize,
    tol: f64,
    seed: u64,
) -> Result<FittedOccupancyModel> {
    if ds.sites.is_empty() {
        return Err(Error::EmptyInput("occupancy dataset has no sites".into()));
    }
    let n_visits = ds.n_visits();
    let n_det = ds.n_detections();
    if n_det == 0 || n_det == n_visits {
        return Err(Error::DegenerateData(format!(
            "{} of {} visits are detections; both outcomes are required",
            n_det, n_visits
        )));
    }
    let (scaled, scaling) = scale_dataset(ds);
    let naive_psi = (scaled.sites.iter().filter(|s| s.detected()).count() as f64
        / scaled.sites.len() as f64)
        .clamp(0.05, 0.95);
    let naive_p = (n_det as f64 / n_visits as f64).clamp(0.05, 0.95);

    let mut rng = crate::seed::rng_for(seed, "occupancy-fit");
    let mut diags = Vec::with_capacity(restarts);
    let mut best_res: Option<optim::OptimResult> = None;
    for _ in 0..restarts.max(1) {
        let mut theta0 = vec![0.0; 12];
        theta0[0] = logit(naive_psi);
        theta0[6] = logit(naive_p);
        for (j, v) in theta0.iter_mut().enumerate() {
            if j != 0 && j != 6 {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let init_ll = -nll_and_grad(&theta0, &scaled).0;
        if !init_ll.is_finite() {
            return Err(Error::Optimization(format!(
                "non-finite likelihood at initialization: {init_ll}"
            )));
        }
        let mut obj = |theta: &[f64]| nll_and_grad(theta, &scaled);
        let res = optim::minimize(&mut obj, &theta0, tol, 400);
        diags.push(RestartDiag {
            init_log_likelihood: init_ll,
            final_log_likelihood: -res.f,
            converged: res.converged,
        });
        if !res.f.is_finite() {
            return Err(Error::Optimization(
                "optimizer returned a non-finite objective".into(),
            ));
        }
        let better = match &best_res {
            None => true,
            Some(b) => res.f < b.f,
        };
        if better {
            best_res = Some(res);
        }
    }
    let res = best_res.unwrap();
    let (beta, gamma) = unpack(&res.x);
    Ok(FittedOccupancyModel {
        species: ds.species.clone(),
        beta,
        gamma,
        log_likelihood: -res.f,
        converged: res.converged,
        n_sites: ds.sites.len(),
        n_visits,
        feature_scaling: scaling,
        single_visit_warning: ds.sites.iter().all(|s| s.y.len() == 1),
        restarts: diags,
    })
}
