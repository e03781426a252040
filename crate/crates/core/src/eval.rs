//! Benchmark orchestration: spatial subsampling, scoring, and reporting.
//!
//! Models train once per (species, method). Each repeat draws a fresh
//! spatially subsampled test set, shared across methods so improvement
//! percentages compare like with like.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::Method;
use crate::error::{Error, Result};
use crate::geo::{project_local, Origin};
use crate::hex::{HexGrid, DEFAULT_SPACING_M};
use crate::ingest::{format_f64, Checklist, DatasetSplit};
use crate::methods::MethodSpec;
use crate::metrics::{auc, auprc, pct_improvement};
use crate::occupancy::{build_dataset, fit, FittedOccupancyModel};
use crate::seed::{derive_seed, rng_for};

pub const DEFAULT_REPEATS: usize = 25;

/// Fit and scoring knobs with sensible defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub hex_spacing_m: f64,
    pub fit_restarts: usize,
    pub fit_tol: f64,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            hex_spacing_m: DEFAULT_SPACING_M,
            fit_restarts: 5,
            fit_tol: 1e-6,
        }
    }
}

/// Indices into `test` kept by one subsampling draw.
///
/// Per hexagon: at most one seeded-uniform detection and one
/// seeded-uniform non-detection. Indices come back in input order.
pub fn spatial_subsample_indices(
    test: &[Checklist],
    species: &str,
    grid: &HexGrid,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut cells: BTreeMap<(i64, i64), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, c) in test.iter().enumerate() {
        let p = project_local(c.latitude, c.longitude, grid.origin, i);
        let cell = grid.cell_of(&p);
        let slot = cells.entry(cell).or_default();
        if c.detected(species)? {
            slot.0.push(i);
        } else {
            slot.1.push(i);
        }
    }
    let mut rng = rng_for(seed, "spatial-subsample");
    let mut kept = Vec::new();
    for (dets, nons) in cells.values() {
        if !dets.is_empty() {
            kept.push(dets[rng.gen_range(0..dets.len())]);
        }
        if !nons.is_empty() {
            kept.push(nons[rng.gen_range(0..nons.len())]);
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Subsampled checklists themselves; see `spatial_subsample_indices`.
pub fn spatial_subsample(
    test: &[Checklist],
    species: &str,
    grid: &HexGrid,
    seed: u64,
) -> Result<Vec<Checklist>> {
    Ok(spatial_subsample_indices(test, species, grid, seed)?
        .into_iter()
        .map(|i| test[i].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub species: String,
    pub method_label: String,
    pub auc: Vec<f64>,
    pub auprc: Vec<f64>,
    pub delta_vs_latlong: Vec<f64>,
    pub n_sites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub species: String,
    pub method_label: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub results: Vec<CellResult>,
    pub failures: Vec<FailureRecord>,
    pub repeats: usize,
    pub seed: u64,
    pub hex_spacing_m: f64,
}

/// Run the full benchmark with default options.
pub fn run_benchmark(
    split: &DatasetSplit,
    methods: &[MethodSpec],
    species_list: &[String],
    repeats: usize,
    seed: u64,
) -> Result<EvalReport> {
    run_benchmark_with(
        split,
        methods,
        species_list,
        repeats,
        seed,
        &BenchmarkOptions::default(),
    )
}

/// Cluster the train set per method, fit one model per (species, method),
/// then score `repeats` spatially subsampled test draws.
///
/// Per-cell failures (clustering, dataset assembly, fitting, or a
/// subsample without both outcomes) are recorded and excluded; they never
/// abort the run. Percentage improvement compares against lat-long on the
/// same subsample, so that method must be on the roster.
pub fn run_benchmark_with(
    split: &DatasetSplit,
    methods: &[MethodSpec],
    species_list: &[String],
    repeats: usize,
    seed: u64,
    options: &BenchmarkOptions,
) -> Result<EvalReport> {
    if species_list.is_empty() {
        return Err(Error::EmptyInput("no species to benchmark".into()));
    }
    if repeats < 1 {
        return Err(Error::Param("repeats must be at least 1".into()));
    }
    let ref_index = methods
        .iter()
        .position(|m| m.method() == Method::LatLong)
        .ok_or_else(|| {
            Error::Param("the method roster must include lat-long (the delta reference)".into())
        })?;
    let origin = Origin::bounding_box_min(split.test.iter().map(|c| (c.latitude, c.longitude)))
        .ok_or_else(|| Error::EmptyInput("test split has no checklists".into()))?;
    let grid = HexGrid::new(options.hex_spacing_m, origin)?;

    let mut failures: Vec<FailureRecord> = Vec::new();

    // Phase 1: cluster the train set, one method at a time in parallel.
    let clusterings: Vec<Result<crate::cluster::SiteClustering>> = methods
        .par_iter()
        .map(|spec| spec.run(&split.train, seed))
        .collect();
    for (spec, outcome) in methods.iter().zip(&clusterings) {
        if let Err(e) = outcome {
            for sp in species_list {
                failures.push(FailureRecord {
                    species: sp.clone(),
                    method_label: spec.label(),
                    message: format!("clustering failed: {e}"),
                });
            }
        }
    }

    // Phase 2: fit each (method, species) cell once, in parallel.
    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|mi| (0..species_list.len()).map(move |si| (mi, si)))
        .collect();
    let fits: Vec<((usize, usize), Result<FittedOccupancyModel>)> = jobs
        .par_iter()
        .map(|&(mi, si)| {
            let outcome = match &clusterings[mi] {
                Err(e) => Err(Error::Param(e.to_string())),
                Ok(sc) => build_dataset(sc, &split.train, &species_list[si]).and_then(|ds| {
                    let fit_seed = derive_seed(
                        seed,
                        &format!("fit/{}/{}", methods[mi].label(), species_list[si]),
                    );
                    fit(&ds, options.fit_restarts, options.fit_tol, fit_seed)
                }),
            };
            ((mi, si), outcome)
        })
        .collect();
    let mut models: BTreeMap<(usize, usize), FittedOccupancyModel> = BTreeMap::new();
    for ((mi, si), outcome) in fits {
        match outcome {
            Ok(m) => {
                models.insert((mi, si), m);
            }
            Err(e) => {
                if clusterings[mi].is_ok() {
                    failures.push(FailureRecord {
                        species: species_list[si].clone(),
                        method_label: methods[mi].label(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }

    // Phase 3: score the full test set once per fitted cell.
    let scores: BTreeMap<(usize, usize), Vec<f64>> = models
        .iter()
        .map(|(&key, model)| {
            let s: Vec<f64> = split
                .test
                .iter()
                .map(|c| {
                    model.predict_observation_prob(&c.occupancy_features, &c.detection_features)
                })
                .collect();
            (key, s)
        })
        .collect();

    // Phase 4: repeated subsampled evaluation, shared draws across methods.
    let mut cells: BTreeMap<(usize, usize), CellResult> = models
        .iter()
        .map(|(&(mi, si), model)| {
            (
                (mi, si),
                CellResult {
                    species: species_list[si].clone(),
                    method_label: methods[mi].label(),
                    auc: Vec::new(),
                    auprc: Vec::new(),
                    delta_vs_latlong: Vec::new(),
                    n_sites: model.n_sites,
                },
            )
        })
        .collect();
    for si in 0..species_list.len() {
        let species = &species_list[si];
        let mut degenerate_repeats = 0usize;
        for r in 0..repeats {
            let sub_seed = derive_seed(seed, &format!("subsample/{species}/{r}"));
            let idx = match spatial_subsample_indices(&split.test, species, &grid, sub_seed) {
                Ok(idx) => idx,
                Err(e) => {
                    failures.push(FailureRecord {
                        species: species.clone(),
                        method_label: "(subsample)".into(),
                        message: e.to_string(),
                    });
                    break;
                }
            };
            let labels: Vec<bool> = idx
                .iter()
                .map(|&i| split.test[i].detected(species).unwrap())
                .collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                degenerate_repeats += 1;
                continue;
            }
            let metric_input = |mi: usize| -> Option<(Vec<f64>, &Vec<bool>)> {
                scores
                    .get(&(mi, si))
                    .map(|s| (idx.iter().map(|&i| s[i]).collect(), &labels))
            };
            let auc_ref = metric_input(ref_index).map(|(s, l)| auc(&s, l).unwrap());
            for mi in 0..methods.len() {
                let Some((s, l)) = metric_input(mi) else {
                    continue;
                };
                let cell = cells.get_mut(&(mi, si)).unwrap();
                let a = auc(&s, l).unwrap();
                cell.auc.push(a);
                cell.auprc.push(auprc(&s, l).unwrap());
                if let Some(aref) = auc_ref {
                    cell.delta_vs_latlong.push(pct_improvement(a, aref).unwrap());
                }
            }
        }
        if degenerate_repeats > 0 {
            failures.push(FailureRecord {
                species: species.clone(),
                method_label: "(subsample)".into(),
                message: format!(
                    "{degenerate_repeats} of {repeats} subsamples lacked one outcome class and were skipped"
                ),
            });
        }
    }

    Ok(EvalReport {
        results: cells.into_values().collect(),
        failures,
        repeats,
        seed,
        hex_spacing_m: options.hex_spacing_m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub species: String,
    pub method_label: String,
    pub n_sites: usize,
    pub n_repeats: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_auprc: f64,
    pub std_auprc: f64,
    pub mean_delta: f64,
    pub std_delta: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format_f64(v)
    }
}

impl EvalReport {
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.results
            .iter()
            .map(|c| {
                let (mean_auc, std_auc) = mean_std(&c.auc);
                let (mean_auprc, std_auprc) = mean_std(&c.auprc);
                let (mean_delta, std_delta) = mean_std(&c.delta_vs_latlong);
                SummaryRow {
                    species: c.species.clone(),
                    method_label: c.method_label.clone(),
                    n_sites: c.n_sites,
                    n_repeats: c.auc.len(),
                    mean_auc,
                    std_auc,
                    mean_auprc,
                    std_auprc,
                    mean_delta,
                    std_delta,
                }
            })
            .collect()
    }

    /// One row per (species, method, repeat).
    pub fn write_long<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "species,method,repeat,auc,auprc,delta_vs_latlong")?;
        for c in &self.results {
            for (r, &a) in c.auc.iter().enumerate() {
                let delta = c
                    .delta_vs_latlong
                    .get(r)
                    .map(|d| format_f64(*d))
                    .unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.species,
                    c.method_label,
                    r,
                    format_f64(a),
                    format_f64(c.auprc[r]),
                    delta
                )?;
            }
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "species,method,n_sites,n_repeats,mean_auc,std_auc,mean_auprc,std_auprc,mean_delta,std_delta"
        )?;
        for row in self.summary() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.species,
                row.method_label,
                row.n_sites,
                row.n_repeats,
                fmt_opt(row.mean_auc),
                fmt_opt(row.std_auc),
                fmt_opt(row.mean_auprc),
                fmt_opt(row.std_auprc),
                fmt_opt(row.mean_delta),
                fmt_opt(row.std_delta)
            )?;
        }
        Ok(())
    }

    pub fn write_failures<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "species,method,message")?;
        for f in &self.failures {
            writeln!(
                out,
                "{},{},\"{}\"",
                f.species,
                f.method_label,
                f.message.replace('"', "'")
            )?;
        }
        Ok(())
    }

    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_long(std::fs::File::create(dir.join("results_long.csv"))?)?;
        self.write_summary(std::fs::File::create(dir.join("results_summary.csv"))?)?;
        self.write_failures(std::fs::File::create(dir.join("failures.csv"))?)?;
        Ok(())
    }
}
