//! Command-line front end for the occsite library.
//!
//! Every subcommand reads one TOML configuration and writes under one
//! output directory, so a whole pipeline (ingest, cluster, fit, predict,
//! benchmark) is a sequence of invocations against the same file. All
//! randomness derives from the single run seed; rerunning a command with
//! an unchanged configuration reproduces its outputs byte for byte.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use occsite::cluster::{unique_locations, write_assignments, Method};
use occsite::eval::{run_benchmark_with, BenchmarkOptions};
use occsite::geo::{project_local, Origin};
use occsite::ingest::{
    filter_checklists, format_f64, load_checklists, split_by, write_checklists_to_path, year_rule,
    Checklist,
};
use occsite::methods::MethodSpec;
use occsite::occupancy::{build_dataset, fit, FittedOccupancyModel};
use occsite::seed::derive_seed;
use occsite::simulate::{simulate_dataset, SimulationSpec};
use occsite::tune::bayes_opt_clustgeo;

use config::{file_stem, Config};

#[derive(Parser)]
#[command(name = "occsite", version, about = "Checklist clustering and occupancy models")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override run.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override run.output_dir
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override run.workers
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load, validate, and filter checklists; write the canonical table
    Ingest,
    /// Run each configured clustering method and write site assignments
    Cluster,
    /// Tune clustGeo's alpha and lambda by Bayesian optimization
    Tune,
    /// Fit one occupancy model per species and method
    Fit,
    /// Score fitted models over the prediction split
    Predict,
    /// Rasterize occupancy probability over the data extent
    Map,
    /// Cluster, fit, and score every method against lat-long
    Benchmark,
    /// Generate a synthetic checklist table with known truth
    Simulate,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let config_path = cli
        .config
        .as_deref()
        .context("a config file is required: pass --config <FILE>")?;
    let cfg = config::load(config_path, cli.seed, cli.out)?;
    if let Some(n) = cli.workers.or(cfg.raw.run.workers) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot size the worker pool")?;
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    match cli.cmd {
        Cmd::Ingest => cmd_ingest(&cfg),
        Cmd::Cluster => cmd_cluster(&cfg),
        Cmd::Tune => cmd_tune(&cfg),
        Cmd::Fit => cmd_fit(&cfg),
        Cmd::Predict => cmd_predict(&cfg),
        Cmd::Map => cmd_map(&cfg),
        Cmd::Benchmark => cmd_benchmark(&cfg),
        Cmd::Simulate => cmd_simulate(&cfg),
    }
}

/// Read, filter, and report on the configured checklist file.
fn load_input(cfg: &Config) -> Result<Vec<Checklist>> {
    let path = &cfg.raw.input.checklists;
    let report = load_checklists(path, &cfg.column_map(), cfg.delimiter)
        .with_context(|| format!("cannot load {}", path.display()))?;
    if !report.diagnostics.is_empty() {
        eprintln!("{} rows dropped while parsing:", report.diagnostics.len());
        for d in report.diagnostics.iter().take(5) {
            eprintln!("  row {}: {}", d.row, d.message);
        }
        if report.diagnostics.len() > 5 {
            eprintln!("  ... and {} more", report.diagnostics.len() - 5);
        }
    }
    let input = &cfg.raw.input;
    let cs = match (input.max_distance_km, input.exclude_hotspots) {
        (None, false) => report.checklists,
        (max_km, hotspots) => {
            filter_checklists(&report.checklists, max_km.unwrap_or(f64::INFINITY), hotspots)
        }
    };
    if cs.is_empty() {
        bail!("no checklists left after filtering");
    }
    Ok(cs)
}

/// The checklists a model trains on: the train side of the configured
/// split, or everything when no split is given.
fn train_set(cfg: &Config, cs: Vec<Checklist>) -> Result<Vec<Checklist>> {
    match &cfg.raw.split {
        Some(s) => {
            let split = split_by(
                &cs,
                year_rule(s.train_year, s.test_year),
                &s.train_year.to_string(),
                &s.test_year.to_string(),
            )?;
            Ok(split.train)
        }
        None => Ok(cs),
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn model_file(species: &str, spec: &MethodSpec) -> String {
    format!("{}-{}.toml", sanitize(species), file_stem(spec))
}

fn cmd_ingest(cfg: &Config) -> Result<()> {
    let cs = load_input(cfg)?;
    let path = cfg.out_dir.join("ingested.csv");
    write_checklists_to_path(&path, &cs, b',')?;
    println!("{} checklists -> {}", cs.len(), path.display());
    for sp in &cfg.raw.input.species {
        let n = cs.iter().filter(|c| c.detected(sp).unwrap_or(false)).count();
        println!("  {sp}: {n} detections");
    }
    Ok(())
}

fn cmd_cluster(cfg: &Config) -> Result<()> {
    let cs = train_set(cfg, load_input(cfg)?)?;
    let dir = cfg.out_dir.join("clusters");
    std::fs::create_dir_all(&dir)?;
    for spec in &cfg.specs {
        let (sc, tuned) = spec.run_with_tuning(&cs, cfg.seed)?;
        let path = dir.join(format!("{}.csv", file_stem(spec)));
        write_assignments(&path, &sc, b',')?;
        if let Some(trace) = tuned {
            trace.write_trace_to_path(&dir.join(format!("{}-trace.csv", file_stem(spec))))?;
        }
        println!(
            "{}: {} sites over {} checklists, {} discarded -> {}",
            spec.label(),
            sc.n_sites(),
            sc.assignments.len(),
            sc.discarded.len(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_tune(cfg: &Config) -> Result<()> {
    let cs = train_set(cfg, load_input(cfg)?)?;
    let t = &cfg.raw.tune;
    let seed = derive_seed(cfg.seed, Method::BayesOptClustGeo.slug());
    let result = bayes_opt_clustgeo(&cs, t.iterations, t.alpha_range, t.lambda_range, seed)?;
    let path = cfg.out_dir.join("tune_trace.csv");
    result.write_trace_to_path(&path)?;
    println!(
        "best alpha {} lambda {} (fitness {}) after {} evaluations -> {}",
        format_f64(result.best_alpha),
        format_f64(result.best_lambda),
        format_f64(result.best_fitness()),
        result.trace.len(),
        path.display()
    );
    Ok(())
}

fn cmd_fit(cfg: &Config) -> Result<()> {
    let cs = train_set(cfg, load_input(cfg)?)?;
    let dir = cfg.out_dir.join("models");
    std::fs::create_dir_all(&dir)?;
    for spec in &cfg.specs {
        let sc = spec.run(&cs, cfg.seed)?;
        let label = spec.label();
        for sp in &cfg.model_species {
            let ds = build_dataset(&sc, &cs, sp)?;
            let fit_seed = derive_seed(cfg.seed, &format!("fit/{label}/{sp}"));
            let model = fit(&ds, cfg.raw.fit.restarts, cfg.raw.fit.tol, fit_seed)
                .with_context(|| format!("fitting {sp} on {label}"))?;
            let path = dir.join(model_file(sp, spec));
            model.save(&path)?;
            println!(
                "{sp} x {label}: {} sites, log-likelihood {}{} -> {}",
                model.n_sites,
                format_f64(model.log_likelihood),
                if model.converged { "" } else { " (not converged)" },
                path.display()
            );
        }
    }
    Ok(())
}

fn cmd_predict(cfg: &Config) -> Result<()> {
    let cs = load_input(cfg)?;
    let target = match &cfg.raw.split {
        Some(s) => {
            split_by(
                &cs,
                year_rule(s.train_year, s.test_year),
                &s.train_year.to_string(),
                &s.test_year.to_string(),
            )?
            .test
        }
        None => cs,
    };
    let models_dir = cfg.out_dir.join("models");
    let dir = cfg.out_dir.join("predictions");
    std::fs::create_dir_all(&dir)?;
    for spec in &cfg.specs {
        for sp in &cfg.model_species {
            let model_path = models_dir.join(model_file(sp, spec));
            if !model_path.exists() {
                bail!("model file {} not found; run `occsite fit` first", model_path.display());
            }
            let model = FittedOccupancyModel::load(&model_path)?;
            let out_path = dir.join(format!("{}-{}.csv", sanitize(sp), file_stem(spec)));
            let mut w = csv::Writer::from_path(&out_path)?;
            w.write_record(["checklist_id", "psi", "p_detect", "p_observe"])?;
            for c in &target {
                let psi = model.predict_psi(&c.occupancy_features);
                let p = model.predict_p(&c.detection_features);
                w.write_record([
                    c.id.as_str(),
                    &format_f64(psi),
                    &format_f64(p),
                    &format_f64(psi * p),
                ])?;
            }
            w.flush()?;
            println!(
                "{sp} x {}: {} rows -> {}",
                spec.label(),
                target.len(),
                out_path.display()
            );
        }
    }
    Ok(())
}

fn cmd_map(cfg: &Config) -> Result<()> {
    let cs = load_input(cfg)?;
    let m = &cfg.raw.map;
    if !(m.resolution_deg > 0.0) {
        bail!("map.resolution_deg must be positive");
    }
    let sp = m
        .species
        .clone()
        .unwrap_or_else(|| cfg.model_species[0].clone());
    let spec = match &m.method {
        Some(name) => {
            let method: Method = name.parse()?;
            cfg.specs
                .iter()
                .find(|s| s.method() == method)
                .with_context(|| format!("map.method {name:?} is not a configured method"))?
                .clone()
        }
        None => cfg.specs[0].clone(),
    };
    let model_path = cfg.out_dir.join("models").join(model_file(&sp, &spec));
    if !model_path.exists() {
        bail!("model file {} not found; run `occsite fit` first", model_path.display());
    }
    let model = FittedOccupancyModel::load(&model_path)?;

    let (lat_min, lat_max, lon_min, lon_max) = cs.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), ck| {
            (a.min(ck.latitude), b.max(ck.latitude), c.min(ck.longitude), d.max(ck.longitude))
        },
    );
    // The slack keeps an extent that is an exact multiple of the
    // resolution from losing its far edge to rounding.
    let n_lat = ((lat_max - lat_min) / m.resolution_deg + 1e-9).floor() as usize + 1;
    let n_lon = ((lon_max - lon_min) / m.resolution_deg + 1e-9).floor() as usize + 1;
    if n_lat.saturating_mul(n_lon) > 25_000_000 {
        bail!("map lattice would have {} cells; raise map.resolution_deg", n_lat * n_lon);
    }

    // Habitat features for a cell come from the nearest surveyed location.
    let origin = Origin::new(lat_min, lon_min);
    let (locs, _) = unique_locations(&cs);
    let pts: Vec<_> = locs
        .iter()
        .enumerate()
        .map(|(i, l)| project_local(l.latitude, l.longitude, origin, i))
        .collect();

    let path = cfg
        .out_dir
        .join(format!("map-{}-{}.csv", sanitize(&sp), file_stem(&spec)));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["latitude", "longitude", "psi"])?;
    for i in 0..n_lat {
        let lat = lat_min + i as f64 * m.resolution_deg;
        for j in 0..n_lon {
            let lon = lon_min + j as f64 * m.resolution_deg;
            let q = project_local(lat, lon, origin, 0);
            let nearest = pts
                .iter()
                .min_by(|a, b| q.distance(a).total_cmp(&q.distance(b)))
                .map(|p| p.source_id)
                .expect("load_input rejects empty inputs");
            let psi = model.predict_psi(&locs[nearest].occupancy_features);
            w.write_record([&format_f64(lat), &format_f64(lon), &format_f64(psi)])?;
        }
    }
    w.flush()?;
    println!("{sp} x {}: {} cells -> {}", spec.label(), n_lat * n_lon, path.display());
    Ok(())
}

fn cmd_benchmark(cfg: &Config) -> Result<()> {
    let cs = load_input(cfg)?;
    let s = cfg
        .raw
        .split
        .as_ref()
        .context("benchmark needs a [split] section (train_year, test_year)")?;
    let split = split_by(
        &cs,
        year_rule(s.train_year, s.test_year),
        &s.train_year.to_string(),
        &s.test_year.to_string(),
    )?;
    let b = &cfg.raw.benchmark;
    let options = BenchmarkOptions {
        hex_spacing_m: b.hex_spacing_m,
        fit_restarts: cfg.raw.fit.restarts,
        fit_tol: cfg.raw.fit.tol,
    };
    println!(
        "{} train / {} test checklists, {} methods, {} species, {} repeats",
        split.train.len(),
        split.test.len(),
        cfg.specs.len(),
        cfg.model_species.len(),
        b.repeats
    );
    let report =
        run_benchmark_with(&split, &cfg.specs, &cfg.model_species, b.repeats, cfg.seed, &options)?;
    let dir = cfg.out_dir.join("benchmark");
    report.write_tables(&dir)?;
    for row in report.summary() {
        let delta = if row.mean_delta.is_nan() {
            "     ref".to_string()
        } else {
            format!("{:+7.2}%", row.mean_delta)
        };
        println!(
            "{:<12} {:<16} {:>6} sites  AUC {:.3}+-{:.3}  AUPRC {:.3}+-{:.3}  {delta}",
            row.species,
            row.method_label,
            row.n_sites,
            row.mean_auc,
            row.std_auc,
            row.mean_auprc,
            row.std_auprc,
        );
    }
    if !report.failures.is_empty() {
        println!(
            "{} failures recorded in {}",
            report.failures.len(),
            dir.join("failures.csv").display()
        );
    }
    println!("tables -> {}", dir.display());
    Ok(())
}

fn cmd_simulate(cfg: &Config) -> Result<()> {
    let s = cfg
        .raw
        .simulate
        .as_ref()
        .context("simulate needs a [simulate] section")?;
    let spec = SimulationSpec {
        n_locations: s.n_locations,
        visits_per_site: s.visits.to_count(),
        beta_true: s.beta,
        gamma_true: s.gamma,
        blob_count: s.blob_count,
        seed: derive_seed(cfg.seed, "simulate"),
    };
    let (ds, truth, cs) = simulate_dataset(&spec)?;
    let data_path = cfg.out_dir.join("simulated.csv");
    write_checklists_to_path(&data_path, &cs, b',')?;
    let truth_path = cfg.out_dir.join("simulated_truth.csv");
    let mut w = csv::Writer::from_path(&truth_path)?;
    w.write_record(["site_index", "occupied"])?;
    for (i, z) in truth.iter().enumerate() {
        w.write_record([i.to_string().as_str(), if *z { "1" } else { "0" }])?;
    }
    w.flush()?;
    println!(
        "{} checklists at {} sites ({} occupied, {} with detections) -> {}",
        cs.len(),
        ds.sites.len(),
        truth.iter().filter(|z| **z).count(),
        ds.sites.iter().filter(|site| site.detected()).count(),
        data_path.display()
    );
    println!("truth -> {}", truth_path.display());
    Ok(())
}
