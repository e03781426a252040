//! Acceptance suite: one test per release criterion, each printing a
//! single PASS, FAIL, or SKIP line (visible with `--nocapture`).
//!
//! Criteria 1, 7, and half of 6 need the released checklist data, which
//! is not bundled. Point `OCCSITE_DATA_DIR` at a directory holding
//! `checklists_2017.csv` and `checklists_2018.csv` in the canonical
//! column layout plus `species_list.txt` (one detection column name per
//! line) to run them; otherwise they report SKIP.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use occsite::cluster::{cluster_exact_coord, Method};
use occsite::clustgeo::cluster_clustgeo;
use occsite::eval::run_benchmark;
use occsite::ingest::{load_checklists, split_by, year_rule, Checklist, ColumnMap};
use occsite::metrics::{auc, auprc};
use occsite::methods::MethodSpec;
use occsite::occupancy::{fit, nll_and_grad, site_log_likelihood, SiteData};
use occsite::seed::rng_for;
use occsite::simulate::{simulate_dataset, SimulationSpec, VisitCount};
use occsite::tune::{bayes_opt_clustgeo, bayes_opt_with_fitness};
use rand::Rng;
use tempfile::TempDir;

fn report(n: usize, ok: bool, detail: &str) {
    println!("criterion {n}: {} - {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n}: {detail}");
}

fn skip(n: usize, detail: &str) {
    println!("criterion {n}: SKIP - {detail}");
}

fn released(file: &str) -> Option<PathBuf> {
    std::env::var_os("OCCSITE_DATA_DIR").map(|d| PathBuf::from(d).join(file))
}

fn load_released(file: &str, species: Vec<String>) -> Vec<Checklist> {
    let path = released(file).unwrap();
    let report = load_checklists(&path, &ColumnMap::canonical(species), b',')
        .unwrap_or_else(|e| panic!("cannot load {}: {e}", path.display()));
    assert!(
        report.diagnostics.is_empty(),
        "{} rows of {file} failed to parse",
        report.diagnostics.len()
    );
    report.checklists
}

fn released_species() -> Vec<String> {
    let path = released("species_list.txt").unwrap();
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

#[test]
fn criterion_1_released_cluster_counts() {
    if released("").is_none() {
        skip(1, "OCCSITE_DATA_DIR not set; the released 2017 checklist table is unavailable");
        return;
    }
    let start = Instant::now();
    let cs = load_released("checklists_2017.csv", vec![]);
    let seed = 0;

    let latlong = cluster_exact_coord(&cs, None);
    let n_ll = latlong.n_sites();
    let max_size = latlong.site_sizes().values().copied().max().unwrap();
    let svs = MethodSpec::Svs.run(&cs, seed).unwrap().n_sites();
    let rounded = MethodSpec::Rounded4.run(&cs, seed).unwrap().n_sites();
    let two_ten = MethodSpec::TwoToTen.run(&cs, seed).unwrap();
    let two_ten_obs = MethodSpec::TwoToTenSameObs.run(&cs, seed).unwrap();
    let km = MethodSpec::OneKmSq.run(&cs, seed).unwrap().n_sites();
    let dbsc = MethodSpec::Dbsc.run(&cs, seed).unwrap().n_sites();
    let clustgeo: Vec<usize> = [60.0, 70.0, 80.0, 90.0]
        .iter()
        .map(|&l| cluster_clustgeo(&cs, 0.25, l, None).unwrap().n_sites())
        .collect();
    let expected_cg: Vec<usize> = [60.0f64, 70.0, 80.0, 90.0]
        .iter()
        .map(|l| (l / 100.0 * n_ll as f64).round() as usize)
        .collect();
    let elapsed = start.elapsed().as_secs_f64();

    let ok = (n_ll == 1314 || n_ll == 1315)
        && max_size == 612
        && svs == 2497
        && rounded == 1305
        && two_ten.n_sites() == 139
        && two_ten.assignments.len() == 552
        && two_ten_obs.n_sites() == 134
        && two_ten_obs.assignments.len() == 531
        && clustgeo == expected_cg
        && (n_ll != 1314 || clustgeo == vec![788, 920, 1051, 1183])
        && (km as i64 - 728).abs() <= 30
        && (dbsc as f64 - 946.0).abs() <= 946.0 * 0.05
        && elapsed < 120.0;
    report(
        1,
        ok,
        &format!(
            "lat-long {n_ll} (max {max_size}), SVS {svs}, rounded-4 {rounded}, \
             2to10 {}/{}, 2to10-sameObs {}/{}, clustGeo {clustgeo:?}, \
             1-kmSq {km}, DBSC {dbsc}, {elapsed:.0}s",
            two_ten.n_sites(),
            two_ten.assignments.len(),
            two_ten_obs.n_sites(),
            two_ten_obs.assignments.len()
        ),
    );
}

fn rand_features(rng: &mut impl Rng) -> [f64; 6] {
    let mut v = [1.0; 6];
    for x in v.iter_mut().skip(1) {
        *x = rng.gen_range(-2.0..2.0);
    }
    v
}

fn rand_coefs(rng: &mut impl Rng) -> [f64; 6] {
    let mut v = [0.0; 6];
    for x in v.iter_mut() {
        *x = rng.gen_range(-1.5..1.5);
    }
    v
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn criterion_2_likelihood_matches_enumeration() {
    let mut rng = rng_for(20, "acceptance-likelihood");
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let t = rng.gen_range(1..=5);
        let site = SiteData {
            y: (0..t).map(|_| rng.gen_bool(0.4)).collect(),
            w: (0..t).map(|_| rand_features(&mut rng)).collect(),
            x: rand_features(&mut rng),
        };
        let beta = rand_coefs(&mut rng);
        let gamma = rand_coefs(&mut rng);
        let got = site_log_likelihood(&beta, &gamma, &site);

        // Sum the likelihood over both latent states in plain space.
        let psi = sigmoid(dot(&beta, &site.x));
        let mut occupied = psi;
        for (t, &yt) in site.y.iter().enumerate() {
            let p = sigmoid(dot(&gamma, &site.w[t]));
            occupied *= if yt { p } else { 1.0 - p };
        }
        let empty = if site.y.iter().any(|&v| v) { 0.0 } else { 1.0 - psi };
        let want = (occupied + empty).ln();

        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    report(2, worst <= 1e-12, &format!("500 sites, worst relative error {worst:.2e}"));
}

#[test]
fn criterion_3_gradient_matches_central_differences() {
    let spec = SimulationSpec {
        n_locations: 50,
        visits_per_site: VisitCount::UniformRange(1, 4),
        beta_true: [0.3, 0.8, -0.5, 0.0, 0.4, -0.2],
        gamma_true: [0.1, 0.6, 0.4, -0.3, 0.2, 0.0],
        blob_count: 4,
        seed: 30,
    };
    let (ds, _, _) = simulate_dataset(&spec).unwrap();
    let mut rng = rng_for(30, "acceptance-gradient");
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grad) = nll_and_grad(&theta, &ds);
        for k in 0..12 {
            let mut hi = theta.clone();
            let mut lo = theta.clone();
            hi[k] += h;
            lo[k] -= h;
            let numeric = (nll_and_grad(&hi, &ds).0 - nll_and_grad(&lo, &ds).0) / (2.0 * h);
            worst = worst.max((grad[k] - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    report(3, worst < 1e-5, &format!("20 points x 12 coordinates, worst relative error {worst:.2e}"));
}

#[test]
fn criterion_4_parameter_recovery() {
    let start = Instant::now();
    let mut errors = Vec::new();
    for seed in 0..10u64 {
        let mut rng = rng_for(seed, "acceptance-recovery");
        let mut beta = [0.0; 6];
        let mut gamma = [0.0; 6];
        for v in beta.iter_mut().chain(gamma.iter_mut()) {
            *v = rng.gen_range(-1.0..=1.0);
        }
        let spec = SimulationSpec {
            n_locations: 2000,
            visits_per_site: VisitCount::Fixed(3),
            beta_true: beta,
            gamma_true: gamma,
            blob_count: 6,
            seed: 400 + seed,
        };
        let (ds, _, _) = simulate_dataset(&spec).unwrap();
        let model = fit(&ds, 5, 1e-7, 500 + seed).unwrap();
        let err = model
            .beta_raw()
            .iter()
            .zip(&beta)
            .chain(model.gamma_raw().iter().zip(&gamma))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        errors.push(err);
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    report(
        4,
        mean < 0.15 && elapsed < 60.0,
        &format!("mean max-abs coefficient error {mean:.4} over 10 seeds in {elapsed:.1}s"),
    );
}

#[test]
fn criterion_5_metric_oracles() {
    let mut rng = rng_for(50, "acceptance-metrics");
    let mut worst_auc: f64 = 0.0;
    let mut worst_auprc: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(5..60);
        let (labels, scores) = loop {
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                // Coarse scores force plenty of ties.
                let scores: Vec<f64> =
                    (0..n).map(|_| rng.gen_range(0..=12) as f64 / 4.0).collect();
                break (labels, scores);
            }
        };

        // All positive-negative pairs, half credit on ties.
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        worst_auc = worst_auc.max((auc(&scores, &labels).unwrap() - wins / pairs).abs());

        // Sweep every distinct score as a threshold, accumulating
        // precision times recall gained.
        let mut cuts: Vec<f64> = scores.clone();
        cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        cuts.dedup();
        let total_pos = labels.iter().filter(|&&l| l).count() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for cut in cuts {
            let kept: Vec<usize> =
                (0..n).filter(|&i| scores[i] >= cut).collect();
            let tp = kept.iter().filter(|&&i| labels[i]).count() as f64;
            let precision = tp / kept.len() as f64;
            let recall = tp / total_pos;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        worst_auprc = worst_auprc.max((auprc(&scores, &labels).unwrap() - ap).abs());
    }
    report(
        5,
        worst_auc <= 1e-12 && worst_auprc <= 1e-12,
        &format!("100 instances, worst AUC error {worst_auc:.2e}, worst AUPRC error {worst_auprc:.2e}"),
    );
}

#[test]
fn criterion_6_bayes_opt_sanity() {
    let optimum = (0.55, 48.0);
    let f = |a: f64, l: f64| {
        Some(1.0 - 2.0 * (a - optimum.0).powi(2) - 0.002 * (l - optimum.1).powi(2))
    };
    let mut hits = 0;
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let r = bayes_opt_with_fitness(f, [0.01, 0.99], [10.0, 90.0], 30, seed).unwrap();
        if (r.best_alpha - optimum.0).abs() < 0.05 && (r.best_lambda - optimum.1).abs() < 4.0 {
            hits += 1;
        }
        pairs.push((r.best_alpha, r.best_lambda));
    }
    report(
        6,
        hits == 10,
        &format!("concave test function: {hits}/10 seeds within (0.05, 4) of the optimum"),
    );

    if released("").is_none() {
        skip(6, "tuned pair on released data: OCCSITE_DATA_DIR not set");
        return;
    }
    let cs = load_released("checklists_2017.csv", vec![]);
    let tuned = bayes_opt_clustgeo(&cs, 30, [0.01, 0.99], [10.0, 90.0], 60).unwrap();
    let ok = (0.01..=0.99).contains(&tuned.best_alpha)
        && (10.0..=90.0).contains(&tuned.best_lambda)
        && tuned.best_fitness().is_finite();
    report(
        6,
        ok,
        &format!(
            "released data tuned to alpha {:.4}, lambda {:.2} (plausibility only)",
            tuned.best_alpha, tuned.best_lambda
        ),
    );
}

#[test]
fn criterion_7_released_benchmark_ordering() {
    if released("").is_none() {
        skip(7, "OCCSITE_DATA_DIR not set; the released two-year benchmark is unavailable");
        return;
    }
    let species = released_species();
    let mut cs = load_released("checklists_2017.csv", species.clone());
    cs.extend(load_released("checklists_2018.csv", species.clone()));
    let split = split_by(&cs, year_rule(2017, 2018), "2017", "2018").unwrap();

    // The roster from the study: every fixed method, the full clustGeo
    // parameter grid (best-clustGeo picks from it post hoc), the tuned
    // variant, and DBSC.
    let mut methods = vec![
        MethodSpec::Svs,
        MethodSpec::OnePerUl,
        MethodSpec::LatLong,
        MethodSpec::TwoToTen,
        MethodSpec::TwoToTenSameObs,
        MethodSpec::Rounded4,
        MethodSpec::OneKmSq,
        MethodSpec::Dbsc,
        MethodSpec::of(Method::BayesOptClustGeo),
    ];
    for alpha in [0.25, 0.5, 0.75] {
        for lambda in [60.0, 70.0, 80.0, 90.0] {
            methods.push(MethodSpec::ClustGeo { alpha, lambda });
        }
    }
    let report_ = run_benchmark(&split, &methods, &species, 25, 70).unwrap();

    // Mean delta per (species, method), then species-level aggregation.
    let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut best_clustgeo: BTreeMap<String, f64> = BTreeMap::new();
    for row in report_.summary() {
        if row.mean_delta.is_nan() {
            continue;
        }
        if row.method_label.starts_with("clustGeo-") {
            let e = best_clustgeo.entry(row.species.clone()).or_insert(f64::NEG_INFINITY);
            *e = e.max(row.mean_delta);
        }
        by_method.entry(row.method_label).or_default().push(row.mean_delta);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let best_mean = mean(&best_clustgeo.values().copied().collect::<Vec<_>>());
    let bayes_mean = mean(&by_method["BayesOptClustGeo"]);
    let two_ten_med = median(&mut by_method["2to10"].clone());
    let same_obs_med = median(&mut by_method["2to10-sameObs"].clone());
    let worst_gap = by_method
        .iter()
        .filter(|(label, _)| !label.starts_with("clustGeo-"))
        .map(|(_, v)| best_mean - mean(v))
        .fold(f64::INFINITY, f64::min);

    let ok = best_mean > 0.0
        && bayes_mean > 0.0
        && two_ten_med < 0.0
        && same_obs_med < 0.0
        && worst_gap >= 0.0;
    report(
        7,
        ok,
        &format!(
            "best-clustGeo mean delta {best_mean:.2}, BayesOpt {bayes_mean:.2}, \
             2to10 median {two_ten_med:.2}, sameObs median {same_obs_med:.2}, \
             smallest lead {worst_gap:.2}"
        ),
    );
}

fn occsite(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_occsite"))
        .args(args)
        .output()
        .expect("binary should run");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, into: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, into);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                into.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut map = BTreeMap::new();
    walk(root, root, &mut map);
    map
}

#[test]
fn criterion_8_commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("a/simulated.csv");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"
[input]
checklists = "{}"
species = ["SIM"]

[run]
seed = 77

[[methods]]
name = "SVS"

[[methods]]
name = "2to10"

[[methods]]
name = "clustGeo"

[fit]
restarts = 2

[tune]
iterations = 3

[map]
resolution_deg = 0.05

[simulate]
n_locations = 80
visits = [1, 3]
beta = [0.2, 1.0, -0.6, 0.0, 0.4, -0.2]
gamma = [0.4, 0.8, 0.5, -0.3, 0.0, 0.1]
"#,
            data.display()
        ),
    )
    .unwrap();

    let cfg = config.to_str().unwrap();
    let commands = ["simulate", "ingest", "cluster", "tune", "fit", "predict", "map"];
    for out in ["a", "b"] {
        let out_dir = dir.path().join(out);
        for cmd in commands {
            occsite(&["--config", cfg, "--out", out_dir.to_str().unwrap(), cmd]);
        }
    }

    let a = tree_bytes(&dir.path().join("a"));
    let b = tree_bytes(&dir.path().join("b"));
    let same_names = a.keys().eq(b.keys());
    let differing: Vec<&String> =
        a.iter().filter(|(k, v)| b.get(*k) != Some(v)).map(|(k, _)| k).collect();
    report(
        8,
        same_names && differing.is_empty(),
        &format!(
            "{} commands rerun over {} output files byte-identically{}",
            commands.len(),
            a.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differing: {differing:?}")
            }
        ),
    );
}

#[test]
fn criterion_9_simulated_sites_respect_closure() {
    let mut sites_checked = 0;
    let mut checklists_checked = 0;
    for seed in 0..5 {
        let spec = SimulationSpec {
            n_locations: 300,
            visits_per_site: VisitCount::UniformRange(1, 4),
            beta_true: [0.2, 1.0, -0.6, 0.0, 0.4, -0.2],
            gamma_true: [0.4, 0.8, 0.5, -0.3, 0.0, 0.1],
            blob_count: 5,
            seed,
        };
        let (ds, truth, cs) = simulate_dataset(&spec).unwrap();
        assert_eq!(ds.sites.len(), truth.len());

        // A detection at an unoccupied site would mean some visit was
        // generated under a different latent state.
        for (site, &z) in ds.sites.iter().zip(&truth) {
            assert!(!site.detected() || z, "detection at an unoccupied site");
            sites_checked += 1;
        }

        // Same audit from the emitted checklists, grouped by coordinate
        // in first-appearance order (the dataset's site order).
        let mut site_of = BTreeMap::new();
        for c in &cs {
            let next = site_of.len();
            let idx = *site_of.entry(c.coord_key()).or_insert(next);
            if c.detected("SIM").unwrap() {
                assert!(truth[idx], "emitted truth contradicts a detection");
            }
            checklists_checked += 1;
        }
        assert_eq!(site_of.len(), truth.len());
    }
    report(
        9,
        true,
        &format!("{sites_checked} sites and {checklists_checked} checklists across 5 seeds, no closure violations"),
    );
}
