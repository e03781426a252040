//! End-to-end tests driving the installed binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use occsite::ingest::{format_f64, load_checklists, ColumnMap};
use occsite::occupancy::{FeatureScaling, FittedOccupancyModel};
use tempfile::TempDir;

fn occsite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occsite"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const HEADER: &str = "checklist_id,latitude,longitude,observer_id,date,effort_distance_km,\
is_hotspot,day_of_year,time_observations_started,duration_minutes,number_observers,\
elevation,tc_brightness,tc_greenness,tc_wetness,tc_angle,REDW";

/// Three checklists, two distinct coordinates, one detection.
fn tiny_csv(path: &Path) {
    let rows = [
        "c1,44.1,-123.1,obs1,2017-06-01,0.5,0,152,7.5,30,1,120,0.1,0.2,0.3,0.4,1",
        "c2,44.1,-123.1,obs2,2017-06-02,0.5,0,153,8.5,25,2,120,0.1,0.2,0.3,0.4,0",
        "c3,44.3,-123.4,obs1,2017-06-03,0.5,0,154,9.5,20,1,140,0.2,0.1,0.5,0.2,0",
    ];
    std::fs::write(path, format!("{HEADER}\n{}\n", rows.join("\n"))).unwrap();
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

#[test]
fn svs_gives_every_checklist_its_own_site() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    tiny_csv(&data);
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["REDW"]

[run]
seed = 7
output_dir = "{}"

[[methods]]
name = "SVS"
"#,
            data.display(),
            out.display()
        ),
    );
    assert_ok(&occsite(&["--config", config.to_str().unwrap(), "cluster"]));

    let table = read(&out.join("clusters/svs.csv"));
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("checklist_id,site_id"));
    let sites: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(sites.len(), 3);
    let mut dedup = sites.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), 3, "SVS must give each checklist its own site");
    assert!(out.join("clusters/svs.csv.meta.toml").exists());
}

#[test]
fn unknown_method_is_rejected_with_the_roster() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    tiny_csv(&data);
    let config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["REDW"]

[run]
seed = 7

[[methods]]
name = "kmeans"
"#,
            data.display()
        ),
    );
    let out = occsite(&["--config", config.to_str().unwrap(), "cluster"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("kmeans"), "stderr: {err}");
    assert!(err.contains("SVS, 1/UL, lat-long"), "stderr: {err}");
}

#[test]
fn a_seed_is_required_and_the_flag_supplies_one() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    tiny_csv(&data);
    let out_dir = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["REDW"]

[run]
output_dir = "{}"

[[methods]]
name = "lat-long"
"#,
            data.display(),
            out_dir.display()
        ),
    );
    let refused = occsite(&["--config", config.to_str().unwrap(), "cluster"]);
    assert!(!refused.status.success());
    assert!(stderr_of(&refused).contains("seed"));

    assert_ok(&occsite(&["--config", config.to_str().unwrap(), "--seed", "5", "cluster"]));
    assert!(out_dir.join("clusters/lat-long.csv").exists());
}

#[test]
fn a_flat_model_maps_to_one_half_everywhere() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    tiny_csv(&data);
    let out = dir.path().join("out");
    std::fs::create_dir_all(out.join("models")).unwrap();
    let flat = FittedOccupancyModel {
        species: "REDW".into(),
        beta: [0.0; 6],
        gamma: [0.0; 6],
        log_likelihood: 0.0,
        converged: true,
        n_sites: 2,
        n_visits: 3,
        feature_scaling: FeatureScaling {
            x_mean: [0.0; 5],
            x_std: [1.0; 5],
            w_mean: [0.0; 5],
            w_std: [1.0; 5],
        },
        single_visit_warning: false,
        restarts: vec![],
    };
    flat.save(&out.join("models/REDW-lat-long.toml")).unwrap();

    let config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["REDW"]

[run]
seed = 7
output_dir = "{}"

[[methods]]
name = "lat-long"

[map]
resolution_deg = 0.1
"#,
            data.display(),
            out.display()
        ),
    );
    assert_ok(&occsite(&["--config", config.to_str().unwrap(), "map"]));

    let raster = read(&out.join("map-REDW-lat-long.csv"));
    let mut lines = raster.lines();
    assert_eq!(lines.next(), Some("latitude,longitude,psi"));
    let mut cells = 0;
    for line in lines {
        assert_eq!(line.split(',').nth(2), Some("0.5"), "row: {line}");
        cells += 1;
    }
    // 0.2 x 0.3 degree extent at 0.1 degree steps.
    assert_eq!(cells, 12);
}

#[test]
fn predictions_match_the_saved_model() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["SIM"]

[run]
seed = 31
output_dir = "{}"

[[methods]]
name = "lat-long"

[fit]
restarts = 2

[simulate]
n_locations = 80
visits = [1, 3]
beta = [0.2, 1.0, -0.6, 0.0, 0.4, -0.2]
gamma = [0.4, 0.8, 0.5, -0.3, 0.0, 0.1]
"#,
            out.join("simulated.csv").display(),
            out.display()
        ),
    );
    let cfg = config.to_str().unwrap();
    assert_ok(&occsite(&["--config", cfg, "simulate"]));
    assert_ok(&occsite(&["--config", cfg, "fit"]));
    assert_ok(&occsite(&["--config", cfg, "predict"]));

    let model = FittedOccupancyModel::load(&out.join("models/SIM-lat-long.toml")).unwrap();
    let report = load_checklists(
        &out.join("simulated.csv"),
        &ColumnMap::canonical(vec!["SIM".into()]),
        b',',
    )
    .unwrap();
    assert!(report.diagnostics.is_empty());

    let table = read(&out.join("predictions/SIM-lat-long.csv"));
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("checklist_id,psi,p_detect,p_observe"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), report.checklists.len());
    for (row, c) in rows.iter().zip(&report.checklists) {
        let fields: Vec<&str> = row.split(',').collect();
        let psi = model.predict_psi(&c.occupancy_features);
        let p = model.predict_p(&c.detection_features);
        assert_eq!(fields[0], c.id);
        assert_eq!(fields[1], format_f64(psi));
        assert_eq!(fields[2], format_f64(p));
        assert_eq!(fields[3], format_f64(psi * p));
    }
}

#[test]
fn predict_without_models_names_the_missing_file() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    tiny_csv(&data);
    let config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["REDW"]

[run]
seed = 7
output_dir = "{}"

[[methods]]
name = "SVS"
"#,
            data.display(),
            dir.path().join("out").display()
        ),
    );
    let out = occsite(&["--config", config.to_str().unwrap(), "predict"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("REDW-svs.toml"), "stderr: {err}");
    assert!(err.contains("not found"), "stderr: {err}");
}

#[test]
fn simulate_then_ingest_round_trips_bytes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["SIM"]

[run]
seed = 12
output_dir = "{}"

[simulate]
n_locations = 60
visits = 2
beta = [0.2, 1.0, -0.6, 0.0, 0.4, -0.2]
gamma = [0.4, 0.8, 0.5, -0.3, 0.0, 0.1]
"#,
            out.join("simulated.csv").display(),
            out.display()
        ),
    );
    let cfg = config.to_str().unwrap();
    assert_ok(&occsite(&["--config", cfg, "simulate"]));
    assert_ok(&occsite(&["--config", cfg, "ingest"]));
    assert_eq!(read(&out.join("simulated.csv")), read(&out.join("ingested.csv")));
}

#[test]
fn benchmark_writes_full_tables_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let sim_config = write_config(
        dir.path(),
        &format!(
            r#"
[input]
checklists = "{}"
species = ["SIM"]

[run]
seed = 3
output_dir = "{}"

[simulate]
n_locations = 120
visits = [1, 3]
beta = [0.2, 1.2, -0.8, 0.0, 0.5, -0.3]
gamma = [0.3, 0.9, 0.6, -0.4, 0.0, 0.2]
"#,
            out.join("simulated.csv").display(),
            out.display()
        ),
    );
    assert_ok(&occsite(&["--config", sim_config.to_str().unwrap(), "simulate"]));

    // Push half the checklists into a second year so a train/test split exists.
    let text = read(&out.join("simulated.csv"));
    let patched: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i > 0 && i % 2 == 0 {
                l.replace("2017-", "2018-")
            } else {
                l.to_string()
            }
        })
        .collect();
    let two_year = dir.path().join("two_year.csv");
    std::fs::write(&two_year, patched.join("\n") + "\n").unwrap();

    let bench_config = dir.path().join("bench.toml");
    std::fs::write(
        &bench_config,
        format!(
            r#"
[input]
checklists = "{}"
species = ["SIM"]

[run]
seed = 3

[split]
train_year = 2017
test_year = 2018

[[methods]]
name = "SVS"

[[methods]]
name = "lat-long"

[benchmark]
repeats = 2
hex_spacing_m = 2000
"#,
            two_year.display()
        ),
    )
    .unwrap();
    let cfg = bench_config.to_str().unwrap();
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    assert_ok(&occsite(&["--config", cfg, "--out", run_a.to_str().unwrap(), "benchmark"]));
    assert_ok(&occsite(&["--config", cfg, "--out", run_b.to_str().unwrap(), "benchmark"]));

    let long = read(&run_a.join("benchmark/results_long.csv"));
    let lines: Vec<&str> = long.lines().collect();
    assert_eq!(lines[0], "species,method,repeat,auc,auprc,delta_vs_latlong");
    // 1 species x 2 methods x 2 repeats.
    assert_eq!(lines.len(), 1 + 4);

    for table in ["results_long.csv", "results_summary.csv", "failures.csv"] {
        assert_eq!(
            read(&run_a.join("benchmark").join(table)),
            read(&run_b.join("benchmark").join(table)),
            "{table} differs between identical runs"
        );
    }
}
