//! TOML run configuration.
//!
//! One file drives every subcommand. `[input]` and `[run]` are required;
//! the other sections default sensibly and only matter to the commands
//! that read them. Command-line flags override `run.seed` and
//! `run.output_dir`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use occsite::cluster::Method;
use occsite::eval::DEFAULT_REPEATS;
use occsite::hex::DEFAULT_SPACING_M;
use occsite::ingest::{format_f64, ColumnMap};
use occsite::methods::MethodSpec;
use occsite::simulate::VisitCount;
use occsite::tune::{DEFAULT_ALPHA_RANGE, DEFAULT_ITERATIONS, DEFAULT_LAMBDA_RANGE};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub input: InputSection,
    pub run: RunSection,
    #[serde(default)]
    pub methods: Vec<MethodSection>,
    pub split: Option<SplitSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub map: MapSection,
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// Checklist CSV to read.
    pub checklists: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    /// Species detection columns to read.
    pub species: Vec<String>,
    /// Column-name overrides; unset names keep the canonical schema.
    pub columns: Option<ColumnsSection>,
    /// Drop checklists traveling farther than this (km).
    pub max_distance_km: Option<f64>,
    #[serde(default)]
    pub exclude_hotspots: bool,
}

fn default_delimiter() -> String {
    ",".into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnsSection {
    pub id: Option<String>,
    pub latitude: Option<String>,
    pub longitude: Option<String>,
    pub observer_id: Option<String>,
    pub date: Option<String>,
    pub effort_distance_km: Option<String>,
    pub is_hotspot: Option<String>,
    pub detection_features: Option<[String; 5]>,
    pub occupancy_features: Option<[String; 5]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Master seed; every stream in a run derives from it. Required
    /// unless `--seed` is passed.
    pub seed: Option<u64>,
    /// Species to model (default: all of `input.species`).
    pub species: Option<Vec<String>>,
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    pub workers: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: String,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub alpha_range: Option<[f64; 2]>,
    pub lambda_range: Option<[f64; 2]>,
}

impl MethodSection {
    pub fn to_spec(&self) -> Result<MethodSpec> {
        let method: Method = self.name.parse()?;
        let fixed = self.alpha.is_some() || self.lambda.is_some();
        let tuned =
            self.iterations.is_some() || self.alpha_range.is_some() || self.lambda_range.is_some();
        let spec = match method {
            Method::ClustGeo => {
                if tuned {
                    bail!("{}: iterations and ranges apply only to BayesOptClustGeo", self.name);
                }
                MethodSpec::ClustGeo {
                    alpha: self.alpha.unwrap_or(0.25),
                    lambda: self.lambda.unwrap_or(80.0),
                }
            }
            Method::BayesOptClustGeo => {
                if fixed {
                    bail!("{}: fixed alpha and lambda apply only to clustGeo", self.name);
                }
                MethodSpec::BayesOptClustGeo {
                    iterations: self.iterations.unwrap_or(DEFAULT_ITERATIONS),
                    alpha_range: self.alpha_range.unwrap_or(DEFAULT_ALPHA_RANGE),
                    lambda_range: self.lambda_range.unwrap_or(DEFAULT_LAMBDA_RANGE),
                }
            }
            other => {
                if fixed || tuned {
                    bail!("method {} takes no parameters", self.name);
                }
                MethodSpec::of(other)
            }
        };
        Ok(spec)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_year: i32,
    pub test_year: i32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub restarts: usize,
    pub tol: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { restarts: 5, tol: 1e-6 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSection {
    pub iterations: usize,
    pub alpha_range: [f64; 2],
    pub lambda_range: [f64; 2],
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            alpha_range: DEFAULT_ALPHA_RANGE,
            lambda_range: DEFAULT_LAMBDA_RANGE,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub repeats: usize,
    pub hex_spacing_m: f64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self { repeats: DEFAULT_REPEATS, hex_spacing_m: DEFAULT_SPACING_M }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub resolution_deg: f64,
    /// Species to rasterize (default: first modeled species).
    pub species: Option<String>,
    /// Method whose model to use (default: first configured method).
    pub method: Option<String>,
}

impl Default for MapSection {
    fn default() -> Self {
        Self { resolution_deg: 0.01, species: None, method: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n_locations: usize,
    /// Either a fixed count (`visits = 4`) or inclusive bounds
    /// (`visits = [2, 10]`).
    pub visits: VisitsField,
    pub beta: [f64; 6],
    pub gamma: [f64; 6],
    #[serde(default = "default_blob_count")]
    pub blob_count: usize,
}

fn default_blob_count() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum VisitsField {
    Fixed(usize),
    Range([usize; 2]),
}

impl VisitsField {
    pub fn to_count(&self) -> VisitCount {
        match self {
            VisitsField::Fixed(n) => VisitCount::Fixed(*n),
            VisitsField::Range([lo, hi]) => VisitCount::UniformRange(*lo, *hi),
        }
    }
}

/// A parsed configuration with flag overrides applied and the cheap
/// cross-field checks done.
pub struct Config {
    pub raw: RawConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub delimiter: u8,
    pub specs: Vec<MethodSpec>,
    pub model_species: Vec<String>,
}

impl Config {
    pub fn column_map(&self) -> ColumnMap {
        let mut map = ColumnMap::canonical(self.raw.input.species.clone());
        if let Some(c) = &self.raw.input.columns {
            if let Some(v) = &c.id {
                map.id = v.clone();
            }
            if let Some(v) = &c.latitude {
                map.latitude = v.clone();
            }
            if let Some(v) = &c.longitude {
                map.longitude = v.clone();
            }
            if let Some(v) = &c.observer_id {
                map.observer_id = v.clone();
            }
            if let Some(v) = &c.date {
                map.date = v.clone();
            }
            if let Some(v) = &c.effort_distance_km {
                map.effort_distance_km = v.clone();
            }
            if let Some(v) = &c.is_hotspot {
                map.is_hotspot = v.clone();
            }
            if let Some(v) = &c.detection_features {
                map.detection_features = v.clone();
            }
            if let Some(v) = &c.occupancy_features {
                map.occupancy_features = v.clone();
            }
        }
        map
    }
}

/// File stem for per-method outputs. The method slug, with clustGeo
/// carrying its parameters so differently tuned entries stay apart.
pub fn file_stem(spec: &MethodSpec) -> String {
    match spec {
        MethodSpec::ClustGeo { alpha, lambda } => {
            format!("clustgeo-{}-{}", format_f64(alpha * 100.0), format_f64(*lambda))
        }
        other => other.method().slug().to_string(),
    }
}

pub fn load(path: &Path, seed_flag: Option<u64>, out_flag: Option<PathBuf>) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let raw: RawConfig =
        toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))?;

    let seed = seed_flag
        .or(raw.run.seed)
        .context("no seed: set run.seed in the config or pass --seed")?;
    let out_dir = out_flag
        .or_else(|| raw.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let delimiter = parse_delimiter(&raw.input.delimiter)?;

    if raw.input.species.is_empty() {
        bail!("input.species must list at least one detection column");
    }
    let model_species = raw
        .run
        .species
        .clone()
        .unwrap_or_else(|| raw.input.species.clone());
    for sp in &model_species {
        if !raw.input.species.contains(sp) {
            bail!("run.species {sp:?} is not among input.species");
        }
    }

    let specs = if raw.methods.is_empty() {
        MethodSpec::all_default()
    } else {
        raw.methods
            .iter()
            .map(MethodSection::to_spec)
            .collect::<Result<Vec<_>>>()?
    };
    let mut stems: Vec<String> = specs.iter().map(file_stem).collect();
    stems.sort();
    stems.dedup();
    if stems.len() != specs.len() {
        bail!("duplicate entries in [[methods]]");
    }

    Ok(Config { raw, seed, out_dir, delimiter, specs, model_species })
}

fn parse_delimiter(s: &str) -> Result<u8> {
    match s.as_bytes() {
        [b] => Ok(*b),
        [b'\\', b't'] => Ok(b'\t'),
        _ => bail!("delimiter must be a single character, got {s:?}"),
    }
}
