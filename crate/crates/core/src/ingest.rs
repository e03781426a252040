//! Checklist loading, validation, filtering, and train/test splitting.
//!
//! Input is delimiter-separated text with a header row. A [`ColumnMap`]
//! names the columns holding each field; species detection columns hold
//! exactly `0` or `1`. Rows that fail validation are reported with their
//! row index and skipped, never silently dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the five detection (survey) feature columns, in design order.
pub const DETECTION_FEATURE_NAMES: [&str; 5] = [
    "day_of_year",
    "time_observations_started",
    "duration_minutes",
    "effort_distance_km",
    "number_observers",
];

/// Names of the five occupancy (habitat) feature columns, in design order.
pub const OCCUPANCY_FEATURE_NAMES: [&str; 5] = [
    "elevation",
    "tc_brightness",
    "tc_greenness",
    "tc_wetness",
    "tc_angle",
];

/// One observation event with its joined covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Checklist {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub observer_id: String,
    pub date: NaiveDate,
    pub effort_distance_km: f64,
    pub is_hotspot: bool,
    /// day_of_year, time_observations_started, duration_minutes,
    /// effort_distance_km, number_observers.
    pub detection_features: [f64; 5],
    /// elevation, TC brightness, TC greenness, TC wetness, TC angle.
    pub occupancy_features: [f64; 5],
    /// species code -> detected on this checklist.
    pub detections: BTreeMap<String, bool>,
}

impl Checklist {
    /// Exact-coordinate key; equal iff latitude and longitude are bit-equal.
    pub fn coord_key(&self) -> (u64, u64) {
        (self.latitude.to_bits(), self.longitude.to_bits())
    }

    pub fn detected(&self, species: &str) -> Result<bool> {
        self.detections
            .get(species)
            .copied()
            .ok_or_else(|| Error::UnknownSpecies(species.to_string()))
    }
}

/// Maps canonical field names to column names in the input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    pub id: String,
    pub latitude: String,
    pub longitude: String,
    pub observer_id: String,
    pub date: String,
    pub effort_distance_km: String,
    pub is_hotspot: String,
    /// Column names for the five detection features, in design order.
    pub detection_features: [String; 5],
    /// Column names for the five occupancy features, in design order.
    pub occupancy_features: [String; 5],
    /// Species-code columns to read into the detections map.
    pub species: Vec<String>,
}

impl ColumnMap {
    /// Canonical column names with the given species columns.
    pub fn canonical(species: Vec<String>) -> Self {
        Self {
            id: "checklist_id".into(),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            observer_id: "observer_id".into(),
            date: "date".into(),
            effort_distance_km: "effort_distance_km".into(),
            is_hotspot: "is_hotspot".into(),
            detection_features: DETECTION_FEATURE_NAMES.map(String::from),
            occupancy_features: OCCUPANCY_FEATURE_NAMES.map(String::from),
            species,
        }
    }
}

/// A rejected row and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    /// 1-based data row index (header excluded).
    pub row: usize,
    pub message: String,
}

/// Result of loading a checklist table.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub checklists: Vec<Checklist>,
    pub diagnostics: Vec<RowDiagnostic>,
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_finite(field: &str, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("column '{name}': cannot parse '{field}' as a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("column '{name}': non-finite value '{field}'"))
    }
}

fn parse_flag(field: &str, name: &str) -> std::result::Result<bool, String> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" => Ok(true),
        "0" | "false" | "f" => Ok(false),
        other => Err(format!("column '{name}': expected 0/1 or true/false, got '{other}'")),
    }
}

fn parse_detection(field: &str, name: &str) -> std::result::Result<bool, String> {
    match field.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(format!("species column '{name}': expected exactly 0 or 1, got '{other}'")),
    }
}

/// Load checklists from a delimiter-separated file.
///
/// Returns one `Checklist` per valid data row plus a diagnostic per rejected
/// row. Missing columns and files without data rows are hard errors.
pub fn load_checklists(path: &Path, map: &ColumnMap, delimiter: u8) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_path(path)?;
    let headers = reader.headers()?.clone();

    let idx_id = header_index(&headers, &map.id)?;
    let idx_lat = header_index(&headers, &map.latitude)?;
    let idx_lon = header_index(&headers, &map.longitude)?;
    let idx_obs = header_index(&headers, &map.observer_id)?;
    let idx_date = header_index(&headers, &map.date)?;
    let idx_dist = header_index(&headers, &map.effort_distance_km)?;
    let idx_hot = header_index(&headers, &map.is_hotspot)?;
    let mut idx_det = [0usize; 5];
    for (i, name) in map.detection_features.iter().enumerate() {
        idx_det[i] = header_index(&headers, name)?;
    }
    let mut idx_occ = [0usize; 5];
    for (i, name) in map.occupancy_features.iter().enumerate() {
        idx_occ[i] = header_index(&headers, name)?;
    }
    let idx_species: Vec<(String, usize)> = map
        .species
        .iter()
        .map(|s| header_index(&headers, s).map(|i| (s.clone(), i)))
        .collect::<Result<_>>()?;

    let mut checklists = Vec::new();
    let mut diagnostics = Vec::new();
    let mut row = 0usize;
    for record in reader.records() {
        row += 1;
        let record = record?;
        match parse_row(
            &record,
            idx_id,
            idx_lat,
            idx_lon,
            idx_obs,
            idx_date,
            idx_dist,
            idx_hot,
            &idx_det,
            &idx_occ,
            &idx_species,
        ) {
            Ok(c) => checklists.push(c),
            Err(message) => diagnostics.push(RowDiagnostic { row, message }),
        }
    }

    if row == 0 {
        return Err(Error::EmptyInput(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    Ok(LoadReport {
        checklists,
        diagnostics,
    })
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    record: &csv::StringRecord,
    idx_id: usize,
    idx_lat: usize,
    idx_lon: usize,
    idx_obs: usize,
    idx_date: usize,
    idx_dist: usize,
    idx_hot: usize,
    idx_det: &[usize; 5],
    idx_occ: &[usize; 5],
    idx_species: &[(String, usize)],
) -> std::result::Result<Checklist, String> {
    let field = |i: usize| record.get(i).unwrap_or("");

    let latitude = parse_finite(field(idx_lat), "latitude")?;
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(format!("latitude {latitude} outside [-90, 90]"));
    }
    let longitude = parse_finite(field(idx_lon), "longitude")?;
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(format!("longitude {longitude} outside [-180, 180]"));
    }
    let date = NaiveDate::parse_from_str(field(idx_date).trim(), "%Y-%m-%d")
        .map_err(|_| format!("date: cannot parse '{}' (expected YYYY-MM-DD)", field(idx_date)))?;
    let effort_distance_km = parse_finite(field(idx_dist), "effort_distance_km")?;
    if effort_distance_km < 0.0 {
        return Err(format!("effort_distance_km {effort_distance_km} is negative"));
    }
    let is_hotspot = parse_flag(field(idx_hot), "is_hotspot")?;

    let mut detection_features = [0.0; 5];
    for (slot, (&col, name)) in detection_features
        .iter_mut()
        .zip(idx_det.iter().zip(DETECTION_FEATURE_NAMES))
    {
        *slot = parse_finite(field(col), name)?;
    }
    let mut occupancy_features = [0.0; 5];
    for (slot, (&col, name)) in occupancy_features
        .iter_mut()
        .zip(idx_occ.iter().zip(OCCUPANCY_FEATURE_NAMES))
    {
        *slot = parse_finite(field(col), name)?;
    }

    let mut detections = BTreeMap::new();
    for (code, col) in idx_species {
        detections.insert(code.clone(), parse_detection(field(*col), code)?);
    }

    Ok(Checklist {
        id: field(idx_id).trim().to_string(),
        latitude,
        longitude,
        observer_id: field(idx_obs).trim().to_string(),
        date,
        effort_distance_km,
        is_hotspot,
        detection_features,
        occupancy_features,
        detections,
    })
}

/// Write checklists in the canonical column layout.
///
/// Species columns are the sorted union of detection keys, so loading the
/// file back with [`ColumnMap::canonical`] recovers the same checklists.
pub fn write_checklists<W: Write>(out: W, cs: &[Checklist], delimiter: u8) -> Result<()> {
    let species: BTreeSet<&str> = cs
        .iter()
        .flat_map(|c| c.detections.keys().map(String::as_str))
        .collect();

    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    let mut header: Vec<String> = vec![
        "checklist_id".into(),
        "latitude".into(),
        "longitude".into(),
        "observer_id".into(),
        "date".into(),
        "effort_distance_km".into(),
        "is_hotspot".into(),
    ];
    // effort_distance_km doubles as a detection feature; its column is
    // already present, so skip it here.
    header.extend(
        DETECTION_FEATURE_NAMES
            .iter()
            .filter(|n| **n != "effort_distance_km")
            .map(|n| n.to_string()),
    );
    header.extend(OCCUPANCY_FEATURE_NAMES.iter().map(|n| n.to_string()));
    header.extend(species.iter().map(|s| s.to_string()));
    w.write_record(&header)?;

    for c in cs {
        let mut rec: Vec<String> = vec![
            c.id.clone(),
            format_f64(c.latitude),
            format_f64(c.longitude),
            c.observer_id.clone(),
            c.date.format("%Y-%m-%d").to_string(),
            format_f64(c.effort_distance_km),
            if c.is_hotspot { "1" } else { "0" }.into(),
        ];
        for (i, v) in c.detection_features.iter().enumerate() {
            if DETECTION_FEATURE_NAMES[i] != "effort_distance_km" {
                rec.push(format_f64(*v));
            }
        }
        rec.extend(c.occupancy_features.iter().map(|v| format_f64(*v)));
        for s in &species {
            let v = c.detections.get(*s).copied().unwrap_or(false);
            rec.push(if v { "1" } else { "0" }.into());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_checklists_to_path(path: &Path, cs: &[Checklist], delimiter: u8) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checklists(file, cs, delimiter)
}

/// Shortest round-trip decimal form; reparsing recovers the identical f64.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Keep checklists with effort distance within `max_distance_km` (inclusive)
/// and, when `exclude_hotspots`, drop hotspot checklists. Order preserved.
pub fn filter_checklists(
    cs: &[Checklist],
    max_distance_km: f64,
    exclude_hotspots: bool,
) -> Vec<Checklist> {
    cs.iter()
        .filter(|c| c.effort_distance_km <= max_distance_km)
        .filter(|c| !(exclude_hotspots && c.is_hotspot))
        .cloned()
        .collect()
}

/// A temporally independent train/test split.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Checklist>,
    pub test: Vec<Checklist>,
    pub train_label: String,
    pub test_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitAssignment {
    Train,
    Test,
    Discard,
}

/// Assign each checklist to train, test, or discard via `rule`.
///
/// Errors if either side ends up empty or a checklist id appears on both
/// sides (duplicate ids in the input).
pub fn split_by<F>(
    cs: &[Checklist],
    rule: F,
    train_label: &str,
    test_label: &str,
) -> Result<DatasetSplit>
where
    F: Fn(&Checklist) -> SplitAssignment,
{
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in cs {
        match rule(c) {
            SplitAssignment::Train => train.push(c.clone()),
            SplitAssignment::Test => test.push(c.clone()),
            SplitAssignment::Discard => {}
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Split(format!(
            "split '{train_label}'/'{test_label}' left {} train and {} test checklists; both sides must be nonempty",
            train.len(),
            test.len()
        )));
    }
    let train_ids: BTreeSet<&str> = train.iter().map(|c| c.id.as_str()).collect();
    if let Some(dup) = test.iter().find(|c| train_ids.contains(c.id.as_str())) {
        return Err(Error::Split(format!(
            "checklist id '{}' appears in both train and test",
            dup.id
        )));
    }
    Ok(DatasetSplit {
        train,
        test,
        train_label: train_label.to_string(),
        test_label: test_label.to_string(),
    })
}

/// Year-based rule: `train_year` -> train, `test_year` -> test, rest discarded.
pub fn year_rule(train_year: i32, test_year: i32) -> impl Fn(&Checklist) -> SplitAssignment {
    move |c: &Checklist| {
        let y = c.date.year();
        if y == train_year {
            SplitAssignment::Train
        } else if y == test_year {
            SplitAssignment::Test
        } else {
            SplitAssignment::Discard
        }
    }
}
