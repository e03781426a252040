//! Site clusterings and the coordinate-keyed clustering methods.
//!
//! A `SiteClustering` partitions checklist ids into sites plus a discarded
//! remainder. Site ids are dense integers assigned by first appearance in
//! input order, so identical inputs always serialize identically.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::io::Write as IoWrite;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geo::{project_local, Origin};
use crate::ingest::{format_f64, Checklist};

/// The ten site-construction methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Svs,
    OnePerUl,
    LatLong,
    TwoToTen,
    TwoToTenSameObs,
    Rounded4,
    OneKmSq,
    ClustGeo,
    BayesOptClustGeo,
    Dbsc,
}

pub const METHOD_NAMES: [&str; 10] = [
    "SVS",
    "1/UL",
    "lat-long",
    "2to10",
    "2to10-sameObs",
    "rounded-4",
    "1-kmSq",
    "clustGeo",
    "BayesOptClustGeo",
    "DBSC",
];

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Svs,
        Method::OnePerUl,
        Method::LatLong,
        Method::TwoToTen,
        Method::TwoToTenSameObs,
        Method::Rounded4,
        Method::OneKmSq,
        Method::ClustGeo,
        Method::BayesOptClustGeo,
        Method::Dbsc,
    ];

    pub fn name(self) -> &'static str {
        METHOD_NAMES[Method::ALL.iter().position(|&m| m == self).unwrap()]
    }

    /// Filesystem-safe lowercase identifier.
    pub fn slug(self) -> &'static str {
        match self {
            Method::Svs => "svs",
            Method::OnePerUl => "one-per-ul",
            Method::LatLong => "lat-long",
            Method::TwoToTen => "2to10",
            Method::TwoToTenSameObs => "2to10-same-obs",
            Method::Rounded4 => "rounded-4",
            Method::OneKmSq => "1-km-sq",
            Method::ClustGeo => "clustgeo",
            Method::BayesOptClustGeo => "bayes-opt-clustgeo",
            Method::Dbsc => "dbsc",
        }
    }

    /// May the method discard checklists?
    pub fn may_discard(self) -> bool {
        matches!(
            self,
            Method::OnePerUl | Method::TwoToTen | Method::TwoToTenSameObs
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .zip(METHOD_NAMES)
            .find(|(_, n)| s.eq_ignore_ascii_case(n))
            .map(|(&m, _)| m)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; valid methods are {}",
                    METHOD_NAMES.join(", ")
                ))
            })
    }
}

/// A partition of checklists into sites, plus discarded checklists.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteClustering {
    pub method: Method,
    /// Checklist id -> dense site id (first appearance in input order).
    pub assignments: BTreeMap<String, u32>,
    pub discarded: Vec<String>,
    /// Method parameters as printable strings (alpha, lambda, seed, ...).
    pub params: BTreeMap<String, String>,
}

impl SiteClustering {
    pub fn n_sites(&self) -> usize {
        self.assignments
            .values()
            .copied()
            .collect::<std::collections::BTreeSet<u32>>()
            .len()
    }

    pub fn site_sizes(&self) -> BTreeMap<u32, usize> {
        let mut sizes = BTreeMap::new();
        for &s in self.assignments.values() {
            *sizes.entry(s).or_insert(0) += 1;
        }
        sizes
    }

    /// Partition check: assignments plus discarded cover `input_ids` exactly.
    pub fn validate(&self, input_ids: &[String]) -> Result<()> {
        let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
        for id in self.assignments.keys() {
            if seen.insert(id, 1).is_some() {
                return Err(Error::Param(format!("checklist {id} assigned twice")));
            }
        }
        for id in &self.discarded {
            if seen.insert(id, 2).is_some() {
                return Err(Error::Param(format!(
                    "checklist {id} both assigned and discarded"
                )));
            }
        }
        if seen.len() != input_ids.len()
            || input_ids.iter().any(|id| !seen.contains_key(id.as_str()))
        {
            return Err(Error::Param(
                "clustering does not cover the input checklists exactly".into(),
            ));
        }
        if !self.method.may_discard() && !self.discarded.is_empty() {
            return Err(Error::Param(format!(
                "method {} must not discard checklists",
                self.method
            )));
        }
        Ok(())
    }
}

/// Assign dense site ids by first key appearance, preserving input order.
pub(crate) fn assign_dense<K: Eq + Hash>(pairs: Vec<(String, K)>) -> BTreeMap<String, u32> {
    let mut ids: HashMap<K, u32> = HashMap::with_capacity(pairs.len());
    let mut out = BTreeMap::new();
    for (id, key) in pairs {
        let next = ids.len() as u32;
        let site = *ids.entry(key).or_insert(next);
        out.insert(id, site);
    }
    out
}

/// Round to `decimals` places, half away from zero, on the shortest decimal
/// representation of `v`.
///
/// String-based so 0.12345 becomes "0.1235" even when the nearest f64 sits
/// fractionally below the true decimal, and identically on every platform.
pub fn round_half_up_str(v: f64, decimals: usize) -> String {
    let s = format_f64(v);
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", s.as_str()),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i.to_string(), f.to_string()),
        None => (digits.to_string(), String::new()),
    };
    let mut frac: Vec<u8> = frac_part.bytes().collect();
    let mut int: Vec<u8> = int_part.bytes().collect();
    if frac.len() > decimals {
        let round_up = frac[decimals] >= b'5';
        frac.truncate(decimals);
        if round_up {
            let mut carry = true;
            for d in frac.iter_mut().rev() {
                if *d == b'9' {
                    *d = b'0';
                } else {
                    *d += 1;
                    carry = false;
                    break;
                }
            }
            if carry {
                for d in int.iter_mut().rev() {
                    if *d == b'9' {
                        *d = b'0';
                    } else {
                        *d += 1;
                        carry = false;
                        break;
                    }
                }
                if carry {
                    int.insert(0, b'1');
                }
            }
        }
    }
    while frac.len() < decimals {
        frac.push(b'0');
    }
    let int_s = String::from_utf8(int).unwrap();
    let frac_s = String::from_utf8(frac).unwrap();
    let all_zero =
        int_s.bytes().all(|b| b == b'0') && frac_s.bytes().all(|b| b == b'0');
    let sign = if all_zero { "" } else { sign };
    if decimals == 0 {
        format!("{sign}{int_s}")
    } else {
        format!("{sign}{int_s}.{frac_s}")
    }
}

/// Group checklists by exact coordinates, optionally rounded first.
///
/// `decimals = None` keys on the coordinates bit-for-bit (the lat-long
/// method); `Some(d)` rounds both coordinates half away from zero to `d`
/// places first (rounded-4 with d = 4).
pub fn cluster_exact_coord(cs: &[Checklist], decimals: Option<usize>) -> SiteClustering {
    let mut params = BTreeMap::new();
    let method = match decimals {
        None => Method::LatLong,
        Some(d) => {
            params.insert("decimals".into(), d.to_string());
            Method::Rounded4
        }
    };
    let pairs = cs
        .iter()
        .map(|c| {
            let key = match decimals {
                None => {
                    let (a, b) = c.coord_key();
                    (a.to_string(), b.to_string())
                }
                Some(d) => (
                    round_half_up_str(c.latitude, d),
                    round_half_up_str(c.longitude, d),
                ),
            };
            (c.id.clone(), key)
        })
        .collect();
    SiteClustering {
        method,
        assignments: assign_dense(pairs),
        discarded: Vec::new(),
        params,
    }
}

/// SVS (`one_per_location = false`): every checklist its own site.
/// 1/UL (`true`): keep one seeded-uniform checklist per unique coordinate.
pub fn cluster_trivial(cs: &[Checklist], one_per_location: bool, seed: u64) -> SiteClustering {
    if !one_per_location {
        let pairs = cs.iter().map(|c| (c.id.clone(), c.id.clone())).collect();
        return SiteClustering {
            method: Method::Svs,
            assignments: assign_dense(pairs),
            discarded: Vec::new(),
            params: BTreeMap::new(),
        };
    }
    let mut rng = crate::seed::rng_for(seed, "one-per-ul");
    let groups = group_in_order(cs, |c| c.coord_key());
    let mut kept = vec![false; cs.len()];
    for (_, members) in &groups {
        kept[members[rng.gen_range(0..members.len())]] = true;
    }
    let mut pairs = Vec::new();
    let mut discarded = Vec::new();
    for (i, c) in cs.iter().enumerate() {
        if kept[i] {
            pairs.push((c.id.clone(), c.id.clone()));
        } else {
            discarded.push(c.id.clone());
        }
    }
    SiteClustering {
        method: Method::OnePerUl,
        assignments: assign_dense(pairs),
        discarded,
        params: BTreeMap::from([("seed".into(), seed.to_string())]),
    }
}

/// Coordinate groups (optionally also keyed by observer) forced into the
/// size band `[min_size, max_size]`: undersized groups are discarded whole,
/// oversized groups keep a seeded uniform subsample of `max_size`.
pub fn cluster_bounded(
    cs: &[Checklist],
    min_size: usize,
    max_size: usize,
    same_observer: bool,
    seed: u64,
) -> Result<SiteClustering> {
    if min_size < 1 || min_size > max_size {
        return Err(Error::Param(format!(
            "invalid size band [{min_size}, {max_size}]"
        )));
    }
    let mut rng = crate::seed::rng_for(seed, "cluster-bounded");
    let groups: Vec<(_, Vec<usize>)> = if same_observer {
        group_in_order(cs, |c| (c.coord_key(), c.observer_id.clone()))
            .into_iter()
            .map(|(k, v)| (Some(k), v))
            .collect()
    } else {
        group_in_order(cs, |c| c.coord_key())
            .into_iter()
            .map(|(k, v)| (Some((k, String::new())), v))
            .collect()
    };
    let mut site_of = vec![None; cs.len()];
    let mut site = 0u32;
    for (_, members) in &groups {
        if members.len() < min_size {
            continue;
        }
        let chosen: Vec<usize> = if members.len() > max_size {
            sample_indices(&mut rng, members.len(), max_size)
                .into_iter()
                .map(|i| members[i])
                .collect()
        } else {
            members.clone()
        };
        for i in chosen {
            site_of[i] = Some(site);
        }
        site += 1;
    }
    let mut pairs = Vec::new();
    let mut discarded = Vec::new();
    for (i, c) in cs.iter().enumerate() {
        match site_of[i] {
            Some(s) => pairs.push((c.id.clone(), s)),
            None => discarded.push(c.id.clone()),
        }
    }
    Ok(SiteClustering {
        method: if same_observer {
            Method::TwoToTenSameObs
        } else {
            Method::TwoToTen
        },
        assignments: assign_dense(pairs),
        discarded,
        params: BTreeMap::from([
            ("min_size".into(), min_size.to_string()),
            ("max_size".into(), max_size.to_string()),
            ("seed".into(), seed.to_string()),
        ]),
    })
}

/// Square-grid clustering on the local projection.
///
/// The grid anchors at `origin` (bounding-box minimum of the data when not
/// given); the site key is the cell index pair.
pub fn cluster_grid(
    cs: &[Checklist],
    cell_size_m: f64,
    origin: Option<Origin>,
) -> Result<SiteClustering> {
    if !(cell_size_m > 0.0) {
        return Err(Error::Param(format!("cell size must be positive, got {cell_size_m}")));
    }
    let origin = resolve_origin(cs, origin)?;
    let pairs = cs
        .iter()
        .map(|c| {
            let p = project_local(c.latitude, c.longitude, origin, 0);
            let key = (
                (p.x / cell_size_m).floor() as i64,
                (p.y / cell_size_m).floor() as i64,
            );
            (c.id.clone(), key)
        })
        .collect();
    Ok(SiteClustering {
        method: Method::OneKmSq,
        assignments: assign_dense(pairs),
        discarded: Vec::new(),
        params: BTreeMap::from([
            ("cell_size_m".into(), format_f64(cell_size_m)),
            ("origin_lat".into(), format_f64(origin.lat)),
            ("origin_lon".into(), format_f64(origin.lon)),
        ]),
    })
}

pub(crate) fn resolve_origin(cs: &[Checklist], origin: Option<Origin>) -> Result<Origin> {
    origin
        .or_else(|| Origin::bounding_box_min(cs.iter().map(|c| (c.latitude, c.longitude))))
        .ok_or_else(|| Error::EmptyInput("no checklists to anchor the projection".into()))
}

/// One unique coordinate, carrying the features of its first checklist.
#[derive(Debug, Clone, Copy)]
pub struct UniqueLocation {
    pub latitude: f64,
    pub longitude: f64,
    pub occupancy_features: [f64; 5],
}

/// Deduplicate checklists to unique coordinates in first-appearance order.
///
/// Returns the locations and, for each checklist, the index of its location.
pub fn unique_locations(cs: &[Checklist]) -> (Vec<UniqueLocation>, Vec<usize>) {
    let mut locs = Vec::new();
    let mut loc_of = Vec::with_capacity(cs.len());
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    for c in cs {
        let k = c.coord_key();
        let i = *index.entry(k).or_insert_with(|| {
            locs.push(UniqueLocation {
                latitude: c.latitude,
                longitude: c.longitude,
                occupancy_features: c.occupancy_features,
            });
            locs.len() - 1
        });
        loc_of.push(i);
    }
    (locs, loc_of)
}

/// Group indices by key, groups ordered by first appearance.
pub(crate) fn group_in_order<K: Eq + Hash + Clone>(
    cs: &[Checklist],
    key: impl Fn(&Checklist) -> K,
) -> Vec<(K, Vec<usize>)> {
    let mut order: Vec<(K, Vec<usize>)> = Vec::new();
    let mut index: HashMap<K, usize> = HashMap::new();
    for (i, c) in cs.iter().enumerate() {
        let k = key(c);
        match index.get(&k) {
            Some(&g) => order[g].1.push(i),
            None => {
                index.insert(k.clone(), order.len());
                order.push((k, vec![i]));
            }
        }
    }
    order
}

/// `k` distinct indices from `0..len`, uniform without replacement.
fn sample_indices(rng: &mut impl Rng, len: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let j = rng.gen_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    method: String,
    discarded: Vec<String>,
    params: BTreeMap<String, String>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    s.into()
}

/// Write the two-column assignment table plus a metadata sidecar
/// (`<path>.meta.toml` holding method, params, and discarded ids).
pub fn write_assignments(path: &Path, sc: &SiteClustering, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)?;
    w.write_record(["checklist_id", "site_id"])?;
    for (id, site) in &sc.assignments {
        w.write_record([id.as_str(), &site.to_string()])?;
    }
    w.flush()?;
    let meta = Sidecar {
        method: sc.method.name().to_string(),
        discarded: sc.discarded.clone(),
        params: sc.params.clone(),
    };
    let text = toml::to_string_pretty(&meta).map_err(|e| Error::Serialize(e.to_string()))?;
    let mut f = std::fs::File::create(sidecar_path(path))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Read a clustering written by [`write_assignments`].
pub fn read_assignments(path: &Path, delimiter: u8) -> Result<SiteClustering> {
    let meta_text = std::fs::read_to_string(sidecar_path(path))?;
    let meta: Sidecar =
        toml::from_str(&meta_text).map_err(|e| Error::Config(e.to_string()))?;
    let method: Method = meta.method.parse()?;
    let mut r = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)?;
    let mut assignments = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id = rec
            .get(0)
            .ok_or_else(|| Error::Config("missing checklist_id column".into()))?;
        let site: u32 = rec
            .get(1)
            .ok_or_else(|| Error::Config("missing site_id column".into()))?
            .parse()
            .map_err(|e| Error::Config(format!("bad site id for {id}: {e}")))?;
        assignments.insert(id.to_string(), site);
    }
    Ok(SiteClustering {
        method,
        assignments,
        discarded: meta.discarded,
        params: meta.params,
    })
}
