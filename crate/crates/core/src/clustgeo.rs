//! Spatially constrained agglomerative clustering with a mixing weight.
//!
//! Unique locations are clustered on the blended dissimilarity
//! D = alpha * d_geo + (1 - alpha) * d_feat, where d_geo is Euclidean
//! distance on the local projection, d_feat is Euclidean distance on
//! z-scored habitat features, and each matrix is scaled by its maximum
//! entry so alpha trades off comparable quantities. The Ward dendrogram is
//! cut at a cluster count set by lambda as a percentage of the unique
//! locations, and every checklist inherits its location's cluster.

use std::collections::BTreeMap;

use crate::cluster::{
    assign_dense, resolve_origin, unique_locations, Method, SiteClustering, UniqueLocation,
};
use crate::error::{Error, Result};
use crate::geo::{project_local, Origin, PlanarPoint};
use crate::ingest::{format_f64, Checklist};
use crate::linkage::{cut, ward_linkage, CondensedMatrix, Merge};

/// Z-score each column in place; constant columns become all zeros.
pub(crate) fn zscore_columns(rows: &mut [Vec<f64>]) {
    if rows.is_empty() {
        return;
    }
    let n = rows.len() as f64;
    let width = rows[0].len();
    for j in 0..width {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for r in rows.iter_mut() {
            r[j] = if std > 0.0 { (r[j] - mean) / std } else { 0.0 };
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Precomputed dissimilarity structure, reusable across (alpha, lambda)
/// settings when tuning.
pub struct ClustGeoContext {
    pub locations: Vec<UniqueLocation>,
    pub location_of: Vec<usize>,
    pub points: Vec<PlanarPoint>,
    pub origin: Origin,
    d_geo: CondensedMatrix,
    d_feat: CondensedMatrix,
    checklist_ids: Vec<String>,
}

impl ClustGeoContext {
    pub fn new(cs: &[Checklist], origin: Option<Origin>) -> Result<Self> {
        let origin = resolve_origin(cs, origin)?;
        let (locations, location_of) = unique_locations(cs);
        let n = locations.len();
        let points: Vec<PlanarPoint> = locations
            .iter()
            .enumerate()
            .map(|(i, l)| project_local(l.latitude, l.longitude, origin, i))
            .collect();
        let mut feats: Vec<Vec<f64>> = locations
            .iter()
            .map(|l| l.occupancy_features.to_vec())
            .collect();
        zscore_columns(&mut feats);

        let mut d_geo = CondensedMatrix::from_fn(n, |i, j| points[i].distance(&points[j]));
        let mut d_feat = CondensedMatrix::from_fn(n, |i, j| euclidean(&feats[i], &feats[j]));
        for m in [&mut d_geo, &mut d_feat] {
            let max = m.max_entry();
            if max > 0.0 {
                m.scale(1.0 / max);
            }
        }
        Ok(Self {
            locations,
            location_of,
            points,
            origin,
            d_geo,
            d_feat,
            checklist_ids: cs.iter().map(|c| c.id.clone()).collect(),
        })
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    /// Cluster count implied by a lambda percentage.
    pub fn cluster_count(&self, lambda_pct: f64) -> Result<usize> {
        let n = self.n_locations();
        let k = (lambda_pct / 100.0 * n as f64).round() as usize;
        if k < 1 || k > n {
            return Err(Error::Param(format!(
                "lambda {lambda_pct} yields {k} clusters for {n} unique locations"
            )));
        }
        Ok(k)
    }

    /// Per-location cluster labels for one (alpha, lambda) setting.
    pub fn labels(&self, alpha: f64, lambda_pct: f64) -> Result<Vec<u32>> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Param(format!("alpha must be in [0, 1], got {alpha}")));
        }
        if !(lambda_pct > 0.0 && lambda_pct <= 100.0) {
            return Err(Error::Param(format!(
                "lambda must be in (0, 100], got {lambda_pct}"
            )));
        }
        let k = self.cluster_count(lambda_pct)?;
        let mixed = self.d_geo.mix(&self.d_feat, alpha);
        let merges: Vec<Merge> = ward_linkage(&mixed);
        cut(&merges, self.n_locations(), k)
    }

    /// Broadcast location labels back to a full clustering.
    pub fn to_clustering(&self, alpha: f64, lambda_pct: f64) -> Result<SiteClustering> {
        let labels = self.labels(alpha, lambda_pct)?;
        let pairs = self
            .checklist_ids
            .iter()
            .zip(&self.location_of)
            .map(|(id, &loc)| (id.clone(), labels[loc]))
            .collect();
        Ok(SiteClustering {
            method: Method::ClustGeo,
            assignments: assign_dense(pairs),
            discarded: Vec::new(),
            params: BTreeMap::from([
                ("alpha".into(), format_f64(alpha)),
                ("lambda".into(), format_f64(lambda_pct)),
                ("clusters".into(), self.cluster_count(lambda_pct)?.to_string()),
                ("origin_lat".into(), format_f64(self.origin.lat)),
                ("origin_lon".into(), format_f64(self.origin.lon)),
            ]),
        })
    }
}

/// One-shot spatially constrained clustering; see [`ClustGeoContext`].
pub fn cluster_clustgeo(
    cs: &[Checklist],
    alpha: f64,
    lambda_pct: f64,
    origin: Option<Origin>,
) -> Result<SiteClustering> {
    ClustGeoContext::new(cs, origin)?.to_clustering(alpha, lambda_pct)
}
