//! Two-phase divisive clustering over the Delaunay graph.
//!
//! Phase one removes implausibly long edges from the triangulation of
//! unique locations, first against whole-graph statistics, then again
//! inside each resulting subgraph. Phase two splits each spatial partition
//! by feature similarity: an edge survives only if its z-scored feature
//! distance stays within one standard deviation of the partition mean.
//! Connected components of the surviving edges are the sites.

use std::collections::BTreeMap;

use crate::cluster::{assign_dense, resolve_origin, unique_locations, Method, SiteClustering};
use crate::clustgeo::zscore_columns;
use crate::delaunay::{delaunay, TriEdge};
use crate::error::Result;
use crate::geo::{project_local, Origin};
use crate::ingest::Checklist;

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Remove edges longer than `mean + (mean / local_mean(p)) * std` at either
/// endpoint, where statistics run over `edges` and `n` vertices.
fn cut_long_edges(edges: &[TriEdge], n: usize) -> Vec<TriEdge> {
    if edges.is_empty() {
        return Vec::new();
    }
    let (gmean, gstd) = mean_std(edges.iter().map(|e| e.length));
    let mut local_sum = vec![0.0; n];
    let mut local_cnt = vec![0usize; n];
    for e in edges {
        local_sum[e.a] += e.length;
        local_sum[e.b] += e.length;
        local_cnt[e.a] += 1;
        local_cnt[e.b] += 1;
    }
    let too_long = |e: &TriEdge, v: usize| {
        let local_mean = local_sum[v] / local_cnt[v] as f64;
        e.length > gmean + (gmean / local_mean) * gstd
    };
    edges
        .iter()
        .filter(|e| !too_long(e, e.a) && !too_long(e, e.b))
        .copied()
        .collect()
}

fn components(edges: &[TriEdge], n: usize) -> Vec<usize> {
    let mut dsu = Dsu::new(n);
    for e in edges {
        dsu.union(e.a, e.b);
    }
    (0..n).map(|v| dsu.find(v)).collect()
}

/// Delaunay-based spatial partitioning followed by feature-similarity
/// splitting; see the module docs for the edge-removal rules.
pub fn cluster_dbsc(cs: &[Checklist], origin: Option<Origin>) -> Result<SiteClustering> {
    let origin = resolve_origin(cs, origin)?;
    let (locs, loc_of) = unique_locations(cs);
    let n = locs.len();
    let points: Vec<_> = locs
        .iter()
        .enumerate()
        .map(|(i, l)| project_local(l.latitude, l.longitude, origin, i))
        .collect();
    let graph = delaunay(&points);

    // Global long-edge removal over the whole triangulation.
    let after_global = cut_long_edges(&graph.edges, n);

    // Second pass: the same rule per connected subgraph.
    let part = components(&after_global, n);
    let mut by_part: BTreeMap<usize, Vec<TriEdge>> = BTreeMap::new();
    for e in &after_global {
        by_part.entry(part[e.a]).or_default().push(*e);
    }
    let mut after_local: Vec<TriEdge> = Vec::new();
    for edges in by_part.values() {
        after_local.extend(cut_long_edges(edges, n));
    }

    // Feature-similarity splitting inside each spatial partition.
    let mut feats: Vec<Vec<f64>> = locs.iter().map(|l| l.occupancy_features.to_vec()).collect();
    zscore_columns(&mut feats);
    let fdist = |e: &TriEdge| -> f64 {
        feats[e.a]
            .iter()
            .zip(&feats[e.b])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let spatial = components(&after_local, n);
    let mut by_spatial: BTreeMap<usize, Vec<TriEdge>> = BTreeMap::new();
    for e in &after_local {
        by_spatial.entry(spatial[e.a]).or_default().push(*e);
    }
    let mut kept: Vec<TriEdge> = Vec::new();
    for edges in by_spatial.values() {
        let (fmean, fstd) = mean_std(edges.iter().map(fdist));
        kept.extend(edges.iter().filter(|e| fdist(e) <= fmean + fstd));
    }

    let site_of_loc = components(&kept, n);
    let pairs = cs
        .iter()
        .zip(&loc_of)
        .map(|(c, &loc)| (c.id.clone(), site_of_loc[loc]))
        .collect();
    Ok(SiteClustering {
        method: Method::Dbsc,
        assignments: assign_dense(pairs),
        discarded: Vec::new(),
        params: BTreeMap::from([
            ("origin_lat".into(), crate::ingest::format_f64(origin.lat)),
            ("origin_lon".into(), crate::ingest::format_f64(origin.lon)),
        ]),
    })
}
