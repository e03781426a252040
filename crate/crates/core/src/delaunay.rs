//! Delaunay triangulation of planar points.
//!
//! Incremental Bowyer-Watson with a ghost vertex standing in for the region
//! outside the convex hull, so hull growth needs no oversized super-triangle.
//! Orientation and in-circle tests use exact arithmetic (`robust`), which
//! keeps the cavity search consistent on collinear and cocircular inputs.
//!
//! Determinism: points are inserted in lexicographic (x, y) order, and a
//! point exactly on an existing circumcircle never evicts the triangle that
//! is already there, so cocircular quadruples keep the diagonal chosen by
//! the earlier insertion.

use std::collections::HashMap;

use robust::{incircle, orient2d, Coord};

use crate::geo::PlanarPoint;

const GHOST: usize = usize::MAX;

/// An undirected triangulation edge between vertex indices `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriEdge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Delaunay triangulation over deduplicated vertices.
#[derive(Debug, Clone)]
pub struct TriangulationGraph {
    pub vertices: Vec<PlanarPoint>,
    pub edges: Vec<TriEdge>,
    /// Triangles as CCW vertex-index triples; empty in degenerate cases.
    pub triangles: Vec<[usize; 3]>,
    /// Input index -> vertex index (duplicates map to the shared vertex).
    pub vertex_of_input: Vec<usize>,
}

impl TriangulationGraph {
    pub fn edges_incident(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            inc[edge.a].push(e);
            inc[edge.b].push(e);
        }
        inc
    }
}

fn coord(p: &PlanarPoint) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

/// Triangulate `points`, deduplicating identical coordinates first.
///
/// Fewer than three unique points, or an entirely collinear set, yields the
/// degenerate graph of all pairwise edges and no triangles.
pub fn delaunay(points: &[PlanarPoint]) -> TriangulationGraph {
    // Deduplicate on exact coordinates, first occurrence wins.
    let mut vertex_of_input = Vec::with_capacity(points.len());
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut vertices: Vec<PlanarPoint> = Vec::new();
    for p in points {
        let key = (p.x.to_bits(), p.y.to_bits());
        let v = *seen.entry(key).or_insert_with(|| {
            vertices.push(*p);
            vertices.len() - 1
        });
        vertex_of_input.push(v);
    }

    let n = vertices.len();
    let collinear = |a: usize, b: usize, c: usize| {
        orient2d(coord(&vertices[a]), coord(&vertices[b]), coord(&vertices[c])) == 0.0
    };
    let degenerate = n < 3
        || {
            // all collinear with the first two distinct vertices?
            (2..n).all(|c| collinear(0, 1, c))
        };
    if degenerate {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                edges.push(TriEdge {
                    a,
                    b,
                    length: vertices[a].distance(&vertices[b]),
                });
            }
        }
        return TriangulationGraph {
            vertices,
            edges,
            triangles: Vec::new(),
            vertex_of_input,
        };
    }

    let triangles = bowyer_watson(&vertices);
    let mut edge_set: Vec<(usize, usize)> = triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edge_set.sort_unstable();
    edge_set.dedup();
    let edges = edge_set
        .into_iter()
        .map(|(a, b)| TriEdge {
            a,
            b,
            length: vertices[a].distance(&vertices[b]),
        })
        .collect();

    TriangulationGraph {
        vertices,
        edges,
        triangles,
        vertex_of_input,
    }
}

struct Mesh<'a> {
    verts: &'a [PlanarPoint],
    /// Triangle vertex triples, CCW; ghost triangles carry `GHOST`.
    tris: Vec<[usize; 3]>,
    alive: Vec<bool>,
    /// Directed edge (a, b) -> triangle listing that edge in CCW order.
    adj: HashMap<(usize, usize), usize>,
}

impl<'a> Mesh<'a> {
    fn add(&mut self, t: [usize; 3]) {
        let id = self.tris.len();
        self.tris.push(t);
        self.alive.push(true);
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            self.adj.insert((a, b), id);
        }
    }

    fn remove(&mut self, id: usize) {
        let t = self.tris[id];
        self.alive[id] = false;
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            self.adj.remove(&(a, b));
        }
    }

    /// Does triangle `id`'s (possibly ghost) circumdisc strictly contain `p`?
    fn is_bad(&self, id: usize, p: usize) -> bool {
        let t = self.tris[id];
        match t.iter().position(|&v| v == GHOST) {
            None => {
                incircle(
                    coord(&self.verts[t[0]]),
                    coord(&self.verts[t[1]]),
                    coord(&self.verts[t[2]]),
                    coord(&self.verts[p]),
                ) > 0.0
            }
            Some(g) => {
                // Ghost (b, a, GHOST) stands for hull edge a->b (interior on
                // the left of a->b). Bad iff p is strictly outside across
                // that edge, or exactly on the open edge segment.
                let b = t[(g + 1) % 3];
                let a = t[(g + 2) % 3];
                let o = orient2d(
                    coord(&self.verts[a]),
                    coord(&self.verts[b]),
                    coord(&self.verts[p]),
                );
                if o < 0.0 {
                    true
                } else if o > 0.0 {
                    false
                } else {
                    strictly_between(&self.verts[a], &self.verts[b], &self.verts[p])
                }
            }
        }
    }
}

/// For three collinear points, is `p` strictly inside segment `ab`?
fn strictly_between(a: &PlanarPoint, b: &PlanarPoint, p: &PlanarPoint) -> bool {
    if a.x != b.x {
        (a.x < p.x && p.x < b.x) || (b.x < p.x && p.x < a.x)
    } else {
        (a.y < p.y && p.y < b.y) || (b.y < p.y && p.y < a.y)
    }
}

fn bowyer_watson(vertices: &[PlanarPoint]) -> Vec<[usize; 3]> {
    let n = vertices.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (vertices[i].x, vertices[i].y)
            .partial_cmp(&(vertices[j].x, vertices[j].y))
            .unwrap()
    });

    // Seed with the first non-collinear triple in insertion order; the
    // caller has already ruled out fully collinear input.
    let seed_c_pos = (2..n)
        .position(|k| {
            orient2d(
                coord(&vertices[order[0]]),
                coord(&vertices[order[1]]),
                coord(&vertices[order[k]]),
            ) != 0.0
        })
        .map(|p| p + 2)
        .expect("non-collinear triple exists");
    order.swap(2, seed_c_pos);

    let (i0, i1, mut i2) = (order[0], order[1], order[2]);
    let mut i1 = i1;
    if orient2d(coord(&vertices[i0]), coord(&vertices[i1]), coord(&vertices[i2])) < 0.0 {
        std::mem::swap(&mut i1, &mut i2);
    }

    let mut mesh = Mesh {
        verts: vertices,
        tris: Vec::with_capacity(4 * n),
        alive: Vec::with_capacity(4 * n),
        adj: HashMap::with_capacity(8 * n),
    };
    mesh.add([i0, i1, i2]);
    mesh.add([i1, i0, GHOST]);
    mesh.add([i2, i1, GHOST]);
    mesh.add([i0, i2, GHOST]);

    for &p in order.iter().skip(3) {
        let bad: Vec<usize> = (0..mesh.tris.len())
            .filter(|&t| mesh.alive[t] && mesh.is_bad(t, p))
            .collect();
        debug_assert!(!bad.is_empty(), "every insertion point falls in some circumdisc");
        let in_bad: std::collections::HashSet<usize> = bad.iter().copied().collect();

        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for &t in &bad {
            let tri = mesh.tris[t];
            for (u, v) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                match mesh.adj.get(&(v, u)) {
                    Some(nb) if in_bad.contains(nb) => {}
                    _ => boundary.push((u, v)),
                }
            }
        }
        for &t in &bad {
            mesh.remove(t);
        }
        for (u, v) in boundary {
            mesh.add([u, v, p]);
        }
    }

    (0..mesh.tris.len())
        .filter(|&t| mesh.alive[t] && !mesh.tris[t].contains(&GHOST))
        .map(|t| mesh.tris[t])
        .collect()
}
