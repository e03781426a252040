//! Hexagonal binning on the local projection.
//!
//! Pointy-top lattice; adjacent cell centers sit exactly `spacing_m`
//! apart, and a point belongs to its nearest center (axial rounding).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Origin, PlanarPoint};

pub const DEFAULT_SPACING_M: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexGrid {
    /// Center-to-center distance between adjacent cells, meters.
    pub spacing_m: f64,
    /// Projection anchor the planar coordinates are relative to.
    pub origin: Origin,
}

/// Axial cell coordinates.
pub type HexCell = (i64, i64);

impl HexGrid {
    pub fn new(spacing_m: f64, origin: Origin) -> Result<Self> {
        if !(spacing_m > 0.0) {
            return Err(Error::Param(format!(
                "hex spacing must be positive, got {spacing_m}"
            )));
        }
        Ok(Self { spacing_m, origin })
    }

    /// Center-to-corner radius.
    fn size(&self) -> f64 {
        self.spacing_m / 3.0f64.sqrt()
    }

    pub fn cell_of(&self, p: &PlanarPoint) -> HexCell {
        let r = self.size();
        let q = (3.0f64.sqrt() / 3.0 * p.x - p.y / 3.0) / r;
        let s = 2.0 / 3.0 * p.y / r;
        cube_round(q, s)
    }

    /// Planar coordinates of a cell's center.
    pub fn center_of(&self, cell: HexCell) -> (f64, f64) {
        let r = self.size();
        let (q, s) = (cell.0 as f64, cell.1 as f64);
        (r * 3.0f64.sqrt() * (q + s / 2.0), r * 1.5 * s)
    }
}

/// Round fractional axial coordinates to the containing cell.
fn cube_round(q: f64, r: f64) -> HexCell {
    let s = -q - r;
    let mut rq = q.round();
    let mut rr = r.round();
    let rs = s.round();
    let dq = (rq - q).abs();
    let dr = (rr - r).abs();
    let ds = (rs - s).abs();
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    (rq as i64, rr as i64)
}

/// Cell for each point, aligned with the input order.
pub fn hex_assign(points: &[PlanarPoint], grid: &HexGrid) -> Vec<HexCell> {
    points.iter().map(|p| grid.cell_of(p)).collect()
}
