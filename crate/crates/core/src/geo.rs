//! Local planar projection of geographic coordinates.
//!
//! All clustering distances and grids operate on a local equirectangular
//! projection: accurate to well under 1% over the ~100 km extents this
//! library targets, and cheap enough to recompute per run.

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A point on the local projection plane, in meters east/north of the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
    /// Index of the source record (checklist or unique location).
    pub source_id: usize,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64, source_id: usize) -> Self {
        Self { x, y, source_id }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Projection origin in degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Origin {
    pub lat: f64,
    pub lon: f64,
}

impl Origin {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// South-west corner of the bounding box of `(lat, lon)` pairs.
    ///
    /// The default anchor for grids and projections when none is configured,
    /// so identical inputs always produce identical planar coordinates.
    pub fn bounding_box_min(coords: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut min_lat = f64::INFINITY;
        let mut min_lon = f64::INFINITY;
        let mut any = false;
        for (lat, lon) in coords {
            min_lat = min_lat.min(lat);
            min_lon = min_lon.min(lon);
            any = true;
        }
        any.then(|| Self::new(min_lat, min_lon))
    }
}

/// Equirectangular local projection: x = R·cos(lat0)·Δlon, y = R·Δlat (radians).
///
/// Exact at the origin; x/y are meters east/north.
pub fn project_local(lat: f64, lon: f64, origin: Origin, source_id: usize) -> PlanarPoint {
    let x = EARTH_RADIUS_M * origin.lat.to_radians().cos() * (lon - origin.lon).to_radians();
    let y = EARTH_RADIUS_M * (lat - origin.lat).to_radians();
    PlanarPoint::new(x, y, source_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn origin_projects_to_zero() {
        let o = Origin::new(43.0, -123.0);
        let p = project_local(43.0, -123.0, o, 0);
        assert_eq!((p.x, p.y), (0.0, 0.0));
    }

    #[test]
    fn one_degree_north() {
        let o = Origin::new(42.0, -123.0);
        let p = project_local(43.0, -123.0, o, 0);
        // R * pi/180
        assert_relative_eq!(p.y, 111_194.926, epsilon = 1e-2);
        assert_eq!(p.x, 0.0);
    }

    #[test]
    fn one_degree_east_at_45() {
        let o = Origin::new(45.0, 10.0);
        let p = project_local(45.0, 11.0, o, 0);
        // R * cos(45 deg) * pi/180
        assert_relative_eq!(p.x, 78_626.69, epsilon = 1e-1);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn bounding_box_min_takes_componentwise_minimum() {
        let o = Origin::bounding_box_min(vec![(43.0, -122.0), (42.5, -123.5), (44.0, -121.0)])
            .unwrap();
        assert_eq!((o.lat, o.lon), (42.5, -123.5));
        assert!(Origin::bounding_box_min(std::iter::empty()).is_none());
    }
}
