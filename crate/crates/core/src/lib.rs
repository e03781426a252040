//! Site clustering and occupancy modeling for species checklist data.
//!
//! The crate covers the full pipeline: ingesting checklist CSVs, grouping
//! checklists into sites by any of ten clustering methods, fitting a
//! detection-corrected occupancy model by maximum likelihood, tuning the
//! spatially constrained clustering by Bayesian optimization, and scoring
//! site definitions against held-out data with spatially subsampled
//! ranking metrics.

pub mod cluster;
pub mod clustgeo;
pub mod dbsc;
pub mod delaunay;
pub mod error;
pub mod eval;
pub mod geo;
pub mod hex;
pub mod ingest;
pub mod linkage;
pub mod methods;
pub mod metrics;
pub mod occupancy;
pub mod optim;
pub mod seed;
pub mod simulate;
pub mod tune;

pub use error::{Error, Result};
