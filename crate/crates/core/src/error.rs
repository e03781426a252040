use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the occsite library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing required column '{0}'")]
    MissingColumn(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dataset split invalid: {0}")]
    Split(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("species code '{0}' absent from checklist detections")]
    UnknownSpecies(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("silhouette undefined: clustering has a single cluster")]
    SingleCluster,

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("gaussian process kernel ill-conditioned (jitter escalated to {max_jitter:e})")]
    IllConditioned { max_jitter: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serialize(String),
}
