use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate metric at {point:?}: |det g| = {det:e}")]
    DegenerateMetric { point: [f64; 4], det: f64 },
    #[error("point {point:?} is outside the domain of chart `{chart}`")]
    OutsideChart { chart: String, point: [f64; 4] },
    #[error("frame construction failed: {0}")]
    Frame(String),
    #[error("vector is not unit timelike: g(t,t) = {0}")]
    NotUnitTimelike(f64),
    #[error("algebra dimension mismatch: expected {expected}, got {got}")]
    BasisMismatch { expected: usize, got: usize },
    #[error("stencil at {index:?} leaves the sampled grid; enable one-sided stencils")]
    BoundaryStencil { index: Vec<usize> },
    #[error("geodesic integration failed on ray {ray} at s = {s}: {reason}")]
    Integration { ray: usize, s: f64, reason: String },
    #[error("caustic on ray {ray} at s = {s}")]
    Caustic { ray: usize, s: f64 },
    #[error("ray {ray} truncated at s = {s} before reaching the initial slice")]
    MissingInitialData { ray: usize, s: f64 },
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("angular resolution insufficient: {0}")]
    Resolution(String),
    #[error("CFL violated: dt = {dt} exceeds {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("unknown {kind} `{name}`; available: {available}")]
    UnknownCatalogEntry { kind: &'static str, name: String, available: String },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unsupported format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}
