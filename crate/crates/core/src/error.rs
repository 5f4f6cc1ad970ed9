use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate mesh: triangle {triangle} has signed area {area:e}")]
    DegenerateMesh { triangle: usize, area: f64 },

    #[error("connectivity mismatch: {0}")]
    ConnectivityMismatch(String),

    #[error("fields live on different meshes")]
    MeshMismatch,

    #[error("fields live in different function spaces")]
    SpaceMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("no coefficient given for cell marker {0}")]
    MissingCoefficient(i32),

    #[error("unknown facet marker {0}")]
    UnknownMarker(i32),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("line search failed after {halvings} halvings")]
    LineSearchFailure { halvings: usize },

    #[error("response kinds do not match: {0}")]
    KindMismatch(String),

    #[error("broyden update skipped: |a(X, nu)| = {denominator:e} is below the curvature guard")]
    SkippedUpdate { denominator: f64 },

    #[error("zero denominator in stationarity measure")]
    ZeroDenominator,

    #[error("fine-model backend timed out after {seconds} s waiting for {path}")]
    BackendTimeout { seconds: f64, path: PathBuf },

    #[error("protocol error: {0}")]
    ProtocolError(String),

    #[error("{path}:{line}: {message}")]
    ParseError {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported element type {element_type} at line {line}")]
    UnsupportedElement { element_type: i64, line: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
