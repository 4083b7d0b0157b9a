use thiserror::Error;

/// Errors raised by the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid source ring: {0}")]
    Ring(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-positive voltage trace {value:.3e} at boundary node {node} for angle index {angle}")]
    DataIntegrity { node: usize, angle: usize, value: f64 },

    #[error("line search failed at iteration {iteration}: J = {j:.6e}, directional derivative {slope:.3e}, last step {step:.3e}")]
    LineSearch {
        iteration: usize,
        j: f64,
        slope: f64,
        step: f64,
    },

    #[error("grid node ({x:.6}, {y:.6}) lies outside every mesh triangle")]
    PointLocation { x: f64, y: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
