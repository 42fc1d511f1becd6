use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid QP problem: {0}")]
    InvalidProblem(String),

    #[error("inverse kinematics did not converge after {iterations} iterations (error {error:.3e} m)")]
    IkFailure { iterations: usize, error: f64 },

    #[error("footstep planner stuck at ({x:.4}, {y:.4})")]
    PlannerStuck { x: f64, y: f64 },

    #[error("trajectory stitching failed: {0}")]
    Stitch(String),

    #[error("no perception data")]
    NoData,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
