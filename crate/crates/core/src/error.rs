use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("agents {a} and {b} are coincident (distance {distance:e} m below {epsilon:e} m)")]
    CoincidentAgents {
        a: String,
        b: String,
        distance: f64,
        epsilon: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dog {dog} is inside the obstacle safety radius (distance {distance:.4} m < {radius:.4} m)")]
    DogInsideObstacle { dog: usize, distance: f64, radius: f64 },
    #[error("lidar pose ({x:.3}, {y:.3}) lies inside an obstacle")]
    PoseInsideObstacle { x: f64, y: f64 },
    #[error("no path: {0}")]
    NoPath(String),
    #[error("trajectory window too short: {0}")]
    WindowTooShort(String),
    #[error("trajectory fit is singular: {0}")]
    FitSingular(String),
    #[error("no duration satisfies the kinematic bounds (v_max {v_max}, a_max {a_max})")]
    BoundsUnattainable { v_max: f64, a_max: f64 },
    #[error("QP solver failed: {0}")]
    SolverFailure(String),
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CoincidentAgents { .. } => "coincident_agents",
            Error::Precondition(_) => "precondition",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::DogInsideObstacle { .. } => "dog_inside_obstacle",
            Error::PoseInsideObstacle { .. } => "pose_inside_obstacle",
            Error::NoPath(_) => "no_path",
            Error::WindowTooShort(_) => "window_too_short",
            Error::FitSingular(_) => "fit_singular",
            Error::BoundsUnattainable { .. } => "bounds_unattainable",
            Error::SolverFailure(_) => "solver_failure",
            Error::Validation { .. } => "validation",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
