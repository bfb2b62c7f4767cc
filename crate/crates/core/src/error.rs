use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Variants map onto the validation,
/// solver and I/O classes the command line front-end turns into exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("gap violation: centers {a} and {b} are {gap} apart, below the minimum {min_gap}")]
    GapViolation {
        a: f64,
        b: f64,
        gap: f64,
        min_gap: f64,
    },
    #[error("boundary violation: center {center} lies within {clearance} of the domain ends (0, {length})")]
    BoundaryViolation {
        center: f64,
        clearance: f64,
        length: f64,
    },
    #[error("thickness violation: epsilon {epsilon} must exceed r (1 + delta) = {bound}")]
    ThicknessViolation { epsilon: f64, bound: f64 },
    #[error("centers must be sorted strictly increasing")]
    UnsortedCenters,
    #[error("window {window} is smaller than the cell size {epsilon}")]
    WindowTooSmall { window: f64, epsilon: f64 },
    #[error("bad process parameters: {0}")]
    BadModelParams(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("unsupported scaling: {0}")]
    UnsupportedScaling(String),
    #[error("unresolved layer: {cells} cells across thickness {thickness}, at least 4 required")]
    UnresolvedLayer { cells: usize, thickness: f64 },
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("critical regime requires the periodic layer construction")]
    NotPeriodic,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("degenerate field: {0}")]
    DegenerateField(String),
    #[error("at least 3 epsilon values required, got {0}")]
    InsufficientEpsilons(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors raised by input validation rather than by a solver.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SolveFailure(_) | Error::NonFiniteState { .. } | Error::Io(_)
        )
    }

    /// Short machine-readable tag of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::GapViolation { .. } => "GapViolation",
            Error::BoundaryViolation { .. } => "BoundaryViolation",
            Error::ThicknessViolation { .. } => "ThicknessViolation",
            Error::UnsortedCenters => "UnsortedCenters",
            Error::WindowTooSmall { .. } => "WindowTooSmall",
            Error::BadModelParams(_) => "BadModelParams",
            Error::RegimeMismatch(_) => "RegimeMismatch",
            Error::UnsupportedScaling(_) => "UnsupportedScaling",
            Error::UnresolvedLayer { .. } => "UnresolvedLayer",
            Error::SolveFailure(_) => "SolveFailure",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::NotPeriodic => "NotPeriodic",
            Error::GridMismatch(_) => "GridMismatch",
            Error::DegenerateField(_) => "DegenerateField",
            Error::InsufficientEpsilons(_) => "InsufficientEpsilons",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Io(_) => "Io",
        }
    }
}
