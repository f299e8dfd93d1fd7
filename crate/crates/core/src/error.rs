use thiserror::Error;

/// Errors raised by the solver, its diagnostics and the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time-step bound violated: dt = {dt} must satisfy dt < max(1/2, kappa) = {bound}")]
    TimeStepBound { dt: f64, bound: f64 },

    #[error("invalid grid parameter `{name}`: {reason}")]
    InvalidGrid { name: &'static str, reason: String },

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("grids not nested: {0}")]
    GridsNotNested(String),

    #[error("invalid field data: {0}")]
    InvalidField(String),

    #[error("invalid initial condition at node (i = {i}, j = {j}): f0({x}, {v}) = {value}")]
    InvalidInitialCondition {
        i: usize,
        j: i64,
        x: f64,
        v: f64,
        value: f64,
    },

    #[error("degenerate temperature: T = {temp} with rho = {rho}")]
    DegenerateTemperature { rho: f64, temp: f64 },

    #[error("probe requires non-vacuum fields (cell {cell} is degenerate)")]
    VacuumProbe { cell: usize },

    #[error("blow-up detected at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },

    #[error("scaling study needs at least 3 admissible levels, got {got}")]
    TooFewLevels { got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed {what}: {reason}")]
    Parse { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical run itself (as opposed to bad input or I/O).
    pub fn is_numerical_abort(&self) -> bool {
        matches!(self, Error::BlowUp { .. })
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
