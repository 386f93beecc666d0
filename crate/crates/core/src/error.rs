use thiserror::Error;

pub type Result<T> = std::result::Result<T, CrystalError>;

#[derive(Debug, Error)]
pub enum CrystalError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symbol is not non-negative at theta = {theta:?}: eigenvalue {eigenvalue:e}")]
    NegativeSymbol { theta: Vec<f64>, eigenvalue: f64 },

    #[error("acoustic point at theta = {theta:?}: band frequency {omega:e} below threshold")]
    AcousticPoint { theta: Vec<f64>, omega: f64 },

    #[error("grid mismatch: box needs {expected:?} points per axis (offset = false), table has {found:?} (offset = {offset})")]
    GridMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
        offset: bool,
    },

    #[error("state does not vanish on the boundary layer z1 = 0 (max |value| = {max:e})")]
    BoundaryViolation { max: f64 },

    #[error("test function support violation: {0}")]
    SupportViolation(String),

    #[error("guard region too small: half-space extent {extent} needs to exceed {required:.1} for t = {time}")]
    GuardViolation {
        extent: usize,
        required: f64,
        time: f64,
    },

    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    StabilityViolation { dt: f64, limit: f64 },

    #[error("box extent {extent} along axis {axis} is smaller than twice the correlation range {range}")]
    Aliasing {
        axis: usize,
        extent: usize,
        range: usize,
    },

    #[error("problem size {size} exceeds the dense limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("at least {required} samples are needed, have {count}")]
    InsufficientSamples { count: u64, required: u64 },

    #[error("point {point:?} lies outside the tabulated region")]
    OutOfBox { point: Vec<i64> },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CrystalError::InvalidParameter(msg.into()))
}
