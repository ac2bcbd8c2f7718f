use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column `{0}` has zero variance")]
    ConstantColumn(String),
    #[error("degenerate sample: all points are identical")]
    DegenerateSample,
    #[error("kernel width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sample too small: need at least {needed} rows, got {got}")]
    SampleTooSmall { needed: usize, got: usize },
    #[error("ridge system is ill-conditioned")]
    IllConditioned,
    #[error("insufficient windows: need {needed}, got {got}")]
    InsufficientWindows { needed: usize, got: usize },
    #[error("cluster of {0} variables exceeds the enumeration limit")]
    ClusterTooLarge(usize),
    #[error("gram matrix has no variation after centering")]
    AllZeroGram,
    #[error("linear solve failed")]
    SingularSolve,
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
