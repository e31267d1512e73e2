use thiserror::Error;

/// Errors raised by mesh construction, assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh subdivision count must be at least 1, got {0}")]
    InvalidSubdivision(usize),

    #[error("triangle {triangle} is degenerate (signed area {area:e})")]
    DegenerateElement { triangle: usize, area: f64 },

    #[error("triangle index {index} out of range ({count} triangles)")]
    ElementOutOfRange { index: usize, count: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("no quadrature rule of degree {0} (supported: 1..=10)")]
    UnsupportedQuadrature(usize),

    #[error("matrix index ({row}, {col}) out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    InaccurateSolve { residual: f64, tolerance: f64 },

    #[error("artificial diffusivity must be finite and nonnegative, got {value} on element {element}")]
    InvalidDiffusivity { element: usize, value: f64 },

    #[error("coefficient {name} is not finite at ({x}, {y})")]
    NonFiniteCoefficient { name: &'static str, x: f64, y: f64 },

    #[error("missing boundary value: expected {expected} lift values, got {got}")]
    MissingBoundaryValue { expected: usize, got: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("problem has no manufactured solution")]
    MissingExactSolution,

    #[error("unknown benchmark case `{0}`")]
    UnknownCase(String),

    #[error("level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
