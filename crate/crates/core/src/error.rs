use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
///
/// Each variant carries a stable machine-readable code (see [`Error::code`])
/// which the command-line front end prints alongside the human message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("cut ordering: {0}")]
    Ordering(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("point {index} at {point:?} lies outside the domain")]
    OutOfDomain { index: usize, point: Vec<f64> },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("port: {0}")]
    Port(String),
    #[error("covariance factorization failed: {0}")]
    Factorization(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sample {index} has a zero-norm reference vector")]
    ZeroNorm { index: usize },
    #[error("true value at index {index} is zero")]
    ZeroTrueValue { index: usize },
    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("subdomains do not overlap: {0}")]
    NotOverlapping(String),
    #[error("subdomains overlap: {0}")]
    Overlap(String),
    #[error("normal derivative unavailable: {0}")]
    DerivativeUnavailable(String),
    #[error("subdomain `{label}`: {source}")]
    Solver {
        label: String,
        #[source]
        source: Box<Error>,
    },
    #[error("interface iteration diverged at iteration {iteration}: {detail}")]
    IterationDivergence { iteration: usize, detail: String },
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("value {value} outside transform domain: {detail}")]
    Domain { value: f64, detail: String },
    #[error("zero flux through port (|flux| = {0:e})")]
    ZeroFlux(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// Stable identifier used in machine-parsable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidBox(_) => "InvalidBox",
            Error::Ordering(_) => "OrderingError",
            Error::Range(_) => "RangeError",
            Error::NonPositive { .. } => "NonPositiveError",
            Error::Geometry(_) => "GeometryError",
            Error::OutOfDomain { .. } => "OutOfDomainError",
            Error::SingularSystem(_) => "SingularSystemError",
            Error::Convergence { .. } => "ConvergenceError",
            Error::GridMismatch(_) => "GridMismatchError",
            Error::Port(_) => "PortError",
            Error::Factorization(_) => "FactorizationError",
            Error::Shape(_) => "ShapeError",
            Error::ZeroNorm { .. } => "ZeroNormError",
            Error::ZeroTrueValue { .. } => "ZeroTrueValueError",
            Error::Divergence { .. } => "DivergenceError",
            Error::Format { .. } => "FormatError",
            Error::Version { .. } => "VersionError",
            Error::NotOverlapping(_) => "NotOverlappingError",
            Error::Overlap(_) => "OverlapError",
            Error::DerivativeUnavailable(_) => "DerivativeUnavailableError",
            Error::Solver { .. } => "SolverError",
            Error::IterationDivergence { .. } => "DivergenceError",
            Error::Alignment(_) => "AlignmentError",
            Error::Domain { .. } => "DomainError",
            Error::ZeroFlux(_) => "ZeroFluxError",
            Error::Precondition(_) => "PreconditionError",
            Error::Io(_) => "IoError",
            Error::Serde(_) => "SerializationError",
        }
    }

    pub(crate) fn in_subdomain(self, label: &str) -> Error {
        Error::Solver {
            label: label.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
