use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge cannot be refined: {0}")]
    NotRefinable(String),

    #[error("trimming removed every triangle")]
    EmptyResult,

    #[error("mesh has no interior nodes")]
    ZeroInterior,

    #[error("point lies outside triangle {0}")]
    OutsideTriangle(usize),

    #[error("point lies outside the mesh domain")]
    OutsideDomain,

    #[error("triangle {tri} is degenerate (area {area:e})")]
    DegenerateTriangle { tri: usize, area: f64 },

    #[error("no data point falls inside the mesh domain")]
    NoDataInDomain,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("iterative solver stopped after {iterations} iterations at relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("requested {requested} points but only {available} are available")]
    InsufficientData { requested: usize, available: usize },

    #[error("sample points are collinear or coincident")]
    DegenerateGeometry,

    #[error("new boundary node has no boundary neighbours")]
    NoNeighbors,

    #[error("indicator field is empty")]
    EmptyField,

    #[error("no data point lies within snapping distance of any grid node")]
    NoControlPoints,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data bounding box has zero extent")]
    DegenerateExtent,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::Iteration { .. } => e,
            e => Error::Iteration {
                iteration,
                source: Box::new(e),
            },
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularSystem(_)
            | Error::NonConvergence { .. }
            | Error::DegenerateTriangle { .. }
            | Error::DegenerateGeometry => true,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
