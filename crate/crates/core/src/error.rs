use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("trajectory left the bounding box at t = {time}")]
    Escape { time: f64 },

    #[error("tangent frame degenerated at t = {time} (relative singular value {ratio:e})")]
    Degenerate { time: f64, ratio: f64 },

    #[error("point lies on an equilibrium; truncated distance is zero")]
    OnEquilibrium,

    #[error("orbit within {distance:e} of an equilibrium at t = {time}")]
    NearSingularity { time: f64, distance: f64 },

    #[error("vector field vanishes at the base point")]
    ZeroField,

    #[error("splitting is not dominated: angle gap {gap:e}")]
    NoDomination { gap: f64 },

    #[error("flow direction is not inside the centre-unstable estimate (residual {residual:e})")]
    InconsistentSplitting { residual: f64 },

    #[error("sequence term a[{index}] = {value} exceeds the bound A = {bound}")]
    TermAboveBound { index: usize, value: f64, bound: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown system '{name}'; registry has: {known}")]
    UnknownSystem { name: String, known: String },

    #[error("system definition: {0}")]
    Definition(String),

    #[error("grid mismatch between measures")]
    GridMismatch,

    #[error("no hyperbolic times for any particle")]
    EmptyMeasure,

    #[error("at step {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at(self, index: usize) -> Error {
        Error::AtIndex {
            index,
            source: Box::new(self),
        }
    }

    /// Strips any `AtIndex` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIndex { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
