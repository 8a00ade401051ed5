use std::path::PathBuf;

/// Errors raised by the geometry, data, model and evaluation layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("composition entry {index} is not strictly positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("composition needs at least 2 entries, got {0}")]
    TooShort(usize),

    #[error("number of components K must be at least 2, got {0}")]
    KTooSmall(usize),

    #[error("basis parameters are rank deficient (smallest |R_jj| = {min_diag:e})")]
    RankDeficient { min_diag: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid subset: {0}")]
    BadSubset(String),

    #[error("invalid component indices: {0}")]
    BadIndices(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("label file references node '{0}' that is not in the graph")]
    UnknownNode(String),

    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("graph too dense: {available} non-edges available, {needed} needed")]
    TooDense { available: usize, needed: usize },

    #[error("log-odds are undefined for a self pair ({0}, {0})")]
    SelfPair(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("both classes must be present to compute AUC-ROC")]
    OneClassOnly,

    #[error("no positive labels")]
    NoPositives,

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("invalid keep size {keep} for K = {k}")]
    BadKeepSize { keep: usize, k: usize },

    #[error("no labeled nodes")]
    NoLabels,

    #[error("density target unreachable: {0}")]
    TargetUnreachable(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::TargetUnreachable(_) | Error::DegenerateData(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
