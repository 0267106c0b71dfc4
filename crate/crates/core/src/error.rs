//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Error`]; the CLI maps
//! variants onto exit-code classes via [`Error::class`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration, bad flags, missing input paths.
    Config,
    /// Malformed, corrupt, or inconsistent data files.
    Data,
    /// Training aborted (non-finite loss).
    Training,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    #[error("scatter_add: index {index} out of range for output dim {out_dim}")]
    ScatterIndexOutOfRange { index: usize, out_dim: usize },

    #[error("gather: row index {index} out of range for {rows} rows")]
    GatherIndexOutOfRange { index: usize, rows: usize },

    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("tensor is not on a gradient tape")]
    NotOnTape,

    #[error("operands live on different gradient tapes")]
    TapeMismatch,

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("{what} must lie in {range}, got {value}")]
    OutOfRange {
        what: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("city list is empty")]
    EmptyCityList,

    #[error("bearing is undefined for coincident points ({lat}, {lon})")]
    CoincidentPoints { lat: f64, lon: f64 },

    #[error("point ({lat}, {lon}) lies outside the elevation grid")]
    PointOutsideGrid { lat: f64, lon: f64 },

    #[error("standardizer must be fit before it is applied")]
    StandardizerNotFit,

    #[error("graph has {topo_nodes} nodes but panel has {panel_nodes}")]
    NodeCountMismatch {
        topo_nodes: usize,
        panel_nodes: usize,
    },

    #[error("edge panel has {panel_edges} edges but graph has {topo_edges}")]
    EdgeCountMismatch {
        topo_edges: usize,
        panel_edges: usize,
    },

    #[error("unknown model kind `{0}`")]
    UnknownModelKind(String),

    #[error("model kind `{kind}` does not accept ablation flags")]
    AblationNotSupported { kind: String },

    #[error("split `{split}` is invalid: {reason}")]
    InvalidSplit { split: String, reason: String },

    #[error("split range of {len} steps is too short for horizon {horizon}")]
    RangeTooShort { len: usize, horizon: usize },

    #[error("training aborted: non-finite loss at epoch {epoch}, sample index {sample}")]
    NonFiniteLoss { epoch: usize, sample: usize },

    #[error("synthetic world has fewer than 2 connected cities; shrink the bounding box or raise the distance threshold")]
    WorldDisconnected,

    #[error("missing file: {path}")]
    MissingFile { path: String },

    #[error("checksum mismatch for {path}: manifest {expected}, file {actual}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("shape/header inconsistency in {path}: {reason}")]
    ShapeHeaderInconsistency { path: String, reason: String },

    #[error("manifest disagrees with {path}: {reason}")]
    ManifestMismatch { path: String, reason: String },

    #[error("checkpoint format version {found} is not supported (expected {expected}); re-save with this build")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint tensor `{name}` has shape {found:?} but the model spec requires {expected:?}")]
    CheckpointShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            NonFiniteLoss { .. } => ErrorClass::Training,
            ChecksumMismatch { .. }
            | ShapeHeaderInconsistency { .. }
            | ManifestMismatch { .. }
            | CheckpointVersion { .. }
            | CheckpointShapeMismatch { .. }
            | Csv { .. }
            | Json { .. } => ErrorClass::Data,
            _ => ErrorClass::Config,
        }
    }

    /// Maps an I/O failure, special-casing missing files.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }
}
