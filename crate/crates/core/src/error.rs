use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator of virtual size {requested} exceeds the size cap {cap}")]
    SizeCap { requested: u128, cap: u128 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index ({row}, {col}) out of range for a {rows}x{cols} operator")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("least-squares solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("cannot parse sequence expression `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("level {level} is below the presentation degree; the minimum level is {required}")]
    BelowPresentationDegree { level: usize, required: usize },

    #[error("sequence `{0}` is not finitely generated for this group family; pass an explicit degree override")]
    DegreesUnavailable(String),

    #[error("extension inconsistency: residual {residual:.3e} exceeds {tolerance:.3e} ({context})")]
    ExtensionInconsistency {
        residual: f64,
        tolerance: f64,
        context: String,
    },

    #[error("invalid network specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_layer(self, index: usize) -> Error {
        Error::Layer {
            index,
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Configuration problems map to exit code 2, everything numerical to 3.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidSpec(_)
            | Error::Parse { .. }
            | Error::Json(_)
            | Error::BelowPresentationDegree { .. }
            | Error::DegreesUnavailable(_) => true,
            Error::Layer { source, .. } | Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
