use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),

    #[error("coincident points: link length {0:.3e} m is below 1e-9 m")]
    CoincidentPoints(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("empty codebook grid")]
    EmptyGrid,

    #[error("beam subset size {s} outside 1..={max}")]
    SubsetOutOfRange { s: usize, max: usize },

    #[error("sweep rejected: relay is in communication mode")]
    CommunicationMode,

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("cannot freeze {frozen} of {layers} layers")]
    AllLayersFrozen { frozen: usize, layers: usize },

    #[error("need at least 2 location groups, got {0}")]
    TooFewGroups(usize),

    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable kind, used in the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "invalid_geometry",
            Error::CoincidentPoints(_) => "coincident_points",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidScene(_) => "invalid_scene",
            Error::EmptyGrid => "empty_grid",
            Error::SubsetOutOfRange { .. } => "subset_out_of_range",
            Error::CommunicationMode => "communication_mode",
            Error::InvalidRange(_) => "invalid_range",
            Error::EmptyDataset => "empty_dataset",
            Error::Diverged { .. } => "diverged",
            Error::AllLayersFrozen { .. } => "all_layers_frozen",
            Error::TooFewGroups(_) => "too_few_groups",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
