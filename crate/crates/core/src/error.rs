use thiserror::Error;

/// Errors raised while building or querying a world.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("world spec infeasible: {0}")]
    SpecInfeasible(String),
    #[error("position ({x:.3}, {y:.3}) is outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no instance of category `{0}` in the floor plan")]
    NoTarget(String),
    #[error("no free cell is at least {min_distance} m from a `{category}` instance")]
    NoValidStart { category: String, min_distance: f64 },
    #[error("pose ({x:.3}, {y:.3}) lies in an occupied cell")]
    PoseOccupied { x: f64, y: f64 },
    #[error("no free cell within {radius} m of ({x:.3}, {y:.3})")]
    NoFreeCell { x: f64, y: f64, radius: f64 },
}

/// Errors from demonstration collection and regressor training.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("every demonstration pair was filtered out")]
    EmptyDataset,
    #[error("dataset has {0} pairs, at least {1} are required")]
    Degenerate(usize, usize),
    #[error("invalid hyper-parameters: {0}")]
    BadHyper(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Errors from the remote view scorer.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("scorer misconfigured: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("episode {index} has non-positive ground-truth length {length}")]
    BadEpisode { index: usize, length: f64 },
}

/// Crate-level error used at I/O boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("unsupported {kind} document version {found} (expected {expected})")]
    Version { kind: &'static str, found: u32, expected: u32 },
    #[error("malformed document: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("image encoding failed: {0}")]
    Image(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
