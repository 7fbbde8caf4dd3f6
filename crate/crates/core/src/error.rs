use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("connection radius {radius} is smaller than the grid spacing {spacing}; the grid has no edges")]
    EdgelessGraph { radius: f64, spacing: f64 },

    #[error("torus side {side} is too small for neighborhood radius {reach} (need side >= {need})")]
    TorusTooSmall { side: usize, reach: usize, need: usize },

    #[error("every node is isolated")]
    EmptyGraph,

    #[error("graph has no parent grid to compare against")]
    MissingParent,

    #[error("mask extraction needs a toroidal grid; the bounded grid is not circulant")]
    BoundaryNotCirculant,

    #[error("expected a grid graph, got a perturbed graph")]
    NotAGrid,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("gradient tape does not match: {0}")]
    TapeMismatch(String),

    #[error("graph shift operator is not symmetric (max asymmetry {0:e})")]
    AsymmetricGso(f64),

    #[error("frequency domain must lie in (0, inf): got [{lo}, {hi}]")]
    Domain { lo: f64, hi: f64 },

    #[error("negative transmit power {power} at node {node}")]
    InvalidPower { node: usize, power: f64 },

    #[error("power budget bisection did not converge after {0} halvings")]
    Bisection(usize),

    #[error("non-finite policy gradient")]
    NonFiniteGradient,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset not found at {0}")]
    DatasetNotFound(PathBuf),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
