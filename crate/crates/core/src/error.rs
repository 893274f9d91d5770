use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("atlas overflow: {faces} faces do not fit a {resolution}x{resolution} atlas with gutters")]
    AtlasOverflow { faces: usize, resolution: u32 },

    #[error("invalid refinement: new fov {new_fov} must be narrower than old fov {old_fov}")]
    InvalidRefinement { old_fov: f64, new_fov: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("guidance error: {0}")]
    Guidance(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
