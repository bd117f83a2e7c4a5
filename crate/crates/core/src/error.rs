use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x:.3}, {y:.3}) lies outside the spatial domain {nx}x{ny}")]
    Domain { x: f64, y: f64, nx: usize, ny: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Selling reduction did not terminate after {iterations} iterations (ill-conditioned matrix)")]
    IllConditioned { iterations: usize },

    #[error("stencil at voxel {voxel}: {reason}")]
    Stencil { voxel: usize, reason: String },

    #[error("no sources given for fast marching")]
    EmptySources,

    #[error("target is unreachable (infinite distance)")]
    Unreachable,

    #[error("backtracking failed at ({x:.3}, {y:.3}, {theta:.3}): {reason}")]
    Backtrack {
        x: f64,
        y: f64,
        theta: f64,
        reason: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("malformed field file: {0}")]
    FieldFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
