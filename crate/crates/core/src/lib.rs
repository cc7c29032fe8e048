//! Desk-scale workbench comparing single-layer QKV attention against
//! adjacency (edge-table) attention on masked value prediction over
//! synthetic permutation/value datasets, plus an analytic FLOPs/memory
//! cost model for both architectures.

pub mod config;
pub mod costmodel;
pub mod layers;
pub mod manifest;
pub mod numerics;
pub mod sweep;
pub mod synthgen;
pub mod training;

use thiserror::Error;

/// Error taxonomy shared by the library and the CLI.
///
/// Exit-code mapping: Config/Usage -> 1, Data/Io -> 2, Numeric -> 3,
/// PartialSweep -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("sweep completed with failed cells: {0}")]
    PartialSweep(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            Error::Data(_) | Error::Io(_) => 2,
            Error::Numeric(_) => 3,
            Error::PartialSweep(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tool version recorded in manifests and report headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
