//! Learning task references from demonstrations: Gaussian mixtures fitted by
//! EM over `[t, x, ẋ, f]`, queried by Gaussian mixture regression on `t`.

mod dataset;
mod em;
mod gmr;
mod mixture;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use dataset::{csv_header, Demo, DemoDataset, DemoSample};
pub use em::{fit_em, fit_em_rows, EmConfig, EmReport, FitResult, Restart};
pub use gmr::{
    generate_reference, gmr_condition, Conditional, Gmr, Reference, ReferenceFlags, ReferenceSample,
};
pub use mixture::{GaussianComponent, GaussianMixture};

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<GmmError>,
    },
    #[error("number of components must be at least 1 (got {0})")]
    InvalidK(usize),
    #[error("{rows} training rows, at least {needed} required")]
    TooFewRows { rows: usize, needed: usize },
    #[error("invalid EM configuration: {0}")]
    Config(String),
    #[error("invalid mixture: {0}")]
    InvalidModel(String),
    #[error("invalid regression input: {0}")]
    Input(String),
}

impl GmmError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GmmError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn with_path(self, path: &Path) -> Self {
        match self {
            e @ (GmmError::Io { .. } | GmmError::InFile { .. }) => e,
            e => GmmError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }
}
