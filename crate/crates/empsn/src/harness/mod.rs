//! Task harness: datasets (charged N-body simulation, JSON-lines point
//! clouds), training and evaluation loops, and symmetry checking for
//! trained models.

pub mod data;
pub mod equivariance;
pub mod nbody;
pub mod train;

pub use data::{load_pointcloud, save_pointcloud, GeometricSample, Target};
pub use equivariance::{
    check_equivariance, transform_sample, EquivarianceReport, GeometricPredictor, ModelPredictor,
    Prediction,
};
pub use nbody::{simulate_dataset, NBodyConfig, NBodyDataset};
pub use train::{
    evaluate, nbody_profile, normalize_targets, qm9_profile, train, write_metrics_csv, EpochRow,
    Loss, Metric, Normalization, Schedule, TrainConfig, TrainReport,
};

use thiserror::Error;

use crate::complex::ComplexError;
use crate::geometry::GeometryError;
use crate::model::ModelError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}: {msg}")]
    Data {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
