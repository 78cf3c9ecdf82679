//! Black-box transfer evaluation and per-joint behaviour statistics of
//! adversarial motions.

mod correlation;
mod perturbation;
mod reports;
pub mod transfer;

pub use correlation::{
    joint_displacements, joint_motion_profile, pearson, pearson_correlation_maps, CorrelationReport, SampleProfile,
};
pub use perturbation::{max_relative_bone_change, weighted_acceleration_deviation};
pub use reports::{read_matrix_csv, write_reports, write_transfer_report, MatrixCsv, REPORT_FORMAT_VERSION};
pub use transfer::{evaluate_transfer, transfer_attack, transfer_success, TargetTransfer, TransferReport, TransferSample};

use thiserror::Error;

use crate::attack::AttackError;
use crate::models::ModelError;
use crate::motion::MotionError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("analysis input: {0}")]
    Input(String),
    #[error("{path}: {message}")]
    Report { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Motion(#[from] MotionError),
}
