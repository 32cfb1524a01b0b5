//! Audit orchestration and report rendering.

mod audit;
mod config;
mod markdown;
mod output;
mod svg;

pub use audit::{
    align_attributions, build_backends, explain_instance, load_configured_dataset, run_audit,
    AuditReport, BuiltModel, Conventions, DatasetSummary, DrillEntry, InstanceDrilldown,
    ModelPredictions, ModelSummary, RunOptions, TopWord,
};
pub use config::{AuditConfig, BackendSpec, DatasetSpec, ManifestSpec, ModelSpec};
pub use markdown::{render_alignment_table, render_markdown};
pub use output::{read_attributions, write_attributions, write_outputs, OutputFiles};
pub use svg::{
    plot_x, plot_y, render_ksweep_svg, render_reliability_svg, CANVAS_HEIGHT, CANVAS_WIDTH,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::alignment::AlignmentError;
use crate::attribution::ExplainError;
use crate::backend::{BackendError, TrainError};
use crate::calibration::CalibrationError;
use crate::dataset::DatasetError;
use crate::text::TokenizeError;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("dataset has no instances to audit")]
    EmptyDataset,
    #[error("no instance with id {0:?}")]
    UnknownInstance(String),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error("model {model:?}{}: {source}", instance.as_ref().map(|i| format!(", instance {i:?}")).unwrap_or_default())]
    Backend {
        model: String,
        instance: Option<String>,
        #[source]
        source: BackendError,
    },
    #[error("model {model:?}: training failed: {source}")]
    Train {
        model: String,
        #[source]
        source: TrainError,
    },
    #[error("model {model:?}, instance {instance:?}: {source}")]
    Explain {
        model: String,
        instance: String,
        #[source]
        source: ExplainError,
    },
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl AuditError {
    /// Process exit code: 2 config, 3 backend, 4 dataset, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AuditError::Config(_) => 2,
            AuditError::Backend { .. } => 3,
            AuditError::Explain { source, .. } => match source {
                ExplainError::Backend(_) => 3,
                ExplainError::InvalidConfig(_) | ExplainError::TooFewSamples { .. } => 2,
                _ => 1,
            },
            AuditError::Dataset(_)
            | AuditError::EmptyDataset
            | AuditError::UnknownInstance(_)
            | AuditError::Tokenize(_) => 4,
            AuditError::Train { source, .. } => match source {
                TrainError::DegenerateDataset(_) => 4,
                TrainError::InvalidConfig(_) => 2,
            },
            AuditError::Alignment(_) => 4,
            AuditError::Calibration(_) | AuditError::Io { .. } => 1,
        }
    }
}
