//! Trust-equivalence auditing for text classifiers.
//!
//! Two models are compared on two axes: whether they attribute their
//! predictions to the same words (top-K overlap of LIME and Kernel SHAP
//! attributions) and whether their confidence is equally reliable (ECE, MCE,
//! Brier score, confidence buckets, reliability diagrams).

pub mod alignment;
pub mod attribution;
pub mod backend;
pub mod calibration;
pub mod dataset;
pub mod kshap;
pub mod lime;
pub mod linalg;
pub mod report;
pub mod seed;
pub mod text;

pub use alignment::{align_models, jaccard, top_k, AlignOptions, AlignmentReport, TopKSet};
pub use attribution::{Attribution, Diagnostics, ExplainError, Method, ValueFunction};
pub use backend::{BackendError, PredictionBackend};
pub use calibration::{BinStats, BrierVariant, CalibrationReport, PredictionRecord};
pub use dataset::{load_dataset, Dataset, DatasetError, Instance, Manifest};
pub use kshap::{exact_shapley, explain_kshap, solve_kernel_shap, KshapConfig};
pub use lime::{explain_lime, LimeConfig};
pub use report::{run_audit, AuditConfig, AuditError, AuditReport, RunOptions};
pub use text::{tokenize, FeatureSpace, MaskStyle, TextPair};
