//! Attribution records and the coalition value function both explainers share.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{argmax, predict_chunked, BackendError, PredictionBackend};
use crate::dataset::Instance;
use crate::text::{FeatureSpace, MaskStyle, TextPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lime,
    Kshap,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::Kshap => "kshap",
        }
    }

    /// Column heading used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Lime => "LIME",
            Method::Kshap => "SHAP",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lime" => Ok(Method::Lime),
            "kshap" | "shap" => Ok(Method::Kshap),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Distinct coalitions sent to the backend.
    pub n_evals: usize,
    /// Weighted r² of the LIME surrogate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    /// Every coalition was enumerated.
    pub exact: bool,
    /// Ridge penalty actually used; larger than configured when the system
    /// had to be regularized further.
    pub ridge: f64,
    #[serde(default)]
    pub ridge_raised: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    #[serde(rename = "instance")]
    pub instance_id: String,
    pub model: String,
    pub method: Method,
    #[serde(rename = "class")]
    pub explained_class: usize,
    pub scores: Vec<f64>,
    pub features: Vec<String>,
    #[serde(rename = "diag")]
    pub diagnostics: Diagnostics,
}

impl Attribution {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("budget {budget} is below the minimum {required} for {d} features")]
    TooFewSamples {
        budget: usize,
        required: usize,
        d: usize,
    },
    #[error("{d} features exceed the exact-enumeration cap of {max}")]
    TooManyFeatures { d: usize, max: usize },
    #[error("nothing to explain: feature space is empty")]
    EmptyFeatureSpace,
    #[error("class {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("linear system stayed singular after regularization")]
    SingularSystem,
}

/// A cooperative game over `num_players` features: maps coalitions (one
/// membership flag per player) to a real value.
pub trait ValueFunction {
    fn num_players(&self) -> usize;

    fn evaluate(&self, coalitions: &[Vec<bool>]) -> Result<Vec<f64>, BackendError>;
}

/// A game backed by a plain function.
pub struct FnGame<F> {
    players: usize,
    f: F,
}

impl<F: Fn(&[bool]) -> f64> FnGame<F> {
    pub fn new(players: usize, f: F) -> Self {
        Self { players, f }
    }
}

impl<F: Fn(&[bool]) -> f64> ValueFunction for FnGame<F> {
    fn num_players(&self) -> usize {
        self.players
    }

    fn evaluate(&self, coalitions: &[Vec<bool>]) -> Result<Vec<f64>, BackendError> {
        Ok(coalitions.iter().map(|c| (self.f)(c)).collect())
    }
}

/// Probability of one class on the instance with only the coalition's words kept.
pub struct TextGame<'a> {
    backend: &'a dyn PredictionBackend,
    features: &'a FeatureSpace,
    class: usize,
    style: MaskStyle,
    batch_size: usize,
}

impl<'a> TextGame<'a> {
    pub fn new(
        backend: &'a dyn PredictionBackend,
        features: &'a FeatureSpace,
        class: usize,
        batch_size: usize,
    ) -> Self {
        Self {
            backend,
            features,
            class,
            style: backend.mask_style(),
            batch_size,
        }
    }
}

impl ValueFunction for TextGame<'_> {
    fn num_players(&self) -> usize {
        self.features.len()
    }

    fn evaluate(&self, coalitions: &[Vec<bool>]) -> Result<Vec<f64>, BackendError> {
        let mut slot: HashMap<&[bool], usize> = HashMap::new();
        let mut texts = Vec::new();
        let positions: Vec<usize> = coalitions
            .iter()
            .map(|c| {
                *slot.entry(c.as_slice()).or_insert_with(|| {
                    texts.push(self.features.mask_text(c, &self.style));
                    texts.len() - 1
                })
            })
            .collect();
        let rows = predict_chunked(self.backend, &texts, self.batch_size)?;
        positions
            .into_iter()
            .map(|p| {
                rows[p]
                    .get(self.class)
                    .copied()
                    .ok_or(BackendError::ShapeMismatch {
                        row: p,
                        expected: self.class + 1,
                        got: rows[p].len(),
                    })
            })
            .collect()
    }
}

/// The backend's predicted class on the unperturbed instance.
pub fn predicted_class(
    backend: &dyn PredictionBackend,
    instance: &Instance,
) -> Result<usize, BackendError> {
    let rows = backend.predict_proba(&[TextPair::of(instance)])?;
    rows.first()
        .map(|r| argmax(r))
        .ok_or_else(|| BackendError::ProtocolViolation("no row returned".into()))
}

pub(crate) fn check_class(
    backend: &dyn PredictionBackend,
    class: usize,
) -> Result<(), ExplainError> {
    if class >= backend.num_classes() {
        return Err(ExplainError::ClassOutOfRange {
            class,
            num_classes: backend.num_classes(),
        });
    }
    Ok(())
}
