//! Black-box prediction backends.
//!
//! A backend maps a batch of texts to probability vectors. It is the only
//! channel the toolkit has to any model.

mod additive;
mod bow;
mod protocol;

pub use additive::{AdditiveBackend, Link};
pub use bow::{train_bow_logistic, BowLogisticModel, TrainConfig, TrainError};
pub use protocol::{Handshake, ProtocolClient};

use std::time::Duration;

use thiserror::Error;

use crate::text::{MaskStyle, TextPair};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend did not reply within {0:?}")]
    Timeout(Duration),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("row {row}: expected {expected} probabilities, got {got}")]
    ShapeMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}: not a probability vector ({reason})")]
    InvalidProbabilities { row: usize, reason: String },
    #[error("backend is not pure: repeated call differs by {max_diff:e} on {text:?}")]
    Impure { text: String, max_diff: f64 },
}

pub trait PredictionBackend: Send + Sync {
    fn num_classes(&self) -> usize;

    fn model_name(&self) -> &str;

    /// One probability row per input text, in input order. Must accept empty
    /// text.
    fn predict_proba(&self, texts: &[TextPair]) -> Result<Vec<Vec<f64>>, BackendError>;

    /// How masked words should be presented to this backend.
    fn mask_style(&self) -> MaskStyle {
        MaskStyle::Delete
    }
}

impl<B: PredictionBackend + ?Sized> PredictionBackend for Box<B> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn predict_proba(&self, texts: &[TextPair]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).predict_proba(texts)
    }
    fn mask_style(&self) -> MaskStyle {
        (**self).mask_style()
    }
}

impl<B: PredictionBackend + ?Sized> PredictionBackend for std::sync::Arc<B> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn predict_proba(&self, texts: &[TextPair]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).predict_proba(texts)
    }
    fn mask_style(&self) -> MaskStyle {
        (**self).mask_style()
    }
}

pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Check that every row is a probability vector of length `num_classes`.
pub fn validate_rows(rows: &[Vec<f64>], num_classes: usize) -> Result<(), BackendError> {
    for (row, probs) in rows.iter().enumerate() {
        if probs.len() != num_classes {
            return Err(BackendError::ShapeMismatch {
                row,
                expected: num_classes,
                got: probs.len(),
            });
        }
        if let Some(p) = probs
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(BackendError::InvalidProbabilities {
                row,
                reason: format!("entry {p} outside [0, 1]"),
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(BackendError::InvalidProbabilities {
                row,
                reason: format!("sums to {sum}"),
            });
        }
    }
    Ok(())
}

/// Predict in chunks of at most `chunk` texts.
pub fn predict_chunked(
    backend: &dyn PredictionBackend,
    texts: &[TextPair],
    chunk: usize,
) -> Result<Vec<Vec<f64>>, BackendError> {
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(chunk.max(1)) {
        let rows = backend.predict_proba(batch)?;
        if rows.len() != batch.len() {
            return Err(BackendError::ProtocolViolation(format!(
                "{} rows for a batch of {}",
                rows.len(),
                batch.len()
            )));
        }
        out.extend(rows);
    }
    Ok(out)
}

pub const PURITY_TOLERANCE: f64 = 1e-9;

/// Repeat-probe self-test: every text is predicted twice and the rows must agree.
pub fn probe_purity(
    backend: &dyn PredictionBackend,
    texts: &[TextPair],
) -> Result<(), BackendError> {
    let first = backend.predict_proba(texts)?;
    let second = backend.predict_proba(texts)?;
    for ((text, a), b) in texts.iter().zip(&first).zip(&second) {
        let max_diff = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if max_diff > PURITY_TOLERANCE || a.len() != b.len() {
            return Err(BackendError::Impure {
                text: text.a.clone(),
                max_diff,
            });
        }
    }
    Ok(())
}

pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        total += *z;
    }
    for z in logits.iter_mut() {
        *z /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_bad_rows() {
        assert!(validate_rows(&[vec![0.3, 0.7]], 2).is_ok());
        assert!(matches!(
            validate_rows(&[vec![0.3, 0.7], vec![1.0]], 2),
            Err(BackendError::ShapeMismatch { row: 1, .. })
        ));
        assert!(matches!(
            validate_rows(&[vec![0.3, 0.6]], 2),
            Err(BackendError::InvalidProbabilities { .. })
        ));
        assert!(matches!(
            validate_rows(&[vec![-0.1, 1.1]], 2),
            Err(BackendError::InvalidProbabilities { .. })
        ));
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.3, 0.5]), 2);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut z = vec![1000.0, 1001.0, -5.0];
        softmax_in_place(&mut z);
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(z[1] > z[0]);
    }
}
