use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BackendError, PredictionBackend};
use crate::text::{words, TextPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// Output `[1 - s, s]` with the raw score `s`. Intended for oracle tests:
    /// rows are not clamped to `[0, 1]`.
    IdentityScore,
    /// Output `[σ(-s), σ(s)]`.
    Logistic,
}

/// Two-class backend whose score is `bias + Σ weights[w]` over the distinct
/// words present in the text. Unknown words weigh zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditiveBackend {
    name: String,
    weights: BTreeMap<String, f64>,
    bias: f64,
    link: Link,
}

impl AdditiveBackend {
    pub fn new(
        name: impl Into<String>,
        weights: impl IntoIterator<Item = (String, f64)>,
        bias: f64,
        link: Link,
    ) -> Self {
        Self {
            name: name.into(),
            weights: weights
                .into_iter()
                .map(|(w, v)| (w.to_lowercase(), v))
                .collect(),
            bias,
            link,
        }
    }

    pub fn weight(&self, word: &str) -> f64 {
        self.weights.get(word).copied().unwrap_or(0.0)
    }

    pub fn score(&self, text: &TextPair) -> f64 {
        let mut present: Vec<String> = words(&text.a)
            .chain(text.b.as_deref().into_iter().flat_map(words))
            .collect();
        present.sort_unstable();
        present.dedup();
        self.bias + present.iter().map(|w| self.weight(w)).sum::<f64>()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PredictionBackend for AdditiveBackend {
    fn num_classes(&self) -> usize {
        2
    }

    fn model_name(&self) -> &str {
        &self.name
    }

    fn predict_proba(&self, texts: &[TextPair]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts
            .iter()
            .map(|t| {
                let s = self.score(t);
                match self.link {
                    Link::IdentityScore => vec![1.0 - s, s],
                    Link::Logistic => vec![sigmoid(-s), sigmoid(s)],
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::validate_rows;

    fn good_bad(link: Link) -> AdditiveBackend {
        AdditiveBackend::new(
            "toy",
            [("good".to_string(), 2.0), ("bad".to_string(), -2.0)],
            0.0,
            link,
        )
    }

    #[test]
    fn logistic_of_good() {
        let b = good_bad(Link::Logistic);
        let rows = b.predict_proba(&[TextPair::single("good")]).unwrap();
        assert!((rows[0][0] - 0.11920292202211755).abs() < 1e-12);
        assert!((rows[0][1] - 0.8807970779778823).abs() < 1e-12);
        validate_rows(&rows, 2).unwrap();
    }

    #[test]
    fn empty_text_is_even() {
        let b = good_bad(Link::Logistic);
        let rows = b.predict_proba(&[TextPair::single("")]).unwrap();
        assert_eq!(rows[0], vec![0.5, 0.5]);
    }

    #[test]
    fn repeated_words_count_once() {
        let b = good_bad(Link::IdentityScore);
        assert_eq!(
            b.score(&TextPair::new("good good", Some("Good".into()))),
            2.0
        );
    }

    #[test]
    fn identity_link_is_additive() {
        let b = AdditiveBackend::new(
            "t",
            [
                ("x".to_string(), 0.3),
                ("y".to_string(), -0.7),
                ("z".to_string(), 0.1),
            ],
            0.25,
            Link::IdentityScore,
        );
        for subset in ["", "y", "z", "y z"] {
            let without = b.score(&TextPair::single(subset));
            let with = b.score(&TextPair::single(format!("{subset} x")));
            assert!((with - without - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_matches_singletons() {
        let b = good_bad(Link::Logistic);
        let texts = vec![
            TextPair::single("good film"),
            TextPair::single(""),
            TextPair::new("bad", Some("good".into())),
        ];
        let batch = b.predict_proba(&texts).unwrap();
        for (t, row) in texts.iter().zip(batch) {
            assert_eq!(b.predict_proba(std::slice::from_ref(t)).unwrap()[0], row);
        }
    }
}
