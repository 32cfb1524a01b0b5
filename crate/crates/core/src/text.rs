//! Interpretable features for text instances.
//!
//! An instance is split into Unicode words (UAX #29 word boundaries, pure
//! punctuation dropped). Every distinct lowercase word becomes one feature, so
//! masking a feature removes all of its occurrences in both segments.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::dataset::Instance;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("instance {0:?} has no word tokens")]
    EmptyInstance(String),
}

/// Which side of a sentence pair a token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub segment: Segment,
    pub token_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub id: usize,
    pub surface: String,
    pub occurrences: Vec<Occurrence>,
}

/// Bag-of-words feature space of one instance.
///
/// Besides the features themselves it keeps the per-segment token sequence
/// as feature ids, which is all that is needed to rebuild masked text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    features: Vec<Feature>,
    tokens_a: Vec<usize>,
    tokens_b: Option<Vec<usize>>,
}

/// Lowercased word tokens of `text`, in order.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.unicode_words().map(str::to_lowercase)
}

/// How a deactivated word is presented to the backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "style", content = "token")]
pub enum MaskStyle {
    /// Delete every occurrence.
    #[default]
    Delete,
    /// Replace every occurrence with a fixed token such as `[MASK]`.
    Token(String),
}

/// A text (or sentence pair) as sent to a prediction backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TextPair {
    pub a: String,
    pub b: Option<String>,
}

impl TextPair {
    pub fn new(a: impl Into<String>, b: Option<String>) -> Self {
        Self { a: a.into(), b }
    }

    pub fn single(a: impl Into<String>) -> Self {
        Self {
            a: a.into(),
            b: None,
        }
    }

    pub fn of(instance: &Instance) -> Self {
        Self {
            a: instance.text_a.clone(),
            b: instance.text_b.clone(),
        }
    }
}

pub fn tokenize(instance: &Instance) -> Result<FeatureSpace, TokenizeError> {
    let mut features: Vec<Feature> = Vec::new();
    let mut index = std::collections::HashMap::<String, usize>::new();

    let mut scan = |text: &str, segment: Segment| -> Vec<usize> {
        words(text)
            .enumerate()
            .map(|(token_index, surface)| {
                let id = *index.entry(surface.clone()).or_insert_with(|| {
                    features.push(Feature {
                        id: features.len(),
                        surface,
                        occurrences: Vec::new(),
                    });
                    features.len() - 1
                });
                features[id].occurrences.push(Occurrence {
                    segment,
                    token_index,
                });
                id
            })
            .collect()
    };

    let tokens_a = scan(&instance.text_a, Segment::A);
    let tokens_b = instance.text_b.as_deref().map(|b| scan(b, Segment::B));

    if features.is_empty() {
        return Err(TokenizeError::EmptyInstance(instance.id.clone()));
    }
    Ok(FeatureSpace {
        features,
        tokens_a,
        tokens_b,
    })
}

impl FeatureSpace {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn surface(&self, id: usize) -> &str {
        &self.features[id].surface
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.features.iter().map(|f| f.surface.clone()).collect()
    }

    pub fn is_pair(&self) -> bool {
        self.tokens_b.is_some()
    }

    /// Rebuild the instance text keeping only features whose mask bit is set.
    ///
    /// Surviving words keep their order and are joined with single spaces.
    /// Panics if `mask.len() != self.len()`.
    pub fn mask_text(&self, mask: &[bool], style: &MaskStyle) -> TextPair {
        assert_eq!(
            mask.len(),
            self.len(),
            "mask length must equal feature count"
        );
        let render = |tokens: &[usize]| -> String {
            let mut out = String::new();
            for &id in tokens {
                let word = if mask[id] {
                    self.features[id].surface.as_str()
                } else {
                    match style {
                        MaskStyle::Delete => continue,
                        MaskStyle::Token(token) => token.as_str(),
                    }
                };
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(word);
            }
            out
        };
        TextPair {
            a: render(&self.tokens_a),
            b: self.tokens_b.as_deref().map(render),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(a: &str, b: Option<&str>) -> Instance {
        Instance {
            id: "x".into(),
            text_a: a.into(),
            text_b: b.map(Into::into),
            label: 0,
        }
    }

    #[test]
    fn drops_punctuation() {
        let fs = tokenize(&inst("Was I cheated ?", None)).unwrap();
        assert_eq!(fs.surfaces(), vec!["was", "i", "cheated"]);
        assert_eq!(fs.len(), 3);
    }

    #[test]
    fn groups_repeated_words() {
        let fs = tokenize(&inst("a a b", None)).unwrap();
        assert_eq!(fs.surfaces(), vec!["a", "b"]);
        assert_eq!(fs.features()[0].occurrences.len(), 2);
    }

    #[test]
    fn pair_spans_both_segments() {
        let fs = tokenize(&inst(
            "How safe is it to use paypal compared to paying directly from your credit / debit card ?",
            Some("Was I cheated ?"),
        ))
        .unwrap();
        let cheated = fs
            .features()
            .iter()
            .find(|f| f.surface == "cheated")
            .unwrap();
        assert_eq!(
            cheated.occurrences,
            vec![Occurrence {
                segment: Segment::B,
                token_index: 2
            }]
        );
        let how = fs.features().iter().find(|f| f.surface == "how").unwrap();
        assert_eq!(how.occurrences[0].segment, Segment::A);
        // "to" appears twice in the first question
        let to = fs.features().iter().find(|f| f.surface == "to").unwrap();
        assert_eq!(to.occurrences.len(), 2);
    }

    #[test]
    fn case_folds() {
        let fs = tokenize(&inst("How how HOW", None)).unwrap();
        assert_eq!(fs.len(), 1);
    }

    #[test]
    fn punctuation_only_is_empty() {
        assert_eq!(
            tokenize(&inst("?! ...", Some("--"))),
            Err(TokenizeError::EmptyInstance("x".into()))
        );
    }

    #[test]
    fn mask_identity_and_empty() {
        let fs = tokenize(&inst("Was I cheated ?", Some("Really, was I"))).unwrap();
        let all = vec![true; fs.len()];
        assert_eq!(
            fs.mask_text(&all, &MaskStyle::Delete),
            TextPair::new("was i cheated", Some("really was i".into()))
        );
        let none = vec![false; fs.len()];
        assert_eq!(
            fs.mask_text(&none, &MaskStyle::Delete),
            TextPair::new("", Some(String::new()))
        );
    }

    #[test]
    fn mask_removes_every_occurrence() {
        let fs = tokenize(&inst("a b a c", None)).unwrap();
        let text = fs.mask_text(&[false, true, true], &MaskStyle::Delete);
        assert_eq!(text.a, "b c");
        assert_eq!(text.b, None);
        let text = fs.mask_text(&[false, true, true], &MaskStyle::Token("[MASK]".into()));
        assert_eq!(text.a, "[MASK] b [MASK] c");
    }

    #[test]
    fn masked_out_text_has_no_features() {
        let instance = inst("The cat sat, on the mat.", Some("Did it?"));
        let fs = tokenize(&instance).unwrap();
        let text = fs.mask_text(&vec![false; fs.len()], &MaskStyle::Delete);
        let retok = Instance {
            text_a: text.a,
            text_b: text.b,
            ..instance
        };
        assert!(matches!(
            tokenize(&retok),
            Err(TokenizeError::EmptyInstance(_))
        ));
    }

    #[test]
    fn deterministic() {
        let instance = inst("Is this the same? Yes, the same.", Some("same same"));
        assert_eq!(tokenize(&instance), tokenize(&instance));
    }
}
