//! Bag-of-words softmax regression, trained with plain mini-batch gradient
//! descent. Two of these with different vocabulary caps stand in for a large
//! model and its compressed sibling.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{softmax_in_place, BackendError, PredictionBackend};
use crate::dataset::Dataset;
use crate::text::{words, TextPair};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainError {
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Keep only the `vocab_cap` most frequent words (document frequency,
    /// ties broken alphabetically). `None` keeps everything.
    pub vocab_cap: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 100,
            l2: 1e-4,
            batch_size: 8,
            seed: 0,
            vocab_cap: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BowLogisticModel {
    name: String,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    num_classes: usize,
    /// `num_classes × (vocab.len() + 1)`, row-major; last column is the bias.
    weights: Vec<f64>,
    config: TrainConfig,
}

impl BowLogisticModel {
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn columns(&self, text: &TextPair) -> Vec<usize> {
        let mut cols: Vec<usize> = words(&text.a)
            .chain(text.b.as_deref().into_iter().flat_map(words))
            .filter_map(|w| self.index.get(&w).copied())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    fn probs(&self, cols: &[usize]) -> Vec<f64> {
        let stride = self.vocab.len() + 1;
        let mut logits: Vec<f64> = (0..self.num_classes)
            .map(|c| {
                let row = &self.weights[c * stride..(c + 1) * stride];
                row[stride - 1] + cols.iter().map(|&j| row[j]).sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut logits);
        logits
    }
}

impl PredictionBackend for BowLogisticModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn model_name(&self) -> &str {
        &self.name
    }

    fn predict_proba(&self, texts: &[TextPair]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.probs(&self.columns(t))).collect())
    }
}

fn build_vocab(docs: &[Vec<String>], cap: Option<usize>) -> Vec<String> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        for w in doc {
            *df.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    // BTreeMap order is alphabetical and the sort is stable
    ranked.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    let keep = cap.unwrap_or(ranked.len()).min(ranked.len());
    let mut vocab: Vec<String> = ranked[..keep].iter().map(|(w, _)| w.to_string()).collect();
    vocab.sort();
    vocab
}

pub fn train_bow_logistic(
    name: impl Into<String>,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<BowLogisticModel, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::DegenerateDataset("no instances".into()));
    }
    let mut present = vec![false; dataset.num_classes];
    for inst in &dataset.instances {
        present[inst.label] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(TrainError::DegenerateDataset(format!(
            "class {missing} has no training instances"
        )));
    }
    if cfg.batch_size == 0
        || !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0)
        || cfg.l2 < 0.0
    {
        return Err(TrainError::InvalidConfig(format!("{cfg:?}")));
    }

    let docs: Vec<Vec<String>> = dataset
        .instances
        .iter()
        .map(|inst| {
            let mut d: Vec<String> = words(&inst.text_a)
                .chain(inst.text_b.as_deref().into_iter().flat_map(words))
                .collect();
            d.sort();
            d.dedup();
            d
        })
        .collect();
    let vocab = build_vocab(&docs, cfg.vocab_cap);
    let index: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();

    let mut model = BowLogisticModel {
        name: name.into(),
        num_classes: dataset.num_classes,
        weights: vec![0.0; dataset.num_classes * (vocab.len() + 1)],
        vocab,
        index,
        config: cfg.clone(),
    };

    let rows: Vec<(Vec<usize>, usize)> = dataset
        .instances
        .iter()
        .map(|inst| (model.columns(&TextPair::of(inst)), inst.label))
        .collect();

    let stride = model.vocab.len() + 1;
    let k = model.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut grad = vec![0.0; model.weights.len()];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &r in batch {
                let (cols, label) = &rows[r];
                let p = model.probs(cols);
                for c in 0..k {
                    let err = p[c] - if c == *label { 1.0 } else { 0.0 };
                    let g = &mut grad[c * stride..(c + 1) * stride];
                    for &j in cols {
                        g[j] += err;
                    }
                    g[stride - 1] += err;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for c in 0..k {
                for j in 0..stride {
                    let idx = c * stride + j;
                    let penalty = if j + 1 < stride {
                        cfg.l2 * model.weights[idx]
                    } else {
                        0.0
                    };
                    model.weights[idx] -= cfg.learning_rate * (grad[idx] * scale + penalty);
                }
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{argmax, validate_rows};
    use crate::dataset::{Instance, Manifest};

    fn toy() -> Dataset {
        let m = Manifest {
            num_classes: 2,
            class_names: vec!["neg".into(), "pos".into()],
        };
        let rows = [
            ("1", "great fun", 1),
            ("2", "great story", 1),
            ("3", "awful fun", 0),
            ("4", "awful story", 0),
        ];
        Dataset::new(
            "toy",
            &m,
            rows.iter()
                .map(|(id, t, l)| Instance {
                    id: id.to_string(),
                    text_a: t.to_string(),
                    text_b: None,
                    label: *l,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let ds = toy();
        let cfg = TrainConfig {
            epochs: 500,
            ..TrainConfig::default()
        };
        let model = train_bow_logistic("m", &ds, &cfg).unwrap();
        let texts: Vec<TextPair> = ds.instances.iter().map(TextPair::of).collect();
        let rows = model.predict_proba(&texts).unwrap();
        validate_rows(&rows, 2).unwrap();
        for (inst, row) in ds.instances.iter().zip(&rows) {
            assert_eq!(argmax(row), inst.label, "{}", inst.text_a);
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let ds = toy();
        let cfg = TrainConfig::default();
        let a = train_bow_logistic("a", &ds, &cfg).unwrap();
        let b = train_bow_logistic("b", &ds, &cfg).unwrap();
        let bits =
            |m: &BowLogisticModel| m.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn vocab_cap_truncates_by_frequency() {
        let ds = toy();
        let full = train_bow_logistic("full", &ds, &TrainConfig::default()).unwrap();
        assert_eq!(full.vocab().len(), 4);
        let capped = train_bow_logistic(
            "small",
            &ds,
            &TrainConfig {
                vocab_cap: Some(2),
                ..TrainConfig::default()
            },
        )
        .unwrap();
        // all four words have df=2, so alphabetical order decides
        assert_eq!(capped.vocab(), ["awful", "fun"]);
        assert_eq!(capped.num_classes(), 2);
    }

    #[test]
    fn degenerate_datasets_rejected() {
        let mut ds = toy();
        ds.instances.clear();
        assert!(matches!(
            train_bow_logistic("m", &ds, &TrainConfig::default()),
            Err(TrainError::DegenerateDataset(_))
        ));
        let mut ds = toy();
        ds.instances.retain(|i| i.label == 1);
        assert!(matches!(
            train_bow_logistic("m", &ds, &TrainConfig::default()),
            Err(TrainError::DegenerateDataset(_))
        ));
    }

    #[test]
    fn accepts_empty_text() {
        let model = train_bow_logistic("m", &toy(), &TrainConfig::default()).unwrap();
        let rows = model
            .predict_proba(&[TextPair::new("", Some(String::new()))])
            .unwrap();
        validate_rows(&rows, 2).unwrap();
    }
}
