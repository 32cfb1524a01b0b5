//! Top-K feature sets and their Jaccard overlap between two models.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{Attribution, Method};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error("cannot compare {left:?} with {right:?}")]
    MismatchedInstances { left: String, right: String },
    #[error("instance {0:?} is explained for only one of the two models")]
    MismatchedCoverage(String),
    #[error("instance {0:?} has different feature spaces on the two sides")]
    MismatchedFeatures(String),
    #[error("attributions mix methods {0} and {1}")]
    MixedMethods(Method, Method),
    #[error("instance {0:?} appears more than once")]
    DuplicateInstance(String),
    #[error("K must be at least 1 and at most k_max")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKSet {
    pub instance_id: String,
    pub model: String,
    pub method: Method,
    pub k: usize,
    pub features: BTreeSet<usize>,
}

/// Feature ids ordered by decreasing |score|, ties by lower id.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
    ids
}

/// The `min(k, d)` most influential features.
pub fn top_k(attr: &Attribution, k: usize) -> TopKSet {
    TopKSet {
        instance_id: attr.instance_id.clone(),
        model: attr.model.clone(),
        method: attr.method,
        k,
        features: ranking(&attr.scores).into_iter().take(k).collect(),
    }
}

fn jaccard_sets(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        // only reachable with empty feature spaces, which tokenize rejects
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn jaccard(a: &TopKSet, b: &TopKSet) -> Result<f64, AlignmentError> {
    if a.instance_id != b.instance_id || a.k != b.k {
        return Err(AlignmentError::MismatchedInstances {
            left: format!("{}@K={}", a.instance_id, a.k),
            right: format!("{}@K={}", b.instance_id, b.k),
        });
    }
    Ok(jaccard_sets(&a.features, &b.features))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignOptions {
    pub k: usize,
    pub k_max: usize,
    /// Skip instances where the two models explain different classes.
    pub exclude_disagreements: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            k: 10,
            k_max: 10,
            exclude_disagreements: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub model_a: String,
    pub model_b: String,
    pub method: Method,
    pub k: usize,
    pub instance_ids: Vec<String>,
    pub jaccard: Vec<f64>,
    pub mean_jaccard: f64,
    /// Mean Jaccard for every K in `1..=k_max`.
    pub sweep: BTreeMap<usize, f64>,
    /// Instances with fewer than K features on which top-K was capped at d.
    pub capped_instances: usize,
    /// Instances where the models predicted different classes.
    pub disagreements: usize,
    pub excluded: usize,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn single_method(attrs: &[Attribution]) -> Result<Option<Method>, AlignmentError> {
    let mut method = None;
    for a in attrs {
        match method {
            None => method = Some(a.method),
            Some(m) if m != a.method => return Err(AlignmentError::MixedMethods(m, a.method)),
            _ => {}
        }
    }
    Ok(method)
}

/// Per-instance and mean Jaccard agreement of two models' attributions.
///
/// Instances follow the order of `attrs_a`; the sweep reuses the same
/// attributions for every K.
pub fn align_models(
    attrs_a: &[Attribution],
    attrs_b: &[Attribution],
    opts: &AlignOptions,
) -> Result<AlignmentReport, AlignmentError> {
    if opts.k == 0 || opts.k > opts.k_max {
        return Err(AlignmentError::InvalidK);
    }
    let method = match (single_method(attrs_a)?, single_method(attrs_b)?) {
        (Some(a), Some(b)) if a != b => return Err(AlignmentError::MixedMethods(a, b)),
        (Some(m), _) | (None, Some(m)) => m,
        (None, None) => Method::Lime,
    };

    let mut by_id: HashMap<&str, &Attribution> = HashMap::new();
    for b in attrs_b {
        if by_id.insert(&b.instance_id, b).is_some() {
            return Err(AlignmentError::DuplicateInstance(b.instance_id.clone()));
        }
    }
    let mut pairs = Vec::with_capacity(attrs_a.len());
    let mut seen = BTreeSet::new();
    for a in attrs_a {
        if !seen.insert(a.instance_id.as_str()) {
            return Err(AlignmentError::DuplicateInstance(a.instance_id.clone()));
        }
        let b = by_id
            .get(a.instance_id.as_str())
            .ok_or_else(|| AlignmentError::MismatchedCoverage(a.instance_id.clone()))?;
        if a.features != b.features {
            return Err(AlignmentError::MismatchedFeatures(a.instance_id.clone()));
        }
        pairs.push((a, *b));
    }
    if let Some(extra) = attrs_b
        .iter()
        .find(|b| !seen.contains(b.instance_id.as_str()))
    {
        return Err(AlignmentError::MismatchedCoverage(
            extra.instance_id.clone(),
        ));
    }

    let disagreements = pairs
        .iter()
        .filter(|(a, b)| a.explained_class != b.explained_class)
        .count();
    let total = pairs.len();
    if opts.exclude_disagreements {
        pairs.retain(|(a, b)| a.explained_class == b.explained_class);
    }

    let ranked: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .map(|(a, b)| (ranking(&a.scores), ranking(&b.scores)))
        .collect();
    let at_k = |k: usize| -> Vec<f64> {
        ranked
            .iter()
            .map(|(ra, rb)| {
                let sa: BTreeSet<usize> = ra.iter().copied().take(k).collect();
                let sb: BTreeSet<usize> = rb.iter().copied().take(k).collect();
                jaccard_sets(&sa, &sb)
            })
            .collect()
    };

    let jaccard = at_k(opts.k);
    let sweep = (1..=opts.k_max).map(|k| (k, mean(&at_k(k)))).collect();
    Ok(AlignmentReport {
        model_a: attrs_a.first().map(|a| a.model.clone()).unwrap_or_default(),
        model_b: attrs_b.first().map(|b| b.model.clone()).unwrap_or_default(),
        method,
        k: opts.k,
        instance_ids: pairs.iter().map(|(a, _)| a.instance_id.clone()).collect(),
        mean_jaccard: mean(&jaccard),
        jaccard,
        sweep,
        capped_instances: pairs
            .iter()
            .filter(|(a, _)| a.scores.len() < opts.k)
            .count(),
        disagreements,
        excluded: total - pairs.len(),
    })
}
