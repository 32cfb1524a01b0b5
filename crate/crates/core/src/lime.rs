//! Local surrogate explanations.
//!
//! Perturbations switch off random subsets of the instance's words, each
//! perturbation is weighted by an exponential kernel on its cosine distance
//! from the unperturbed instance, and a weighted ridge regression of the
//! explained-class probability on the binary masks gives one coefficient per
//! feature.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    check_class, predicted_class, Attribution, Diagnostics, ExplainError, Method, TextGame,
    ValueFunction,
};
use crate::backend::PredictionBackend;
use crate::dataset::Instance;
use crate::linalg::weighted_ridge;
use crate::text::FeatureSpace;

/// Largest mask count enumerated in exhaustive mode.
pub const EXHAUSTIVE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Kernel width on distances measured in percent. `f64::INFINITY` gives
    /// uniform weights.
    pub kernel_width: f64,
    pub ridge: f64,
    /// Enumerate all `2^d` masks instead of sampling when `2^d ≤ 4096`.
    pub exhaustive: bool,
    pub batch_size: usize,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: 25.0,
            ridge: 1.0,
            exhaustive: false,
            batch_size: 64,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.kernel_width.is_nan() || self.kernel_width <= 0.0 {
            return Err(ExplainError::InvalidConfig(format!(
                "kernel_width must be positive, got {}",
                self.kernel_width
            )));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(ExplainError::InvalidConfig(format!(
                "ridge must be a finite non-negative number, got {}",
                self.ridge
            )));
        }
        if self.batch_size == 0 {
            return Err(ExplainError::InvalidConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn enumerates(&self, d: usize) -> bool {
        self.exhaustive && d < usize::BITS as usize && (1usize << d) <= EXHAUSTIVE_LIMIT
    }
}

/// Cosine distance between a binary mask and the all-ones vector.
pub fn cosine_distance(mask: &[bool]) -> f64 {
    let active = mask.iter().filter(|b| **b).count();
    if active == 0 {
        return 1.0;
    }
    1.0 - (active as f64 / mask.len() as f64).sqrt()
}

/// Sample weight of a mask: `sqrt(exp(-D²/σ²))` with `D` the cosine distance
/// in percent.
pub fn kernel_weight(mask: &[bool], kernel_width: f64) -> f64 {
    let d = 100.0 * cosine_distance(mask);
    (-(d * d) / (kernel_width * kernel_width)).exp().sqrt()
}

/// Masks used to probe the model: the unperturbed instance first, then
/// `n_samples - 1` draws that each switch off `k ~ U{1..d}` distinct features.
pub fn sample_masks<R: Rng + ?Sized>(d: usize, n_samples: usize, rng: &mut R) -> Vec<Vec<bool>> {
    let mut masks = Vec::with_capacity(n_samples);
    masks.push(vec![true; d]);
    for _ in 1..n_samples {
        let k = rng.random_range(1..=d);
        let mut mask = vec![true; d];
        for i in index::sample(rng, d, k) {
            mask[i] = false;
        }
        masks.push(mask);
    }
    masks
}

/// All `2^d` masks, ordered by their bit pattern (bit `i` = feature `i`).
pub fn all_masks(d: usize) -> Vec<Vec<bool>> {
    (0..1usize << d)
        .map(|m| (0..d).map(|i| (m >> i) & 1 == 1).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
    pub ridge: f64,
    pub ridge_raised: bool,
}

/// Fit the weighted ridge surrogate. Weights are normalized to mean one so
/// the penalty has the same meaning whatever the kernel's overall scale.
pub fn fit_surrogate(
    masks: &[Vec<bool>],
    values: &[f64],
    weights: &[f64],
    ridge: f64,
) -> Result<Surrogate, ExplainError> {
    let mean_w = weights.iter().sum::<f64>() / weights.len().max(1) as f64;
    if !(mean_w.is_finite() && mean_w > 0.0) {
        return Err(ExplainError::InvalidConfig(
            "all sample weights vanished".into(),
        ));
    }
    let w: Vec<f64> = weights.iter().map(|x| x / mean_w).collect();
    let rows: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect();
    let fit = weighted_ridge(&rows, values, &w, ridge, true).ok_or(ExplainError::SingularSystem)?;
    Ok(Surrogate {
        coef: fit.coef,
        intercept: fit.intercept,
        r2: fit.r2,
        ridge: fit.ridge,
        ridge_raised: fit.raised,
    })
}

/// Explain the backend's own predicted class.
pub fn explain_lime<R: Rng + ?Sized>(
    backend: &dyn PredictionBackend,
    instance: &Instance,
    features: &FeatureSpace,
    cfg: &LimeConfig,
    rng: &mut R,
) -> Result<Attribution, ExplainError> {
    let class = predicted_class(backend, instance)?;
    explain_lime_for_class(backend, instance, features, class, cfg, rng)
}

pub fn explain_lime_for_class<R: Rng + ?Sized>(
    backend: &dyn PredictionBackend,
    instance: &Instance,
    features: &FeatureSpace,
    class: usize,
    cfg: &LimeConfig,
    rng: &mut R,
) -> Result<Attribution, ExplainError> {
    cfg.validate()?;
    check_class(backend, class)?;
    let d = features.len();
    if d == 0 {
        return Err(ExplainError::EmptyFeatureSpace);
    }
    let exact = cfg.enumerates(d);
    let masks = if exact {
        all_masks(d)
    } else {
        if cfg.n_samples < d + 2 {
            return Err(ExplainError::TooFewSamples {
                budget: cfg.n_samples,
                required: d + 2,
                d,
            });
        }
        sample_masks(d, cfg.n_samples, rng)
    };

    let game = TextGame::new(backend, features, class, cfg.batch_size);
    let values = game.evaluate(&masks)?;
    let weights: Vec<f64> = masks
        .iter()
        .map(|m| kernel_weight(m, cfg.kernel_width))
        .collect();
    let surrogate = fit_surrogate(&masks, &values, &weights, cfg.ridge)?;

    let mut distinct = masks.clone();
    distinct.sort_unstable();
    distinct.dedup();

    Ok(Attribution {
        instance_id: instance.id.clone(),
        model: backend.model_name().to_owned(),
        method: Method::Lime,
        explained_class: class,
        scores: surrogate.coef,
        features: features.surfaces(),
        diagnostics: Diagnostics {
            n_evals: distinct.len(),
            r2: Some(surrogate.r2),
            exact,
            ridge: surrogate.ridge,
            ridge_raised: surrogate.ridge_raised,
        },
    })
}
