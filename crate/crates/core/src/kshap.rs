//! Kernel SHAP and exact Shapley values.
//!
//! Kernel SHAP fits the attribution vector by weighted least squares over
//! coalitions, with the SHAP kernel `w(s) = (d−1) / (C(d,s)·s·(d−s))`. The two
//! endpoint coalitions (empty and full) carry infinite weight; instead of
//! approximating that with a large finite weight, the efficiency constraint
//! `Σφ = v(full) − v(∅)` is imposed exactly by eliminating the last variable.
//!
//! Small feature spaces are enumerated completely, which makes the solution
//! the exact Shapley vector. Larger ones use the hybrid scheme: coalition
//! sizes whose complete enumeration fits in the remaining budget are
//! enumerated, the rest are sampled in complementary pairs.

use std::collections::HashMap;

use itertools::Itertools;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
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

/// Hard cap on players for [`exact_shapley`].
pub const EXACT_SHAPLEY_MAX: usize = 12;

/// Largest allowed `exact_threshold`.
pub const EXACT_THRESHOLD_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KshapConfig {
    /// Coalition evaluations allowed in sampled mode, endpoints included.
    pub budget: usize,
    /// Enumerate all coalitions when `d ≤ exact_threshold`.
    pub exact_threshold: usize,
    /// Added to the diagonal of the normal equations.
    pub ridge: f64,
    pub batch_size: usize,
}

impl Default for KshapConfig {
    fn default() -> Self {
        Self {
            budget: 2048,
            exact_threshold: 13,
            ridge: 1e-9,
            batch_size: 64,
        }
    }
}

impl KshapConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.exact_threshold > EXACT_THRESHOLD_MAX {
            return Err(ExplainError::InvalidConfig(format!(
                "exact_threshold {} exceeds {}",
                self.exact_threshold, EXACT_THRESHOLD_MAX
            )));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(ExplainError::InvalidConfig(format!(
                "ridge must be non-negative, got {}",
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
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// SHAP kernel weight of one coalition of size `s` among `d` players.
pub fn shap_kernel(d: usize, s: usize) -> f64 {
    assert!(s > 0 && s < d, "endpoint coalitions have infinite weight");
    (d - 1) as f64 / (binomial(d, s) * (s * (d - s)) as f64)
}

fn mask_index(mask: &[bool]) -> usize {
    mask.iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .fold(0, |acc, (i, _)| acc | (1 << i))
}

fn index_mask(index: usize, d: usize) -> Vec<bool> {
    (0..d).map(|i| (index >> i) & 1 == 1).collect()
}

/// Exact Shapley values by the classical subset formula
/// `φᵢ = Σ_{S ⊆ N∖{i}} |S|!(d−|S|−1)!/d! · (v(S∪{i}) − v(S))`.
///
/// Evaluates all `2^d` coalitions once; `d` is capped at 12.
pub fn exact_shapley(game: &dyn ValueFunction) -> Result<Vec<f64>, ExplainError> {
    let d = game.num_players();
    if d > EXACT_SHAPLEY_MAX {
        return Err(ExplainError::TooManyFeatures {
            d,
            max: EXACT_SHAPLEY_MAX,
        });
    }
    let masks: Vec<Vec<bool>> = (0..1usize << d).map(|m| index_mask(m, d)).collect();
    let values = game.evaluate(&masks)?;
    let factorial: Vec<f64> = (0..=d)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    let mut phi = vec![0.0; d];
    for (i, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for s in 0..1usize << d {
            if s & bit != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let weight = factorial[size] * factorial[d - size - 1] / factorial[d];
            *slot += weight * (values[s | bit] - values[s]);
        }
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KshapSolution {
    pub phi: Vec<f64>,
    /// `v(∅)`
    pub base_value: f64,
    /// `v(full)`
    pub full_value: f64,
    pub n_evals: usize,
    pub exact: bool,
    pub ridge: f64,
    pub ridge_raised: bool,
}

struct CoalitionPlan {
    masks: Vec<Vec<bool>>,
    weights: Vec<f64>,
    exact: bool,
}

/// Complete enumeration of all proper coalitions with kernel weights.
fn plan_exact(d: usize) -> CoalitionPlan {
    let mut masks = Vec::new();
    let mut weights = Vec::new();
    for m in 1..(1usize << d) - 1 {
        let mask = index_mask(m, d);
        weights.push(shap_kernel(d, m.count_ones() as usize));
        masks.push(mask);
    }
    CoalitionPlan {
        masks,
        weights,
        exact: true,
    }
}

fn complement(mask: &[bool]) -> Vec<bool> {
    mask.iter().map(|b| !b).collect()
}

/// Hybrid enumeration and paired sampling within `available` evaluations.
fn plan_sampled<R: Rng + ?Sized>(d: usize, available: usize, rng: &mut R) -> CoalitionPlan {
    // Sizes 1..=half; size s stands for both s and d−s.
    let half = d / 2;
    let size_mass = |s: usize| -> f64 {
        let per_side = (d - 1) as f64 / (s * (d - s)) as f64;
        if 2 * s == d {
            per_side
        } else {
            2.0 * per_side
        }
    };
    let total_mass: f64 = (1..=half).map(size_mass).sum();

    let mut masks: Vec<Vec<bool>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut left = available;
    let mut remaining_mass = total_mass;
    let mut next_size = 1;

    while next_size <= half {
        let s = next_size;
        let count = if 2 * s == d {
            binomial(d, s)
        } else {
            2.0 * binomial(d, s)
        };
        let share = size_mass(s) / remaining_mass;
        if (left as f64) * share < count - 1e-8 {
            break;
        }
        let per_coalition = shap_kernel(d, s);
        for combo in (0..d).combinations(s) {
            let mut mask = vec![false; d];
            for i in combo {
                mask[i] = true;
            }
            if 2 * s != d {
                masks.push(complement(&mask));
                weights.push(per_coalition);
            }
            masks.push(mask);
            weights.push(per_coalition);
        }
        left -= count as usize;
        remaining_mass -= size_mass(s);
        next_size += 1;
    }

    if next_size > half {
        return CoalitionPlan {
            masks,
            weights,
            exact: true,
        };
    }

    // Each draw yields a pair, so a self-complementary size is drawn half as often.
    let sizes: Vec<usize> = (next_size..=half).collect();
    let draw_mass: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            let per_side = (d - 1) as f64 / (s * (d - s)) as f64;
            if 2 * s == d {
                per_side / 2.0
            } else {
                per_side
            }
        })
        .collect();
    let size_dist = WeightedIndex::new(&draw_mass).expect("positive size weights");

    let fixed = masks.len();
    let mut seen: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut attempts = 0usize;
    let max_attempts = 100 * available.max(1);
    while left > 0 && attempts < max_attempts {
        attempts += 1;
        let s = sizes[size_dist.sample(rng)];
        let mut mask = vec![false; d];
        for i in index::sample(rng, d, s) {
            mask[i] = true;
        }
        let partner = complement(&mask);
        for m in [mask, partner] {
            if left == 0 {
                break;
            }
            match seen.get(&m) {
                Some(&slot) => weights[slot] += 1.0,
                None => {
                    seen.insert(m.clone(), masks.len());
                    masks.push(m);
                    weights.push(1.0);
                    left -= 1;
                }
            }
        }
    }

    // Sampled coalitions share the kernel mass of the sizes left unenumerated,
    // expressed in the same units as the enumerated kernel weights.
    let sampled_total: f64 = weights[fixed..].iter().sum();
    if sampled_total > 0.0 {
        let scale = remaining_mass / sampled_total;
        weights[fixed..].iter_mut().for_each(|w| *w *= scale);
    }
    CoalitionPlan {
        masks,
        weights,
        exact: false,
    }
}

/// Kernel SHAP on an arbitrary game.
pub fn solve_kernel_shap<R: Rng + ?Sized>(
    game: &dyn ValueFunction,
    cfg: &KshapConfig,
    rng: &mut R,
) -> Result<KshapSolution, ExplainError> {
    cfg.validate()?;
    let d = game.num_players();
    if d == 0 {
        return Err(ExplainError::EmptyFeatureSpace);
    }
    let required = 2 * d + 2;
    if cfg.budget < required {
        return Err(ExplainError::TooFewSamples {
            budget: cfg.budget,
            required,
            d,
        });
    }

    let endpoints = game.evaluate(&[vec![false; d], vec![true; d]])?;
    let (base_value, full_value) = (endpoints[0], endpoints[1]);
    let delta = full_value - base_value;

    if d == 1 {
        return Ok(KshapSolution {
            phi: vec![delta],
            base_value,
            full_value,
            n_evals: 2,
            exact: true,
            ridge: cfg.ridge,
            ridge_raised: false,
        });
    }

    let proper = if d < usize::BITS as usize - 1 {
        (1usize << d) - 2
    } else {
        usize::MAX
    };
    let plan = if d <= cfg.exact_threshold || proper <= cfg.budget - 2 {
        plan_exact(d)
    } else {
        plan_sampled(d, cfg.budget - 2, rng)
    };
    let values = game.evaluate(&plan.masks)?;

    // φ_last = Δ − Σ_{i<last} φ_i turns the fit into an unconstrained
    // problem over the first d−1 coordinates.
    let last = d - 1;
    let rows: Vec<Vec<f64>> = plan
        .masks
        .iter()
        .map(|m| {
            let z_last = if m[last] { 1.0 } else { 0.0 };
            m[..last]
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 } - z_last)
                .collect()
        })
        .collect();
    let targets: Vec<f64> = plan
        .masks
        .iter()
        .zip(&values)
        .map(|(m, v)| v - base_value - if m[last] { delta } else { 0.0 })
        .collect();
    let fit = weighted_ridge(&rows, &targets, &plan.weights, cfg.ridge, false)
        .ok_or(ExplainError::SingularSystem)?;

    let mut phi = fit.coef;
    let rest: f64 = phi.iter().sum();
    phi.push(delta - rest);

    Ok(KshapSolution {
        phi,
        base_value,
        full_value,
        n_evals: plan.masks.len() + 2,
        exact: plan.exact,
        ridge: fit.ridge,
        ridge_raised: fit.raised,
    })
}

/// Explain the backend's own predicted class.
pub fn explain_kshap<R: Rng + ?Sized>(
    backend: &dyn PredictionBackend,
    instance: &Instance,
    features: &FeatureSpace,
    cfg: &KshapConfig,
    rng: &mut R,
) -> Result<Attribution, ExplainError> {
    let class = predicted_class(backend, instance)?;
    explain_kshap_for_class(backend, instance, features, class, cfg, rng)
}

pub fn explain_kshap_for_class<R: Rng + ?Sized>(
    backend: &dyn PredictionBackend,
    instance: &Instance,
    features: &FeatureSpace,
    class: usize,
    cfg: &KshapConfig,
    rng: &mut R,
) -> Result<Attribution, ExplainError> {
    check_class(backend, class)?;
    let game = TextGame::new(backend, features, class, cfg.batch_size);
    let solution = solve_kernel_shap(&game, cfg, rng)?;
    Ok(Attribution {
        instance_id: instance.id.clone(),
        model: backend.model_name().to_owned(),
        method: Method::Kshap,
        explained_class: class,
        scores: solution.phi,
        features: features.surfaces(),
        diagnostics: Diagnostics {
            n_evals: solution.n_evals,
            r2: None,
            exact: solution.exact,
            ridge: solution.ridge,
            ridge_raised: solution.ridge_raised,
        },
    })
}

/// Lookup-table game, mostly for tests: `values[mask_index]`.
pub fn table_game(d: usize, values: Vec<f64>) -> impl ValueFunction {
    assert_eq!(values.len(), 1 << d);
    crate::attribution::FnGame::new(d, move |mask: &[bool]| values[mask_index(mask)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::FnGame;
    use crate::backend::{AdditiveBackend, Link};
    use crate::seed::instance_rng;
    use crate::text::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn kernel_weights() {
        // d=4: sizes 1 and 3 weigh 3/(4·3)=0.25, size 2 weighs 3/(6·4)=0.125
        assert!((shap_kernel(4, 1) - 0.25).abs() < 1e-15);
        assert!((shap_kernel(4, 2) - 0.125).abs() < 1e-15);
        assert_eq!(shap_kernel(4, 1), shap_kernel(4, 3));
    }

    #[test]
    fn exact_shapley_of_additive_game() {
        let w = [0.5, -0.2, 0.1];
        let game = FnGame::new(3, |m: &[bool]| {
            m.iter().zip(w).filter(|(b, _)| **b).map(|(_, x)| x).sum()
        });
        let phi = exact_shapley(&game).unwrap();
        assert!(close(&phi, &w, 1e-15));
    }

    #[test]
    fn exact_shapley_symmetric_pair() {
        let game = table_game(2, vec![0.0, 0.5, 0.5, 1.0]);
        assert!(close(&exact_shapley(&game).unwrap(), &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn exact_shapley_caps_players() {
        let game = FnGame::new(13, |_: &[bool]| 0.0);
        assert!(matches!(
            exact_shapley(&game),
            Err(ExplainError::TooManyFeatures { d: 13, max: 12 })
        ));
    }

    #[test]
    fn exact_mode_matches_oracle_on_glove_game() {
        // v = 1 iff the coalition holds player 0 and at least one of 1, 2
        let game = FnGame::new(
            3,
            |m: &[bool]| if m[0] && (m[1] || m[2]) { 1.0 } else { 0.0 },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sol = solve_kernel_shap(&game, &KshapConfig::default(), &mut rng).unwrap();
        assert!(sol.exact);
        assert!(close(&sol.phi, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1e-8));
        assert_eq!(sol.n_evals, 8);
    }

    #[test]
    fn single_player() {
        let game = FnGame::new(1, |m: &[bool]| if m[0] { 0.9 } else { 0.3 });
        let sol = solve_kernel_shap(
            &game,
            &KshapConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(close(&sol.phi, &[0.6], 1e-15));
    }

    #[test]
    fn too_few_samples() {
        let game = FnGame::new(30, |_: &[bool]| 0.0);
        let cfg = KshapConfig {
            budget: 61,
            ..KshapConfig::default()
        };
        assert!(matches!(
            solve_kernel_shap(&game, &cfg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(ExplainError::TooFewSamples { required: 62, .. })
        ));
    }

    #[test]
    fn sampled_plan_respects_budget_and_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let plan = plan_sampled(16, 600, &mut rng);
        assert!(!plan.exact);
        assert_eq!(plan.masks.len(), 600);
        let set: std::collections::HashSet<&Vec<bool>> = plan.masks.iter().collect();
        assert_eq!(set.len(), 600, "coalitions are distinct");
        assert!(plan
            .masks
            .iter()
            .all(|m| m.iter().any(|b| *b) && m.iter().any(|b| !b)));
        // sizes 1/15 hold 32% of the kernel mass, so 32 coalitions fit
        // easily; sizes 2/14 would need 240 of the ~144 evaluations their
        // share allows, so they are sampled
        let size = |m: &Vec<bool>| m.iter().filter(|b| **b).count();
        assert_eq!(
            plan.masks
                .iter()
                .filter(|m| size(m) == 1 || size(m) == 15)
                .count(),
            32
        );
        assert!(
            plan.masks
                .iter()
                .filter(|m| size(m) == 2 || size(m) == 14)
                .count()
                < 240
        );
        let enumerated_mass: f64 = plan.weights[..32].iter().sum();
        let total_mass: f64 = plan.weights.iter().sum();
        let exact_total: f64 = (1..16).map(|s| binomial(16, s) * shap_kernel(16, s)).sum();
        assert!((total_mass - exact_total).abs() < 1e-9);
        assert!((enumerated_mass - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_mode_keeps_efficiency() {
        let d = 18;
        let game = FnGame::new(d, |m: &[bool]| {
            let s = m
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(i, _)| (i as f64).sin())
                .sum::<f64>();
            1.0 / (1.0 + (-s).exp())
        });
        let sol = solve_kernel_shap(
            &game,
            &KshapConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!(!sol.exact);
        assert!(sol.n_evals <= 2048);
        let total: f64 = sol.phi.iter().sum();
        assert!((total - (sol.full_value - sol.base_value)).abs() < 1e-9);
    }

    #[test]
    fn additive_backend_attributions_are_weights() {
        let backend = AdditiveBackend::new(
            "add",
            [
                ("red".to_string(), 0.3),
                ("blue".to_string(), -0.6),
                ("zero".to_string(), 0.0),
            ],
            0.1,
            Link::IdentityScore,
        );
        let inst = Instance {
            id: "i".into(),
            text_a: "Red, blue and zero".into(),
            text_b: Some("blue again".into()),
            label: 1,
        };
        let fs = tokenize(&inst).unwrap();
        let mut rng = instance_rng(0, "i", "kshap");
        let attr =
            explain_kshap_for_class(&backend, &inst, &fs, 1, &KshapConfig::default(), &mut rng)
                .unwrap();
        let want: Vec<f64> = fs
            .features()
            .iter()
            .map(|f| backend.weight(&f.surface))
            .collect();
        assert!(close(&attr.scores, &want, 1e-6), "{:?}", attr.scores);
        let zero = fs
            .features()
            .iter()
            .position(|f| f.surface == "zero")
            .unwrap();
        assert!(attr.scores[zero].abs() <= 1e-6);
    }
}
