//! Quick numerical checks against closed-form answers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trusteq_core::backend::{AdditiveBackend, Link};
use trusteq_core::calibration::{bucket, ece, mce};
use trusteq_core::kshap::{exact_shapley, solve_kernel_shap, table_game};
use trusteq_core::lime::explain_lime_for_class;
use trusteq_core::{tokenize, Instance, KshapConfig, LimeConfig, PredictionRecord};

type Check = fn(&mut ChaCha8Rng) -> Result<(), String>;

fn kernel_shap_matches_exact(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let cfg = KshapConfig {
        exact_threshold: 8,
        ..KshapConfig::default()
    };
    for d in 3..=8 {
        let table: Vec<f64> = (0..1usize << d)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let game = table_game(d, table);
        let exact = exact_shapley(&game).map_err(|e| e.to_string())?;
        let sol = solve_kernel_shap(&game, &cfg, rng).map_err(|e| e.to_string())?;
        let worst = exact
            .iter()
            .zip(&sol.phi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if worst > 1e-6 {
            return Err(format!("d={d}: max deviation {worst:e}"));
        }
    }
    Ok(())
}

fn sampled_kernel_shap_is_efficient(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let d = 16;
    let table: Vec<f64> = (0..1usize << d)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let game = table_game(d, table);
    let cfg = KshapConfig {
        exact_threshold: 0,
        budget: 512,
        ..KshapConfig::default()
    };
    let sol = solve_kernel_shap(&game, &cfg, rng).map_err(|e| e.to_string())?;
    let gap = sol.phi.iter().sum::<f64>() - (sol.full_value - sol.base_value);
    if gap.abs() > 1e-6 {
        return Err(format!("efficiency gap {gap:e}"));
    }
    Ok(())
}

fn lime_recovers_additive_weights(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let words = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"];
    let weights: Vec<(String, f64)> = words
        .iter()
        .map(|w| (w.to_string(), rng.random_range(-1.0..1.0)))
        .collect();
    let backend = AdditiveBackend::new("additive", weights.clone(), 0.0, Link::IdentityScore);
    let instance = Instance {
        id: "selftest".into(),
        text_a: words.join(" "),
        text_b: None,
        label: 1,
    };
    let fs = tokenize(&instance).map_err(|e| e.to_string())?;
    let cfg = LimeConfig {
        exhaustive: true,
        kernel_width: f64::INFINITY,
        ridge: 1e-9,
        ..LimeConfig::default()
    };
    let attr = explain_lime_for_class(&backend, &instance, &fs, 1, &cfg, rng)
        .map_err(|e| e.to_string())?;
    for ((word, w), got) in weights.iter().zip(&attr.scores) {
        if (w - got).abs() > 1e-4 {
            return Err(format!("{word}: expected {w}, got {got}"));
        }
    }
    Ok(())
}

fn calibration_fixture(_: &mut ChaCha8Rng) -> Result<(), String> {
    let rec = |id: &str, p: f64, label| PredictionRecord::new(id, vec![p, 1.0 - p], label).unwrap();
    let records = [
        rec("a", 0.8, 0),
        rec("b", 0.8, 0),
        rec("c", 0.8, 0),
        rec("d", 0.6, 1),
    ];
    let stats = bucket(&records).map_err(|e| e.to_string())?;
    let (e, m) = (ece(&stats), mce(&stats));
    if (e - 0.3).abs() > 1e-12 || (m - 0.6).abs() > 1e-12 {
        return Err(format!("ECE {e}, MCE {m}"));
    }
    Ok(())
}

/// Print one line per check; true when all pass.
pub fn run(seed: u64) -> bool {
    let checks: [(&str, Check); 4] = [
        (
            "kernel SHAP exact mode equals brute-force Shapley",
            kernel_shap_matches_exact,
        ),
        (
            "sampled kernel SHAP satisfies efficiency",
            sampled_kernel_shap_is_efficient,
        ),
        (
            "LIME recovers additive weights",
            lime_recovers_additive_weights,
        ),
        ("ECE/MCE fixture", calibration_fixture),
    ];
    let mut ok = true;
    for (name, check) in checks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match check(&mut rng) {
            Ok(()) => println!("PASS  {name}"),
            Err(why) => {
                ok = false;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    ok
}
