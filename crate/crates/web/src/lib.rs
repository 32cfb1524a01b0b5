//! In-browser demo of the audit toolkit.
//!
//! Two bag-of-words models are trained on the bundled question-pair corpus
//! the first time they are needed: one with the full vocabulary and one
//! capped at 50 words. Every exported function returns a JSON string.
//!
//! The `*_json` functions hold the logic and are plain Rust so they can be
//! tested natively; the `#[wasm_bindgen]` wrappers only translate errors.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use trusteq_core::backend::argmax;
use trusteq_core::backend::{train_bow_logistic, BowLogisticModel, TrainConfig};
use trusteq_core::report::{render_ksweep_svg, render_reliability_svg};
use trusteq_core::seed::instance_rng;
use trusteq_core::{
    align_models, explain_kshap, explain_lime, jaccard, tokenize, top_k, AlignOptions, Attribution,
    BrierVariant, CalibrationReport, Dataset, Instance, KshapConfig, LimeConfig, Manifest, Method,
    PredictionBackend, PredictionRecord, TextPair,
};
use wasm_bindgen::prelude::*;

const CORPUS: &str = include_str!("../../../data/mini_pi.jsonl");
const MANIFEST: &str = include_str!("../../../data/mini_pi.manifest.json");
const TRAIN_SEED: u64 = 7;
const CAPPED_VOCAB: usize = 50;

pub struct Models {
    pub dataset: Dataset,
    pub full: BowLogisticModel,
    pub capped: BowLogisticModel,
}

fn build_models() -> Result<Models, String> {
    let manifest: Manifest = serde_json::from_str(MANIFEST).map_err(|e| e.to_string())?;
    let dataset = Dataset::from_jsonl("mini_pi", CORPUS, &manifest).map_err(|e| e.to_string())?;
    let train = |name: &str, vocab_cap| {
        let cfg = TrainConfig {
            epochs: 200,
            seed: TRAIN_SEED,
            vocab_cap,
            ..TrainConfig::default()
        };
        train_bow_logistic(name, &dataset, &cfg).map_err(|e| e.to_string())
    };
    let full = train("bow-full", None)?;
    let capped = train("bow-50", Some(CAPPED_VOCAB))?;
    Ok(Models {
        dataset,
        full,
        capped,
    })
}

/// Trained once per page load.
pub fn models() -> Result<&'static Models, String> {
    static MODELS: OnceLock<Result<Models, String>> = OnceLock::new();
    MODELS
        .get_or_init(build_models)
        .as_ref()
        .map_err(Clone::clone)
}

fn parse_method(method: &str) -> Result<Method, String> {
    match method {
        "lime" => Ok(Method::Lime),
        "kshap" | "shap" => Ok(Method::Kshap),
        other => Err(format!(
            "unknown method {other:?}; use \"lime\" or \"kshap\""
        )),
    }
}

fn explain(
    backend: &dyn PredictionBackend,
    instance: &Instance,
    method: Method,
    seed: u64,
) -> Result<Attribution, String> {
    let features = tokenize(instance).map_err(|e| e.to_string())?;
    let mut rng = instance_rng(seed, &instance.id, method.tag());
    match method {
        Method::Lime => explain_lime(
            backend,
            instance,
            &features,
            &LimeConfig::default(),
            &mut rng,
        ),
        Method::Kshap => explain_kshap(
            backend,
            instance,
            &features,
            &KshapConfig::default(),
            &mut rng,
        ),
    }
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ModelView {
    name: String,
    vocab_size: usize,
    probs: Vec<f64>,
    explained_class: String,
    top: Vec<(String, f64)>,
}

fn view(
    model: &BowLogisticModel,
    instance: &Instance,
    attr: &Attribution,
    k: usize,
    class_names: &[String],
) -> Result<ModelView, String> {
    let probs = model
        .predict_proba(&[TextPair::of(instance)])
        .map_err(|e| e.to_string())?
        .remove(0);
    Ok(ModelView {
        name: model.model_name().to_owned(),
        vocab_size: model.vocab().len(),
        probs,
        explained_class: class_names[attr.explained_class].clone(),
        top: top_k(attr, k)
            .features
            .iter()
            .map(|&i| (attr.features[i].clone(), attr.scores[i]))
            .collect(),
    })
}

/// Explain one question pair with both models and report top-K overlap.
pub fn compare_json(
    text_a: &str,
    text_b: &str,
    method: &str,
    k: usize,
    seed: u64,
) -> Result<String, String> {
    if k == 0 {
        return Err("K must be at least 1".into());
    }
    let method = parse_method(method)?;
    let m = models()?;
    let instance = Instance {
        id: "input".into(),
        text_a: text_a.to_owned(),
        text_b: (!text_b.trim().is_empty()).then(|| text_b.to_owned()),
        label: 0,
    };
    let a = explain(&m.full, &instance, method, seed)?;
    let b = explain(&m.capped, &instance, method, seed)?;
    let overlap = jaccard(&top_k(&a, k), &top_k(&b, k)).map_err(|e| e.to_string())?;
    let names = &m.dataset.class_names;
    let out = json!({
        "method": method.display_name(),
        "k": k,
        "features": a.features.len(),
        "jaccard": overlap,
        "models": [view(&m.full, &instance, &a, k, names)?, view(&m.capped, &instance, &b, k, names)?],
    });
    Ok(out.to_string())
}

/// Synthetic binary predictions whose confidence is `sharpen`ed away from
/// the true probability of being right: 1 is calibrated, above 1 is
/// overconfident, below 1 underconfident.
pub fn synthetic_records(n: usize, sharpen: f64, seed: u64) -> Vec<PredictionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let q: f64 = rng.random_range(0.5..1.0);
            let logit = (q / (1.0 - q)).ln() * sharpen;
            let c = 1.0 / (1.0 + (-logit).exp());
            let correct = rng.random::<f64>() < q;
            PredictionRecord::new(i.to_string(), vec![c, 1.0 - c], usize::from(!correct))
                .expect("label within two classes")
        })
        .collect()
}

/// Calibration metrics and a reliability diagram for a synthetic model next
/// to a calibrated one drawn from the same seed.
pub fn calibration_json(n: usize, sharpen: f64, seed: u64) -> Result<String, String> {
    if n == 0 {
        return Err("need at least one record".into());
    }
    if !(sharpen.is_finite() && sharpen > 0.0) {
        return Err("sharpening must be a positive number".into());
    }
    let report = |name: &str, s| {
        CalibrationReport::from_records(
            name,
            &synthetic_records(n, s, seed),
            BrierVariant::GroundTruth,
        )
        .map_err(|e| e.to_string())
    };
    let reports = [
        report("calibrated", 1.0)?,
        report(&format!("sharpen ×{sharpen}"), sharpen)?,
    ];
    let svg = render_reliability_svg("synthetic", &reports);
    Ok(json!({ "reports": reports, "svg": svg }).to_string())
}

/// Mean Jaccard of the two models at every K up to `k_max` over the first
/// `limit` corpus instances.
pub fn ksweep_json(method: &str, k_max: usize, limit: usize, seed: u64) -> Result<String, String> {
    if k_max == 0 {
        return Err("K max must be at least 1".into());
    }
    let method = parse_method(method)?;
    let m = models()?;
    let instances = &m.dataset.instances[..limit.min(m.dataset.len())];
    if instances.is_empty() {
        return Err("no instances selected".into());
    }
    let mut full = Vec::with_capacity(instances.len());
    let mut capped = Vec::with_capacity(instances.len());
    for inst in instances {
        full.push(explain(&m.full, inst, method, seed)?);
        capped.push(explain(&m.capped, inst, method, seed)?);
    }
    let opts = AlignOptions {
        k: k_max,
        k_max,
        exclude_disagreements: false,
    };
    let report = align_models(&full, &capped, &opts).map_err(|e| e.to_string())?;
    let svg = render_ksweep_svg(
        &format!("{} alignment across K", method.display_name()),
        &[("bow-full vs bow-50".to_string(), &report)],
    );
    let sweep: Vec<(usize, f64)> = report.sweep.iter().map(|(&k, &v)| (k, v)).collect();
    let agree = full
        .iter()
        .zip(&capped)
        .filter(|(a, b)| a.explained_class == b.explained_class)
        .count();
    Ok(json!({
        "method": method.display_name(),
        "instances": instances.len(),
        "same_class": agree,
        "capped_instances": report.capped_instances,
        "sweep": sweep,
        "svg": svg,
    })
    .to_string())
}

/// Predicted class and probabilities of both models, for the input preview.
pub fn predict_json(text_a: &str, text_b: &str) -> Result<String, String> {
    let m = models()?;
    let pair = TextPair {
        a: text_a.to_owned(),
        b: (!text_b.trim().is_empty()).then(|| text_b.to_owned()),
    };
    let mut out = Vec::new();
    for model in [&m.full, &m.capped] {
        let probs = model
            .predict_proba(std::slice::from_ref(&pair))
            .map_err(|e| e.to_string())?
            .remove(0);
        out.push(json!({
            "name": model.model_name(),
            "class": m.dataset.class_names[argmax(&probs)],
            "probs": probs,
        }));
    }
    Ok(serde_json::Value::Array(out).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(
    text_a: &str,
    text_b: &str,
    method: &str,
    k: usize,
    seed: u64,
) -> Result<String, JsError> {
    js(compare_json(text_a, text_b, method, k, seed))
}

#[wasm_bindgen]
pub fn calibration(n: usize, sharpen: f64, seed: u64) -> Result<String, JsError> {
    js(calibration_json(n, sharpen, seed))
}

#[wasm_bindgen]
pub fn ksweep(method: &str, k_max: usize, limit: usize, seed: u64) -> Result<String, JsError> {
    js(ksweep_json(method, k_max, limit, seed))
}

#[wasm_bindgen]
pub fn predict(text_a: &str, text_b: &str) -> Result<String, JsError> {
    js(predict_json(text_a, text_b))
}
