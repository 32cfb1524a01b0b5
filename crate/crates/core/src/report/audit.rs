use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use log::{error, info};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AuditConfig, AuditError, BackendSpec, ManifestSpec};
use crate::alignment::{align_models, ranking, AlignmentReport};
use crate::attribution::{Attribution, Method};
use crate::backend::{
    argmax, probe_purity, train_bow_logistic, validate_rows, AdditiveBackend, PredictionBackend,
    ProtocolClient,
};
use crate::calibration::{CalibrationReport, PredictionRecord};
use crate::dataset::{load_dataset, Dataset, Instance, Manifest};
use crate::kshap::explain_kshap_for_class;
use crate::lime::explain_lime_for_class;
use crate::seed::instance_rng;
use crate::text::{tokenize, TextPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for per-instance work.
    pub jobs: usize,
    /// Compute attributions and alignment; `false` audits calibration only.
    pub explain: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            explain: true,
        }
    }
}

/// Choices that shape the numbers but are not hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub features: String,
    pub masking: String,
    pub explained_class: String,
    pub ranking: String,
    pub shap_variant: String,
    pub lime_kernel: String,
    pub calibration_bins: usize,
    pub brier: String,
}

impl Conventions {
    fn for_config(cfg: &AuditConfig) -> Self {
        Self {
            features: "unique lowercase words over both segments; masking a feature removes every occurrence".into(),
            masking: "deletion, unless the backend asks for a mask token".into(),
            explained_class: "each model's own predicted class".into(),
            ranking: "absolute score, ties broken by feature order".into(),
            shap_variant: "kernel SHAP, empty-text baseline, efficiency constraint eliminated exactly".into(),
            lime_kernel: "sqrt(exp(-D^2/width^2)), D = 100 x cosine distance to the unmasked instance".into(),
            calibration_bins: crate::calibration::NUM_BINS,
            brier: match cfg.brier_variant {
                crate::calibration::BrierVariant::GroundTruth => "mean (p_true - 1)^2".into(),
                crate::calibration::BrierVariant::Multiclass => "mean sum_c (p_c - 1[c=y])^2".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPredictions {
    pub model: String,
    pub records: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopWord {
    pub word: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillEntry {
    pub model: String,
    pub method: Method,
    #[serde(rename = "class")]
    pub explained_class: usize,
    pub top: Vec<TopWord>,
}

/// One instance with each model's most influential words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDrilldown {
    pub instance_id: String,
    pub text_a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_b: Option<String>,
    pub label: usize,
    pub entries: Vec<DrillEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub toolkit: String,
    pub version: String,
    pub config: AuditConfig,
    pub conventions: Conventions,
    pub dataset: DatasetSummary,
    pub models: Vec<ModelSummary>,
    pub calibration: Vec<CalibrationReport>,
    pub alignment: Vec<AlignmentReport>,
    pub examples: Vec<InstanceDrilldown>,
    pub predictions: Vec<ModelPredictions>,
    pub attributions: Vec<Attribution>,
}

pub struct BuiltModel {
    pub backend: Arc<dyn PredictionBackend>,
    pub details: BTreeMap<String, serde_json::Value>,
}

fn resolve_manifest(cfg: &AuditConfig) -> Result<Manifest, AuditError> {
    match &cfg.dataset.manifest {
        ManifestSpec::Inline(m) => {
            m.validate()?;
            Ok(m.clone())
        }
        ManifestSpec::Path(p) => Ok(Manifest::load(&cfg.resolve(p))?),
    }
}

/// Full dataset as configured (before `sample_limit`).
pub fn load_configured_dataset(cfg: &AuditConfig) -> Result<Dataset, AuditError> {
    let manifest = resolve_manifest(cfg)?;
    let mut dataset = load_dataset(&cfg.resolve(&cfg.dataset.path), &manifest)?;
    if let Some(name) = &cfg.dataset.name {
        dataset.name = name.clone();
    }
    Ok(dataset)
}

/// Instantiate every configured backend, in configuration order.
pub fn build_backends(cfg: &AuditConfig, dataset: &Dataset) -> Result<Vec<BuiltModel>, AuditError> {
    let mut built = Vec::with_capacity(cfg.models.len());
    for spec in &cfg.models {
        let name = spec.name.clone();
        let backend_err = |source| AuditError::Backend {
            model: name.clone(),
            instance: None,
            source,
        };
        let mut details = BTreeMap::new();
        let backend: Arc<dyn PredictionBackend> = match &spec.backend {
            BackendSpec::BuiltinLr { train_path, train } => {
                let train_set = match train_path {
                    Some(p) => load_dataset(&cfg.resolve(p), &dataset.manifest())?,
                    None => dataset.clone(),
                };
                let model =
                    train_bow_logistic(name.clone(), &train_set, train).map_err(|source| {
                        AuditError::Train {
                            model: name.clone(),
                            source,
                        }
                    })?;
                details.insert("vocab_size".into(), model.vocab().len().into());
                details.insert("backend".into(), "builtin-lr".into());
                Arc::new(model)
            }
            BackendSpec::Additive {
                weights,
                bias,
                link,
            } => {
                details.insert("backend".into(), "additive".into());
                Arc::new(AdditiveBackend::new(
                    name.clone(),
                    weights.iter().map(|(w, v)| (w.clone(), *v)),
                    *bias,
                    *link,
                ))
            }
            BackendSpec::Subprocess {
                command,
                timeout_ms,
            } => {
                let client = ProtocolClient::spawn(
                    name.clone(),
                    command,
                    Duration::from_millis(*timeout_ms),
                )
                .map_err(backend_err)?;
                details.insert("backend".into(), "subprocess".into());
                if let Some(remote) = &client.handshake_info().model_name {
                    details.insert("remote_model".into(), remote.clone().into());
                }
                Arc::new(client)
            }
            BackendSpec::Tcp {
                address,
                timeout_ms,
            } => {
                let client = ProtocolClient::connect(
                    name.clone(),
                    address,
                    Duration::from_millis(*timeout_ms),
                )
                .map_err(backend_err)?;
                details.insert("backend".into(), "tcp".into());
                if let Some(remote) = &client.handshake_info().model_name {
                    details.insert("remote_model".into(), remote.clone().into());
                }
                Arc::new(client)
            }
        };
        if backend.num_classes() != dataset.num_classes {
            return Err(AuditError::Config(format!(
                "model {:?} has {} classes, dataset has {}",
                spec.name,
                backend.num_classes(),
                dataset.num_classes
            )));
        }
        built.push(BuiltModel { backend, details });
    }
    Ok(built)
}

fn check_purity(
    cfg: &AuditConfig,
    dataset: &Dataset,
    models: &[BuiltModel],
) -> Result<(), AuditError> {
    let n = dataset.len();
    let take = cfg.purity_probes.min(n);
    if take == 0 {
        return Ok(());
    }
    let mut rng = instance_rng(cfg.seed, "", "purity-probe");
    let mut picks: Vec<usize> = index::sample(&mut rng, n, take).into_vec();
    picks.sort_unstable();
    let texts: Vec<TextPair> = picks
        .iter()
        .map(|&i| TextPair::of(&dataset.instances[i]))
        .collect();
    for (spec, model) in cfg.models.iter().zip(models) {
        probe_purity(model.backend.as_ref(), &texts).map_err(|source| AuditError::Backend {
            model: spec.name.clone(),
            instance: None,
            source,
        })?;
    }
    Ok(())
}

struct InstanceResult {
    probs: Vec<Vec<f64>>,
    attributions: Vec<Attribution>,
}

fn process_instance(
    cfg: &AuditConfig,
    models: &[BuiltModel],
    num_classes: usize,
    instance: &Instance,
    explain: bool,
) -> Result<InstanceResult, AuditError> {
    let features = if explain {
        Some(tokenize(instance)?)
    } else {
        None
    };
    let mut probs = Vec::with_capacity(models.len());
    let mut attributions = Vec::new();
    for (spec, model) in cfg.models.iter().zip(models) {
        let backend = model.backend.as_ref();
        let backend_err = |source| AuditError::Backend {
            model: spec.name.clone(),
            instance: Some(instance.id.clone()),
            source,
        };
        let rows = backend
            .predict_proba(&[TextPair::of(instance)])
            .map_err(backend_err)?;
        validate_rows(&rows, num_classes).map_err(backend_err)?;
        let row = rows.into_iter().next().ok_or_else(|| {
            backend_err(crate::backend::BackendError::ProtocolViolation(
                "no row returned".into(),
            ))
        })?;
        let class = argmax(&row);
        probs.push(row);

        let Some(features) = &features else { continue };
        for &method in &cfg.methods {
            let mut rng = instance_rng(cfg.seed, &instance.id, method.tag());
            let result = match method {
                Method::Lime => {
                    explain_lime_for_class(backend, instance, features, class, &cfg.lime, &mut rng)
                }
                Method::Kshap => explain_kshap_for_class(
                    backend, instance, features, class, &cfg.kshap, &mut rng,
                ),
            };
            let mut attr = result.map_err(|source| AuditError::Explain {
                model: spec.name.clone(),
                instance: instance.id.clone(),
                source,
            })?;
            attr.model = spec.name.clone();
            attributions.push(attr);
        }
    }
    Ok(InstanceResult {
        probs,
        attributions,
    })
}

/// Align every configured model pair for every method from stored attributions.
pub fn align_attributions(
    cfg: &AuditConfig,
    attributions: &[Attribution],
) -> Result<Vec<AlignmentReport>, AuditError> {
    let mut reports = Vec::new();
    for &method in &cfg.methods {
        for (a, b) in cfg.model_pairs() {
            let side = |model: &str| -> Vec<Attribution> {
                attributions
                    .iter()
                    .filter(|x| x.method == method && x.model == model)
                    .cloned()
                    .collect()
            };
            let (left, right) = (side(&a), side(&b));
            if left.is_empty() && right.is_empty() {
                continue;
            }
            let mut report = align_models(&left, &right, &cfg.align_options())?;
            report.model_a = a.clone();
            report.model_b = b.clone();
            report.method = method;
            reports.push(report);
        }
    }
    Ok(reports)
}

fn drilldown(instance: &Instance, attributions: &[Attribution], k: usize) -> InstanceDrilldown {
    let entries = attributions
        .iter()
        .map(|a| DrillEntry {
            model: a.model.clone(),
            method: a.method,
            explained_class: a.explained_class,
            top: ranking(&a.scores)
                .into_iter()
                .take(k)
                .map(|i| TopWord {
                    word: a.features[i].clone(),
                    score: a.scores[i],
                })
                .collect(),
        })
        .collect();
    InstanceDrilldown {
        instance_id: instance.id.clone(),
        text_a: instance.text_a.clone(),
        text_b: instance.text_b.clone(),
        label: instance.label,
        entries,
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, AuditError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AuditError::Config(format!("cannot start {jobs} workers: {e}")))
}

/// predict → attribute → align → calibrate.
///
/// Any per-instance failure aborts the whole audit; no partial report is
/// produced.
pub fn run_audit(cfg: &AuditConfig, opts: &RunOptions) -> Result<AuditReport, AuditError> {
    cfg.validate()?;
    let full = load_configured_dataset(cfg)?;
    let mut dataset = full.clone();
    if let Some(limit) = cfg.sample_limit {
        dataset.instances.truncate(limit);
    }
    if dataset.is_empty() {
        return Err(AuditError::EmptyDataset);
    }

    let models = build_backends(cfg, &full)?;
    check_purity(cfg, &dataset, &models)?;
    info!(
        "auditing {} instances of {:?} with {} models on {} workers",
        dataset.len(),
        dataset.name,
        models.len(),
        opts.jobs
    );

    let pool = thread_pool(opts.jobs)?;
    let results: Vec<InstanceResult> = pool.install(|| {
        dataset
            .instances
            .par_iter()
            .map(|inst| {
                process_instance(cfg, &models, dataset.num_classes, inst, opts.explain).inspect_err(
                    |e| {
                        error!("aborting audit at instance {:?}: {e}", inst.id);
                    },
                )
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut predictions: Vec<ModelPredictions> = cfg
        .models
        .iter()
        .map(|m| ModelPredictions {
            model: m.name.clone(),
            records: Vec::with_capacity(dataset.len()),
        })
        .collect();
    for (inst, result) in dataset.instances.iter().zip(&results) {
        for (slot, probs) in predictions.iter_mut().zip(&result.probs) {
            slot.records
                .push(PredictionRecord::new(&inst.id, probs.clone(), inst.label)?);
        }
    }

    let calibration = predictions
        .iter()
        .map(|p| CalibrationReport::from_records(&p.model, &p.records, cfg.brier_variant))
        .collect::<Result<Vec<_>, _>>()?;

    let attributions: Vec<Attribution> = results
        .iter()
        .flat_map(|r| r.attributions.iter().cloned())
        .collect();
    let alignment = if opts.explain {
        align_attributions(cfg, &attributions)?
    } else {
        Vec::new()
    };
    let examples = if opts.explain {
        dataset
            .instances
            .iter()
            .zip(&results)
            .map(|(inst, r)| drilldown(inst, &r.attributions, cfg.k))
            .collect()
    } else {
        Vec::new()
    };

    let models_summary = cfg
        .models
        .iter()
        .zip(&models)
        .zip(&calibration)
        .map(|((spec, built), cal)| ModelSummary {
            name: spec.name.clone(),
            accuracy: cal.accuracy,
            details: built.details.clone(),
            metadata: spec.metadata.clone(),
        })
        .collect();

    Ok(AuditReport {
        toolkit: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        conventions: Conventions::for_config(cfg),
        dataset: DatasetSummary {
            name: dataset.name.clone(),
            num_classes: dataset.num_classes,
            class_names: dataset.class_names.clone(),
            instances: dataset.len(),
        },
        models: models_summary,
        calibration,
        alignment,
        examples,
        predictions,
        attributions,
    })
}

/// Explain a single instance with every configured model and method.
pub fn explain_instance(
    cfg: &AuditConfig,
    instance_id: &str,
) -> Result<InstanceDrilldown, AuditError> {
    cfg.validate()?;
    let dataset = load_configured_dataset(cfg)?;
    let instance = dataset
        .get(instance_id)
        .cloned()
        .ok_or_else(|| AuditError::UnknownInstance(instance_id.to_string()))?;
    let models = build_backends(cfg, &dataset)?;
    let result = process_instance(cfg, &models, dataset.num_classes, &instance, true)?;
    Ok(drilldown(&instance, &result.attributions, cfg.k))
}
