use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::alignment::AlignOptions;
use crate::attribution::Method;
use crate::backend::{Link, TrainConfig};
use crate::calibration::BrierVariant;
use crate::dataset::Manifest;
use crate::kshap::KshapConfig;
use crate::lime::LimeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestSpec {
    Path(PathBuf),
    Inline(Manifest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Defaults to the file stem of `path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub path: PathBuf,
    pub manifest: ManifestSpec,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_link() -> Link {
    Link::Logistic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Bag-of-words logistic regression trained at startup.
    BuiltinLr {
        /// Training data; defaults to the audited dataset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_path: Option<PathBuf>,
        #[serde(default)]
        train: TrainConfig,
    },
    Additive {
        weights: BTreeMap<String, f64>,
        #[serde(default)]
        bias: f64,
        #[serde(default = "default_link")]
        link: Link,
    },
    Subprocess {
        command: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    Tcp {
        address: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub backend: BackendSpec,
    /// Free-form pass-through (parameter count, latency, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Lime, Method::Kshap]
}

fn default_k() -> usize {
    10
}

fn default_probes() -> usize {
    5
}

fn default_examples() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub dataset: DatasetSpec,
    pub models: Vec<ModelSpec>,
    pub reference_model: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_k")]
    pub k_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_limit: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lime: LimeConfig,
    #[serde(default)]
    pub kshap: KshapConfig,
    /// Also align every pair of non-reference models.
    #[serde(default)]
    pub all_pairs: bool,
    #[serde(default)]
    pub exclude_disagreements: bool,
    #[serde(default)]
    pub brier_variant: BrierVariant,
    /// Instances used for the repeat-probe purity check of each backend.
    #[serde(default = "default_probes")]
    pub purity_probes: usize,
    /// Instances rendered as highlighted examples in the Markdown report.
    #[serde(default = "default_examples")]
    pub markdown_examples: usize,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl AuditConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, AuditError> {
        let mut cfg: AuditConfig = serde_json::from_str(text)
            .map_err(|e| AuditError::Config(format!("malformed config: {e}")))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AuditError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AuditError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        let fail = |msg: String| Err(AuditError::Config(msg));
        if self.models.is_empty() {
            return fail("no models configured".into());
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return fail(format!("duplicate model name {:?}", m.name));
            }
            if let BackendSpec::Subprocess { command, .. } = &m.backend {
                if command.is_empty() {
                    return fail(format!("model {:?}: empty command", m.name));
                }
            }
        }
        if !names.contains(self.reference_model.as_str()) {
            return fail(format!(
                "reference model {:?} is not among the models",
                self.reference_model
            ));
        }
        if self.methods.is_empty() {
            return fail("methods must not be empty".into());
        }
        if self.k == 0 || self.k > self.k_max {
            return fail(format!(
                "need 1 <= k <= k_max, got k={} k_max={}",
                self.k, self.k_max
            ));
        }
        self.lime
            .validate()
            .map_err(|e| AuditError::Config(format!("lime: {e}")))?;
        self.kshap
            .validate()
            .map_err(|e| AuditError::Config(format!("kshap: {e}")))?;
        Ok(())
    }

    pub fn align_options(&self) -> AlignOptions {
        AlignOptions {
            k: self.k,
            k_max: self.k_max,
            exclude_disagreements: self.exclude_disagreements,
        }
    }

    /// Model pairs to align: reference against every other model, then (with
    /// `all_pairs`) every remaining pair in configuration order. A lone model
    /// is paired with itself.
    pub fn model_pairs(&self) -> Vec<(String, String)> {
        let others: Vec<&str> = self
            .models
            .iter()
            .map(|m| m.name.as_str())
            .filter(|n| *n != self.reference_model)
            .collect();
        if others.is_empty() {
            return vec![(self.reference_model.clone(), self.reference_model.clone())];
        }
        let mut pairs: Vec<(String, String)> = others
            .iter()
            .map(|o| (self.reference_model.clone(), o.to_string()))
            .collect();
        if self.all_pairs {
            for (i, a) in others.iter().enumerate() {
                for b in &others[i + 1..] {
                    pairs.push((a.to_string(), b.to_string()));
                }
            }
        }
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"path": "d.jsonl", "manifest": {"num_classes": 2, "class_names": ["a", "b"]}},
        "models": [
            {"name": "big", "backend": {"type": "builtin-lr"}},
            {"name": "small", "backend": {"type": "builtin-lr", "train": {"vocab_cap": 50}}},
            {"name": "ext", "backend": {"type": "subprocess", "command": ["python", "bridge.py"]}}
        ],
        "reference_model": "big"
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = AuditConfig::from_json(MINIMAL, "/tmp/cfg").unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.k_max, 10);
        assert_eq!(cfg.methods, vec![Method::Lime, Method::Kshap]);
        assert_eq!(cfg.lime.n_samples, 1000);
        assert_eq!(cfg.kshap.exact_threshold, 13);
        assert_eq!(
            cfg.resolve(Path::new("d.jsonl")),
            PathBuf::from("/tmp/cfg/d.jsonl")
        );
        match &cfg.models[1].backend {
            BackendSpec::BuiltinLr { train, .. } => assert_eq!(train.vocab_cap, Some(50)),
            other => panic!("{other:?}"),
        }
        match &cfg.models[2].backend {
            BackendSpec::Subprocess { timeout_ms, .. } => assert_eq!(*timeout_ms, 30_000),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pairs() {
        let mut cfg = AuditConfig::from_json(MINIMAL, "").unwrap();
        assert_eq!(
            cfg.model_pairs(),
            vec![("big".into(), "small".into()), ("big".into(), "ext".into())]
        );
        cfg.all_pairs = true;
        assert_eq!(
            cfg.model_pairs().last().unwrap(),
            &("small".to_string(), "ext".to_string())
        );
        cfg.models.truncate(1);
        assert_eq!(cfg.model_pairs(), vec![("big".into(), "big".into())]);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_ref = MINIMAL.replace(
            "\"reference_model\": \"big\"",
            "\"reference_model\": \"huge\"",
        );
        assert!(matches!(
            AuditConfig::from_json(&bad_ref, ""),
            Err(AuditError::Config(_))
        ));
        let bad_k = MINIMAL.replace(
            "\"reference_model\": \"big\"",
            "\"reference_model\": \"big\", \"k\": 11",
        );
        assert!(matches!(
            AuditConfig::from_json(&bad_k, ""),
            Err(AuditError::Config(_))
        ));
        let no_methods = MINIMAL.replace(
            "\"reference_model\": \"big\"",
            "\"reference_model\": \"big\", \"methods\": []",
        );
        assert!(matches!(
            AuditConfig::from_json(&no_methods, ""),
            Err(AuditError::Config(_))
        ));
        let typo = MINIMAL.replace("\"reference_model\"", "\"refrence_model\"");
        assert!(matches!(
            AuditConfig::from_json(&typo, ""),
            Err(AuditError::Config(_))
        ));
    }
}
