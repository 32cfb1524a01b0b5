//! Labeled instances and JSONL dataset ingestion.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange {
        line: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("line {line}: duplicate instance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: text_a is empty")]
    EmptyText { line: usize },
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

/// One labeled datapoint, optionally a sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text_a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_b: Option<String>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.num_classes < 2 {
            return Err(DatasetError::Manifest(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.class_names.len() != self.num_classes {
            return Err(DatasetError::Manifest(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let raw = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        let manifest: Manifest =
            serde_json::from_str(&raw).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Validate a list of instances against a manifest.
    pub fn new(
        name: impl Into<String>,
        manifest: &Manifest,
        instances: Vec<Instance>,
    ) -> Result<Self, DatasetError> {
        manifest.validate()?;
        let mut seen = HashSet::new();
        for (i, instance) in instances.iter().enumerate() {
            check_instance(instance, i + 1, manifest.num_classes, &mut seen)?;
        }
        Ok(Self {
            name: name.into(),
            num_classes: manifest.num_classes,
            class_names: manifest.class_names.clone(),
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Parse JSONL text. Blank lines are skipped but still counted for line numbers.
    pub fn from_jsonl(name: &str, text: &str, manifest: &Manifest) -> Result<Self, DatasetError> {
        manifest.validate()?;
        let mut seen = HashSet::new();
        let mut instances = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let instance: Instance =
                serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            check_instance(&instance, line_no, manifest.num_classes, &mut seen)?;
            instances.push(instance);
        }
        Ok(Self {
            name: name.to_owned(),
            num_classes: manifest.num_classes,
            class_names: manifest.class_names.clone(),
            instances,
        })
    }
}

fn check_instance(
    instance: &Instance,
    line: usize,
    num_classes: usize,
    seen: &mut HashSet<String>,
) -> Result<(), DatasetError> {
    if instance.label >= num_classes {
        return Err(DatasetError::LabelOutOfRange {
            line,
            label: instance.label,
            num_classes,
        });
    }
    if instance.text_a.trim().is_empty() {
        return Err(DatasetError::EmptyText { line });
    }
    if !seen.insert(instance.id.clone()) {
        return Err(DatasetError::DuplicateId {
            line,
            id: instance.id.clone(),
        });
    }
    Ok(())
}

/// Load a JSONL dataset; the dataset name defaults to the file stem.
pub fn load_dataset(path: &Path, manifest: &Manifest) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned());
    Dataset::from_jsonl(&name, &text, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> Manifest {
        Manifest {
            num_classes: 2,
            class_names: vec!["no".into(), "yes".into()],
        }
    }

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.jsonl");
        fs::write(
            &path,
            r#"{"id":"1","text_a":"good movie","label":1}
{"id":"2","text_a":"bad movie","text_b":null,"label":0}
{"id":"3","text_a":"is it good?","text_b":"was it bad?","label":0}
"#,
        )
        .unwrap();
        let ds = load_dataset(&path, &binary()).unwrap();
        assert_eq!(ds.name, "toy");
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.instances[2].text_b.as_deref(), Some("was it bad?"));
        assert_eq!(ds.instances[1].text_b, None);
        assert_eq!(ds.instances[0].id, "1");
    }

    #[test]
    fn label_out_of_range_reports_line() {
        let three = Manifest {
            num_classes: 3,
            class_names: vec!["e".into(), "n".into(), "c".into()],
        };
        let text = "{\"id\":\"a\",\"text_a\":\"x\",\"label\":0}\n{\"id\":\"b\",\"text_a\":\"y\",\"label\":5}\n";
        match Dataset::from_jsonl("t", text, &three) {
            Err(DatasetError::LabelOutOfRange { line, label, .. }) => {
                assert_eq!((line, label), (2, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_valid() {
        let ds = Dataset::from_jsonl("t", "", &binary()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn malformed_line_reports_line() {
        let text = "{\"id\":\"a\",\"text_a\":\"x\",\"label\":0}\n\n{not json\n";
        assert!(matches!(
            Dataset::from_jsonl("t", text, &binary()),
            Err(DatasetError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn rejects_duplicates_and_blank_text() {
        let dup = "{\"id\":\"a\",\"text_a\":\"x\",\"label\":0}\n{\"id\":\"a\",\"text_a\":\"y\",\"label\":1}";
        assert!(matches!(
            Dataset::from_jsonl("t", dup, &binary()),
            Err(DatasetError::DuplicateId { line: 2, .. })
        ));
        let blank = "{\"id\":\"a\",\"text_a\":\"   \",\"label\":0}";
        assert!(matches!(
            Dataset::from_jsonl("t", blank, &binary()),
            Err(DatasetError::EmptyText { line: 1 })
        ));
    }

    #[test]
    fn manifest_must_match_class_names() {
        let bad = Manifest {
            num_classes: 3,
            class_names: vec!["a".into()],
        };
        assert!(matches!(bad.validate(), Err(DatasetError::Manifest(_))));
    }
}
