use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{render_ksweep_svg, render_markdown, render_reliability_svg, AuditError, AuditReport};
use crate::attribution::Attribution;
use crate::dataset::DatasetError;

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub report_json: PathBuf,
    pub report_md: PathBuf,
    pub attributions: PathBuf,
    pub figures: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AuditError + '_ {
    move |e| AuditError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), AuditError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Keep file names portable whatever the dataset is called.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_attributions(path: &Path, attributions: &[Attribution]) -> Result<(), AuditError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for a in attributions {
        let line = serde_json::to_string(a).map_err(|e| AuditError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_attributions(path: &Path) -> Result<Vec<Attribution>, AuditError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                AuditError::Dataset(DatasetError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

/// Write the JSON and Markdown reports, the attribution stream and figures.
pub fn write_outputs(dir: &Path, report: &AuditReport) -> Result<OutputFiles, AuditError> {
    let figs = dir.join("figs");
    fs::create_dir_all(&figs).map_err(io_err(&figs))?;

    let report_json = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).map_err(|e| AuditError::Io {
        path: report_json.clone(),
        message: e.to_string(),
    })?;
    json.push('\n');
    write_file(&report_json, &json)?;

    let report_md = dir.join("report.md");
    write_file(&report_md, &render_markdown(std::slice::from_ref(report)))?;

    let attributions = dir.join("attributions.jsonl");
    write_attributions(&attributions, &report.attributions)?;

    let mut figures = Vec::new();
    let reliability = figs.join(format!(
        "reliability_{}.svg",
        file_stem(&report.dataset.name)
    ));
    write_file(
        &reliability,
        &render_reliability_svg(&report.dataset.name, &report.calibration),
    )?;
    figures.push(reliability);

    for &method in &report.config.methods {
        let series: Vec<(String, _)> = report
            .alignment
            .iter()
            .filter(|a| a.method == method)
            .map(|a| (format!("{} vs {}", a.model_a, a.model_b), a))
            .collect();
        if series.is_empty() {
            continue;
        }
        let path = figs.join(format!("ksweep_{}.svg", method.tag()));
        let title = format!(
            "{} alignment across K: {}",
            method.display_name(),
            report.dataset.name
        );
        write_file(&path, &render_ksweep_svg(&title, &series))?;
        figures.push(path);
    }

    Ok(OutputFiles {
        report_json,
        report_md,
        attributions,
        figures,
    })
}
