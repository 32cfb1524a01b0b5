use std::collections::BTreeSet;
use std::fmt::Write as _;

use unicode_segmentation::UnicodeSegmentation;

use super::{AuditReport, InstanceDrilldown};
use crate::attribution::Method;
use crate::calibration::NUM_BINS;

/// Words highlighted per model in the example blocks.
const HIGHLIGHT_WORDS: usize = 3;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(
            c,
            '\\' | '*' | '_' | '`' | '|' | '[' | ']' | '<' | '>' | '#'
        ) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn separator(columns: usize) -> String {
    let mut cells = vec![":---".to_string()];
    cells.extend(std::iter::repeat_n("---:".to_string(), columns - 1));
    row(&cells)
}

fn pair_label(a: &str, b: &str) -> String {
    format!("{} vs {}", escape(a), escape(b))
}

/// Ordered union of `(model_a, model_b)` pairs across reports.
fn pairs(reports: &[AuditReport]) -> Vec<(String, String)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in reports {
        for a in &r.alignment {
            let key = (a.model_a.clone(), a.model_b.clone());
            if seen.insert(key.clone()) {
                out.push(key);
            }
        }
    }
    out
}

fn columns(reports: &[AuditReport]) -> Vec<(usize, Method)> {
    let mut out = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        for &m in &r.config.methods {
            if r.alignment.iter().any(|a| a.method == m) {
                out.push((i, m));
            }
        }
    }
    out
}

/// Mean Jaccard matrix: one row per model pair, one column per dataset and method.
pub fn render_alignment_table(reports: &[AuditReport]) -> String {
    let cols = columns(reports);
    let mut out = String::new();
    if cols.is_empty() {
        return out;
    }
    let k = reports[cols[0].0].config.k;
    let _ = writeln!(out, "Mean Jaccard coefficient of top-{k} feature sets.\n");
    let mut header = vec!["Models".to_string()];
    header.extend(
        cols.iter()
            .map(|&(i, m)| format!("{} {}", escape(&reports[i].dataset.name), m.display_name())),
    );
    out.push_str(&row(&header));
    out.push_str(&separator(header.len()));
    for (a, b) in pairs(reports) {
        let mut cells = vec![pair_label(&a, &b)];
        for &(i, m) in &cols {
            let cell = reports[i]
                .alignment
                .iter()
                .find(|r| r.method == m && r.model_a == a && r.model_b == b)
                .map_or_else(|| "-".to_string(), |r| format!("{:.3}", r.mean_jaccard));
            cells.push(cell);
        }
        out.push_str(&row(&cells));
    }
    out
}

fn render_sweep_tables(out: &mut String, report: &AuditReport) {
    for &method in &report.config.methods {
        let rows: Vec<_> = report
            .alignment
            .iter()
            .filter(|a| a.method == method)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            "#### {}, {}\n",
            escape(&report.dataset.name),
            method.display_name()
        );
        let mut header = vec!["Models".to_string()];
        header.extend((1..=report.config.k_max).map(|k| format!("K={k}")));
        out.push_str(&row(&header));
        out.push_str(&separator(header.len()));
        for a in rows {
            let mut cells = vec![pair_label(&a.model_a, &a.model_b)];
            cells.extend(
                (1..=report.config.k_max)
                    .map(|k| a.sweep.get(&k).map_or("-".into(), |v| format!("{v:.3}"))),
            );
            out.push_str(&row(&cells));
        }
        out.push('\n');
    }
}

fn render_bucket_table(out: &mut String, report: &AuditReport) {
    let mut header = vec!["Softmax bin".to_string()];
    header.extend(report.calibration.iter().map(|c| escape(&c.model)));
    out.push_str(&row(&header));
    out.push_str(&separator(header.len()));
    for b in 0..NUM_BINS {
        let mut cells = vec![report.calibration[0].bins.bins[b].label()];
        cells.extend(
            report
                .calibration
                .iter()
                .map(|c| format!("{:.2}", c.bins.bins[b].percent)),
        );
        out.push_str(&row(&cells));
    }
    let mut footer = vec!["**Average Confidence**".to_string()];
    footer.extend(
        report
            .calibration
            .iter()
            .map(|c| format!("{:.2}", c.average_confidence)),
    );
    out.push_str(&row(&footer));
}

fn render_metrics_table(out: &mut String, reports: &[AuditReport]) {
    let multi = reports.len() > 1;
    let mut header = Vec::new();
    if multi {
        header.push("Dataset".to_string());
    }
    header.extend(["Model", "Accuracy", "ECE", "MCE", "Brier Score"].map(String::from));
    out.push_str(&row(&header));
    out.push_str(&separator(header.len()));
    for r in reports {
        for c in &r.calibration {
            let mut cells = Vec::new();
            if multi {
                cells.push(escape(&r.dataset.name));
            }
            cells.push(escape(&c.model));
            cells.extend([c.accuracy, c.ece, c.mce, c.brier].map(|v| format!("{v:.3}")));
            out.push_str(&row(&cells));
        }
    }
}

/// Original text with every word whose lowercase form is in `marked` in bold.
fn highlight(text: &str, marked: &BTreeSet<String>) -> String {
    text.split_word_bounds()
        .map(|piece| {
            if marked.contains(&piece.to_lowercase()) {
                format!("**{}**", escape(piece))
            } else {
                escape(piece)
            }
        })
        .collect()
}

fn render_example(out: &mut String, report: &AuditReport, ex: &InstanceDrilldown) {
    let label = report
        .dataset
        .class_names
        .get(ex.label)
        .cloned()
        .unwrap_or_else(|| ex.label.to_string());
    let _ = writeln!(
        out,
        "#### Instance `{}` (gold label: {})\n",
        ex.instance_id,
        escape(&label)
    );
    for e in &ex.entries {
        let marked: BTreeSet<String> = e
            .top
            .iter()
            .take(HIGHLIGHT_WORDS)
            .map(|w| w.word.clone())
            .collect();
        let class = report
            .dataset
            .class_names
            .get(e.explained_class)
            .cloned()
            .unwrap_or_else(|| e.explained_class.to_string());
        let _ = write!(
            out,
            "- **{}**, {} (predicts {}): {}",
            escape(&e.model),
            e.method.display_name(),
            escape(&class),
            highlight(&ex.text_a, &marked)
        );
        if let Some(b) = &ex.text_b {
            let _ = write!(out, " / {}", highlight(b, &marked));
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Markdown report for one or more audits, one per dataset.
pub fn render_markdown(reports: &[AuditReport]) -> String {
    let mut out = String::from("# Trust-equivalence audit\n\n");
    if let Some(first) = reports.first() {
        let _ = writeln!(out, "Generated by {} {}.\n", first.toolkit, first.version);
    }

    out.push_str("## Models\n\n");
    out.push_str(&row(&["Dataset", "Model", "Details"].map(String::from)));
    out.push_str(&separator(3));
    for r in reports {
        for m in &r.models {
            let details: Vec<String> = m
                .details
                .iter()
                .chain(&m.metadata)
                .map(|(k, v)| escape(&format!("{k}={v}")))
                .collect();
            out.push_str(&row(&[
                escape(&r.dataset.name),
                escape(&m.name),
                details.join(", "),
            ]));
        }
    }
    out.push('\n');

    let alignment = render_alignment_table(reports);
    if !alignment.is_empty() {
        out.push_str("## Interpretability alignment\n\n");
        out.push_str(&alignment);
        out.push_str("\n### Alignment across K\n\n");
        for r in reports {
            render_sweep_tables(&mut out, r);
        }
    }

    out.push_str("## Confidence buckets\n\nPercentage of instances per confidence bin.\n\n");
    for r in reports {
        let _ = writeln!(out, "### {}\n", escape(&r.dataset.name));
        render_bucket_table(&mut out, r);
        out.push('\n');
    }

    out.push_str("## Calibration metrics\n\n");
    render_metrics_table(&mut out, reports);
    out.push('\n');

    let any_examples = reports
        .iter()
        .any(|r| !r.examples.is_empty() && r.config.markdown_examples > 0);
    if any_examples {
        let _ = writeln!(
            out,
            "## Examples\n\nTop {HIGHLIGHT_WORDS} words per model in bold.\n"
        );
        for r in reports {
            for ex in r.examples.iter().take(r.config.markdown_examples) {
                render_example(&mut out, r, ex);
            }
        }
    }

    out.push_str("## Conventions\n\n");
    if let Some(first) = reports.first() {
        let c = &first.conventions;
        for (k, v) in [
            ("features", &c.features),
            ("masking", &c.masking),
            ("explained class", &c.explained_class),
            ("ranking", &c.ranking),
            ("SHAP variant", &c.shap_variant),
            ("LIME kernel", &c.lime_kernel),
            ("Brier score", &c.brier),
        ] {
            let _ = writeln!(out, "- {k}: {}", escape(v));
        }
        let _ = writeln!(out, "- calibration bins: {}", c.calibration_bins);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn highlight_is_case_insensitive_and_keeps_punctuation() {
        let marked: BTreeSet<String> = ["cheated".to_string()].into();
        assert_eq!(highlight("Was I Cheated ?", &marked), "Was I **Cheated** ?");
    }

    #[test]
    fn escapes_table_breakers() {
        assert_eq!(escape("a|b*c"), "a\\|b\\*c");
    }
}
