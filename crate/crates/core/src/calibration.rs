//! Confidence buckets, ECE/MCE/Brier and reliability-diagram points.
//!
//! Confidence is the maximum class probability. Records fall into ten
//! equal-width bins `[i/10, (i+1)/10)`, the last bin closed at 1.0. A bin's
//! calibration error is `|accuracy − mean confidence|` over its members.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::argmax;

pub const NUM_BINS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalibrationError {
    #[error("no prediction records")]
    EmptyInput,
    #[error("record {0:?}: label out of range")]
    LabelOutOfRange(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub probs: Vec<f64>,
    pub label: usize,
    pub predicted: usize,
    pub confidence: f64,
    pub correct: bool,
    pub p_true: f64,
}

impl PredictionRecord {
    pub fn new(
        instance_id: impl Into<String>,
        probs: Vec<f64>,
        label: usize,
    ) -> Result<Self, CalibrationError> {
        let instance_id = instance_id.into();
        if label >= probs.len() {
            return Err(CalibrationError::LabelOutOfRange(instance_id));
        }
        let predicted = argmax(&probs);
        Ok(Self {
            confidence: probs[predicted],
            p_true: probs[label],
            correct: predicted == label,
            predicted,
            label,
            probs,
            instance_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub percent: f64,
    /// Zero for empty bins.
    pub mean_confidence: f64,
    /// Zero for empty bins.
    pub accuracy: f64,
}

impl Bin {
    pub fn gap(&self) -> f64 {
        (self.accuracy - self.mean_confidence).abs()
    }

    /// `"0.0–0.1"` style label.
    pub fn label(&self) -> String {
        format!("{:.1}–{:.1}", self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub total: usize,
    pub bins: Vec<Bin>,
}

/// Bin index of a confidence value.
pub fn bin_index(confidence: f64) -> usize {
    let edge = |i: usize| i as f64 / NUM_BINS as f64;
    let mut i = ((confidence * NUM_BINS as f64).floor().max(0.0) as usize).min(NUM_BINS - 1);
    // guard against rounding in confidence * 10 near an edge
    if i > 0 && confidence < edge(i) {
        i -= 1;
    } else if i + 1 < NUM_BINS && confidence >= edge(i + 1) {
        i += 1;
    }
    i
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    count: usize,
    conf_sum: f64,
    correct: usize,
}

pub fn bucket(records: &[PredictionRecord]) -> Result<BinStats, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let mut acc = [Acc::default(); NUM_BINS];
    for r in records {
        let a = &mut acc[bin_index(r.confidence)];
        a.count += 1;
        a.conf_sum += r.confidence;
        a.correct += usize::from(r.correct);
    }
    let total = records.len();
    let bins = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let n = a.count as f64;
            Bin {
                lower: i as f64 / NUM_BINS as f64,
                upper: (i + 1) as f64 / NUM_BINS as f64,
                count: a.count,
                percent: 100.0 * n / total as f64,
                mean_confidence: if a.count > 0 { a.conf_sum / n } else { 0.0 },
                accuracy: if a.count > 0 {
                    a.correct as f64 / n
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(BinStats { total, bins })
}

/// Count-weighted mean of per-bin calibration gaps.
pub fn ece(stats: &BinStats) -> f64 {
    stats
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 * b.gap())
        .sum::<f64>()
        / stats.total as f64
}

/// Largest per-bin calibration gap.
pub fn mce(stats: &BinStats) -> f64 {
    stats
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(Bin::gap)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrierVariant {
    /// `mean (p_true − 1)²`
    #[default]
    GroundTruth,
    /// `mean Σ_c (p_c − 1[c = y])²`
    Multiclass,
}

pub fn brier(records: &[PredictionRecord], variant: BrierVariant) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let total: f64 = records
        .iter()
        .map(|r| match variant {
            BrierVariant::GroundTruth => (r.p_true - 1.0).powi(2),
            BrierVariant::Multiclass => r
                .probs
                .iter()
                .enumerate()
                .map(|(c, p)| (p - if c == r.label { 1.0 } else { 0.0 }).powi(2))
                .sum(),
        })
        .sum();
    Ok(total / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPoint {
    pub confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// One point per non-empty bin, in bin order.
pub fn reliability_points(stats: &BinStats) -> Vec<ReliabilityPoint> {
    stats
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| ReliabilityPoint {
            confidence: b.mean_confidence,
            accuracy: b.accuracy,
            count: b.count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub model: String,
    pub bins: BinStats,
    /// Mean confidence in percent.
    pub average_confidence: f64,
    pub accuracy: f64,
    pub ece: f64,
    pub mce: f64,
    pub brier: f64,
    pub brier_variant: BrierVariant,
    pub reliability: Vec<ReliabilityPoint>,
}

impl CalibrationReport {
    pub fn from_records(
        model: impl Into<String>,
        records: &[PredictionRecord],
        variant: BrierVariant,
    ) -> Result<Self, CalibrationError> {
        let bins = bucket(records)?;
        let n = records.len() as f64;
        Ok(Self {
            model: model.into(),
            average_confidence: 100.0 * records.iter().map(|r| r.confidence).sum::<f64>() / n,
            accuracy: records.iter().filter(|r| r.correct).count() as f64 / n,
            ece: ece(&bins),
            mce: mce(&bins),
            brier: brier(records, variant)?,
            brier_variant: variant,
            reliability: reliability_points(&bins),
            bins,
        })
    }
}
