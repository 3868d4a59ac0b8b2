//! Classification metrics, calibration and timing over completed decisions.
//!
//! COMPLIANT is the positive class. Headline precision, recall and F1 are
//! support-weighted averages over both classes; with that convention the
//! weighted recall of a binary classifier equals its accuracy.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{CaseCategory, ComplianceStatus, LabeledCase, SynthesisDecision};

pub const CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignmentError {
    #[error("no decision for case {0}")]
    MissingDecision(String),
    #[error("decision for unknown case {0}")]
    UnknownDecision(String),
    #[error("duplicate id {0}")]
    Duplicate(String),
    #[error("reports cover different corpora: {0}")]
    DifferentCorpus(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, truth: ComplianceStatus, predicted: ComplianceStatus) {
        use ComplianceStatus::{Compliant as C, NonCompliant as N};
        match (truth, predicted) {
            (C, C) => self.tp += 1,
            (N, C) => self.fp += 1,
            (N, N) => self.tn += 1,
            (C, N) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (ComplianceStatus, ComplianceStatus)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (t, p) in pairs {
            c.record(t, p);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// Precision, recall and F1 treating `class` as the positive label.
    pub fn class_metrics(&self, class: ComplianceStatus) -> ClassMetrics {
        let (tp, fp, fn_) = match class {
            ComplianceStatus::Compliant => (self.tp, self.fp, self.fn_),
            ComplianceStatus::NonCompliant => (self.tn, self.fn_, self.fp),
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        ClassMetrics { class, precision, recall, f1: harmonic_mean(precision, recall), support: tp + fn_ }
    }

    /// Support-weighted precision, recall and F1, plus accuracy.
    pub fn weighted(&self) -> OverallMetrics {
        let total = self.total();
        let mut overall = OverallMetrics { accuracy: self.accuracy(), precision: 0.0, recall: 0.0, f1: 0.0 };
        for class in ComplianceStatus::ALL {
            let m = self.class_metrics(class);
            let w = ratio(m.support, total);
            overall.precision += w * m.precision;
            overall.recall += w * m.recall;
            overall.f1 += w * m.f1;
        }
        overall
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ComplianceStatus,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub accuracy: f64,
    pub correct: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    /// `None` for an empty bin.
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub cases: u64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    /// This run's mean divided by the comparison run's mean, when one was supplied.
    pub ratio_vs_comparison: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub positive_class: ComplianceStatus,
    pub averaging: String,
    pub cases: u64,
    pub confusion: ConfusionCounts,
    pub overall: OverallMetrics,
    pub per_class: Vec<ClassMetrics>,
    pub per_category: BTreeMap<CaseCategory, CategoryAccuracy>,
    pub calibration: Calibration,
    pub timing: TimingStats,
}

/// Pairs every case with its decision by action id.
pub fn align<'a>(
    corpus: &'a [LabeledCase],
    decisions: &'a [SynthesisDecision],
) -> Result<Vec<(&'a LabeledCase, &'a SynthesisDecision)>, AlignmentError> {
    let mut by_id: BTreeMap<&str, &SynthesisDecision> = BTreeMap::new();
    for d in decisions {
        if by_id.insert(d.action_id.as_str(), d).is_some() {
            return Err(AlignmentError::Duplicate(d.action_id.clone()));
        }
    }
    let mut pairs = Vec::with_capacity(corpus.len());
    let mut seen = alloc::collections::BTreeSet::new();
    for case in corpus {
        let id = case.action.id.as_str();
        if !seen.insert(id) {
            return Err(AlignmentError::Duplicate(id.to_string()));
        }
        let d = by_id.remove(id).ok_or_else(|| AlignmentError::MissingDecision(id.to_string()))?;
        pairs.push((case, d));
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(AlignmentError::UnknownDecision(extra.to_string()));
    }
    Ok(pairs)
}

pub fn per_category_accuracy(
    corpus: &[LabeledCase],
    decisions: &[SynthesisDecision],
) -> Result<BTreeMap<CaseCategory, CategoryAccuracy>, AlignmentError> {
    Ok(category_table(&align(corpus, decisions)?))
}

fn category_table(pairs: &[(&LabeledCase, &SynthesisDecision)]) -> BTreeMap<CaseCategory, CategoryAccuracy> {
    let mut counts: BTreeMap<CaseCategory, (u64, u64)> = BTreeMap::new();
    for (case, d) in pairs {
        let e = counts.entry(case.category).or_default();
        e.0 += u64::from(case.ground_truth == d.status);
        e.1 += 1;
    }
    counts
        .into_iter()
        .map(|(k, (correct, count))| (k, CategoryAccuracy { accuracy: ratio(correct, count), correct, count }))
        .collect()
}

/// Reliability bins and expected calibration error over `(confidence, correct)` outcomes.
pub fn calibration_from_outcomes(outcomes: &[(f64, bool)]) -> Calibration {
    let mut sums = [(0.0f64, 0u64, 0u64); CALIBRATION_BINS];
    for &(confidence, correct) in outcomes {
        let c = crate::domain::clamp_confidence(confidence);
        let idx = ((c * CALIBRATION_BINS as f64) as usize).min(CALIBRATION_BINS - 1);
        sums[idx].0 += c;
        sums[idx].1 += u64::from(correct);
        sums[idx].2 += 1;
    }
    let n = outcomes.len() as f64;
    let mut ece = 0.0;
    let bins = sums
        .iter()
        .enumerate()
        .map(|(i, &(conf_sum, correct, count))| {
            let (mean_confidence, empirical_accuracy) = if count == 0 {
                (None, None)
            } else {
                let mc = conf_sum / count as f64;
                let acc = correct as f64 / count as f64;
                ece += (count as f64 / n) * (mc - acc).abs();
                (Some(mc), Some(acc))
            };
            CalibrationBin {
                lower: i as f64 / CALIBRATION_BINS as f64,
                upper: (i + 1) as f64 / CALIBRATION_BINS as f64,
                mean_confidence,
                empirical_accuracy,
                count,
            }
        })
        .collect();
    Calibration { bins, ece }
}

pub fn calibration(decisions: &[SynthesisDecision], corpus: &[LabeledCase]) -> Result<Calibration, AlignmentError> {
    let outcomes: Vec<(f64, bool)> =
        align(corpus, decisions)?.iter().map(|(c, d)| (d.confidence, c.ground_truth == d.status)).collect();
    Ok(calibration_from_outcomes(&outcomes))
}

/// Mean, median and nearest-rank 95th percentile of per-case seconds.
pub fn timing_from_seconds(seconds: &[f64]) -> TimingStats {
    if seconds.is_empty() {
        return TimingStats::default();
    }
    let mut sorted = seconds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let rank = (95 * n).div_ceil(100).max(1);
    TimingStats { cases: n as u64, mean, median, p95: sorted[rank - 1], ratio_vs_comparison: None }
}

pub fn timing_stats(decisions: &[SynthesisDecision]) -> TimingStats {
    let seconds: Vec<f64> = decisions.iter().map(|d| d.elapsed_total).collect();
    timing_from_seconds(&seconds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingComparison {
    pub a: TimingStats,
    pub b: TimingStats,
    /// `mean_a / mean_b`; `None` when run b has zero mean.
    pub ratio: Option<f64>,
}

pub fn compare_timing(run_a: &[SynthesisDecision], run_b: &[SynthesisDecision]) -> TimingComparison {
    let (mut a, b) = (timing_stats(run_a), timing_stats(run_b));
    let ratio = (b.mean > 0.0).then(|| a.mean / b.mean);
    a.ratio_vs_comparison = ratio;
    TimingComparison { a, b, ratio }
}

pub fn evaluate(corpus: &[LabeledCase], decisions: &[SynthesisDecision]) -> Result<EvaluationReport, AlignmentError> {
    let pairs = align(corpus, decisions)?;
    let confusion = ConfusionCounts::from_pairs(pairs.iter().map(|(c, d)| (c.ground_truth, d.status)));
    let outcomes: Vec<(f64, bool)> = pairs.iter().map(|(c, d)| (d.confidence, c.ground_truth == d.status)).collect();
    let seconds: Vec<f64> = pairs.iter().map(|(_, d)| d.elapsed_total).collect();
    Ok(EvaluationReport {
        positive_class: ComplianceStatus::Compliant,
        averaging: "weighted".to_string(),
        cases: confusion.total(),
        confusion,
        overall: confusion.weighted(),
        per_class: ComplianceStatus::ALL.iter().map(|&c| confusion.class_metrics(c)).collect(),
        per_category: category_table(&pairs),
        calibration: calibration_from_outcomes(&outcomes),
        timing: timing_from_seconds(&seconds),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub single: f64,
    pub multi: f64,
    pub delta: f64,
    /// `delta / single * 100`; `None` when the single-agent value is zero.
    pub percent_change: Option<f64>,
    /// Sample count behind the row, for per-category rows.
    pub count: Option<u64>,
}

impl ComparisonRow {
    fn new(metric: impl Into<String>, single: f64, multi: f64, count: Option<u64>) -> Self {
        let delta = multi - single;
        ComparisonRow {
            metric: metric.into(),
            single,
            multi,
            delta,
            percent_change: (single != 0.0).then(|| delta / single * 100.0),
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub overall: Vec<ComparisonRow>,
    pub per_category: Vec<ComparisonRow>,
    pub calibration_ece: ComparisonRow,
    pub mean_seconds: ComparisonRow,
    /// Multi-agent mean time over single-agent mean time.
    pub timing_ratio: Option<f64>,
}

impl ComparisonTable {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.overall.iter().chain(&self.per_category).find(|r| r.metric == metric)
    }
}

pub fn compare_reports(single: &EvaluationReport, multi: &EvaluationReport) -> Result<ComparisonTable, AlignmentError> {
    if single.cases != multi.cases {
        return Err(AlignmentError::DifferentCorpus(format!("{} vs {} cases", single.cases, multi.cases)));
    }
    for (k, s) in &single.per_category {
        if multi.per_category.get(k).map(|m| m.count) != Some(s.count) {
            return Err(AlignmentError::DifferentCorpus(format!("category {k} sizes differ")));
        }
    }
    let (s, m) = (&single.overall, &multi.overall);
    let overall = alloc::vec![
        ComparisonRow::new("accuracy", s.accuracy, m.accuracy, None),
        ComparisonRow::new("precision", s.precision, m.precision, None),
        ComparisonRow::new("recall", s.recall, m.recall, None),
        ComparisonRow::new("f1", s.f1, m.f1, None),
    ];
    let per_category = single
        .per_category
        .iter()
        .map(|(k, sc)| ComparisonRow::new(k.as_str(), sc.accuracy, multi.per_category[k].accuracy, Some(sc.count)))
        .collect();
    Ok(ComparisonTable {
        overall,
        per_category,
        calibration_ece: ComparisonRow::new("ece", single.calibration.ece, multi.calibration.ece, None),
        mean_seconds: ComparisonRow::new("mean_seconds", single.timing.mean, multi.timing.mean, None),
        timing_ratio: (single.timing.mean > 0.0).then(|| multi.timing.mean / single.timing.mean),
    })
}
