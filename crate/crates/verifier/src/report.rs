//! Human and machine renderings of evaluation reports and comparisons.

use std::fmt::Write as _;
use std::path::Path;

use appi_verify_core::domain::{CaseCategory, LabeledCase};
use appi_verify_core::metrics::{align, AlignmentError, Calibration, ComparisonRow, ComparisonTable, EvaluationReport};
use appi_verify_core::SynthesisDecision;

fn pct(row: &ComparisonRow) -> String {
    match row.percent_change {
        Some(p) => format!("({p:+.1}%)"),
        None => "(n/a)".to_string(),
    }
}

pub fn report_markdown(title: &str, report: &EvaluationReport) -> String {
    let mut md = String::new();
    let o = &report.overall;
    let _ = writeln!(md, "# {title}\n");
    let _ = writeln!(
        md,
        "{} cases. Positive class: {}. Headline precision, recall and F1 are {}-averaged over both classes.\n",
        report.cases, report.positive_class, report.averaging
    );
    md.push_str("| Accuracy | Precision | Recall | F1-Score |\n|---|---|---|---|\n");
    let _ = writeln!(md, "| {:.3} | {:.3} | {:.3} | {:.3} |\n", o.accuracy, o.precision, o.recall, o.f1);

    md.push_str("## Per class\n\n| Class | Precision | Recall | F1 | Support |\n|---|---|---|---|---|\n");
    for c in &report.per_class {
        let _ = writeln!(md, "| {} | {:.3} | {:.3} | {:.3} | {} |", c.class, c.precision, c.recall, c.f1, c.support);
    }
    let cm = &report.confusion;
    let _ = writeln!(md, "\nConfusion: tp={} fp={} tn={} fn={}\n", cm.tp, cm.fp, cm.tn, cm.fn_);

    md.push_str("## By category\n\n| Category | Accuracy | Correct | Sample Count |\n|---|---|---|---|\n");
    for (k, v) in &report.per_category {
        let _ = writeln!(md, "| {} | {:.3} | {} | {} |", k.title(), v.accuracy, v.correct, v.count);
    }
    md.push('\n');
    md.push_str(&calibration_markdown(&report.calibration));
    let t = &report.timing;
    let _ = writeln!(
        md,
        "\n## Timing\n\nmean {:.3}s, median {:.3}s, p95 {:.3}s over {} cases",
        t.mean, t.median, t.p95, t.cases
    );
    if let Some(r) = t.ratio_vs_comparison {
        let _ = writeln!(md, "\nratio vs comparison run: {r:.2}x");
    }
    md
}

pub fn calibration_markdown(cal: &Calibration) -> String {
    let mut md = String::from("## Calibration\n\n| Bin | Mean confidence | Accuracy | Count |\n|---|---|---|---|\n");
    for b in &cal.bins {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            md,
            "| [{:.1}, {:.1}{} | {} | {} | {} |",
            b.lower,
            b.upper,
            if b.upper >= 1.0 { "]" } else { ")" },
            fmt(b.mean_confidence),
            fmt(b.empirical_accuracy),
            b.count
        );
    }
    let _ = writeln!(md, "\nExpected calibration error: {:.4}", cal.ece);
    md
}

pub fn comparison_markdown(table: &ComparisonTable) -> String {
    let mut md = String::from("# Single agent vs multi-agent\n\n");
    md.push_str("| Approach | Accuracy | Precision | Recall | F1-Score |\n|---|---|---|---|---|\n");
    let cell = |f: &dyn Fn(&ComparisonRow) -> String| table.overall.iter().map(f).collect::<Vec<_>>().join(" | ");
    let _ = writeln!(md, "| Single Agent | {} |", cell(&|r| format!("{:.3}", r.single)));
    let _ = writeln!(md, "| Multi-Agent | {} |", cell(&|r| format!("{:.3}", r.multi)));
    let _ = writeln!(md, "| **Improvement** | {} |", cell(&|r| format!("{:+.3}", r.delta)));
    let _ = writeln!(md, "| **(% Change)** | {} |", cell(&pct));

    md.push_str("\n| Category | Single Agent | Multi-Agent | Improvement | Sample Count |\n|---|---|---|---|---|\n");
    for r in &table.per_category {
        let title = CaseCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == r.metric)
            .map_or_else(|| r.metric.clone(), |c| c.title().to_string());
        let _ = writeln!(
            md,
            "| {} | {:.3} | {:.3} | {:+.3} | {} |",
            title,
            r.single,
            r.multi,
            r.delta,
            r.count.unwrap_or(0)
        );
    }
    let e = &table.calibration_ece;
    let _ = writeln!(md, "\nECE: {:.4} vs {:.4} ({:+.4})", e.single, e.multi, e.delta);
    let t = &table.mean_seconds;
    let _ = write!(md, "\nMean processing time: {:.2}s vs {:.2}s", t.single, t.multi);
    match table.timing_ratio {
        Some(r) => {
            let _ = writeln!(md, " ({r:.2}x)");
        }
        None => md.push('\n'),
    }
    md
}

/// One CSV row per case: id, category, ground truth, prediction, confidence, elapsed.
pub fn write_case_csv(corpus: &[LabeledCase], decisions: &[SynthesisDecision], path: &Path) -> Result<(), CsvError> {
    let pairs = align(corpus, decisions)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "category", "ground_truth", "prediction", "confidence", "elapsed_seconds"])?;
    for (case, d) in pairs {
        w.write_record([
            case.action.id.as_str(),
            case.category.as_str(),
            case.ground_truth.as_str(),
            d.status.as_str(),
            &format!("{:.6}", d.confidence),
            &format!("{:.6}", d.elapsed_total),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
