use appi_verify_core::domain::{
    CaseCategory, ComplianceStatus, DataTransferAction, LabeledCase, StructuredFacts, SynthesisDecision,
};
use appi_verify_core::metrics::{compare_reports, evaluate, EvaluationReport, OverallMetrics};

fn report(overall: OverallMetrics) -> EvaluationReport {
    let corpus: Vec<LabeledCase> = CaseCategory::ALL
        .iter()
        .enumerate()
        .map(|(i, &category)| LabeledCase {
            action: DataTransferAction {
                id: format!("c{i}"),
                company_context: "c".into(),
                stated_purpose: "p".into(),
                proposed_operation: "d".into(),
                operational_context: "o".into(),
                facts: StructuredFacts::NONE,
            },
            category,
            ground_truth: ComplianceStatus::NonCompliant,
            reasoning: String::new(),
        })
        .collect();
    let decisions: Vec<SynthesisDecision> = corpus
        .iter()
        .map(|c| SynthesisDecision {
            action_id: c.action.id.clone(),
            status: ComplianceStatus::NonCompliant,
            confidence: 1.0,
            justification: String::new(),
            trace: Vec::new(),
            elapsed_total: 1.0,
        })
        .collect();
    let mut r = evaluate(&corpus, &decisions).unwrap();
    r.overall = overall;
    r
}

// Headline numbers as published, three decimals each.
#[test]
fn headline_deltas_from_rounded_inputs() {
    let single = report(OverallMetrics { accuracy: 0.510, precision: 0.741, recall: 0.510, f1: 0.471 });
    let multi = report(OverallMetrics { accuracy: 0.720, precision: 0.789, recall: 0.720, f1: 0.725 });
    let t = compare_reports(&single, &multi).unwrap();
    let row = |m: &str| t.row(m).unwrap().clone();

    for m in ["accuracy", "recall"] {
        assert!((row(m).delta - 0.210).abs() < 1e-9);
        assert!((row(m).percent_change.unwrap() - 41.2).abs() < 0.1);
    }
    assert!((row("precision").delta - 0.048).abs() < 1e-9);
    assert!((row("precision").percent_change.unwrap() - 6.5).abs() < 0.1);

    // 0.725 - 0.471 is 0.254; the published 0.255 and +54.1% come from unrounded values.
    let f1 = row("f1");
    assert!((f1.delta - 0.255).abs() <= 0.002);
    assert!((f1.percent_change.unwrap() - 53.93).abs() < 0.01);
    assert!((f1.percent_change.unwrap() - 54.1).abs() < 0.25);
}
