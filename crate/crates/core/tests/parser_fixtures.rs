use appi_verify_core::domain::{AgentRole, AgentVerdict};
use appi_verify_core::parse::parse_analysis;
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    name: String,
    raw: String,
    verdict: AgentVerdict,
    confidence: f64,
}

#[test]
fn fixture_corpus_parses_as_expected() {
    let fixtures: Vec<Fixture> = serde_json::from_str(include_str!("fixtures/responses.json")).unwrap();
    assert!(fixtures.len() >= 20);
    for f in &fixtures {
        let got = parse_analysis(&f.raw, AgentRole::RiskAssessor);
        assert_eq!(got.agent_role, AgentRole::RiskAssessor, "{}", f.name);
        assert_eq!(got.verdict, f.verdict, "{}", f.name);
        assert!((got.confidence - f.confidence).abs() < 1e-12, "{}: {}", f.name, got.confidence);
        if f.verdict == AgentVerdict::Abstain {
            assert!(!got.rationale.is_empty(), "{}: abstain should say why", f.name);
        }
    }
}

#[test]
fn garbage_never_panics() {
    for raw in ["{", "}", "{{{{", "\"", "{\"verdict\":", "\u{0}\u{ffff}", "confidence 0.", "100% confidence", "{\"verdict\": null}"] {
        let _ = parse_analysis(raw, AgentRole::LegalAnalyst);
    }
}
