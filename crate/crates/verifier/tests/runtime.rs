use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use appi_verify::runtime::{Mode, RuntimeError, RuntimeOptions, Verifier};
use appi_verify_core::backend::{AgentBackend, BackendError, RuleBackend};
use appi_verify_core::coordinator::CoordinatorConfig;
use appi_verify_core::domain::{
    AgentAnalysis, AgentRole, AgentVerdict, ComplianceStatus, DataTransferAction, Plan, StructuredFacts,
};
use appi_verify_core::oracle::classify;

fn action(id: &str, facts: StructuredFacts) -> DataTransferAction {
    DataTransferAction {
        id: id.into(),
        company_context: "A retailer".into(),
        stated_purpose: "Order fulfilment".into(),
        proposed_operation: "Share purchase history".into(),
        operational_context: "Quarterly review".into(),
        facts,
    }
}

struct Failing;

impl AgentBackend for Failing {
    fn analyze(&self, _: AgentRole, _: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        Err(BackendError::Exhausted { attempts: 4, last: "HTTP 500".into() })
    }
    fn kind(&self) -> &str {
        "failing"
    }
}

struct Slow(Duration);

impl AgentBackend for Slow {
    fn analyze(&self, role: AgentRole, _: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        std::thread::sleep(self.0);
        Ok(AgentAnalysis::new(role, AgentVerdict::Compliant, 1.0, "late"))
    }
    fn kind(&self) -> &str {
        "slow"
    }
}

struct Counting {
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl AgentBackend for Counting {
    fn analyze(&self, role: AgentRole, action: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(5));
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        RuleBackend::noiseless().analyze(role, action)
    }
    fn kind(&self) -> &str {
        "counting"
    }
    fn single_flight(&self) -> bool {
        true
    }
}

fn noiseless() -> Verifier {
    Verifier::new(Arc::new(RuleBackend::noiseless()), CoordinatorConfig::default()).unwrap()
}

#[test]
fn noiseless_pipeline_matches_oracle_on_every_combination() {
    let v = noiseless();
    for (i, facts) in StructuredFacts::all_combinations().enumerate() {
        let a = action(&format!("a{i}"), facts);
        let want = classify(&facts).status;
        let multi = v.verify(&a, Mode::Multi).unwrap();
        assert_eq!(multi.status, want, "{facts:?}");
        assert_eq!(multi.trace.len(), 3);
        assert_eq!(v.verify(&a, Mode::Single).unwrap().status, want);
    }
}

#[test]
fn empty_purpose_is_rejected_before_any_agent_runs() {
    let v = noiseless();
    let mut a = action("x", StructuredFacts::NONE);
    a.stated_purpose = "  ".into();
    match v.verify(&a, Mode::Multi) {
        Err(RuntimeError::InvalidAction(violations)) => assert!(violations.iter().any(|m| m.contains("p"))),
        other => panic!("expected InvalidAction, got {other:?}"),
    }
}

#[test]
fn late_agent_abstains_and_the_rest_decide() {
    let rule: Arc<dyn AgentBackend> = Arc::new(RuleBackend::noiseless());
    let slow: Arc<dyn AgentBackend> = Arc::new(Slow(Duration::from_millis(500)));
    let v = Verifier::with_backends([rule.clone(), slow, rule.clone()], rule, CoordinatorConfig::default())
        .unwrap()
        .with_options(RuntimeOptions { agent_timeout: Some(Duration::from_millis(50)), concurrent_agents: true });
    let d = v.verify_multi(&action("t", StructuredFacts::NONE)).unwrap();
    assert_eq!(d.trace[1].verdict, AgentVerdict::Abstain);
    assert!(d.trace[1].rationale.contains("timed out") || d.trace[1].rationale.contains("backend error"));
    assert_eq!(d.status, ComplianceStatus::NonCompliant);
}

#[test]
fn one_failing_agent_degrades_to_abstain() {
    let rule: Arc<dyn AgentBackend> = Arc::new(RuleBackend::noiseless());
    let v = Verifier::with_backends([Arc::new(Failing), rule.clone(), rule.clone()], rule, CoordinatorConfig::default())
        .unwrap();
    let facts = StructuredFacts { within_purpose: true, ..StructuredFacts::NONE };
    let d = v.verify_multi(&action("f", facts)).unwrap();
    assert_eq!(d.trace[0].verdict, AgentVerdict::Abstain);
    assert_eq!(d.status, ComplianceStatus::Compliant);
}

#[test]
fn all_agents_failing_is_reported_with_a_fail_safe_decision() {
    let v = Verifier::new(Arc::new(Failing), CoordinatorConfig::default()).unwrap();
    let facts = StructuredFacts { within_purpose: true, ..StructuredFacts::NONE };
    for mode in [Mode::Multi, Mode::Single] {
        match v.verify(&action("f", facts), mode) {
            Err(RuntimeError::TotalFailure { fallback }) => {
                assert_eq!(fallback.status, ComplianceStatus::NonCompliant);
                assert_eq!(fallback.confidence, 0.0);
            }
            other => panic!("expected TotalFailure, got {other:?}"),
        }
    }
}

#[test]
fn single_flight_backends_are_serialized() {
    let b = Arc::new(Counting { calls: AtomicUsize::new(0), in_flight: AtomicUsize::new(0), max_in_flight: AtomicUsize::new(0) });
    let v = Verifier::new(b.clone(), CoordinatorConfig::default()).unwrap();
    v.verify_multi(&action("s", StructuredFacts::NONE)).unwrap();
    assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    assert_eq!(b.max_in_flight.load(Ordering::SeqCst), 1);
}

#[test]
fn plan_is_compliant_only_if_every_action_is() {
    let v = noiseless();
    let ok = StructuredFacts { consent_obtained: true, ..StructuredFacts::NONE };
    let plan = Plan { id: "p".into(), actions: vec![action("a", ok), action("b", ok)] };
    let verdict = v.verify_plan(&plan, Mode::Multi).unwrap();
    assert_eq!(verdict.status, ComplianceStatus::Compliant);
    assert_eq!(verdict.decisions.len(), 2);

    let plan = Plan { id: "p".into(), actions: vec![action("a", ok), action("b", StructuredFacts::NONE)] };
    assert_eq!(v.verify_plan(&plan, Mode::Multi).unwrap().status, ComplianceStatus::NonCompliant);
}

#[test]
fn malformed_plans_are_rejected() {
    let v = noiseless();
    let empty = Plan { id: "p".into(), actions: vec![] };
    assert!(matches!(v.verify_plan(&empty, Mode::Multi), Err(RuntimeError::InvalidPlan(_))));
    let dup = Plan { id: "p".into(), actions: vec![action("a", StructuredFacts::NONE), action("a", StructuredFacts::NONE)] };
    assert!(matches!(v.verify_plan(&dup, Mode::Multi), Err(RuntimeError::InvalidPlan(_))));

    // Every action is checked before the first agent call, so nothing is half-verified.
    let mut bad = action("b", StructuredFacts::NONE);
    bad.company_context.clear();
    let plan = Plan { id: "p".into(), actions: vec![action("a", StructuredFacts::NONE), bad] };
    match v.verify_plan(&plan, Mode::Multi) {
        Err(RuntimeError::InvalidPlan(v)) => assert!(v.iter().any(|m| m.contains("action b"))),
        other => panic!("expected InvalidPlan, got {other:?}"),
    }
}
