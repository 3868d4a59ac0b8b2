//! Value types shared by every stage of the verification pipeline.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::oracle;

/// Final compliance status of a single data-handling action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComplianceStatus {
    #[serde(rename = "COMPLIANT")]
    Compliant,
    #[serde(rename = "NON_COMPLIANT")]
    NonCompliant,
}

impl ComplianceStatus {
    pub const ALL: [ComplianceStatus; 2] = [ComplianceStatus::Compliant, ComplianceStatus::NonCompliant];

    pub fn as_str(self) -> &'static str {
        match self {
            ComplianceStatus::Compliant => "COMPLIANT",
            ComplianceStatus::NonCompliant => "NON_COMPLIANT",
        }
    }

    pub fn from_bool(compliant: bool) -> Self {
        if compliant {
            ComplianceStatus::Compliant
        } else {
            ComplianceStatus::NonCompliant
        }
    }

    pub fn is_compliant(self) -> bool {
        self == ComplianceStatus::Compliant
    }

    pub fn inverted(self) -> Self {
        match self {
            ComplianceStatus::Compliant => ComplianceStatus::NonCompliant,
            ComplianceStatus::NonCompliant => ComplianceStatus::Compliant,
        }
    }
}

impl fmt::Display for ComplianceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStatus(pub String);

impl fmt::Display for UnknownStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown compliance status {:?}", self.0)
    }
}

impl FromStr for ComplianceStatus {
    type Err = UnknownStatus;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "COMPLIANT" => Ok(ComplianceStatus::Compliant),
            "NON_COMPLIANT" => Ok(ComplianceStatus::NonCompliant),
            other => Err(UnknownStatus(other.to_string())),
        }
    }
}

/// Statutory exceptions that permit handling beyond the purpose without consent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Exception {
    None,
    Law,
    LifeBodyProperty,
    PublicHealthChildren,
    GovernmentCooperation,
}

impl Exception {
    pub const ALL: [Exception; 5] = [
        Exception::None,
        Exception::Law,
        Exception::LifeBodyProperty,
        Exception::PublicHealthChildren,
        Exception::GovernmentCooperation,
    ];

    pub fn applies(self) -> bool {
        self != Exception::None
    }

    pub fn describe(self) -> &'static str {
        match self {
            Exception::None => "no statutory exception",
            Exception::Law => "handling based on laws or regulations",
            Exception::LifeBodyProperty => "protection of human life, body or property",
            Exception::PublicHealthChildren => "public health or the sound growth of children",
            Exception::GovernmentCooperation => "cooperation with a government body performing duties prescribed by law",
        }
    }
}

/// Machine-readable ground-truth flags attached to an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructuredFacts {
    pub within_purpose: bool,
    pub consent_obtained: bool,
    pub succession: bool,
    pub exception: Exception,
}

impl StructuredFacts {
    /// No compliance ground at all.
    pub const NONE: StructuredFacts = StructuredFacts {
        within_purpose: false,
        consent_obtained: false,
        succession: false,
        exception: Exception::None,
    };

    /// Every one of the 2 x 2 x 2 x 5 flag combinations.
    pub fn all_combinations() -> impl Iterator<Item = StructuredFacts> {
        [false, true].into_iter().flat_map(|within_purpose| {
            [false, true].into_iter().flat_map(move |consent_obtained| {
                [false, true].into_iter().flat_map(move |succession| {
                    Exception::ALL.into_iter().map(move |exception| StructuredFacts {
                        within_purpose,
                        consent_obtained,
                        succession,
                        exception,
                    })
                })
            })
        })
    }
}

/// A single proposed data-handling action `(c, p, d, o)` plus its facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataTransferAction {
    pub id: String,
    pub company_context: String,
    pub stated_purpose: String,
    pub proposed_operation: String,
    pub operational_context: String,
    pub facts: StructuredFacts,
}

impl DataTransferAction {
    /// Invariant violations of this action, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push("empty field id".to_string());
        }
        let fields = [
            ("c", &self.company_context),
            ("p", &self.stated_purpose),
            ("d", &self.proposed_operation),
            ("o", &self.operational_context),
        ];
        for (symbol, text) in fields {
            if text.trim().is_empty() {
                out.push(alloc::format!("empty field {symbol}"));
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

/// An ordered sequence of actions produced by a planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub id: String,
    pub actions: Vec<DataTransferAction>,
}

impl Plan {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.actions.is_empty() {
            out.push("plan has no actions".to_string());
        }
        let mut seen = BTreeSet::new();
        for action in &self.actions {
            if !seen.insert(action.id.as_str()) {
                out.push(alloc::format!("duplicate action id {}", action.id));
            }
            for v in action.violations() {
                out.push(alloc::format!("action {}: {v}", action.id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentRole {
    LegalAnalyst,
    ContextAnalyzer,
    RiskAssessor,
    SingleAgent,
}

impl AgentRole {
    /// The three specialists consulted by the coordinator, in protocol order.
    pub const SPECIALISTS: [AgentRole; 3] =
        [AgentRole::LegalAnalyst, AgentRole::ContextAnalyzer, AgentRole::RiskAssessor];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::LegalAnalyst => "LEGAL_ANALYST",
            AgentRole::ContextAnalyzer => "CONTEXT_ANALYZER",
            AgentRole::RiskAssessor => "RISK_ASSESSOR",
            AgentRole::SingleAgent => "SINGLE_AGENT",
        }
    }

    /// Position among the specialists, `None` for the single-agent baseline.
    pub fn specialist_index(self) -> Option<usize> {
        match self {
            AgentRole::LegalAnalyst => Some(0),
            AgentRole::ContextAnalyzer => Some(1),
            AgentRole::RiskAssessor => Some(2),
            AgentRole::SingleAgent => None,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a single agent concluded. `Abstain` marks an agent that produced no usable verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentVerdict {
    #[serde(rename = "COMPLIANT")]
    Compliant,
    #[serde(rename = "NON_COMPLIANT")]
    NonCompliant,
    #[serde(rename = "ABSTAIN")]
    Abstain,
}

impl AgentVerdict {
    pub fn status(self) -> Option<ComplianceStatus> {
        match self {
            AgentVerdict::Compliant => Some(ComplianceStatus::Compliant),
            AgentVerdict::NonCompliant => Some(ComplianceStatus::NonCompliant),
            AgentVerdict::Abstain => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentVerdict::Compliant => "COMPLIANT",
            AgentVerdict::NonCompliant => "NON_COMPLIANT",
            AgentVerdict::Abstain => "ABSTAIN",
        }
    }
}

impl From<ComplianceStatus> for AgentVerdict {
    fn from(status: ComplianceStatus) -> Self {
        match status {
            ComplianceStatus::Compliant => AgentVerdict::Compliant,
            ComplianceStatus::NonCompliant => AgentVerdict::NonCompliant,
        }
    }
}

/// Clamp a confidence into `[0, 1]`; NaN becomes 0.
pub fn clamp_confidence(value: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        value.clamp(0.0, 1.0)
    }
}

/// One specialist's (or the baseline's) analysis of an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAnalysis {
    pub agent_role: AgentRole,
    pub verdict: AgentVerdict,
    pub confidence: f64,
    pub rationale: String,
    /// Wall time of the analysis in seconds.
    pub elapsed: f64,
}

impl AgentAnalysis {
    /// Builds an analysis, clamping the confidence. Abstentions always carry zero confidence.
    pub fn new(role: AgentRole, verdict: AgentVerdict, confidence: f64, rationale: impl Into<String>) -> Self {
        let confidence = match verdict {
            AgentVerdict::Abstain => 0.0,
            _ => clamp_confidence(confidence),
        };
        AgentAnalysis {
            agent_role: role,
            verdict,
            confidence,
            rationale: rationale.into(),
            elapsed: 0.0,
        }
    }

    pub fn abstain(role: AgentRole, rationale: impl Into<String>) -> Self {
        Self::new(role, AgentVerdict::Abstain, 0.0, rationale)
    }

    pub fn with_elapsed(mut self, seconds: f64) -> Self {
        self.elapsed = seconds;
        self
    }

    /// Re-applies the confidence invariants, for values that arrived from outside.
    pub fn normalized(mut self) -> Self {
        self.confidence = match self.verdict {
            AgentVerdict::Abstain => 0.0,
            _ => clamp_confidence(self.confidence),
        };
        self
    }
}

/// Final decision for one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisDecision {
    /// Id of the action this decision is about; used to align decisions with a corpus.
    pub action_id: String,
    pub status: ComplianceStatus,
    pub confidence: f64,
    pub justification: String,
    /// The three specialist analyses, or empty for the single-agent path.
    pub trace: Vec<AgentAnalysis>,
    pub elapsed_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseCategory {
    ClearCompliance,
    ClearViolation,
    ConsentBased,
    EdgeCase,
}

impl CaseCategory {
    pub const ALL: [CaseCategory; 4] = [
        CaseCategory::ClearCompliance,
        CaseCategory::ClearViolation,
        CaseCategory::ConsentBased,
        CaseCategory::EdgeCase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseCategory::ClearCompliance => "CLEAR_COMPLIANCE",
            CaseCategory::ClearViolation => "CLEAR_VIOLATION",
            CaseCategory::ConsentBased => "CONSENT_BASED",
            CaseCategory::EdgeCase => "EDGE_CASE",
        }
    }

    /// Human label used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            CaseCategory::ClearCompliance => "Clear Compliance",
            CaseCategory::ClearViolation => "Clear Violations",
            CaseCategory::ConsentBased => "Consent-Based Compliance",
            CaseCategory::EdgeCase => "Edge Cases",
        }
    }

    /// Short prefix used in generated case ids.
    pub fn id_prefix(self) -> &'static str {
        match self {
            CaseCategory::ClearCompliance => "cc",
            CaseCategory::ClearViolation => "cv",
            CaseCategory::ConsentBased => "cb",
            CaseCategory::EdgeCase => "ec",
        }
    }
}

impl fmt::Display for CaseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An action with its category and ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCase {
    pub action: DataTransferAction,
    pub category: CaseCategory,
    pub ground_truth: ComplianceStatus,
    pub reasoning: String,
}

/// Outcome of [`validate_case`]: either valid or the list of broken invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    Ok,
    Violations(Vec<String>),
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok)
    }

    pub fn violations(&self) -> &[String] {
        match self {
            Validation::Ok => &[],
            Validation::Violations(v) => v,
        }
    }
}

pub const LABEL_CONTRADICTS_ORACLE: &str = "label contradicts oracle";

/// Checks every case invariant, including agreement of the label with the statute oracle.
pub fn validate_case(case: &LabeledCase) -> Validation {
    let mut violations = case.action.violations();
    if oracle::classify(&case.action.facts).status != case.ground_truth {
        violations.push(LABEL_CONTRADICTS_ORACLE.to_string());
    }
    if violations.is_empty() {
        Validation::Ok
    } else {
        Validation::Violations(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn action(facts: StructuredFacts) -> DataTransferAction {
        DataTransferAction {
            id: "a-1".into(),
            company_context: "Regional grocery chain with a loyalty program".into(),
            stated_purpose: "Issuing loyalty points".into(),
            proposed_operation: "Crediting points after purchase".into(),
            operational_context: "Existing members only".into(),
            facts,
        }
    }

    #[test]
    fn consistent_case_is_ok() {
        let case = LabeledCase {
            action: action(StructuredFacts { within_purpose: true, ..StructuredFacts::NONE }),
            category: CaseCategory::ClearCompliance,
            ground_truth: ComplianceStatus::Compliant,
            reasoning: "within purpose".into(),
        };
        assert_eq!(validate_case(&case), Validation::Ok);
    }

    #[test]
    fn empty_purpose_is_reported() {
        let mut a = action(StructuredFacts { within_purpose: true, ..StructuredFacts::NONE });
        a.stated_purpose = String::new();
        let case = LabeledCase {
            action: a,
            category: CaseCategory::ClearCompliance,
            ground_truth: ComplianceStatus::Compliant,
            reasoning: String::new(),
        };
        assert_eq!(case_violations(&case), ["empty field p"]);
    }

    #[test]
    fn label_contradicting_oracle_is_reported() {
        let case = LabeledCase {
            action: action(StructuredFacts::NONE),
            category: CaseCategory::ClearViolation,
            ground_truth: ComplianceStatus::Compliant,
            reasoning: String::new(),
        };
        assert_eq!(case_violations(&case), [LABEL_CONTRADICTS_ORACLE]);
    }

    fn case_violations(case: &LabeledCase) -> Vec<String> {
        validate_case(case).violations().to_vec()
    }

    #[test]
    fn status_parsing_is_strict() {
        assert_eq!("COMPLIANT".parse(), Ok(ComplianceStatus::Compliant));
        assert_eq!("NON_COMPLIANT".parse(), Ok(ComplianceStatus::NonCompliant));
        for bad in ["compliant", "NON-COMPLIANT", "", "ABSTAIN", " COMPLIANT"] {
            assert!(bad.parse::<ComplianceStatus>().is_err(), "{bad}");
            assert!(serde_json::from_str::<ComplianceStatus>(&alloc::format!("{bad:?}")).is_err());
        }
        assert_eq!(serde_json::to_string(&ComplianceStatus::NonCompliant).unwrap(), "\"NON_COMPLIANT\"");
    }

    #[test]
    fn abstain_forces_zero_confidence_and_clamps() {
        assert_eq!(AgentAnalysis::new(AgentRole::RiskAssessor, AgentVerdict::Abstain, 0.9, "").confidence, 0.0);
        assert_eq!(AgentAnalysis::new(AgentRole::RiskAssessor, AgentVerdict::Compliant, 1.7, "").confidence, 1.0);
        assert_eq!(AgentAnalysis::new(AgentRole::RiskAssessor, AgentVerdict::Compliant, -2.0, "").confidence, 0.0);
        assert_eq!(clamp_confidence(f64::NAN), 0.0);
    }

    #[test]
    fn plan_rejects_duplicates_and_empty() {
        let empty = Plan { id: "p".into(), actions: Vec::new() };
        assert!(!empty.violations().is_empty());
        let a = action(StructuredFacts::NONE);
        let dup = Plan { id: "p".into(), actions: alloc::vec![a.clone(), a] };
        assert_eq!(dup.violations(), ["duplicate action id a-1"]);
    }

    #[test]
    fn forty_flag_combinations() {
        let all: BTreeSet<_> = StructuredFacts::all_combinations()
            .map(|f| (f.within_purpose, f.consent_obtained, f.succession, f.exception))
            .collect();
        assert_eq!(all.len(), 40);
    }
}
