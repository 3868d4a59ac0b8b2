//! The pluggable analysis backend and its deterministic rule-based implementation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AgentAnalysis, AgentRole, AgentVerdict, ComplianceStatus, DataTransferAction};
use crate::oracle::{self, Basis};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend timed out after {seconds:.3}s")]
    Timeout { seconds: f64 },
    #[error("backend exhausted {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("backend failure: {0}")]
    Failed(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// Produces one agent's analysis of an action.
pub trait AgentBackend: Send + Sync {
    fn analyze(&self, role: AgentRole, action: &DataTransferAction) -> Result<AgentAnalysis, BackendError>;

    /// Short identifier recorded in run manifests.
    fn kind(&self) -> &str;

    /// Backends that cannot serve concurrent calls return true; the runtime then serializes them.
    fn single_flight(&self) -> bool {
        false
    }
}

impl<B: AgentBackend + ?Sized> AgentBackend for alloc::sync::Arc<B> {
    fn analyze(&self, role: AgentRole, action: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        (**self).analyze(role, action)
    }

    fn kind(&self) -> &str {
        (**self).kind()
    }

    fn single_flight(&self) -> bool {
        (**self).single_flight()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleBackendConfig {
    /// Chance that the role's deterministic verdict is inverted; roles absent from the map never flip.
    pub flip_probability: BTreeMap<AgentRole, f64>,
    pub confidence_correct: f64,
    pub confidence_flipped: f64,
    pub rng_seed: u64,
}

impl Default for RuleBackendConfig {
    fn default() -> Self {
        RuleBackendConfig {
            flip_probability: BTreeMap::new(),
            confidence_correct: 0.9,
            confidence_flipped: 0.6,
            rng_seed: 0,
        }
    }
}

impl RuleBackendConfig {
    /// Same flip probability for every role, including the single-agent baseline.
    pub fn uniform(flip: f64, confidence: f64, rng_seed: u64) -> Self {
        let flip_probability = [
            AgentRole::LegalAnalyst,
            AgentRole::ContextAnalyzer,
            AgentRole::RiskAssessor,
            AgentRole::SingleAgent,
        ]
        .into_iter()
        .map(|r| (r, flip))
        .collect();
        RuleBackendConfig { flip_probability, confidence_correct: confidence, confidence_flipped: confidence, rng_seed }
    }

    pub fn flip_for(&self, role: AgentRole) -> f64 {
        self.flip_probability.get(&role).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        for (role, p) in &self.flip_probability {
            if !(0.0..0.5).contains(p) {
                return Err(BackendError::Config(format!(
                    "flip probability for {role} must lie in [0, 0.5), got {p}"
                )));
            }
        }
        for (name, c) in [("confidence_correct", self.confidence_correct), ("confidence_flipped", self.confidence_flipped)] {
            if !(0.0..=1.0).contains(&c) {
                return Err(BackendError::Config(format!("{name} must lie in [0, 1], got {c}")));
            }
        }
        Ok(())
    }
}

/// Offline stand-in for a language model.
///
/// Each role applies its own view of the statute, then inverts the verdict
/// with its configured probability. The random draw is keyed on
/// `(seed, role, action id)`, so results do not depend on call order or
/// concurrency.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    config: RuleBackendConfig,
}

impl RuleBackend {
    pub fn new(config: RuleBackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(RuleBackend { config })
    }

    pub fn noiseless() -> Self {
        RuleBackend { config: RuleBackendConfig::default() }
    }

    pub fn config(&self) -> &RuleBackendConfig {
        &self.config
    }

    fn draw(&self, role: AgentRole, action_id: &str) -> f64 {
        let mut hash = Fnv64::new();
        hash.write(&self.config.rng_seed.to_le_bytes());
        hash.write(role.as_str().as_bytes());
        hash.write(&[0xff]);
        hash.write(action_id.as_bytes());
        ChaCha8Rng::seed_from_u64(hash.finish()).random::<f64>()
    }
}

/// Verdict a role reaches before any noise, with the rationale it gives.
pub fn role_rule(role: AgentRole, action: &DataTransferAction) -> (ComplianceStatus, String) {
    let facts = &action.facts;
    let verdict = oracle::classify(facts);
    match role {
        AgentRole::ContextAnalyzer => {
            let status = ComplianceStatus::from_bool(facts.within_purpose);
            let why = if facts.within_purpose {
                "the operation is reasonably necessary for the stated business purpose"
            } else {
                "the operation is not aligned with the stated business purpose"
            };
            (status, format!("Business context: {why}."))
        }
        AgentRole::LegalAnalyst => {
            let scope = if facts.within_purpose { "within" } else { "outside" };
            let why = format!(
                "Statutory scope: the operation falls {scope} what is necessary for the purpose of utilization; {}.",
                verdict.basis.describe()
            );
            (verdict.status, why)
        }
        AgentRole::RiskAssessor => {
            let consent = if facts.consent_obtained {
                "prior consent is on record"
            } else {
                "no prior consent is on record"
            };
            let why = match verdict.basis {
                Basis::Consent | Basis::NoBasis | Basis::WithinPurpose => {
                    format!("Consent and risk: {consent}; {}.", verdict.basis.describe())
                }
                _ => format!("Consent and risk: {consent}, but a special circumstance applies: {}.", verdict.basis.describe()),
            };
            (verdict.status, why)
        }
        AgentRole::SingleAgent => (verdict.status, format!("Overall assessment: {}.", verdict.basis.describe())),
    }
}

impl AgentBackend for RuleBackend {
    fn analyze(&self, role: AgentRole, action: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        let (status, rationale) = role_rule(role, action);
        let flip = self.config.flip_for(role);
        let flipped = flip > 0.0 && self.draw(role, &action.id) < flip;
        let (status, confidence) = if flipped {
            (status.inverted(), self.config.confidence_flipped)
        } else {
            (status, self.config.confidence_correct)
        };
        Ok(AgentAnalysis::new(role, AgentVerdict::from(status), confidence, rationale))
    }

    fn kind(&self) -> &str {
        "rule"
    }
}

/// FNV-1a, enough to derive per-call seeds.
struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Exception, StructuredFacts};

    fn action(id: &str, facts: StructuredFacts) -> DataTransferAction {
        DataTransferAction {
            id: id.into(),
            company_context: "c".into(),
            stated_purpose: "p".into(),
            proposed_operation: "d".into(),
            operational_context: "o".into(),
            facts,
        }
    }

    #[test]
    fn noiseless_roles_follow_their_rules() {
        let b = RuleBackend::noiseless();
        let within = action("a", StructuredFacts { within_purpose: true, ..StructuredFacts::NONE });
        let a = b.analyze(AgentRole::LegalAnalyst, &within).unwrap();
        assert_eq!((a.verdict, a.confidence), (AgentVerdict::Compliant, 0.9));

        let none = action("b", StructuredFacts::NONE);
        let a = b.analyze(AgentRole::LegalAnalyst, &none).unwrap();
        assert_eq!((a.verdict, a.confidence), (AgentVerdict::NonCompliant, 0.9));

        let consent = action("c", StructuredFacts { consent_obtained: true, ..StructuredFacts::NONE });
        assert_eq!(b.analyze(AgentRole::ContextAnalyzer, &consent).unwrap().verdict, AgentVerdict::NonCompliant);
        assert_eq!(b.analyze(AgentRole::ContextAnalyzer, &within).unwrap().verdict, AgentVerdict::Compliant);
        assert_eq!(b.analyze(AgentRole::RiskAssessor, &consent).unwrap().verdict, AgentVerdict::Compliant);
        assert_eq!(b.analyze(AgentRole::RiskAssessor, &none).unwrap().verdict, AgentVerdict::NonCompliant);

        let health = action(
            "d",
            StructuredFacts { exception: Exception::PublicHealthChildren, ..StructuredFacts::NONE },
        );
        assert_eq!(b.analyze(AgentRole::RiskAssessor, &health).unwrap().verdict, AgentVerdict::Compliant);
    }

    #[test]
    fn half_flip_is_rejected() {
        let mut cfg = RuleBackendConfig::default();
        cfg.flip_probability.insert(AgentRole::ContextAnalyzer, 0.5);
        assert!(matches!(RuleBackend::new(cfg), Err(BackendError::Config(_))));
        assert!(RuleBackend::new(RuleBackendConfig::uniform(0.49, 0.7, 1)).is_ok());
        assert!(RuleBackend::new(RuleBackendConfig::uniform(-0.1, 0.7, 1)).is_err());
    }

    #[test]
    fn flips_are_keyed_not_sequential() {
        let b = RuleBackend::new(RuleBackendConfig::uniform(0.3, 0.7, 42)).unwrap();
        let a = action("x-1", StructuredFacts::NONE);
        let first = b.analyze(AgentRole::RiskAssessor, &a).unwrap();
        for _ in 0..5 {
            b.analyze(AgentRole::LegalAnalyst, &action("other", StructuredFacts::NONE)).unwrap();
        }
        assert_eq!(b.analyze(AgentRole::RiskAssessor, &a).unwrap(), first);
    }

    #[test]
    fn empirical_flip_rate() {
        let b = RuleBackend::new(RuleBackendConfig::uniform(0.2, 0.7, 7)).unwrap();
        let n = 20_000;
        let flips = (0..n)
            .filter(|i| {
                let a = action(&format!("case-{i}"), StructuredFacts::NONE);
                b.analyze(AgentRole::SingleAgent, &a).unwrap().verdict == AgentVerdict::Compliant
            })
            .count();
        let rate = flips as f64 / n as f64;
        assert!((rate - 0.2).abs() < 0.01, "{rate}");
    }
}
