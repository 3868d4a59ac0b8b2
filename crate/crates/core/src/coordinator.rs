//! Coordinator synthesis: combines the three specialist analyses into one decision.
//!
//! The combination is a confidence-weighted signed vote. Each non-abstaining
//! specialist contributes `weight * confidence * sign`, where COMPLIANT counts
//! +1 and NON_COMPLIANT counts -1, and weights are renormalized over the roles
//! that did not abstain. The decision is COMPLIANT only when the score is
//! strictly above `2 * decision_threshold - 1` (zero at the default threshold),
//! so ties fall to NON_COMPLIANT.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{
    clamp_confidence, AgentAnalysis, AgentRole, AgentVerdict, ComplianceStatus, SynthesisDecision,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthesisError {
    #[error("coordinator needs exactly one analysis per specialist role, got [{0}]")]
    WrongRoles(String),
    #[error("invalid coordinator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinatorConfig {
    pub weights: BTreeMap<AgentRole, f64>,
    pub decision_threshold: f64,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        CoordinatorConfig::with_weights(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    }
}

impl CoordinatorConfig {
    pub fn with_weights(legal: f64, context: f64, risk: f64) -> Self {
        let weights = AgentRole::SPECIALISTS.into_iter().zip([legal, context, risk]).collect();
        CoordinatorConfig { weights, decision_threshold: 0.5 }
    }

    pub fn weight(&self, role: AgentRole) -> f64 {
        self.weights.get(&role).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(SynthesisError::InvalidConfig(format!(
                "decision_threshold must lie in (0, 1), got {}",
                self.decision_threshold
            )));
        }
        if let Some(role) = self.weights.keys().find(|r| r.specialist_index().is_none()) {
            return Err(SynthesisError::InvalidConfig(format!("{role} is not a specialist role")));
        }
        for role in AgentRole::SPECIALISTS {
            let w = self.weight(role);
            if !w.is_finite() || w < 0.0 {
                return Err(SynthesisError::InvalidConfig(format!("weight for {role} must be finite and >= 0, got {w}")));
            }
        }
        if AgentRole::SPECIALISTS.iter().all(|&r| self.weight(r) == 0.0) {
            return Err(SynthesisError::InvalidConfig("at least one weight must be positive".to_string()));
        }
        Ok(())
    }

    /// Weights scaled to sum to one.
    pub fn normalized_weights(&self) -> [f64; 3] {
        let raw = AgentRole::SPECIALISTS.map(|r| self.weight(r));
        let total: f64 = raw.iter().sum();
        raw.map(|w| w / total)
    }
}

/// Orders the analyses by specialist role, rejecting anything but one per role.
fn by_role(analyses: &[AgentAnalysis]) -> Result<[&AgentAnalysis; 3], SynthesisError> {
    let mut slots: [Option<&AgentAnalysis>; 3] = [None, None, None];
    let mut ok = analyses.len() == 3;
    for a in analyses {
        match a.agent_role.specialist_index() {
            Some(i) if slots[i].is_none() => slots[i] = Some(a),
            _ => ok = false,
        }
    }
    match slots {
        [Some(l), Some(x), Some(r)] if ok => Ok([l, x, r]),
        _ => {
            let roles: Vec<&str> = analyses.iter().map(|a| a.agent_role.as_str()).collect();
            Err(SynthesisError::WrongRoles(roles.join(", ")))
        }
    }
}

/// Combines the three specialist analyses of `action_id` into a final decision.
///
/// The result depends only on the analyses and `config`; `elapsed_total` is
/// left at zero for the caller to fill in.
pub fn synthesize(
    action_id: &str,
    analyses: &[AgentAnalysis],
    config: &CoordinatorConfig,
) -> Result<SynthesisDecision, SynthesisError> {
    config.validate()?;
    let ordered = by_role(analyses)?;
    let weights = config.normalized_weights();

    let active_total: f64 = ordered
        .iter()
        .zip(weights)
        .filter(|(a, _)| a.verdict != AgentVerdict::Abstain)
        .map(|(_, w)| w)
        .sum();

    let mut justification = String::new();
    for a in ordered {
        let _ = writeln!(
            justification,
            "[{}] {} @ {:.3}: {}",
            a.agent_role,
            a.verdict.as_str(),
            a.confidence,
            a.rationale.trim()
        );
    }

    if active_total <= 0.0 {
        justification.push_str("No specialist produced a usable verdict; failing safe to NON_COMPLIANT.");
        return Ok(SynthesisDecision {
            action_id: action_id.to_string(),
            status: ComplianceStatus::NonCompliant,
            confidence: 0.0,
            justification,
            trace: analyses.to_vec(),
            elapsed_total: 0.0,
        });
    }

    let mut score = 0.0;
    let mut terms = Vec::new();
    for (a, w) in ordered.iter().zip(weights) {
        let sign = match a.verdict {
            AgentVerdict::Compliant => 1.0,
            AgentVerdict::NonCompliant => -1.0,
            AgentVerdict::Abstain => continue,
        };
        let weight = w / active_total;
        let term = weight * clamp_confidence(a.confidence) * sign;
        score += term;
        terms.push(format!("{:.3}x{:.3}x{:+}", weight, a.confidence, sign as i32));
    }

    let cutoff = 2.0 * config.decision_threshold - 1.0;
    let status = ComplianceStatus::from_bool(score > cutoff);
    let relation = if score > cutoff { ">" } else { "<=" };
    let _ = write!(
        justification,
        "Weighted score = {} = {:+.4} {} {:+.4}; final status {}.",
        terms.join(" + "),
        score,
        relation,
        cutoff,
        status
    );

    Ok(SynthesisDecision {
        action_id: action_id.to_string(),
        status,
        confidence: clamp_confidence(score.abs()),
        justification,
        trace: analyses.to_vec(),
        elapsed_total: 0.0,
    })
}

/// Maps the single-agent baseline's analysis straight onto a decision.
pub fn decide_single(action_id: &str, analysis: &AgentAnalysis) -> SynthesisDecision {
    let (status, confidence) = match analysis.verdict.status() {
        Some(status) => (status, clamp_confidence(analysis.confidence)),
        None => (ComplianceStatus::NonCompliant, 0.0),
    };
    let justification = match analysis.verdict {
        AgentVerdict::Abstain => format!("Baseline abstained; failing safe to NON_COMPLIANT. {}", analysis.rationale.trim()),
        _ => analysis.rationale.trim().to_string(),
    };
    SynthesisDecision {
        action_id: action_id.to_string(),
        status,
        confidence,
        justification,
        trace: Vec::new(),
        elapsed_total: analysis.elapsed,
    }
}
