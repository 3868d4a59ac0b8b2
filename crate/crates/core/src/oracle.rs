//! Deterministic Article 16 compliance function.
//!
//! An action is compliant when the operation is within the declared purpose,
//! prior consent was obtained, or one of the statutory exceptions applies.
//! Business succession does not add a branch: `within_purpose` is always
//! judged against the purpose that bound the data before the succession.

use serde::{Deserialize, Serialize};

use crate::domain::{ComplianceStatus, DataTransferAction, Exception, StructuredFacts};

/// The ground that made an action compliant, or `NoBasis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Basis {
    WithinPurpose,
    Consent,
    ExceptionLaw,
    ExceptionLife,
    ExceptionHealth,
    ExceptionGovernment,
    NoBasis,
}

impl Basis {
    pub fn describe(self) -> &'static str {
        match self {
            Basis::WithinPurpose => "the operation is necessary for the declared purpose of utilization",
            Basis::Consent => "the individual gave prior consent to handling beyond the declared purpose",
            Basis::ExceptionLaw => "the handling is based on laws or regulations",
            Basis::ExceptionLife => {
                "the handling protects human life, body or property and consent is difficult to obtain"
            }
            Basis::ExceptionHealth => {
                "the handling is needed for public health or the sound growth of children and consent is difficult to obtain"
            }
            Basis::ExceptionGovernment => {
                "the handling assists a government body performing duties prescribed by law"
            }
            Basis::NoBasis => {
                "the operation exceeds the declared purpose without prior consent and no exception applies"
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub status: ComplianceStatus,
    pub basis: Basis,
}

/// Classifies a set of facts. Precedence of reported grounds: purpose, consent, exceptions.
pub fn classify(facts: &StructuredFacts) -> OracleVerdict {
    let basis = if facts.within_purpose {
        Basis::WithinPurpose
    } else if facts.consent_obtained {
        Basis::Consent
    } else {
        match facts.exception {
            Exception::None => Basis::NoBasis,
            Exception::Law => Basis::ExceptionLaw,
            Exception::LifeBodyProperty => Basis::ExceptionLife,
            Exception::PublicHealthChildren => Basis::ExceptionHealth,
            Exception::GovernmentCooperation => Basis::ExceptionGovernment,
        }
    };
    OracleVerdict {
        status: ComplianceStatus::from_bool(basis != Basis::NoBasis),
        basis,
    }
}

pub fn classify_action(action: &DataTransferAction) -> OracleVerdict {
    classify(&action.facts)
}
