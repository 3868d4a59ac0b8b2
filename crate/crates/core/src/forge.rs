//! Stratified, template-driven generation of labeled cases.
//!
//! A template pack is a set of scenario templates, each tagged with a category
//! and the exact facts it describes, plus shared slot lists used to vary the
//! narrative. Generation draws everything from one seeded ChaCha stream, so
//! the corpus is a pure function of the configuration and the pack.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_case, CaseCategory, ComplianceStatus, DataTransferAction, Exception, LabeledCase, StructuredFacts,
};
use crate::oracle;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForgeError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("template pack error: {0}")]
    Pack(String),
    #[error("generated case {id} failed validation: {violations}")]
    InvalidCase { id: String, violations: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub per_category_count: usize,
    pub rng_seed: u64,
    pub edge_case_compliant_fraction: f64,
    /// Directory of template files; `None` selects the built-in pack.
    pub template_pack: Option<String>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            per_category_count: 50,
            rng_seed: 20_250_416,
            edge_case_compliant_fraction: 0.4,
            template_pack: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.per_category_count == 0 {
            return Err(ForgeError::Config("per_category_count must be at least 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.edge_case_compliant_fraction) {
            return Err(ForgeError::Config(format!(
                "edge_case_compliant_fraction must lie in [0, 1], got {}",
                self.edge_case_compliant_fraction
            )));
        }
        Ok(())
    }

    /// Number of COMPLIANT edge cases, rounded half up.
    pub fn edge_compliant_count(&self) -> usize {
        let exact = self.edge_case_compliant_fraction * self.per_category_count as f64;
        ((exact + 0.5) as usize).min(self.per_category_count)
    }
}

/// One narrative scenario. Text fields may reference slots as `{slot_name}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    pub id: String,
    pub category: CaseCategory,
    /// Facts this narrative asserts; copied verbatim onto every generated case.
    pub facts: StructuredFacts,
    pub company_context: String,
    pub stated_purpose: String,
    pub proposed_operation: String,
    pub operational_context: String,
    pub reasoning: String,
}

impl ScenarioTemplate {
    fn fields(&self) -> [&str; 5] {
        [
            &self.company_context,
            &self.stated_purpose,
            &self.proposed_operation,
            &self.operational_context,
            &self.reasoning,
        ]
    }

    pub fn label(&self) -> ComplianceStatus {
        oracle::classify(&self.facts).status
    }

    /// Checks the declared facts against what the category promises.
    pub fn category_mismatch(&self) -> Option<&'static str> {
        let f = &self.facts;
        match self.category {
            CaseCategory::ClearCompliance if !(f.within_purpose && !f.consent_obtained && f.exception == Exception::None) => {
                Some("clear-compliance scenarios must be within purpose, without consent or exception")
            }
            CaseCategory::ClearViolation if oracle::classify(f).status != ComplianceStatus::NonCompliant => {
                Some("clear-violation scenarios must declare every ground absent")
            }
            CaseCategory::ConsentBased if !(!f.within_purpose && f.consent_obtained && f.exception == Exception::None) => {
                Some("consent-based scenarios must be beyond purpose with consent and no exception")
            }
            _ => None,
        }
    }
}

/// A single template file: optional slot lists and scenarios.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateFile {
    pub slots: BTreeMap<String, Vec<String>>,
    pub scenarios: Vec<ScenarioTemplate>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePack {
    pub slots: BTreeMap<String, Vec<String>>,
    pub scenarios: Vec<ScenarioTemplate>,
}

impl TemplatePack {
    /// Merges files in the given order. A slot defined twice is an error.
    pub fn from_files(files: impl IntoIterator<Item = (String, TemplateFile)>) -> Result<Self, ForgeError> {
        let mut pack = TemplatePack::default();
        for (name, file) in files {
            for (slot, values) in file.slots {
                if pack.slots.contains_key(&slot) {
                    return Err(ForgeError::Pack(format!("slot {slot:?} redefined in {name}")));
                }
                pack.slots.insert(slot, values);
            }
            pack.scenarios.extend(file.scenarios);
        }
        Ok(pack)
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        let mut ids = BTreeSet::new();
        for (slot, values) in &self.slots {
            if values.is_empty() || values.iter().any(|v| v.trim().is_empty()) {
                return Err(ForgeError::Pack(format!("slot {slot:?} has an empty option list or blank option")));
            }
        }
        for s in &self.scenarios {
            if !ids.insert(s.id.as_str()) {
                return Err(ForgeError::Pack(format!("duplicate scenario id {:?}", s.id)));
            }
            if let Some(why) = s.category_mismatch() {
                return Err(ForgeError::Pack(format!("scenario {:?}: {why}", s.id)));
            }
            for field in s.fields() {
                if field.trim().is_empty() {
                    return Err(ForgeError::Pack(format!("scenario {:?} has an empty text field", s.id)));
                }
                for slot in slot_names(field).map_err(|e| ForgeError::Pack(format!("scenario {:?}: {e}", s.id)))? {
                    if !self.slots.contains_key(slot) {
                        return Err(ForgeError::Pack(format!("scenario {:?} references unknown slot {slot:?}", s.id)));
                    }
                }
            }
        }
        Ok(())
    }

    fn candidates(&self, category: CaseCategory, label: ComplianceStatus) -> Vec<&ScenarioTemplate> {
        self.scenarios.iter().filter(|s| s.category == category && s.label() == label).collect()
    }
}

fn slot_names(text: &str) -> Result<Vec<&str>, String> {
    let mut names = Vec::new();
    let mut rest = text;
    let mut offset = 0;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(format!("stray '}}' at byte {}", offset + open));
        }
        let close = rest[open + 1..]
            .find('}')
            .ok_or_else(|| format!("unclosed '{{' at byte {}", offset + open))?;
        names.push(&rest[open + 1..open + 1 + close]);
        offset += open + close + 2;
        rest = &rest[open + close + 2..];
    }
    Ok(names)
}

fn fill(text: &str, values: &BTreeMap<&str, &str>) -> String {
    let mut out = String::with_capacity(text.len() + 64);
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let close = open + 1 + rest[open + 1..].find('}').unwrap_or(0);
        out.push_str(&rest[..open]);
        out.push_str(values.get(&rest[open + 1..close]).copied().unwrap_or(""));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

fn instantiate(
    scenario: &ScenarioTemplate,
    pack: &TemplatePack,
    id: String,
    rng: &mut ChaCha8Rng,
) -> LabeledCase {
    // Slots are drawn once per case, in order of first appearance, so repeated references agree.
    let mut values: BTreeMap<&str, &str> = BTreeMap::new();
    for field in scenario.fields() {
        for slot in slot_names(field).unwrap_or_default() {
            if !values.contains_key(slot) {
                let options = &pack.slots[slot];
                values.insert(slot, &options[rng.random_range(0..options.len())]);
            }
        }
    }
    let verdict = oracle::classify(&scenario.facts);
    let reasoning = format!(
        "{}: {}. {}",
        verdict.status,
        verdict.basis.describe(),
        fill(&scenario.reasoning, &values)
    );
    LabeledCase {
        action: DataTransferAction {
            id,
            company_context: fill(&scenario.company_context, &values),
            stated_purpose: fill(&scenario.stated_purpose, &values),
            proposed_operation: fill(&scenario.proposed_operation, &values),
            operational_context: fill(&scenario.operational_context, &values),
            facts: scenario.facts,
        },
        category: scenario.category,
        ground_truth: verdict.status,
        reasoning,
    }
}

/// Generates `4 * per_category_count` cases, category by category.
pub fn generate(config: &GeneratorConfig, pack: &TemplatePack) -> Result<Vec<LabeledCase>, ForgeError> {
    config.validate()?;
    pack.validate()?;
    let n = config.per_category_count;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut cases = Vec::with_capacity(4 * n);

    for category in CaseCategory::ALL {
        let mut labels: Vec<ComplianceStatus> = match category {
            CaseCategory::ClearViolation => alloc::vec![ComplianceStatus::NonCompliant; n],
            CaseCategory::ClearCompliance | CaseCategory::ConsentBased => alloc::vec![ComplianceStatus::Compliant; n],
            CaseCategory::EdgeCase => {
                let compliant = config.edge_compliant_count();
                let mut v = alloc::vec![ComplianceStatus::Compliant; compliant];
                v.resize(n, ComplianceStatus::NonCompliant);
                v.shuffle(&mut rng);
                v
            }
        };
        for (i, label) in labels.drain(..).enumerate() {
            let pool = pack.candidates(category, label);
            if pool.is_empty() {
                return Err(ForgeError::Pack(format!("no {label} scenario available for {category}")));
            }
            let scenario = pool[rng.random_range(0..pool.len())];
            let id = format!("{}-{:03}", category.id_prefix(), i + 1);
            let case = instantiate(scenario, pack, id, &mut rng);
            if let crate::domain::Validation::Violations(v) = validate_case(&case) {
                return Err(ForgeError::InvalidCase { id: case.action.id, violations: v.join("; ") });
            }
            cases.push(case);
        }
    }
    Ok(cases)
}
