//! JSONL corpus and decision files, template packs and their sidecar manifests.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use appi_verify_core::domain::{validate_case, CaseCategory, LabeledCase, Validation};
use appi_verify_core::forge::{ForgeError, GeneratorConfig, TemplateFile, TemplatePack};
use appi_verify_core::SynthesisDecision;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: case {id} is invalid: {violations}")]
    Invalid { path: PathBuf, line: usize, id: String, violations: String },
    #[error("{path}: hash mismatch, manifest says {expected}, file has {actual}")]
    HashMismatch { path: PathBuf, expected: String, actual: String },
    #[error(transparent)]
    Forge(#[from] ForgeError),
}

impl CorpusError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

const BUILTIN_TEMPLATES: [(&str, &str); 5] = [
    ("00_slots.json", include_str!("../assets/templates/00_slots.json")),
    ("clear_compliance.json", include_str!("../assets/templates/clear_compliance.json")),
    ("clear_violation.json", include_str!("../assets/templates/clear_violation.json")),
    ("consent_based.json", include_str!("../assets/templates/consent_based.json")),
    ("edge_case.json", include_str!("../assets/templates/edge_case.json")),
];

/// A loaded template pack with the hash of its source files.
#[derive(Debug, Clone)]
pub struct LoadedPack {
    pub pack: TemplatePack,
    pub sha256: String,
    pub source: String,
}

fn assemble(files: Vec<(String, String)>, source: String) -> Result<LoadedPack, CorpusError> {
    let mut hasher = Sha256::new();
    let mut parsed = Vec::with_capacity(files.len());
    for (name, text) in files {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(text.as_bytes());
        hasher.update([0]);
        let file: TemplateFile = serde_json::from_str(&text)
            .map_err(|e| ForgeError::Pack(format!("{name}: {e}")))?;
        parsed.push((name, file));
    }
    let pack = TemplatePack::from_files(parsed)?;
    pack.validate()?;
    Ok(LoadedPack { pack, sha256: hex::encode(hasher.finalize()), source })
}

pub fn builtin_template_pack() -> LoadedPack {
    let files = BUILTIN_TEMPLATES.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect();
    assemble(files, "builtin".to_string()).expect("built-in template pack is valid")
}

/// Reads every `*.json` file in `dir`, in file-name order.
pub fn load_template_pack(dir: &Path) -> Result<LoadedPack, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CorpusError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(ForgeError::Pack(format!("no template files in {}", dir.display())).into());
    }
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| CorpusError::io(&p, e))?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.push((name, text));
    }
    assemble(files, dir.display().to_string())
}

pub fn pack_for(config: &GeneratorConfig) -> Result<LoadedPack, CorpusError> {
    match &config.template_pack {
        Some(dir) => load_template_pack(Path::new(dir)),
        None => Ok(builtin_template_pack()),
    }
}

/// Serializes records as JSONL bytes.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }
    fs::write(path, to_jsonl(records)).map_err(|e| CorpusError::io(path, e))
}

/// Reads JSONL records, skipping blank lines; errors name the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

pub fn write_corpus(cases: &[LabeledCase], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(cases, path)
}

/// Reads and validates a corpus, including label agreement with the oracle and id uniqueness.
pub fn read_corpus(path: &Path) -> Result<Vec<LabeledCase>, CorpusError> {
    let mut seen = std::collections::HashSet::new();
    let mut cases = Vec::new();
    for (line, case) in read_jsonl::<LabeledCase>(path)? {
        let mut violations = match validate_case(&case) {
            Validation::Ok => Vec::new(),
            Validation::Violations(v) => v,
        };
        if !seen.insert(case.action.id.clone()) {
            violations.push(format!("duplicate id {}", case.action.id));
        }
        if !violations.is_empty() {
            return Err(CorpusError::Invalid {
                path: path.to_path_buf(),
                line,
                id: case.action.id,
                violations: violations.join("; "),
            });
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn write_decisions(decisions: &[SynthesisDecision], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(decisions, path)
}

pub fn read_decisions(path: &Path) -> Result<Vec<SynthesisDecision>, CorpusError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, d)| d).collect())
}

/// Appends JSONL records as they arrive; each line is flushed immediately.
pub struct JsonlWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(JsonlWriter { out: BufWriter::new(file), path: path.to_path_buf() })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), CorpusError> {
        let io = |e| CorpusError::io(&self.path, e);
        serde_json::to_writer(&mut self.out, record).map_err(|e| io(e.into()))?;
        self.out.write_all(b"\n").map_err(io)?;
        self.out.flush().map_err(io)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CorpusError> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| CorpusError::io(path, e))?))
}

/// Sidecar written next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub generator: GeneratorConfig,
    pub rng_seed: u64,
    pub template_pack: String,
    pub template_pack_sha256: String,
    pub corpus_file: String,
    pub corpus_sha256: String,
    pub total: usize,
    pub counts: std::collections::BTreeMap<CaseCategory, usize>,
    pub edge_case_compliant: usize,
}

impl CorpusManifest {
    pub fn describe(config: &GeneratorConfig, pack: &LoadedPack, cases: &[LabeledCase], corpus_file: &str, bytes: &[u8]) -> Self {
        let mut counts = std::collections::BTreeMap::new();
        for c in cases {
            *counts.entry(c.category).or_insert(0) += 1;
        }
        CorpusManifest {
            generator: config.clone(),
            rng_seed: config.rng_seed,
            template_pack: pack.source.clone(),
            template_pack_sha256: pack.sha256.clone(),
            corpus_file: corpus_file.to_string(),
            corpus_sha256: sha256_hex(bytes),
            total: cases.len(),
            counts,
            edge_case_compliant: cases
                .iter()
                .filter(|c| c.category == CaseCategory::EdgeCase && c.ground_truth.is_compliant())
                .count(),
        }
    }

    /// Sidecar path for a corpus file: `corpus.jsonl` -> `corpus.manifest.json`.
    pub fn path_for(corpus: &Path) -> PathBuf {
        corpus.with_extension("manifest.json")
    }

    /// Recomputes the corpus hash and compares it to the recorded one.
    pub fn verify(&self, corpus: &Path) -> Result<(), CorpusError> {
        let actual = sha256_file(corpus)?;
        if actual != self.corpus_sha256 {
            return Err(CorpusError::HashMismatch {
                path: corpus.to_path_buf(),
                expected: self.corpus_sha256.clone(),
                actual,
            });
        }
        Ok(())
    }
}

/// Generates a corpus and writes it with its sidecar manifest.
pub fn generate_to(config: &GeneratorConfig, corpus_path: &Path) -> Result<CorpusManifest, CorpusError> {
    let pack = pack_for(config)?;
    let cases = appi_verify_core::forge::generate(config, &pack.pack)?;
    let bytes = to_jsonl(&cases);
    if let Some(parent) = corpus_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }
    fs::write(corpus_path, &bytes).map_err(|e| CorpusError::io(corpus_path, e))?;
    let name = corpus_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = CorpusManifest::describe(config, &pack, &cases, &name, &bytes);
    let manifest_path = CorpusManifest::path_for(corpus_path);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(|e| CorpusError::io(&manifest_path, e))?;
    Ok(manifest)
}
