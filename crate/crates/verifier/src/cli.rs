//! Command-line surface: `generate`, `verify`, `evaluate`, `compare`, `calibrate`.
//!
//! Exit codes: 0 success, 2 I/O, 3 configuration, 4 data contract, 5 backend exhaustion.

use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use appi_verify_core::backend::{AgentBackend, RuleBackend};
use appi_verify_core::domain::LabeledCase;
use appi_verify_core::forge::ForgeError;
use appi_verify_core::metrics::{self, compare_reports, EvaluationReport};
use appi_verify_core::SynthesisDecision;
use clap::{Args, Parser, Subcommand};

use crate::batch::{run_batch, BatchError};
use crate::config::{AppConfig, BackendKind, ConfigError};
use crate::corpus::{self, CorpusError, CorpusManifest, JsonlWriter};
use crate::llm::LlmBackend;
use crate::manifest::{RunDir, RunManifest, MANIFEST_FILE};
use crate::report;
use crate::runtime::{Mode, RuntimeOptions, Verifier};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data contract violation: {0}")]
    Data(String),
    #[error("backend exhausted: {0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Backend(_) => 5,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Io(e.to_string()),
            CorpusError::Forge(ForgeError::Config(_) | ForgeError::Pack(_)) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "appi-verify", version, about = "Multi-agent compliance verification for APPI Article 16 data handling")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the generator seed (generate) or the rule backend seed (verify).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Number of cases verified concurrently.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    /// Root directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stratified labeled corpus.
    Generate {
        /// Cases per category.
        #[arg(long)]
        count: Option<usize>,
        /// Fraction of edge cases labeled COMPLIANT.
        #[arg(long)]
        edge_fraction: Option<f64>,
        /// Directory of template files replacing the built-in pack.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Run the single-agent or multi-agent pipeline over a corpus.
    Verify {
        #[arg(long)]
        corpus: PathBuf,
        /// Flip probability applied to every role of the rule backend.
        #[arg(long)]
        flip: Option<f64>,
    },
    /// Compute evaluation reports for one or more decision files.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Decision files; with two, the first is the baseline and the second the candidate.
        #[arg(long = "decisions", required = true, num_args = 1..)]
        decisions: Vec<PathBuf>,
    },
    /// Compare a baseline report with a candidate report.
    Compare { baseline: PathBuf, candidate: PathBuf },
    /// Reliability bins and expected calibration error for a decision file.
    Calibrate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
    },
}

/// Loads the config file and applies flag overrides.
pub fn effective_config(common: &CommonArgs) -> Result<AppConfig, CliError> {
    let mut cfg = AppConfig::load(common.config.as_deref())?;
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    if let Some(b) = common.backend {
        cfg.backend = b;
    }
    if let Some(p) = common.parallel {
        cfg.parallel = p;
    }
    Ok(cfg)
}

/// Runs a parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = effective_config(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::Generate { count, edge_fraction, templates } => {
            if let Some(seed) = cli.common.seed {
                cfg.generator.rng_seed = seed;
            }
            if let Some(c) = count {
                cfg.generator.per_category_count = c;
            }
            if let Some(f) = edge_fraction {
                cfg.generator.edge_case_compliant_fraction = f;
            }
            if let Some(t) = templates {
                cfg.generator.template_pack = Some(t.display().to_string());
            }
            cfg.validate()?;
            let dir = cmd_generate(&cfg, &out)?;
            println!("{}", dir.display());
        }
        Command::Verify { corpus, flip } => {
            if let Some(seed) = cli.common.seed {
                cfg.rule_backend.rng_seed = seed;
            }
            if let Some(p) = flip {
                let uniform = appi_verify_core::RuleBackendConfig::uniform(
                    p,
                    cfg.rule_backend.confidence_correct,
                    cfg.rule_backend.rng_seed,
                );
                cfg.rule_backend.flip_probability = uniform.flip_probability;
            }
            cfg.validate()?;
            let dir = cmd_verify(&cfg, &corpus, &out, &AtomicBool::new(false))?;
            println!("{}", dir.display());
        }
        Command::Evaluate { corpus, decisions } => {
            let dir = cmd_evaluate(&cfg, &corpus, &decisions, &out)?;
            println!("{}", dir.display());
        }
        Command::Compare { baseline, candidate } => {
            let table = cmd_compare(&baseline, &candidate)?;
            print!("{table}");
        }
        Command::Calibrate { corpus, decisions } => {
            let dir = cmd_calibrate(&cfg, &corpus, &decisions, &out)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

pub fn cmd_generate(cfg: &AppConfig, out: &Path) -> Result<PathBuf, CliError> {
    let mut run = RunDir::create(out, "generate", cfg.hash())?;
    let manifest = corpus::generate_to(&cfg.generator, &run.file("corpus.jsonl"))?;
    run.manifest.corpus_manifest_hash = Some(corpus::sha256_file(&run.file("corpus.manifest.json"))?);
    run.manifest.notes.push(format!("{} cases, seed {}", manifest.total, manifest.rng_seed));
    run.finish(&["corpus.jsonl", "corpus.manifest.json"])?;
    Ok(run.path)
}

/// Reads a corpus, checking its sidecar manifest hash when one exists.
pub fn load_corpus(path: &Path) -> Result<(Vec<LabeledCase>, Option<String>), CliError> {
    let sidecar = CorpusManifest::path_for(path);
    let hash = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| io_err(&sidecar, e))?;
        let manifest: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", sidecar.display())))?;
        manifest.verify(path)?;
        Some(corpus::sha256_hex(text.as_bytes()))
    } else {
        None
    };
    Ok((corpus::read_corpus(path)?, hash))
}

/// The backend for every role, plus the same instance as a model coordinator when it is an LLM.
type Backends = (Arc<dyn AgentBackend>, Option<Arc<LlmBackend>>);

fn build_backend(cfg: &AppConfig) -> Result<Backends, CliError> {
    match cfg.backend {
        BackendKind::Rule => {
            let b = RuleBackend::new(cfg.rule_backend.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((Arc::new(b), None))
        }
        BackendKind::Llm => {
            let b = Arc::new(LlmBackend::new(cfg.llm.clone()).map_err(|e| CliError::Config(e.to_string()))?);
            Ok((b.clone(), Some(b)))
        }
    }
}

pub fn build_verifier(cfg: &AppConfig) -> Result<Verifier, CliError> {
    let (backend, llm) = build_backend(cfg)?;
    let mut verifier = Verifier::new(backend, cfg.coordinator.clone())
        .map_err(|e| CliError::Config(e.to_string()))?
        .with_options(RuntimeOptions {
            agent_timeout: cfg.agent_timeout_secs.map(Duration::from_secs_f64),
            concurrent_agents: true,
        });
    if cfg.coordinator_model {
        match llm {
            Some(model) => verifier = verifier.with_model_coordinator(model),
            None => return Err(CliError::Config("coordinator_model requires the llm backend".into())),
        }
    }
    Ok(verifier)
}

pub fn cmd_verify(cfg: &AppConfig, corpus_path: &Path, out: &Path, cancel: &AtomicBool) -> Result<PathBuf, CliError> {
    let verifier = build_verifier(cfg)?;
    let (cases, corpus_hash) = load_corpus(corpus_path)?;
    let actions: Vec<_> = cases.into_iter().map(|c| c.action).collect();

    let mut run = RunDir::create(out, &format!("verify-{}", cfg.mode.as_str()), cfg.hash())?;
    run.manifest.mode = Some(cfg.mode.as_str().to_string());
    run.manifest.backend = Some(cfg.backend.as_str().to_string());
    run.manifest.corpus_manifest_hash = corpus_hash;
    run.manifest.notes.push(format!("corpus {}", corpus_path.display()));
    run.save()?;

    let mut writer = JsonlWriter::create(&run.file("decisions.jsonl"))?;
    let result = run_batch(&verifier, &actions, cfg.mode, cfg.parallel, cancel, |d| writer.write(d));
    let outcome = match result {
        Ok(o) => o,
        Err(BatchError::Contract { action_id, source, partial }) => {
            run.manifest.notes.push(format!("aborted at {action_id} after {} decisions", partial.decisions.len()));
            run.save()?;
            return Err(CliError::Data(format!("action {action_id}: {source}")));
        }
        Err(BatchError::Sink(e, _)) => return Err(e.into()),
    };
    if outcome.interrupted {
        run.manifest.notes.push(format!("interrupted after {} of {} decisions", outcome.decisions.len(), actions.len()));
        run.save()?;
        return Ok(run.path);
    }
    if !outcome.total_failures.is_empty() {
        run.manifest.notes.push(format!("every backend failed on: {}", outcome.total_failures.join(", ")));
    }
    run.finish(&["decisions.jsonl"])?;
    if !outcome.total_failures.is_empty() {
        return Err(CliError::Backend(format!(
            "{} of {} cases fell back to NON_COMPLIANT; decisions in {}",
            outcome.total_failures.len(),
            actions.len(),
            run.path.display()
        )));
    }
    Ok(run.path)
}

/// Reads a decisions file, verifying its run manifest when the file sits in a run directory.
pub fn load_decisions(path: &Path) -> Result<(Vec<SynthesisDecision>, Option<RunManifest>), CliError> {
    let manifest = match path.parent().map(|p| p.join(MANIFEST_FILE)) {
        Some(m) if m.exists() => Some(RunManifest::load_verified(m.parent().expect("has parent"))?),
        _ => None,
    };
    Ok((corpus::read_decisions(path)?, manifest))
}

fn label_for(index: usize, manifest: &Option<RunManifest>, taken: &[String]) -> String {
    let base = manifest.as_ref().and_then(|m| m.mode.clone()).unwrap_or_else(|| format!("run{}", index + 1));
    if taken.contains(&base) {
        format!("{base}{}", index + 1)
    } else {
        base
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &serde_json::to_string_pretty(value).expect("serializes"))
}

pub fn cmd_evaluate(cfg: &AppConfig, corpus_path: &Path, decision_paths: &[PathBuf], out: &Path) -> Result<PathBuf, CliError> {
    let (cases, corpus_hash) = load_corpus(corpus_path)?;
    let mut loaded = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (i, p) in decision_paths.iter().enumerate() {
        let (decisions, manifest) = load_decisions(p)?;
        labels.push(label_for(i, &manifest, &labels));
        loaded.push(decisions);
    }
    let mut reports = Vec::new();
    for decisions in &loaded {
        reports.push(metrics::evaluate(&cases, decisions).map_err(|e| CliError::Data(e.to_string()))?);
    }

    let mut run = RunDir::create(out, "evaluate", cfg.hash())?;
    run.manifest.corpus_manifest_hash = corpus_hash;
    let mut outputs = Vec::new();
    if reports.len() == 2 {
        let cmp = metrics::compare_timing(&loaded[1], &loaded[0]);
        reports[1].timing.ratio_vs_comparison = cmp.ratio;
        let table = compare_reports(&reports[0], &reports[1]).map_err(|e| CliError::Data(e.to_string()))?;
        write_json(&run.file("comparison.json"), &table)?;
        write_text(&run.file("comparison.md"), &report::comparison_markdown(&table))?;
        outputs.extend(["comparison.json".to_string(), "comparison.md".to_string()]);
    }
    for ((label, report), decisions) in labels.iter().zip(&reports).zip(&loaded) {
        let stem = format!("report-{label}");
        write_json(&run.file(&format!("{stem}.json")), report)?;
        write_text(&run.file(&format!("{stem}.md")), &report::report_markdown(&format!("Evaluation: {label}"), report))?;
        let csv_path = run.file(&format!("cases-{label}.csv"));
        report::write_case_csv(&cases, decisions, &csv_path).map_err(|e| io_err(&csv_path, e))?;
        outputs.extend([format!("{stem}.json"), format!("{stem}.md"), format!("cases-{label}.csv")]);
        println!(
            "{label}: accuracy {:.3} precision {:.3} recall {:.3} f1 {:.3} ece {:.4}",
            report.overall.accuracy, report.overall.precision, report.overall.recall, report.overall.f1, report.calibration.ece
        );
    }
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    run.finish(&names)?;
    Ok(run.path)
}

fn read_report(path: &Path) -> Result<EvaluationReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn cmd_compare(baseline: &Path, candidate: &Path) -> Result<String, CliError> {
    let (a, b) = (read_report(baseline)?, read_report(candidate)?);
    let table = compare_reports(&a, &b).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(report::comparison_markdown(&table))
}

pub fn cmd_calibrate(cfg: &AppConfig, corpus_path: &Path, decisions: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let (cases, _) = load_corpus(corpus_path)?;
    let (decisions, _) = load_decisions(decisions)?;
    let cal = metrics::calibration(&decisions, &cases).map_err(|e| CliError::Data(e.to_string()))?;
    let mut run = RunDir::create(out, "calibrate", cfg.hash())?;
    write_json(&run.file("calibration.json"), &cal)?;
    write_text(&run.file("calibration.md"), &report::calibration_markdown(&cal))?;
    run.finish(&["calibration.json", "calibration.md"])?;
    println!("ECE {:.4}", cal.ece);
    Ok(run.path)
}
