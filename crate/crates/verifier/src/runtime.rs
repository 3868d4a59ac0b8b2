//! Gather-then-synthesize verification protocol over pluggable backends.
//!
//! The three specialists analyze an action (concurrently by default), then
//! the coordinator combines their analyses. Backend failures and timeouts
//! degrade to ABSTAIN analyses; only an action on which every backend failed
//! surfaces as an error, and that error still carries the fail-safe decision.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use appi_verify_core::backend::{AgentBackend, BackendError};
use appi_verify_core::coordinator::{decide_single, synthesize, CoordinatorConfig, SynthesisError};
use appi_verify_core::domain::{AgentAnalysis, AgentRole, AgentVerdict, ComplianceStatus, DataTransferAction, Plan};
use appi_verify_core::SynthesisDecision;
use serde::{Deserialize, Serialize};

/// Source of elapsed time, in seconds.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

#[derive(Debug)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Clock that only moves when told to; used to inject latencies without sleeping.
#[derive(Debug, Default)]
pub struct SimulatedClock {
    nanos: AtomicU64,
}

impl SimulatedClock {
    pub fn advance(&self, seconds: f64) {
        self.nanos.fetch_add((seconds * 1e9).round() as u64, Ordering::SeqCst);
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> f64 {
        self.nanos.load(Ordering::SeqCst) as f64 / 1e9
    }
}

/// Wraps a backend so every call advances a simulated clock by a fixed latency.
pub struct LatencyBackend<B> {
    pub inner: B,
    pub clock: Arc<SimulatedClock>,
    pub latency: f64,
}

impl<B: AgentBackend> AgentBackend for LatencyBackend<B> {
    fn analyze(&self, role: AgentRole, action: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        self.clock.advance(self.latency);
        self.inner.analyze(role, action)
    }

    fn kind(&self) -> &str {
        self.inner.kind()
    }

    fn single_flight(&self) -> bool {
        self.inner.single_flight()
    }
}

/// Serializes calls into a backend that declared itself single-flight.
struct Serialized {
    inner: Arc<dyn AgentBackend>,
    gate: Mutex<()>,
}

impl AgentBackend for Serialized {
    fn analyze(&self, role: AgentRole, action: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        let _guard = self.gate.lock().unwrap_or_else(|p| p.into_inner());
        self.inner.analyze(role, action)
    }

    fn kind(&self) -> &str {
        self.inner.kind()
    }
}

/// A model that can stand in for the weighted-vote coordinator.
pub trait SynthesisModel: Send + Sync {
    fn synthesize(&self, action: &DataTransferAction, analyses: &[AgentAnalysis]) -> Result<AgentAnalysis, BackendError>;
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("invalid action: {}", .0.join("; "))]
    InvalidAction(Vec<String>),
    #[error("invalid plan: {}", .0.join("; "))]
    InvalidPlan(Vec<String>),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("every backend failed on action {}", .fallback.action_id)]
    TotalFailure { fallback: Box<SynthesisDecision> },
    #[error("plan aborted at action {failed_action} after {} decisions: {source}", .partial.len())]
    PlanAborted {
        partial: Vec<SynthesisDecision>,
        failed_action: String,
        #[source]
        source: Box<RuntimeError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Multi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RuntimeOptions {
    /// Per-agent deadline; a late agent abstains.
    pub agent_timeout: Option<Duration>,
    /// Run the three specialists on separate threads.
    pub concurrent_agents: bool,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        RuntimeOptions { agent_timeout: None, concurrent_agents: true }
    }
}

pub struct Verifier {
    specialists: [Arc<dyn AgentBackend>; 3],
    single: Arc<dyn AgentBackend>,
    coordinator: CoordinatorConfig,
    model_coordinator: Option<Arc<dyn SynthesisModel>>,
    clock: Arc<dyn Clock>,
    options: RuntimeOptions,
}

/// Result of one agent call, before it is folded into an analysis.
struct AgentOutcome {
    analysis: AgentAnalysis,
    failed: bool,
}

impl Verifier {
    /// Uses one backend for every role.
    pub fn new(backend: Arc<dyn AgentBackend>, coordinator: CoordinatorConfig) -> Result<Self, RuntimeError> {
        Self::with_backends([backend.clone(), backend.clone(), backend.clone()], backend, coordinator)
    }

    /// Specialist backends in protocol order: legal analyst, context analyzer, risk assessor.
    pub fn with_backends(
        specialists: [Arc<dyn AgentBackend>; 3],
        single: Arc<dyn AgentBackend>,
        coordinator: CoordinatorConfig,
    ) -> Result<Self, RuntimeError> {
        coordinator.validate()?;
        // Single-flight backends get one gate per distinct instance.
        let mut gated: Vec<(Arc<dyn AgentBackend>, Arc<dyn AgentBackend>)> = Vec::new();
        let mut gate = |b: Arc<dyn AgentBackend>| -> Arc<dyn AgentBackend> {
            if !b.single_flight() {
                return b;
            }
            if let Some((_, g)) = gated.iter().find(|(orig, _)| Arc::ptr_eq(orig, &b)) {
                return g.clone();
            }
            let g: Arc<dyn AgentBackend> = Arc::new(Serialized { inner: b.clone(), gate: Mutex::new(()) });
            gated.push((b, g.clone()));
            g
        };
        let specialists = specialists.map(&mut gate);
        let single = gate(single);
        Ok(Verifier {
            specialists,
            single,
            coordinator,
            model_coordinator: None,
            clock: Arc::new(SystemClock::default()),
            options: RuntimeOptions::default(),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_options(mut self, options: RuntimeOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_model_coordinator(mut self, model: Arc<dyn SynthesisModel>) -> Self {
        self.model_coordinator = Some(model);
        self
    }

    pub fn coordinator_config(&self) -> &CoordinatorConfig {
        &self.coordinator
    }

    fn call(&self, backend: &Arc<dyn AgentBackend>, role: AgentRole, action: &DataTransferAction) -> AgentOutcome {
        call_agent(backend.clone(), role, action, self.options.agent_timeout, self.clock.as_ref())
    }

    pub fn analyze_legal(&self, action: &DataTransferAction) -> AgentAnalysis {
        self.call(&self.specialists[0], AgentRole::LegalAnalyst, action).analysis
    }

    pub fn analyze_context(&self, action: &DataTransferAction) -> AgentAnalysis {
        self.call(&self.specialists[1], AgentRole::ContextAnalyzer, action).analysis
    }

    pub fn analyze_risk(&self, action: &DataTransferAction) -> AgentAnalysis {
        self.call(&self.specialists[2], AgentRole::RiskAssessor, action).analysis
    }

    pub fn verify_multi(&self, action: &DataTransferAction) -> Result<SynthesisDecision, RuntimeError> {
        check_action(action)?;
        let start = self.clock.now();
        let outcomes: Vec<AgentOutcome> = if self.options.concurrent_agents {
            thread::scope(|s| {
                let handles: Vec<_> = AgentRole::SPECIALISTS
                    .iter()
                    .zip(&self.specialists)
                    .map(|(&role, backend)| s.spawn(move || self.call(backend, role, action)))
                    .collect();
                handles
                    .into_iter()
                    .zip(AgentRole::SPECIALISTS)
                    .map(|(h, role)| {
                        h.join().unwrap_or_else(|_| AgentOutcome {
                            analysis: AgentAnalysis::abstain(role, "backend error: agent thread panicked"),
                            failed: true,
                        })
                    })
                    .collect()
            })
        } else {
            AgentRole::SPECIALISTS.iter().zip(&self.specialists).map(|(&role, b)| self.call(b, role, action)).collect()
        };
        let all_failed = outcomes.iter().all(|o| o.failed);
        let analyses: Vec<AgentAnalysis> = outcomes.into_iter().map(|o| o.analysis).collect();

        let mut decision = match &self.model_coordinator {
            Some(model) if !all_failed => self.model_synthesis(model.as_ref(), action, &analyses)?,
            _ => synthesize(&action.id, &analyses, &self.coordinator)?,
        };
        decision.elapsed_total = self.clock.now() - start;
        if all_failed {
            return Err(RuntimeError::TotalFailure { fallback: Box::new(decision) });
        }
        Ok(decision)
    }

    fn model_synthesis(
        &self,
        model: &dyn SynthesisModel,
        action: &DataTransferAction,
        analyses: &[AgentAnalysis],
    ) -> Result<SynthesisDecision, RuntimeError> {
        let mut vote = synthesize(&action.id, analyses, &self.coordinator)?;
        match model.synthesize(action, analyses) {
            Ok(answer) if answer.verdict != AgentVerdict::Abstain => {
                let status = answer.verdict.status().unwrap_or(ComplianceStatus::NonCompliant);
                vote.justification = format!(
                    "Coordinator model: {} @ {:.3}. {}\n{}",
                    status,
                    answer.confidence,
                    answer.rationale.trim(),
                    vote.justification
                );
                vote.status = status;
                vote.confidence = answer.confidence;
                Ok(vote)
            }
            Ok(_) | Err(_) => {
                vote.justification.push_str("\n(coordinator model unavailable; weighted vote used)");
                Ok(vote)
            }
        }
    }

    pub fn verify_single(&self, action: &DataTransferAction) -> Result<SynthesisDecision, RuntimeError> {
        check_action(action)?;
        let start = self.clock.now();
        let outcome = self.call(&self.single, AgentRole::SingleAgent, action);
        let mut decision = decide_single(&action.id, &outcome.analysis);
        decision.elapsed_total = self.clock.now() - start;
        if outcome.failed {
            return Err(RuntimeError::TotalFailure { fallback: Box::new(decision) });
        }
        Ok(decision)
    }

    pub fn verify(&self, action: &DataTransferAction, mode: Mode) -> Result<SynthesisDecision, RuntimeError> {
        match mode {
            Mode::Single => self.verify_single(action),
            Mode::Multi => self.verify_multi(action),
        }
    }

    /// Verifies every action in order. The plan is compliant only if every action is.
    pub fn verify_plan(&self, plan: &Plan, mode: Mode) -> Result<PlanVerdict, RuntimeError> {
        let violations = plan.violations();
        if !violations.is_empty() {
            return Err(RuntimeError::InvalidPlan(violations));
        }
        let mut decisions = Vec::with_capacity(plan.actions.len());
        for action in &plan.actions {
            match self.verify(action, mode) {
                Ok(d) => decisions.push(d),
                Err(RuntimeError::TotalFailure { fallback }) => decisions.push(*fallback),
                Err(e) => {
                    return Err(RuntimeError::PlanAborted {
                        partial: decisions,
                        failed_action: action.id.clone(),
                        source: Box::new(e),
                    })
                }
            }
        }
        let status = ComplianceStatus::from_bool(decisions.iter().all(|d| d.status.is_compliant()));
        Ok(PlanVerdict { plan_id: plan.id.clone(), status, decisions })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanVerdict {
    pub plan_id: String,
    pub status: ComplianceStatus,
    pub decisions: Vec<SynthesisDecision>,
}

fn check_action(action: &DataTransferAction) -> Result<(), RuntimeError> {
    let v = action.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(RuntimeError::InvalidAction(v))
    }
}

fn degrade(role: AgentRole, err: &BackendError) -> AgentAnalysis {
    AgentAnalysis::abstain(role, format!("backend error: {err}"))
}

fn call_agent(
    backend: Arc<dyn AgentBackend>,
    role: AgentRole,
    action: &DataTransferAction,
    timeout: Option<Duration>,
    clock: &dyn Clock,
) -> AgentOutcome {
    let start = clock.now();
    let result = match timeout {
        None => backend.analyze(role, action),
        Some(limit) => {
            // The worker is detached on timeout; its late result is dropped.
            let (tx, rx) = mpsc::channel();
            let owned = action.clone();
            thread::spawn(move || {
                let _ = tx.send(backend.analyze(role, &owned));
            });
            match rx.recv_timeout(limit) {
                Ok(r) => r,
                Err(mpsc::RecvTimeoutError::Timeout) => Err(BackendError::Timeout { seconds: limit.as_secs_f64() }),
                Err(mpsc::RecvTimeoutError::Disconnected) => Err(BackendError::Failed("agent thread panicked".into())),
            }
        }
    };
    let elapsed = clock.now() - start;
    match result {
        Ok(a) => {
            let mut analysis = a.normalized().with_elapsed(elapsed);
            analysis.agent_role = role;
            AgentOutcome { analysis, failed: false }
        }
        Err(e) => {
            log::warn!("{role} backend failed on {}: {e}", action.id);
            AgentOutcome { analysis: degrade(role, &e).with_elapsed(elapsed), failed: true }
        }
    }
}
