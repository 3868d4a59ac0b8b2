//! Runs a verifier over many actions with a bounded number of worker threads.
//!
//! Workers claim actions by index; the calling thread is the only writer and
//! emits decisions in input order as soon as the prefix is complete.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use appi_verify_core::domain::DataTransferAction;
use appi_verify_core::SynthesisDecision;

use crate::runtime::{Mode, RuntimeError, Verifier};

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// Decisions in input order; shorter than the input if the run stopped early.
    pub decisions: Vec<SynthesisDecision>,
    /// Ids of actions on which every backend failed (their fail-safe decisions are included).
    pub total_failures: Vec<String>,
    pub interrupted: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError<E: std::error::Error + 'static> {
    #[error("action {action_id}: {source}")]
    Contract {
        action_id: String,
        #[source]
        source: RuntimeError,
        partial: BatchOutcome,
    },
    #[error("output sink failed: {0}")]
    Sink(#[source] E, BatchOutcome),
}

#[allow(clippy::result_large_err)]
/// Verifies `actions` using at most `parallel` workers. `cancel` stops dispatching new actions.
pub fn run_batch<E, F>(
    verifier: &Verifier,
    actions: &[DataTransferAction],
    mode: Mode,
    parallel: usize,
    cancel: &AtomicBool,
    mut sink: F,
) -> Result<BatchOutcome, BatchError<E>>
where
    E: std::error::Error + 'static,
    F: FnMut(&SynthesisDecision) -> Result<(), E>,
{
    let workers = parallel.clamp(1, actions.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut outcome = BatchOutcome::default();
    let mut failure: Option<BatchError<E>> = None;

    thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<(usize, Result<SynthesisDecision, RuntimeError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            s.spawn(move || loop {
                if stop.load(Ordering::SeqCst) || cancel.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(action) = actions.get(i) else { break };
                if tx.send((i, verifier.verify(action, mode))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut emitted = 0;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&emitted) {
                if failure.is_some() {
                    break;
                }
                let decision = match result {
                    Ok(d) => d,
                    Err(RuntimeError::TotalFailure { fallback }) => {
                        outcome.total_failures.push(fallback.action_id.clone());
                        *fallback
                    }
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        failure = Some(BatchError::Contract {
                            action_id: actions[emitted].id.clone(),
                            source: e,
                            partial: BatchOutcome::default(),
                        });
                        break;
                    }
                };
                if let Err(e) = sink(&decision) {
                    stop.store(true, Ordering::SeqCst);
                    failure = Some(BatchError::Sink(e, BatchOutcome::default()));
                    break;
                }
                outcome.decisions.push(decision);
                emitted += 1;
            }
        }
    });

    outcome.interrupted = outcome.decisions.len() < actions.len();
    match failure {
        None => Ok(outcome),
        Some(BatchError::Contract { action_id, source, .. }) => {
            Err(BatchError::Contract { action_id, source, partial: outcome })
        }
        Some(BatchError::Sink(e, _)) => Err(BatchError::Sink(e, outcome)),
    }
}
