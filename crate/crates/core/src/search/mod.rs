//! Search drivers: exhaustive enumeration and simulated annealing.
//!
//! Both drivers work on any [`Problem`](crate::problem::Problem). A candidate
//! is one expression per unknown function; each expression owns its fitted
//! constant slots, laid out after the problem's own slots.

mod anneal;
mod brute;
mod checkpoint;

pub use anneal::{AnnealConfig, AnnealSchedule, Annealer, AnnealOutcome, TraceRow, WorkerState};
pub use brute::{brute_force, BruteForceConfig, BruteForceOutcome};
pub use checkpoint::{Checkpoint, CheckpointError};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
use crate::problem::{CandidateSolution, LossReport};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("need one grammar per unknown function ({expected}), got {got}")]
    GrammarCount { expected: usize, got: usize },
    #[error(transparent)]
    Grammar(#[from] ExprError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("search budget has no stopping criterion")]
    Unbounded,
    #[error("no non-trivial starting candidate after {0} samples")]
    NoStart(u64),
    #[error("initial candidate is rejected: {0}")]
    BadStart(String),
}

/// Stopping criteria; a search stops at the first one met.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBudget {
    pub max_evaluations: Option<u64>,
    pub max_wall_seconds: Option<f64>,
    pub target_loss: Option<f64>,
}

impl SearchBudget {
    pub fn evaluations(n: u64) -> Self {
        Self {
            max_evaluations: Some(n),
            ..Self::default()
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.max_evaluations.is_some() || self.max_wall_seconds.is_some() || self.target_loss.is_some()
    }

    pub(crate) fn out_of_evaluations(&self, used: u64) -> bool {
        self.max_evaluations.is_some_and(|m| used >= m)
    }

    pub(crate) fn out_of_time(&self, start: Instant) -> bool {
        self.max_wall_seconds
            .is_some_and(|s| start.elapsed().as_secs_f64() >= s)
    }

    pub(crate) fn reached(&self, best: f64) -> bool {
        self.target_loss.is_some_and(|t| best <= t)
    }
}

/// A scored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub candidate: CandidateSolution,
    pub report: LossReport,
}
