use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::anneal::WorkerState;
use crate::problem::{CandidateError, CandidateFile, CandidateSolution};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot read checkpoint {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write checkpoint {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint schema version {0}")]
    Schema(u32),
    #[error("checkpoint candidate: {0}")]
    Candidate(#[from] CandidateError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RngState {
    seed: u64,
    stream: u64,
    word_pos: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleCursor {
    step: u64,
    level: u64,
    steps_at_level: u64,
    since_improvement: u64,
    restarts: u64,
    finished: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WorkerRecord {
    candidate: CandidateFile,
    candidate_total: f64,
    current: CandidateFile,
    current_total: f64,
    rng_state: RngState,
    schedule_cursor: ScheduleCursor,
    evaluations_used: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    workers: Vec<WorkerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<String>,
}

/// Saved annealing chains plus, optionally, the run configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub workers: Vec<WorkerState>,
    pub run_config: Option<String>,
}

impl Checkpoint {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn to_json(&self, names: &[String]) -> String {
        let file = CheckpointFile {
            schema_version: Self::SCHEMA_VERSION,
            workers: self
                .workers
                .iter()
                .map(|w| WorkerRecord {
                    candidate: w.best.to_file(names),
                    candidate_total: w.best_total,
                    current: w.current.to_file(names),
                    current_total: w.current_total,
                    rng_state: RngState {
                        seed: w.seed,
                        stream: w.stream,
                        word_pos: w.word_pos,
                    },
                    schedule_cursor: ScheduleCursor {
                        step: w.step,
                        level: w.level,
                        steps_at_level: w.steps_at_level,
                        since_improvement: w.since_improvement,
                        restarts: w.restarts,
                        finished: w.finished,
                    },
                    evaluations_used: w.evaluations,
                })
                .collect(),
            run_config: self.run_config.clone(),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint values are finite")
    }

    pub fn from_json(text: &str, names: &[String]) -> Result<Self, CheckpointError> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        if file.schema_version != Self::SCHEMA_VERSION {
            return Err(CheckpointError::Schema(file.schema_version));
        }
        if file.workers.is_empty() {
            return Err(CheckpointError::Corrupt("no workers".into()));
        }
        let mut workers = Vec::with_capacity(file.workers.len());
        for w in file.workers {
            workers.push(WorkerState {
                seed: w.rng_state.seed,
                stream: w.rng_state.stream,
                word_pos: w.rng_state.word_pos,
                current: CandidateSolution::from_file(&w.current, names)?,
                current_total: w.current_total,
                best: CandidateSolution::from_file(&w.candidate, names)?,
                best_total: w.candidate_total,
                step: w.schedule_cursor.step,
                level: w.schedule_cursor.level,
                steps_at_level: w.schedule_cursor.steps_at_level,
                since_improvement: w.schedule_cursor.since_improvement,
                evaluations: w.evaluations_used,
                restarts: w.schedule_cursor.restarts,
                finished: w.schedule_cursor.finished,
            });
        }
        Ok(Self {
            workers,
            run_config: file.run_config,
        })
    }

    /// Writes via a temporary file so an interrupted save leaves the old
    /// checkpoint intact.
    pub fn save(&self, path: &Path, names: &[String]) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("json.tmp");
        let werr = |source| CheckpointError::Write {
            path: path.display().to_string(),
            source,
        };
        fs::write(&tmp, self.to_json(names)).map_err(werr)?;
        fs::rename(&tmp, path).map_err(werr)
    }

    pub fn load(path: &Path, names: &[String]) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, names)
    }
}
