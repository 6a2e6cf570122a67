use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Scored, SearchBudget, SearchError};
use crate::constfit::FitConfig;
use crate::expr::{perturb, sample_expression, Grammar, PostfixExpr};
use crate::problem::{
    fit_and_score, score, CandidateSolution, LossReport, Problem, Provenance, DEFAULT_CONSTANT,
};

/// Geometric cooling with optional reheating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSchedule {
    pub initial_temperature: f64,
    pub cooling_ratio: f64,
    pub steps_per_temperature: u64,
    pub min_temperature: f64,
    /// Restart from a fresh sample at the initial temperature once the
    /// temperature falls below the minimum. Without it the run ends there.
    pub reheat: bool,
    /// Restart after this many steps without improving the best.
    pub stall_steps: Option<u64>,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            initial_temperature: 1.0,
            cooling_ratio: 0.95,
            steps_per_temperature: 200,
            min_temperature: 1e-6,
            reheat: true,
            stall_steps: Some(2000),
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.min_temperature > 0.0 && self.initial_temperature > self.min_temperature) {
            return Err(SearchError::Schedule(
                "need initial_temperature > min_temperature > 0".into(),
            ));
        }
        if !(self.cooling_ratio > 0.0 && self.cooling_ratio < 1.0) {
            return Err(SearchError::Schedule("cooling_ratio must lie in (0, 1)".into()));
        }
        if self.steps_per_temperature == 0 {
            return Err(SearchError::Schedule("steps_per_temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn temperature(&self, level: u64) -> f64 {
        self.initial_temperature * self.cooling_ratio.powf(level as f64)
    }
}

#[derive(Debug, Clone)]
pub struct AnnealConfig {
    pub schedule: AnnealSchedule,
    pub budget: SearchBudget,
    pub fit: FitConfig,
    /// Proposals are fitted only if their unfitted loss is within this
    /// factor of the best.
    pub fit_gate: f64,
    /// Depth of freshly sampled expressions; `None` draws one uniformly from
    /// `1..=max_depth` per function.
    pub init_depth: Option<usize>,
    /// Keep one trace row every this many steps.
    pub trace_every: u64,
    pub workers: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            schedule: AnnealSchedule::default(),
            budget: SearchBudget::default(),
            fit: FitConfig::default(),
            fit_gate: 10.0,
            init_depth: None,
            trace_every: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub temperature: f64,
    pub current_total: f64,
    pub best_total: f64,
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
    pub current: CandidateSolution,
    pub current_total: f64,
    pub best: CandidateSolution,
    pub best_total: f64,
    pub step: u64,
    pub level: u64,
    pub steps_at_level: u64,
    pub since_improvement: u64,
    pub evaluations: u64,
    pub restarts: u64,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    pub best: Scored,
    pub trace: Vec<TraceRow>,
    pub evaluations: u64,
    pub restarts: u64,
    /// True when a budget limit, not the schedule, ended the run.
    pub exhausted: bool,
}

/// One simulated-annealing chain.
pub struct Annealer<'a> {
    problem: &'a dyn Problem,
    grammars: Vec<Grammar>,
    config: AnnealConfig,
    rng: ChaCha8Rng,
    pub state: WorkerState,
    pub trace: Vec<TraceRow>,
}

fn check_grammars(problem: &dyn Problem, grammars: &[Grammar]) -> Result<(), SearchError> {
    let expected = problem.function_names().len();
    if grammars.len() != expected {
        return Err(SearchError::GrammarCount {
            expected,
            got: grammars.len(),
        });
    }
    for g in grammars {
        g.validate()?;
    }
    Ok(())
}

fn make_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const MAX_START_SAMPLES: u64 = 10_000;

impl<'a> Annealer<'a> {
    /// Starts a chain from a random non-trivial candidate.
    pub fn new(problem: &'a dyn Problem, grammars: Vec<Grammar>, config: AnnealConfig, seed: u64) -> Result<Self, SearchError> {
        Self::new_stream(problem, grammars, config, seed, 0)
    }

    fn new_stream(problem: &'a dyn Problem, grammars: Vec<Grammar>, config: AnnealConfig, seed: u64, stream: u64) -> Result<Self, SearchError> {
        check_grammars(problem, &grammars)?;
        config.schedule.validate()?;
        let mut rng = make_rng(seed, stream);
        let mut evaluations = 0;
        let (cand, report) = fresh_start(problem, &grammars, &config, &mut rng, &mut evaluations)?;
        let state = WorkerState {
            seed,
            stream,
            word_pos: rng.get_word_pos(),
            current: cand.clone(),
            current_total: report.total,
            best: cand,
            best_total: report.total,
            step: 0,
            level: 0,
            steps_at_level: 0,
            since_improvement: 0,
            evaluations,
            restarts: 0,
            finished: false,
        };
        Ok(Self {
            problem,
            grammars,
            config,
            rng,
            state,
            trace: Vec::new(),
        })
    }

    /// Starts a chain from a given candidate, which must be acceptable.
    pub fn from_candidate(
        problem: &'a dyn Problem,
        grammars: Vec<Grammar>,
        config: AnnealConfig,
        seed: u64,
        init: CandidateSolution,
    ) -> Result<Self, SearchError> {
        check_grammars(problem, &grammars)?;
        config.schedule.validate()?;
        let system = problem.compile(&init.functions);
        let report = score(problem, system.as_ref(), &init.constants, true);
        if let Some(r) = report.rejected {
            return Err(SearchError::BadStart(r.to_string()));
        }
        let rng = make_rng(seed, 0);
        let state = WorkerState {
            seed,
            stream: 0,
            word_pos: rng.get_word_pos(),
            current: init.clone(),
            current_total: report.total,
            best: init,
            best_total: report.total,
            step: 0,
            level: 0,
            steps_at_level: 0,
            since_improvement: 0,
            evaluations: 1,
            restarts: 0,
            finished: false,
        };
        Ok(Self {
            problem,
            grammars,
            config,
            rng,
            state,
            trace: Vec::new(),
        })
    }

    /// Rebuilds a chain from saved state.
    pub fn resume(problem: &'a dyn Problem, grammars: Vec<Grammar>, config: AnnealConfig, state: WorkerState) -> Result<Self, SearchError> {
        check_grammars(problem, &grammars)?;
        config.schedule.validate()?;
        let mut rng = make_rng(state.seed, state.stream);
        rng.set_word_pos(state.word_pos);
        Ok(Self {
            problem,
            grammars,
            config,
            rng,
            state,
            trace: Vec::new(),
        })
    }

    pub fn temperature(&self) -> f64 {
        self.config.schedule.temperature(self.state.level)
    }

    /// State with the RNG position synchronised, ready to serialise.
    pub fn snapshot(&self) -> WorkerState {
        let mut s = self.state.clone();
        s.word_pos = self.rng.get_word_pos();
        s
    }

    fn restart(&mut self) -> Result<(), SearchError> {
        let mut evals = self.state.evaluations;
        let (cand, report) = fresh_start(self.problem, &self.grammars, &self.config, &mut self.rng, &mut evals)?;
        self.state.evaluations = evals;
        self.state.current = cand;
        self.state.current_total = report.total;
        self.state.level = 0;
        self.state.steps_at_level = 0;
        self.state.since_improvement = 0;
        self.state.restarts += 1;
        self.offer_best();
        Ok(())
    }

    fn offer_best(&mut self) {
        if self.state.current_total < self.state.best_total {
            self.state.best = self.state.current.clone();
            self.state.best_total = self.state.current_total;
            self.state.since_improvement = 0;
        }
    }

    /// One Metropolis step. Returns true at a temperature boundary.
    pub fn step(&mut self) -> Result<bool, SearchError> {
        let t = self.temperature();
        let base_slots = self.problem.base_slots().len();
        let (base, mut parts) = self.state.current.to_parts(base_slots);
        let k = self.rng.random_range(0..parts.len());
        let moved = perturb(&parts[k].0, &self.grammars[k], &mut self.rng);
        parts[k].1 = moved.constants(&parts[k].1);
        parts[k].0 = moved.expr;
        let proposal = CandidateSolution::assemble(&base, &parts, Provenance::Annealed);
        self.state.evaluations += 1;

        let system = self.problem.compile(&proposal.functions);
        let mut scored = score(self.problem, system.as_ref(), &proposal.constants, true);
        let mut constants = proposal.constants.clone();
        let mut fitted = false;
        if scored.is_accepted() && scored.total <= self.config.fit_gate * self.state.best_total {
            (constants, scored) = fit_or_keep(self.problem, system.as_ref(), constants, scored, &self.config.fit);
            fitted = true;
        }
        let delta = if scored.is_accepted() {
            scored.total - self.state.current_total
        } else {
            f64::INFINITY
        };
        let accept = if delta <= 0.0 {
            true
        } else if delta.is_finite() {
            self.rng.random::<f64>() < (-delta / t).exp()
        } else {
            false
        };
        if accept {
            if !fitted {
                (constants, scored) = fit_or_keep(self.problem, system.as_ref(), constants, scored, &self.config.fit);
            }
            self.state.current = CandidateSolution { constants, ..proposal };
            self.state.current_total = scored.total;
        }
        self.state.step += 1;
        self.state.since_improvement += 1;
        self.offer_best();
        if self.config.trace_every > 0 && self.state.step.is_multiple_of(self.config.trace_every) {
            self.trace.push(TraceRow {
                step: self.state.step,
                temperature: t,
                current_total: self.state.current_total,
                best_total: self.state.best_total,
            });
        }

        self.state.steps_at_level += 1;
        let boundary = self.state.steps_at_level >= self.config.schedule.steps_per_temperature;
        if boundary {
            self.state.steps_at_level = 0;
            self.state.level += 1;
            if self.temperature() < self.config.schedule.min_temperature {
                if self.config.schedule.reheat {
                    self.restart()?;
                } else {
                    self.state.finished = true;
                }
            }
        }
        if !self.state.finished
            && self
                .config
                .schedule
                .stall_steps
                .is_some_and(|s| self.state.since_improvement >= s)
        {
            self.restart()?;
        }
        Ok(boundary)
    }

    fn stop(&self, start: Instant) -> bool {
        let b = &self.config.budget;
        self.state.finished
            || b.out_of_evaluations(self.state.evaluations)
            || b.out_of_time(start)
            || b.reached(self.state.best_total)
    }

    /// Runs until the budget or schedule ends. `on_boundary` sees the chain
    /// at every temperature boundary.
    pub fn run_with(&mut self, mut on_boundary: impl FnMut(&Self)) -> Result<(), SearchError> {
        if !self.config.budget.is_bounded() && self.config.schedule.reheat {
            return Err(SearchError::Unbounded);
        }
        let start = Instant::now();
        while !self.stop(start) {
            if self.step()? {
                on_boundary(self);
            }
        }
        self.state.word_pos = self.rng.get_word_pos();
        Ok(())
    }

    pub fn run(&mut self) -> Result<(), SearchError> {
        self.run_with(|_| {})
    }

    pub fn outcome(&self) -> AnnealOutcome {
        let system = self.problem.compile(&self.state.best.functions);
        let report = score(self.problem, system.as_ref(), &self.state.best.constants, true);
        AnnealOutcome {
            best: Scored {
                candidate: self.state.best.clone(),
                report,
            },
            trace: self.trace.clone(),
            evaluations: self.state.evaluations,
            restarts: self.state.restarts,
            exhausted: !self.state.finished,
        }
    }

    /// Runs independent chains on separate RNG streams, exchanging the best
    /// candidate at temperature boundaries. The evaluation budget is split
    /// evenly. Only a single worker is reproducible.
    pub fn run_parallel(problem: &'a dyn Problem, grammars: Vec<Grammar>, config: AnnealConfig, seed: u64) -> Result<Vec<Annealer<'a>>, SearchError> {
        let workers = config.workers.max(1) as u64;
        let mut chains = Vec::with_capacity(workers as usize);
        for w in 0..workers {
            let mut cfg = config.clone();
            cfg.budget.max_evaluations = cfg.budget.max_evaluations.map(|m| m.div_ceil(workers));
            chains.push(Annealer::new_stream(problem, grammars.clone(), cfg, seed, w)?);
        }
        Self::continue_parallel(chains)
    }

    /// Continues several chains concurrently with best-exchange.
    pub fn continue_parallel(mut chains: Vec<Annealer<'a>>) -> Result<Vec<Annealer<'a>>, SearchError> {
        if chains.len() == 1 {
            chains[0].run()?;
            return Ok(chains);
        }
        let shared: Mutex<Option<(f64, CandidateSolution)>> = Mutex::new(None);
        let results: Vec<Result<(), SearchError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chains
                .iter_mut()
                .map(|chain| {
                    let shared = &shared;
                    s.spawn(move || {
                        chain.run_with_exchange(shared)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            r?;
        }
        Ok(chains)
    }

    fn run_with_exchange(&mut self, shared: &Mutex<Option<(f64, CandidateSolution)>>) -> Result<(), SearchError> {
        let start = Instant::now();
        while !self.stop(start) {
            if self.step()? {
                let mut guard = shared.lock().expect("poisoned");
                match guard.as_ref() {
                    Some((total, cand)) if *total < self.state.best_total => {
                        self.state.best = cand.clone();
                        self.state.best_total = *total;
                        self.state.current = cand.clone();
                        self.state.current_total = *total;
                    }
                    Some((total, _)) if *total <= self.state.best_total => {}
                    _ => *guard = Some((self.state.best_total, self.state.best.clone())),
                }
            }
        }
        self.state.word_pos = self.rng.get_word_pos();
        Ok(())
    }
}

fn fit_or_keep(
    problem: &dyn Problem,
    system: &dyn crate::problem::System,
    constants: Vec<f64>,
    scored: LossReport,
    fit: &FitConfig,
) -> (Vec<f64>, LossReport) {
    let (c, r, _) = fit_and_score(problem, system, &constants, fit, true);
    if r.is_accepted() && r.total <= scored.total {
        (c, r)
    } else {
        (constants, scored)
    }
}

fn fresh_start(
    problem: &dyn Problem,
    grammars: &[Grammar],
    config: &AnnealConfig,
    rng: &mut ChaCha8Rng,
    evaluations: &mut u64,
) -> Result<(CandidateSolution, LossReport), SearchError> {
    let base = problem.base_constants();
    for _ in 0..MAX_START_SAMPLES {
        let parts: Vec<(PostfixExpr, Vec<f64>)> = grammars
            .iter()
            .map(|g| {
                let depth = config
                    .init_depth
                    .unwrap_or_else(|| rng.random_range(1..=g.max_depth))
                    .min(g.max_depth);
                let e = sample_expression(g, rng, depth);
                let c = vec![DEFAULT_CONSTANT; e.const_slots()];
                (e, c)
            })
            .collect();
        let cand = CandidateSolution::assemble(&base, &parts, Provenance::Sampled);
        *evaluations += 1;
        let system = problem.compile(&cand.functions);
        if !system.non_trivial(&cand.constants) {
            continue;
        }
        let (constants, report, _) = fit_and_score(problem, system.as_ref(), &cand.constants, &config.fit, true);
        if report.is_accepted() {
            return Ok((CandidateSolution { constants, ..cand }, report));
        }
    }
    Err(SearchError::NoStart(MAX_START_SAMPLES))
}
