use std::time::Instant;

use rayon::prelude::*;

use super::{Scored, SearchBudget, SearchError};
use crate::constfit::FitConfig;
use crate::expr::{enumerate_expressions, Enumeration, Grammar, PostfixExpr};
use crate::problem::{fit_and_score, CandidateSolution, Problem, Provenance, DEFAULT_CONSTANT};

#[derive(Debug, Clone)]
pub struct BruteForceConfig {
    pub budget: SearchBudget,
    pub fit: FitConfig,
    /// Worker threads; 1 runs inline.
    pub workers: usize,
    /// Candidates handed to the pool at a time.
    pub chunk_size: usize,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        Self {
            budget: SearchBudget::default(),
            fit: FitConfig::default(),
            workers: 1,
            chunk_size: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceOutcome {
    pub best: Option<Scored>,
    /// Size of the full search space.
    pub space: u128,
    /// Tuples drawn from the space, trivial ones included.
    pub visited: u64,
    /// Tuples dropped by the triviality filter before fitting.
    pub trivial: u64,
    /// Tuples fitted but rejected afterwards.
    pub rejected: u64,
    /// True when a budget limit stopped the run early.
    pub exhausted: bool,
    pub diagnostic: Option<String>,
}

impl BruteForceOutcome {
    pub fn scored(&self) -> u64 {
        self.visited - self.trivial
    }
}

/// Odometer over the cartesian product of several enumerations. The first
/// function varies slowest.
struct Product {
    starts: Vec<Enumeration>,
    iters: Vec<Enumeration>,
    current: Vec<PostfixExpr>,
    fresh: bool,
}

impl Product {
    fn new(starts: Vec<Enumeration>) -> Self {
        Self {
            iters: starts.clone(),
            starts,
            current: Vec::new(),
            fresh: true,
        }
    }
}

impl Iterator for Product {
    type Item = Vec<PostfixExpr>;

    fn next(&mut self) -> Option<Vec<PostfixExpr>> {
        if self.fresh {
            self.fresh = false;
            for it in &mut self.iters {
                self.current.push(it.next()?);
            }
            return Some(self.current.clone());
        }
        let mut k = self.iters.len();
        loop {
            if k == 0 {
                return None;
            }
            k -= 1;
            if let Some(e) = self.iters[k].next() {
                self.current[k] = e;
                break;
            }
        }
        for j in k + 1..self.iters.len() {
            self.iters[j] = self.starts[j].clone();
            self.current[j] = self.iters[j].next()?;
        }
        Some(self.current.clone())
    }
}

enum Visit {
    Trivial,
    Rejected,
    Scored(Scored),
}

fn visit(problem: &dyn Problem, exprs: Vec<PostfixExpr>, fit: &FitConfig) -> Visit {
    let parts: Vec<(PostfixExpr, Vec<f64>)> = exprs
        .into_iter()
        .map(|e| {
            let c = vec![DEFAULT_CONSTANT; e.const_slots()];
            (e, c)
        })
        .collect();
    let candidate = CandidateSolution::assemble(&problem.base_constants(), &parts, Provenance::Enumerated);
    let system = problem.compile(&candidate.functions);
    if !system.non_trivial(&candidate.constants) {
        return Visit::Trivial;
    }
    let (constants, report, _) = fit_and_score(problem, system.as_ref(), &candidate.constants, fit, true);
    if !report.is_accepted() {
        return Visit::Rejected;
    }
    Visit::Scored(Scored {
        candidate: CandidateSolution { constants, ..candidate },
        report,
    })
}

// Lower total wins, then fewer tokens; equal keys keep the earlier one.
fn better(a: &Scored, b: &Scored) -> bool {
    a.report.total < b.report.total
        || (a.report.total == b.report.total && a.candidate.token_count() < b.candidate.token_count())
}

/// Scores every tuple of expressions the grammars generate, fitting the
/// constants of each non-trivial tuple, and keeps the best.
///
/// The result does not depend on `workers`: tuples are scored in chunks and
/// folded in enumeration order.
pub fn brute_force(problem: &dyn Problem, grammars: &[Grammar], config: &BruteForceConfig) -> Result<BruteForceOutcome, SearchError> {
    let names = problem.function_names();
    if grammars.len() != names.len() {
        return Err(SearchError::GrammarCount {
            expected: names.len(),
            got: grammars.len(),
        });
    }
    for g in grammars {
        g.validate()?;
    }
    config.fit.validate().map_err(|e| SearchError::Schedule(e.to_string()))?;
    let starts: Vec<Enumeration> = grammars.iter().map(|g| enumerate_expressions(g, g.max_depth)).collect();
    let space = starts.iter().map(Enumeration::total_count).product();
    let mut product = Product::new(starts);

    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| SearchError::Schedule(e.to_string()))?,
        )
    } else {
        None
    };

    let start = Instant::now();
    let mut out = BruteForceOutcome {
        best: None,
        space,
        visited: 0,
        trivial: 0,
        rejected: 0,
        exhausted: false,
        diagnostic: None,
    };
    let chunk = config.chunk_size.max(1);
    'outer: loop {
        let room = config
            .budget
            .max_evaluations
            .map_or(chunk as u64, |m| (m - out.visited.min(m)).min(chunk as u64));
        let batch: Vec<Vec<PostfixExpr>> = product.by_ref().take(room as usize).collect();
        if batch.is_empty() {
            if room == 0 {
                out.exhausted = product.next().is_some();
            }
            break;
        }
        let results: Vec<Visit> = match &pool {
            Some(pool) => pool.install(|| {
                batch
                    .into_par_iter()
                    .map(|e| visit(problem, e, &config.fit))
                    .collect()
            }),
            None => batch.into_iter().map(|e| visit(problem, e, &config.fit)).collect(),
        };
        for r in results {
            out.visited += 1;
            match r {
                Visit::Trivial => out.trivial += 1,
                Visit::Rejected => out.rejected += 1,
                Visit::Scored(s) => {
                    if out.best.as_ref().is_none_or(|b| better(&s, b)) {
                        out.best = Some(s);
                    }
                }
            }
            if out.best.as_ref().is_some_and(|b| config.budget.reached(b.report.total)) {
                out.exhausted = true;
                break 'outer;
            }
        }
        if config.budget.out_of_time(start) {
            out.exhausted = true;
            break;
        }
    }
    if out.best.is_none() {
        out.diagnostic = Some(format!(
            "no acceptable candidate among {} visited ({} trivial, {} rejected after fitting)",
            out.visited, out.trivial, out.rejected
        ));
    }
    Ok(out)
}
