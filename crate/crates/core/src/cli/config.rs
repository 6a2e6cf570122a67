//! Run configuration: a TOML file with the sections `problem`, `grid`,
//! `grammar`, `search`, `fit` and `paths`. Every key has a default, so an
//! empty file (or no file) is a valid configuration for the soliton
//! benchmark.
//!
//! Environment variables `PISR_<SECTION>_<KEY>` override file values, e.g.
//! `PISR_SEARCH_SEED=3` or `PISR_GRID_N_POINTS=255`. Values are parsed as
//! TOML, falling back to a plain string.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::constfit::{Bound, FitConfig, FitMethod};
use crate::eval::Grid;
use crate::expr::{BinaryOp, Grammar, LeafKind, PostfixExpr, UnaryOp};
use crate::problem::{PlantedProblem, Problem, TrivialityMode, TrivialityRule};
use crate::search::{AnnealConfig, AnnealSchedule, BruteForceConfig, SearchBudget};
use crate::soliton::{Dataset, PlasmaParams, SolitonProblem};

pub const ENV_PREFIX: &str = "PISR_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Soliton,
    Planted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    /// Target expression of a planted problem, postfix.
    pub target: String,
    /// Function name of a planted problem.
    pub name: String,
    pub rho_i: f64,
    pub alpha: f64,
    pub v_te: f64,
    pub v_ti: f64,
    pub n0: f64,
    pub omega_sq_coeff: f64,
    pub gamma0_initial: f64,
    pub gamma0_min: f64,
    pub gamma0_max: f64,
    pub data_weight: f64,
    pub weight_on_square: bool,
    pub triviality_threshold: f64,
    pub triviality_mode: TrivialityMode,
    /// Run without data terms when the dataset file is missing.
    pub physics_only: bool,
}

impl Default for ProblemSection {
    fn default() -> Self {
        let p = PlasmaParams::default();
        let t = TrivialityRule::default();
        Self {
            kind: ProblemKind::Soliton,
            target: "x sech".into(),
            name: "n".into(),
            rho_i: p.rho_i,
            alpha: p.alpha,
            v_te: p.v_te,
            v_ti: p.v_ti,
            n0: p.n0,
            omega_sq_coeff: p.omega_sq_coeff,
            gamma0_initial: 2.0,
            gamma0_min: 1.0,
            gamma0_max: 100.0,
            data_weight: 10.0,
            weight_on_square: false,
            triviality_threshold: t.threshold,
            triviality_mode: t.mode,
            physics_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_min: -10.0,
            x_max: 10.0,
            n_points: 127,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarSection {
    pub depth: usize,
    /// Per-function depth overrides, keyed by function name.
    pub depths: BTreeMap<String, usize>,
    pub unary: Vec<String>,
    pub binary: Vec<String>,
    pub leaves: Vec<LeafKind>,
    pub exact_depth: bool,
    pub jitter_sigma: f64,
    pub unary_weight: f64,
    pub binary_weight: f64,
}

impl Default for GrammarSection {
    fn default() -> Self {
        Self {
            depth: 3,
            depths: BTreeMap::new(),
            unary: UnaryOp::SEARCH.iter().map(|o| o.name().to_string()).collect(),
            binary: BinaryOp::ALL.iter().map(|o| o.name().to_string()).collect(),
            leaves: vec![LeafKind::Variable, LeafKind::FitConst],
            exact_depth: false,
            jitter_sigma: 0.1,
            unary_weight: 1.0,
            binary_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Anneal,
    Brute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub driver: Driver,
    pub seed: u64,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_evaluations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_loss: Option<f64>,
    pub initial_temperature: f64,
    pub cooling_ratio: f64,
    pub steps_per_temperature: u64,
    pub min_temperature: f64,
    pub reheat: bool,
    /// 0 disables stall restarts.
    pub stall_steps: u64,
    pub fit_gate: f64,
    /// 0 draws a depth per function at every fresh start.
    pub init_depth: usize,
    pub trace_every: u64,
    /// Temperature levels between checkpoint writes; 0 writes only at the end.
    pub checkpoint_every: u64,
    pub chunk_size: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = AnnealSchedule::default();
        Self {
            driver: Driver::Anneal,
            seed: 0,
            workers: 1,
            max_evaluations: Some(20_000),
            max_wall_seconds: None,
            target_loss: None,
            initial_temperature: s.initial_temperature,
            cooling_ratio: s.cooling_ratio,
            steps_per_temperature: s.steps_per_temperature,
            min_temperature: s.min_temperature,
            reheat: s.reheat,
            stall_steps: s.stall_steps.unwrap_or(0),
            fit_gate: 10.0,
            init_depth: 0,
            trace_every: 1,
            checkpoint_every: 10,
            chunk_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub method: FitMethod,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            method: f.method,
            max_iterations: f.max_iterations,
            gradient_tolerance: f.gradient_tolerance,
            step_tolerance: f.step_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            dataset: None,
            out_dir: PathBuf::from("pisr-out"),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub grammar: GrammarSection,
    pub search: SearchSection,
    pub fit: FitSection,
    pub paths: PathsSection,
}

/// A built problem of either kind.
pub enum AnyProblem {
    Soliton(SolitonProblem),
    Planted(PlantedProblem),
}

impl AnyProblem {
    pub fn as_dyn(&self) -> &dyn Problem {
        match self {
            AnyProblem::Soliton(p) => p,
            AnyProblem::Planted(p) => p,
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies environment overrides and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, std::env::vars())
    }

    pub fn from_toml_with_env(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (key, raw) in env {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let rest = rest.to_ascii_lowercase();
            let Some((section, field)) = rest.split_once('_') else {
                continue;
            };
            if !["problem", "grid", "grammar", "search", "fit", "paths"].contains(&section) {
                continue;
            }
            let value = parse_env_value(&raw);
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(t) = entry else {
                return Err(CliError::Config(format!("`{section}` must be a table")));
            };
            t.insert(field.to_string(), value);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.build_grid()?;
        self.grammars(&self.function_names())?;
        self.anneal_config().schedule.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.fit_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.problem.kind == ProblemKind::Planted {
            PostfixExpr::parse(&self.problem.target)
                .map_err(|e| CliError::Config(format!("problem.target: {e}")))?;
        }
        if self.search.workers == 0 {
            return Err(CliError::Config("search.workers must be >= 1".into()));
        }
        if self.problem.gamma0_min.partial_cmp(&self.problem.gamma0_max).is_none_or(|o| o.is_gt()) {
            return Err(CliError::Config("gamma0_min must not exceed gamma0_max".into()));
        }
        Ok(())
    }

    pub fn function_names(&self) -> Vec<String> {
        match self.problem.kind {
            ProblemKind::Soliton => vec!["u".into(), "n".into()],
            ProblemKind::Planted => vec![self.problem.name.clone()],
        }
    }

    pub fn build_grid(&self) -> Result<Grid, CliError> {
        let g = &self.grid;
        Grid::uniform(g.x_min, g.x_max, g.n_points).map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn plasma_params(&self) -> PlasmaParams {
        let p = &self.problem;
        PlasmaParams {
            rho_i: p.rho_i,
            alpha: p.alpha,
            v_te: p.v_te,
            v_ti: p.v_ti,
            n0: p.n0,
            omega_sq_coeff: p.omega_sq_coeff,
            gamma0_slot: 0,
        }
    }

    fn triviality(&self) -> TrivialityRule {
        TrivialityRule {
            threshold: self.problem.triviality_threshold,
            mode: self.problem.triviality_mode,
        }
    }

    /// Loads the dataset named by the config. A missing file is an error
    /// unless `physics_only` is set.
    pub fn load_dataset(&self) -> Result<Option<Dataset>, CliError> {
        let Some(path) = &self.paths.dataset else {
            return Ok(None);
        };
        if !path.exists() && self.problem.physics_only {
            eprintln!("warning: dataset {} not found; data terms disabled", path.display());
            return Ok(None);
        }
        Dataset::load(path)
            .map(Some)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn build_problem(&self, dataset: Option<Dataset>) -> Result<AnyProblem, CliError> {
        let grid = self.build_grid()?;
        match self.problem.kind {
            ProblemKind::Soliton => {
                let mut p = SolitonProblem::new(self.plasma_params(), grid, dataset)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                p.triviality = self.triviality();
                p.gamma0_initial = self.problem.gamma0_initial;
                p.gamma0_bound = Bound::new(self.problem.gamma0_min, self.problem.gamma0_max);
                p.data_weight = self.problem.data_weight;
                p.weight_on_square = self.problem.weight_on_square;
                Ok(AnyProblem::Soliton(p))
            }
            ProblemKind::Planted => {
                let target = PostfixExpr::parse(&self.problem.target)
                    .map_err(|e| CliError::Config(format!("problem.target: {e}")))?;
                let mut p = PlantedProblem::new(self.problem.name.clone(), target, grid);
                p.triviality = self.triviality();
                Ok(AnyProblem::Planted(p))
            }
        }
    }

    pub fn grammars(&self, names: &[String]) -> Result<Vec<Grammar>, CliError> {
        let g = &self.grammar;
        let unary = g
            .unary
            .iter()
            .map(|s| s.parse::<UnaryOp>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("grammar.unary: {e}")))?;
        let binary = g
            .binary
            .iter()
            .map(|s| s.parse::<BinaryOp>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("grammar.binary: {e}")))?;
        for key in g.depths.keys() {
            if !names.contains(key) {
                return Err(CliError::Config(format!("grammar.depths: unknown function `{key}`")));
            }
        }
        names
            .iter()
            .map(|name| {
                let depth = g.depths.get(name).copied().unwrap_or(g.depth);
                let mut gr = Grammar::new(depth, unary.clone(), binary.clone(), g.leaves.clone())
                    .map_err(|e| CliError::Config(e.to_string()))?;
                gr.exact_depth = g.exact_depth;
                gr.jitter_sigma = g.jitter_sigma;
                gr.weights.unary = g.unary_weight;
                gr.weights.binary = g.binary_weight;
                gr.validate().map_err(|e| CliError::Config(e.to_string()))?;
                Ok(gr)
            })
            .collect()
    }

    pub fn budget(&self) -> SearchBudget {
        SearchBudget {
            max_evaluations: self.search.max_evaluations,
            max_wall_seconds: self.search.max_wall_seconds,
            target_loss: self.search.target_loss,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            method: self.fit.method,
            max_iterations: self.fit.max_iterations,
            gradient_tolerance: self.fit.gradient_tolerance,
            step_tolerance: self.fit.step_tolerance,
            constant_bounds: Vec::new(),
        }
    }

    pub fn anneal_config(&self) -> AnnealConfig {
        let s = &self.search;
        AnnealConfig {
            schedule: AnnealSchedule {
                initial_temperature: s.initial_temperature,
                cooling_ratio: s.cooling_ratio,
                steps_per_temperature: s.steps_per_temperature,
                min_temperature: s.min_temperature,
                reheat: s.reheat,
                stall_steps: (s.stall_steps > 0).then_some(s.stall_steps),
            },
            budget: self.budget(),
            fit: self.fit_config(),
            fit_gate: s.fit_gate,
            init_depth: (s.init_depth > 0).then_some(s.init_depth),
            trace_every: s.trace_every,
            workers: s.workers,
        }
    }

    pub fn brute_config(&self) -> BruteForceConfig {
        BruteForceConfig {
            budget: self.budget(),
            fit: self.fit_config(),
            workers: self.search.workers,
            chunk_size: self.search.chunk_size,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("checkpoint.json"))
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
