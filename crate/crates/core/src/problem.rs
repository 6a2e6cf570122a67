//! What a search needs to know about a system of equations.
//!
//! A [`Problem`] names the unknown functions and the loss terms, owns the
//! grid, and compiles a tuple of candidate expressions into a [`System`]
//! whose residual blocks can be evaluated repeatedly for different constant
//! vectors. The symbolic work (derivatives, composition) happens once per
//! compile; constant fitting only re-evaluates.

use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::constfit::{fit_constants, Bound, FitConfig, FitError, FitOutcome};
use crate::eval::{eval_batch, variance, Grid};
use crate::expr::{ExprError, PostfixExpr, Token};
use crate::symdiff::differentiate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sampled,
    Enumerated,
    Annealed,
    Golden,
    Manual,
}

/// A tuple of expressions sharing one constant vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSolution {
    pub functions: Vec<PostfixExpr>,
    pub constants: Vec<f64>,
    pub provenance: Provenance,
}

impl CandidateSolution {
    pub fn new(functions: Vec<PostfixExpr>, constants: Vec<f64>, provenance: Provenance) -> Result<Self, ExprError> {
        let needed = functions.iter().map(PostfixExpr::const_slots).max().unwrap_or(0);
        if needed > constants.len() {
            return Err(ExprError::MissingConstant {
                slot: needed - 1,
                available: constants.len(),
            });
        }
        Ok(Self {
            functions,
            constants,
            provenance,
        })
    }

    /// Lays out `base` problem constants followed by each function's local
    /// constants, shifting slot indices accordingly.
    pub fn assemble(base: &[f64], parts: &[(PostfixExpr, Vec<f64>)], provenance: Provenance) -> Self {
        let mut constants = base.to_vec();
        let mut functions = Vec::with_capacity(parts.len());
        for (expr, local) in parts {
            debug_assert!(expr.const_slots() <= local.len());
            functions.push(expr.shift_slots(constants.len()));
            constants.extend_from_slice(local);
        }
        Self {
            functions,
            constants,
            provenance,
        }
    }

    /// Inverse of [`assemble`](Self::assemble): every function with its own
    /// slots renumbered from zero by first appearance, plus the base slots.
    pub fn to_parts(&self, base_slots: usize) -> (Vec<f64>, Vec<(PostfixExpr, Vec<f64>)>) {
        let base: Vec<f64> = (0..base_slots)
            .map(|i| self.constants.get(i).copied().unwrap_or(1.0))
            .collect();
        let parts = self
            .functions
            .iter()
            .map(|f| {
                let mut seen: Vec<usize> = Vec::new();
                let tokens: Vec<Token> = f
                    .tokens()
                    .iter()
                    .map(|t| match *t {
                        Token::Const(g) => {
                            let local = seen.iter().position(|s| *s == g).unwrap_or_else(|| {
                                seen.push(g);
                                seen.len() - 1
                            });
                            Token::Const(local)
                        }
                        t => t,
                    })
                    .collect();
                let values = seen.iter().map(|g| self.constants[*g]).collect();
                (PostfixExpr::new_unchecked(tokens), values)
            })
            .collect();
        (base, parts)
    }

    pub fn token_count(&self) -> usize {
        self.functions.iter().map(PostfixExpr::len).sum()
    }

    pub fn to_file(&self, names: &[String]) -> CandidateFile {
        CandidateFile {
            schema_version: CandidateFile::SCHEMA_VERSION,
            provenance: self.provenance,
            constants: self.constants.clone(),
            functions: self
                .functions
                .iter()
                .zip(names)
                .map(|(f, name)| FunctionEntry {
                    name: name.clone(),
                    postfix: f.tokens().iter().map(Token::to_string).collect(),
                    infix: f.to_infix(&self.constants).ok(),
                })
                .collect(),
        }
    }

    /// Reads a candidate whose functions are matched to `names` by name.
    pub fn from_file(file: &CandidateFile, names: &[String]) -> Result<Self, CandidateError> {
        if file.schema_version != CandidateFile::SCHEMA_VERSION {
            return Err(CandidateError::Schema(file.schema_version));
        }
        let mut functions = Vec::with_capacity(names.len());
        for name in names {
            let entry = file
                .functions
                .iter()
                .find(|f| &f.name == name)
                .ok_or_else(|| CandidateError::MissingFunction(name.clone()))?;
            let tokens = entry
                .postfix
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<Token>, _>>()?;
            functions.push(PostfixExpr::new(tokens)?);
        }
        Ok(Self::new(functions, file.constants.clone(), file.provenance)?)
    }
}

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("unsupported candidate schema version {0}")]
    Schema(u32),
    #[error("candidate has no function named `{0}`")]
    MissingFunction(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// On-disk candidate form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFile {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub constants: Vec<f64>,
    pub functions: Vec<FunctionEntry>,
}

impl CandidateFile {
    pub const SCHEMA_VERSION: u32 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionEntry {
    pub name: String,
    pub postfix: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infix: Option<String>,
}

/// Why a candidate received no score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Trivial,
    NonFinite { term: String },
    FitFailed,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Trivial => f.write_str("trivial"),
            Rejection::NonFinite { term } => write!(f, "non-finite {term}"),
            Rejection::FitFailed => f.write_str("constant fit failed"),
        }
    }
}

/// Per-term squared-norm errors and their total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub terms: Vec<String>,
    /// Sum of squared residuals per term; NaN when rejected.
    pub sne: Vec<f64>,
    /// Σ sne in term order; +∞ when rejected.
    pub total: f64,
    /// Divisor for the mean squared error column.
    pub count: usize,
    pub rejected: Option<Rejection>,
    pub no_data: bool,
}

impl LossReport {
    pub fn accepted(terms: Vec<String>, sne: Vec<f64>, count: usize, no_data: bool) -> Self {
        debug_assert_eq!(terms.len(), sne.len());
        let mut total = 0.0;
        for s in &sne {
            total += s;
        }
        Self {
            terms,
            sne,
            total,
            count,
            rejected: None,
            no_data,
        }
    }

    pub fn rejected(terms: Vec<String>, count: usize, reason: Rejection, no_data: bool) -> Self {
        let sne = vec![f64::NAN; terms.len()];
        Self {
            terms,
            sne,
            total: f64::INFINITY,
            count,
            rejected: Some(reason),
            no_data,
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.rejected.is_none()
    }

    pub fn mse(&self) -> Vec<f64> {
        self.sne.iter().map(|s| s / self.count as f64).collect()
    }

    pub fn get(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.sne[i])
    }

    /// Reads back the JSON written by `Serialize`.
    pub fn from_json(value: &serde_json::Value, terms: &[String], count: usize) -> Result<Self, String> {
        let obj = value.as_object().ok_or("loss report is not an object")?;
        let no_data = obj
            .get("no_data_flag")
            .and_then(|v| v.as_bool())
            .ok_or("missing no_data_flag")?;
        match obj.get("rejected") {
            Some(serde_json::Value::Null) => {}
            Some(serde_json::Value::String(reason)) => {
                let reason = match reason.as_str() {
                    "trivial" => Rejection::Trivial,
                    "constant fit failed" => Rejection::FitFailed,
                    other => Rejection::NonFinite {
                        term: other.trim_start_matches("non-finite ").to_string(),
                    },
                };
                return Ok(Self::rejected(terms.to_vec(), count, reason, no_data));
            }
            _ => return Err("missing rejected field".into()),
        }
        let mut sne = Vec::with_capacity(terms.len());
        for t in terms {
            sne.push(obj.get(t).and_then(|v| v.as_f64()).ok_or(format!("missing term {t}"))?);
        }
        let report = Self::accepted(terms.to_vec(), sne, count, no_data);
        let total = obj.get("total").and_then(|v| v.as_f64()).ok_or("missing total")?;
        if total.to_bits() != report.total.to_bits() {
            return Err(format!("total {total} does not match the sum of terms {}", report.total));
        }
        Ok(report)
    }
}

impl Serialize for LossReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.terms.len() + 4))?;
        let accepted = self.is_accepted();
        for (t, s) in self.terms.iter().zip(&self.sne) {
            map.serialize_entry(t, &accepted.then_some(*s))?;
        }
        map.serialize_entry("total", &accepted.then_some(self.total))?;
        let mse: Option<Vec<f64>> = accepted.then(|| self.mse());
        map.serialize_entry("mse", &mse)?;
        map.serialize_entry("rejected", &self.rejected.as_ref().map(|r| r.to_string()))?;
        map.serialize_entry("no_data_flag", &self.no_data)?;
        map.end()
    }
}

/// How the variance threshold for rejecting flat candidates is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrivialityMode {
    /// Each function passes if Var(f) + Var(f') reaches the threshold.
    #[default]
    FunctionOrSlope,
    /// Var(f) and Var(f') must each reach the threshold.
    EachQuantity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrivialityRule {
    pub threshold: f64,
    #[serde(default)]
    pub mode: TrivialityMode,
}

impl Default for TrivialityRule {
    fn default() -> Self {
        Self {
            threshold: 1e-3,
            mode: TrivialityMode::default(),
        }
    }
}

impl TrivialityRule {
    /// True when a function with these sampled values and slopes is
    /// acceptable.
    pub fn accepts(&self, values: &[f64], slopes: &[f64]) -> bool {
        let (Ok(v), Ok(d)) = (variance(values), variance(slopes)) else {
            return false;
        };
        if !(v.is_finite() && d.is_finite()) {
            return false;
        }
        match self.mode {
            TrivialityMode::FunctionOrSlope => v + d >= self.threshold,
            TrivialityMode::EachQuantity => v >= self.threshold && d >= self.threshold,
        }
    }

    /// Checks every function of a candidate over `grid`: each must use `x`
    /// and pass [`accepts`](Self::accepts).
    pub fn check(&self, functions: &[PostfixExpr], slopes: &[PostfixExpr], grid: &Grid, constants: &[f64]) -> bool {
        functions.iter().zip(slopes).all(|(f, df)| {
            f.uses_variable(0)
                && self.accepts(&eval_batch(f, grid, constants), &eval_batch(df, grid, constants))
        })
    }
}

/// A problem-owned constant slot, such as a physical parameter that is fitted
/// alongside the expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSpec {
    pub name: String,
    pub initial: f64,
    pub bound: Option<Bound>,
}

/// Initial value of a freshly introduced fitted constant.
pub const DEFAULT_CONSTANT: f64 = 1.0;

pub trait Problem: Sync {
    fn function_names(&self) -> Vec<String>;
    fn term_names(&self) -> Vec<String>;
    fn grid(&self) -> &Grid;
    /// Constant slots owned by the problem; they precede the function slots.
    fn base_slots(&self) -> Vec<SlotSpec>;
    fn has_data(&self) -> bool;
    fn compile<'a>(&'a self, functions: &[PostfixExpr]) -> Box<dyn System + 'a>;

    fn base_constants(&self) -> Vec<f64> {
        self.base_slots().iter().map(|s| s.initial).collect()
    }

    /// Fit bounds for a candidate with `total` slots.
    fn bounds(&self, total: usize) -> Vec<Option<Bound>> {
        let mut b: Vec<Option<Bound>> = self.base_slots().iter().map(|s| s.bound).collect();
        b.resize(total.max(b.len()), None);
        b
    }
}

/// A compiled candidate: residuals as a function of the constant vector.
pub trait System {
    /// Weighted residual blocks, one per loss term, in term order.
    fn residuals(&self, constants: &[f64]) -> Result<Vec<Vec<f64>>, Rejection>;
    /// True when the candidate is acceptable under the triviality rule.
    fn non_trivial(&self, constants: &[f64]) -> bool;
}

/// Scores a compiled candidate. With `check_trivial` the triviality filter
/// runs first and short-circuits.
pub fn score(problem: &dyn Problem, system: &dyn System, constants: &[f64], check_trivial: bool) -> LossReport {
    let terms = problem.term_names();
    let count = problem.grid().len();
    let no_data = !problem.has_data();
    if check_trivial && !system.non_trivial(constants) {
        return LossReport::rejected(terms, count, Rejection::Trivial, no_data);
    }
    match system.residuals(constants) {
        Ok(blocks) => {
            let sne: Vec<f64> = blocks.iter().map(|b| b.iter().fold(0.0, |acc, r| acc + r * r)).collect();
            let report = LossReport::accepted(terms, sne, count, no_data);
            if report.total.is_finite() {
                return report;
            }
            // finite residuals can still overflow when squared
            let k = report.sne.iter().position(|s| !s.is_finite()).unwrap_or(0);
            let reason = Rejection::NonFinite {
                term: report.terms[k].clone(),
            };
            LossReport::rejected(report.terms, count, reason, no_data)
        }
        Err(reason) => LossReport::rejected(terms, count, reason, no_data),
    }
}

/// Flattened residual vector, `None` if anything is non-finite.
pub fn flat_residuals(system: &dyn System, constants: &[f64]) -> Option<Vec<f64>> {
    let blocks = system.residuals(constants).ok()?;
    let flat: Vec<f64> = blocks.into_iter().flatten().collect();
    flat.iter().all(|v| v.is_finite()).then_some(flat)
}

/// Scores a candidate as given (no fitting), including the triviality filter.
pub fn evaluate(problem: &dyn Problem, candidate: &CandidateSolution) -> LossReport {
    let system = problem.compile(&candidate.functions);
    score(problem, system.as_ref(), &candidate.constants, true)
}

/// Fits a compiled candidate's constants and scores the result. Returns the
/// fitted constants (unchanged on failure) with the report.
pub fn fit_and_score(
    problem: &dyn Problem,
    system: &dyn System,
    constants: &[f64],
    config: &FitConfig,
    check_trivial: bool,
) -> (Vec<f64>, LossReport, Option<FitOutcome>) {
    if constants.is_empty() {
        return (Vec::new(), score(problem, system, constants, check_trivial), None);
    }
    let cfg = FitConfig {
        constant_bounds: problem.bounds(constants.len()),
        ..config.clone()
    };
    match fit_constants(constants, |c: &[f64]| flat_residuals(system, c), &cfg) {
        Ok(out) => {
            let report = score(problem, system, &out.constants, check_trivial);
            (out.constants.clone(), report, Some(out))
        }
        Err(FitError::NonFiniteStart) | Err(FitError::NonFiniteJacobian) => {
            let report = score(problem, system, constants, check_trivial);
            let report = if report.is_accepted() {
                report
            } else {
                LossReport::rejected(
                    problem.term_names(),
                    problem.grid().len(),
                    report.rejected.unwrap_or(Rejection::FitFailed),
                    !problem.has_data(),
                )
            };
            (constants.to_vec(), report, None)
        }
        Err(FitError::Config(_)) => {
            let r = LossReport::rejected(
                problem.term_names(),
                problem.grid().len(),
                Rejection::FitFailed,
                !problem.has_data(),
            );
            (constants.to_vec(), r, None)
        }
    }
}

/// Single-function problem `f(x) − target(x) = 0` on a grid. Used to plant a
/// known answer inside a search space.
#[derive(Debug, Clone)]
pub struct PlantedProblem {
    pub name: String,
    pub target: PostfixExpr,
    pub grid: Grid,
    pub triviality: TrivialityRule,
    target_values: Vec<f64>,
}

impl PlantedProblem {
    pub fn new(name: impl Into<String>, target: PostfixExpr, grid: Grid) -> Self {
        let target_values = eval_batch(&target, &grid, &[]);
        Self {
            name: name.into(),
            target,
            grid,
            triviality: TrivialityRule::default(),
            target_values,
        }
    }
}

struct PlantedSystem<'a> {
    problem: &'a PlantedProblem,
    f: PostfixExpr,
    df: PostfixExpr,
}

impl System for PlantedSystem<'_> {
    fn residuals(&self, constants: &[f64]) -> Result<Vec<Vec<f64>>, Rejection> {
        let v = eval_batch(&self.f, &self.problem.grid, constants);
        let r: Vec<f64> = v.iter().zip(&self.problem.target_values).map(|(a, b)| a - b).collect();
        if r.iter().all(|x| x.is_finite()) {
            Ok(vec![r])
        } else {
            Err(Rejection::NonFinite {
                term: "residual".into(),
            })
        }
    }

    fn non_trivial(&self, constants: &[f64]) -> bool {
        self.problem.triviality.check(
            std::slice::from_ref(&self.f),
            std::slice::from_ref(&self.df),
            &self.problem.grid,
            constants,
        )
    }
}

impl Problem for PlantedProblem {
    fn function_names(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn term_names(&self) -> Vec<String> {
        vec!["residual".into()]
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn base_slots(&self) -> Vec<SlotSpec> {
        Vec::new()
    }

    fn has_data(&self) -> bool {
        true
    }

    fn compile<'a>(&'a self, functions: &[PostfixExpr]) -> Box<dyn System + 'a> {
        let f = functions[0].clone();
        let df = differentiate(&f, 0);
        Box::new(PlantedSystem { problem: self, f, df })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> PostfixExpr {
        PostfixExpr::parse(s).unwrap()
    }

    #[test]
    fn assemble_and_split_are_inverse() {
        let parts = vec![
            (e("c0 x mul c1 add"), vec![2.0, 3.0]),
            (e("x c0 div"), vec![5.0]),
        ];
        let c = CandidateSolution::assemble(&[7.0], &parts, Provenance::Sampled);
        assert_eq!(c.functions[0].to_string(), "c1 x mul c2 add");
        assert_eq!(c.functions[1].to_string(), "x c3 div");
        assert_eq!(c.constants, vec![7.0, 2.0, 3.0, 5.0]);
        let (base, back) = c.to_parts(1);
        assert_eq!(base, vec![7.0]);
        assert_eq!(back, parts);
    }

    #[test]
    fn candidate_file_round_trip() {
        let c = CandidateSolution::new(vec![e("c0 x sech mul")], vec![3.235], Provenance::Manual).unwrap();
        let names = vec!["n".to_string()];
        let file = c.to_file(&names);
        assert_eq!(file.functions[0].infix.as_deref(), Some("(3.235 * sech(x))"));
        let text = serde_json::to_string(&file).unwrap();
        let back: CandidateFile = serde_json::from_str(&text).unwrap();
        assert_eq!(CandidateSolution::from_file(&back, &names).unwrap(), c);
        assert!(matches!(
            CandidateSolution::from_file(&back, &["u".to_string()]),
            Err(CandidateError::MissingFunction(_))
        ));
    }

    #[test]
    fn report_total_is_ordered_sum() {
        let r = LossReport::accepted(vec!["a".into(), "b".into()], vec![0.1, 0.2], 127, false);
        assert_eq!(r.total, 0.1 + 0.2);
        for (m, s) in r.mse().iter().zip(&r.sne) {
            assert!((m * 127.0 - s).abs() <= f64::EPSILON * s);
        }
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(LossReport::from_json(&v, &r.terms, 127).unwrap(), r);
        let rej = LossReport::rejected(vec!["a".into()], 127, Rejection::Trivial, true);
        let v = serde_json::to_value(&rej).unwrap();
        assert_eq!(v["rejected"], "trivial");
        assert!(v["a"].is_null());
        assert_eq!(LossReport::from_json(&v, &rej.terms, 127).unwrap().rejected, Some(Rejection::Trivial));
    }

    #[test]
    fn triviality_rule() {
        let g = Grid::benchmark();
        let rule = TrivialityRule::default();
        let c = |f: &str| {
            let f = e(f);
            let df = differentiate(&f, 0);
            rule.check(&[f], &[df], &g, &[])
        };
        assert!(!c("5"));
        assert!(c("x tanh"));
        assert!(c("x sech 2 mul"));
        assert!(!c("x 1e-6 mul"));
        // flat but x-dependent through a zero factor is still trivial
        assert!(!c("x 0 mul"));
    }

    #[test]
    fn planted_problem_scores_target_at_zero() {
        let p = PlantedProblem::new("n", e("x sech"), Grid::benchmark());
        let cand = CandidateSolution::new(vec![e("x sech")], vec![], Provenance::Manual).unwrap();
        let r = evaluate(&p, &cand);
        assert_eq!(r.total, 0.0);
        let cand = CandidateSolution::new(vec![e("x tanh")], vec![], Provenance::Manual).unwrap();
        assert!(evaluate(&p, &cand).total > 1.0);
    }
}
