//! The bright-soliton benchmark.
//!
//! Two unknown functions of `x`: the scaled potential `u` and the density
//! `n`. Nine loss terms:
//!
//! | term | residual |
//! |------|----------|
//! | eq7  | g'' + ω²·g − n·(tanh u + ρ sinh u)/(1 + ρα), with ω² = k·n |
//! | eq8  | (ρ v_te² + v_ti²)·ln n − ρ(1 − cosh u) + ½ρα tanh²u − ρ²g²/(2(1 + ρα)) |
//! | eq9, eq10 | a at the left and right grid ends |
//! | eq11, eq12 | da/dx at the left and right grid ends |
//! | eq13 | n(x) − n(−x) over mirrored grid indices |
//! | eq14 | n/n0 − 1 − D1 at the dataset points |
//! | eq15 | w·(a − D2) at the dataset points |
//!
//! where `g = sinh u − α tanh u` and `a = sinh u − αγ₀ tanh u`. The ion
//! response γ₀ is a fitted constant owned by the problem.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constfit::Bound;
use crate::eval::{eval_batch, eval_points, eval_scalar, EvalError, Grid};
use crate::expr::{BinaryOp, PostfixExpr, Token, UnaryOp};
use crate::problem::{
    CandidateSolution, LossReport, Problem, Provenance, Rejection, SlotSpec, System,
    TrivialityRule,
};
use crate::symdiff::{differentiate, second_derivative, simplify};

pub const TERMS: [&str; 9] = [
    "eq7", "eq8", "eq9", "eq10", "eq11", "eq12", "eq13", "eq14", "eq15",
];

#[derive(Debug, Error)]
pub enum SolitonError {
    #[error("symmetry loss needs a grid mirrored about zero")]
    AsymmetricGrid,
    #[error("invalid plasma parameters: {0}")]
    Params(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Grid(#[from] EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dimensionless plasma parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlasmaParams {
    /// Electron to ion mass ratio.
    pub rho_i: f64,
    /// Ratio of the cyclotron to the laser frequency.
    pub alpha: f64,
    pub v_te: f64,
    pub v_ti: f64,
    pub n0: f64,
    /// ω² = omega_sq_coeff · n(x)
    pub omega_sq_coeff: f64,
    pub gamma0_slot: usize,
}

impl Default for PlasmaParams {
    fn default() -> Self {
        Self {
            rho_i: 1.0 / 1836.0,
            alpha: 0.4,
            v_te: 0.05,
            v_ti: 0.001,
            n0: 1.0,
            omega_sq_coeff: 0.64,
            gamma0_slot: 0,
        }
    }
}

impl PlasmaParams {
    pub fn validate(&self) -> Result<(), SolitonError> {
        let all = [self.rho_i, self.alpha, self.v_te, self.v_ti, self.n0, self.omega_sq_coeff];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(SolitonError::Params("parameters must be finite".into()));
        }
        if self.rho_i <= 0.0 {
            return Err(SolitonError::Params("rho_i must be positive".into()));
        }
        if self.n0 <= 0.0 {
            return Err(SolitonError::Params("n0 must be positive".into()));
        }
        if self.omega_sq_coeff < 0.0 {
            return Err(SolitonError::Params("omega_sq_coeff must be non-negative".into()));
        }
        Ok(())
    }
}

/// Density and field-amplitude samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: Grid,
    /// n/n0 − 1
    pub density: Vec<f64>,
    pub a_profile: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DataRow {
    x: f64,
    density: f64,
    a: f64,
}

impl Dataset {
    pub fn new(grid: Grid, density: Vec<f64>, a_profile: Vec<f64>) -> Result<Self, SolitonError> {
        if grid.is_empty() {
            return Err(SolitonError::Dataset("no rows".into()));
        }
        if density.len() != grid.len() || a_profile.len() != grid.len() {
            return Err(SolitonError::Dataset("columns differ in length".into()));
        }
        if density.iter().chain(&a_profile).any(|v| !v.is_finite()) {
            return Err(SolitonError::Dataset("non-finite value".into()));
        }
        Ok(Self {
            grid,
            density,
            a_profile,
        })
    }

    pub fn count(&self) -> usize {
        self.grid.len()
    }

    /// Reads CSV with header `x,density,a`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SolitonError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).ne(["x", "density", "a"]) {
            return Err(SolitonError::Dataset(format!(
                "expected header x,density,a, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut xs, mut d, mut a) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: DataRow = row?;
            xs.push(row.x);
            d.push(row.density);
            a.push(row.a);
        }
        let grid = Grid::new(xs).map_err(|_| SolitonError::Dataset("x must be finite and strictly increasing".into()))?;
        Self::new(grid, d, a)
    }

    pub fn load(path: &Path) -> Result<Self, SolitonError> {
        Self::read_csv(File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SolitonError> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.count() {
            w.serialize(DataRow {
                x: self.grid.points()[i],
                density: self.density[i],
                a: self.a_profile[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), SolitonError> {
        self.write_csv(File::create(path)?)
    }
}

fn push_sinh_minus_tanh(u: &PostfixExpr, factor: &[Token]) -> PostfixExpr {
    let mut t = Vec::with_capacity(2 * u.len() + 3 + factor.len());
    t.extend_from_slice(u.tokens());
    t.push(Token::Unary(UnaryOp::Sinh));
    t.extend_from_slice(u.tokens());
    t.push(Token::Unary(UnaryOp::Tanh));
    for f in factor {
        t.push(*f);
        t.push(Token::Binary(BinaryOp::Mul));
    }
    t.push(Token::Binary(BinaryOp::Sub));
    simplify(&PostfixExpr::new(t).expect("composition of valid programs"))
}

/// `sinh u − α tanh u`
pub fn compose_g(u: &PostfixExpr, params: &PlasmaParams) -> PostfixExpr {
    push_sinh_minus_tanh(u, &[Token::Lit(params.alpha)])
}

/// `sinh u − α γ₀ tanh u`, with γ₀ read from `params.gamma0_slot`.
pub fn compose_a(u: &PostfixExpr, params: &PlasmaParams) -> PostfixExpr {
    push_sinh_minus_tanh(u, &[Token::Lit(params.alpha), Token::Const(params.gamma0_slot)])
}

/// The benchmark problem.
#[derive(Debug, Clone)]
pub struct SolitonProblem {
    pub params: PlasmaParams,
    grid: Grid,
    pub dataset: Option<Dataset>,
    pub triviality: TrivialityRule,
    pub gamma0_initial: f64,
    pub gamma0_bound: Bound,
    pub data_weight: f64,
    /// Apply `data_weight` to the squared residual rather than the residual.
    pub weight_on_square: bool,
}

impl SolitonProblem {
    pub fn new(params: PlasmaParams, grid: Grid, dataset: Option<Dataset>) -> Result<Self, SolitonError> {
        params.validate()?;
        if !grid.is_symmetric() {
            return Err(SolitonError::AsymmetricGrid);
        }
        Ok(Self {
            params,
            grid,
            dataset,
            triviality: TrivialityRule::default(),
            gamma0_initial: 2.0,
            gamma0_bound: Bound { lo: 1.0, hi: 100.0 },
            data_weight: 10.0,
            weight_on_square: false,
        })
    }

    /// Default parameters on the benchmark grid without data.
    pub fn benchmark() -> Self {
        Self::new(PlasmaParams::default(), Grid::benchmark(), None).expect("static setup")
    }

    pub fn compile_soliton(&self, u: &PostfixExpr, n: &PostfixExpr) -> SolitonSystem<'_> {
        let g = compose_g(u, &self.params);
        SolitonSystem {
            problem: self,
            g2: second_derivative(&g, 0),
            du: differentiate(u, 0),
            dn: differentiate(n, 0),
            a: compose_a(u, &self.params),
            u: u.clone(),
            n: n.clone(),
            g,
        }
    }

    /// Synthetic dataset sampled from a candidate on `grid`.
    pub fn generate_dataset(&self, candidate: &CandidateSolution, grid: &Grid) -> Result<Dataset, SolitonError> {
        let c = &candidate.constants;
        let n = eval_batch(&candidate.functions[1], grid, c);
        let a = eval_batch(&compose_a(&candidate.functions[0], &self.params), grid, c);
        let density = n.iter().map(|v| v / self.params.n0 - 1.0).collect();
        Dataset::new(grid.clone(), density, a)
    }

    fn data_scale(&self) -> f64 {
        if self.weight_on_square {
            self.data_weight.sqrt()
        } else {
            self.data_weight
        }
    }
}

impl Problem for SolitonProblem {
    fn function_names(&self) -> Vec<String> {
        vec!["u".into(), "n".into()]
    }

    fn term_names(&self) -> Vec<String> {
        TERMS.iter().map(|s| s.to_string()).collect()
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn base_slots(&self) -> Vec<SlotSpec> {
        (0..=self.params.gamma0_slot)
            .map(|i| {
                if i == self.params.gamma0_slot {
                    SlotSpec {
                        name: "gamma0".into(),
                        initial: self.gamma0_initial,
                        bound: Some(self.gamma0_bound),
                    }
                } else {
                    SlotSpec {
                        name: format!("unused{i}"),
                        initial: crate::problem::DEFAULT_CONSTANT,
                        bound: None,
                    }
                }
            })
            .collect()
    }

    fn has_data(&self) -> bool {
        self.dataset.is_some()
    }

    fn compile<'a>(&'a self, functions: &[PostfixExpr]) -> Box<dyn System + 'a> {
        Box::new(self.compile_soliton(&functions[0], &functions[1]))
    }
}

/// A candidate `(u, n)` with its derived programs.
pub struct SolitonSystem<'a> {
    problem: &'a SolitonProblem,
    u: PostfixExpr,
    n: PostfixExpr,
    du: PostfixExpr,
    dn: PostfixExpr,
    g: PostfixExpr,
    g2: PostfixExpr,
    a: PostfixExpr,
}

fn finite(term: &str, r: Vec<f64>) -> Result<Vec<f64>, Rejection> {
    if r.iter().all(|v| v.is_finite()) {
        Ok(r)
    } else {
        Err(Rejection::NonFinite { term: term.into() })
    }
}

fn sne(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |acc, v| acc + v * v)
}

impl SolitonSystem<'_> {
    pub fn second_derivative_of_g(&self) -> &PostfixExpr {
        &self.g2
    }

    pub fn a_expr(&self) -> &PostfixExpr {
        &self.a
    }

    pub fn eq7_residual(&self, c: &[f64]) -> Result<Vec<f64>, Rejection> {
        let p = &self.problem.params;
        let grid = &self.problem.grid;
        let u = eval_batch(&self.u, grid, c);
        let n = eval_batch(&self.n, grid, c);
        let g = eval_batch(&self.g, grid, c);
        let g2 = eval_batch(&self.g2, grid, c);
        let denom = 1.0 + p.rho_i * p.alpha;
        let r = (0..grid.len())
            .map(|i| {
                let source = n[i] * (u[i].tanh() + p.rho_i * u[i].sinh()) / denom;
                g2[i] + p.omega_sq_coeff * n[i] * g[i] - source
            })
            .collect();
        finite("eq7", r)
    }

    pub fn eq8_residual(&self, c: &[f64]) -> Result<Vec<f64>, Rejection> {
        let p = &self.problem.params;
        let grid = &self.problem.grid;
        let u = eval_batch(&self.u, grid, c);
        let n = eval_batch(&self.n, grid, c);
        let g = eval_batch(&self.g, grid, c);
        let thermal = p.rho_i * p.v_te * p.v_te + p.v_ti * p.v_ti;
        let rho = p.rho_i;
        let r = (0..grid.len())
            .map(|i| {
                let t = u[i].tanh();
                thermal * n[i].ln() - rho * (1.0 - u[i].cosh()) + 0.5 * rho * p.alpha * t * t
                    - rho * rho * g[i] * g[i] / (2.0 * (1.0 + rho * p.alpha))
            })
            .collect();
        finite("eq8", r)
    }

    /// `[a(x_min), a(x_max), a'(x_min), a'(x_max)]`
    pub fn boundary_residuals(&self, c: &[f64]) -> Result<[f64; 4], Rejection> {
        let p = &self.problem.params;
        let gamma0 = c.get(p.gamma0_slot).copied().unwrap_or(f64::NAN);
        let ends = [self.problem.grid.first(), self.problem.grid.last()];
        let mut out = [0.0; 4];
        for (k, x) in ends.into_iter().enumerate() {
            let u = eval_scalar(&self.u, x, c);
            let du = eval_scalar(&self.du, x, c);
            let sech = 1.0 / u.cosh();
            out[k] = eval_scalar(&self.a, x, c);
            out[k + 2] = (u.cosh() - p.alpha * gamma0 * sech * sech) * du;
        }
        for (k, v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(Rejection::NonFinite {
                    term: TERMS[2 + k].into(),
                });
            }
        }
        Ok(out)
    }

    pub fn eq13_residual(&self, c: &[f64]) -> Result<Vec<f64>, Rejection> {
        let n = eval_batch(&self.n, &self.problem.grid, c);
        let len = n.len();
        finite("eq13", (0..len).map(|i| n[i] - n[len - 1 - i]).collect())
    }

    /// Data residuals, empty when no dataset is attached.
    pub fn data_residuals(&self, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>), Rejection> {
        let Some(data) = &self.problem.dataset else {
            return Ok((Vec::new(), Vec::new()));
        };
        let p = &self.problem.params;
        let xs = data.grid.points();
        let n = eval_points(&self.n, xs, c);
        let a = eval_points(&self.a, xs, c);
        let w = self.problem.data_scale();
        let r14 = n.iter().zip(&data.density).map(|(n, d)| n / p.n0 - 1.0 - d).collect();
        let r15 = a.iter().zip(&data.a_profile).map(|(a, d)| w * (a - d)).collect();
        Ok((finite("eq14", r14)?, finite("eq15", r15)?))
    }

    pub fn loss_eq1(&self, c: &[f64]) -> Result<f64, Rejection> {
        self.eq7_residual(c).map(|r| sne(&r))
    }

    pub fn loss_eq2(&self, c: &[f64]) -> Result<f64, Rejection> {
        self.eq8_residual(c).map(|r| sne(&r))
    }

    pub fn loss_boundary(&self, c: &[f64]) -> Result<[f64; 4], Rejection> {
        self.boundary_residuals(c).map(|b| b.map(|v| v * v))
    }

    pub fn loss_symmetry(&self, c: &[f64]) -> Result<f64, Rejection> {
        self.eq13_residual(c).map(|r| sne(&r))
    }

    pub fn loss_data(&self, c: &[f64]) -> Result<(f64, f64), Rejection> {
        self.data_residuals(c).map(|(a, b)| (sne(&a), sne(&b)))
    }

    /// All nine terms with the triviality filter applied first.
    pub fn total_loss(&self, c: &[f64]) -> LossReport {
        crate::problem::score(self.problem, self, c, true)
    }

    pub fn triviality_check(&self, c: &[f64]) -> bool {
        self.non_trivial(c)
    }
}

impl System for SolitonSystem<'_> {
    fn residuals(&self, c: &[f64]) -> Result<Vec<Vec<f64>>, Rejection> {
        let b = self.boundary_residuals(c)?;
        let (d14, d15) = self.data_residuals(c)?;
        Ok(vec![
            self.eq7_residual(c)?,
            self.eq8_residual(c)?,
            vec![b[0]],
            vec![b[1]],
            vec![b[2]],
            vec![b[3]],
            self.eq13_residual(c)?,
            d14,
            d15,
        ])
    }

    fn non_trivial(&self, c: &[f64]) -> bool {
        self.problem.triviality.check(
            &[self.u.clone(), self.n.clone()],
            &[self.du.clone(), self.dn.clone()],
            &self.problem.grid,
            c,
        )
    }
}

/// The reference solution bundled with the benchmark:
///
/// u(x) = tanh(tanh(sech x)) / (−tanh(x)/e − 6.434)
/// n(x) = sech(3.235 · sech(x)^tanh 2)
///
/// with γ₀ = 5.22145 in slot 0.
pub fn golden_candidate() -> CandidateSolution {
    let u = PostfixExpr::parse("x sech tanh tanh x tanh 1 exp div neg c1 sub div").expect("static");
    let n = PostfixExpr::parse("c2 x sech 2 tanh pow mul sech").expect("static");
    CandidateSolution::new(vec![u, n], vec![5.22145, 6.434, 3.235], Provenance::Golden).expect("static")
}
