//! Refinement of fitted-constant slots.
//!
//! Two methods are offered: Levenberg–Marquardt on the residual vector with a
//! forward-difference Jacobian in constant space, and L-BFGS with a
//! backtracking line search on the scalar sum of squares. Both project
//! iterates onto per-slot bounds and only ever return their best finite
//! iterate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    #[serde(alias = "lm")]
    LevenbergMarquardt,
    #[serde(alias = "lbfgs")]
    QuasiNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const FREE: Bound = Bound {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub method: FitMethod,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Per-slot bounds; missing entries are unbounded.
    pub constant_bounds: Vec<Option<Bound>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::LevenbergMarquardt,
            max_iterations: 50,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            constant_bounds: Vec::new(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iterations < 1 {
            return Err(FitError::Config("max_iterations must be >= 1".into()));
        }
        if !(self.gradient_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return Err(FitError::Config("tolerances must be > 0".into()));
        }
        for b in self.constant_bounds.iter().flatten() {
            if b.lo.partial_cmp(&b.hi).is_none_or(|o| o.is_gt()) {
                return Err(FitError::Config(format!("empty bound [{}, {}]", b.lo, b.hi)));
            }
        }
        Ok(())
    }

    fn bound(&self, slot: usize) -> Bound {
        self.constant_bounds
            .get(slot)
            .copied()
            .flatten()
            .unwrap_or(Bound::FREE)
    }

    fn project(&self, c: &mut [f64]) {
        for (i, v) in c.iter_mut().enumerate() {
            *v = self.bound(i).clamp(*v);
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("residuals are not finite at the initial constants")]
    NonFiniteStart,
    #[error("every perturbed residual evaluation was non-finite")]
    NonFiniteJacobian,
    #[error("invalid fit configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub constants: Vec<f64>,
    pub sse: f64,
    pub initial_sse: f64,
    pub converged: bool,
    pub iterations: usize,
    pub method: FitMethod,
}

/// Sum of squares, or `None` when the residuals are absent or non-finite.
fn sse_of(r: Option<Vec<f64>>) -> Option<(f64, Vec<f64>)> {
    let r = r?;
    let s: f64 = r.iter().map(|v| v * v).sum();
    s.is_finite().then_some((s, r))
}

/// Forward-difference Jacobian with step `1e-7·(1+|c_j|)`.
///
/// Columns whose perturbed evaluation is non-finite are filled with NaN; if
/// every column fails the whole Jacobian is rejected.
pub fn jacobian<F>(residual_fn: &F, constants: &[f64]) -> Result<DMatrix<f64>, FitError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let base = residual_fn(constants)
        .filter(|r| r.iter().all(|v| v.is_finite()))
        .ok_or(FitError::NonFiniteStart)?;
    jacobian_at(residual_fn, constants, &base)
}

fn jacobian_at<F>(residual_fn: &F, constants: &[f64], base: &[f64]) -> Result<DMatrix<f64>, FitError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let m = base.len();
    let n = constants.len();
    let mut j = DMatrix::<f64>::from_element(m, n, f64::NAN);
    let mut any_finite = n == 0;
    let mut probe = constants.to_vec();
    for col in 0..n {
        let h = 1e-7 * (1.0 + constants[col].abs());
        probe[col] = constants[col] + h;
        let step = probe[col] - constants[col];
        if let Some(r) = residual_fn(&probe).filter(|r| r.len() == m && r.iter().all(|v| v.is_finite())) {
            any_finite = true;
            for row in 0..m {
                j[(row, col)] = (r[row] - base[row]) / step;
            }
        }
        probe[col] = constants[col];
    }
    if any_finite {
        Ok(j)
    } else {
        Err(FitError::NonFiniteJacobian)
    }
}

/// Refines `initial` to reduce the sum of squared residuals.
///
/// The returned SSE never exceeds the initial one. A non-finite start is an
/// error; non-finite trial points are treated as rejected steps.
pub fn fit_constants<F>(initial: &[f64], residual_fn: F, config: &FitConfig) -> Result<FitOutcome, FitError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    config.validate()?;
    let mut c0 = initial.to_vec();
    config.project(&mut c0);
    let (sse0, r0) = sse_of(residual_fn(&c0)).ok_or(FitError::NonFiniteStart)?;
    if sse0 == 0.0 || c0.is_empty() {
        return Ok(FitOutcome {
            constants: c0,
            sse: sse0,
            initial_sse: sse0,
            converged: true,
            iterations: 0,
            method: config.method,
        });
    }
    match config.method {
        FitMethod::LevenbergMarquardt => match levenberg_marquardt(&c0, sse0, r0, &residual_fn, config) {
            Ok(out) => Ok(out),
            Err(FitError::NonFiniteJacobian) => quasi_newton(&c0, sse0, &residual_fn, config),
            Err(e) => Err(e),
        },
        FitMethod::QuasiNewton => quasi_newton(&c0, sse0, &residual_fn, config),
    }
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;

fn levenberg_marquardt<F>(
    c0: &[f64],
    sse0: f64,
    r0: Vec<f64>,
    residual_fn: &F,
    config: &FitConfig,
) -> Result<FitOutcome, FitError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = c0.len();
    let mut c = c0.to_vec();
    let mut sse = sse0;
    let mut r = r0;
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let j = match jacobian_at(residual_fn, &c, &r) {
            Ok(j) => j,
            Err(_) if iterations > 1 => break,
            Err(e) => return Err(e),
        };
        if j.iter().any(|v| !v.is_finite()) {
            // Partially broken Jacobian: let the scalar method take over from here.
            let qn = quasi_newton(&c, sse, residual_fn, config)?;
            return Ok(FitOutcome {
                initial_sse: sse0,
                iterations: iterations + qn.iterations,
                ..qn
            });
        }
        let rv = DVector::from_column_slice(&r);
        let jt = j.transpose();
        let g = &jt * &rv;
        if g.amax() <= config.gradient_tolerance {
            converged = true;
            break;
        }
        let jtj = &jt * &j;
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = c.iter().zip(step.iter()).map(|(ci, si)| ci + si).collect();
            config.project(&mut trial);
            match sse_of(residual_fn(&trial)) {
                Some((s, rt)) if s < sse => {
                    let moved = trial
                        .iter()
                        .zip(&c)
                        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
                        .fold(0.0, f64::max);
                    let rel_drop = (sse - s) / sse;
                    c = trial;
                    sse = s;
                    r = rt;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if moved <= config.step_tolerance || sse == 0.0 || rel_drop <= 1e-15 {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Ok(FitOutcome {
        constants: c,
        sse,
        initial_sse: sse0,
        converged,
        iterations,
        method: FitMethod::LevenbergMarquardt,
    })
}

const LBFGS_MEMORY: usize = 6;

fn quasi_newton<F>(c0: &[f64], sse0: f64, residual_fn: &F, config: &FitConfig) -> Result<FitOutcome, FitError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let loss = |c: &[f64]| sse_of(residual_fn(c)).map(|(s, _)| s);
    let grad = |c: &[f64], f0: f64| -> Option<Vec<f64>> {
        let mut probe = c.to_vec();
        let mut g = vec![0.0; c.len()];
        for i in 0..c.len() {
            let h = 1e-7 * (1.0 + c[i].abs());
            probe[i] = c[i] + h;
            let fh = loss(&probe).or_else(|| {
                probe[i] = c[i] - h;
                loss(&probe).map(|v| 2.0 * f0 - v)
            })?;
            g[i] = (fh - f0) / h;
            probe[i] = c[i];
        }
        Some(g)
    };

    let mut c = c0.to_vec();
    let mut f = sse0;
    let mut g = grad(&c, f).ok_or(FitError::NonFiniteJacobian)?;
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= config.gradient_tolerance {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y) in history.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            axpy(&mut q, -a, y);
            alphas.push((rho, a));
        }
        if let Some((s, y)) = history.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt();
            let scale = 1.0 / gn.max(1e-300);
            q.iter_mut().for_each(|v| *v *= scale.min(1.0));
        }
        for ((s, y), (rho, a)) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(&mut q, a - b, s);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &g) >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
        }

        // backtracking Armijo search on the projected path
        let slope = dot(&dir, &g);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = c.iter().zip(&dir).map(|(ci, di)| ci + t * di).collect();
            config.project(&mut trial);
            if let Some(ft) = loss(&trial) {
                if ft <= f + 1e-4 * t * slope || (ft < f && t < 1e-6) {
                    next = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = next else {
            converged = true;
            break;
        };
        let Some(gt) = grad(&trial, ft) else {
            c = trial;
            f = ft;
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&c).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let moved = s
            .iter()
            .zip(&c)
            .map(|(d, b)| d.abs() / (1.0 + b.abs()))
            .fold(0.0, f64::max);
        if dot(&s, &y) > 1e-300 {
            history.push((s, y));
            if history.len() > LBFGS_MEMORY {
                history.remove(0);
            }
        }
        c = trial;
        f = ft;
        g = gt;
        if moved <= config.step_tolerance || f == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(FitOutcome {
        constants: c,
        sse: f,
        initial_sse: sse0,
        converged,
        iterations,
        method: FitMethod::QuasiNewton,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
