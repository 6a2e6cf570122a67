//! Stack-machine evaluation of postfix programs.
//!
//! Domain violations are not trapped: `log(-1)`, `sqrt(-1)`, `0/0` and
//! friends produce NaN or infinities that propagate to the result. Callers
//! decide what a non-finite value means.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{PostfixExpr, Token};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("variance of an empty vector")]
    Empty,
    #[error("grid points must be finite and strictly increasing")]
    NotIncreasing,
    #[error("grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("grid bounds must satisfy x_min < x_max")]
    BadBounds,
}

/// Ordered sample points of the independent variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    symmetric: bool,
}

impl Grid {
    /// Wraps arbitrary points; the symmetry flag is set when point `i` is the
    /// exact negation of point `N-1-i` for every `i`.
    pub fn new(points: Vec<f64>) -> Result<Self, EvalError> {
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::NotIncreasing);
        }
        let n = points.len();
        let symmetric = n > 0 && (0..n).all(|i| points[i] == -points[n - 1 - i]);
        Ok(Self { points, symmetric })
    }

    /// `n` uniformly spaced points on `[x_min, x_max]`. Bounds of equal
    /// magnitude give an exactly mirrored grid.
    pub fn uniform(x_min: f64, x_max: f64, n: usize) -> Result<Self, EvalError> {
        if n < 2 {
            return Err(EvalError::TooFewPoints(n));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(EvalError::BadBounds);
        }
        let step = (x_max - x_min) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| x_min + step * i as f64).collect();
        points[n - 1] = x_max;
        if x_min == -x_max {
            for i in 0..n / 2 {
                points[n - 1 - i] = -points[i];
            }
            if n % 2 == 1 {
                points[n / 2] = 0.0;
            }
        }
        Self::new(points)
    }

    /// The benchmark grid: 127 points on [-10, 10].
    pub fn benchmark() -> Self {
        Self::uniform(-10.0, 10.0, 127).expect("static grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Every other point starting at the first; used to check subset sums.
    pub fn subsample(&self, stride: usize) -> Self {
        let points: Vec<f64> = self.points.iter().step_by(stride.max(1)).copied().collect();
        Self::new(points).expect("subset of an increasing grid is increasing")
    }
}

/// Evaluates `expr` at a single point. Missing constant slots read as NaN.
pub fn eval_scalar(expr: &PostfixExpr, x: f64, constants: &[f64]) -> f64 {
    let mut stack: Vec<f64> = Vec::with_capacity(expr.len().div_ceil(2));
    for t in expr.tokens() {
        match *t {
            Token::Var(_) => stack.push(x),
            Token::Lit(v) => stack.push(v),
            Token::Const(i) => stack.push(constants.get(i).copied().unwrap_or(f64::NAN)),
            Token::Unary(op) => {
                let a = stack.last_mut().expect("valid postfix");
                *a = op.apply(*a);
            }
            Token::Binary(op) => {
                let b = stack.pop().expect("valid postfix");
                let a = stack.last_mut().expect("valid postfix");
                *a = op.apply(*a, b);
            }
        }
    }
    stack.pop().expect("valid postfix")
}

/// Evaluates `expr` at every grid point.
pub fn eval_batch(expr: &PostfixExpr, grid: &Grid, constants: &[f64]) -> Vec<f64> {
    eval_points(expr, grid.points(), constants)
}

/// Column-wise evaluation over arbitrary points. Every point goes through
/// the same sequence of scalar operations as [`eval_scalar`], so results
/// agree bitwise.
pub fn eval_points(expr: &PostfixExpr, xs: &[f64], constants: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut stack: Vec<Vec<f64>> = Vec::with_capacity(expr.len().div_ceil(2));
    let mut spare: Vec<Vec<f64>> = Vec::new();
    let fresh = |spare: &mut Vec<Vec<f64>>| spare.pop().unwrap_or_else(|| Vec::with_capacity(n));
    for t in expr.tokens() {
        match *t {
            Token::Var(_) => {
                let mut col = fresh(&mut spare);
                col.clear();
                col.extend_from_slice(xs);
                stack.push(col);
            }
            Token::Lit(v) => {
                let mut col = fresh(&mut spare);
                col.clear();
                col.resize(n, v);
                stack.push(col);
            }
            Token::Const(i) => {
                let v = constants.get(i).copied().unwrap_or(f64::NAN);
                let mut col = fresh(&mut spare);
                col.clear();
                col.resize(n, v);
                stack.push(col);
            }
            Token::Unary(op) => {
                let a = stack.last_mut().expect("valid postfix");
                for v in a.iter_mut() {
                    *v = op.apply(*v);
                }
            }
            Token::Binary(op) => {
                let b = stack.pop().expect("valid postfix");
                let a = stack.last_mut().expect("valid postfix");
                for (av, bv) in a.iter_mut().zip(&b) {
                    *av = op.apply(*av, *bv);
                }
                spare.push(b);
            }
        }
    }
    stack.pop().expect("valid postfix")
}

/// Population variance. Any non-finite element makes the result non-finite.
pub fn variance(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}
