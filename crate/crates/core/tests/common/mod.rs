//! Independent reference computations shared by the integration tests.
//!
//! `Jet` carries a value with its first and second derivative in `x` and
//! evaluates postfix token arrays by forward propagation, giving derivative
//! values without going through the symbolic splicer.

#![allow(dead_code)]

use pisr::expr::{BinaryOp, PostfixExpr, Token, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet { v, d: 0.0, dd: 0.0 }
    }

    pub fn variable(x: f64) -> Self {
        Jet { v: x, d: 1.0, dd: 0.0 }
    }

    // f(v), f'(v), f''(v) pushed through the chain rule
    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Jet {
            v: f,
            d: f1 * self.d,
            dd: f2 * self.d * self.d + f1 * self.dd,
        }
    }

    pub fn unary(self, op: UnaryOp) -> Self {
        let v = self.v;
        match op {
            UnaryOp::Neg => self.chain(-v, -1.0, 0.0),
            UnaryOp::Log => self.chain(v.ln(), 1.0 / v, -1.0 / (v * v)),
            UnaryOp::Exp => {
                let e = v.exp();
                self.chain(e, e, e)
            }
            UnaryOp::Cos => self.chain(v.cos(), -v.sin(), -v.cos()),
            UnaryOp::Sin => self.chain(v.sin(), v.cos(), -v.sin()),
            UnaryOp::Sqrt => {
                let s = v.sqrt();
                self.chain(s, 0.5 / s, -0.25 / (s * s * s))
            }
            UnaryOp::Asin => {
                let w = 1.0 - v * v;
                self.chain(v.asin(), 1.0 / w.sqrt(), v / (w * w.sqrt()))
            }
            UnaryOp::Acos => {
                let w = 1.0 - v * v;
                self.chain(v.acos(), -1.0 / w.sqrt(), -v / (w * w.sqrt()))
            }
            UnaryOp::Tanh => {
                let t = v.tanh();
                self.chain(t, 1.0 - t * t, -2.0 * t * (1.0 - t * t))
            }
            UnaryOp::Sech => {
                let s = 1.0 / v.cosh();
                let t = v.tanh();
                self.chain(s, -s * t, s * (2.0 * t * t - 1.0))
            }
            UnaryOp::Sinh => self.chain(v.sinh(), v.cosh(), v.sinh()),
            UnaryOp::Cosh => self.chain(v.cosh(), v.sinh(), v.cosh()),
        }
    }

    fn recip(self) -> Self {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    fn mul(self, b: Jet) -> Self {
        Jet {
            v: self.v * b.v,
            d: self.d * b.v + self.v * b.d,
            dd: self.dd * b.v + 2.0 * self.d * b.d + self.v * b.dd,
        }
    }

    pub fn binary(self, op: BinaryOp, b: Jet) -> Self {
        match op {
            BinaryOp::Add => Jet {
                v: self.v + b.v,
                d: self.d + b.d,
                dd: self.dd + b.dd,
            },
            BinaryOp::Sub => Jet {
                v: self.v - b.v,
                d: self.d - b.d,
                dd: self.dd - b.dd,
            },
            BinaryOp::Mul => self.mul(b),
            BinaryOp::Div => self.mul(b.recip()),
            BinaryOp::Pow => {
                if b.d == 0.0 && b.dd == 0.0 {
                    let p = b.v;
                    self.chain(
                        self.v.powf(p),
                        p * self.v.powf(p - 1.0),
                        p * (p - 1.0) * self.v.powf(p - 2.0),
                    )
                } else {
                    let l = self.unary(UnaryOp::Log);
                    b.mul(l).unary(UnaryOp::Exp)
                }
            }
        }
    }
}

/// Evaluates with jets; constants come from `c`.
pub fn jet_eval(expr: &PostfixExpr, x: f64, c: &[f64]) -> Jet {
    let mut stack: Vec<Jet> = Vec::new();
    for t in expr.tokens() {
        let j = match *t {
            Token::Var(_) => Jet::variable(x),
            Token::Lit(v) => Jet::constant(v),
            Token::Const(i) => Jet::constant(c[i]),
            Token::Unary(op) => stack.pop().unwrap().unary(op),
            Token::Binary(op) => {
                let b = stack.pop().unwrap();
                let a = stack.pop().unwrap();
                a.binary(op, b)
            }
        };
        stack.push(j);
    }
    stack.pop().unwrap()
}

pub fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// `n` points on [a, b] mirrored about zero when a = −b.
pub fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    if a == -b {
        for i in 0..n / 2 {
            p[n - 1 - i] = -p[i];
        }
        if n % 2 == 1 {
            p[n / 2] = 0.0;
        }
    }
    p
}

/// Every expression of height at most `depth` over leaf `x`, by direct
/// recursion.
pub fn all_expressions(depth: usize, unary: &[UnaryOp], binary: &[BinaryOp]) -> Vec<Vec<Token>> {
    if depth == 0 {
        return vec![vec![Token::Var(0)]];
    }
    let lower = all_expressions(depth - 1, unary, binary);
    let mut out = vec![vec![Token::Var(0)]];
    for op in unary {
        for e in &lower {
            let mut t = e.clone();
            t.push(Token::Unary(*op));
            out.push(t);
        }
    }
    for op in binary {
        for a in &lower {
            for b in &lower {
                let mut t = a.clone();
                t.extend_from_slice(b);
                t.push(Token::Binary(*op));
                out.push(t);
            }
        }
    }
    out
}
