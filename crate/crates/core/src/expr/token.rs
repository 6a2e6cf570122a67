use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExprError;

/// Arity-1 operators known to the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Log,
    Exp,
    Cos,
    Sin,
    Sqrt,
    Asin,
    Acos,
    Tanh,
    Sech,
    Sinh,
    Cosh,
}

/// Arity-2 operators known to the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 12] = [
        UnaryOp::Neg,
        UnaryOp::Log,
        UnaryOp::Exp,
        UnaryOp::Cos,
        UnaryOp::Sin,
        UnaryOp::Sqrt,
        UnaryOp::Asin,
        UnaryOp::Acos,
        UnaryOp::Tanh,
        UnaryOp::Sech,
        UnaryOp::Sinh,
        UnaryOp::Cosh,
    ];

    /// The unary whitelist used by the soliton search (no sinh/cosh).
    pub const SEARCH: [UnaryOp; 10] = [
        UnaryOp::Neg,
        UnaryOp::Log,
        UnaryOp::Exp,
        UnaryOp::Cos,
        UnaryOp::Sin,
        UnaryOp::Sqrt,
        UnaryOp::Asin,
        UnaryOp::Acos,
        UnaryOp::Tanh,
        UnaryOp::Sech,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Log => "log",
            UnaryOp::Exp => "exp",
            UnaryOp::Cos => "cos",
            UnaryOp::Sin => "sin",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Asin => "asin",
            UnaryOp::Acos => "acos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sech => "sech",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
        }
    }

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Log => v.ln(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Sin => v.sin(),
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Asin => v.asin(),
            UnaryOp::Acos => v.acos(),
            UnaryOp::Tanh => v.tanh(),
            UnaryOp::Sech => 1.0 / v.cosh(),
            UnaryOp::Sinh => v.sinh(),
            UnaryOp::Cosh => v.cosh(),
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }
}

impl fmt::Display for UnaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for BinaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnaryOp {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UnaryOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| ExprError::UnknownOperator(s.to_string()))
    }
}

impl FromStr for BinaryOp {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BinaryOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| ExprError::UnknownOperator(s.to_string()))
    }
}

/// One cell of a postfix program.
#[derive(Debug, Clone, Copy)]
pub enum Token {
    Unary(UnaryOp),
    Binary(BinaryOp),
    Var(usize),
    Lit(f64),
    /// Placeholder for a fitted constant, indexing the candidate's constant vector.
    Const(usize),
}

// Literal equality is bitwise so that token-identity checks are total.
impl PartialEq for Token {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Token::Unary(a), Token::Unary(b)) => a == b,
            (Token::Binary(a), Token::Binary(b)) => a == b,
            (Token::Var(a), Token::Var(b)) => a == b,
            (Token::Lit(a), Token::Lit(b)) => a.to_bits() == b.to_bits(),
            (Token::Const(a), Token::Const(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Token {}

impl Token {
    pub fn arity(&self) -> usize {
        match self {
            Token::Unary(_) => 1,
            Token::Binary(_) => 2,
            _ => 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.arity() == 0
    }

    pub fn literal(&self) -> Option<f64> {
        match self {
            Token::Lit(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Unary(op) => f.write_str(op.name()),
            Token::Binary(op) => f.write_str(op.name()),
            Token::Var(0) => f.write_str("x"),
            Token::Var(i) => write!(f, "x{i}"),
            Token::Lit(v) => write!(f, "{v}"),
            Token::Const(i) => write!(f, "c{i}"),
        }
    }
}

impl FromStr for Token {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "x" {
            return Ok(Token::Var(0));
        }
        if let Ok(op) = s.parse::<UnaryOp>() {
            return Ok(Token::Unary(op));
        }
        if let Ok(op) = s.parse::<BinaryOp>() {
            return Ok(Token::Binary(op));
        }
        if let Some(idx) = s.strip_prefix('x').and_then(|r| r.parse::<usize>().ok()) {
            return Ok(Token::Var(idx));
        }
        if let Some(idx) = s.strip_prefix('c').and_then(|r| r.parse::<usize>().ok()) {
            return Ok(Token::Const(idx));
        }
        match s.parse::<f64>() {
            Ok(v) if !s.is_empty() => Ok(Token::Lit(v)),
            _ => Err(ExprError::UnknownToken(s.to_string())),
        }
    }
}
