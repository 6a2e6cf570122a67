//! Postfix expression arrays, the fixed-depth grammar that produces them, and
//! the helpers that enumerate, sample, perturb and print them.
//!
//! Every expression in the engine is a flat token array in reverse Polish
//! order. Operators follow their operands, so any subtree occupies a
//! contiguous slice ending at its root token.

mod grammar;
mod token;

pub use grammar::{
    enumerate_expressions, perturb, sample_expression, Enumeration, Grammar, LeafKind,
    Perturbed, ProductionWeights,
};
pub use token::{BinaryOp, Token, UnaryOp};

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("token sequence is not a valid postfix program")]
    InvalidPostfix,
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("constant slot c{slot} has no value (only {available} constants)")]
    MissingConstant { slot: usize, available: usize },
    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),
}

/// Returns true iff `tokens` is a well-formed postfix program producing
/// exactly one value.
pub fn validate_postfix(tokens: &[Token]) -> bool {
    let mut height = 0usize;
    for t in tokens {
        let arity = t.arity();
        if height < arity {
            return false;
        }
        height = height - arity + 1;
    }
    height == 1
}

/// A validated postfix expression with its tree height cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostfixExpr {
    tokens: Vec<Token>,
    depth: usize,
}

impl PostfixExpr {
    pub fn new(tokens: Vec<Token>) -> Result<Self, ExprError> {
        let depth = tree_depth(&tokens).ok_or(ExprError::InvalidPostfix)?;
        Ok(Self { tokens, depth })
    }

    pub(crate) fn new_unchecked(tokens: Vec<Token>) -> Self {
        debug_assert!(validate_postfix(&tokens));
        let depth = tree_depth(&tokens).expect("valid postfix");
        Self { tokens, depth }
    }

    pub fn leaf(token: Token) -> Self {
        assert!(token.is_leaf(), "leaf() requires an arity-0 token");
        Self {
            tokens: vec![token],
            depth: 0,
        }
    }

    pub fn var() -> Self {
        Self::leaf(Token::Var(0))
    }

    pub fn literal(v: f64) -> Self {
        Self::leaf(Token::Lit(v))
    }

    /// Parses whitespace-separated token strings, e.g. `"x sech 2 mul"`.
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = src
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<Token>, _>>()?;
        Self::new(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.tokens
    }

    /// Number of constant slots referenced, i.e. one past the largest `c{i}`.
    pub fn const_slots(&self) -> usize {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                Token::Const(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn uses_variable(&self, var: usize) -> bool {
        self.tokens.contains(&Token::Var(var))
    }

    /// Copy with every constant slot index offset by `by`.
    pub fn shift_slots(&self, by: usize) -> Self {
        let tokens = self
            .tokens
            .iter()
            .map(|t| match t {
                Token::Const(i) => Token::Const(i + by),
                t => *t,
            })
            .collect();
        Self {
            tokens,
            depth: self.depth,
        }
    }

    /// Applies `f(self, other...)` by concatenation: `self other op`.
    pub fn binary(&self, other: &PostfixExpr, op: BinaryOp) -> Self {
        let mut tokens = Vec::with_capacity(self.len() + other.len() + 1);
        tokens.extend_from_slice(&self.tokens);
        tokens.extend_from_slice(&other.tokens);
        tokens.push(Token::Binary(op));
        Self {
            tokens,
            depth: 1 + self.depth.max(other.depth),
        }
    }

    pub fn unary(&self, op: UnaryOp) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(Token::Unary(op));
        Self {
            tokens,
            depth: self.depth + 1,
        }
    }

    /// Fully parenthesised infix rendering with constants substituted.
    pub fn to_infix(&self, constants: &[f64]) -> Result<String, ExprError> {
        let mut stack: Vec<String> = Vec::with_capacity(self.len());
        for t in &self.tokens {
            match *t {
                Token::Var(_) | Token::Lit(_) => stack.push(t.to_string()),
                Token::Const(i) => {
                    let v = constants.get(i).ok_or(ExprError::MissingConstant {
                        slot: i,
                        available: constants.len(),
                    })?;
                    stack.push(v.to_string());
                }
                Token::Unary(UnaryOp::Neg) => {
                    let a = stack.pop().ok_or(ExprError::InvalidPostfix)?;
                    stack.push(format!("(-{a})"));
                }
                Token::Unary(op) => {
                    let a = stack.pop().ok_or(ExprError::InvalidPostfix)?;
                    stack.push(format!("{}({})", op.name(), strip_parens(&a)));
                }
                Token::Binary(op) => {
                    let b = stack.pop().ok_or(ExprError::InvalidPostfix)?;
                    let a = stack.pop().ok_or(ExprError::InvalidPostfix)?;
                    stack.push(format!("({a} {} {b})", op.symbol()));
                }
            }
        }
        stack.pop().ok_or(ExprError::InvalidPostfix)
    }

    pub fn to_json(&self, constants: &[f64]) -> ExprJson {
        ExprJson {
            postfix: self.tokens.iter().map(Token::to_string).collect(),
            constants: constants.to_vec(),
        }
    }
}

// `sech((x * x))` reads worse than `sech(x * x)`; only strip a single
// enclosing pair that spans the whole string.
fn strip_parens(s: &str) -> &str {
    if !(s.starts_with('(') && s.ends_with(')')) {
        return s;
    }
    let mut depth = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 && i != s.len() - 1 {
                    return s;
                }
            }
            _ => {}
        }
    }
    &s[1..s.len() - 1]
}

impl fmt::Display for PostfixExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Tree height of a postfix program, or `None` if it is not valid.
pub fn tree_depth(tokens: &[Token]) -> Option<usize> {
    let mut heights: Vec<usize> = Vec::with_capacity(tokens.len() / 2 + 1);
    for t in tokens {
        let h = match t.arity() {
            0 => 0,
            1 => heights.pop()? + 1,
            _ => {
                let b = heights.pop()?;
                let a = heights.pop()?;
                a.max(b) + 1
            }
        };
        heights.push(h);
    }
    (heights.len() == 1).then(|| heights[0])
}

/// Depth of an expression; leaves have depth 0.
pub fn depth_of(expr: &PostfixExpr) -> usize {
    expr.depth
}

/// For every token index `i`, the range of the subtree rooted at `i`.
pub fn subtree_ranges(tokens: &[Token]) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut starts: Vec<usize> = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let start = match t.arity() {
            0 => i,
            1 => starts.pop().unwrap_or(i),
            _ => {
                starts.pop();
                starts.pop().unwrap_or(i)
            }
        };
        starts.push(start);
        out.push(start..i + 1);
    }
    out
}

/// Serialized expression form: `{"postfix": [...], "constants": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprJson {
    pub postfix: Vec<String>,
    #[serde(default)]
    pub constants: Vec<f64>,
}

impl ExprJson {
    pub fn parse(&self) -> Result<(PostfixExpr, Vec<f64>), ExprError> {
        let tokens = self
            .postfix
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Token>, _>>()?;
        let expr = PostfixExpr::new(tokens)?;
        if expr.const_slots() > self.constants.len() {
            return Err(ExprError::MissingConstant {
                slot: expr.const_slots() - 1,
                available: self.constants.len(),
            });
        }
        Ok((expr, self.constants.clone()))
    }
}
