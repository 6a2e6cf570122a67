use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BinaryOp, ExprError, PostfixExpr, Token, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafKind {
    Variable,
    FitConst,
}

/// Relative weights of the operator productions when sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductionWeights {
    pub unary: f64,
    pub binary: f64,
}

impl Default for ProductionWeights {
    fn default() -> Self {
        Self {
            unary: 1.0,
            binary: 1.0,
        }
    }
}

/// Productions `leaf | (expr unary) | (expr expr binary)`, height-bounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub max_depth: usize,
    pub unary: Vec<UnaryOp>,
    pub binary: Vec<BinaryOp>,
    pub num_variables: usize,
    pub leaves: Vec<LeafKind>,
    #[serde(default)]
    pub weights: ProductionWeights,
    /// Enumerate only expressions whose height equals the requested depth.
    #[serde(default)]
    pub exact_depth: bool,
    /// Standard deviation of the log-normal constant jitter used by [`perturb`].
    #[serde(default = "default_jitter_sigma")]
    pub jitter_sigma: f64,
}

fn default_jitter_sigma() -> f64 {
    0.1
}

impl Grammar {
    pub fn new(
        max_depth: usize,
        unary: Vec<UnaryOp>,
        binary: Vec<BinaryOp>,
        leaves: Vec<LeafKind>,
    ) -> Result<Self, ExprError> {
        let g = Self {
            max_depth,
            unary,
            binary,
            num_variables: 1,
            leaves,
            weights: ProductionWeights::default(),
            exact_depth: false,
            jitter_sigma: default_jitter_sigma(),
        };
        g.validate()?;
        Ok(g)
    }

    /// The operator set used for the soliton search, with `x` and fitted
    /// constants as leaves.
    pub fn soliton_search(max_depth: usize) -> Self {
        Self::new(
            max_depth,
            UnaryOp::SEARCH.to_vec(),
            BinaryOp::ALL.to_vec(),
            vec![LeafKind::Variable, LeafKind::FitConst],
        )
        .expect("built-in grammar is valid")
    }

    pub fn validate(&self) -> Result<(), ExprError> {
        if self.max_depth < 1 {
            return Err(ExprError::InvalidGrammar("max_depth must be >= 1".into()));
        }
        if self.leaves.is_empty() {
            return Err(ExprError::InvalidGrammar("no leaf kinds".into()));
        }
        if self.leaves.contains(&LeafKind::Variable) && self.num_variables == 0 {
            return Err(ExprError::InvalidGrammar(
                "variable leaves need num_variables >= 1".into(),
            ));
        }
        if !(self.weights.unary >= 0.0 && self.weights.binary >= 0.0) {
            return Err(ExprError::InvalidGrammar("negative production weight".into()));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(ExprError::InvalidGrammar("jitter_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Leaf tokens in enumeration order. Fitted constants use slot 0 and are
    /// renumbered when combined.
    pub fn leaf_tokens(&self) -> Vec<Token> {
        let mut out = Vec::new();
        for kind in dedup(&self.leaves) {
            match kind {
                LeafKind::Variable => out.extend((0..self.num_variables).map(Token::Var)),
                LeafKind::FitConst => out.push(Token::Const(0)),
            }
        }
        out
    }

    fn unary_ops(&self) -> Vec<UnaryOp> {
        dedup(&self.unary)
    }

    fn binary_ops(&self) -> Vec<BinaryOp> {
        dedup(&self.binary)
    }

    /// Token capacity of a full binary tree of height `max_depth`.
    pub fn token_capacity(&self) -> usize {
        (1usize << (self.max_depth + 1)) - 1
    }
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for &i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Renumbers constant slots by first appearance. Returns the new tokens and,
/// for every new slot, the old slot it came from (`None` for fresh slots,
/// marked with `usize::MAX`).
fn normalize_slots(tokens: &mut [Token]) -> Vec<Option<usize>> {
    let mut sources: Vec<Option<usize>> = Vec::new();
    for t in tokens.iter_mut() {
        if let Token::Const(old) = *t {
            let src = (old != usize::MAX).then_some(old);
            let idx = match src.and_then(|s| sources.iter().position(|x| *x == Some(s))) {
                Some(i) => i,
                None => {
                    sources.push(src);
                    sources.len() - 1
                }
            };
            *t = Token::Const(idx);
        }
    }
    sources
}

fn concat(a: &PostfixExpr, b: &PostfixExpr, op: BinaryOp) -> PostfixExpr {
    let shift = a.const_slots();
    let b = if shift > 0 { b.shift_slots(shift) } else { b.clone() };
    a.binary(&b, op)
}

/// Lazy stream of every structurally distinct expression of height at most
/// `depth` (exactly `depth` when the grammar asks for exact depth).
///
/// Sub-expressions one level down are materialised once and shared, so the
/// enumeration is cheap to clone and restart.
#[derive(Debug, Clone)]
pub struct Enumeration {
    leaves: Arc<Vec<Token>>,
    unary: Arc<Vec<UnaryOp>>,
    binary: Arc<Vec<BinaryOp>>,
    lower: Arc<Vec<PostfixExpr>>,
    depth: usize,
    exact: bool,
    cursor: Cursor,
}

#[derive(Debug, Clone, Copy)]
enum Cursor {
    Leaf(usize),
    Unary { op: usize, i: usize },
    Binary { op: usize, i: usize, j: usize },
    Done,
}

pub fn enumerate_expressions(grammar: &Grammar, depth: usize) -> Enumeration {
    let leaves = Arc::new(grammar.leaf_tokens());
    let unary = Arc::new(grammar.unary_ops());
    let binary = Arc::new(grammar.binary_ops());
    let lower = if depth == 0 {
        Vec::new()
    } else {
        let mut bounded = grammar.clone();
        bounded.exact_depth = false;
        enumerate_expressions(&bounded, depth - 1).collect()
    };
    Enumeration {
        leaves,
        unary,
        binary,
        lower: Arc::new(lower),
        depth,
        exact: grammar.exact_depth,
        cursor: Cursor::Leaf(0),
    }
}

impl Enumeration {
    fn next_any(&mut self) -> Option<PostfixExpr> {
        loop {
            match self.cursor {
                Cursor::Leaf(k) => {
                    if k < self.leaves.len() {
                        self.cursor = Cursor::Leaf(k + 1);
                        return Some(PostfixExpr::leaf(self.leaves[k]));
                    }
                    self.cursor = if self.depth == 0 {
                        Cursor::Done
                    } else {
                        Cursor::Unary { op: 0, i: 0 }
                    };
                }
                Cursor::Unary { op, i } => {
                    if op >= self.unary.len() || self.lower.is_empty() {
                        self.cursor = Cursor::Binary { op: 0, i: 0, j: 0 };
                        continue;
                    }
                    self.cursor = if i + 1 < self.lower.len() {
                        Cursor::Unary { op, i: i + 1 }
                    } else {
                        Cursor::Unary { op: op + 1, i: 0 }
                    };
                    return Some(self.lower[i].unary(self.unary[op]));
                }
                Cursor::Binary { op, i, j } => {
                    if op >= self.binary.len() || self.lower.is_empty() {
                        self.cursor = Cursor::Done;
                        continue;
                    }
                    let n = self.lower.len();
                    self.cursor = if j + 1 < n {
                        Cursor::Binary { op, i, j: j + 1 }
                    } else if i + 1 < n {
                        Cursor::Binary { op, i: i + 1, j: 0 }
                    } else {
                        Cursor::Binary { op: op + 1, i: 0, j: 0 }
                    };
                    return Some(concat(&self.lower[i], &self.lower[j], self.binary[op]));
                }
                Cursor::Done => return None,
            }
        }
    }

    /// Number of expressions this enumeration yields in total (from the start).
    pub fn total_count(&self) -> u128 {
        let l = self.leaves.len() as u128;
        if self.depth == 0 {
            return l;
        }
        let lower = self.lower.len() as u128;
        let all = l + self.unary.len() as u128 * lower + self.binary.len() as u128 * lower * lower;
        if !self.exact {
            return all;
        }
        let below = self.lower.iter().filter(|e| e.depth() + 1 < self.depth).count() as u128;
        let shorter = l
            + self.unary.len() as u128 * below
            + self.binary.len() as u128 * below * below;
        all - shorter
    }
}

impl Iterator for Enumeration {
    type Item = PostfixExpr;

    fn next(&mut self) -> Option<PostfixExpr> {
        loop {
            let e = self.next_any()?;
            if !self.exact || e.depth() == self.depth {
                return Some(e);
            }
        }
    }
}

/// Samples an expression whose height is exactly `depth`.
///
/// At every operator node one child is forced to the maximal remaining
/// height; the sibling of a binary node gets a uniformly drawn height.
/// If the grammar has no operators the result is a single leaf.
pub fn sample_expression<R: Rng + ?Sized>(grammar: &Grammar, rng: &mut R, depth: usize) -> PostfixExpr {
    let leaves = grammar.leaf_tokens();
    let unary = grammar.unary_ops();
    let binary = grammar.binary_ops();
    let mut tokens = Vec::with_capacity((1usize << (depth.min(20) + 1)) - 1);
    sample_into(&mut tokens, &leaves, &unary, &binary, &grammar.weights, rng, depth);
    normalize_slots(&mut tokens);
    PostfixExpr::new_unchecked(tokens)
}

fn sample_into<R: Rng + ?Sized>(
    out: &mut Vec<Token>,
    leaves: &[Token],
    unary: &[UnaryOp],
    binary: &[BinaryOp],
    weights: &ProductionWeights,
    rng: &mut R,
    depth: usize,
) {
    let wu = if unary.is_empty() { 0.0 } else { weights.unary };
    let wb = if binary.is_empty() { 0.0 } else { weights.binary };
    if depth == 0 || wu + wb <= 0.0 {
        out.push(leaves[rng.random_range(0..leaves.len())]);
        return;
    }
    if rng.random::<f64>() * (wu + wb) < wu {
        sample_into(out, leaves, unary, binary, weights, rng, depth - 1);
        out.push(Token::Unary(unary[rng.random_range(0..unary.len())]));
    } else {
        let other = rng.random_range(0..depth);
        let (left, right) = if rng.random::<bool>() {
            (depth - 1, other)
        } else {
            (other, depth - 1)
        };
        sample_into(out, leaves, unary, binary, weights, rng, left);
        sample_into(out, leaves, unary, binary, weights, rng, right);
        out.push(Token::Binary(binary[rng.random_range(0..binary.len())]));
    }
}

/// Result of one depth-preserving move.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub expr: PostfixExpr,
    /// For every constant slot of `expr`, the slot of the original expression
    /// it inherits its value from; `None` marks a freshly introduced slot.
    pub slot_sources: Vec<Option<usize>>,
    /// Multiplicative jitter applied to one slot of `expr`.
    pub jitter: Option<(usize, f64)>,
}

impl Perturbed {
    pub const FRESH_CONSTANT: f64 = 1.0;

    /// Constant vector for the new expression given the old one.
    pub fn constants(&self, old: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .slot_sources
            .iter()
            .map(|s| s.and_then(|i| old.get(i).copied()).unwrap_or(Self::FRESH_CONSTANT))
            .collect();
        if let Some((slot, factor)) = self.jitter {
            if let Some(v) = out.get_mut(slot) {
                *v *= factor;
            }
        }
        out
    }
}

const SWAP_PROBABILITY: f64 = 0.8;

/// Replaces one token by a same-arity alternative (80%) or jitters one
/// constant or literal (20%). Token count and depth are preserved.
pub fn perturb<R: Rng + ?Sized>(expr: &PostfixExpr, grammar: &Grammar, rng: &mut R) -> Perturbed {
    let unary = grammar.unary_ops();
    let binary = grammar.binary_ops();
    let leaves = grammar.leaf_tokens();
    let tokens = expr.tokens();

    let alternatives = |t: &Token| -> Vec<Token> {
        match t {
            Token::Unary(op) => unary.iter().filter(|o| *o != op).map(|o| Token::Unary(*o)).collect(),
            Token::Binary(op) => binary.iter().filter(|o| *o != op).map(|o| Token::Binary(*o)).collect(),
            Token::Var(_) | Token::Const(_) => leaves
                .iter()
                .filter(|l| *l != t)
                .filter(|l| !(matches!(t, Token::Const(_)) && matches!(l, Token::Const(_))))
                .copied()
                .collect(),
            Token::Lit(_) => Vec::new(),
        }
    };

    let swappable: Vec<usize> = (0..tokens.len())
        .filter(|&i| !alternatives(&tokens[i]).is_empty())
        .collect();
    let jitterable: Vec<usize> = (0..tokens.len())
        .filter(|&i| matches!(tokens[i], Token::Const(_) | Token::Lit(_)))
        .collect();

    let want_swap = rng.random::<f64>() < SWAP_PROBABILITY;
    let do_swap = if swappable.is_empty() {
        false
    } else {
        want_swap || jitterable.is_empty()
    };

    let mut new_tokens = tokens.to_vec();
    let mut jitter = None;
    if do_swap {
        let pos = swappable[rng.random_range(0..swappable.len())];
        let alts = alternatives(&tokens[pos]);
        let mut replacement = alts[rng.random_range(0..alts.len())];
        if let Token::Const(_) = replacement {
            replacement = Token::Const(usize::MAX);
        }
        new_tokens[pos] = replacement;
    } else if !jitterable.is_empty() {
        let pos = jitterable[rng.random_range(0..jitterable.len())];
        let z: f64 = StandardNormal.sample(rng);
        let factor = (grammar.jitter_sigma * z).exp();
        match tokens[pos] {
            Token::Lit(v) => new_tokens[pos] = Token::Lit(v * factor),
            Token::Const(_) => {
                // Slot index is resolved after normalisation below.
                jitter = Some((pos, factor));
            }
            _ => unreachable!(),
        }
    }

    let slot_sources = normalize_slots(&mut new_tokens);
    let jitter = jitter.map(|(pos, factor)| match new_tokens[pos] {
        Token::Const(slot) => (slot, factor),
        _ => unreachable!(),
    });
    let out = PostfixExpr::new_unchecked(new_tokens);
    debug_assert_eq!(out.len(), expr.len());
    debug_assert_eq!(out.depth(), expr.depth());
    Perturbed {
        expr: out,
        slot_sources,
        jitter,
    }
}
