use crate::expr::{BinaryOp, PostfixExpr, Token, UnaryOp};

/// Bottom-up, single-pass node-count reduction.
///
/// Operands are contiguous at the tail of the output buffer, so each rewrite
/// is a truncate or drain of that buffer. Rules: literal folding (when the
/// folded value is finite), additive/multiplicative identities, `u*0`,
/// `0/u`, `u^0`, `u^1`, `1^u`, `neg(neg u)`, and `u-u`, `u/u` for
/// token-identical operands. `0^0` folds to 1.
pub fn simplify(expr: &PostfixExpr) -> PostfixExpr {
    let mut out = Vec::with_capacity(expr.len());
    simplify_into(expr.tokens(), &mut out);
    PostfixExpr::new_unchecked(out)
}

/// Appends the simplified form of `tokens` to `out`.
pub(crate) fn simplify_into(tokens: &[Token], out: &mut Vec<Token>) {
    let base = out.len();
    let mut starts: Vec<usize> = Vec::with_capacity(tokens.len() / 2 + 1);
    for t in tokens {
        match *t {
            Token::Unary(op) => {
                let s = *starts.last().expect("valid postfix");
                push_unary(out, s, op);
            }
            Token::Binary(op) => {
                let sb = starts.pop().expect("valid postfix");
                let sa = *starts.last().expect("valid postfix");
                push_binary(out, sa, sb, op);
            }
            leaf => {
                starts.push(out.len());
                out.push(leaf);
            }
        }
    }
    debug_assert_eq!(starts, vec![base]);
}

fn single_literal(slice: &[Token]) -> Option<f64> {
    match slice {
        [Token::Lit(v)] => Some(*v),
        _ => None,
    }
}

fn is_value(slice: &[Token], target: f64) -> bool {
    single_literal(slice) == Some(target)
}

fn replace_with_literal(out: &mut Vec<Token>, start: usize, v: f64) {
    out.truncate(start);
    out.push(Token::Lit(v));
}

fn push_unary(out: &mut Vec<Token>, s: usize, op: UnaryOp) {
    if let Some(v) = single_literal(&out[s..]) {
        let r = op.apply(v);
        if r.is_finite() {
            replace_with_literal(out, s, r);
            return;
        }
    }
    if op == UnaryOp::Neg && out.len() - s > 1 && out.last() == Some(&Token::Unary(UnaryOp::Neg)) {
        out.pop();
        return;
    }
    out.push(Token::Unary(op));
}

fn push_binary(out: &mut Vec<Token>, sa: usize, sb: usize, op: BinaryOp) {
    let (a, b) = out[sa..].split_at(sb - sa);
    if let (Some(x), Some(y)) = (single_literal(a), single_literal(b)) {
        let r = op.apply(x, y);
        if r.is_finite() {
            replace_with_literal(out, sa, r);
            return;
        }
    }
    let identical = a == b;
    match op {
        BinaryOp::Add => {
            if is_value(b, 0.0) {
                return keep_left(out, sb);
            }
            if is_value(a, 0.0) {
                return keep_right(out, sa, sb);
            }
        }
        BinaryOp::Sub => {
            if is_value(b, 0.0) {
                return keep_left(out, sb);
            }
            if identical {
                return replace_with_literal(out, sa, 0.0);
            }
            if is_value(a, 0.0) {
                keep_right(out, sa, sb);
                return push_unary(out, sa, UnaryOp::Neg);
            }
        }
        BinaryOp::Mul => {
            if is_value(a, 0.0) || is_value(b, 0.0) {
                return replace_with_literal(out, sa, 0.0);
            }
            if is_value(a, 1.0) {
                return keep_right(out, sa, sb);
            }
            if is_value(b, 1.0) {
                return keep_left(out, sb);
            }
        }
        BinaryOp::Div => {
            if is_value(b, 1.0) {
                return keep_left(out, sb);
            }
            if is_value(a, 0.0) {
                return replace_with_literal(out, sa, 0.0);
            }
            if identical {
                return replace_with_literal(out, sa, 1.0);
            }
        }
        BinaryOp::Pow => {
            if is_value(b, 0.0) || is_value(a, 1.0) {
                return replace_with_literal(out, sa, 1.0);
            }
            if is_value(b, 1.0) {
                return keep_left(out, sb);
            }
        }
    }
    out.push(Token::Binary(op));
}

fn keep_left(out: &mut Vec<Token>, sb: usize) {
    out.truncate(sb);
}

fn keep_right(out: &mut Vec<Token>, sa: usize, sb: usize) {
    out.drain(sa..sb);
}
