//! Symbolic differentiation directly on postfix token arrays.
//!
//! No expression tree is built. A single left-to-right scan keeps, for every
//! pending operand, the slice of the input holding its value and the slice of
//! a scratch buffer holding its derivative; each operator splices a rule
//! template out of those slices.

mod simplify;

pub use simplify::simplify;

use std::ops::Range;

use crate::expr::{subtree_ranges, BinaryOp, PostfixExpr, Token, UnaryOp};

/// When simplification runs during differentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimplifyOrder {
    /// Simplify the finished derivative once.
    #[default]
    PostPass,
    /// Also simplify every intermediate derivative slice as it is spliced.
    DuringSplice,
    /// Return the rule output untouched.
    Never,
}

/// Derivative of `expr` with respect to variable `var`, simplified.
pub fn differentiate(expr: &PostfixExpr, var: usize) -> PostfixExpr {
    differentiate_with(expr, var, SimplifyOrder::default())
}

pub fn differentiate_with(expr: &PostfixExpr, var: usize, order: SimplifyOrder) -> PostfixExpr {
    let input = expr.tokens();
    let values = subtree_ranges(input);
    let mut w = Splicer {
        input,
        scratch: Vec::with_capacity(4 * input.len()),
    };
    let mut pending: Vec<(Range<usize>, Range<usize>)> = Vec::with_capacity(input.len() / 2 + 1);

    for (i, t) in input.iter().enumerate() {
        let start = w.scratch.len();
        match *t {
            Token::Var(v) if v == var => w.lit(1.0),
            Token::Var(_) | Token::Lit(_) | Token::Const(_) => w.lit(0.0),
            Token::Unary(op) => {
                let (u, du) = pending.pop().expect("valid postfix");
                w.unary_rule(op, u, du);
            }
            Token::Binary(op) => {
                let (v, dv) = pending.pop().expect("valid postfix");
                let (u, du) = pending.pop().expect("valid postfix");
                w.binary_rule(op, u, du, v, dv);
            }
        }
        if order == SimplifyOrder::DuringSplice && !t.is_leaf() {
            let raw: Vec<Token> = w.scratch.drain(start..).collect();
            simplify::simplify_into(&raw, &mut w.scratch);
        }
        pending.push((values[i].clone(), start..w.scratch.len()));
    }

    let (_, root) = pending.pop().expect("valid postfix");
    let mut out = Vec::with_capacity(root.len());
    if order == SimplifyOrder::Never {
        out.extend_from_slice(&w.scratch[root]);
    } else {
        simplify::simplify_into(&w.scratch[root], &mut out);
    }
    PostfixExpr::new_unchecked(out)
}

/// Second derivative, simplified between the two passes.
pub fn second_derivative(expr: &PostfixExpr, var: usize) -> PostfixExpr {
    differentiate(&differentiate(expr, var), var)
}

struct Splicer<'a> {
    input: &'a [Token],
    scratch: Vec<Token>,
}

impl Splicer<'_> {
    fn lit(&mut self, v: f64) {
        self.scratch.push(Token::Lit(v));
    }

    fn un(&mut self, op: UnaryOp) {
        self.scratch.push(Token::Unary(op));
    }

    fn bin(&mut self, op: BinaryOp) {
        self.scratch.push(Token::Binary(op));
    }

    /// Copies an operand's value tokens from the input.
    fn val(&mut self, r: &Range<usize>) {
        self.scratch.extend_from_slice(&self.input[r.clone()]);
    }

    /// Copies an operand's derivative tokens from earlier in the scratch buffer.
    fn der(&mut self, r: &Range<usize>) {
        self.scratch.extend_from_within(r.clone());
    }

    fn unary_rule(&mut self, op: UnaryOp, u: Range<usize>, du: Range<usize>) {
        use BinaryOp::*;
        use UnaryOp::*;
        match op {
            // -u'
            Neg => {
                self.der(&du);
                self.un(Neg);
            }
            // cos(u)·u'
            Sin => {
                self.val(&u);
                self.un(Cos);
                self.der(&du);
                self.bin(Mul);
            }
            // −sin(u)·u'
            Cos => {
                self.val(&u);
                self.un(Sin);
                self.un(Neg);
                self.der(&du);
                self.bin(Mul);
            }
            // sech²(u)·u'
            Tanh => {
                self.val(&u);
                self.un(Sech);
                self.val(&u);
                self.un(Sech);
                self.bin(Mul);
                self.der(&du);
                self.bin(Mul);
            }
            // −sech(u)·tanh(u)·u'
            Sech => {
                self.val(&u);
                self.un(Sech);
                self.val(&u);
                self.un(Tanh);
                self.bin(Mul);
                self.un(Neg);
                self.der(&du);
                self.bin(Mul);
            }
            Sinh => {
                self.val(&u);
                self.un(Cosh);
                self.der(&du);
                self.bin(Mul);
            }
            Cosh => {
                self.val(&u);
                self.un(Sinh);
                self.der(&du);
                self.bin(Mul);
            }
            // u'/u
            Log => {
                self.der(&du);
                self.val(&u);
                self.bin(Div);
            }
            Exp => {
                self.val(&u);
                self.un(Exp);
                self.der(&du);
                self.bin(Mul);
            }
            // u'/(2·sqrt(u))
            Sqrt => {
                self.der(&du);
                self.lit(2.0);
                self.val(&u);
                self.un(Sqrt);
                self.bin(Mul);
                self.bin(Div);
            }
            // ±u'/sqrt(1 − u²)
            Asin | Acos => {
                self.der(&du);
                self.lit(1.0);
                self.val(&u);
                self.val(&u);
                self.bin(Mul);
                self.bin(Sub);
                self.un(Sqrt);
                self.bin(Div);
                if op == Acos {
                    self.un(Neg);
                }
            }
        }
    }

    fn binary_rule(
        &mut self,
        op: BinaryOp,
        u: Range<usize>,
        du: Range<usize>,
        v: Range<usize>,
        dv: Range<usize>,
    ) {
        use BinaryOp::*;
        use UnaryOp::*;
        match op {
            Add | Sub => {
                self.der(&du);
                self.der(&dv);
                self.bin(op);
            }
            // u'v + uv'
            Mul => {
                self.der(&du);
                self.val(&v);
                self.bin(Mul);
                self.val(&u);
                self.der(&dv);
                self.bin(Mul);
                self.bin(Add);
            }
            // (u'v − uv') / (v·v)
            Div => {
                self.der(&du);
                self.val(&v);
                self.bin(Mul);
                self.val(&u);
                self.der(&dv);
                self.bin(Mul);
                self.bin(Sub);
                self.val(&v);
                self.val(&v);
                self.bin(Mul);
                self.bin(Div);
            }
            // u^v · (v'·log u + v·u'/u)
            Pow => {
                self.val(&u);
                self.val(&v);
                self.bin(Pow);
                self.der(&dv);
                self.val(&u);
                self.un(Log);
                self.bin(Mul);
                self.val(&v);
                self.der(&du);
                self.bin(Mul);
                self.val(&u);
                self.bin(Div);
                self.bin(Add);
                self.bin(Mul);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::eval_scalar;
    use crate::expr::validate_postfix;

    fn e(s: &str) -> PostfixExpr {
        PostfixExpr::parse(s).unwrap()
    }

    fn central(expr: &PostfixExpr, x: f64) -> f64 {
        let h = 1e-5;
        (eval_scalar(expr, x + h, &[]) - eval_scalar(expr, x - h, &[])) / (2.0 * h)
    }

    #[test]
    fn leaf_derivatives() {
        assert_eq!(differentiate(&e("x"), 0).to_string(), "1");
        assert_eq!(differentiate(&e("c0"), 0).to_string(), "0");
        assert_eq!(differentiate(&e("3.5"), 0).to_string(), "0");
        assert_eq!(second_derivative(&e("x"), 0).to_string(), "0");
    }

    #[test]
    fn tanh_matches_finite_difference() {
        let d = differentiate(&e("x tanh"), 0);
        let v = eval_scalar(&d, 0.5, &[]);
        // frozen from the central-difference oracle
        assert!((v - 0.7864477).abs() < 1e-6, "{v}");
        assert!((v - central(&e("x tanh"), 0.5)).abs() < 1e-9);
    }

    #[test]
    fn product_rule_on_square() {
        let d = differentiate(&e("x x mul"), 0);
        assert_eq!(d.to_string(), "x x add");
        assert_eq!(eval_scalar(&d, 3.0, &[]), 6.0);
    }

    #[test]
    fn second_derivative_examples() {
        let d2 = second_derivative(&e("x sin"), 0);
        assert!((eval_scalar(&d2, 1.0, &[]) + 0.841471).abs() < 1e-6);
        let d2 = second_derivative(&e("x sech"), 0);
        assert!((eval_scalar(&d2, 0.0, &[]) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn every_operator_agrees_with_finite_difference() {
        let cases = [
            "x neg", "x log", "x exp", "x cos", "x sin", "x sqrt", "x asin", "x acos", "x tanh",
            "x sech", "x sinh", "x cosh", "x x sin add", "x x sin sub", "x x cos mul",
            "x sin x exp div", "x x pow", "x sech 0.96 pow", "2 x pow",
        ];
        for src in cases {
            let f = e(src);
            let d = differentiate(&f, 0);
            assert!(validate_postfix(d.tokens()));
            let x = 0.37;
            let sym = eval_scalar(&d, x, &[]);
            let fd = central(&f, x);
            assert!((sym - fd).abs() <= 1e-6 * (1.0 + sym.abs()), "{src}: {sym} vs {fd}");
        }
    }

    #[test]
    fn both_simplification_orders_agree() {
        for src in ["x sech x tanh mul x sin pow", "c0 x mul sech c1 add x cos div"] {
            let f = e(src);
            let a = differentiate_with(&f, 0, SimplifyOrder::PostPass);
            let b = differentiate_with(&f, 0, SimplifyOrder::DuringSplice);
            let raw = differentiate_with(&f, 0, SimplifyOrder::Never);
            assert!(a.len() <= raw.len());
            for x in [0.2, 0.9, 1.3] {
                let va = eval_scalar(&a, x, &[0.8, 1.7]);
                let vb = eval_scalar(&b, x, &[0.8, 1.7]);
                let vr = eval_scalar(&raw, x, &[0.8, 1.7]);
                assert!((va - vb).abs() <= 1e-12 * (1.0 + va.abs()));
                assert!((va - vr).abs() <= 1e-12 * (1.0 + va.abs()));
            }
        }
    }

    #[test]
    fn input_is_untouched() {
        let f = e("x x mul sin");
        let before = f.clone();
        let _ = differentiate(&f, 0);
        assert_eq!(f, before);
    }
}
