//! Algebraic simplification on a few hand-written expressions.

use pisr::eval::eval_scalar;
use pisr::expr::PostfixExpr;
use pisr::symdiff::simplify;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cases = [
        "x 0 add 1 mul",
        "x x sub sech",
        "2 3 mul x pow",
        "x neg neg exp log",
        "c0 x mul 0 mul x add",
    ];
    for src in cases {
        let e = PostfixExpr::parse(src)?;
        let s = simplify(&e);
        let c = vec![2.0; e.const_slots()];
        println!("{:<24} -> {:<16} {:>2} -> {:>2} tokens   f(0.7) = {} / {}", src, s.to_string(), e.len(), s.len(), eval_scalar(&e, 0.7, &c), eval_scalar(&s, 0.7, &c));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
