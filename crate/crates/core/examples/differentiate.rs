//! Symbolic derivative of a postfix expression, printed raw and simplified.
//!
//! ```text
//! cargo run --example differentiate -- "x sech c0 mul"
//! ```

use pisr::eval::eval_scalar;
use pisr::expr::PostfixExpr;
use pisr::symdiff::{differentiate, differentiate_with, second_derivative, SimplifyOrder};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    show("x sech c0 mul")
}

fn show(src: &str) -> Result<(), Box<dyn std::error::Error>> {
    let e = PostfixExpr::parse(src)?;
    let c = vec![1.5; e.const_slots()];

    let raw = differentiate_with(&e, 0, SimplifyOrder::Never);
    let d = differentiate(&e, 0);
    let dd = second_derivative(&e, 0);
    println!("f     = {}", e.to_infix(&c)?);
    println!("f'    = {}  ({} tokens, {} before simplification)", d.to_infix(&c)?, d.len(), raw.len());
    println!("f''   = {}", dd.to_infix(&c)?);
    for x in [-1.0, 0.0, 0.5, 2.0] {
        println!("x = {x:5}: f = {:+.6}  f' = {:+.6}  f'' = {:+.6}", eval_scalar(&e, x, &c), eval_scalar(&d, x, &c), eval_scalar(&dd, x, &c));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    match std::env::args().nth(1) {
        Some(src) => show(&src),
        None => run_example(),
    }
}
