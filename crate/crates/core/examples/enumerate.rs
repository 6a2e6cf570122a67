//! Counting and listing a fixed-depth expression grammar.

use pisr::expr::{enumerate_expressions, BinaryOp, Grammar, LeafKind, UnaryOp};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut g = Grammar::new(
        2,
        vec![UnaryOp::Sech, UnaryOp::Tanh],
        vec![BinaryOp::Add, BinaryOp::Mul],
        vec![LeafKind::Variable, LeafKind::FitConst],
    )?;
    for depth in 0..=3 {
        let all = enumerate_expressions(&g, depth).total_count();
        g.exact_depth = true;
        let exact = enumerate_expressions(&g, depth).total_count();
        g.exact_depth = false;
        println!("depth <= {depth}: {all:>8} expressions, {exact:>8} of exactly that depth");
    }
    println!("first ten at depth <= 1:");
    for e in enumerate_expressions(&g, 1).take(10) {
        println!("  {e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
