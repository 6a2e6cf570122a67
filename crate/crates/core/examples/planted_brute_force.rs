//! Exhaustive search recovers a planted target from a small grammar.

use pisr::eval::Grid;
use pisr::expr::{BinaryOp, Grammar, LeafKind, PostfixExpr, UnaryOp};
use pisr::problem::PlantedProblem;
use pisr::search::{brute_force, BruteForceConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let target = PostfixExpr::parse("x sech x tanh mul")?;
    let problem = PlantedProblem::new("f", target.clone(), Grid::benchmark());
    let grammar = Grammar::new(
        2,
        vec![UnaryOp::Sech, UnaryOp::Tanh, UnaryOp::Exp],
        vec![BinaryOp::Add, BinaryOp::Mul, BinaryOp::Sub],
        vec![LeafKind::Variable, LeafKind::FitConst],
    )?;
    let cfg = BruteForceConfig { workers: 4, ..BruteForceConfig::default() };
    let out = brute_force(&problem, &[grammar], &cfg)?;
    println!("target  {}", target);
    println!("space {} / visited {} / trivial {} / rejected {}", out.space, out.visited, out.trivial, out.rejected);
    let best = out.best.ok_or("nothing scored")?;
    println!("best    {}  loss {:e}", best.candidate.functions[0].to_infix(&best.candidate.constants)?, best.report.total);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
