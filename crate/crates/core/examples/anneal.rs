//! Simulated annealing on a planted target, printing the trace at every
//! temperature level that improved the best loss.

use pisr::eval::Grid;
use pisr::expr::{Grammar, PostfixExpr};
use pisr::problem::PlantedProblem;
use pisr::search::{AnnealConfig, Annealer, SearchBudget};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let target = PostfixExpr::parse("x sech 2 pow")?;
    let problem = PlantedProblem::new("n", target, Grid::benchmark());
    let cfg = AnnealConfig {
        budget: SearchBudget::evaluations(10_000),
        ..AnnealConfig::default()
    };
    let mut chain = Annealer::new(&problem, vec![Grammar::soliton_search(3)], cfg, 7)?;
    let mut last = f64::INFINITY;
    chain.run_with(|a| {
        let s = a.snapshot();
        if s.best_total < last * (1.0 - 1e-9) {
            last = s.best_total;
            println!("step {:>6}  T = {:.3e}  best {:.3e}  {}", s.step, a.temperature(), s.best_total, s.best.functions[0]);
        }
    })?;
    let out = chain.outcome();
    println!(
        "{} evaluations, {} restarts, best {} (loss {:e})",
        out.evaluations,
        out.restarts,
        out.best.candidate.functions[0].to_infix(&out.best.candidate.constants)?,
        out.best.report.total
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
