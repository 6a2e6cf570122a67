//! Scores the bundled reference soliton against the physics terms.

use pisr::cli::format_report;
use pisr::problem::evaluate;
use pisr::soliton::{golden_candidate, SolitonProblem};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let problem = SolitonProblem::benchmark();
    let gold = golden_candidate();
    println!("u(x) = {}", gold.functions[0].to_infix(&gold.constants)?);
    println!("n(x) = {}", gold.functions[1].to_infix(&gold.constants)?);
    println!("gamma0 = {}", gold.constants[0]);
    let report = evaluate(&problem, &gold);
    print!("{}", format_report(&report));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
