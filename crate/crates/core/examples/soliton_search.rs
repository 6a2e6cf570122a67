//! A short annealing run on the soliton problem with four chains.
//!
//! The default budget here is small; pass a number to raise it.
//!
//! ```text
//! cargo run --release --example soliton_search -- 20000
//! ```

use pisr::expr::Grammar;
use pisr::search::{AnnealConfig, Annealer, SearchBudget};
use pisr::soliton::SolitonProblem;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    search(800)
}

fn search(evaluations: u64) -> Result<(), Box<dyn std::error::Error>> {
    let problem = SolitonProblem::benchmark();
    let cfg = AnnealConfig {
        budget: SearchBudget::evaluations(evaluations),
        workers: 4,
        ..AnnealConfig::default()
    };
    let grammars = vec![Grammar::soliton_search(3), Grammar::soliton_search(3)];
    let chains = Annealer::run_parallel(&problem, grammars, cfg, 11)?;
    let best = chains
        .iter()
        .map(|c| c.outcome())
        .min_by(|a, b| a.best.report.total.total_cmp(&b.best.report.total))
        .ok_or("no chains")?;
    let c = &best.best.candidate;
    println!("u(x) = {}", c.functions[0].to_infix(&c.constants)?);
    println!("n(x) = {}", c.functions[1].to_infix(&c.constants)?);
    println!("gamma0 = {}  loss = {:e}", c.constants[0], best.best.report.total);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    match std::env::args().nth(1) {
        Some(n) => search(n.parse()?),
        None => run_example(),
    }
}
