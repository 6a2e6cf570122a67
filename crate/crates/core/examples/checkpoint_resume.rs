//! Stops a chain half way, round-trips it through a checkpoint file and
//! shows the resumed run matches an uninterrupted one.

use pisr::eval::Grid;
use pisr::expr::{Grammar, PostfixExpr};
use pisr::problem::PlantedProblem;
use pisr::search::{AnnealConfig, Annealer, Checkpoint, SearchBudget};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let problem = PlantedProblem::new("n", PostfixExpr::parse("x tanh x mul")?, Grid::benchmark());
    let grammars = vec![Grammar::soliton_search(2)];
    let names = vec!["n".to_string()];
    let config = |n| AnnealConfig {
        budget: SearchBudget::evaluations(n),
        ..AnnealConfig::default()
    };

    let mut first = Annealer::new(&problem, grammars.clone(), config(1500), 3)?;
    first.run()?;
    let dir = std::env::temp_dir().join(format!("pisr-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.json");
    Checkpoint { workers: vec![first.snapshot()], run_config: None }.save(&path, &names)?;

    let saved = Checkpoint::load(&path, &names)?;
    let mut resumed = Annealer::resume(&problem, grammars.clone(), config(3000), saved.workers[0].clone())?;
    resumed.run()?;

    let mut straight = Annealer::new(&problem, grammars, config(3000), 3)?;
    straight.run()?;

    let (a, b) = (resumed.snapshot(), straight.snapshot());
    println!("resumed:  {} evaluations, best {:e} {}", a.evaluations, a.best_total, a.best.functions[0]);
    println!("straight: {} evaluations, best {:e} {}", b.evaluations, b.best_total, b.best.functions[0]);
    println!("identical state: {}", a == b);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
