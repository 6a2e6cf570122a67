//! Samples the reference soliton into a dataset, writes it as CSV and
//! scores the same candidate with the data terms switched on.

use pisr::cli::format_report;
use pisr::eval::Grid;
use pisr::problem::evaluate;
use pisr::soliton::{golden_candidate, Dataset, PlasmaParams, SolitonProblem};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let gold = golden_candidate();
    let data = SolitonProblem::benchmark().generate_dataset(&gold, &Grid::benchmark())?;
    let path = std::env::temp_dir().join(format!("pisr-data-{}.csv", std::process::id()));
    data.save(&path)?;
    let data = Dataset::load(&path)?;
    std::fs::remove_file(&path)?;
    println!("{} rows, deepest density dip {:.4}", data.count(), data.density.iter().cloned().fold(f64::MAX, f64::min));

    let problem = SolitonProblem::new(PlasmaParams::default(), Grid::benchmark(), Some(data))?;
    print!("{}", format_report(&evaluate(&problem, &gold)));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
