//! Fits the two constants of c0·sech(c1·x) to noiseless samples of
//! 3·sech(0.5x) with both optimisers.

use pisr::constfit::{fit_constants, FitConfig, FitMethod};
use pisr::eval::{eval_batch, Grid};
use pisr::expr::PostfixExpr;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::benchmark();
    let model = PostfixExpr::parse("c0 c1 x mul sech mul")?;
    let target = eval_batch(&PostfixExpr::parse("3 0.5 x mul sech mul")?, &grid, &[]);
    let residuals = |c: &[f64]| -> Option<Vec<f64>> {
        Some(eval_batch(&model, &grid, c).iter().zip(&target).map(|(m, t)| m - t).collect())
    };
    for method in [FitMethod::LevenbergMarquardt, FitMethod::QuasiNewton] {
        let cfg = FitConfig { method, ..FitConfig::default() };
        let out = fit_constants(&[1.0, 1.0], residuals, &cfg)?;
        println!(
            "{method:?}: c = {:?}  sse {:.3e} -> {:.3e} in {} iterations{}",
            out.constants,
            out.initial_sse,
            out.sse,
            out.iterations,
            if out.converged { "" } else { " (not converged)" }
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
