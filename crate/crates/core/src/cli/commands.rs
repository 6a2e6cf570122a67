use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use super::config::{AnyProblem, Driver, ProblemKind, RunConfig};
use super::{CliError, Command, Common, BEST_CANDIDATE, EFFECTIVE_CONFIG, LOSS_REPORT, TRACE};
use crate::eval::{eval_batch, Grid};
use crate::problem::{evaluate, fit_and_score, CandidateFile, CandidateSolution, LossReport, Problem};
use crate::search::{brute_force, Annealer, Checkpoint, Scored, TraceRow};
use crate::soliton::{compose_a, Dataset, SolitonProblem};

/// The bundled reference candidate for the soliton benchmark.
pub const GOLDEN_JSON: &str = include_str!("../../fixtures/golden.json");

pub(super) fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Search {
            common,
            seed,
            workers,
            out,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.search.seed = s;
            }
            if let Some(w) = workers {
                cfg.search.workers = w;
            }
            if let Some(o) = out {
                cfg.paths.out_dir = o;
            }
            cfg.validate()?;
            search(&cfg)
        }
        Command::Eval {
            common,
            candidate,
            out,
            fit,
        } => eval(&load_config(&common)?, candidate.as_deref(), out.as_deref(), fit),
        Command::GenData { common, candidate, out } => gen_data(&load_config(&common)?, candidate.as_deref(), &out),
        Command::PlotData { common, candidate, out } => plot_data(&load_config(&common)?, candidate.as_deref(), &out),
        Command::Resume {
            checkpoint,
            out,
            max_evaluations,
        } => resume(checkpoint, out, max_evaluations),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(d) = &common.dataset {
        cfg.paths.dataset = Some(d.clone());
    }
    Ok(cfg)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn read_candidate(path: Option<&Path>, names: &[String]) -> Result<CandidateSolution, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| io_err(p, e))?,
        None => GOLDEN_JSON.to_string(),
    };
    let label = path.map_or("bundled candidate".to_string(), |p| p.display().to_string());
    let file: CandidateFile =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{label}: {e}")))?;
    CandidateSolution::from_file(&file, names).map_err(|e| CliError::Input(format!("{label}: {e}")))
}

/// Writes the candidate and verifies it reads back identically.
fn write_candidate(path: &Path, cand: &CandidateSolution, names: &[String]) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&cand.to_file(names)).expect("finite constants");
    write_file(path, &(text + "\n"))?;
    let back = read_candidate(Some(path), names)?;
    if back != *cand {
        return Err(CliError::Io(format!("{}: written candidate does not read back", path.display())));
    }
    Ok(())
}

fn write_report(path: &Path, report: &LossReport) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serialises");
    write_file(path, &(text + "\n"))?;
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| io_err(path, e))?;
    let back = LossReport::from_json(&value, &report.terms, report.count).map_err(|e| io_err(path, e))?;
    let same = back.rejected == report.rejected
        && back.sne.iter().zip(&report.sne).all(|(a, b)| a.to_bits() == b.to_bits() || report.rejected.is_some());
    if !same {
        return Err(CliError::Io(format!("{}: written report does not read back", path.display())));
    }
    Ok(())
}

fn write_trace(path: &Path, rows: &[TraceRow], append: bool) -> Result<(), CliError> {
    let exists = append && path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(exists)
        .truncate(!exists)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    drop(w);
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    if headers.iter().ne(["step", "temperature", "current_total", "best_total"]) {
        return Err(CliError::Io(format!("{}: unexpected trace header", path.display())));
    }
    for row in rdr.deserialize::<TraceRow>() {
        row.map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Per-term table with the mean squared error column.
pub fn format_report(report: &LossReport) -> String {
    let mut out = String::new();
    if let Some(r) = &report.rejected {
        out.push_str(&format!("rejected: {r}\n"));
        return out;
    }
    out.push_str(&format!("{:<10} {:>24} {:>24}\n", "term", "sne", "mse"));
    for ((t, s), m) in report.terms.iter().zip(&report.sne).zip(report.mse()) {
        out.push_str(&format!("{t:<10} {s:>24e} {m:>24e}\n"));
    }
    out.push_str(&format!(
        "{:<10} {:>24e} {:>24e}\n",
        "total",
        report.total,
        report.total / report.count as f64
    ));
    if report.no_data {
        out.push_str("no data: data terms are zero\n");
    }
    out
}

fn emit_result(cfg: &RunConfig, names: &[String], best: &Scored) -> Result<(), CliError> {
    let dir = &cfg.paths.out_dir;
    write_candidate(&dir.join(BEST_CANDIDATE), &best.candidate, names)?;
    write_report(&dir.join(LOSS_REPORT), &best.report)?;
    for (name, f) in names.iter().zip(&best.candidate.functions) {
        let infix = f.to_infix(&best.candidate.constants).unwrap_or_default();
        println!("{name}(x) = {infix}");
    }
    print!("{}", format_report(&best.report));
    if best.report.is_accepted() {
        Ok(())
    } else {
        Err(CliError::NoResult("best candidate is not acceptable".into()))
    }
}

fn split_budget(cfg: &RunConfig, workers: usize) -> crate::search::AnnealConfig {
    let mut a = cfg.anneal_config();
    a.workers = workers;
    if workers > 1 {
        a.budget.max_evaluations = a.budget.max_evaluations.map(|m| m.div_ceil(workers as u64));
    }
    a
}

fn best_chain<'a, 'b>(chains: &'b [Annealer<'a>]) -> &'b Annealer<'a> {
    let mut best = &chains[0];
    for c in &chains[1..] {
        if c.state.best_total < best.state.best_total {
            best = c;
        }
    }
    best
}

fn save_checkpoint(cfg: &RunConfig, names: &[String], chains: &[&Annealer]) -> Result<(), CliError> {
    let ck = Checkpoint {
        workers: chains.iter().map(|c| c.snapshot()).collect(),
        run_config: Some(cfg.to_toml()),
    };
    let path = cfg.checkpoint_path();
    ck.save(&path, names).map_err(|e| CliError::Io(e.to_string()))
}

fn run_chains(cfg: &RunConfig, names: &[String], mut chains: Vec<Annealer<'_>>) -> Result<(Scored, Vec<TraceRow>), CliError> {
    let every = cfg.search.checkpoint_every;
    if chains.len() == 1 {
        let chain = &mut chains[0];
        let mut levels = 0u64;
        let mut failure = None;
        chain
            .run_with(|a| {
                levels += 1;
                if every > 0 && levels.is_multiple_of(every) && failure.is_none() {
                    failure = save_checkpoint(cfg, names, &[a]).err();
                }
            })
            .map_err(|e| CliError::Search(e.to_string()))?;
        if let Some(e) = failure {
            return Err(e);
        }
    } else {
        chains = Annealer::continue_parallel(chains).map_err(|e| CliError::Search(e.to_string()))?;
    }
    save_checkpoint(cfg, names, &chains.iter().collect::<Vec<_>>())?;
    let best = best_chain(&chains);
    let outcome = best.outcome();
    Ok((outcome.best, outcome.trace))
}

fn search(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = cfg.load_dataset()?;
    let problem = cfg.build_problem(dataset)?;
    let p = problem.as_dyn();
    let names = p.function_names();
    let grammars = cfg.grammars(&names)?;
    create_dir(&cfg.paths.out_dir)?;
    write_file(&cfg.paths.out_dir.join(EFFECTIVE_CONFIG), &cfg.to_toml())?;

    match cfg.search.driver {
        Driver::Brute => {
            let out = brute_force(p, &grammars, &cfg.brute_config()).map_err(|e| CliError::Search(e.to_string()))?;
            eprintln!(
                "visited {} of {} ({} trivial, {} rejected){}",
                out.visited,
                out.space,
                out.trivial,
                out.rejected,
                if out.exhausted { ", stopped by budget" } else { "" }
            );
            match out.best {
                Some(best) => emit_result(cfg, &names, &best),
                None => Err(CliError::NoResult(out.diagnostic.unwrap_or_default())),
            }
        }
        Driver::Anneal => {
            let workers = cfg.search.workers;
            let acfg = split_budget(cfg, workers);
            let mut chains = Vec::with_capacity(workers);
            if workers == 1 {
                chains.push(Annealer::new(p, grammars, acfg, cfg.search.seed).map_err(|e| CliError::Search(e.to_string()))?);
            } else {
                chains = Annealer::run_parallel(p, grammars, acfg, cfg.search.seed)
                    .map_err(|e| CliError::Search(e.to_string()))?;
            }
            let (best, trace) = run_chains(cfg, &names, chains)?;
            write_trace(&cfg.paths.out_dir.join(TRACE), &trace, false)?;
            emit_result(cfg, &names, &best)
        }
    }
}

fn resume(checkpoint: Option<PathBuf>, out: Option<PathBuf>, max_evaluations: Option<u64>) -> Result<(), CliError> {
    let path = match (&checkpoint, &out) {
        (Some(p), _) => p.clone(),
        (None, Some(o)) => o.join("checkpoint.json"),
        (None, None) => RunConfig::default().checkpoint_path(),
    };
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: corrupt checkpoint: {e}", path.display())))?;
    let cfg_text = raw
        .get("run_config")
        .and_then(|v| v.as_str())
        .ok_or_else(|| CliError::Input(format!("{}: checkpoint has no run configuration", path.display())))?;
    let mut cfg = RunConfig::from_toml_with_env(cfg_text, std::env::vars())?;
    if let Some(o) = out {
        cfg.paths.out_dir = o;
    }
    cfg.paths.checkpoint = Some(path.clone());
    if max_evaluations.is_some() {
        cfg.search.max_evaluations = max_evaluations;
    }
    let names = cfg.function_names();
    let ck = Checkpoint::from_json(&text, &names).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;

    let dataset = cfg.load_dataset()?;
    let problem = cfg.build_problem(dataset)?;
    let p = problem.as_dyn();
    let grammars = cfg.grammars(&names)?;
    let acfg = split_budget(&cfg, ck.workers.len());
    let chains = ck
        .workers
        .into_iter()
        .map(|w| Annealer::resume(p, grammars.clone(), acfg.clone(), w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Search(e.to_string()))?;
    create_dir(&cfg.paths.out_dir)?;
    let (best, trace) = run_chains(&cfg, &names, chains)?;
    write_trace(&cfg.paths.out_dir.join(TRACE), &trace, true)?;
    emit_result(&cfg, &names, &best)
}

fn eval(cfg: &RunConfig, candidate: Option<&Path>, out: Option<&Path>, fit: bool) -> Result<(), CliError> {
    let dataset = cfg.load_dataset()?;
    let problem = cfg.build_problem(dataset)?;
    let p = problem.as_dyn();
    let names = p.function_names();
    let mut cand = read_candidate(candidate, &names)?;
    let report = if fit {
        let system = p.compile(&cand.functions);
        let (c, report, _) = fit_and_score(p, system.as_ref(), &cand.constants, &cfg.fit_config(), true);
        cand.constants = c;
        report
    } else {
        evaluate(p, &cand)
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        write_report(&dir.join(LOSS_REPORT), &report)?;
        if fit {
            write_candidate(&dir.join(BEST_CANDIDATE), &cand, &names)?;
        }
    }
    print!("{}", format_report(&report));
    match &report.rejected {
        None => Ok(()),
        Some(r) => Err(CliError::NoResult(format!("candidate rejected: {r}"))),
    }
}

fn soliton(problem: &AnyProblem) -> Result<&SolitonProblem, CliError> {
    match problem {
        AnyProblem::Soliton(s) => Ok(s),
        AnyProblem::Planted(_) => Err(CliError::Config("this command needs problem.kind = \"soliton\"".into())),
    }
}

fn gen_data(cfg: &RunConfig, candidate: Option<&Path>, out: &Path) -> Result<(), CliError> {
    if cfg.problem.kind != ProblemKind::Soliton {
        return Err(CliError::Config("gen-data needs problem.kind = \"soliton\"".into()));
    }
    let problem = cfg.build_problem(None)?;
    let sp = soliton(&problem)?;
    let names = sp.function_names();
    let cand = read_candidate(candidate, &names)?;
    let grid = cfg.build_grid()?;
    let c = &cand.constants;
    let n = eval_batch(&cand.functions[1], &grid, c);
    let a = eval_batch(&compose_a(&cand.functions[0], &sp.params), &grid, c);
    for (i, x) in grid.points().iter().enumerate() {
        if !(n[i].is_finite() && a[i].is_finite()) {
            return Err(CliError::Input(format!("candidate is not finite at x = {x}")));
        }
    }
    let data = sp
        .generate_dataset(&cand, &grid)
        .map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    data.save(out).map_err(|e| io_err(out, e))?;
    let back = Dataset::load(out).map_err(|e| io_err(out, e))?;
    if back != data {
        return Err(CliError::Io(format!("{}: written dataset does not read back", out.display())));
    }
    eprintln!("wrote {} rows to {}", data.count(), out.display());
    Ok(())
}

fn plot_data(cfg: &RunConfig, candidate: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let problem = cfg.build_problem(None)?;
    let sp = soliton(&problem)?;
    let names = sp.function_names();
    let cand = read_candidate(candidate, &names)?;
    let data = cfg
        .load_dataset()?
        .ok_or_else(|| CliError::Input("plot-data needs a dataset (--dataset or paths.dataset)".into()))?;
    let grid: Grid = cfg.build_grid()?;
    if data.count() != grid.len() {
        return Err(CliError::Input(format!(
            "dataset has {} rows but the grid has {} points",
            data.count(),
            grid.len()
        )));
    }
    let scale = grid.last() - grid.first();
    if let Some((x, d)) = grid
        .points()
        .iter()
        .zip(data.grid.points())
        .find(|(x, d)| (*x - *d).abs() > 1e-9 * scale)
    {
        return Err(CliError::Input(format!("dataset x = {d} does not match grid x = {x}")));
    }
    let c = &cand.constants;
    let u = eval_batch(&cand.functions[0], &grid, c);
    let n = eval_batch(&cand.functions[1], &grid, c);
    let a = eval_batch(&compose_a(&cand.functions[0], &sp.params), &grid, c);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(out).map_err(|e| io_err(out, e))?;
    w.write_record(["x", "u", "n", "a", "density_model", "density_data", "a_data"])
        .map_err(|e| io_err(out, e))?;
    for (i, x) in grid.points().iter().enumerate() {
        let density = n[i] / sp.params.n0 - 1.0;
        let row = [*x, u[i], n[i], a[i], density, data.density[i], data.a_profile[i]];
        w.serialize(row).map_err(|e| io_err(out, e))?;
    }
    w.flush().map_err(|e| io_err(out, e))?;
    drop(w);
    let mut rdr = csv::Reader::from_path(out).map_err(|e| io_err(out, e))?;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(out, e))?;
        if rec.len() != 7 {
            return Err(CliError::Io(format!("{}: row with {} columns", out.display(), rec.len())));
        }
        rows += 1;
    }
    if rows != grid.len() {
        return Err(CliError::Io(format!("{}: wrote {rows} rows, expected {}", out.display(), grid.len())));
    }
    eprintln!("wrote {rows} rows to {}", out.display());
    Ok(())
}
