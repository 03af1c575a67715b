//! `soliton`: solve, check and export translators of the Gauss curvature flow.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 the solver did not
//! converge, 3 bad input or an output that cannot be written.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use soliton_core::barriers::band_check;
use soliton_core::geometry::{horizontal_graph, polylines_to_csv};
use soliton_core::verify::{full_report, validate_experiments, Report};
use soliton_core::{solve_translator, Error, Grid, SolverResult};

use config::RunConfig;

const EXIT_CHECK: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "soliton", version, about = "Translating solitons of the Gauss curvature flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and write u.csv, h.csv and solver.json.
    Solve(RunArgs),
    /// Solve, run the selected checks and write report.json.
    Verify(RunArgs),
    /// Like verify, and also export every data file.
    Report(RunArgs),
    /// Sample the barrier band and check the supersolution sign.
    BarrierCheck(BarrierArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// disk:R, square:a, family:delta, superellipse:p,blend,level, polygon:FILE
    #[arg(long)]
    domain: Option<String>,
    /// Nodes per axis (at least 33).
    #[arg(long)]
    grid: Option<String>,
    /// Largest cap of the doubling sequence, or a comma list of caps.
    #[arg(long)]
    caps: Option<String>,
    /// newton or parabolic_relaxation.
    #[arg(long)]
    scheme: Option<String>,
    /// Comma list of experiments.
    #[arg(long)]
    run: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct BarrierArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for band.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Input(Error),
    Code(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

fn load(args: &RunArgs) -> Result<RunConfig, Error> {
    let (file, base) = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (config::parse_pairs(&text)?, base)
        }
        None => (Default::default(), PathBuf::from(".")),
    };
    let flags = [
        ("domain", args.domain.clone()),
        ("grid", args.grid.clone()),
        ("caps", args.caps.clone()),
        ("scheme", args.scheme.clone()),
        ("run", args.run.clone()),
        ("out", args.out.clone()),
        ("seed", args.seed.clone()),
        ("verbose", args.verbose.then(|| "true".to_string())),
    ];
    let (pairs, warnings) = config::merge(file, &flags);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    config::build(&pairs, &base)
}

fn out_dir(cfg: &RunConfig) -> Result<Option<PathBuf>, Failure> {
    let Some(dir) = &cfg.out else { return Ok(None) };
    std::fs::create_dir_all(dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", dir.display());
        Failure::Code(EXIT_INPUT)
    })?;
    Ok(Some(dir.clone()))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        Failure::Code(EXIT_INPUT)
    })
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

fn export_fields(dir: &Path, cfg: &RunConfig, result: &SolverResult) -> Result<(), Failure> {
    write(dir, "u.csv", &result.u.to_csv(&[]))?;
    if cfg.domain.is_axially_symmetric() {
        let hg = horizontal_graph(&result.u, &cfg.domain)?;
        write(dir, "h.csv", &hg.to_csv())?;
    }
    Ok(())
}

fn solve(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let dir = out_dir(&cfg)?;
    let grid = Arc::new(Grid::for_domain(&cfg.domain, cfg.grid)?);
    let result = solve_translator(&cfg.domain, grid, &cfg.solver)?;
    let summary = result.summary(cfg.solver.scheme);
    println!(
        "converged={} final_residual={:e} caps_used={}",
        summary.converged,
        summary.final_residual,
        summary.caps_used.len()
    );
    if let Some(dir) = dir {
        export_fields(&dir, &cfg, &result)?;
        write(&dir, "solver.json", &json(&summary)?)?;
    }
    if !result.converged {
        return Err(Failure::Code(EXIT_SOLVER));
    }
    Ok(())
}

fn print_report(report: &Report) {
    for c in &report.checks {
        println!(
            "{:<32} lhs={:<24e} rhs={:<24e} slack={:<24e} {}",
            c.name,
            c.lhs,
            c.rhs,
            c.slack,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(f) = &report.flat_side {
        println!("flat_area={:e} flat_tol={:e}", f.flat_area, f.flat_tol);
        if let Some(w) = &f.warning {
            eprintln!("warning: {w}");
        }
    }
}

fn verify(args: &RunArgs, export: bool) -> Result<(), Failure> {
    let cfg = load(args)?;
    validate_experiments(&cfg.domain, &cfg.params.experiments)?;
    let dir = out_dir(&cfg)?;
    let (report, result) = full_report(&cfg.domain, cfg.grid, &cfg.solver, &cfg.params)?;
    print_report(&report);
    if let Some(dir) = &dir {
        write(dir, "report.json", &report.to_json()?)?;
        if export {
            export_fields(dir, &cfg, &result)?;
            if let Some(f) = report.flat_side.as_ref().filter(|f| !f.free_boundary.is_empty()) {
                write(dir, "gamma.csv", &polylines_to_csv(&f.free_boundary))?;
            }
            if report.checks.iter().any(|c| c.name == "barrier_residual") {
                let mut csv = String::new();
                for (n, &a) in cfg.params.alphas.iter().enumerate() {
                    let s = band_check(a, cfg.params.band_samples, cfg.params.seed, 1e-6, 1.0 - 1e-6)?.to_csv();
                    let body = if n == 0 { &s[..] } else { s.split_once('\n').map_or("", |x| x.1) };
                    csv.push_str(body);
                }
                write(dir, "band.csv", &csv)?;
            }
        }
    }
    match status(result.converged, &report) {
        0 => Ok(()),
        c => Err(Failure::Code(c)),
    }
}

/// Non-convergence outranks a failed check.
fn status(converged: bool, report: &Report) -> u8 {
    if !converged {
        EXIT_SOLVER
    } else if !report.all_pass() {
        EXIT_CHECK
    } else {
        0
    }
}

fn barrier(args: &BarrierArgs) -> Result<(), Failure> {
    let summary = band_check(args.alpha, args.samples, args.seed, 1e-6, 1.0 - 1e-6)?;
    println!("max_residual={:e} pass={}", summary.max_residual, summary.pass());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| {
            eprintln!("error: cannot create {}: {e}", dir.display());
            Failure::Code(EXIT_INPUT)
        })?;
        write(dir, "band.csv", &summary.to_csv())?;
    }
    if !summary.pass() {
        return Err(Failure::Code(EXIT_CHECK));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a, false),
        Command::Report(a) => verify(a, true),
        Command::BarrierCheck(a) => barrier(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Code(c)) => ExitCode::from(c),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use soliton_core::verify::{BoundCheck, Fields};
    use soliton_core::{ConvexDomain, GridInfo, Point, Scheme, SolverResult};

    fn report(checks: Vec<BoundCheck>) -> Report {
        let d = ConvexDomain::disk(1.0).unwrap();
        let g = Grid::for_domain(&d, 33).unwrap();
        let u = soliton_core::ScalarField::from_fn(Arc::new(g.clone()), |p: Point| p.x);
        let r = SolverResult {
            u,
            converged: true,
            final_residual: 0.0,
            caps_used: vec![],
            iterations_per_cap: vec![],
            interior_delta_history: vec![],
            cap_solutions: vec![],
            convexity_clamped: false,
            fallback_used: false,
            monotone_only: false,
            diagnostics: vec![],
        };
        let info: GridInfo = g.info();
        Report {
            domain: d,
            grid: info,
            solver: r.summary(Scheme::Newton),
            checks,
            flat_side: None,
        }
    }

    fn check(lhs: f64, rhs: f64) -> BoundCheck {
        BoundCheck::new("fabricated", lhs, rhs, 1e-6, Fields::new(), Fields::new())
    }

    #[test]
    fn exit_codes() {
        assert_eq!(status(true, &report(vec![check(1.0, 2.0)])), 0);
        assert_eq!(status(true, &report(vec![check(1.0, 2.0), check(3.0, 2.0)])), EXIT_CHECK);
        assert_eq!(status(false, &report(vec![check(3.0, 2.0)])), EXIT_SOLVER);
        assert_eq!(status(false, &report(vec![])), EXIT_SOLVER);
    }
}
