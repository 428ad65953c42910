mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use sketch_ipm::bench::{compare_partial, MetricsWriter, COMPARE_HEADER};
use sketch_ipm::io::{gen_synthetic, read_libsvm, read_lp, svm_to_lp, write_lp, write_lp_document, SyntheticSpec};
use sketch_ipm::ipm::{ipm_solve_with, Iterate, LpProblem, OuterRecord};
use sketch_ipm::solvers::InnerSolverKind;

use config::SolverArgs;

const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "sketch-ipm", version, about = "Interior point LP solver with sketched inner solves")]
struct Cli {
    /// Print progress to stdout and info logs to stderr
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random synthetic LP
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use nonnegative x̄ so that the instance is feasible and bounded
        #[arg(long)]
        feasible: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a libsvm dataset into the hard-margin ℓ1-SVM LP
    Svm2lp {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an LP file
    Solve {
        #[arg(long)]
        lp: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Per-iteration metrics CSV
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Final iterate as JSON
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Run several inner solvers over several seeds and summarize
    Compare {
        #[arg(long)]
        lp: PathBuf,
        /// Seeds 0..k per solver
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Comma-separated solver kinds; all of them by default
        #[arg(long, value_delimiter = ',')]
        solvers: Option<Vec<InnerSolverKind>>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen { m, n, density, seed, feasible, out } => {
            if m > n {
                bail!("--m {m} exceeds --n {n}; m <= n is required");
            }
            let mut spec = SyntheticSpec::new(m, n, density, seed);
            if feasible {
                spec = spec.feasible();
            }
            let prob = gen_synthetic(&spec)?;
            let meta = json!({ "generator": "synthetic", "m": m, "n": n, "density": density, "seed": seed, "feasible": feasible });
            write_lp_document(&out, &prob, Some(&meta)).with_context(|| format!("writing {}", out.display()))?;
            info!("wrote {m}x{n} LP with {} nonzeros to {}", prob.a().nnz(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Svm2lp { input, out } => {
            let data = read_libsvm(&input).with_context(|| format!("reading {}", input.display()))?;
            let prob = svm_to_lp(&data)?;
            write_lp(&out, &prob).with_context(|| format!("writing {}", out.display()))?;
            info!("{} samples, {} features -> {}x{} LP", data.len(), data.n_features, prob.m(), prob.n());
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { lp, solver, metrics, solution } => solve(&lp, &solver, metrics.as_deref(), solution.as_deref(), cli.verbose),
        Command::Compare { lp, seeds, solvers, solver, out } => {
            let prob = load(&lp)?;
            let cfg = solver.build()?;
            let kinds = solvers.unwrap_or_else(|| InnerSolverKind::ALL.to_vec());
            if kinds.is_empty() {
                bail!("--solvers is empty");
            }
            let (rows, failure) = compare_partial(&prob, &cfg, &kinds, seeds);
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            writeln!(w, "{COMPARE_HEADER}")?;
            for row in &rows {
                writeln!(w, "{}", row.to_csv())?;
                if cli.verbose {
                    println!("{}", row.to_csv());
                }
            }
            w.flush()?;
            if let Some(e) = failure {
                bail!("comparison stopped after {} of {} solver kinds: {e}", rows.len(), kinds.len());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(path: &Path) -> Result<LpProblem> {
    read_lp(path).with_context(|| format!("reading {}", path.display()))
}

fn solve(lp: &Path, args: &SolverArgs, metrics: Option<&Path>, solution: Option<&Path>, verbose: bool) -> Result<ExitCode> {
    let prob = load(lp)?;
    let cfg = args.build()?;
    let run_id = format!("{}-{}", cfg.solver, cfg.seed);

    let mut writer = match metrics {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            Some(MetricsWriter::new(BufWriter::new(file))?)
        }
        None => None,
    };
    let mut write_error = None;
    let mut observe = |rec: &OuterRecord| {
        if verbose {
            println!(
                "k={} mu={:e} eta={:e} inner={} alpha={} accepted={}",
                rec.k, rec.mu, rec.eta, rec.inner_iters, rec.alpha_bar, rec.accepted
            );
        }
        if let (Some(w), None) = (writer.as_mut(), &write_error) {
            if let Err(e) = w.write_record(&run_id, rec) {
                write_error = Some(e);
            }
        }
    };
    let result = ipm_solve_with(&prob, &cfg, &mut observe);
    if let Some(e) = write_error {
        return Err(e).context("writing metrics");
    }

    let (iterate, outer_iters, converged, code) = match result {
        Ok(sol) => (sol.iterate, sol.outer_iters, true, ExitCode::SUCCESS),
        Err(f) => {
            let code = if f.is_non_convergence() {
                warn!("did not converge: {}", f.error);
                ExitCode::from(EXIT_NOT_CONVERGED)
            } else {
                eprintln!("error: {}", f.error);
                ExitCode::FAILURE
            };
            let outer = f.trace.accepted().count();
            (f.iterate, outer, false, code)
        }
    };
    info!("objective {} at mu = {:e} after {outer_iters} outer iterations", prob.objective(&iterate.x), iterate.mu);
    if let Some(p) = solution {
        write_solution(p, &prob, &iterate, converged, outer_iters)?;
    }
    Ok(code)
}

fn write_solution(path: &Path, prob: &LpProblem, it: &Iterate, converged: bool, outer_iters: usize) -> Result<()> {
    let doc = json!({
        "objective": prob.objective(&it.x),
        "mu": it.mu,
        "x": it.x,
        "y": it.y,
        "s": it.s,
        "converged": converged,
        "outer_iters": outer_iters,
    });
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
