//! Per-iteration metrics output and multi-solver comparison runs.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ipm::{ipm_solve, IpmConfig, LpProblem, OuterRecord};
use crate::matrix::norm2;
use crate::solvers::InnerSolverKind;

pub const CSV_HEADER: &str =
    "run_id,outer_k,mu,eta,inner_iters,kappa_precond,kappa_unprecond,alpha_bar,v_norm,wall_ms";

pub const COMPARE_HEADER: &str = "solver,runs,converged,inner_iters_max,inner_iters_median,\
outer_iters_median,kappa_precond_median,kappa_unprecond_median,relative_error";

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Writes the metrics CSV one flushed row at a time, so a partial file
/// stays parseable if the run dies.
pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    pub fn write_record(&mut self, run_id: &str, rec: &OuterRecord) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            run_id,
            rec.k,
            format_float(rec.mu),
            format_float(rec.eta),
            rec.inner_iters,
            opt_float(rec.kappa_precond),
            opt_float(rec.kappa_unprecond),
            format_float(rec.alpha_bar),
            format_float(rec.v_norm),
            opt_float(rec.wall_ms),
        )?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Seed for the run of solver `kind` at base seed `seed`.
pub fn run_seed(seed: u64, kind: InnerSolverKind) -> u64 {
    let idx = InnerSolverKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64;
    seed.wrapping_add((idx + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Outcome of one solver run inside a comparison.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub kind: InnerSolverKind,
    pub seed: u64,
    pub converged: bool,
    pub outer_iters: usize,
    pub x: Vec<f64>,
    pub records: Vec<OuterRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub solver: InnerSolverKind,
    pub runs: usize,
    pub converged: usize,
    pub inner_iters_max: usize,
    pub inner_iters_median: f64,
    pub outer_iters_median: f64,
    pub kappa_precond_median: Option<f64>,
    pub kappa_unprecond_median: Option<f64>,
    /// Largest `‖x − x*‖/‖x*‖` over runs, against the direct solver on the same seed.
    pub relative_error: Option<f64>,
}

impl CompareRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.solver,
            self.runs,
            self.converged,
            self.inner_iters_max,
            format_float(self.inner_iters_median),
            format_float(self.outer_iters_median),
            opt_float(self.kappa_precond_median),
            opt_float(self.kappa_unprecond_median),
            opt_float(self.relative_error),
        )
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn relative_error(x: &[f64], reference: &[f64]) -> f64 {
    let diff: Vec<f64> = x.iter().zip(reference).map(|(a, b)| a - b).collect();
    let den = norm2(reference);
    if den == 0.0 {
        norm2(&diff)
    } else {
        norm2(&diff) / den
    }
}

/// One run; non-convergence is reported in the summary instead of failing.
pub fn run_once(prob: &LpProblem, base: &IpmConfig, kind: InnerSolverKind, seed: u64) -> Result<RunSummary> {
    let config = IpmConfig {
        solver: kind,
        seed: run_seed(seed, kind),
        ..base.clone()
    };
    match ipm_solve(prob, &config) {
        Ok(sol) => Ok(RunSummary {
            kind,
            seed,
            converged: true,
            outer_iters: sol.outer_iters,
            x: sol.iterate.x,
            records: sol.trace.records,
        }),
        Err(f) if f.is_non_convergence() => Ok(RunSummary {
            kind,
            seed,
            converged: false,
            outer_iters: f.trace.accepted().count(),
            x: f.iterate.x,
            records: f.trace.records,
        }),
        Err(f) => Err(f.error),
    }
}

/// Runs every kind in `kinds` on seeds `0..seeds`, one worker thread per
/// kind, and returns one row per kind in the order given.
pub fn compare(
    prob: &LpProblem,
    base: &IpmConfig,
    kinds: &[InnerSolverKind],
    seeds: u64,
) -> Result<Vec<CompareRow>> {
    match compare_partial(prob, base, kinds, seeds) {
        (rows, None) => Ok(rows),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`compare`], but keeps the rows of kinds that finished when another
/// kind fails. The first failure in kind order is returned alongside.
pub fn compare_partial(
    prob: &LpProblem,
    base: &IpmConfig,
    kinds: &[InnerSolverKind],
    seeds: u64,
) -> (Vec<CompareRow>, Option<Error>) {
    let mut all = kinds.to_vec();
    if !all.contains(&InnerSolverKind::Direct) {
        all.push(InnerSolverKind::Direct);
    }
    let results: Vec<Result<Vec<RunSummary>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = all
            .iter()
            .map(|&kind| {
                scope.spawn(move || {
                    (0..seeds)
                        .map(|seed| run_once(prob, base, kind, seed))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("comparison worker panicked"))
            .collect()
    });
    let mut first_error = None;
    let mut by_kind = Vec::with_capacity(all.len());
    for (kind, res) in all.iter().zip(results) {
        match res {
            Ok(runs) => by_kind.push((*kind, runs)),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let reference = by_kind
        .iter()
        .find(|(k, _)| *k == InnerSolverKind::Direct)
        .map(|(_, runs)| runs.clone())
        .unwrap_or_default();

    let rows = kinds
        .iter()
        .filter_map(|&kind| {
            let runs = &by_kind.iter().find(|(k, _)| *k == kind)?.1;
            Some(summarize(kind, runs, &reference))
        })
        .collect();
    (rows, first_error)
}

fn summarize(kind: InnerSolverKind, runs: &[RunSummary], reference: &[RunSummary]) -> CompareRow {
    let accepted = || runs.iter().flat_map(|r| r.records.iter().filter(|rec| rec.accepted));
    let mut inner: Vec<f64> = accepted().map(|r| r.inner_iters as f64).collect();
    let mut outer: Vec<f64> = runs.iter().map(|r| r.outer_iters as f64).collect();
    let mut kp: Vec<f64> = accepted().filter_map(|r| r.kappa_precond).collect();
    let mut ku: Vec<f64> = accepted().filter_map(|r| r.kappa_unprecond).collect();
    let relative_error = runs
        .iter()
        .zip(reference)
        .filter(|(r, d)| r.converged && d.converged)
        .map(|(r, d)| relative_error(&r.x, &d.x))
        .reduce(f64::max);
    CompareRow {
        solver: kind,
        runs: runs.len(),
        converged: runs.iter().filter(|r| r.converged).count(),
        inner_iters_max: accepted().map(|r| r.inner_iters).max().unwrap_or(0),
        inner_iters_median: median(&mut inner).unwrap_or(0.0),
        outer_iters_median: median(&mut outer).unwrap_or(0.0),
        kappa_precond_median: median(&mut kp),
        kappa_unprecond_median: median(&mut ku),
        relative_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SparseMat;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, 1.0, -2.5, 1e-9, 3.0e20, 0.1 + 0.2, 123456.789, 1e-4, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_float(1e-9), "1e-9");
        assert_eq!(format_float(0.5), "0.5");
    }

    #[test]
    fn header_and_row_layout() {
        let prob = LpProblem::new(SparseMat::identity(1), vec![1.0], vec![1.0]).unwrap();
        let cfg = IpmConfig {
            record_wall_time: false,
            ..IpmConfig::default()
        };
        let sol = ipm_solve(&prob, &cfg).unwrap();
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        for rec in &sol.trace.records {
            w.write_record("r0", rec).unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 10);
        assert_eq!(row[0], "r0");
        assert_eq!(row[1], "1");
        assert_eq!(row[9], "");
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn run_seeds_differ_by_kind() {
        let seeds: Vec<u64> = InnerSolverKind::ALL.iter().map(|&k| run_seed(7, k)).collect();
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
