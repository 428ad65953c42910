//! End-to-end acceptance checks. Runs without the test harness so that the
//! PASS/FAIL line of every criterion is always printed; exits nonzero if any
//! criterion fails.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sketch_ipm::bench::{relative_error, MetricsWriter};
use sketch_ipm::io::{gen_bounded_feasible, gen_synthetic, SyntheticSpec};
use sketch_ipm::ipm::{ipm_solve, IpmConfig, LpProblem, OuterRecord};
use sketch_ipm::matrix::{DenseMat, DiagScale, SparseMat};
use sketch_ipm::precond::{precond_eig_extremes, PrecondNormalOperator, Preconditioner};
use sketch_ipm::sketch::{build_sketch, embedding_quality, row_space_basis, SketchSpec};
use sketch_ipm::solvers::{pcg_solve, richardson_solve, sd_solve, InnerSolverKind, InnerSolveReport};

struct Gate {
    lines: Vec<String>,
    failed: usize,
}

impl Gate {
    fn report(&mut self, id: usize, ok: bool, detail: String) {
        let line = format!("criterion {id:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push(line);
        if !ok {
            self.failed += 1;
        }
    }
}

struct Run {
    kind: InnerSolverKind,
    converged: bool,
    mu: f64,
    outer: usize,
    x: Vec<f64>,
    records: Vec<OuterRecord>,
    n: usize,
}

fn run(prob: &LpProblem, kind: InnerSolverKind, seed: u64) -> Run {
    let cfg = IpmConfig {
        solver: kind,
        seed,
        kappa_max_m: 0,
        ..IpmConfig::default()
    };
    match ipm_solve(prob, &cfg) {
        Ok(sol) => Run {
            kind,
            converged: true,
            mu: sol.iterate.mu,
            outer: sol.outer_iters,
            x: sol.iterate.x,
            records: sol.trace.records,
            n: prob.n(),
        },
        Err(f) => {
            println!("  note: {kind} run with seed {seed} failed: {}", f.error);
            Run {
                kind,
                converged: false,
                mu: f.iterate.mu,
                outer: f.trace.accepted().count(),
                x: f.iterate.x,
                records: f.trace.records,
                n: prob.n(),
            }
        }
    }
}

fn log_uniform_scaling(n: usize, rng: &mut ChaCha8Rng) -> DiagScale {
    DiagScale::new((0..n).map(|_| 10f64.powf(rng.random_range(-4.0..4.0))).collect())
}

fn random_unit(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / nrm).collect()
}

fn steps_contract(report: &InnerSolveReport, factor: f64) -> bool {
    report
        .residual_history
        .windows(2)
        .all(|w| w[1] <= factor * w[0] + 1e-12)
}

/// Largest step ratio while the residual is still above round-off.
fn worst_step(report: &InnerSolveReport) -> f64 {
    report
        .residual_history
        .windows(2)
        .filter(|w| w[0] > 1e-10)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// Exhaustive search over bases of a tiny standard-form LP.
fn brute_force_optimum(prob: &LpProblem) -> Option<f64> {
    let (m, n) = (prob.m(), prob.n());
    let a = prob.a().to_dense();
    let mut best: Option<f64> = None;
    let mut basis: Vec<usize> = (0..m).collect();
    loop {
        let cols: Vec<Vec<f64>> = (0..m).map(|i| basis.iter().map(|&j| a.get(i, j)).collect()).collect();
        if let Some(xb) = solve_small(&DenseMat::from_rows(&cols).unwrap(), prob.b()) {
            if xb.iter().all(|&v| v >= -1e-10) {
                let obj: f64 = basis.iter().zip(&xb).map(|(&j, v)| prob.c()[j] * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next combination in lexicographic order
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if basis[i] < n - m + i {
                basis[i] += 1;
                for k in i + 1..m {
                    basis[k] = basis[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
#[allow(clippy::needless_range_loop)]
fn solve_small(b: &DenseMat, rhs: &[f64]) -> Option<Vec<f64>> {
    let m = b.rows();
    let mut aug: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut r = b.row(i).to_vec();
            r.push(rhs[i]);
            r
        })
        .collect();
    for col in 0..m {
        let piv = (col..m).max_by(|&p, &q| aug[p][col].abs().total_cmp(&aug[q][col].abs()))?;
        if aug[piv][col].abs() < 1e-10 {
            return None;
        }
        aug.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = aug[r][col] / aug[col][col];
                for k in col..=m {
                    aug[r][k] -= f * aug[col][k];
                }
            }
        }
    }
    Some((0..m).map(|i| aug[i][m] / aug[i][i]).collect())
}

fn metrics_bytes(prob: &LpProblem, cfg: &IpmConfig) -> Vec<u8> {
    let sol = ipm_solve(prob, cfg).expect("determinism run converges");
    let mut w = MetricsWriter::new(Vec::new()).unwrap();
    for rec in &sol.trace.records {
        w.write_record("det", rec).unwrap();
    }
    w.into_inner()
}

fn main() {
    let mut gate = Gate {
        lines: Vec::new(),
        failed: 0,
    };

    // 1 and 2: preconditioner quality and inner solver contraction.
    let started = Instant::now();
    let (m, n) = (20, 2000);
    let mut within = 0;
    let mut worst_kappa2: f64 = 0.0;
    let mut premise = 0;
    let mut contraction_ok = [true; 3];
    let mut worst = [0.0f64; 3];
    let mut sd_premise = 0;
    for seed in 0..100u64 {
        let a = gen_synthetic(&SyntheticSpec::new(m, n, 0.1, seed)).unwrap();
        let a: &SparseMat = a.a();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d = log_uniform_scaling(n, &mut rng);
        let spec = IpmConfig::default().sketch_spec(m, n, seed);
        let w = Arc::new(build_sketch(n, &spec).unwrap());
        let p = Preconditioner::build(a, &d, w.clone()).unwrap();
        let (lo, hi) = precond_eig_extremes(&p, a, &d).unwrap();
        let kappa2 = hi / lo;
        worst_kappa2 = worst_kappa2.max(kappa2);
        if kappa2 <= 5.0 / 3.0 * (1.0 + 1e-6) {
            within += 1;
        }

        let z = row_space_basis(a, &d).unwrap();
        let op = PrecondNormalOperator::new(a, &d, &p).unwrap();
        let rhs = random_unit(m, &mut rng);
        if embedding_quality(&z, &w).unwrap() <= 0.25 {
            premise += 1;
            let (_, cg) = pcg_solve(&op, &rhs, 40, 1e-13).unwrap();
            let (_, rich) = richardson_solve(&op, &rhs, 40, 1e-13).unwrap();
            for (i, rep) in [cg, rich].iter().enumerate() {
                contraction_ok[i] &= steps_contract(rep, 0.5);
                worst[i] = worst[i].max(worst_step(rep));
            }
        }
        // steepest descent needs the tighter embedding, so it gets a wider sketch
        let wide = SketchSpec::sparse(4 * spec.w, spec.s, seed ^ 0x5d);
        let ww = Arc::new(build_sketch(n, &wide).unwrap());
        if embedding_quality(&z, &ww).unwrap() <= 0.5 * (1.0 - 0.5) / 2.0 {
            sd_premise += 1;
            let pw = Preconditioner::build(a, &d, ww).unwrap();
            let opw = PrecondNormalOperator::new(a, &d, &pw).unwrap();
            let (_, sd) = sd_solve(&opw, &rhs, 40, 1e-13).unwrap();
            contraction_ok[2] &= steps_contract(&sd, 0.5);
            worst[2] = worst[2].max(worst_step(&sd));
        }
    }
    let t1 = started.elapsed().as_secs_f64();
    gate.report(
        1,
        within >= 95 && t1 < 30.0,
        format!("{within}/100 seeds with kappa^2 <= 5/3, worst {worst_kappa2:.4}, {t1:.1} s"),
    );
    gate.report(
        2,
        premise > 0 && sd_premise > 0 && contraction_ok.iter().all(|&b| b),
        format!(
            "{premise} premise instances; worst step ratio cg {:.3}, richardson {:.3}; \
             sd {:.3} on {sd_premise} instances",
            worst[0], worst[1], worst[2]
        ),
    );

    // 6, 7, 8 on the synthetic family, plus the per-iteration monitors.
    let started = Instant::now();
    let mut runs: Vec<Vec<Run>> = Vec::new();
    for seed in 0..20u64 {
        let prob = gen_synthetic(&SyntheticSpec::new(50, 1000, 0.1, seed).feasible()).unwrap();
        runs.push(
            [InnerSolverKind::Direct, InnerSolverKind::Pcg, InnerSolverKind::Cg]
                .into_iter()
                .map(|k| run(&prob, k, seed))
                .collect(),
        );
    }
    let t6 = started.elapsed().as_secs_f64();
    let mut extra = Vec::new();
    for seed in 0..3u64 {
        let prob = gen_synthetic(&SyntheticSpec::new(50, 1000, 0.1, seed).feasible()).unwrap();
        for kind in [InnerSolverKind::Richardson, InnerSolverKind::SteepestDescent] {
            extra.push(run(&prob, kind, seed));
        }
    }

    let mut correct = 0;
    let mut worst_rel: f64 = 0.0;
    let mut advantage = 0;
    let mut parity = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for inst in &runs {
        let (direct, pcg, cg) = (&inst[0], &inst[1], &inst[2]);
        let rel = relative_error(&pcg.x, &direct.x);
        if direct.converged && pcg.converged && pcg.mu <= 1e-9 && rel <= 1e-3 {
            correct += 1;
        }
        worst_rel = worst_rel.max(rel);
        let max_inner = |r: &Run| r.records.iter().map(|x| x.inner_iters).max().unwrap_or(0);
        let ratio = max_inner(pcg) as f64 / max_inner(cg).max(1) as f64;
        worst_ratio = worst_ratio.max(ratio);
        if ratio <= 0.2 {
            advantage += 1;
        }
        let gap = (pcg.outer as f64 - direct.outer as f64).abs() / direct.outer.max(1) as f64;
        worst_gap = worst_gap.max(gap);
        if direct.converged && pcg.converged && gap <= 0.2 {
            parity += 1;
        }
    }

    let all_runs: Vec<&Run> = runs.iter().flatten().chain(&extra).collect();
    let mut identity_ok = true;
    let mut direct_v_zero = true;
    let mut worst_identity: f64 = 0.0;
    let mut v_ok = true;
    let mut worst_v: f64 = 0.0;
    let mut collinear_ok = true;
    let mut worst_col: f64 = 0.0;
    let mut mono_ok = true;
    let mut decrease_ok = true;
    let mut monitored = 0;
    for r in &all_runs {
        let mut last_eta = 1.0;
        let mut last_mu = f64::INFINITY;
        for rec in &r.records {
            monitored += 1;
            identity_ok &= rec.correction_residual <= rec.correction_bound;
            worst_identity = worst_identity.max(rec.correction_residual / rec.correction_bound);
            if r.kind == InnerSolverKind::Direct {
                direct_v_zero &= rec.v_norm == 0.0;
            }
            let vb = rec.v_bound(r.n);
            v_ok &= rec.v_norm <= vb * (1.0 + 1e-8);
            if vb > 0.0 {
                worst_v = worst_v.max(rec.v_norm / vb);
            }
            if rec.accepted {
                collinear_ok &= rec.collinearity_error <= 1e-8;
                collinear_ok &= rec.eta <= last_eta + 1e-8 && (0.0..=1.0).contains(&rec.eta);
                worst_col = worst_col.max(rec.collinearity_error);
                last_eta = rec.eta;
                mono_ok &= rec.mu < last_mu && rec.mu < rec.mu_before;
                decrease_ok &= rec.decrease_bound_holds;
                last_mu = rec.mu;
            }
        }
    }
    gate.report(
        3,
        identity_ok && direct_v_zero,
        format!(
            "{monitored} outer iterations over {} runs, worst residual/bound {worst_identity:.2e}, \
             direct v = 0: {direct_v_zero}",
            all_runs.len()
        ),
    );
    gate.report(4, v_ok, format!("worst |v| / sqrt(3 n mu)|f| = {worst_v:.3e}"));
    gate.report(
        5,
        collinear_ok,
        format!("worst collinearity error {worst_col:.2e} (pcg, cg, richardson, sd, direct)"),
    );
    gate.report(
        6,
        correct == 20 && t6 < 120.0,
        format!("{correct}/20 solved, worst relative error {worst_rel:.2e}, {t6:.1} s for direct+pcg+cg"),
    );
    gate.report(
        7,
        advantage >= 18,
        format!("{advantage}/20 with pcg/cg max inner ratio <= 1/5, worst {worst_ratio:.3}"),
    );
    gate.report(8, parity == 20, format!("{parity}/20 within 20%, worst gap {:.1}%", 100.0 * worst_gap));

    // 9: tiny problems against vertex enumeration.
    let mut matched = 0;
    let mut worst_obj: f64 = 0.0;
    for seed in 0..50u64 {
        let prob = gen_bounded_feasible(3, 7, seed).unwrap();
        let want = brute_force_optimum(&prob).expect("bounded feasible LP has a vertex");
        let cfg = IpmConfig {
            seed,
            ..IpmConfig::default()
        };
        if let Ok(sol) = ipm_solve(&prob, &cfg) {
            let got = prob.objective(&sol.iterate.x);
            let err = (got - want).abs();
            worst_obj = worst_obj.max(err);
            if err <= 1e-6 {
                matched += 1;
            }
        }
    }
    gate.report(9, matched == 50, format!("{matched}/50 objectives within 1e-6, worst {worst_obj:.2e}"));

    gate.report(
        10,
        mono_ok && decrease_ok,
        format!("mu strictly decreasing: {mono_ok}; decrease inequality at every step: {decrease_ok}"),
    );

    // 11: bit-identical metrics for identical seeds.
    let prob = gen_synthetic(&SyntheticSpec::new(30, 300, 0.1, 11).feasible()).unwrap();
    let cfg = IpmConfig {
        seed: 42,
        record_wall_time: false,
        ..IpmConfig::default()
    };
    let first = metrics_bytes(&prob, &cfg);
    let second = metrics_bytes(&prob, &cfg);
    gate.report(
        11,
        first == second && first.len() > 100,
        format!("{} bytes of metrics, identical: {}", first.len(), first == second),
    );

    if gate.failed > 0 {
        eprintln!("{} criteria failed:\n{}", gate.failed, gate.lines.join("\n"));
        std::process::exit(1);
    }
    println!("all criteria passed");
}
