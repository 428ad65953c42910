use sketch_ipm::bench::{compare, relative_error};
use sketch_ipm::error::Error;
use sketch_ipm::io::{
    gen_bounded_feasible, gen_synthetic, parse_libsvm, read_lp, svm_to_lp, svm_weights, write_lp, SyntheticSpec,
};
use sketch_ipm::ipm::{ipm_solve, ipm_solve_with, neighborhood_contains, IpmConfig, Iterate, LpProblem};
use sketch_ipm::matrix::SparseMat;
use sketch_ipm::solvers::InnerSolverKind;

fn config(solver: InnerSolverKind) -> IpmConfig {
    IpmConfig {
        solver,
        ..IpmConfig::default()
    }
}

#[test]
fn one_by_one_lp_every_solver() {
    let prob = LpProblem::new(SparseMat::identity(1), vec![1.0], vec![1.0]).unwrap();
    for solver in InnerSolverKind::ALL {
        let sol = ipm_solve(&prob, &config(solver)).unwrap();
        assert!((prob.objective(&sol.iterate.x) - 1.0).abs() <= 1e-9, "{solver}");
    }
}

#[test]
fn feasible_start_with_zero_residual_converges() {
    // b = A·1 and c = Aᵀ·0 + 1 make the all-ones start primal and dual feasible.
    let base = gen_bounded_feasible(4, 12, 3).unwrap();
    let a = base.a().clone();
    let b = a.spmv(&[1.0; 12]).unwrap();
    let prob = LpProblem::new(a, b, vec![1.0; 12]).unwrap();
    for solver in [InnerSolverKind::Direct, InnerSolverKind::Pcg] {
        let sol = ipm_solve(&prob, &config(solver)).unwrap();
        assert_eq!(sol.trace.r0_norm, 0.0);
        assert!(sol.iterate.mu <= 1e-9);
        assert!(sol.iterate.residual_norm() <= 1e-9);
    }
}

#[test]
fn direct_and_sketched_objectives_agree() {
    let prob = gen_synthetic(&SyntheticSpec::new(12, 120, 0.2, 5).feasible()).unwrap();
    let direct = ipm_solve(&prob, &config(InnerSolverKind::Direct)).unwrap();
    let want = prob.objective(&direct.iterate.x);
    for solver in [InnerSolverKind::Pcg, InnerSolverKind::Cg, InnerSolverKind::Richardson, InnerSolverKind::SteepestDescent] {
        let sol = ipm_solve(&prob, &config(solver)).unwrap();
        let got = prob.objective(&sol.iterate.x);
        assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()), "{solver}: {got} vs {want}");
        assert!(relative_error(&sol.iterate.x, &direct.iterate.x) <= 1e-3, "{solver}");
    }
}

#[test]
fn every_accepted_iterate_is_in_the_neighborhood() {
    let prob = gen_synthetic(&SyntheticSpec::new(10, 80, 0.3, 2).feasible()).unwrap();
    let cfg = config(InnerSolverKind::Pcg);
    let mut seen = 0;
    let sol = ipm_solve_with(&prob, &cfg, &mut |rec| {
        assert!(rec.accepted);
        assert!(rec.mu < rec.mu_before);
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, sol.trace.records.len());
    let it: &Iterate = &sol.iterate;
    assert!(neighborhood_contains(it, cfg.gamma, sol.trace.mu0, sol.trace.r0_norm));
}

#[test]
fn same_seed_same_trace() {
    let prob = gen_synthetic(&SyntheticSpec::new(10, 100, 0.2, 9).feasible()).unwrap();
    let cfg = IpmConfig {
        seed: 17,
        record_wall_time: false,
        ..IpmConfig::default()
    };
    let a = ipm_solve(&prob, &cfg).unwrap();
    let b = ipm_solve(&prob, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.iterate.x, b.iterate.x);
}

#[test]
fn literal_recipe_infeasibility_is_reported() {
    // With A ≥ 0, a negative entry of b certifies infeasibility; find such a seed.
    let prob = (0..50)
        .map(|seed| gen_synthetic(&SyntheticSpec::new(5, 40, 0.3, seed)).unwrap())
        .find(|p| p.b().iter().any(|&v| v < 0.0))
        .expect("some seed draws a negative right-hand side");
    let cfg = IpmConfig {
        max_outer: 200,
        ..IpmConfig::default()
    };
    let failure = ipm_solve(&prob, &cfg).unwrap_err();
    assert!(failure.is_non_convergence(), "{}", failure.error);
    assert!(!failure.trace.records.is_empty());
}

#[test]
fn outer_limit_keeps_partial_trace() {
    let prob = gen_synthetic(&SyntheticSpec::new(10, 80, 0.3, 1).feasible()).unwrap();
    let cfg = IpmConfig {
        max_outer: 3,
        ..IpmConfig::default()
    };
    let failure = ipm_solve(&prob, &cfg).unwrap_err();
    assert!(matches!(failure.error, Error::MaxOuterExceeded { limit: 3 }));
    assert_eq!(failure.trace.records.len(), 3);
}

#[test]
fn separable_svm_classifies_training_set() {
    let text = "\
# two clusters
+1 1:2.0 2:1.0
+1 1:1.5 2:2.0
+1 1:3.0 2:0.5
-1 1:-1.0 2:-1.5
-1 1:-2.0 2:-0.5
-1 1:-0.5 2:-2.5
";
    let data = parse_libsvm(text).unwrap();
    let prob = svm_to_lp(&data).unwrap();
    assert_eq!((prob.m(), prob.n()), (6, 2 * 2 + 2 + 6));
    let sol = ipm_solve(&prob, &config(InnerSolverKind::Pcg)).unwrap();
    let (w, b) = svm_weights(&sol.iterate.x, data.n_features);
    for s in &data.samples {
        let score: f64 = s.features.iter().map(|&(j, v)| w[j] * v).sum::<f64>() + b;
        assert!(s.label * score >= 1.0 - 1e-6, "margin violated: {score}");
    }
}

#[test]
fn lp_file_round_trip_then_solve() {
    let prob = gen_bounded_feasible(3, 8, 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    write_lp(&path, &prob).unwrap();
    let back = read_lp(&path).unwrap();
    assert_eq!(back, prob);
    let a = ipm_solve(&prob, &IpmConfig::default()).unwrap();
    let b = ipm_solve(&back, &IpmConfig::default()).unwrap();
    assert_eq!(a.iterate.x, b.iterate.x);
}

#[test]
fn comparison_rows_follow_requested_order() {
    let prob = gen_synthetic(&SyntheticSpec::new(8, 80, 0.3, 3).feasible()).unwrap();
    let kinds = [InnerSolverKind::Pcg, InnerSolverKind::Cg];
    let cfg = IpmConfig {
        record_wall_time: false,
        ..IpmConfig::default()
    };
    let rows = compare(&prob, &cfg, &kinds, 2).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].solver, InnerSolverKind::Pcg);
    assert_eq!(rows[1].solver, InnerSolverKind::Cg);
    for row in &rows {
        assert_eq!(row.runs, 2);
        assert_eq!(row.converged, 2);
        assert!(row.relative_error.unwrap() <= 1e-3);
        assert!(row.kappa_precond_median.unwrap() < row.kappa_unprecond_median.unwrap());
    }
    assert!(rows[0].inner_iters_max < rows[1].inner_iters_max);
    // deterministic merge
    assert_eq!(compare(&prob, &cfg, &kinds, 2).unwrap(), rows);
}
