//! Long-step infeasible interior point method with sketched inner solves.
//!
//! Every outer iteration draws a fresh sketch, solves the normal equations
//! inexactly and then adds the correction vector `v` so that the primal
//! residual still shrinks by exactly `(1 − α)`.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, norm2, Cholesky, DiagScale, SparseMat};
use crate::precond::{
    condition_ratio, normal_condition_number, precond_eig_extremes, sketch_pinv_lift, NormalOperator,
    PrecondNormalOperator, Preconditioner,
};
use crate::sketch::{build_sketch, default_nnz_per_row, default_width, SketchKind, SketchSpec};
use crate::solvers::{
    cg_solve, inner_target_psi, pcg_solve, richardson_solve, sd_solve, theoretical_inner_iters,
    InnerSolveReport, InnerSolverKind, LinearOperator,
};

/// Standard-form LP `min cᵀx  s.t.  Ax = b, x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    a: SparseMat,
    at: SparseMat,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl LpProblem {
    pub fn new(a: SparseMat, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                op: "LpProblem (b)",
                expected: a.rows(),
                found: b.len(),
            });
        }
        if c.len() != a.cols() {
            return Err(Error::DimensionMismatch {
                op: "LpProblem (c)",
                expected: a.cols(),
                found: c.len(),
            });
        }
        if a.rows() > a.cols() {
            return Err(Error::InvalidParameter(format!(
                "constraint matrix must have m <= n, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if b.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("problem vectors"));
        }
        let at = a.transpose();
        Ok(LpProblem { a, at, b, c })
    }

    pub fn a(&self) -> &SparseMat {
        &self.a
    }

    pub fn at(&self) -> &SparseMat {
        &self.at
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }
}

/// Primal-dual point with its residuals and duality measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub mu: f64,
    pub r_p: Vec<f64>,
    pub r_d: Vec<f64>,
}

impl Iterate {
    /// Builds an iterate and evaluates `r_p = Ax − b`, `r_d = Aᵀy + s − c`.
    pub fn new(prob: &LpProblem, x: Vec<f64>, y: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if x.len() != prob.n() || s.len() != prob.n() {
            return Err(Error::DimensionMismatch {
                op: "Iterate",
                expected: prob.n(),
                found: x.len().min(s.len()),
            });
        }
        if y.len() != prob.m() {
            return Err(Error::DimensionMismatch {
                op: "Iterate (y)",
                expected: prob.m(),
                found: y.len(),
            });
        }
        let mut r_p = prob.a.spmv(&x)?;
        axpy(-1.0, &prob.b, &mut r_p);
        let mut r_d = prob.a.spmv_t(&y)?;
        axpy(1.0, &s, &mut r_d);
        axpy(-1.0, &prob.c, &mut r_d);
        let mu = dot(&x, &s) / x.len() as f64;
        Ok(Iterate {
            x,
            y,
            s,
            mu,
            r_p,
            r_d,
        })
    }

    /// `‖(r_p, r_d)‖₂`.
    pub fn residual_norm(&self) -> f64 {
        (dot(&self.r_p, &self.r_p) + dot(&self.r_d, &self.r_d)).sqrt()
    }

    pub fn is_interior(&self) -> bool {
        self.x.iter().chain(&self.s).all(|&v| v > 0.0 && v.is_finite())
    }

    fn stepped(&self, prob: &LpProblem, dir: &Direction, alpha: f64) -> Result<Iterate> {
        let mut x = self.x.clone();
        let mut y = self.y.clone();
        let mut s = self.s.clone();
        axpy(alpha, &dir.dx, &mut x);
        axpy(alpha, &dir.dy, &mut y);
        axpy(alpha, &dir.ds, &mut s);
        Iterate::new(prob, x, y, s)
    }
}

/// Inner-iteration cap for the preconditioned solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerIterPolicy {
    /// Count derived from `(n, gamma, sigma, zeta)`.
    Theoretical,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmConfig {
    pub gamma: f64,
    pub sigma: f64,
    pub epsilon: f64,
    /// Stop on `μ ≤ ε·μ₀` instead of `μ ≤ ε`.
    pub relative_epsilon: bool,
    pub zeta: f64,
    pub tol_cg: f64,
    pub inner_iters: InnerIterPolicy,
    /// Cap for unpreconditioned CG; `None` means `max(1000, 20m)`.
    pub cg_max_iters: Option<usize>,
    pub sketch_kind: SketchKind,
    pub sketch_w: Option<usize>,
    pub sketch_s: Option<usize>,
    /// Failure probability feeding the sketch size; `None` means `1/n²`.
    pub delta: Option<f64>,
    pub max_outer: usize,
    pub seed: u64,
    pub solver: InnerSolverKind,
    /// Every entry of the starting dual vector.
    pub initial_y: f64,
    /// Compute condition numbers every iteration when `m` is at most this.
    pub kappa_max_m: usize,
    pub record_wall_time: bool,
}

impl Default for IpmConfig {
    fn default() -> Self {
        IpmConfig {
            gamma: 0.999,
            sigma: 0.5,
            epsilon: 1e-9,
            relative_epsilon: false,
            zeta: 0.5,
            tol_cg: 1e-5,
            inner_iters: InnerIterPolicy::Theoretical,
            cg_max_iters: None,
            sketch_kind: SketchKind::SparseEmbedding,
            sketch_w: None,
            sketch_s: None,
            delta: None,
            max_outer: 2000,
            seed: 0,
            solver: InnerSolverKind::Pcg,
            initial_y: 0.0,
            kappa_max_m: 2000,
            record_wall_time: true,
        }
    }
}

impl IpmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma = {} must lie in (0, 1)", self.gamma));
        }
        if !(self.sigma > 0.0 && self.sigma < 0.8) {
            return bad(format!("sigma = {} must lie in (0, 4/5)", self.sigma));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon = {} must be positive", self.epsilon));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta = {} must lie in (0, 1)", self.zeta));
        }
        if !(self.tol_cg >= 0.0 && self.tol_cg < 1.0) {
            return bad(format!("tol_cg = {} must lie in [0, 1)", self.tol_cg));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("delta = {d} must lie in (0, 1)"));
            }
        }
        if self.sketch_w == Some(0) || self.sketch_s == Some(0) {
            return bad("sketch dimensions must be positive".into());
        }
        if !self.initial_y.is_finite() {
            return bad("initial_y must be finite".into());
        }
        Ok(())
    }

    /// Sketch used at one outer iteration.
    pub fn sketch_spec(&self, m: usize, n: usize, seed: u64) -> SketchSpec {
        let delta = self.delta.unwrap_or(1.0 / (n as f64 * n as f64).max(4.0));
        let w = self.sketch_w.unwrap_or_else(|| default_width(m, self.zeta, delta));
        let s = self.sketch_s.unwrap_or_else(|| default_nnz_per_row(w)).min(w);
        SketchSpec {
            kind: self.sketch_kind,
            w,
            s,
            seed,
        }
    }

    /// Iteration cap for the configured inner solver.
    pub fn inner_cap(&self, m: usize, n: usize) -> Result<usize> {
        match self.solver {
            InnerSolverKind::Cg => Ok(self.cg_max_iters.unwrap_or((20 * m).max(1000))),
            InnerSolverKind::Direct => Ok(0),
            _ => match self.inner_iters {
                InnerIterPolicy::Fixed(t) => Ok(t),
                InnerIterPolicy::Theoretical => {
                    theoretical_inner_iters(n, self.gamma, self.sigma, self.zeta)
                }
            },
        }
    }
}

/// Search direction together with its correction vector.
#[derive(Debug, Clone)]
pub struct Direction {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub ds: Vec<f64>,
    pub v: Vec<f64>,
    pub report: InnerSolveReport,
    /// `‖Q^{-1/2}(A D² Aᵀ Δy − p)‖₂`; unpreconditioned for the direct solver.
    pub f_tilde_norm: f64,
    /// `‖A S⁻¹ v − (A D² Aᵀ Δy − p)‖₂`.
    pub correction_residual: f64,
    pub p_norm: f64,
    /// `‖Q^{-1/2} p‖₂` when a preconditioner was built.
    pub qinvp_norm: Option<f64>,
    pub precond: Option<Preconditioner>,
}

impl Direction {
    pub fn correction_bound(&self) -> f64 {
        1e-8 * self.p_norm.max(1.0)
    }
}

/// Starting point `x = s = 1`, `y = initial_y·1`.
pub fn initial_point(prob: &LpProblem, initial_y: f64) -> Iterate {
    Iterate::new(
        prob,
        vec![1.0; prob.n()],
        vec![initial_y; prob.m()],
        vec![1.0; prob.n()],
    )
    .expect("dimensions match by construction")
}

/// `p = −r_p − σμ A S⁻¹1 + A x − A D² r_d`.
pub fn compute_rhs_p(prob: &LpProblem, iter: &Iterate, sigma: f64) -> Vec<f64> {
    assert!(iter.s.iter().all(|&v| v > 0.0), "slack must be positive");
    let smu = sigma * iter.mu;
    let u: Vec<f64> = (0..prob.n())
        .map(|j| {
            let (x, s) = (iter.x[j], iter.s[j]);
            x - smu / s - x / s * iter.r_d[j]
        })
        .collect();
    let mut p = prob.a.spmv(&u).expect("conforming");
    axpy(-1.0, &iter.r_p, &mut p);
    p
}

fn solve_direct(prob: &LpProblem, d: &DiagScale, p: &[f64]) -> Result<(Vec<f64>, InnerSolveReport)> {
    let normal = prob.a.normal_matrix(&prob.at, d);
    let chol = Cholesky::factor(&normal)?;
    let op = NormalOperator::new(&prob.a, d)?;
    let mut dy = chol.solve(p);
    let mut f = vec![0.0; p.len()];
    let mut history = vec![norm2(p)];
    for _ in 0..2 {
        op.apply(&dy, &mut f);
        axpy(-1.0, p, &mut f);
        let corr = chol.solve(&f);
        axpy(-1.0, &corr, &mut dy);
    }
    op.apply(&dy, &mut f);
    axpy(-1.0, p, &mut f);
    history.push(norm2(&f));
    let report = InnerSolveReport {
        kind: InnerSolverKind::Direct,
        iterations: 1,
        residual_history: history,
        final_residual: f,
        converged: true,
        step_sizes: Vec::new(),
    };
    Ok((dy, report))
}

/// Computes the corrected direction at `iter` using a sketch drawn from `sketch_seed`.
pub fn build_direction(
    prob: &LpProblem,
    iter: &Iterate,
    config: &IpmConfig,
    sketch_seed: u64,
) -> Result<Direction> {
    let (m, n) = (prob.m(), prob.n());
    let d = DiagScale::from_primal_slack(&iter.x, &iter.s);
    if !d.is_strictly_positive() {
        return Err(Error::NonFinite("scaling matrix D"));
    }
    let p = compute_rhs_p(prob, iter, config.sigma);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side p"));
    }
    let normal = NormalOperator::new(&prob.a, &d)?;
    let cap = config.inner_cap(m, n)?;

    let precond = if config.solver == InnerSolverKind::Direct {
        None
    } else {
        let spec = config.sketch_spec(m, n, sketch_seed);
        let w = Arc::new(build_sketch(n, &spec)?);
        Some(Preconditioner::build(&prob.a, &d, w)?)
    };

    let (dy, report) = match (config.solver, &precond) {
        (InnerSolverKind::Direct, _) => solve_direct(prob, &d, &p)?,
        (InnerSolverKind::Cg, _) => cg_solve(&normal, &p, cap, config.tol_cg)?,
        (kind, Some(pc)) => {
            let op = PrecondNormalOperator::new(&prob.a, &d, pc)?;
            let rhs = pc.apply_q_inv_half(&p)?;
            let (z, report) = match kind {
                InnerSolverKind::Pcg => pcg_solve(&op, &rhs, cap, config.tol_cg)?,
                InnerSolverKind::Richardson => richardson_solve(&op, &rhs, cap, config.tol_cg)?,
                _ => sd_solve(&op, &rhs, cap, config.tol_cg)?,
            };
            (pc.apply_q_inv_half(&z)?, report)
        }
        (_, None) => unreachable!("preconditioner built for every sketched solver"),
    };

    // Unsolved part of the normal equations.
    let mut r = vec![0.0; m];
    normal.apply(&dy, &mut r);
    axpy(-1.0, &p, &mut r);

    let (v, f_tilde_norm, qinvp_norm) = match &precond {
        None => (vec![0.0; n], norm2(&r), None),
        Some(pc) => {
            let lifted = sketch_pinv_lift(pc, &r)?;
            let v: Vec<f64> = (0..n)
                .map(|j| (iter.x[j] * iter.s[j]).sqrt() * lifted[j])
                .collect();
            let ft = norm2(&pc.apply_q_inv_half(&r)?);
            (v, ft, Some(norm2(&pc.apply_q_inv_half(&p)?)))
        }
    };

    let mut ds = prob.a.spmv_t(&dy)?;
    for (dsj, rdj) in ds.iter_mut().zip(&iter.r_d) {
        *dsj = -rdj - *dsj;
    }
    let smu = config.sigma * iter.mu;
    let dx: Vec<f64> = (0..n)
        .map(|j| {
            let (x, s) = (iter.x[j], iter.s[j]);
            -x + smu / s - x / s * ds[j] - v[j] / s
        })
        .collect();

    let v_over_s: Vec<f64> = v.iter().zip(&iter.s).map(|(vj, sj)| vj / sj).collect();
    let mut identity_gap = prob.a.spmv(&v_over_s)?;
    axpy(-1.0, &r, &mut identity_gap);
    let correction_residual = norm2(&identity_gap);
    let p_norm = norm2(&p);
    let bound = 1e-8 * p_norm.max(1.0);
    if !(correction_residual <= bound) {
        return Err(Error::CorrectionIdentityViolated {
            residual: correction_residual,
            bound,
        });
    }

    Ok(Direction {
        dx,
        dy,
        ds,
        v,
        report,
        f_tilde_norm,
        correction_residual,
        p_norm,
        qinvp_norm,
        precond,
    })
}

/// Membership in `N(γ)` with exact arithmetic on the candidate's residuals.
///
/// With `r0_norm = 0` the ratio condition demands a zero residual.
pub fn neighborhood_contains(cand: &Iterate, gamma: f64, mu0: f64, r0_norm: f64) -> bool {
    if !complementarity_ok(&cand.x, &cand.s, gamma) {
        return false;
    }
    let rn = cand.residual_norm();
    if r0_norm == 0.0 {
        return rn == 0.0;
    }
    rn / r0_norm <= cand.mu / mu0
}

fn complementarity_ok(x: &[f64], s: &[f64], gamma: f64) -> bool {
    if x.iter().chain(s).any(|&v| !(v > 0.0)) {
        return false;
    }
    let mu = dot(x, s) / x.len() as f64;
    let floor = (1.0 - gamma) * mu;
    x.iter().zip(s).all(|(a, b)| a * b >= floor)
}

/// Membership test used inside the solver: the residual side is evaluated
/// through the collinear prediction `(1 − α)·‖r‖`, and a zero starting
/// residual disables it.
fn admissible(
    x: &[f64],
    s: &[f64],
    gamma: f64,
    residual_ratio: f64,
    mu0: f64,
    r0_norm: f64,
) -> bool {
    if !complementarity_ok(x, s, gamma) {
        return false;
    }
    if r0_norm == 0.0 {
        return true;
    }
    let mu = dot(x, s) / x.len() as f64;
    residual_ratio <= mu / mu0
}

const FLOOR_SLACK: f64 = 1e-12;
/// Tightest inner tolerance tried after a rejected step.
const MIN_RETRY_TOL: f64 = 1e-12;

/// Smallest `α ≥ 0` at which `aα² + bα + c` turns negative (∞ if never).
fn first_negative(a: f64, b: f64, c: f64) -> f64 {
    if c < 0.0 {
        return 0.0;
    }
    if c == 0.0 && (b < 0.0 || (b == 0.0 && a < 0.0)) {
        return 0.0;
    }
    if a == 0.0 {
        return if b < 0.0 { c / -b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut roots = [q / a, if q != 0.0 { c / q } else { q / a }];
    roots.sort_by(f64::total_cmp);
    roots
        .into_iter()
        .find(|&r| r >= 0.0 && 2.0 * a * r + b < 0.0)
        .unwrap_or(f64::INFINITY)
}

/// Largest `α ∈ [0,1]` whose whole prefix `[0, α]` stays in `N(γ)`.
pub fn max_step_in_neighborhood(
    iter: &Iterate,
    dir: &Direction,
    gamma: f64,
    mu0: f64,
    r0_norm: f64,
) -> f64 {
    let n = iter.x.len() as f64;
    let (x, s, dx, ds) = (&iter.x, &iter.s, &dir.dx, &dir.ds);
    let a0 = dot(x, s);
    let a1 = dot(x, ds) + dot(s, dx);
    let a2 = dot(dx, ds);
    let g = 1.0 - gamma;
    let floor = g * (a0 / n);
    let mut hi = first_negative(a2, a1, a0);
    for j in 0..x.len() {
        let qa = dx[j] * ds[j] - g * (a2 / n);
        let qb = x[j] * ds[j] + s[j] * dx[j] - g * (a1 / n);
        let mut qc = x[j] * s[j] - floor;
        // a coordinate sitting on the floor may come out a few ulps below it
        if qc < 0.0 && qc > -FLOOR_SLACK * floor {
            qc = 0.0;
        }
        hi = hi.min(first_negative(qa, qb, qc));
        if dx[j] < 0.0 {
            hi = hi.min(x[j] / -dx[j]);
        }
        if ds[j] < 0.0 {
            hi = hi.min(s[j] / -ds[j]);
        }
    }
    let rho = if r0_norm > 0.0 {
        iter.residual_norm() / r0_norm
    } else {
        0.0
    };
    if r0_norm > 0.0 {
        let scale = n * mu0;
        let mut rc = a0 / scale - rho;
        if rc < 0.0 && rc > -FLOOR_SLACK * rho {
            rc = 0.0;
        }
        hi = hi.min(first_negative(a2 / scale, a1 / scale + rho, rc));
    }
    let hi = hi.clamp(0.0, 1.0);

    let inside = |alpha: f64| {
        let xa: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
        let sa: Vec<f64> = s.iter().zip(ds).map(|(a, b)| a + alpha * b).collect();
        admissible(&xa, &sa, gamma, (1.0 - alpha) * rho, mu0, r0_norm)
    };
    if inside(hi) {
        return hi;
    }
    let (mut lo, mut up) = (0.0, hi);
    if !inside(lo) {
        return 0.0;
    }
    while up - lo > 1e-12 {
        let mid = 0.5 * (lo + up);
        if inside(mid) {
            lo = mid;
        } else {
            up = mid;
        }
    }
    lo
}

/// Minimizer of `(x + αΔx)ᵀ(s + αΔs)` over `[0, α̃]`.
pub fn min_complementarity_step(iter: &Iterate, dir: &Direction, alpha_tilde: f64) -> f64 {
    let a0 = dot(&iter.x, &iter.s);
    let a1 = dot(&iter.x, &dir.ds) + dot(&iter.s, &dir.dx);
    let a2 = dot(&dir.dx, &dir.ds);
    if a2 > 0.0 {
        (-a1 / (2.0 * a2)).clamp(0.0, alpha_tilde)
    } else {
        let g_end = a0 + alpha_tilde * (a1 + alpha_tilde * a2);
        if g_end < a0 {
            alpha_tilde
        } else {
            0.0
        }
    }
}

/// `μ⁺ ≤ [1 − (α/2)(1 − 5σ/4)]·μ`, up to `1e-12`.
fn decrease_holds(mu_next: f64, mu: f64, alpha: f64, sigma: f64) -> bool {
    mu_next <= (1.0 - 0.5 * alpha * (1.0 - 1.25 * sigma)) * mu + 1e-12
}

/// `‖Q^{-1/2}p‖₂ ≤ √2·ψ·√μ`.
pub fn qinvp_norm_monitor(qinvp_norm: f64, mu: f64, n: usize, gamma: f64, sigma: f64) -> bool {
    qinvp_norm <= 2f64.sqrt() * inner_target_psi(n, gamma, sigma) * mu.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    /// 1-based outer iteration.
    pub k: usize,
    pub mu_before: f64,
    pub mu: f64,
    pub residual_norm: f64,
    pub eta: f64,
    pub inner_iters: usize,
    pub inner_converged: bool,
    pub inner_history: Vec<f64>,
    /// `λ_max/λ_min` of the preconditioned normal operator.
    pub kappa_precond: Option<f64>,
    /// `λ_max/λ_min` of `A D² Aᵀ`.
    pub kappa_unprecond: Option<f64>,
    pub alpha_tilde: f64,
    pub alpha_bar: f64,
    pub v_norm: f64,
    pub f_tilde_norm: f64,
    pub correction_residual: f64,
    pub correction_bound: f64,
    /// `‖r^k − η_k r⁰‖₂ / ‖r⁰‖₂` (0 when `r⁰ = 0`).
    pub collinearity_error: f64,
    pub qinvp_bound_holds: Option<bool>,
    /// `μ_{k+1} ≤ [1 − (ᾱ/2)(1 − 5σ/4)] μ_k`.
    pub decrease_bound_holds: bool,
    /// `|1ᵀv| / n ≤ σμ/4`, under which the decrease bound is guaranteed.
    pub v_sum_small: bool,
    pub accepted: bool,
    pub sketch_width: Option<usize>,
    pub wall_ms: Option<f64>,
}

impl OuterRecord {
    /// `√(3nμ)·‖f̃‖₂`.
    pub fn v_bound(&self, n: usize) -> f64 {
        (3.0 * n as f64 * self.mu_before).sqrt() * self.f_tilde_norm
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OuterTrace {
    pub mu0: f64,
    pub r0_norm: f64,
    pub records: Vec<OuterRecord>,
}

impl OuterTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &OuterRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn max_inner_iters(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub iterate: Iterate,
    pub trace: OuterTrace,
    pub outer_iters: usize,
}

/// Failure of the outer loop, carrying everything computed so far.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct IpmFailure {
    #[source]
    pub error: Error,
    pub iterate: Iterate,
    pub trace: OuterTrace,
}

impl IpmFailure {
    /// Stalls and iteration limits, as opposed to numerical or input errors.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self.error, Error::Stalled { .. } | Error::MaxOuterExceeded { .. })
    }
}

pub fn ipm_solve(prob: &LpProblem, config: &IpmConfig) -> std::result::Result<IpmSolution, IpmFailure> {
    ipm_solve_with(prob, config, &mut |_| {})
}

/// Runs the outer loop, handing each record to `observer` as soon as it exists.
pub fn ipm_solve_with(
    prob: &LpProblem,
    config: &IpmConfig,
    observer: &mut dyn FnMut(&OuterRecord),
) -> std::result::Result<IpmSolution, IpmFailure> {
    let mut iter = initial_point(prob, config.initial_y);
    let mu0 = iter.mu;
    let r0 = [iter.r_p.clone(), iter.r_d.clone()].concat();
    let r0_norm = iter.residual_norm();
    let mut trace = OuterTrace {
        mu0,
        r0_norm,
        records: Vec::new(),
    };
    if let Err(e) = config.validate() {
        return Err(IpmFailure {
            error: e,
            iterate: iter,
            trace,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let target = if config.relative_epsilon {
        config.epsilon * mu0
    } else {
        config.epsilon
    };
    let n = prob.n();
    let mut zero_steps = 0;
    let mut accepted = 0;
    let mut k = 0;
    macro_rules! fail {
        ($e:expr) => {
            return Err(IpmFailure {
                error: $e,
                iterate: iter,
                trace,
            })
        };
    }
    while iter.mu > target {
        if k >= config.max_outer {
            fail!(Error::MaxOuterExceeded {
                limit: config.max_outer
            });
        }
        k += 1;
        let started = Instant::now();
        let sketch_seed = rng.next_u64();
        // A rejected step, or one that decreases μ less than guaranteed for an
        // accurate inner solve, is retried with a tighter inner tolerance.
        let mut inner_cfg = config.clone();
        let (dir, alpha_tilde, alpha_bar, next) = loop {
            let dir = match build_direction(prob, &iter, &inner_cfg, sketch_seed) {
                Ok(d) => d,
                Err(e) => fail!(e),
            };
            let alpha_tilde = max_step_in_neighborhood(&iter, &dir, config.gamma, mu0, r0_norm);
            let mut alpha_bar = min_complementarity_step(&iter, &dir, alpha_tilde);
            let mut next = None;
            while alpha_bar > 0.0 {
                let cand = match iter.stepped(prob, &dir, alpha_bar) {
                    Ok(c) => c,
                    Err(e) => fail!(e),
                };
                let ratio_ok = r0_norm == 0.0 || cand.residual_norm() / r0_norm <= cand.mu / mu0;
                if cand.mu < iter.mu && ratio_ok && complementarity_ok(&cand.x, &cand.s, config.gamma)
                {
                    next = Some(cand);
                    break;
                }
                warn!("outer {k}: step {alpha_bar:e} left the neighborhood after rounding, halving");
                alpha_bar *= 0.5;
                if alpha_bar < 1e-14 {
                    alpha_bar = 0.0;
                }
            }
            let good = next
                .as_ref()
                .is_some_and(|c: &Iterate| decrease_holds(c.mu, iter.mu, alpha_bar, config.sigma));
            if good
                || config.solver == InnerSolverKind::Direct
                || inner_cfg.tol_cg <= MIN_RETRY_TOL
            {
                break (dir, alpha_tilde, alpha_bar, next);
            }
            inner_cfg.tol_cg = (inner_cfg.tol_cg * 1e-2).max(MIN_RETRY_TOL);
            debug!("outer {k}: weak step, retrying with tol_cg = {:e}", inner_cfg.tol_cg);
        };

        let (kappa_precond, kappa_unprecond) = if prob.m() <= config.kappa_max_m {
            let d = DiagScale::from_primal_slack(&iter.x, &iter.s);
            let kp = dir
                .precond
                .as_ref()
                .and_then(|pc| precond_eig_extremes(pc, &prob.a, &d).and_then(condition_ratio).ok());
            (kp, normal_condition_number(&prob.a, &d).ok())
        } else {
            (None, None)
        };

        let mu_before = iter.mu;
        let v_sum = dir.v.iter().sum::<f64>().abs() / n as f64;
        let record_for = |cand: &Iterate, alpha: f64, accepted: bool| {
            let res = [cand.r_p.as_slice(), cand.r_d.as_slice()].concat();
            let rn = cand.residual_norm();
            let eta = if r0_norm > 0.0 { rn / r0_norm } else { 0.0 };
            let collinearity_error = if r0_norm > 0.0 {
                let mut diff = res;
                axpy(-eta, &r0, &mut diff);
                norm2(&diff) / r0_norm
            } else {
                0.0
            };
            OuterRecord {
                k,
                mu_before,
                mu: cand.mu,
                residual_norm: rn,
                eta,
                inner_iters: dir.report.iterations,
                inner_converged: dir.report.converged,
                inner_history: dir.report.residual_history.clone(),
                kappa_precond,
                kappa_unprecond,
                alpha_tilde,
                alpha_bar: alpha,
                v_norm: norm2(&dir.v),
                f_tilde_norm: dir.f_tilde_norm,
                correction_residual: dir.correction_residual,
                correction_bound: dir.correction_bound(),
                collinearity_error,
                qinvp_bound_holds: dir
                    .qinvp_norm
                    .map(|q| qinvp_norm_monitor(q, mu_before, n, config.gamma, config.sigma)),
                decrease_bound_holds: decrease_holds(cand.mu, mu_before, alpha, config.sigma),
                v_sum_small: v_sum <= config.sigma * mu_before / 4.0,
                accepted,
                sketch_width: dir.precond.as_ref().map(|pc| pc.sketch().w()),
                wall_ms: config
                    .record_wall_time
                    .then(|| started.elapsed().as_secs_f64() * 1e3),
            }
        };

        match next {
            Some(cand) => {
                zero_steps = 0;
                accepted += 1;
                let rec = record_for(&cand, alpha_bar, true);
                debug!(
                    "outer {k}: mu {:e} eta {:e} inner {} alpha {:.4}",
                    rec.mu, rec.eta, rec.inner_iters, rec.alpha_bar
                );
                observer(&rec);
                trace.records.push(rec);
                iter = cand;
            }
            None => {
                zero_steps += 1;
                let rec = record_for(&iter, 0.0, false);
                observer(&rec);
                trace.records.push(rec);
                if zero_steps >= 2 {
                    fail!(Error::Stalled { iteration: k });
                }
            }
        }
    }
    Ok(IpmSolution {
        iterate: iter,
        trace,
        outer_iters: accepted,
    })
}
