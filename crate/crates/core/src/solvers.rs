//! Inner solvers for the (preconditioned) normal equations.
//!
//! Residuals follow the convention `f = op·z − rhs` and are recomputed from
//! scratch every step, so the reported history is the true residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, norm2, DenseMat};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl LinearOperator for DenseMat {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolverKind {
    /// CG on the sketch-preconditioned system.
    Pcg,
    /// CG on the raw normal equations.
    Cg,
    Richardson,
    SteepestDescent,
    /// Dense Cholesky of the normal matrix.
    Direct,
}

impl InnerSolverKind {
    pub const ALL: [InnerSolverKind; 5] = [
        InnerSolverKind::Pcg,
        InnerSolverKind::Cg,
        InnerSolverKind::Richardson,
        InnerSolverKind::SteepestDescent,
        InnerSolverKind::Direct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InnerSolverKind::Pcg => "pcg",
            InnerSolverKind::Cg => "cg",
            InnerSolverKind::Richardson => "richardson",
            InnerSolverKind::SteepestDescent => "sd",
            InnerSolverKind::Direct => "direct",
        }
    }

    /// Whether the solver works on the sketch-preconditioned system.
    pub fn is_preconditioned(self) -> bool {
        matches!(
            self,
            InnerSolverKind::Pcg | InnerSolverKind::Richardson | InnerSolverKind::SteepestDescent
        )
    }
}

impl std::fmt::Display for InnerSolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for InnerSolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcg" => Ok(InnerSolverKind::Pcg),
            "cg" => Ok(InnerSolverKind::Cg),
            "richardson" => Ok(InnerSolverKind::Richardson),
            "sd" | "steepest-descent" => Ok(InnerSolverKind::SteepestDescent),
            "direct" => Ok(InnerSolverKind::Direct),
            other => Err(Error::InvalidParameter(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolveReport {
    pub kind: InnerSolverKind,
    pub iterations: usize,
    /// `‖f^(j)‖₂` for `j = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub final_residual: Vec<f64>,
    pub converged: bool,
    /// Line-search step sizes (steepest descent only).
    pub step_sizes: Vec<f64>,
}

impl InnerSolveReport {
    fn start(kind: InnerSolverKind, rhs: &[f64]) -> Self {
        InnerSolveReport {
            kind,
            iterations: 0,
            residual_history: vec![norm2(rhs)],
            final_residual: rhs.iter().map(|v| -v).collect(),
            converged: false,
            step_sizes: Vec::new(),
        }
    }

    /// Largest ratio `‖f^(j)‖ / ‖f^(j-1)‖` over the run.
    pub fn worst_contraction(&self) -> f64 {
        self.residual_history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }

    pub fn final_residual_norm(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }
}

fn check_dims(op: &dyn LinearOperator, rhs: &[f64]) -> Result<()> {
    if rhs.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            op: "inner solve",
            expected: op.dim(),
            found: rhs.len(),
        });
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inner solve right-hand side"));
    }
    Ok(())
}

/// `op·z − rhs` into `f`.
fn residual(op: &dyn LinearOperator, z: &[f64], rhs: &[f64], f: &mut [f64]) {
    op.apply(z, f);
    axpy(-1.0, rhs, f);
}

/// Conjugate gradients from `z = 0`, stopping at `t_max` steps or when
/// `‖f‖ ≤ tol·‖rhs‖`.
pub fn pcg_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    t_max: usize,
    tol: f64,
) -> Result<(Vec<f64>, InnerSolveReport)> {
    conjugate_gradient(op, rhs, t_max, tol, InnerSolverKind::Pcg)
}

/// Same iteration as [`pcg_solve`], labelled as the unpreconditioned baseline.
pub fn cg_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    t_max: usize,
    tol: f64,
) -> Result<(Vec<f64>, InnerSolveReport)> {
    conjugate_gradient(op, rhs, t_max, tol, InnerSolverKind::Cg)
}

fn conjugate_gradient(
    op: &dyn LinearOperator,
    rhs: &[f64],
    t_max: usize,
    tol: f64,
    kind: InnerSolverKind,
) -> Result<(Vec<f64>, InnerSolveReport)> {
    check_dims(op, rhs)?;
    let m = rhs.len();
    let mut report = InnerSolveReport::start(kind, rhs);
    let mut z = vec![0.0; m];
    let threshold = tol * report.residual_history[0];
    if report.residual_history[0] <= threshold || report.residual_history[0] == 0.0 {
        report.converged = true;
        return Ok((z, report));
    }
    let mut r: Vec<f64> = rhs.to_vec();
    let mut p = r.clone();
    let mut q = vec![0.0; m];
    let mut f = vec![0.0; m];
    let mut rr = dot(&r, &r);
    for j in 1..=t_max {
        op.apply(&p, &mut q);
        let curvature = dot(&p, &q);
        if !(curvature > 0.0) {
            return Err(Error::Breakdown {
                iteration: j,
                curvature,
            });
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut z);
        axpy(-alpha, &q, &mut r);
        residual(op, &z, rhs, &mut f);
        let fnorm = norm2(&f);
        report.iterations = j;
        report.residual_history.push(fnorm);
        if fnorm <= threshold {
            report.converged = true;
            break;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    if report.iterations > 0 {
        report.final_residual = f;
    }
    Ok((z, report))
}

/// Consecutive residual growths tolerated before declaring divergence.
pub const DIVERGENCE_STREAK: usize = 5;

/// Richardson iteration `z ← z − (op·z − rhs)`.
pub fn richardson_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    t_max: usize,
    tol: f64,
) -> Result<(Vec<f64>, InnerSolveReport)> {
    check_dims(op, rhs)?;
    let m = rhs.len();
    let mut report = InnerSolveReport::start(InnerSolverKind::Richardson, rhs);
    let mut z = vec![0.0; m];
    let threshold = tol * report.residual_history[0];
    if report.residual_history[0] == 0.0 {
        report.converged = true;
        return Ok((z, report));
    }
    let mut f: Vec<f64> = report.final_residual.clone();
    let mut growths = 0;
    for j in 1..=t_max {
        axpy(-1.0, &f, &mut z);
        residual(op, &z, rhs, &mut f);
        let fnorm = norm2(&f);
        let prev = *report.residual_history.last().unwrap();
        report.iterations = j;
        report.residual_history.push(fnorm);
        if !fnorm.is_finite() {
            return Err(Error::Diverged { iteration: j });
        }
        if fnorm <= threshold {
            report.converged = true;
            break;
        }
        if fnorm > prev {
            growths += 1;
            if growths >= DIVERGENCE_STREAK {
                return Err(Error::Diverged { iteration: j });
            }
        } else {
            growths = 0;
        }
    }
    report.final_residual = f;
    Ok((z, report))
}

/// Steepest descent with exact line search.
pub fn sd_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    t_max: usize,
    tol: f64,
) -> Result<(Vec<f64>, InnerSolveReport)> {
    check_dims(op, rhs)?;
    let m = rhs.len();
    let mut report = InnerSolveReport::start(InnerSolverKind::SteepestDescent, rhs);
    let mut z = vec![0.0; m];
    let threshold = tol * report.residual_history[0];
    let mut f: Vec<f64> = report.final_residual.clone();
    let mut of = vec![0.0; m];
    for j in 1..=t_max {
        let ff = dot(&f, &f);
        if ff == 0.0 {
            break;
        }
        op.apply(&f, &mut of);
        let denom = dot(&f, &of);
        if denom == 0.0 {
            break;
        }
        if denom < 0.0 {
            return Err(Error::Breakdown {
                iteration: j,
                curvature: denom,
            });
        }
        let alpha = ff / denom;
        axpy(-alpha, &f, &mut z);
        residual(op, &z, rhs, &mut f);
        let fnorm = norm2(&f);
        report.iterations = j;
        report.step_sizes.push(alpha);
        report.residual_history.push(fnorm);
        if fnorm <= threshold {
            break;
        }
    }
    report.converged = report.final_residual_norm() <= threshold;
    report.final_residual = f;
    Ok((z, report))
}

/// Iteration count after which the inner residual is small enough for the
/// outer analysis, given neighborhood `gamma`, centering `sigma` and the
/// per-step contraction `zeta`.
pub fn theoretical_inner_iters(n: usize, gamma: f64, sigma: f64, zeta: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if !(sigma > 0.0 && sigma < 0.8) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must lie in (0, 4/5)")));
    }
    if !(zeta > 0.0 && zeta < 0.999) {
        return Err(Error::InvalidParameter(format!("zeta = {zeta} must lie in (0, 0.999)")));
    }
    let nf = n as f64;
    let psi = inner_target_psi(n, gamma, sigma);
    let t = (4.0 * (6.0 * nf).sqrt() * psi / (gamma * sigma)).ln() / (1.0 / zeta).ln();
    Ok(t.ceil().max(1.0) as usize)
}

/// `9n/√(1−γ) + σ√(n/(1−γ)) + √n`.
pub fn inner_target_psi(n: usize, gamma: f64, sigma: f64) -> f64 {
    let nf = n as f64;
    9.0 * nf / (1.0 - gamma).sqrt() + sigma * (nf / (1.0 - gamma)).sqrt() + nf.sqrt()
}
