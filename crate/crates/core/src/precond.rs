//! Sketched preconditioner `Q = A D W Wᵀ D Aᵀ`, kept in factored form.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::{
    sym_eig_extremes, thin_svd_factors, DenseMat, DiagScale, SparseMat, SvdFactors,
};
use crate::sketch::{apply_sketch_right, SketchMatrix};
use crate::solvers::LinearOperator;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Preconditioner {
    svd: SvdFactors,
    sketch: Arc<SketchMatrix>,
}

impl Preconditioner {
    pub fn build(a: &SparseMat, d: &DiagScale, w: Arc<SketchMatrix>) -> Result<Self> {
        if !d.is_strictly_positive() {
            return Err(Error::InvalidParameter(
                "diagonal scaling must be strictly positive".into(),
            ));
        }
        if w.w() < a.rows() {
            return Err(Error::InvalidSketch(format!(
                "sketch width {} is below the row count {}",
                w.w(),
                a.rows()
            )));
        }
        let adw = apply_sketch_right(a, d, &w)?;
        let svd = thin_svd_factors(&adw)?;
        let max_sv = svd.sigma.first().copied().unwrap_or(0.0);
        let min_sv = svd.sigma.last().copied().unwrap_or(0.0);
        if !(max_sv > 0.0) || min_sv <= RANK_TOL * max_sv {
            return Err(Error::RankDeficient { min_sv, max_sv });
        }
        Ok(Preconditioner { svd, sketch: w })
    }

    pub fn dim(&self) -> usize {
        self.svd.sigma.len()
    }

    /// Singular values of `A D W`, nonincreasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.svd.sigma
    }

    pub fn u(&self) -> &DenseMat {
        &self.svd.u
    }

    pub fn sketch(&self) -> &SketchMatrix {
        &self.sketch
    }

    /// `U diag(f(σ)) Uᵀ r`.
    fn spectral_apply(&self, r: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut coef = self.svd.u.t_mul_vec(r).expect("length checked by caller");
        for (c, &s) in coef.iter_mut().zip(&self.svd.sigma) {
            *c *= f(s);
        }
        self.svd.u.mul_vec(&coef).expect("square factor")
    }

    fn check_len(&self, op: &'static str, r: &[f64]) -> Result<()> {
        if r.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                op,
                expected: self.dim(),
                found: r.len(),
            });
        }
        Ok(())
    }

    pub fn apply_q_inv_half(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_len("apply_q_inv_half", r)?;
        Ok(self.spectral_apply(r, |s| 1.0 / s))
    }

    pub fn apply_q_half(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_len("apply_q_half", r)?;
        Ok(self.spectral_apply(r, |s| s))
    }

    pub fn apply_q_inv(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_len("apply_q_inv", r)?;
        Ok(self.spectral_apply(r, |s| 1.0 / (s * s)))
    }

    /// Minimum-norm solution of `(A D W) u = r`.
    pub fn apply_adw_pinv(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_len("apply_adw_pinv", r)?;
        let mut coef = self.svd.u.t_mul_vec(r)?;
        for (c, &s) in coef.iter_mut().zip(&self.svd.sigma) {
            *c /= s;
        }
        Ok(self.svd.vt_t_mul(&coef))
    }

    /// Dense `Q^{-1/2}`; intended for diagnostics and tests.
    pub fn q_inv_half_dense(&self) -> DenseMat {
        let m = self.dim();
        let mut out = DenseMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let v: f64 = (0..m)
                    .map(|k| self.svd.u.get(i, k) * self.svd.u.get(j, k) / self.svd.sigma[k])
                    .sum();
                out.set(i, j, v);
            }
        }
        out
    }

    /// `Q^{-1/2} A D² Aᵀ Q^{-1/2} z`.
    pub fn apply_precond_normal_op(&self, a: &SparseMat, d: &DiagScale, z: &[f64]) -> Result<Vec<f64>> {
        let op = NormalOperator::new(a, d)?;
        let t = self.apply_q_inv_half(z)?;
        let mut y = vec![0.0; a.rows()];
        op.apply(&t, &mut y);
        self.apply_q_inv_half(&y)
    }

    /// `κ(Q^{-1/2} A D) = sqrt(λ_max / λ_min)` of the preconditioned operator.
    pub fn precond_condition_number(&self, a: &SparseMat, d: &DiagScale) -> Result<f64> {
        let (lo, hi) = precond_eig_extremes(self, a, d)?;
        Ok((hi / lo).sqrt())
    }
}

/// Extreme eigenvalues of `Q^{-1/2} A D² Aᵀ Q^{-1/2}`.
pub fn precond_eig_extremes(p: &Preconditioner, a: &SparseMat, d: &DiagScale) -> Result<(f64, f64)> {
    let normal = a.normal_matrix(&a.transpose(), d);
    let qih = p.q_inv_half_dense();
    let b = qih.matmul(&normal)?.matmul(&qih)?;
    sym_eig_extremes(&symmetrize(&b))
}

/// `hi / lo`, refusing a smallest eigenvalue lost to round-off.
pub fn condition_ratio((lo, hi): (f64, f64)) -> Result<f64> {
    if lo > 0.0 && hi.is_finite() {
        Ok(hi / lo)
    } else {
        Err(Error::NotPositiveDefinite { pivot: 0, value: lo })
    }
}

/// `λ_max / λ_min` of `A D² Aᵀ`.
pub fn normal_condition_number(a: &SparseMat, d: &DiagScale) -> Result<f64> {
    condition_ratio(sym_eig_extremes(&a.normal_matrix(&a.transpose(), d))?)
}

fn symmetrize(b: &DenseMat) -> DenseMat {
    let n = b.rows();
    let mut out = b.clone();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (b.get(i, j) + b.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// Matrix-free `A D² Aᵀ`.
pub struct NormalOperator<'a> {
    a: &'a SparseMat,
    d2: Vec<f64>,
}

impl<'a> NormalOperator<'a> {
    pub fn new(a: &'a SparseMat, d: &DiagScale) -> Result<Self> {
        if d.len() != a.cols() {
            return Err(Error::DimensionMismatch {
                op: "NormalOperator",
                expected: a.cols(),
                found: d.len(),
            });
        }
        Ok(NormalOperator {
            a,
            d2: d.values().iter().map(|v| v * v).collect(),
        })
    }
}

impl LinearOperator for NormalOperator<'_> {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut t = vec![0.0; self.a.cols()];
        self.a.mul_t_vec_into(x, &mut t);
        for (ti, di) in t.iter_mut().zip(&self.d2) {
            *ti *= di;
        }
        self.a.mul_vec_into(&t, out);
    }
}

/// Matrix-free `Q^{-1/2} A D² Aᵀ Q^{-1/2}`.
pub struct PrecondNormalOperator<'a> {
    inner: NormalOperator<'a>,
    precond: &'a Preconditioner,
}

impl<'a> PrecondNormalOperator<'a> {
    pub fn new(a: &'a SparseMat, d: &DiagScale, precond: &'a Preconditioner) -> Result<Self> {
        if precond.dim() != a.rows() {
            return Err(Error::DimensionMismatch {
                op: "PrecondNormalOperator",
                expected: a.rows(),
                found: precond.dim(),
            });
        }
        Ok(PrecondNormalOperator {
            inner: NormalOperator::new(a, d)?,
            precond,
        })
    }
}

impl LinearOperator for PrecondNormalOperator<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let t = self.precond.spectral_apply(x, |s| 1.0 / s);
        let mut y = vec![0.0; self.dim()];
        self.inner.apply(&t, &mut y);
        let r = self.precond.spectral_apply(&y, |s| 1.0 / s);
        out.copy_from_slice(&r);
    }
}

/// `W (A D W)† r` lifted back to `R^n`; used for the correction vector.
pub fn sketch_pinv_lift(p: &Preconditioner, r: &[f64]) -> Result<Vec<f64>> {
    let u = p.apply_adw_pinv(r)?;
    p.sketch().apply(&u)
}
