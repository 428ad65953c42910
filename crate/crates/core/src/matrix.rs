//! Sparse and dense kernels used by the solver.
//!
//! `SparseMat` is row-compressed: the solver only ever needs `A x` and `Aᵀ y`
//! for a short-and-fat `A`. Dense matrices are row-major and small (at most
//! `m × w` with `m` the number of constraints).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMat {
    /// Builds a matrix from raw CSR arrays, validating the structure.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 {
            return Err(Error::Schema {
                field: "rowptr".into(),
                message: format!("length {} but expected {}", row_ptr.len(), rows + 1),
            });
        }
        if row_ptr[0] != 0 {
            return Err(Error::Schema {
                field: "rowptr".into(),
                message: "first entry must be 0".into(),
            });
        }
        if let Some(k) = row_ptr.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Schema {
                field: "rowptr".into(),
                message: format!("decreasing at position {}", k + 1),
            });
        }
        let nnz = row_ptr[rows];
        if col_idx.len() != nnz {
            return Err(Error::Schema {
                field: "colidx".into(),
                message: format!("length {} but rowptr ends at {}", col_idx.len(), nnz),
            });
        }
        if values.len() != nnz {
            return Err(Error::Schema {
                field: "values".into(),
                message: format!("length {} but rowptr ends at {}", values.len(), nnz),
            });
        }
        for i in 0..rows {
            let idx = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if let Some(&j) = idx.iter().find(|&&j| j >= cols) {
                return Err(Error::Schema {
                    field: "colidx".into(),
                    message: format!("row {i}: column {j} out of range (cols = {cols})"),
                });
            }
            if idx.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Schema {
                    field: "colidx".into(),
                    message: format!("row {i}: column indices not strictly increasing"),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse matrix values"));
        }
        Ok(SparseMat {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= rows || j >= cols {
                return Err(Error::InvalidParameter(format!(
                    "triplet ({i}, {j}) outside {rows}x{cols}"
                )));
            }
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMat::from_csr(rows, cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMat {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMat {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Converts a dense matrix, dropping exact zeros.
    pub fn from_dense(m: &DenseMat) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMat {
            rows: m.rows(),
            cols: m.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut out = DenseMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn transpose(&self) -> SparseMat {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                let slot = next[j];
                col_idx[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        SparseMat {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "spmv",
                expected: self.cols,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        Ok(out)
    }

    /// `Aᵀ y`.
    pub fn spmv_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "spmv_t",
                expected: self.rows,
                found: y.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        self.mul_t_vec_into(y, &mut out);
        Ok(out)
    }

    pub(crate) fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let (idx, vals) = self.row(i);
            *o = idx.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub(crate) fn mul_t_vec_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                out[j] += v * yi;
            }
        }
    }

    /// Dense `A diag(d)² Aᵀ`, accumulated column by column from `at = Aᵀ`.
    pub fn normal_matrix(&self, at: &SparseMat, d: &DiagScale) -> DenseMat {
        let m = self.rows;
        let mut out = DenseMat::zeros(m, m);
        for j in 0..at.rows() {
            let (idx, vals) = at.row(j);
            let dj2 = d.values()[j] * d.values()[j];
            for (a, (&i, &vi)) in idx.iter().zip(vals).enumerate() {
                let scaled = vi * dj2;
                for (&k, &vk) in idx[a..].iter().zip(&vals[a..]) {
                    out.data[i * m + k] += scaled * vk;
                }
            }
        }
        for i in 0..m {
            for k in 0..i {
                out.data[i * m + k] = out.data[k * m + i];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = DenseMat::zeros(n, n);
        for i in 0..n {
            out.data[i * n + i] = 1.0;
        }
        out
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "DenseMat::from_vec",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(DenseMat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "DenseMat::from_rows",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut out = DenseMat::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            out.set(i, i, v);
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn transpose(&self) -> DenseMat {
        let mut out = DenseMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMat) -> Result<DenseMat> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = DenseMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · selfᵀ`.
    pub fn gram_rows(&self) -> DenseMat {
        let n = self.rows;
        let mut out = DenseMat::zeros(n, n);
        for i in 0..n {
            for k in i..n {
                let v = dot(self.row(i), self.row(k));
                out.data[i * n + k] = v;
                out.data[k * n + i] = v;
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "DenseMat::mul_vec",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn t_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "DenseMat::t_mul_vec",
                expected: self.rows,
                found: y.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            axpy(yi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn sub(&self, other: &DenseMat) -> Result<DenseMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "DenseMat::sub",
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseMat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Diagonal scaling stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagScale(Vec<f64>);

impl DiagScale {
    pub fn new(values: Vec<f64>) -> Self {
        DiagScale(values)
    }

    pub fn ones(n: usize) -> Self {
        DiagScale(vec![1.0; n])
    }

    /// `D = X^{1/2} S^{-1/2}`.
    pub fn from_primal_slack(x: &[f64], s: &[f64]) -> Self {
        DiagScale(x.iter().zip(s).map(|(xi, si)| (xi / si).sqrt()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0 && v.is_finite())
    }
}

/// Thin SVD `M = U diag(sigma) Vt` of an `m × w` matrix with `m ≤ w`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DenseMat,
    pub sigma: Vec<f64>,
    pub vt: DenseMat,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> DenseMat {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, v) in us.row_mut(i).iter_mut().enumerate() {
                *v *= self.sigma[j];
            }
        }
        us.matmul(&self.vt).expect("conforming factors")
    }
}

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Thin SVD via Householder QR of `Mᵀ` followed by one-sided Jacobi on the
/// square factor. Signs are fixed so the first nonzero entry of each left
/// singular vector is nonnegative.
pub fn thin_svd(m: &DenseMat) -> Result<ThinSvd> {
    thin_svd_factors(m).map(SvdFactors::into_thin_svd)
}

/// Thin SVD with the right factor kept implicit as `Vt = Ṽᵀ·Q₁ᵀ`, where `Q₁`
/// comes from the QR of `Mᵀ`. Multiplying by `Vtᵀ` then costs one pass of
/// reflectors instead of a dense `m × w` product.
#[derive(Debug, Clone)]
pub(crate) struct SvdFactors {
    pub u: DenseMat,
    pub sigma: Vec<f64>,
    small_vt: DenseMat,
    deficient: Vec<usize>,
    qr: HouseholderQr,
}

impl SvdFactors {
    /// `Vtᵀ · coef`; directions with zero singular value contribute nothing.
    pub fn vt_t_mul(&self, coef: &[f64]) -> Vec<f64> {
        let y = self.small_vt.t_mul_vec(coef).expect("coefficient length");
        self.qr.apply_q(&y)
    }

    pub fn into_thin_svd(self) -> ThinSvd {
        let (rows, cols) = (self.small_vt.rows(), self.qr.cols_t.cols());
        let mut vt = DenseMat::zeros(rows, cols);
        for i in 0..rows {
            if !self.deficient.contains(&i) {
                vt.row_mut(i).copy_from_slice(&self.qr.apply_q(self.small_vt.row(i)));
            }
        }
        complete_orthonormal_rows(&mut vt, &self.deficient);
        ThinSvd {
            u: self.u,
            sigma: self.sigma,
            vt,
        }
    }
}

pub(crate) fn thin_svd_factors(m: &DenseMat) -> Result<SvdFactors> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows > cols {
        return Err(Error::InvalidParameter(format!(
            "thin_svd needs rows <= cols, got {rows}x{cols}"
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("thin_svd input"));
    }

    // Columns of Mᵀ are the rows of M, so the QR works on contiguous rows.
    let qr = HouseholderQr::factor(m);
    // G = Rᵀ (rows × rows), one-sided Jacobi orthogonalises its rows.
    let mut g = DenseMat::zeros(rows, rows);
    for i in 0..rows {
        for j in 0..=i {
            g.set(i, j, qr.r(j, i));
        }
    }
    let mut u = DenseMat::identity(rows);
    jacobi_orthogonalize_rows(&mut g, &mut u);

    let sigma: Vec<f64> = (0..rows).map(|i| norm2(g.row(i))).collect();
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut u_sorted = DenseMat::zeros(rows, rows);
    let mut small_vt = DenseMat::zeros(rows, rows);
    let sigma_sorted: Vec<f64> = order.iter().map(|&k| sigma[k]).collect();
    let smax = sigma_sorted.first().copied().unwrap_or(0.0);
    let mut deficient = Vec::new();
    for (new, &old) in order.iter().enumerate() {
        for i in 0..rows {
            u_sorted.set(i, new, u.get(i, old));
        }
        let s = sigma[old];
        if s > 0.0 && s > smax * 1e-14 {
            for (dst, src) in small_vt.row_mut(new).iter_mut().zip(g.row(old)) {
                *dst = src / s;
            }
        } else {
            deficient.push(new);
        }
    }

    for j in 0..rows {
        let first = (0..rows).map(|i| u_sorted.get(i, j)).find(|v| v.abs() > 1e-12);
        if matches!(first, Some(v) if v < 0.0) {
            for i in 0..rows {
                let v = u_sorted.get(i, j);
                u_sorted.set(i, j, -v);
            }
            small_vt.row_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(SvdFactors {
        u: u_sorted,
        sigma: sigma_sorted,
        small_vt,
        deficient,
        qr,
    })
}

/// Hestenes one-sided Jacobi: rotates rows of `g` until they are mutually
/// orthogonal, applying the same rotations to the columns of `u`.
fn jacobi_orthogonalize_rows(g: &mut DenseMat, u: &mut DenseMat) {
    let n = g.rows();
    let w = g.cols();
    let mut norms: Vec<f64> = (0..n).map(|i| dot(g.row(i), g.row(i))).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for j in 0..n {
            for k in (j + 1)..n {
                let a = norms[j];
                let b = norms[k];
                if a == 0.0 || b == 0.0 {
                    continue;
                }
                let c = dot(g.row(j), g.row(k));
                if c.abs() <= JACOBI_TOL * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * c);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (lo, hi) = g.data.split_at_mut(k * w);
                let gj = &mut lo[j * w..(j + 1) * w];
                let gk = &mut hi[..w];
                for (x, y) in gj.iter_mut().zip(gk.iter_mut()) {
                    let (p, q) = (*x, *y);
                    *x = cs * p - sn * q;
                    *y = sn * p + cs * q;
                }
                norms[j] = dot(gj, gj);
                norms[k] = dot(gk, gk);
                for i in 0..n {
                    let p = u.get(i, j);
                    let q = u.get(i, k);
                    u.set(i, j, cs * p - sn * q);
                    u.set(i, k, sn * p + cs * q);
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Fills the listed rows of `vt` with unit vectors orthogonal to all other rows.
fn complete_orthonormal_rows(vt: &mut DenseMat, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let cols = vt.cols();
    let mut filled: Vec<usize> = (0..vt.rows()).filter(|i| !missing.contains(i)).collect();
    for &target in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..cols {
            let mut cand = vec![0.0; cols];
            cand[e] = 1.0;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(vt.row(f), &cand);
                    axpy(-proj, vt.row(f), &mut cand);
                }
            }
            let nrm = norm2(&cand);
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, cand));
            }
            if nrm > 0.7 {
                break;
            }
        }
        let (nrm, cand) = best.expect("cols >= rows");
        for (dst, src) in vt.row_mut(target).iter_mut().zip(&cand) {
            *dst = src / nrm;
        }
        filled.push(target);
    }
}

#[derive(Debug, Clone)]
struct HouseholderQr {
    /// Reflector vectors, `vs[j]` acts on entries `j..cols`.
    vs: Vec<Vec<f64>>,
    betas: Vec<f64>,
    /// Transformed columns; `cols_t[k][j]` for `j <= k` holds `R[j][k]`.
    cols_t: DenseMat,
}

impl HouseholderQr {
    /// Factors `Mᵀ` where `m` is given row-major (so each row is a column of `Mᵀ`).
    fn factor(m: &DenseMat) -> Self {
        let (k_cols, len) = (m.rows(), m.cols());
        let mut cols_t = m.clone();
        let mut vs = Vec::with_capacity(k_cols);
        let mut betas = Vec::with_capacity(k_cols);
        for j in 0..k_cols {
            let x = &cols_t.row(j)[j..];
            let alpha = norm2(x);
            let mut v = x.to_vec();
            if alpha == 0.0 {
                vs.push(v);
                betas.push(0.0);
                continue;
            }
            let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm2 = dot(&v, &v);
            let beta = 2.0 / vnorm2;
            for k in j..k_cols {
                let col = &mut cols_t.row_mut(k)[j..];
                let proj = beta * dot(&v, col);
                axpy(-proj, &v, col);
            }
            debug_assert!(len >= j);
            vs.push(v);
            betas.push(beta);
        }
        HouseholderQr { vs, betas, cols_t }
    }

    fn r(&self, i: usize, k: usize) -> f64 {
        self.cols_t.get(k, i)
    }

    /// `Q · [y; 0]` for `y` of length `k_cols`.
    fn apply_q(&self, y: &[f64]) -> Vec<f64> {
        let len = self.cols_t.cols();
        let mut out = vec![0.0; len];
        out[..y.len()].copy_from_slice(y);
        for j in (0..self.vs.len()).rev() {
            let beta = self.betas[j];
            if beta == 0.0 {
                continue;
            }
            let v = &self.vs[j];
            let seg = &mut out[j..];
            let proj = beta * dot(v, seg);
            axpy(-proj, v, seg);
        }
        out
    }
}

/// Extreme eigenvalues of a symmetric matrix (cyclic Jacobi).
pub fn sym_eig_extremes(b: &DenseMat) -> Result<(f64, f64)> {
    let eig = sym_eigenvalues(b)?;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(b: &DenseMat) -> Result<Vec<f64>> {
    let n = b.rows();
    if b.cols() != n {
        return Err(Error::DimensionMismatch {
            op: "sym_eigenvalues",
            expected: n,
            found: b.cols(),
        });
    }
    if !b.is_finite() {
        return Err(Error::NonFinite("sym_eigenvalues input"));
    }
    let scale = b.max_abs().max(f64::MIN_POSITIVE);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((b.get(i, j) - b.get(j, i)).abs());
        }
    }
    if asym > 1e-8 * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    let mut a = b.clone();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum();
        let diag: f64 = (0..n).map(|i| a.get(i, i) * a.get(i, i)).sum();
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                if apq.abs() <= 1e-300 || apq.abs() < 1e-18 * (app.abs() * aqq.abs()).sqrt() {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Dense Cholesky factor `L` with `B = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMat,
}

impl Cholesky {
    pub fn factor(b: &DenseMat) -> Result<Self> {
        let n = b.rows();
        let mut l = DenseMat::zeros(n, n);
        for j in 0..n {
            let mut d = b.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = d.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut s = b.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for (k, yk) in y[..i].iter().enumerate() {
                s -= self.l.get(i, k) * yk;
            }
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                s -= self.l.get(k, i) * yk;
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
