//! Random embeddings `W ∈ R^{n×w}`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sym_eigenvalues, DenseMat, DiagScale, SparseMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchKind {
    SparseEmbedding,
    Gaussian,
}

impl std::str::FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "sparse-embedding" => Ok(SketchKind::SparseEmbedding),
            "gaussian" => Ok(SketchKind::Gaussian),
            other => Err(Error::InvalidParameter(format!("unknown sketch kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub w: usize,
    /// Nonzeros per row; ignored for the Gaussian kind.
    pub s: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn sparse(w: usize, s: usize, seed: u64) -> Self {
        SketchSpec {
            kind: SketchKind::SparseEmbedding,
            w,
            s,
            seed,
        }
    }

    pub fn gaussian(w: usize, seed: u64) -> Self {
        SketchSpec {
            kind: SketchKind::Gaussian,
            w,
            s: 1,
            seed,
        }
    }

    /// Default sizing for an `m`-row problem with target accuracy `zeta`
    /// and failure probability `delta`.
    pub fn with_default_size(kind: SketchKind, m: usize, zeta: f64, delta: f64, seed: u64) -> Self {
        let w = default_width(m, zeta, delta);
        SketchSpec {
            kind,
            w,
            s: default_nnz_per_row(w),
            seed,
        }
    }
}

/// Column count of the default sketch.
///
/// The embedding error of an `m`-dimensional subspace behaves like
/// `2·sqrt(m/w)`; requiring it below `zeta/2` gives `w ≈ 16·m/zeta²`. The
/// `ln(1/delta)` term covers the tail. The `m·log₂ m` term only matters for
/// loose `zeta`.
pub fn default_width(m: usize, zeta: f64, delta: f64) -> usize {
    let m_f = m.max(1) as f64;
    let log_term = (4.0 * m_f * m_f.max(2.0).log2()).ceil() as usize;
    let accuracy = (16.0 * (m_f + (1.0 / delta).ln().max(0.0)) / (zeta * zeta)).ceil() as usize;
    (2 * m).max(log_term).max(accuracy).max(1)
}

pub fn default_nnz_per_row(w: usize) -> usize {
    8.min(w).max(1)
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Row-major `n × s` column indices and matching values.
    Sparse {
        s: usize,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
    Dense(DenseMat),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    n: usize,
    w: usize,
    storage: Storage,
}

/// Draws a sketch. Identical `(n, spec)` always yields the same matrix.
pub fn build_sketch(n: usize, spec: &SketchSpec) -> Result<SketchMatrix> {
    if n == 0 {
        return Err(Error::InvalidSketch("n must be at least 1".into()));
    }
    if spec.w == 0 {
        return Err(Error::InvalidSketch("w must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec.w;
    let storage = match spec.kind {
        SketchKind::SparseEmbedding => {
            let s = spec.s;
            if s == 0 || s > w {
                return Err(Error::InvalidSketch(format!(
                    "nonzeros per row s = {s} must lie in [1, w = {w}]"
                )));
            }
            let scale = 1.0 / (s as f64).sqrt();
            let mut cols = Vec::with_capacity(n * s);
            let mut vals = Vec::with_capacity(n * s);
            for _ in 0..n {
                let mut picked = index::sample(&mut rng, w, s).into_vec();
                picked.sort_unstable();
                for c in picked {
                    cols.push(c);
                    vals.push(if rng.random::<bool>() { scale } else { -scale });
                }
            }
            Storage::Sparse { s, cols, vals }
        }
        SketchKind::Gaussian => {
            let scale = 1.0 / (w as f64).sqrt();
            let data = (0..n * w)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Storage::Dense(DenseMat::from_vec(n, w, data)?)
        }
    };
    Ok(SketchMatrix { n, w, storage })
}

impl SketchMatrix {
    /// The exact identity, mostly useful as a test fixture.
    pub fn identity(n: usize) -> Self {
        SketchMatrix {
            n,
            w: n,
            storage: Storage::Sparse {
                s: 1,
                cols: (0..n).collect(),
                vals: vec![1.0; n],
            },
        }
    }

    /// Wraps an explicit `n × w` matrix.
    pub fn from_dense(m: DenseMat) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite("sketch matrix"));
        }
        Ok(SketchMatrix {
            n: m.rows(),
            w: m.cols(),
            storage: Storage::Dense(m),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    /// Stored `(column, value)` entries of row `j`.
    pub fn row_entries(&self, j: usize) -> Vec<(usize, f64)> {
        match &self.storage {
            Storage::Sparse { s, cols, vals } => (j * s..(j + 1) * s)
                .map(|k| (cols[k], vals[k]))
                .collect(),
            Storage::Dense(d) => d.row(j).iter().copied().enumerate().collect(),
        }
    }

    pub fn to_dense(&self) -> DenseMat {
        match &self.storage {
            Storage::Dense(d) => d.clone(),
            Storage::Sparse { .. } => {
                let mut out = DenseMat::zeros(self.n, self.w);
                for j in 0..self.n {
                    for (c, v) in self.row_entries(j) {
                        out.set(j, c, out.get(j, c) + v);
                    }
                }
                out
            }
        }
    }

    /// `W u` for `u ∈ R^w`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.w {
            return Err(Error::DimensionMismatch {
                op: "SketchMatrix::apply",
                expected: self.w,
                found: u.len(),
            });
        }
        Ok(match &self.storage {
            Storage::Sparse { s, cols, vals } => (0..self.n)
                .map(|j| (j * s..(j + 1) * s).map(|k| vals[k] * u[cols[k]]).sum())
                .collect(),
            Storage::Dense(d) => d.mul_vec(u)?,
        })
    }

    /// `Wᵀ x` for `x ∈ R^n`.
    pub fn apply_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                op: "SketchMatrix::apply_t",
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(match &self.storage {
            Storage::Sparse { s, cols, vals } => {
                let mut out = vec![0.0; self.w];
                for (j, &xj) in x.iter().enumerate() {
                    for k in j * s..(j + 1) * s {
                        out[cols[k]] += vals[k] * xj;
                    }
                }
                out
            }
            Storage::Dense(d) => d.t_mul_vec(x)?,
        })
    }

    /// `M W` for a dense `M` with `n` columns.
    fn right_multiply_dense(&self, m: &DenseMat) -> DenseMat {
        let mut out = DenseMat::zeros(m.rows(), self.w);
        for i in 0..m.rows() {
            let row: Vec<(usize, f64)> = m
                .row(i)
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, v)| v != 0.0)
                .collect();
            self.accumulate_row(&row, out.row_mut(i));
        }
        out
    }

    /// `out += Σ_j a_j · W[j, :]` over the sparse input `(j, a_j)`.
    fn accumulate_row(&self, entries: &[(usize, f64)], out: &mut [f64]) {
        match &self.storage {
            Storage::Sparse { s, cols, vals } => {
                for &(j, a) in entries {
                    for k in j * s..(j + 1) * s {
                        out[cols[k]] += a * vals[k];
                    }
                }
            }
            Storage::Dense(d) => {
                for &(j, a) in entries {
                    for (o, &wv) in out.iter_mut().zip(d.row(j)) {
                        *o += a * wv;
                    }
                }
            }
        }
    }
}

/// `A · diag(d) · W` without forming `A·diag(d)`.
pub fn apply_sketch_right(a: &SparseMat, d: &DiagScale, w: &SketchMatrix) -> Result<DenseMat> {
    if d.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            op: "apply_sketch_right (scaling)",
            expected: a.cols(),
            found: d.len(),
        });
    }
    if w.n() != a.cols() {
        return Err(Error::DimensionMismatch {
            op: "apply_sketch_right (sketch)",
            expected: a.cols(),
            found: w.n(),
        });
    }
    let dv = d.values();
    let mut out = DenseMat::zeros(a.rows(), w.w());
    let mut scratch = Vec::new();
    for i in 0..a.rows() {
        let (idx, vals) = a.row(i);
        scratch.clear();
        scratch.extend(idx.iter().zip(vals).map(|(&j, &v)| (j, v * dv[j])));
        w.accumulate_row(&scratch, out.row_mut(i));
    }
    Ok(out)
}

/// Spectral distance `‖Z W Wᵀ Zᵀ − I‖₂` for `Z` with orthonormal rows.
pub fn embedding_quality(z: &DenseMat, w: &SketchMatrix) -> Result<f64> {
    if z.cols() != w.n() {
        return Err(Error::DimensionMismatch {
            op: "embedding_quality",
            expected: w.n(),
            found: z.cols(),
        });
    }
    let m = z.rows();
    let gram = z.gram_rows();
    let deviation = gram.sub(&DenseMat::identity(m))?.max_abs();
    if deviation > 1e-8 {
        return Err(Error::NotOrthonormal { deviation });
    }
    let zw = w.right_multiply_dense(z);
    let g = zw.gram_rows().sub(&DenseMat::identity(m))?;
    let eig = sym_eigenvalues(&g)?;
    Ok(eig.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())))
}

/// Orthonormal basis for the row space of `A·diag(d)` (rows of `Vᵀ`).
pub fn row_space_basis(a: &SparseMat, d: &DiagScale) -> Result<DenseMat> {
    let mut ad = a.to_dense();
    for i in 0..ad.rows() {
        for (j, v) in ad.row_mut(i).iter_mut().enumerate() {
            *v *= d.values()[j];
        }
    }
    Ok(crate::matrix::thin_svd(&ad)?.vt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_orthonormal_rows(m: usize, n: usize, seed: u64) -> DenseMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..m * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        crate::matrix::thin_svd(&DenseMat::from_vec(m, n, data).unwrap())
            .unwrap()
            .vt
    }

    #[test]
    fn single_entry_rows() {
        let w = build_sketch(4, &SketchSpec::sparse(4, 1, 7)).unwrap();
        for j in 0..4 {
            let e = w.row_entries(j);
            assert_eq!(e.len(), 1);
            assert_eq!(e[0].1.abs(), 1.0);
        }
    }

    #[test]
    fn sparse_structure_enumerated() {
        let s = 8;
        let w = build_sketch(300, &SketchSpec::sparse(50, s, 3)).unwrap();
        let val = 1.0 / (s as f64).sqrt();
        for j in 0..300 {
            let e = w.row_entries(j);
            assert_eq!(e.len(), s);
            assert!(e.windows(2).all(|p| p[0].0 < p[1].0));
            assert!(e.iter().all(|&(c, v)| c < 50 && v.abs() == val));
        }
    }

    #[test]
    fn column_histogram_roughly_uniform() {
        let w = build_sketch(1000, &SketchSpec::sparse(200, 8, 11)).unwrap();
        let mut hist = vec![0usize; 200];
        for j in 0..1000 {
            for (c, _) in w.row_entries(j) {
                hist[c] += 1;
            }
        }
        let max = *hist.iter().max().unwrap() as f64;
        let min = *hist.iter().min().unwrap() as f64;
        assert!(min > 0.0 && max / min < 3.0, "max {max} min {min}");
    }

    #[test]
    fn gaussian_mean_within_standard_error() {
        let (n, wc) = (100, 50);
        let w = build_sketch(n, &SketchSpec::gaussian(wc, 5)).unwrap();
        let d = w.to_dense();
        let mean = d.as_slice().iter().sum::<f64>() / (n * wc) as f64;
        let bound = 3.0 * (1.0 / (wc as f64).sqrt()) / ((n * wc) as f64).sqrt();
        assert!(mean.abs() <= bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            build_sketch(10, &SketchSpec::sparse(4, 5, 0)),
            Err(Error::InvalidSketch(_))
        ));
        assert!(build_sketch(0, &SketchSpec::sparse(4, 1, 0)).is_err());
        assert!(build_sketch(3, &SketchSpec::gaussian(0, 0)).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        for spec in [SketchSpec::sparse(30, 4, 99), SketchSpec::gaussian(30, 99)] {
            assert_eq!(build_sketch(77, &spec).unwrap(), build_sketch(77, &spec).unwrap());
        }
        let a = build_sketch(77, &SketchSpec::sparse(30, 4, 1)).unwrap();
        let b = build_sketch(77, &SketchSpec::sparse(30, 4, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn unit_second_moment() {
        let n = 40;
        let mut diag = vec![0.0; n];
        for seed in 0..50 {
            let w = build_sketch(n, &SketchSpec::sparse(20, 4, seed)).unwrap();
            for (j, acc) in diag.iter_mut().enumerate() {
                *acc += w.row_entries(j).iter().map(|(_, v)| v * v).sum::<f64>() / 50.0;
            }
        }
        assert!(diag.iter().all(|d| (d - 1.0).abs() <= 0.02));
    }

    #[test]
    fn apply_and_transpose_agree_with_dense() {
        for spec in [SketchSpec::sparse(12, 3, 4), SketchSpec::gaussian(12, 4)] {
            let w = build_sketch(25, &spec).unwrap();
            let wd = w.to_dense();
            let u: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
            let x: Vec<f64> = (0..25).map(|i| (i as f64).cos()).collect();
            let wu = w.apply(&u).unwrap();
            for (a, b) in wu.iter().zip(wd.mul_vec(&u).unwrap()) {
                assert!((a - b).abs() < 1e-13);
            }
            let wtx = w.apply_t(&x).unwrap();
            for (a, b) in wtx.iter().zip(wd.t_mul_vec(&x).unwrap()) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sketch_right_selector_and_zero() {
        let a = SparseMat::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        let d = DiagScale::new(vec![2.0, 0.5, 1.0]);
        let got = apply_sketch_right(&a, &d, &SketchMatrix::identity(3)).unwrap();
        assert_eq!(got.row(0), &[2.0, 0.0, 2.0]);
        assert_eq!(got.row(1), &[0.0, 1.5, 0.0]);
        let zero = apply_sketch_right(&a, &DiagScale::new(vec![0.0; 3]), &SketchMatrix::identity(3))
            .unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert!(apply_sketch_right(&a, &DiagScale::ones(2), &SketchMatrix::identity(3)).is_err());
    }

    #[test]
    fn sketch_right_matches_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut trip = Vec::new();
        for i in 0..5 {
            for j in 0..40 {
                if rng.random::<f64>() < 0.3 {
                    trip.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        let a = SparseMat::from_triplets(5, 40, &trip).unwrap();
        let d = DiagScale::new((0..40).map(|_| rng.random_range(0.1..3.0)).collect());
        let w = build_sketch(40, &SketchSpec::sparse(10, 3, 8)).unwrap();
        let got = apply_sketch_right(&a, &d, &w).unwrap();
        let want = a
            .to_dense()
            .matmul(&DenseMat::diag(d.values()))
            .unwrap()
            .matmul(&w.to_dense())
            .unwrap();
        assert!(got.sub(&want).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn identity_sketch_is_exact_embedding() {
        let z = random_orthonormal_rows(5, 30, 1);
        let q = embedding_quality(&z, &SketchMatrix::identity(30)).unwrap();
        assert!(q < 1e-12);
    }

    #[test]
    fn embedding_quality_rejects_non_orthonormal() {
        let z = DenseMat::from_rows(&[vec![2.0, 0.0]]).unwrap();
        assert!(matches!(
            embedding_quality(&z, &SketchMatrix::identity(2)),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    fn embedded_count(m: usize, n: usize, w: usize, threshold: f64) -> usize {
        let z = random_orthonormal_rows(m, n, 77);
        (0..100)
            .filter(|&seed| {
                let sk = build_sketch(n, &SketchSpec::sparse(w, 8, seed)).unwrap();
                embedding_quality(&z, &sk).unwrap() <= threshold
            })
            .count()
    }

    #[test]
    fn log_sized_sketch_embeds_in_most_seeds() {
        let m = 10;
        let w = 4 * m * (m as f64).log2().ceil() as usize;
        // Distortion concentrates near 2·sqrt(m/w) = 0.5 at this width.
        let good = embedded_count(m, 2000, w, 0.5);
        assert!(good >= 60, "only {good}/100 seeds embedded");
        let good = embedded_count(m, 2000, 2 * w, 0.5);
        assert!(good >= 95, "only {good}/100 seeds embedded at 2w");
    }

    #[test]
    fn undersized_sketch_embeds_poorly() {
        let (m, n) = (10, 2000);
        let z = random_orthonormal_rows(m, n, 78);
        let bad = (0..100)
            .filter(|&seed| {
                let sk = build_sketch(n, &SketchSpec::sparse(m, 8, seed)).unwrap();
                embedding_quality(&z, &sk).unwrap() > 0.5
            })
            .count();
        assert!(bad >= 90, "only {bad}/100 seeds exceeded 0.5");
    }

    #[test]
    fn quality_improves_with_width() {
        let (m, n) = (8, 800);
        let z = random_orthonormal_rows(m, n, 3);
        let avg = |w: usize| {
            (0..20)
                .map(|seed| {
                    let sk = build_sketch(n, &SketchSpec::sparse(w, 4, seed)).unwrap();
                    embedding_quality(&z, &sk).unwrap()
                })
                .sum::<f64>()
                / 20.0
        };
        let (small, mid, large) = (avg(32), avg(128), avg(512));
        assert!(small > mid && mid > large, "{small} {mid} {large}");
    }

    #[test]
    fn default_width_grows_with_accuracy() {
        assert!(default_width(20, 0.25, 0.01) > default_width(20, 0.5, 0.01));
        assert!(default_width(20, 0.5, 0.01) >= 2 * 20);
        assert_eq!(default_nnz_per_row(3), 3);
        assert_eq!(default_nnz_per_row(300), 8);
    }
}
