//! Problem construction and persistence.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ipm::LpProblem;
use crate::matrix::SparseMat;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsrJson {
    rowptr: Vec<usize>,
    colidx: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LpFileV1 {
    version: u32,
    m: usize,
    n: usize,
    a: CsrJson,
    b: Vec<f64>,
    c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Value>,
}

/// An LP together with the free-form `meta` object of its file.
#[derive(Debug, Clone, PartialEq)]
pub struct LpDocument {
    pub problem: LpProblem,
    pub meta: Option<Value>,
}

fn schema(field: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        message: message.into(),
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

pub fn parse_lp(text: &str) -> Result<LpDocument> {
    let file: LpFileV1 = serde_json::from_str(text).map_err(json_error)?;
    if file.version != 1 {
        return Err(schema("version", format!("unsupported version {}", file.version)));
    }
    if file.m > file.n {
        return Err(schema("m", format!("m = {} exceeds n = {}", file.m, file.n)));
    }
    if file.b.len() != file.m {
        return Err(schema("b", format!("length {} but m = {}", file.b.len(), file.m)));
    }
    if file.c.len() != file.n {
        return Err(schema("c", format!("length {} but n = {}", file.c.len(), file.n)));
    }
    let a = SparseMat::from_csr(file.m, file.n, file.a.rowptr, file.a.colidx, file.a.values)?;
    Ok(LpDocument {
        problem: LpProblem::new(a, file.b, file.c)?,
        meta: file.meta,
    })
}

pub fn to_lp_string(prob: &LpProblem, meta: Option<&Value>) -> Result<String> {
    let file = LpFileV1 {
        version: 1,
        m: prob.m(),
        n: prob.n(),
        a: CsrJson {
            rowptr: prob.a().row_ptr().to_vec(),
            colidx: prob.a().col_idx().to_vec(),
            values: prob.a().values().to_vec(),
        },
        b: prob.b().to_vec(),
        c: prob.c().to_vec(),
        meta: meta.cloned(),
    };
    let mut out = serde_json::to_string(&file)?;
    out.push('\n');
    Ok(out)
}

pub fn read_lp(path: impl AsRef<Path>) -> Result<LpProblem> {
    Ok(read_lp_document(path)?.problem)
}

pub fn read_lp_document(path: impl AsRef<Path>) -> Result<LpDocument> {
    parse_lp(&fs::read_to_string(path)?)
}

pub fn write_lp(path: impl AsRef<Path>, prob: &LpProblem) -> Result<()> {
    write_lp_document(path, prob, None)
}

pub fn write_lp_document(path: impl AsRef<Path>, prob: &LpProblem, meta: Option<&Value>) -> Result<()> {
    fs::write(path, to_lp_string(prob, meta)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSample {
    /// `+1` or `−1`.
    pub label: f64,
    /// 0-based `(feature, value)` pairs, increasing in feature.
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SvmDataset {
    pub samples: Vec<SvmSample>,
    pub n_features: usize,
}

impl SvmDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn parse_libsvm(text: &str) -> Result<SvmDataset> {
    let mut data = SvmDataset::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line");
        let label = match label_tok.parse::<f64>() {
            Ok(v) if v == 1.0 || v == -1.0 => v,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("label `{label_tok}` is not +1 or -1"),
                })
            }
        };
        let mut features = Vec::new();
        for tok in tokens {
            let malformed = || Error::Parse {
                line,
                message: format!("malformed feature `{tok}`"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(malformed)?;
            let idx: usize = idx.parse().map_err(|_| malformed())?;
            let val: f64 = val.parse().map_err(|_| malformed())?;
            if idx == 0 || !val.is_finite() {
                return Err(malformed());
            }
            if features.last().is_some_and(|&(prev, _)| prev >= idx - 1) {
                return Err(Error::Parse {
                    line,
                    message: format!("feature index {idx} is not increasing"),
                });
            }
            features.push((idx - 1, val));
            data.n_features = data.n_features.max(idx);
        }
        data.samples.push(SvmSample { label, features });
    }
    Ok(data)
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<SvmDataset> {
    parse_libsvm(&fs::read_to_string(path)?)
}

/// Hard-margin ℓ1-SVM as a standard-form LP.
///
/// Columns are `[w⁺ (n), w⁻ (n), b⁺, b⁻, ξ (m)]`, row `i` reads
/// `yᵢ(xᵢᵀ(w⁺ − w⁻) + b⁺ − b⁻) − ξᵢ = 1`, and the objective is `Σ w⁺ + w⁻ + b⁺ + b⁻`.
/// The intercept pair carries cost so that it stays bounded along the
/// central path.
pub fn svm_to_lp(data: &SvmDataset) -> Result<LpProblem> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (m, n) = (data.len(), data.n_features);
    let cols = 2 * n + 2 + m;
    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for (i, sample) in data.samples.iter().enumerate() {
        let y = sample.label;
        for &(j, v) in &sample.features {
            col_idx.push(j);
            values.push(y * v);
        }
        for &(j, v) in &sample.features {
            col_idx.push(n + j);
            values.push(-y * v);
        }
        col_idx.extend([2 * n, 2 * n + 1, 2 * n + 2 + i]);
        values.extend([y, -y, -1.0]);
        row_ptr.push(col_idx.len());
    }
    let a = SparseMat::from_csr(m, cols, row_ptr, col_idx, values)?;
    let mut c = vec![0.0; cols];
    c[..2 * n + 2].fill(1.0);
    LpProblem::new(a, vec![1.0; m], c)
}

/// Recovers `(w, b′)` from an LP solution produced by [`svm_to_lp`].
pub fn svm_weights(x: &[f64], n_features: usize) -> (Vec<f64>, f64) {
    let n = n_features;
    let w = (0..n).map(|j| x[j] - x[n + j]).collect();
    (w, x[2 * n] - x[2 * n + 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub density: f64,
    pub seed: u64,
    /// Take `|x̄|` when forming `b` and make the cost of empty columns
    /// nonnegative. The instance is then feasible with a bounded optimum
    /// (with overwhelming probability), which the literal recipe is not.
    pub feasible: bool,
}

impl SyntheticSpec {
    pub fn new(m: usize, n: usize, density: f64, seed: u64) -> Self {
        SyntheticSpec {
            m,
            n,
            density,
            seed,
            feasible: false,
        }
    }

    pub fn feasible(self) -> Self {
        SyntheticSpec {
            feasible: true,
            ..self
        }
    }
}

/// Random LP: Bernoulli(`density`)-masked `U(0,1)` entries plus a `U(0,1)`
/// boost on the diagonal, `b = A x̄ + 0.1 z` and `c ~ N(0, 1)`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<LpProblem> {
    let SyntheticSpec { m, n, density, seed, feasible } = *spec;
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "synthetic size needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!("density = {density} must lie in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < density {
                trip.push((i, j, rng.random::<f64>()));
            }
        }
    }
    for k in 0..m.min(n) {
        trip.push((k, k, rng.random::<f64>()));
    }
    let a = SparseMat::from_triplets(m, n, &trip)?;
    let mut xbar: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let mut c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if feasible {
        xbar.iter_mut().for_each(|v| *v = v.abs());
        let mut used = vec![false; n];
        a.col_idx().iter().for_each(|&j| used[j] = true);
        for (cj, _) in c.iter_mut().zip(&used).filter(|(_, &u)| !u) {
            *cj = cj.abs();
        }
    }
    let mut b = a.spmv(&xbar)?;
    for (bi, zi) in b.iter_mut().zip(&z) {
        *bi += 0.1 * zi;
    }
    LpProblem::new(a, b, c)
}

/// Dense random LP that is feasible and bounded by construction:
/// `b = A x̄` with `x̄ > 0` and `c = Aᵀȳ + s̄` with `s̄ > 0`.
pub fn gen_bounded_feasible(m: usize, n: usize, seed: u64) -> Result<LpProblem> {
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "size needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            trip.push((i, j, rng.random_range(-1.0..1.0)));
        }
    }
    let a = SparseMat::from_triplets(m, n, &trip)?;
    let xbar: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let ybar: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sbar: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let b = a.spmv(&xbar)?;
    let mut c = a.spmv_t(&ybar)?;
    for (cj, sj) in c.iter_mut().zip(&sbar) {
        *cj += sj;
    }
    LpProblem::new(a, b, c)
}
