//! Exterior powers of real matrices.
//!
//! Multi-indices are strictly increasing k-subsets of `0..d` in
//! lexicographic order. For d = 3, k = 2 the basis is
//! (e1^e2, e1^e3, e2^e3) and the additive compound of A reads
//!
//! ```text
//! [ a11+a22   a23      -a13    ]
//! [ a32       a11+a33   a12    ]
//! [ -a31      a21       a22+a33]
//! ```
//!
//! which is the generator of t -> wedge^2 exp(tA). Entry (I, J) of the
//! multiplicative compound is the minor of M on rows I and columns J.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type RealMatrix = DMatrix<f64>;

/// Relative floor below which a singular value counts as zero.
pub const SINGULAR_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("order {k} out of range for dimension {d}")]
    OrderOutOfRange { k: usize, d: usize },
    #[error("matrix is numerically singular (sigma_min={sigma_min:e}, sigma_max={sigma_max:e})")]
    Singular { sigma_min: f64, sigma_max: f64 },
    #[error("subspace basis is degenerate (gram determinant {gram_det:e})")]
    DegenerateBasis { gram_det: f64 },
    #[error("frame is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry encountered")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A list of vectors spanning a subspace of R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    ambient_dim: usize,
    columns: RealMatrix,
}

impl SubspaceBasis {
    pub fn new(ambient_dim: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        let mut columns = RealMatrix::zeros(ambient_dim, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            if v.len() != ambient_dim {
                return Err(LinalgError::DimensionMismatch { expected: ambient_dim, got: v.len() });
            }
            for (i, x) in v.iter().enumerate() {
                columns[(i, j)] = *x;
            }
        }
        Self::from_columns(columns)
    }

    /// Vectors are the columns of `columns`.
    pub fn from_columns(columns: RealMatrix) -> Result<Self> {
        if columns.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let basis = Self { ambient_dim: columns.nrows(), columns };
        let g = basis.gram_det();
        if !(g > 0.0) || g < f64::EPSILON * basis.scale().powi(2 * basis.dim() as i32) {
            return Err(LinalgError::DegenerateBasis { gram_det: g });
        }
        Ok(basis)
    }

    /// Coordinate subspace spanned by the listed standard basis vectors.
    pub fn coordinate(ambient_dim: usize, axes: &[usize]) -> Result<Self> {
        let mut columns = RealMatrix::zeros(ambient_dim, axes.len());
        for (j, &a) in axes.iter().enumerate() {
            if a >= ambient_dim {
                return Err(LinalgError::DimensionMismatch { expected: ambient_dim, got: a + 1 });
            }
            columns[(a, j)] = 1.0;
        }
        Self::from_columns(columns)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &RealMatrix {
        &self.columns
    }

    pub fn gram_det(&self) -> f64 {
        gram_matrix(&self.columns).determinant()
    }

    fn scale(&self) -> f64 {
        self.columns.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE)
    }
}

pub fn gram_matrix(b: &RealMatrix) -> RealMatrix {
    b.transpose() * b
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All strictly increasing k-subsets of `0..d`, lexicographically ordered.
pub fn multi_indices(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(d, k));
    if k == 0 || k > d {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < d - k + pos {
                idx[pos] += 1;
                for q in pos + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
    }
}

fn check_square(a: &RealMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

fn check_order(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(LinalgError::OrderOutOfRange { k, d });
    }
    Ok(())
}

/// Sorts `v` in place and returns the sign of the sorting permutation,
/// or 0 if `v` has a repeated entry.
fn sort_with_sign(v: &mut [usize]) -> i32 {
    let mut sign = 1;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        0
    } else {
        sign
    }
}

fn index_of(indices: &[Vec<usize>], key: &[usize]) -> usize {
    indices
        .binary_search_by(|probe| probe.as_slice().cmp(key))
        .expect("multi-index present by construction")
}

/// Additive compound A^[k]: the derivative at t = 0 of wedge^k exp(tA).
///
/// Column J is A acting as a derivation on e_J:
/// sum over positions m of e_{j1} ^ ... ^ (A e_{jm}) ^ ... ^ e_{jk}.
pub fn additive_compound(a: &RealMatrix, k: usize) -> Result<RealMatrix> {
    let d = check_square(a)?;
    check_order(k, d)?;
    let idx = multi_indices(d, k);
    let n = idx.len();
    let mut out = RealMatrix::zeros(n, n);
    let mut buf = vec![0usize; k];
    for (col, jset) in idx.iter().enumerate() {
        for m in 0..k {
            for i in 0..d {
                let aij = a[(i, jset[m])];
                if aij == 0.0 {
                    continue;
                }
                buf.copy_from_slice(jset);
                buf[m] = i;
                let sign = sort_with_sign(&mut buf);
                if sign == 0 {
                    continue;
                }
                let row = index_of(&idx, &buf);
                out[(row, col)] += sign as f64 * aij;
            }
        }
    }
    Ok(out)
}

/// Multiplicative compound: the matrix of k x k minors.
pub fn multiplicative_compound(m: &RealMatrix, k: usize) -> Result<RealMatrix> {
    let d = check_square(m)?;
    check_order(k, d)?;
    let idx = multi_indices(d, k);
    let n = idx.len();
    let mut out = RealMatrix::zeros(n, n);
    let mut sub = RealMatrix::zeros(k, k);
    for (r, rows) in idx.iter().enumerate() {
        for (c, cols) in idx.iter().enumerate() {
            for (p, &i) in rows.iter().enumerate() {
                for (q, &j) in cols.iter().enumerate() {
                    sub[(p, q)] = m[(i, j)];
                }
            }
            out[(r, c)] = small_det(&sub);
        }
    }
    Ok(out)
}

fn small_det(m: &RealMatrix) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => m.clone().determinant(),
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &RealMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn spectral_norm(m: &RealMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// log of the operator norm of wedge^p(M^-1), i.e. minus the sum of the
/// logs of the p smallest singular values of M.
pub fn log_wedge_inv_norm(m: &RealMatrix, p: usize) -> Result<f64> {
    let d = check_square(m)?;
    if p < 1 || p > d {
        return Err(LinalgError::OrderOutOfRange { k: p, d });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let s = singular_values(m);
    let smax = s[0];
    let smin = s[d - 1];
    if !(smin > SINGULAR_REL_TOL * smax) {
        return Err(LinalgError::Singular { sigma_min: smin, sigma_max: smax });
    }
    Ok(-s[d - p..].iter().map(|x| x.ln()).sum::<f64>())
}

/// Operator norm of wedge^p(M^-1) for 2 <= p <= d.
pub fn wedge_inv_norm(m: &RealMatrix, p: usize) -> Result<f64> {
    let d = check_square(m)?;
    if p < 2 || p > d {
        return Err(LinalgError::OrderOutOfRange { k: p, d });
    }
    log_wedge_inv_norm(m, p).map(f64::exp)
}

/// Unsigned volume factor of M on span(B).
pub fn det_on_subspace(m: &RealMatrix, b: &SubspaceBasis) -> Result<f64> {
    let d = check_square(m)?;
    if d != b.ambient_dim() {
        return Err(LinalgError::DimensionMismatch { expected: b.ambient_dim(), got: d });
    }
    let g0 = b.gram_det();
    if !(g0 > 0.0) {
        return Err(LinalgError::DegenerateBasis { gram_det: g0 });
    }
    let mb = m * b.columns();
    let g1 = gram_matrix(&mb).determinant().max(0.0);
    Ok((g1 / g0).sqrt())
}

/// Thin QR with positive diagonal: returns Q (d x r, orthonormal columns)
/// and log R_ii.
pub fn qr_renormalize(f: &RealMatrix) -> Result<(RealMatrix, Vec<f64>)> {
    let (d, r) = (f.nrows(), f.ncols());
    if r > d {
        return Err(LinalgError::RankDeficient { column: d });
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    // Modified Gram-Schmidt twice: accurate for the small, moderately
    // conditioned frames that appear here, and keeps the sign convention
    // R_ii > 0 without post-processing.
    let mut q = f.clone();
    let mut logs = vec![0.0; r];
    let scale = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for j in 0..r {
        let mut norm_acc = 0.0;
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                let mut cj = q.column_mut(j);
                cj.axpy(-proj, &qi, 1.0);
            }
            let n = q.column(j).norm();
            if !(n > SINGULAR_REL_TOL * scale) || n == 0.0 {
                return Err(LinalgError::RankDeficient { column: j });
            }
            q.column_mut(j).scale_mut(1.0 / n);
            norm_acc += n.ln();
        }
        logs[j] = norm_acc;
    }
    Ok((q, logs))
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &RealMatrix) -> Result<Vec<Complex<f64>>> {
    check_square(m)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(m.clone().complex_eigenvalues().iter().copied().collect())
}

/// Matrix exponential by scaling and squaring with a Taylor core.
/// Used as an oracle for linear flows.
pub fn expm(a: &RealMatrix) -> Result<RealMatrix> {
    let d = check_square(a)?;
    let norm = a.iter().fold(0.0f64, |m, x| m + x.abs());
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let b = a / 2f64.powi(s);
    let mut term = RealMatrix::identity(d, d);
    let mut sum = RealMatrix::identity(d, d);
    for n in 1..30 {
        term = &term * &b / n as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    Ok(sum)
}

pub fn from_rows(rows: &[&[f64]]) -> RealMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    RealMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn diag(values: &[f64]) -> RealMatrix {
    RealMatrix::from_diagonal(&DVector::from_column_slice(values))
}
