//! Dense complex helpers shared by the pencil and Kronecker modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::pencil::Matrix;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub(crate) fn cplx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> Matrix {
    m.map(cplx)
}

pub(crate) fn zeros(r: usize, c: usize) -> Matrix {
    Matrix::zeros(r, c)
}

pub(crate) fn eye(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

/// Singular value decomposition with a full right factor.
///
/// `s` is sorted descending, `u` holds `min(rows, cols)` left vectors
/// (only the first `rank` of them are meaningful when `rows < cols`) and
/// `v` is a full `cols x cols` unitary matrix whose columns are the right
/// singular vectors in the same order as `s`.
pub(crate) struct FullSvd {
    pub s: Vec<f64>,
    pub u: Matrix,
    pub v: Matrix,
}

pub(crate) fn svd_full(m: &Matrix) -> FullSvd {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return FullSvd {
            s: Vec::new(),
            u: zeros(r, 0),
            v: eye(c),
        };
    }
    // faer's complex SVD occasionally fails to converge on exactly
    // structured input; retry on `m * Q` for a fixed reflector `Q`.
    let mut q = None;
    let mut attempt = 0;
    let svd = loop {
        let fm = faer::Mat::<Complex64>::from_fn(r, c, |i, j| m[(i, j)]);
        let fm = match &q {
            None => fm,
            Some(q) => fm * q,
        };
        match fm.svd() {
            Ok(svd) => break svd,
            Err(e) if attempt == RETRIES => panic!("svd iteration does not converge: {e:?}"),
            Err(_) => {
                attempt += 1;
                q = Some(reflector(c, attempt));
            }
        }
    };
    let k = r.min(c);
    let sd = svd.S().column_vector();
    let mut s: Vec<f64> = (0..k).map(|i| sd[i].re).collect();
    // Wide inputs get trailing zeros so `s` lines up with the columns of `v`.
    s.resize(c, 0.0);
    let fu = svd.U();
    let fv = match &q {
        None => svd.V().to_owned(),
        Some(q) => q * svd.V(),
    };
    let u = Matrix::from_fn(r, k, |i, j| fu[(i, j)]);
    let v = Matrix::from_fn(c, c, |i, j| fv[(i, j)]);
    FullSvd { s, u, v }
}

/// Eigenvalues of a square complex matrix.
pub(crate) fn eigenvalues(m: &Matrix) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let fm = faer::Mat::<Complex64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut attempt = 0;
    loop {
        let trial = if attempt == 0 {
            fm.clone()
        } else {
            // Unitary similarity keeps the spectrum.
            let q = reflector(n, attempt);
            &q * &fm * q.adjoint()
        };
        match trial.eigenvalues() {
            Ok(ev) => return ev,
            Err(e) if attempt == RETRIES => panic!("eigenvalue iteration does not converge: {e:?}"),
            Err(_) => attempt += 1,
        }
    }
}

const RETRIES: usize = 4;

/// Householder reflector `I - 2 w w^H / |w|^2` with a deterministic dense
/// `w` that depends on `seed`.
fn reflector(n: usize, seed: usize) -> faer::Mat<Complex64> {
    let w: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = (i + 1) as f64 * (0.7 + seed as f64);
            Complex64::new(1.0 + 0.5 * t.sin(), 0.3 * t.cos())
        })
        .collect();
    let nn: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    faer::Mat::from_fn(n, n, |i, j| {
        let d = if i == j { ONE } else { ZERO };
        d - w[i] * w[j].conj() * (2.0 / nn)
    })
}

pub(crate) fn count_above(s: &[f64], tol: f64) -> usize {
    s.iter().filter(|&&x| x > tol).count()
}

pub(crate) fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    svd_full(m).s.first().copied().unwrap_or(0.0)
}

pub(crate) fn columns(m: &Matrix, idx: std::ops::Range<usize>) -> Matrix {
    m.columns(idx.start, idx.len()).into_owned()
}

pub(crate) fn rows(m: &Matrix, idx: std::ops::Range<usize>) -> Matrix {
    m.rows(idx.start, idx.len()).into_owned()
}

pub(crate) fn block(m: &Matrix, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> Matrix {
    m.view((r.start, c.start), (r.len(), c.len())).into_owned()
}

pub fn hstack(parts: &[&Matrix]) -> Matrix {
    let rows = parts.first().map(|p| p.nrows()).unwrap_or(0);
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, off), (rows, p.ncols())).copy_from(*p);
        off += p.ncols();
    }
    out
}

pub fn vstack(parts: &[&Matrix]) -> Matrix {
    let cols = parts.first().map(|p| p.ncols()).unwrap_or(0);
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((off, 0), (p.nrows(), cols)).copy_from(*p);
        off += p.nrows();
    }
    out
}

pub fn block_diag(parts: &[Matrix]) -> Matrix {
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut ro, mut co) = (0, 0);
    for p in parts {
        out.view_mut((ro, co), p.shape()).copy_from(p);
        ro += p.nrows();
        co += p.ncols();
    }
    out
}

/// Inverse of a square matrix, `None` when LU breaks down.
pub(crate) fn inverse(m: &Matrix) -> Option<Matrix> {
    if m.nrows() == 0 {
        return Some(zeros(0, 0));
    }
    m.clone().try_inverse()
}

/// Reciprocal condition number in the 2-norm; 0 for singular, 1 for empty.
pub(crate) fn rcond(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let s = svd_full(m).s;
    let hi = s.first().copied().unwrap_or(0.0);
    let lo = s.get(m.nrows().min(m.ncols()) - 1).copied().unwrap_or(0.0);
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Minimum-norm least-squares solution of `a x = b`, discarding singular
/// values at or below `tol`.
pub(crate) fn lstsq_min_norm(a: &Matrix, b: &Matrix, tol: f64) -> Matrix {
    let (r, c) = a.shape();
    let mut x = zeros(c, b.ncols());
    if r == 0 || c == 0 {
        return x;
    }
    let svd = svd_full(a);
    for k in 0..r.min(c) {
        let s = svd.s[k];
        if s <= tol {
            break;
        }
        let uk = svd.u.column(k);
        let vk = svd.v.column(k);
        for j in 0..b.ncols() {
            let coef = uk.dotc(&b.column(j)) / s;
            for i in 0..c {
                x[(i, j)] += vk[i] * coef;
            }
        }
    }
    x
}

pub(crate) fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
