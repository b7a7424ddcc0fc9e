//! Matrix pencils, tolerance-controlled rank decisions and the canonical
//! pencil blocks.
//!
//! A pencil is stored as the coefficient pair `(G, H)` and evaluated as
//! `lambda * G + H`. Descriptor pencils `lambda * E - A` are therefore built
//! with `H = -A`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, count_above, svd_full, zeros, ONE};

/// Dense complex matrix. Real data is embedded with zero imaginary part.
pub type Matrix = DMatrix<Complex64>;

/// Thresholds for rank decisions and residual checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// Singular values at or below `rel_rank_tol * sigma_max * max(rows, cols)`
    /// count as zero.
    pub rel_rank_tol: f64,
    /// Bound used when validating null vectors and reconstructions.
    pub residual_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rel_rank_tol: 1e-9,
            residual_tol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    pub fn new(rel_rank_tol: f64, residual_tol: f64) -> Result<Self> {
        if !(rel_rank_tol > 0.0 && rel_rank_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rel_rank_tol must be positive, got {rel_rank_tol}"
            )));
        }
        if !(residual_tol > 0.0 && residual_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "residual_tol must be positive, got {residual_tol}"
            )));
        }
        Ok(Self {
            rel_rank_tol,
            residual_tol,
        })
    }

    /// Absolute rank threshold for a matrix with the given shape and largest
    /// singular value.
    pub fn threshold(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        self.rel_rank_tol * sigma_max * rows.max(cols) as f64
    }
}

/// The first-degree matrix polynomial `lambda * g + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub g: Matrix,
    pub h: Matrix,
}

impl Pencil {
    pub fn new(g: Matrix, h: Matrix) -> Result<Self> {
        if g.shape() != h.shape() {
            return Err(Error::InvalidArgument(format!(
                "pencil coefficients differ in shape: {:?} vs {:?}",
                g.shape(),
                h.shape()
            )));
        }
        Ok(Self { g, h })
    }

    /// `lambda * e - a`, the descriptor convention.
    pub fn descriptor(e: &Matrix, a: &Matrix) -> Result<Self> {
        Self::new(e.clone(), -a)
    }

    pub fn from_real(g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<Self> {
        Self::new(linalg::to_complex(g), linalg::to_complex(h))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            g: zeros(rows, cols),
            h: zeros(rows, cols),
        }
    }

    pub fn nrows(&self) -> usize {
        self.g.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.g.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.g.shape()
    }

    pub fn eval(&self, lambda: Complex64) -> Matrix {
        &self.g * lambda + &self.h
    }

    /// Entrywise transpose (not the conjugate transpose).
    pub fn transpose(&self) -> Self {
        Self {
            g: self.g.transpose(),
            h: self.h.transpose(),
        }
    }

    /// `left * self * right`.
    pub fn transform(&self, left: &Matrix, right: &Matrix) -> Self {
        Self {
            g: left * &self.g * right,
            h: left * &self.h * right,
        }
    }

    pub fn block_diag(parts: &[Pencil]) -> Self {
        let g: Vec<Matrix> = parts.iter().map(|p| p.g.clone()).collect();
        let h: Vec<Matrix> = parts.iter().map(|p| p.h.clone()).collect();
        Self {
            g: linalg::block_diag(&g),
            h: linalg::block_diag(&h),
        }
    }

    /// Largest of the spectral norms of the two coefficients.
    pub fn scale(&self) -> f64 {
        linalg::spectral_norm(&self.g).max(linalg::spectral_norm(&self.h))
    }
}

/// Numerical rank: the number of singular values above
/// `rel_rank_tol * sigma_max * max(rows, cols)`.
pub fn rank_of(m: &Matrix, cfg: &ToleranceConfig) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = svd_full(m).s;
    let smax = s.first().copied().unwrap_or(0.0);
    count_above(&s, cfg.threshold(smax, m.nrows(), m.ncols()))
}

/// Numerical rank measured against `max(sigma_max, reference)`, for
/// matrices that are a projection of a larger one with norm `reference`.
/// Without it a product that is pure rounding noise looks full rank.
pub fn rank_relative_to(m: &Matrix, reference: f64, cfg: &ToleranceConfig) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = svd_full(m).s;
    let smax = s.first().copied().unwrap_or(0.0).max(reference);
    count_above(&s, cfg.threshold(smax, m.nrows(), m.ncols()))
}

pub fn is_fcr(m: &Matrix, cfg: &ToleranceConfig) -> bool {
    rank_of(m, cfg) == m.ncols()
}

/// Orthonormal basis (as columns) of the right null space of `m`.
pub fn null_basis(m: &Matrix, cfg: &ToleranceConfig) -> Matrix {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        return Matrix::identity(n, n);
    }
    let svd = svd_full(m);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let r = count_above(&svd.s, cfg.threshold(smax, m.nrows(), n));
    linalg::columns(&svd.v, r..n)
}

/// [`null_basis`] with the rank threshold measured against
/// `max(sigma_max, reference)`, as in [`rank_relative_to`].
pub fn null_basis_relative_to(m: &Matrix, reference: f64, cfg: &ToleranceConfig) -> Matrix {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        return Matrix::identity(n, n);
    }
    let svd = svd_full(m);
    let smax = svd.s.first().copied().unwrap_or(0.0).max(reference);
    let r = count_above(&svd.s, cfg.threshold(smax, m.nrows(), n));
    linalg::columns(&svd.v, r..n)
}

/// Right singular vector for the smallest singular value, or `None` for a
/// matrix without columns.
pub fn smallest_right_singular_vector(m: &Matrix) -> Option<Vec<Complex64>> {
    let n = m.ncols();
    if n == 0 {
        return None;
    }
    let svd = svd_full(m);
    // For a wide matrix the trailing columns of v are exact null directions.
    Some(svd.v.column(n - 1).iter().copied().collect())
}

/// The four Kronecker block families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// `lambda * I + shift`, eigenvalue zero.
    K,
    /// `lambda * shift + I`, eigenvalue at infinity.
    N,
    /// `m x (m+1)` right singular block.
    L,
    /// `(m+1) x m` left singular block.
    J,
}

/// Upper shift: ones on the first superdiagonal.
fn upper_shift(m: usize) -> Matrix {
    Matrix::from_fn(m, m, |i, j| if j == i + 1 { ONE } else { linalg::ZERO })
}

/// Builds `K_m`, `N_m`, `L_m` or `J_m`.
pub fn make_canonical_block(kind: BlockKind, m: usize) -> Result<Pencil> {
    match kind {
        BlockKind::K | BlockKind::N if m == 0 => Err(Error::InvalidArgument(format!(
            "{kind:?} blocks need a positive size"
        ))),
        BlockKind::K => Ok(Pencil {
            g: Matrix::identity(m, m),
            h: upper_shift(m),
        }),
        BlockKind::N => Ok(Pencil {
            g: upper_shift(m),
            h: Matrix::identity(m, m),
        }),
        BlockKind::L => {
            // [K_m | e_m]: G = [I 0], H = [0 I].
            let g = Matrix::from_fn(m, m + 1, |i, j| if i == j { ONE } else { linalg::ZERO });
            let h = Matrix::from_fn(m, m + 1, |i, j| if j == i + 1 { ONE } else { linalg::ZERO });
            Ok(Pencil { g, h })
        }
        BlockKind::J => Ok(make_canonical_block(BlockKind::L, m)?.transpose()),
    }
}

/// Basis of `Null(K_m(0))`: the first unit vector.
#[allow(non_snake_case)]
pub fn analytic_null_K_at_zero(m: usize) -> Matrix {
    let mut out = zeros(m, 1);
    if m > 0 {
        out[(0, 0)] = ONE;
    }
    out
}

/// The column `(1, -lambda, lambda^2, ..., (-lambda)^m)` spanning
/// `Null(L_m(lambda))`.
#[allow(non_snake_case)]
pub fn analytic_null_L(m: usize, lambda: Complex64) -> Matrix {
    let mut out = zeros(m + 1, 1);
    let mut p = ONE;
    for k in 0..=m {
        out[(k, 0)] = p;
        p *= -lambda;
    }
    out
}

/// Whether `[m1; m2]` has full column rank, decided through
/// `m2 * null(m1)`.
pub fn fcr_after_reduction(m1: &Matrix, m2: &Matrix, cfg: &ToleranceConfig) -> Result<bool> {
    check_same_cols(m1, m2)?;
    let n1 = null_basis(m1, cfg);
    if n1.ncols() == 0 {
        return Ok(true);
    }
    let reduced = m2 * &n1;
    Ok(rank_relative_to(&reduced, stacked_norm(m1, m2), cfg) == n1.ncols())
}

/// Null space of `[m1; m2]` assembled as `null(m1) * null(m2 * null(m1))`.
pub fn null_via_composition(m1: &Matrix, m2: &Matrix, cfg: &ToleranceConfig) -> Result<Matrix> {
    check_same_cols(m1, m2)?;
    let n1 = null_basis(m1, cfg);
    if n1.ncols() == 0 {
        return Ok(n1);
    }
    let n2 = null_basis_relative_to(&(m2 * &n1), stacked_norm(m1, m2), cfg);
    Ok(n1 * n2)
}

fn stacked_norm(m1: &Matrix, m2: &Matrix) -> f64 {
    linalg::spectral_norm(m1).hypot(linalg::spectral_norm(m2))
}

fn check_same_cols(m1: &Matrix, m2: &Matrix) -> Result<()> {
    if m1.ncols() != m2.ncols() {
        return Err(Error::InvalidArgument(format!(
            "stacked blocks need equal column counts ({} vs {})",
            m1.ncols(),
            m2.ncols()
        )));
    }
    Ok(())
}
