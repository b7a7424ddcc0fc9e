//! Kronecker canonical form of arbitrary pencils.
//!
//! The reduction runs in three stages. Wong sequences split the pencil into
//! a block upper triangular form whose diagonal parts carry only L blocks,
//! a regular pencil, and only J blocks. Each part is then brought to
//! canonical form on its own: minimal polynomial null bases for the singular
//! parts, and a second Wong split followed by Jordan chains for the regular
//! part. Finally the off-diagonal coupling is removed with small generalized
//! Sylvester solves, one per pair of canonical blocks.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    block, block_diag, columns, count_above, eye, frobenius, hstack, inverse, lstsq_min_norm, rows,
    spectral_norm, svd_full, zeros, ONE, ZERO,
};
use crate::pencil::{analytic_null_K_at_zero, analytic_null_L, make_canonical_block, null_basis};
use crate::pencil::{BlockKind, Matrix, Pencil, ToleranceConfig};

/// Block sizes and transforms with `P = U * Psi * V`, where `Psi` is block
/// diagonal in the order `(H_reg, K..., L..., N..., J...)`.
#[derive(Debug, Clone)]
pub struct KroneckerStructure {
    pub mu: usize,
    pub xi: Vec<usize>,
    pub eta: Vec<usize>,
    pub kappa: Vec<usize>,
    pub rho: Vec<usize>,
    pub u: Matrix,
    pub v: Matrix,
    /// Strictly regular part, `mu x mu`.
    pub h_reg: Pencil,
}

/// Points where a pencil built from the leading blocks may lose column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularPointSet {
    pub whole_plane: bool,
    pub points: Vec<Complex64>,
}

impl KroneckerStructure {
    pub fn a(&self) -> usize {
        self.xi.len()
    }

    pub fn b(&self) -> usize {
        self.eta.len()
    }

    pub fn c(&self) -> usize {
        self.kappa.len()
    }

    pub fn d(&self) -> usize {
        self.rho.len()
    }

    pub fn nrows(&self) -> usize {
        self.mu
            + self.xi.iter().sum::<usize>()
            + self.kappa.iter().sum::<usize>()
            + self.eta.iter().sum::<usize>()
            + self.rho.iter().map(|r| r + 1).sum::<usize>()
    }

    pub fn ncols(&self) -> usize {
        self.mu
            + self.xi.iter().sum::<usize>()
            + self.kappa.iter().map(|k| k + 1).sum::<usize>()
            + self.eta.iter().sum::<usize>()
            + self.rho.iter().sum::<usize>()
    }

    /// Block-diagonal `Psi` assembled from the stored sizes and `h_reg`.
    pub fn canonical_pencil(&self) -> Pencil {
        let mut parts = vec![self.h_reg.clone()];
        let mut push = |kind, sizes: &[usize]| {
            for &m in sizes {
                parts.push(make_canonical_block(kind, m).expect("stored block sizes are valid"));
            }
        };
        push(BlockKind::K, &self.xi);
        push(BlockKind::L, &self.kappa);
        push(BlockKind::N, &self.eta);
        push(BlockKind::J, &self.rho);
        Pencil::block_diag(&parts)
    }

    /// Sorted copies of the block-size lists, handy for comparisons.
    pub fn invariants(&self) -> (usize, Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
        let sorted = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v
        };
        (
            self.mu,
            sorted(&self.xi),
            sorted(&self.eta),
            sorted(&self.kappa),
            sorted(&self.rho),
        )
    }
}

/// `mu + sum(xi) + sum(kappa)`.
pub fn leading_width(ks: &KroneckerStructure) -> usize {
    ks.mu + ks.xi.iter().sum::<usize>() + ks.kappa.iter().sum::<usize>()
}

/// Number of columns spanned by the `(H_reg, K, L)` blocks,
/// `mu + sum(xi) + sum(kappa + 1)`. Equals [`leading_width`] when there are
/// no L blocks.
pub fn leading_cols(ks: &KroneckerStructure) -> usize {
    ks.mu + ks.xi.iter().sum::<usize>() + ks.kappa.iter().map(|k| k + 1).sum::<usize>()
}

/// Largest relative error of `U * Psi(lambda) * V` against `lambda*G + H`
/// over the sample points.
pub fn reconstruct_residual(ks: &KroneckerStructure, p: &Pencil, samples: &[Complex64]) -> f64 {
    let psi = ks.canonical_pencil();
    let scale = frobenius(&p.g) + frobenius(&p.h);
    samples
        .iter()
        .map(|&lam| {
            let rebuilt = &ks.u * psi.eval(lam) * &ks.v;
            let err = frobenius(&(rebuilt - p.eval(lam)));
            let denom = (1.0 + lam.norm()) * scale;
            if denom > 0.0 {
                err / denom
            } else {
                err
            }
        })
        .fold(0.0, f64::max)
}

/// Generalized eigenvalues of the strictly regular part, plus zero when K
/// blocks are present; the whole plane when L blocks are present.
pub fn singular_points(ks: &KroneckerStructure, cfg: &ToleranceConfig) -> SingularPointSet {
    if ks.c() > 0 {
        return SingularPointSet {
            whole_plane: true,
            points: Vec::new(),
        };
    }
    let mut points = Vec::new();
    if ks.mu > 0 {
        let eigs = regular_eigenvalues(&ks.h_reg);
        let centroids = cluster_centroids(&eigs, ks.mu);
        points.extend(eigs);
        points.extend(centroids);
    }
    if ks.a() > 0 {
        points.push(ZERO);
    }
    SingularPointSet {
        whole_plane: false,
        points: merge_points(points, cfg.rel_rank_tol),
    }
}

/// Means of groups of computed eigenvalues that lie close together. A
/// defective eigenvalue of multiplicity `k` comes back spread over a
/// circle of radius about `eps^(1/k)`, while the mean of the group stays
/// accurate, so it is tested as well.
fn cluster_centroids(eigs: &[Complex64], mu: usize) -> Vec<Complex64> {
    let radius = (100.0 * f64::EPSILON.powf(1.0 / mu as f64)).min(1e-3);
    let mut seen = vec![false; eigs.len()];
    let mut out = Vec::new();
    for i in 0..eigs.len() {
        if seen[i] {
            continue;
        }
        let group: Vec<usize> = (i..eigs.len())
            .filter(|&j| !seen[j] && (eigs[j] - eigs[i]).norm() <= radius * (1.0 + eigs[i].norm()))
            .collect();
        if group.len() > 1 {
            let sum: Complex64 = group.iter().map(|&j| eigs[j]).sum();
            out.push(sum / group.len() as f64);
        }
        for j in group {
            seen[j] = true;
        }
    }
    out
}

fn regular_eigenvalues(p: &Pencil) -> Vec<Complex64> {
    let ginv = match inverse(&p.g) {
        Some(g) => g,
        None => return Vec::new(),
    };
    crate::linalg::eigenvalues(&-(ginv * &p.h))
}

/// Drops points within `tol * (1 + |lambda|)` of an earlier point, keeping
/// first occurrences.
pub fn merge_points(points: Vec<Complex64>, tol: f64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::with_capacity(points.len());
    for p in points {
        if !out
            .iter()
            .any(|q| (p - q).norm() <= tol * (1.0 + p.norm().max(q.norm())))
        {
            out.push(p);
        }
    }
    out
}

/// Basis of the null space of `diag(H_reg(l0), K(l0)..., L(l0)...)`, with
/// `leading_cols(ks)` rows.
pub fn reduced_null_basis(ks: &KroneckerStructure, l0: Complex64, cfg: &ToleranceConfig) -> Matrix {
    let mut parts = Vec::new();
    parts.push(null_basis(&ks.h_reg.eval(l0), cfg));
    let at_zero = l0.norm() <= cfg.rel_rank_tol;
    for &m in &ks.xi {
        parts.push(if at_zero {
            analytic_null_K_at_zero(m)
        } else {
            zeros(m, 0)
        });
    }
    for &k in &ks.kappa {
        parts.push(analytic_null_L(k, l0));
    }
    block_diag(&parts)
}

/// The first `leading_cols(ks)` columns of `V^-1`.
pub fn v_inverse_leading(ks: &KroneckerStructure) -> Result<Matrix> {
    let n = ks.v.ncols();
    if crate::linalg::rcond(&ks.v) <= f64::EPSILON * n.max(1) as f64 {
        return Err(Error::Conditioning(
            "right transform is numerically singular".into(),
        ));
    }
    let vinv = inverse(&ks.v)
        .ok_or_else(|| Error::Conditioning("right transform is not invertible".into()))?;
    Ok(columns(&vinv, 0..leading_cols(ks).min(n)))
}

/// Rank decisions with a gap check at the cut.
struct Cut {
    rel: f64,
}

impl Cut {
    fn count(&self, s: &[f64], scale: f64, r: usize, c: usize) -> Result<usize> {
        let tol = self.rel * scale * r.max(c) as f64;
        let k = count_above(s, tol);
        if k > 0 && k < s.len() && s[k - 1] < 10.0 * s[k] {
            return Err(Error::Conditioning(format!(
                "rank decision is ambiguous: singular values {:.3e} and {:.3e} straddle {:.3e}",
                s[k - 1],
                s[k],
                tol
            )));
        }
        Ok(k)
    }

    /// Orthonormal basis of the column space.
    fn orth(&self, m: &Matrix, scale: f64) -> Result<Matrix> {
        if m.ncols() == 0 || m.nrows() == 0 {
            return Ok(zeros(m.nrows(), 0));
        }
        let svd = svd_full(m);
        let k = self.count(&svd.s, scale, m.nrows(), m.ncols())?;
        Ok(columns(&svd.u, 0..k))
    }

    /// Orthonormal basis of the right null space.
    fn null(&self, m: &Matrix, scale: f64) -> Result<Matrix> {
        let n = m.ncols();
        if m.nrows() == 0 || n == 0 {
            return Ok(eye(n));
        }
        let svd = svd_full(m);
        let k = self.count(&svd.s, scale, m.nrows(), n)?;
        Ok(columns(&svd.v, k..n))
    }

    /// Orthonormal vectors of `span(b)` orthogonal to the orthonormal `q`.
    fn complement(&self, b: &Matrix, q: &Matrix) -> Result<Matrix> {
        if q.ncols() == 0 {
            return self.orth(b, 1.0);
        }
        self.orth(&(b - q * (q.adjoint() * b)), 1.0)
    }
}

/// Orthonormal basis of the orthogonal complement of the orthonormal `q`.
fn full_complement(q: &Matrix) -> Matrix {
    let n = q.nrows();
    let k = q.ncols();
    if k == 0 {
        return eye(n);
    }
    let svd = svd_full(&q.adjoint());
    columns(&svd.v, k..n)
}

fn project_out(q: &Matrix, m: &Matrix) -> Matrix {
    if q.ncols() == 0 {
        m.clone()
    } else {
        m - q * (q.adjoint() * m)
    }
}

/// Limits of the Wong sequences as orthonormal bases `(V*, W*)`.
fn wong(g: &Matrix, h: &Matrix, cut: &Cut) -> Result<(Matrix, Matrix)> {
    let n = g.ncols();
    let mut vb = eye(n);
    for _ in 0..=n {
        let q = cut.orth(&(g * &vb), 1.0)?;
        let next = cut.null(&project_out(&q, h), 1.0)?;
        let done = next.ncols() == vb.ncols();
        vb = next;
        if done {
            break;
        }
    }
    let mut wb = zeros(n, 0);
    for _ in 0..=n {
        let q = cut.orth(&(h * &wb), 1.0)?;
        let next = cut.null(&project_out(&q, g), 1.0)?;
        let done = next.ncols() == wb.ncols();
        wb = next;
        if done {
            break;
        }
    }
    Ok((vb, wb))
}

/// Output of a per-part canonicalization: `P * zr = ul * Psi_part`.
struct PartForm {
    ul: Matrix,
    zr: Matrix,
}

/// Minimal polynomial null basis of a pencil with only L blocks. Returns the
/// transforms and the block sizes in increasing order.
fn l_part(g: &Matrix, h: &Matrix, cut: &Cut) -> Result<(PartForm, Vec<usize>)> {
    let (m, n) = g.shape();
    if n < m {
        return Err(Error::Conditioning(
            "right singular part has more rows than columns".into(),
        ));
    }
    let c = n - m;
    // Each entry holds the coefficient vectors x_0..x_d of a null vector.
    let mut found: Vec<Vec<Matrix>> = Vec::new();
    let mut prev_cum = 0usize;
    let mut prev_dim = 0usize;
    let mut d = 0usize;
    while found.len() < c {
        if d > m + 1 {
            return Err(Error::Conditioning(
                "minimal indices did not terminate".into(),
            ));
        }
        let t = toeplitz(g, h, d);
        let nb = cut.null(&t, 1.0)?;
        let dim = nb.ncols();
        let cum = dim
            .checked_sub(prev_dim)
            .ok_or_else(|| Error::Conditioning("null space dimensions are not monotone".into()))?;
        let new = cum
            .checked_sub(prev_cum)
            .ok_or_else(|| Error::Conditioning("minimal index counts are not monotone".into()))?;
        if new > 0 {
            let mut shifts = Vec::new();
            for x in &found {
                let e = x.len() - 1;
                for j in 0..=(d - e) {
                    let mut col = zeros((d + 1) * n, 1);
                    for (k, xk) in x.iter().enumerate() {
                        col.view_mut(((j + k) * n, 0), (n, 1)).copy_from(xk);
                    }
                    shifts.push(col);
                }
            }
            let sref: Vec<&Matrix> = shifts.iter().collect();
            let s = if sref.is_empty() {
                zeros((d + 1) * n, 0)
            } else {
                cut.orth(&hstack(&sref), 1.0)?
            };
            let comp = cut.complement(&nb, &s)?;
            if comp.ncols() != new {
                return Err(Error::Conditioning(format!(
                    "expected {new} new minimal vectors of degree {d}, found {}",
                    comp.ncols()
                )));
            }
            for j in 0..new {
                let col = comp.column(j);
                let coeffs = (0..=d)
                    .map(|k| col.rows(k * n, n).into_owned())
                    .map(|v| Matrix::from_column_slice(n, 1, v.as_slice()))
                    .collect();
                found.push(coeffs);
            }
        }
        prev_cum = cum;
        prev_dim = dim;
        d += 1;
    }
    if found.len() != c {
        return Err(Error::Conditioning("too many minimal vectors".into()));
    }
    let mut zcols = Vec::new();
    let mut ucols = Vec::new();
    let mut sizes = Vec::new();
    for x in &found {
        let eps = x.len() - 1;
        sizes.push(eps);
        let z: Vec<Matrix> = x
            .iter()
            .enumerate()
            .map(|(k, xk)| if k % 2 == 0 { xk.clone() } else { -xk })
            .collect();
        for zk in z.iter().take(eps) {
            ucols.push(g * zk);
        }
        zcols.extend(z);
    }
    if zcols.len() != n || ucols.len() != m {
        return Err(Error::Conditioning(
            "minimal indices do not account for the part's shape".into(),
        ));
    }
    let zr = stack_cols(&zcols, n);
    let ul = stack_cols(&ucols, m);
    Ok((PartForm { ul, zr }, sizes))
}

fn stack_cols(cols: &[Matrix], rows: usize) -> Matrix {
    if cols.is_empty() {
        return zeros(rows, 0);
    }
    let r: Vec<&Matrix> = cols.iter().collect();
    hstack(&r)
}

/// Block Toeplitz map sending `(x_0, ..., x_d)` to the coefficients of
/// `(lambda*G + H) * sum(lambda^k x_k)`.
fn toeplitz(g: &Matrix, h: &Matrix, d: usize) -> Matrix {
    let (m, n) = g.shape();
    let mut t = zeros((d + 2) * m, (d + 1) * n);
    for k in 0..=d {
        t.view_mut((k * m, k * n), (m, n)).copy_from(h);
        t.view_mut(((k + 1) * m, k * n), (m, n)).copy_from(g);
    }
    t
}

/// Jordan chains of a nilpotent matrix. Columns are ordered so that
/// `T * B = B * diag(shift_s...)`; returns the basis and the chain lengths in
/// decreasing order.
fn nilpotent_chains(t: &Matrix, cut: &Cut) -> Result<(Matrix, Vec<usize>)> {
    let n = t.nrows();
    if n == 0 {
        return Ok((zeros(0, 0), Vec::new()));
    }
    let scale = spectral_norm(t).max(1.0);
    let kers = kernel_chain(t, scale, cut)?;
    if kers.last().map(|k| k.ncols()) != Some(n) {
        return Err(Error::Conditioning("block is not nilpotent".into()));
    }
    let depth = kers.len() - 1;
    // at_least[j] = number of chains with length >= j
    let at_least: Vec<usize> = (0..=depth)
        .map(|j| {
            if j == 0 {
                0
            } else {
                kers[j].ncols() - kers[j - 1].ncols()
            }
        })
        .collect();
    let mut tops: Vec<(Matrix, usize)> = Vec::new();
    for j in (1..=depth).rev() {
        let longer = tops.len();
        let needed = at_least[j]
            .checked_sub(longer)
            .ok_or_else(|| Error::Conditioning("inconsistent Jordan structure".into()))?;
        if needed == 0 {
            continue;
        }
        let mut span = vec![kers[j - 1].clone()];
        for (top, s) in &tops {
            let mut w = top.clone();
            for _ in 0..(s - j) {
                w = t * w;
            }
            span.push(w);
        }
        let sref: Vec<&Matrix> = span.iter().collect();
        let existing = cut.orth(&hstack(&sref), 1.0)?;
        let comp = cut.complement(&kers[j], &existing)?;
        if comp.ncols() != needed {
            return Err(Error::Conditioning(format!(
                "expected {needed} Jordan chains of length {j}, found {}",
                comp.ncols()
            )));
        }
        for c in 0..needed {
            tops.push((columns(&comp, c..c + 1), j));
        }
    }
    let mut basis = Vec::new();
    let mut sizes = Vec::new();
    for (top, s) in &tops {
        let mut chain = vec![top.clone()];
        for _ in 1..*s {
            let next = t * chain.last().unwrap();
            chain.push(next);
        }
        chain.reverse();
        basis.extend(chain);
        sizes.push(*s);
    }
    Ok((stack_cols(&basis, n), sizes))
}

/// `ker(T^0) ⊂ ker(T^1) ⊂ ...` until the dimension stops growing.
fn kernel_chain(t: &Matrix, scale: f64, cut: &Cut) -> Result<Vec<Matrix>> {
    let n = t.nrows();
    let mut kers = vec![zeros(n, 0)];
    loop {
        let last = kers.last().unwrap();
        let next = cut.null(&project_out(last, t), scale)?;
        if next.ncols() <= last.ncols() {
            break;
        }
        let full = next.ncols() == n;
        kers.push(next);
        if full {
            break;
        }
    }
    Ok(kers)
}

/// Stable range `range(T^k)` for large `k`.
fn range_chain(t: &Matrix, scale: f64, cut: &Cut) -> Result<Matrix> {
    let n = t.nrows();
    let mut r = eye(n);
    loop {
        let next = if r.ncols() == 0 {
            r.clone()
        } else {
            let img = t * &r;
            let svd = svd_full(&img);
            let k = cut.count(&svd.s, scale, img.nrows(), img.ncols())?;
            columns(&svd.u, 0..k)
        };
        if next.ncols() == r.ncols() {
            return Ok(next);
        }
        r = next;
    }
}

/// Canonical split of a regular pencil: returns the transforms and the sizes
/// `(mu, xi, eta)`, with columns ordered `(H_reg, K..., N...)`.
fn regular_part(
    g: &Matrix,
    h: &Matrix,
    cut: &Cut,
) -> Result<(PartForm, usize, Vec<usize>, Vec<usize>)> {
    let n = g.nrows();
    if n == 0 {
        return Ok((
            PartForm {
                ul: zeros(0, 0),
                zr: zeros(0, 0),
            },
            0,
            Vec::new(),
            Vec::new(),
        ));
    }
    let (vb, wb) = wong(g, h, cut)?;
    let nf = vb.ncols();
    let ni = wb.ncols();
    if nf + ni != n {
        return Err(Error::Conditioning(format!(
            "regular part splits into {nf} finite and {ni} infinite directions, expected {n}"
        )));
    }
    let gv = g * &vb;
    let hw = h * &wb;
    let s = hstack(&[&gv, &hw]);
    let sinv = inverse(&s)
        .ok_or_else(|| Error::Conditioning("finite and infinite rows are dependent".into()))?;
    let tf = &sinv.rows(0, nf) * h * &vb;
    let ti = &sinv.rows(nf, ni) * g * &wb;

    // Finite part: invertible piece and nilpotent piece.
    let scale_f = spectral_norm(&tf).max(1.0);
    let kers = kernel_chain(&tf, scale_f, cut)?;
    let nb = kers.last().unwrap().clone();
    let rb = range_chain(&tf, scale_f, cut)?;
    if nb.ncols() + rb.ncols() != nf {
        return Err(Error::Conditioning(
            "finite part does not split into invertible and nilpotent pieces".into(),
        ));
    }
    let mu = rb.ncols();
    let bsplit = hstack(&[&rb, &nb]);
    let bsplit_inv = inverse(&bsplit).ok_or_else(|| {
        Error::Conditioning("eigenspaces of the finite part are dependent".into())
    })?;
    let tsplit = &bsplit_inv * &tf * &bsplit;
    let tnil = block(&tsplit, mu..nf, mu..nf);
    let (kb, xi) = nilpotent_chains(&tnil, cut)?;
    let (ib, eta) = nilpotent_chains(&ti, cut)?;

    let bf = &bsplit * block_diag(&[eye(mu), kb]);
    let zr = hstack(&[&(&vb * &bf), &(&wb * &ib)]);
    let ul = hstack(&[&(&gv * &bf), &(&hw * &ib)]);
    Ok((PartForm { ul, zr }, mu, xi, eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Reg,
    K,
    L,
    N,
    J,
}

#[derive(Debug, Clone, Copy)]
struct Fine {
    kind: Kind,
    size: usize,
    r0: usize,
    nr: usize,
    c0: usize,
    nc: usize,
}

impl Fine {
    fn rows(&self) -> std::ops::Range<usize> {
        self.r0..self.r0 + self.nr
    }
    fn cols(&self) -> std::ops::Range<usize> {
        self.c0..self.c0 + self.nc
    }
}

fn canonical_of(f: &Fine, h_reg: &Pencil) -> Pencil {
    match f.kind {
        Kind::Reg => h_reg.clone(),
        Kind::K => make_canonical_block(BlockKind::K, f.size).unwrap(),
        Kind::N => make_canonical_block(BlockKind::N, f.size).unwrap(),
        Kind::L => make_canonical_block(BlockKind::L, f.size).unwrap(),
        Kind::J => make_canonical_block(BlockKind::J, f.size).unwrap(),
    }
}

/// Minimum-norm solution of `A Y + X B = -C` for both pencil coefficients.
fn sylvester(a: &Pencil, b: &Pencil, cg: &Matrix, ch: &Matrix) -> (Matrix, Matrix) {
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    let mut x = zeros(p, r);
    let mut y = zeros(q, s);
    if p == 0 || s == 0 {
        return (x, y);
    }
    let eqs = p * s;
    let nun = q * s + p * r;
    let mut m = zeros(2 * eqs, nun);
    let mut rhs = zeros(2 * eqs, 1);
    for (t, (am, bm, cm)) in [(&a.g, &b.g, cg), (&a.h, &b.h, ch)].into_iter().enumerate() {
        let off = t * eqs;
        for j in 0..s {
            for i in 0..p {
                let row = off + i + p * j;
                rhs[(row, 0)] = -cm[(i, j)];
                for k in 0..q {
                    m[(row, k + q * j)] += am[(i, k)];
                }
                for l in 0..r {
                    m[(row, q * s + i + p * l)] += bm[(l, j)];
                }
            }
        }
    }
    let smax = spectral_norm(&m);
    let sol = lstsq_min_norm(&m, &rhs, 1e-12 * smax.max(1.0));
    for j in 0..s {
        for k in 0..q {
            y[(k, j)] = sol[(k + q * j, 0)];
        }
    }
    for l in 0..r {
        for i in 0..p {
            x[(i, l)] = sol[(q * s + i + p * l, 0)];
        }
    }
    (x, y)
}

/// Eliminates the coupling between `upper` and `lower` fine blocks of `q`,
/// returning `(X, Y)` with `(I + X) q (I + Y)` decoupled there.
fn decouple(q: &Pencil, upper: &[Fine], lower: &[Fine], h_reg: &Pencil) -> (Matrix, Matrix) {
    let (m, n) = q.shape();
    let mut xf = zeros(m, m);
    let mut yf = zeros(n, n);
    for bi in upper {
        let a = canonical_of(bi, h_reg);
        for bj in lower {
            let b = canonical_of(bj, h_reg);
            let cg = block(&q.g, bi.rows(), bj.cols());
            let ch = block(&q.h, bi.rows(), bj.cols());
            let (x, y) = sylvester(&a, &b, &cg, &ch);
            xf.view_mut((bi.r0, bj.r0), (bi.nr, bj.nr)).copy_from(&x);
            yf.view_mut((bi.c0, bj.c0), (bi.nc, bj.nc)).copy_from(&y);
        }
    }
    (xf, yf)
}

fn sample_points() -> [Complex64; 5] {
    [
        ZERO,
        ONE,
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.3, 0.7),
        Complex64::new(2.1, -0.4),
    ]
}

/// Points where `p` loses column rank, read off the first Wong limit
/// instead of the full canonical form. The pencil restricted to `V*` has
/// more columns than rows exactly when there are L blocks; otherwise it is
/// square and regular and its eigenvalues are the finite ones of `p`. An
/// empty, non-whole-plane set means full column rank everywhere.
pub fn wong_rank_drops(p: &Pencil, cfg: &ToleranceConfig) -> Result<SingularPointSet> {
    let scale = p.scale();
    let unit = Complex64::new(if scale > 0.0 { 1.0 / scale } else { 1.0 }, 0.0);
    let cut = Cut {
        rel: cfg.rel_rank_tol,
    };
    let (g, h) = (&p.g * unit, &p.h * unit);
    let (vs, _) = wong(&g, &h, &cut)?;
    let k = vs.ncols();
    if k == 0 {
        return Ok(SingularPointSet {
            whole_plane: false,
            points: Vec::new(),
        });
    }
    let w = cut.orth(&hstack(&[&(&g * &vs), &(&h * &vs)]), 1.0)?;
    if w.ncols() < k {
        return Ok(SingularPointSet {
            whole_plane: true,
            points: Vec::new(),
        });
    }
    if w.ncols() > k {
        return Err(Error::Conditioning(
            "Wong limit is not invariant to working precision".into(),
        ));
    }
    let gr = w.adjoint() * &g * &vs;
    let hr = w.adjoint() * &h * &vs;
    let eigs = match inverse(&gr) {
        Some(gi) => crate::linalg::eigenvalues(&-(gi * hr)),
        None => {
            return Err(Error::Conditioning(
                "pencil restricted to the Wong limit is not regular".into(),
            ))
        }
    };
    let mut points = cluster_centroids(&eigs, k);
    points.splice(0..0, eigs);
    Ok(SingularPointSet {
        whole_plane: false,
        points: merge_points(points, cfg.rel_rank_tol),
    })
}

/// Computes the Kronecker canonical form `P = U * Psi * V`.
pub fn compute_kcf(p: &Pencil, cfg: &ToleranceConfig) -> Result<KroneckerStructure> {
    let (m, n) = p.shape();
    let scale = p.scale();
    let unit = if scale > 0.0 { 1.0 / scale } else { 1.0 };
    let g = &p.g * Complex64::new(unit, 0.0);
    let h = &p.h * Complex64::new(unit, 0.0);
    let cut = Cut {
        rel: cfg.rel_rank_tol,
    };

    // Quasi-Kronecker triangular form.
    let (vs, ws) = wong(&g, &h, &cut)?;
    let inter = cut.null(&hstack(&[&vs, &(-&ws)]), 1.0)?;
    let p1 = cut.orth(&(&vs * rows(&inter, 0..vs.ncols())), 1.0)?;
    let sum = cut.orth(&hstack(&[&vs, &ws]), 1.0)?;
    let r1 = cut.complement(&sum, &p1)?;
    let q1 = full_complement(&sum);
    let p2 = cut.orth(&hstack(&[&(&g * &p1), &(&h * &p1)]), 1.0)?;
    let rowsum = cut.orth(&hstack(&[&(&g * &vs), &(&h * &ws)]), 1.0)?;
    let r2 = cut.complement(&rowsum, &p2)?;
    let q2 = full_complement(&rowsum);
    let (np, nr, nq) = (p1.ncols(), r1.ncols(), q1.ncols());
    let (mp, mr, mq) = (p2.ncols(), r2.ncols(), q2.ncols());
    if nr != mr || mp > np || mq < nq || np + nr + nq != n || mp + mr + mq != m {
        return Err(Error::Conditioning(format!(
            "triangular split has inconsistent shapes: rows ({mp},{mr},{mq}) cols ({np},{nr},{nq})"
        )));
    }
    let tm = hstack(&[&p1, &r1, &q1]);
    let sm = hstack(&[&p2, &r2, &q2]);
    let gt = sm.adjoint() * &g * &tm;
    let ht = sm.adjoint() * &h * &tm;
    let lower = [(mp..m, 0..np), (mp + mr..m, np..np + nr)];
    for (rr, cc) in lower {
        let e = frobenius(&block(&gt, rr.clone(), cc.clone())) + frobenius(&block(&ht, rr, cc));
        if e > cfg.residual_tol * (m.max(n) as f64) {
            return Err(Error::Conditioning(format!(
                "triangular split leaves coupling of size {e:.3e} below the diagonal"
            )));
        }
    }

    // Canonical forms of the diagonal parts.
    let (lf, kappa) = l_part(&block(&gt, 0..mp, 0..np), &block(&ht, 0..mp, 0..np), &cut)?;
    let (rf, mu, xi, eta) = regular_part(
        &block(&gt, mp..mp + mr, np..np + nr),
        &block(&ht, mp..mp + mr, np..np + nr),
        &cut,
    )?;
    let gj = block(&gt, mp + mr..m, np + nr..n);
    let hj = block(&ht, mp + mr..m, np + nr..n);
    let (jt, rho) = l_part(&gj.transpose(), &hj.transpose(), &cut)?;
    let inv = |x: &Matrix, what: &str| {
        inverse(x).ok_or_else(|| Error::Conditioning(format!("{what} transform is singular")))
    };
    let jf = PartForm {
        ul: inv(&jt.zr, "left singular")?.transpose(),
        zr: inv(&jt.ul, "left singular")?.transpose(),
    };

    let dl = block_diag(&[lf.ul.clone(), rf.ul.clone(), jf.ul.clone()]);
    let dr = block_diag(&[lf.zr.clone(), rf.zr.clone(), jf.zr.clone()]);
    let dl_inv = block_diag(&[
        inv(&lf.ul, "right singular row")?,
        inv(&rf.ul, "regular row")?,
        inv(&jf.ul, "left singular row")?,
    ]);
    let q = Pencil {
        g: &dl_inv * &gt * &dr,
        h: &dl_inv * &ht * &dr,
    };

    // Fine blocks in triangular order: L..., H_reg, K..., N..., J...
    let mut fine = Vec::new();
    let (mut r0, mut c0) = (0, 0);
    let mut add = |kind: Kind, size: usize, nr: usize, nc: usize| {
        fine.push(Fine {
            kind,
            size,
            r0,
            nr,
            c0,
            nc,
        });
        r0 += nr;
        c0 += nc;
    };
    for &k in &kappa {
        add(Kind::L, k, k, k + 1);
    }
    if mu > 0 {
        add(Kind::Reg, mu, mu, mu);
    }
    for &k in &xi {
        add(Kind::K, k, k, k);
    }
    for &k in &eta {
        add(Kind::N, k, k, k);
    }
    for &k in &rho {
        add(Kind::J, k, k + 1, k);
    }
    let h_reg = fine
        .iter()
        .find(|f| f.kind == Kind::Reg)
        .map(|f| Pencil {
            g: block(&q.g, f.rows(), f.cols()),
            h: block(&q.h, f.rows(), f.cols()),
        })
        .unwrap_or_else(|| Pencil::zeros(0, 0));

    // Remove the regular/J coupling, then the L/everything coupling.
    let l_blocks: Vec<Fine> = fine.iter().copied().filter(|f| f.kind == Kind::L).collect();
    let r_blocks: Vec<Fine> = fine
        .iter()
        .copied()
        .filter(|f| matches!(f.kind, Kind::Reg | Kind::K | Kind::N))
        .collect();
    let j_blocks: Vec<Fine> = fine.iter().copied().filter(|f| f.kind == Kind::J).collect();
    let rj_blocks: Vec<Fine> = r_blocks.iter().chain(j_blocks.iter()).copied().collect();

    let (x1, y1) = decouple(&q, &r_blocks, &j_blocks, &h_reg);
    let im = eye(m);
    let in_ = eye(n);
    let q1 = q.transform(&(&im + &x1), &(&in_ + &y1));
    let (x2, y2) = decouple(&q1, &l_blocks, &rj_blocks, &h_reg);

    let u_tri = &sm * &dl * (&im - &x1) * (&im - &x2);
    let dr_inv = block_diag(&[
        inv(&lf.zr, "right singular column")?,
        inv(&rf.zr, "regular column")?,
        inv(&jf.zr, "left singular column")?,
    ]);
    let v_tri = (&in_ - &y2) * (&in_ - &y1) * dr_inv * tm.adjoint();

    // Reorder to (H_reg, K, L, N, J).
    let order = [Kind::Reg, Kind::K, Kind::L, Kind::N, Kind::J];
    let mut perm_r = Vec::with_capacity(m);
    let mut perm_c = Vec::with_capacity(n);
    for kind in order {
        for f in fine.iter().filter(|f| f.kind == kind) {
            perm_r.extend(f.rows());
            perm_c.extend(f.cols());
        }
    }
    let mut u = u_tri.select_columns(perm_r.iter());
    if scale > 0.0 {
        u *= Complex64::new(scale, 0.0);
    }
    let v = v_tri.select_rows(perm_c.iter());

    let ks = KroneckerStructure {
        mu,
        xi,
        eta,
        kappa,
        rho,
        u,
        v,
        h_reg,
    };
    let res = reconstruct_residual(&ks, p, &sample_points());
    if !(res <= cfg.residual_tol) {
        return Err(Error::Conditioning(format!(
            "Kronecker reconstruction residual {res:.3e} exceeds {:.1e}",
            cfg.residual_tol
        )));
    }
    debug_assert_eq!(ks.nrows(), m);
    debug_assert_eq!(ks.ncols(), n);
    Ok(ks)
}
