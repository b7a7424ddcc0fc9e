use num_complex::Complex64;

use crate::error::Result;
use crate::kcf::{
    compute_kcf, singular_points, v_inverse_leading, KroneckerStructure, SingularPointSet,
};
use crate::linalg::{block_diag, columns, spectral_norm, svd_full, zeros};
use crate::pencil::{
    analytic_null_K_at_zero, analytic_null_L, null_basis_relative_to, rank_relative_to, Matrix,
    Pencil, ToleranceConfig,
};

/// A subsystem pencil restricted to the null space of its output rows.
pub(crate) struct Reduction {
    /// Orthonormal null basis of the output rows.
    pub basis: Matrix,
    pub ks: KroneckerStructure,
    pub set: SingularPointSet,
    pub vinv: Matrix,
}

impl Reduction {
    /// `g`, `h` are the unreduced dynamics rows. Entries of the reduced
    /// pencil at rounding level relative to them are zeroed, since the
    /// structure of a pencil is judged on its own scale and noise in the
    /// basis would otherwise read as rank.
    pub fn new(basis: Matrix, g: &Matrix, h: &Matrix, cfg: &ToleranceConfig) -> Result<Self> {
        let floor = cfg.rel_rank_tol * spectral_norm(g).max(spectral_norm(h));
        let chop = |mut m: Matrix| {
            m.iter_mut()
                .filter(|z| z.norm() <= floor)
                .for_each(|z| *z = Complex64::new(0.0, 0.0));
            m
        };
        let pencil = Pencil::new(chop(g * &basis), chop(h * &basis))?;
        let ks = compute_kcf(&pencil, cfg)?;
        let set = singular_points(&ks, cfg);
        let vinv = v_inverse_leading(&ks)?;
        Ok(Self {
            basis,
            ks,
            set,
            vinv,
        })
    }

    /// Null directions of the reduced pencil at `l0`, in the coordinates of
    /// the full subsystem columns.
    ///
    /// `own` marks a point taken from this subsystem's own singular set. A
    /// computed eigenvalue is slightly off, so when the regular part shows no
    /// numerical null space there the nearly singular direction is used.
    pub fn null_at(&self, l0: Complex64, own: bool, cfg: &ToleranceConfig) -> Matrix {
        let ks = &self.ks;
        let mut parts = Vec::new();
        let hr = ks.h_reg.eval(l0);
        let reference = ks.h_reg.scale() * (1.0 + l0.norm());
        let mut nh = null_basis_relative_to(&hr, reference, cfg);
        if own && ks.mu > 0 && nh.ncols() == 0 {
            let svd = svd_full(&hr);
            let (hi, lo) = (svd.s[0].max(reference), svd.s[ks.mu - 1]);
            if lo <= cfg.rel_rank_tol.sqrt() * hi {
                nh = columns(&svd.v, ks.mu - 1..ks.mu);
            }
        }
        parts.push(nh);
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
        let rn = block_diag(&parts);
        &self.basis * (&self.vinv * rn)
    }
}

/// Whether `reduced = rows * basis` keeps full column rank, judged on the
/// scale of `full * basis` rather than on its own.
pub(crate) fn reduced_fcr(
    reduced: &Matrix,
    full: &Matrix,
    basis: &Matrix,
    cfg: &ToleranceConfig,
) -> bool {
    let reference = spectral_norm(full) * spectral_norm(basis);
    rank_relative_to(reduced, reference, cfg) == reduced.ncols()
}

/// Merges the singular points of all subsystems. Each entry holds the
/// representative point and, per subsystem, its own point in the cluster.
pub(crate) fn cluster(
    sets: &[&SingularPointSet],
    tol: f64,
) -> Vec<(Complex64, Vec<Option<Complex64>>)> {
    let mut all: Vec<(Complex64, usize)> = sets
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.points.iter().map(move |&p| (p, i)))
        .collect();
    all.sort_by(|a, b| {
        a.0.re
            .total_cmp(&b.0.re)
            .then(a.0.im.total_cmp(&b.0.im))
            .then(a.1.cmp(&b.1))
    });
    let mut out: Vec<(Complex64, Vec<Option<Complex64>>)> = Vec::new();
    for (p, i) in all {
        let near = out
            .iter_mut()
            .find(|(q, _)| (p - *q).norm() <= tol * (1.0 + p.norm().max(q.norm())));
        match near {
            Some((_, own)) => {
                if own[i].is_none() {
                    own[i] = Some(p);
                }
            }
            None => {
                let mut own = vec![None; sets.len()];
                own[i] = Some(p);
                out.push((p, own));
            }
        }
    }
    out
}

/// Places per-subsystem row blocks into a global vector layout.
pub(crate) struct Layout {
    /// For each subsystem, `(global_offset, local_offset, len)` segments.
    segments: Vec<Vec<(usize, usize, usize)>>,
    pub size: usize,
}

impl Layout {
    /// `widths[i][k]` is the width of channel `k` in subsystem `i`; channels
    /// are laid out channel-major (all subsystems' channel 0, then 1, ...),
    /// and locally in channel order.
    pub fn new(widths: &[Vec<usize>]) -> Self {
        let channels = widths.first().map(|w| w.len()).unwrap_or(0);
        let mut segments = vec![Vec::new(); widths.len()];
        let mut global = 0;
        for k in 0..channels {
            for (i, w) in widths.iter().enumerate() {
                let local: usize = w[..k].iter().sum();
                segments[i].push((global, local, w[k]));
                global += w[k];
            }
        }
        Self {
            segments,
            size: global,
        }
    }

    /// Global matrix whose columns are the per-subsystem blocks placed on
    /// their rows, side by side.
    pub fn place(&self, blocks: &[Matrix]) -> Matrix {
        let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut out = zeros(self.size, cols);
        let mut c0 = 0;
        for (i, b) in blocks.iter().enumerate() {
            for &(g, l, len) in &self.segments[i] {
                out.view_mut((g, c0), (len, b.ncols()))
                    .copy_from(&b.view((l, 0), (len, b.ncols())));
            }
            c0 += b.ncols();
        }
        out
    }
}
