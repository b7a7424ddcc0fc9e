#![allow(dead_code)]

use nds_core::kcf::KroneckerStructure;
use nds_core::model::{evaluate_lft, Dims, RMatrix, SubsystemLft, SubsystemNumeric};
use nds_core::pencil::{make_canonical_block, BlockKind};
use nds_core::{Matrix, Pencil, ToleranceConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sorted block-size lists `(mu, xi, eta, kappa, rho)`.
pub type Invariants = (usize, Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn random_real(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> Matrix {
    Matrix::from_fn(r, cols, |_, _| c(rng.random_range(-1.0..1.0)))
}

/// Random matrix with reciprocal condition number at least 0.02.
pub fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    loop {
        let m = random_real(rng, n, n);
        if n == 0 {
            return m;
        }
        let s = m.clone().svd(false, false).singular_values;
        let (hi, lo) = (s.max(), s.min());
        if lo > 0.02 * hi {
            return m;
        }
    }
}

pub fn random_lambda(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))
}

/// Random canonical form with at most `max` rows and columns, returned as
/// `(U * Psi * V, planted invariants)`.
pub fn planted_pencil(seed: u64, max: usize) -> (Pencil, Invariants) {
    let mut rng = rng(seed);
    let mut parts: Vec<Pencil> = Vec::new();
    let (mut rows, mut cols) = (0usize, 0usize);
    let mut inv: Invariants = (0, vec![], vec![], vec![], vec![]);
    let target = rng.random_range(1..=6);
    for _ in 0..target {
        let kind = rng.random_range(0..5);
        let size = match kind {
            0..=2 => rng.random_range(1..=3),
            _ => rng.random_range(0..=3),
        };
        let (br, bc) = match kind {
            3 => (size, size + 1),
            4 => (size + 1, size),
            _ => (size, size),
        };
        if rows + br > max || cols + bc > max {
            continue;
        }
        rows += br;
        cols += bc;
        match kind {
            0 => {
                // Strictly regular: eigenvalues of modulus in [0.5, 3].
                let d = Matrix::from_fn(size, size, |i, j| {
                    if i == j {
                        let mag: f64 = rng.random_range(0.5..3.0);
                        c(if rng.random_bool(0.5) { mag } else { -mag })
                    } else {
                        c(0.0)
                    }
                });
                let t = random_invertible(&mut rng, size);
                let tinv = t.clone().try_inverse().unwrap();
                let g = random_invertible(&mut rng, size);
                let h = -(&g * &t * d * tinv);
                parts.push(Pencil::new(g, h).unwrap());
                inv.0 += size;
            }
            1 => {
                parts.push(make_canonical_block(BlockKind::K, size).unwrap());
                inv.1.push(size);
            }
            2 => {
                parts.push(make_canonical_block(BlockKind::N, size).unwrap());
                inv.2.push(size);
            }
            3 => {
                parts.push(make_canonical_block(BlockKind::L, size).unwrap());
                inv.3.push(size);
            }
            _ => {
                parts.push(make_canonical_block(BlockKind::J, size).unwrap());
                inv.4.push(size);
            }
        }
    }
    let psi = Pencil::block_diag(&parts);
    let u = random_invertible(&mut rng, rows);
    let v = random_invertible(&mut rng, cols);
    for l in [&mut inv.1, &mut inv.2, &mut inv.3, &mut inv.4] {
        l.sort_unstable();
    }
    (psi.transform(&u, &v), inv)
}

pub fn invariants(ks: &KroneckerStructure) -> Invariants {
    ks.invariants()
}

pub fn real_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize, scale: f64) -> RMatrix {
    RMatrix::from_fn(r, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// `I + 0.1 * noise`, comfortably invertible.
pub fn near_identity(rng: &mut ChaCha8Rng, n: usize) -> RMatrix {
    RMatrix::identity(n, n) + real_matrix(rng, n, n, 0.1)
}

/// A parameterized subsystem for the design screen.
///
/// With `planted`, `v` and the interconnect channel are invisible to the
/// outputs and there are at most `m_v` outputs, so the output-reduced
/// pencil has more columns than rows and carries an L block; `P2` is zero half of the time. Otherwise there are
/// at least as many outputs as non-state columns and every entry is dense.
pub fn design_fixture(seed: u64, planted: bool) -> SubsystemLft {
    let mut rng = rng(seed);
    loop {
        let x = rng.random_range(1..=2);
        let v = rng.random_range(1..=2);
        let q1 = rng.random_range(0..=1);
        let q2 = rng.random_range(1..=2);
        let (r1, r2) = (q1, rng.random_range(1..=2));
        let y = if planted {
            rng.random_range(0..=v)
        } else {
            q1 + v + q2 + rng.random_range(0..=1)
        };
        let d = Dims {
            x,
            v,
            z: 0,
            u: 0,
            y,
        };
        let mut s = SubsystemLft::from_numeric(&SubsystemNumeric::zeros("d", d));
        s.e0 = real_matrix(&mut rng, x, x, 1.0) + RMatrix::identity(x, x) * 2.0;
        s.a_xx0 = real_matrix(&mut rng, x, x, 1.0);
        s.c_x0 = real_matrix(&mut rng, y, x, 1.0);
        s.f1 = real_matrix(&mut rng, x, q1, 0.5);
        s.f2 = real_matrix(&mut rng, x, q1, 1.0);
        s.f3 = real_matrix(&mut rng, y, q1, 1.0);
        s.f4 = RMatrix::zeros(0, q1);
        s.g = real_matrix(&mut rng, r1, x, 1.0);
        s.h = real_matrix(&mut rng, r1, q1, 1.0);
        s.m = near_identity(&mut rng, q1);
        s.p1 = real_matrix(&mut rng, q1, r1, 0.5);
        s.j1 = real_matrix(&mut rng, x, q2, 1.0);
        s.j3 = RMatrix::zeros(0, q2);
        s.k = real_matrix(&mut rng, r2, v, 1.0);
        s.s = real_matrix(&mut rng, r2, q2, 1.0);
        s.n = near_identity(&mut rng, q2);
        if planted {
            s.a_xv0 = RMatrix::zeros(x, v);
            s.c_v0 = RMatrix::zeros(y, v);
            s.j2 = RMatrix::zeros(y, q2);
            s.p2 = if rng.random_bool(0.5) {
                RMatrix::zeros(q2, r2)
            } else {
                real_matrix(&mut rng, q2, r2, 0.5)
            };
        } else {
            s.a_xv0 = real_matrix(&mut rng, x, v, 1.0);
            s.c_v0 = real_matrix(&mut rng, y, v, 1.0);
            s.j2 = real_matrix(&mut rng, y, q2, 1.0);
            s.p2 = real_matrix(&mut rng, q2, r2, 0.5);
        }
        if evaluate_lft(&s, &ToleranceConfig::default()).is_ok() {
            return s;
        }
    }
}

/// `[[l E - A_xx, -A_xv], [-C_x, -C_v]]` of the evaluated subsystem.
pub fn measured_pencil(s: &SubsystemNumeric) -> Pencil {
    let d = s.dims;
    let g = RMatrix::from_fn(d.x + d.y, d.x + d.v, |i, j| {
        if i < d.x && j < d.x {
            s.e[(i, j)]
        } else {
            0.0
        }
    });
    let mut h = RMatrix::zeros(d.x + d.y, d.x + d.v);
    h.view_mut((0, 0), (d.x, d.x)).copy_from(&-&s.a_xx);
    h.view_mut((0, d.x), (d.x, d.v)).copy_from(&-&s.a_xv);
    h.view_mut((d.x, 0), (d.y, d.x)).copy_from(&-&s.c_x);
    h.view_mut((d.x, d.x), (d.y, d.v)).copy_from(&-&s.c_v);
    Pencil::from_real(&g, &h).unwrap()
}

/// The subsystem's parameter-explicit pencil on columns `[x, xi, v, eta]`,
/// rows dynamics, outputs, `P1` and `P2` constraints.
pub fn design_pencil(s: &SubsystemLft) -> Pencil {
    let d = s.dims;
    let (q1, q2) = (s.q1(), s.q2());
    let cols = [d.x, q1, d.v, q2];
    let rows = [d.x, d.y, q1, q2];
    let off = |w: &[usize], k: usize| w[..k].iter().sum::<usize>();
    let n = cols.iter().sum();
    let mut g = RMatrix::zeros(rows.iter().sum(), n);
    let mut h = g.clone();
    let put = |m: &mut RMatrix, r: usize, c: usize, b: &RMatrix| {
        m.view_mut((off(&rows, r), off(&cols, c)), b.shape())
            .copy_from(b);
    };
    put(&mut g, 0, 0, &s.e0);
    put(&mut g, 0, 1, &s.f1);
    put(&mut h, 0, 0, &-&s.a_xx0);
    put(&mut h, 0, 1, &-&s.f2);
    put(&mut h, 0, 2, &-&s.a_xv0);
    put(&mut h, 0, 3, &-&s.j1);
    put(&mut h, 1, 0, &-&s.c_x0);
    put(&mut h, 1, 1, &-&s.f3);
    put(&mut h, 1, 2, &-&s.c_v0);
    put(&mut h, 1, 3, &-&s.j2);
    put(&mut h, 2, 0, &-(&s.p1 * &s.g));
    put(&mut h, 2, 1, &(&s.m - &s.p1 * &s.h));
    put(&mut h, 3, 2, &-(&s.p2 * &s.k));
    put(&mut h, 3, 3, &(&s.n - &s.p2 * &s.s));
    Pencil::from_real(&g, &h).unwrap()
}
