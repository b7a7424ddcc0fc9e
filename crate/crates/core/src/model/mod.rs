//! Subsystems, the subsystem connection matrix, and the operations that
//! turn a networked model into block-diagonal stacks or a lumped descriptor
//! system.

mod json;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DimensionViolation, Error, LftSide, Result};
use crate::linalg::{rcond, to_complex};
use crate::pencil::{rank_of, ToleranceConfig};

pub use json::{model_from_json, model_to_json, parse_model, parse_model_str};

/// Real dense matrix used for model data.
pub type RMatrix = DMatrix<f64>;

/// Channel sizes of one subsystem: states, internal inputs and outputs,
/// external inputs and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub v: usize,
    pub z: usize,
    pub u: usize,
    pub y: usize,
}

/// One subsystem with known parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemNumeric {
    pub id: String,
    pub dims: Dims,
    pub e: RMatrix,
    pub a_xx: RMatrix,
    pub a_xv: RMatrix,
    pub b_x: RMatrix,
    pub a_zx: RMatrix,
    pub a_zv: RMatrix,
    pub b_z: RMatrix,
    pub c_x: RMatrix,
    pub c_v: RMatrix,
    pub d_u: RMatrix,
}

impl SubsystemNumeric {
    /// All-zero subsystem with the given channel sizes.
    pub fn zeros(id: impl Into<String>, d: Dims) -> Self {
        let z = RMatrix::zeros;
        Self {
            id: id.into(),
            dims: d,
            e: z(d.x, d.x),
            a_xx: z(d.x, d.x),
            a_xv: z(d.x, d.v),
            b_x: z(d.x, d.u),
            a_zx: z(d.z, d.x),
            a_zv: z(d.z, d.v),
            b_z: z(d.z, d.u),
            c_x: z(d.y, d.x),
            c_v: z(d.y, d.v),
            d_u: z(d.y, d.u),
        }
    }

    /// `(name, matrix, expected shape)` for every field.
    pub fn fields(&self) -> Vec<(&'static str, &RMatrix, (usize, usize))> {
        let d = self.dims;
        vec![
            ("E", &self.e, (d.x, d.x)),
            ("A_xx", &self.a_xx, (d.x, d.x)),
            ("A_xv", &self.a_xv, (d.x, d.v)),
            ("B_x", &self.b_x, (d.x, d.u)),
            ("A_zx", &self.a_zx, (d.z, d.x)),
            ("A_zv", &self.a_zv, (d.z, d.v)),
            ("B_z", &self.b_z, (d.z, d.u)),
            ("C_x", &self.c_x, (d.y, d.x)),
            ("C_v", &self.c_v, (d.y, d.v)),
            ("D_u", &self.d_u, (d.y, d.u)),
        ]
    }
}

/// One subsystem whose E/A/C families are generalized LFTs of the
/// parameter matrices `P1` (state side) and `P2` (interconnection side).
///
/// The left factors attach as `F1 -> E`, `F2 -> A_xx`, `F3 -> C_x`,
/// `F4 -> A_zx` and `J1 -> A_xv`, `J2 -> C_v`, `J3 -> A_zv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemLft {
    pub id: String,
    pub dims: Dims,
    pub e0: RMatrix,
    pub a_xx0: RMatrix,
    pub a_zx0: RMatrix,
    pub c_x0: RMatrix,
    pub a_xv0: RMatrix,
    pub a_zv0: RMatrix,
    pub c_v0: RMatrix,
    pub f1: RMatrix,
    pub f2: RMatrix,
    pub f3: RMatrix,
    pub f4: RMatrix,
    pub g: RMatrix,
    pub h: RMatrix,
    pub m: RMatrix,
    pub j1: RMatrix,
    pub j2: RMatrix,
    pub j3: RMatrix,
    pub k: RMatrix,
    pub s: RMatrix,
    pub n: RMatrix,
    pub p1: RMatrix,
    pub p2: RMatrix,
    pub b_x: RMatrix,
    pub b_z: RMatrix,
    pub d_u: RMatrix,
}

impl SubsystemLft {
    /// Width of the state-side parameter channel (size of `M`).
    pub fn q1(&self) -> usize {
        self.m.nrows()
    }

    /// Rows of `G` and `H`.
    pub fn r1(&self) -> usize {
        self.g.nrows()
    }

    /// Width of the interconnection-side channel (size of `N`).
    pub fn q2(&self) -> usize {
        self.n.nrows()
    }

    /// Rows of `K` and `S`.
    pub fn r2(&self) -> usize {
        self.k.nrows()
    }

    /// LFT subsystem with empty parameter channels wrapping a numeric one.
    pub fn from_numeric(sub: &SubsystemNumeric) -> Self {
        let d = sub.dims;
        let z = RMatrix::zeros;
        Self {
            id: sub.id.clone(),
            dims: d,
            e0: sub.e.clone(),
            a_xx0: sub.a_xx.clone(),
            a_zx0: sub.a_zx.clone(),
            c_x0: sub.c_x.clone(),
            a_xv0: sub.a_xv.clone(),
            a_zv0: sub.a_zv.clone(),
            c_v0: sub.c_v.clone(),
            f1: z(d.x, 0),
            f2: z(d.x, 0),
            f3: z(d.y, 0),
            f4: z(d.z, 0),
            g: z(0, d.x),
            h: z(0, 0),
            m: z(0, 0),
            j1: z(d.x, 0),
            j2: z(d.y, 0),
            j3: z(d.z, 0),
            k: z(0, d.v),
            s: z(0, 0),
            n: z(0, 0),
            p1: z(0, 0),
            p2: z(0, 0),
            b_x: sub.b_x.clone(),
            b_z: sub.b_z.clone(),
            d_u: sub.d_u.clone(),
        }
    }

    /// `(name, matrix, expected shape)` for every field.
    pub fn fields(&self) -> Vec<(&'static str, &RMatrix, (usize, usize))> {
        let d = self.dims;
        let (q1, r1, q2, r2) = (self.q1(), self.r1(), self.q2(), self.r2());
        vec![
            ("E", &self.e0, (d.x, d.x)),
            ("A_xx", &self.a_xx0, (d.x, d.x)),
            ("A_zx", &self.a_zx0, (d.z, d.x)),
            ("C_x", &self.c_x0, (d.y, d.x)),
            ("A_xv", &self.a_xv0, (d.x, d.v)),
            ("A_zv", &self.a_zv0, (d.z, d.v)),
            ("C_v", &self.c_v0, (d.y, d.v)),
            ("F1", &self.f1, (d.x, q1)),
            ("F2", &self.f2, (d.x, q1)),
            ("F3", &self.f3, (d.y, q1)),
            ("F4", &self.f4, (d.z, q1)),
            ("G", &self.g, (r1, d.x)),
            ("H", &self.h, (r1, q1)),
            ("M", &self.m, (q1, q1)),
            ("J1", &self.j1, (d.x, q2)),
            ("J2", &self.j2, (d.y, q2)),
            ("J3", &self.j3, (d.z, q2)),
            ("K", &self.k, (r2, d.v)),
            ("S", &self.s, (r2, q2)),
            ("N", &self.n, (q2, q2)),
            ("P1", &self.p1, (q1, r1)),
            ("P2", &self.p2, (q2, r2)),
            ("B_x", &self.b_x, (d.x, d.u)),
            ("B_z", &self.b_z, (d.z, d.u)),
            ("D_u", &self.d_u, (d.y, d.u)),
        ]
    }
}

/// Sparse subsystem connection matrix, `v = Phi * z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scm {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Scm {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn to_dense(&self) -> RMatrix {
        let mut m = RMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            if r < self.rows && c < self.cols {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }
}

/// Subsystem list; a model is either fully numeric or fully parameterized.
#[derive(Debug, Clone, PartialEq)]
pub enum Subsystems {
    Numeric(Vec<SubsystemNumeric>),
    Lft(Vec<SubsystemLft>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdsModel {
    pub subsystems: Subsystems,
    pub scm: Scm,
}

/// Channel totals over all subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Totals {
    pub x: usize,
    pub v: usize,
    pub z: usize,
    pub u: usize,
    pub y: usize,
}

impl NdsModel {
    pub fn numeric(subsystems: Vec<SubsystemNumeric>, scm: Scm) -> Self {
        Self {
            subsystems: Subsystems::Numeric(subsystems),
            scm,
        }
    }

    pub fn lft(subsystems: Vec<SubsystemLft>, scm: Scm) -> Self {
        Self {
            subsystems: Subsystems::Lft(subsystems),
            scm,
        }
    }

    pub fn len(&self) -> usize {
        match &self.subsystems {
            Subsystems::Numeric(s) => s.len(),
            Subsystems::Lft(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_lft(&self) -> bool {
        matches!(self.subsystems, Subsystems::Lft(_))
    }

    pub fn dims(&self) -> Vec<Dims> {
        match &self.subsystems {
            Subsystems::Numeric(s) => s.iter().map(|s| s.dims).collect(),
            Subsystems::Lft(s) => s.iter().map(|s| s.dims).collect(),
        }
    }

    pub fn totals(&self) -> Totals {
        self.dims().iter().fold(Totals::default(), |t, d| Totals {
            x: t.x + d.x,
            v: t.v + d.v,
            z: t.z + d.z,
            u: t.u + d.u,
            y: t.y + d.y,
        })
    }

    /// Numeric subsystems, or an error for parameterized models.
    pub fn numeric_subsystems(&self) -> Result<&[SubsystemNumeric]> {
        match &self.subsystems {
            Subsystems::Numeric(s) => Ok(s),
            Subsystems::Lft(_) => Err(Error::InvalidArgument(
                "operation needs a numeric model; evaluate the LFT first".into(),
            )),
        }
    }

    pub fn lft_subsystems(&self) -> Result<&[SubsystemLft]> {
        match &self.subsystems {
            Subsystems::Lft(s) => Ok(s),
            Subsystems::Numeric(_) => Err(Error::InvalidArgument(
                "operation needs a parameterized (LFT) model".into(),
            )),
        }
    }
}

/// Checks every dimension invariant and reports all violations at once.
pub fn validate(model: &NdsModel) -> Result<()> {
    let mut bad = Vec::new();
    let mut check = |i: usize, name: &str, m: &RMatrix, want: (usize, usize)| {
        if m.shape() != want {
            bad.push(DimensionViolation {
                subsystem: Some(i),
                field: name.to_string(),
                detail: format!(
                    "expected {}x{}, found {}x{}",
                    want.0,
                    want.1,
                    m.nrows(),
                    m.ncols()
                ),
            });
        }
    };
    match &model.subsystems {
        Subsystems::Numeric(subs) => {
            for (i, s) in subs.iter().enumerate() {
                for (name, m, want) in s.fields() {
                    check(i, name, m, want);
                }
            }
        }
        Subsystems::Lft(subs) => {
            for (i, s) in subs.iter().enumerate() {
                for (name, m, want) in s.fields() {
                    check(i, name, m, want);
                }
            }
        }
    }
    let t = model.totals();
    let scm = &model.scm;
    if scm.rows != t.v || scm.cols != t.z {
        bad.push(DimensionViolation {
            subsystem: None,
            field: "scm".into(),
            detail: format!(
                "expected {}x{} (total v by total z), found {}x{}",
                t.v, t.z, scm.rows, scm.cols
            ),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for (k, &(r, c, v)) in scm.entries.iter().enumerate() {
        let field = format!("scm.entries[{k}]");
        if r >= t.v || c >= t.z {
            bad.push(DimensionViolation {
                subsystem: None,
                field,
                detail: format!("index ({r}, {c}) outside {}x{}", t.v, t.z),
            });
        } else if !seen.insert((r, c)) {
            bad.push(DimensionViolation {
                subsystem: None,
                field,
                detail: format!("duplicate entry ({r}, {c})"),
            });
        } else if !v.is_finite() {
            bad.push(DimensionViolation {
                subsystem: None,
                field,
                detail: "value is not finite".into(),
            });
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Dimension(bad))
    }
}

fn lft_inverse(
    base: &RMatrix,
    p: &RMatrix,
    right: &RMatrix,
    index: usize,
    side: LftSide,
    cfg: &ToleranceConfig,
) -> Result<RMatrix> {
    let q = base.nrows();
    let core = base - p * right;
    if q == 0 {
        return Ok(core);
    }
    let rc = rcond(&to_complex(&core));
    if rank_of(&to_complex(&core), cfg) < q {
        return Err(Error::LftIllPosed {
            subsystem: index,
            side,
            rcond: rc,
        });
    }
    core.try_inverse().ok_or(Error::LftIllPosed {
        subsystem: index,
        side,
        rcond: rc,
    })
}

/// Evaluates the generalized LFTs at the stored parameter values.
pub fn evaluate_lft(sub: &SubsystemLft, cfg: &ToleranceConfig) -> Result<SubsystemNumeric> {
    evaluate_lft_indexed(sub, 0, cfg)
}

pub(crate) fn evaluate_lft_indexed(
    sub: &SubsystemLft,
    index: usize,
    cfg: &ToleranceConfig,
) -> Result<SubsystemNumeric> {
    let inv1 = lft_inverse(&sub.m, &sub.p1, &sub.h, index, LftSide::State, cfg)?;
    let inv2 = lft_inverse(&sub.n, &sub.p2, &sub.s, index, LftSide::Interconnect, cfg)?;
    let n1 = inv1.norm() * sub.p1.norm() * sub.g.norm();
    let n2 = inv2.norm() * sub.p2.norm() * sub.k.norm();
    let t1 = inv1 * &sub.p1 * &sub.g;
    let t2 = inv2 * &sub.p2 * &sub.k;
    let tol = cfg.rel_rank_tol;
    // Same residue rule as in `build_lumped`.
    let lft = |base: &RMatrix, f: &RMatrix, t: &RMatrix, tn: f64| {
        let term = f.norm() * tn;
        if term == 0.0 {
            return base.clone();
        }
        chop(base + f * t, tol * (base.norm() + term))
    };
    Ok(SubsystemNumeric {
        id: sub.id.clone(),
        dims: sub.dims,
        e: lft(&sub.e0, &sub.f1, &t1, n1),
        a_xx: lft(&sub.a_xx0, &sub.f2, &t1, n1),
        c_x: lft(&sub.c_x0, &sub.f3, &t1, n1),
        a_zx: lft(&sub.a_zx0, &sub.f4, &t1, n1),
        a_xv: lft(&sub.a_xv0, &sub.j1, &t2, n2),
        c_v: lft(&sub.c_v0, &sub.j2, &t2, n2),
        a_zv: lft(&sub.a_zv0, &sub.j3, &t2, n2),
        b_x: sub.b_x.clone(),
        b_z: sub.b_z.clone(),
        d_u: sub.d_u.clone(),
    })
}

/// Numeric copy of a model, evaluating LFT subsystems when needed.
pub fn evaluate_model(model: &NdsModel, cfg: &ToleranceConfig) -> Result<NdsModel> {
    match &model.subsystems {
        Subsystems::Numeric(_) => Ok(model.clone()),
        Subsystems::Lft(subs) => {
            let evaluated = subs
                .iter()
                .enumerate()
                .map(|(i, s)| evaluate_lft_indexed(s, i, cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok(NdsModel::numeric(evaluated, model.scm.clone()))
        }
    }
}

/// Outcome of the network-level well-posedness test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPosedness {
    pub wellposed: bool,
    /// Reciprocal condition number of `I - Phi * A_zv`; zero when an LFT
    /// inverse already failed.
    pub rcond: f64,
}

/// Tests invertibility of `I - Phi * A_zv` (and of every LFT inverse).
pub fn wellposedness(model: &NdsModel, cfg: &ToleranceConfig) -> Result<WellPosedness> {
    let numeric = match evaluate_model(model, cfg) {
        Ok(m) => m,
        Err(Error::LftIllPosed { .. }) => {
            return Ok(WellPosedness {
                wellposed: false,
                rcond: 0.0,
            })
        }
        Err(e) => return Err(e),
    };
    let st = assemble(&numeric)?;
    let phi = numeric.scm.to_dense();
    let mv = phi.nrows();
    let core = to_complex(&(RMatrix::identity(mv, mv) - &phi * &st.a_zv));
    Ok(WellPosedness {
        wellposed: rank_of(&core, cfg) == mv,
        rcond: rcond(&core),
    })
}

pub fn check_wellposed(model: &NdsModel, cfg: &ToleranceConfig) -> bool {
    wellposedness(model, cfg)
        .map(|w| w.wellposed)
        .unwrap_or(false)
}

/// Block-diagonal stacks of the subsystem matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub e: RMatrix,
    pub a_xx: RMatrix,
    pub a_xv: RMatrix,
    pub a_zx: RMatrix,
    pub a_zv: RMatrix,
    pub b_x: RMatrix,
    pub b_z: RMatrix,
    pub c_x: RMatrix,
    pub c_v: RMatrix,
    pub d_u: RMatrix,
}

pub fn block_diag_real(parts: &[&RMatrix]) -> RMatrix {
    let r: usize = parts.iter().map(|p| p.nrows()).sum();
    let c: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = RMatrix::zeros(r, c);
    let (mut ro, mut co) = (0, 0);
    for p in parts {
        out.view_mut((ro, co), p.shape()).copy_from(*p);
        ro += p.nrows();
        co += p.ncols();
    }
    out
}

/// Stacks a numeric model's subsystem matrices block-diagonally.
pub fn assemble(model: &NdsModel) -> Result<Assembled> {
    let subs = model.numeric_subsystems()?;
    let stack = |f: fn(&SubsystemNumeric) -> &RMatrix| {
        let parts: Vec<&RMatrix> = subs.iter().map(f).collect();
        block_diag_real(&parts)
    };
    Ok(Assembled {
        e: stack(|s| &s.e),
        a_xx: stack(|s| &s.a_xx),
        a_xv: stack(|s| &s.a_xv),
        a_zx: stack(|s| &s.a_zx),
        a_zv: stack(|s| &s.a_zv),
        b_x: stack(|s| &s.b_x),
        b_z: stack(|s| &s.b_z),
        c_x: stack(|s| &s.c_x),
        c_v: stack(|s| &s.c_v),
        d_u: stack(|s| &s.d_u),
    })
}

/// The whole network as one descriptor system `(E, A, B, C, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedDescriptor {
    pub e: RMatrix,
    pub a: RMatrix,
    pub b: RMatrix,
    pub c: RMatrix,
    pub d: RMatrix,
}

/// Eliminates the internal channels: `A = A_xx + A_xv (I - Phi A_zv)^-1 Phi A_zx`
/// and likewise for `B`, `C`, `D`.
pub fn build_lumped(model: &NdsModel, cfg: &ToleranceConfig) -> Result<LumpedDescriptor> {
    let numeric = evaluate_model(model, cfg)?;
    let st = assemble(&numeric)?;
    let phi = numeric.scm.to_dense();
    let mv = phi.nrows();
    let core = RMatrix::identity(mv, mv) - &phi * &st.a_zv;
    let cc = to_complex(&core);
    if rank_of(&cc, cfg) < mv {
        return Err(Error::WellPosedness { rcond: rcond(&cc) });
    }
    let inv = if mv == 0 {
        core
    } else {
        core.try_inverse()
            .ok_or(Error::WellPosedness { rcond: rcond(&cc) })?
    };
    // v = (I - Phi A_zv)^-1 Phi (A_zx x + B_z u)
    let route = inv * &phi;
    let tol = cfg.rel_rank_tol;
    let lump = |direct: &RMatrix, left: &RMatrix, right: &RMatrix| {
        let m = direct + left * &route * right;
        let scale = direct.norm() + left.norm() * route.norm() * right.norm();
        chop(m, tol * scale)
    };
    Ok(LumpedDescriptor {
        e: st.e.clone(),
        a: lump(&st.a_xx, &st.a_xv, &st.a_zx),
        b: lump(&st.b_x, &st.a_xv, &st.b_z),
        c: lump(&st.c_x, &st.c_v, &st.a_zx),
        d: lump(&st.d_u, &st.c_v, &st.b_z),
    })
}

/// Entries at or below `tol` are cancellation residue; set them to zero.
fn chop(mut m: RMatrix, tol: f64) -> RMatrix {
    m.iter_mut()
        .filter(|x| x.abs() <= tol)
        .for_each(|x| *x = 0.0);
    m
}

/// The dual network: transposed subsystems with internal and external
/// channels swapped, and `Phi' = Phi^T`.
pub fn dualize(model: &NdsModel) -> Result<NdsModel> {
    let subs = model.numeric_subsystems()?;
    let dual = subs
        .iter()
        .map(|s| SubsystemNumeric {
            id: s.id.clone(),
            dims: Dims {
                x: s.dims.x,
                v: s.dims.z,
                z: s.dims.v,
                u: s.dims.y,
                y: s.dims.u,
            },
            e: s.e.transpose(),
            a_xx: s.a_xx.transpose(),
            a_xv: s.a_zx.transpose(),
            a_zx: s.a_xv.transpose(),
            a_zv: s.a_zv.transpose(),
            b_x: s.c_x.transpose(),
            b_z: s.c_v.transpose(),
            c_x: s.b_x.transpose(),
            c_v: s.b_z.transpose(),
            d_u: s.d_u.transpose(),
        })
        .collect();
    Ok(NdsModel::numeric(dual, model.scm.transpose()))
}
