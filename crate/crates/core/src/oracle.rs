//! Dense reference checks on the lumped descriptor system, and a seeded
//! random model generator for cross-validation.

use std::ops::RangeInclusive;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    check_controllability_with, check_observability_with, check_regularity_with, AnalysisOptions,
    AnalysisReport, SampleConfig, Verdict,
};
use crate::error::{Error, Result};
use crate::kcf::{compute_kcf, wong_rank_drops, KroneckerStructure};
use crate::linalg::{hstack, to_complex, vstack, zeros};
use crate::model::{
    build_lumped, check_wellposed, Dims, LumpedDescriptor, NdsModel, RMatrix, Scm, SubsystemLft,
    SubsystemNumeric,
};
use crate::pencil::{rank_of, Pencil, ToleranceConfig};

const CROSS_CHECK_POINTS: usize = 20;
const CROSS_CHECK_SEED: u64 = 0x0005_eed0_fcc0;

/// KCF of `p` together with the everywhere-FCR verdict (`mu = a = c = 0`).
///
/// The verdict is cross-checked by rank tests at seeded random points: an
/// everywhere-FCR pencil must have full column rank there, and a pencil with
/// L blocks must be rank deficient everywhere. A disagreement is reported
/// as a conditioning error.
pub fn fcr_everywhere_structure(
    p: &Pencil,
    cfg: &ToleranceConfig,
) -> Result<(bool, KroneckerStructure)> {
    let ks = compute_kcf(p, cfg)?;
    let fcr = ks.mu == 0 && ks.a() == 0 && ks.c() == 0;
    let n = p.ncols();
    if n > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(CROSS_CHECK_SEED);
        let radius = 1.0 + p.scale();
        for _ in 0..CROSS_CHECK_POINTS {
            let lam = random_point(&mut rng, radius);
            let full = rank_of(&p.eval(lam), cfg) == n;
            if fcr && !full {
                return Err(Error::Conditioning(format!(
                    "pencil structure says full column rank everywhere, but rank drops at {lam}"
                )));
            }
            if ks.c() > 0 && full {
                return Err(Error::Conditioning(format!(
                    "pencil has right singular blocks, but has full column rank at {lam}"
                )));
            }
        }
    }
    Ok((fcr, ks))
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> Complex64 {
    let r = radius * rng.random_range(0.3..1.0);
    let t = rng.random_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(r, t)
}

/// Whether `p(lambda)` has full column rank at every complex `lambda`.
///
/// When the full canonical form is too ill-conditioned to compute (long
/// singular chains), the answer falls back to the first Wong limit being
/// trivial, checked against the same random points.
pub fn oracle_fcr_everywhere(p: &Pencil, cfg: &ToleranceConfig) -> Result<bool> {
    match fcr_everywhere_structure(p, cfg) {
        Ok((fcr, _)) => Ok(fcr),
        Err(Error::Conditioning(_)) => {
            let set = wong_rank_drops(p, cfg)?;
            let fcr = !set.whole_plane && set.points.is_empty();
            let n = p.ncols();
            let mut rng = ChaCha8Rng::seed_from_u64(CROSS_CHECK_SEED);
            let radius = 1.0 + p.scale();
            for _ in 0..CROSS_CHECK_POINTS {
                let lam = random_point(&mut rng, radius);
                if fcr && rank_of(&p.eval(lam), cfg) < n {
                    return Err(Error::Conditioning(format!(
                        "trivial Wong limit, but rank drops at {lam}"
                    )));
                }
            }
            Ok(fcr)
        }
        Err(e) => Err(e),
    }
}

/// Whether `p` has full column rank for some `lambda`: no L blocks.
pub fn oracle_fncr(p: &Pencil, cfg: &ToleranceConfig) -> Result<bool> {
    Ok(compute_kcf(p, cfg)?.c() == 0)
}

/// `det(lambda E - A)` is not identically zero, tested at `M_x + 1`
/// distinct points.
pub fn oracle_regular(lum: &LumpedDescriptor, cfg: &ToleranceConfig, samp: &SampleConfig) -> bool {
    let n = lum.e.nrows();
    if n == 0 {
        return true;
    }
    let e = to_complex(&lum.e);
    let a = to_complex(&lum.a);
    let radius = SampleConfig::radius_of([&lum.e, &lum.a]);
    samp.points(n + 1, radius)
        .into_iter()
        .any(|l| rank_of(&(&e * l - &a), cfg) == n)
}

/// `[E; C]` has full column rank and `[lambda E - A; C]` has full column
/// rank at every finite `lambda`.
pub fn oracle_observable(lum: &LumpedDescriptor, cfg: &ToleranceConfig) -> Result<bool> {
    if !oracle_regular(lum, cfg, &SampleConfig::default()) {
        return Err(Error::InconclusiveNotRegular);
    }
    let n = lum.e.nrows();
    let e = to_complex(&lum.e);
    let c = to_complex(&lum.c);
    if rank_of(&vstack(&[&e, &c]), cfg) < n {
        return Ok(false);
    }
    let p = Pencil::new(
        vstack(&[&e, &zeros(c.nrows(), n)]),
        vstack(&[&-to_complex(&lum.a), &c]),
    )?;
    oracle_fcr_everywhere(&p, cfg)
}

/// `[E B]` has full row rank and `[lambda E - A, B]` has full row rank at
/// every finite `lambda`.
pub fn oracle_controllable(lum: &LumpedDescriptor, cfg: &ToleranceConfig) -> Result<bool> {
    if !oracle_regular(lum, cfg, &SampleConfig::default()) {
        return Err(Error::InconclusiveNotRegular);
    }
    let n = lum.e.nrows();
    let e = to_complex(&lum.e);
    let b = to_complex(&lum.b);
    if rank_of(&hstack(&[&e, &b]), cfg) < n {
        return Ok(false);
    }
    let p = Pencil::new(
        vstack(&[&e.transpose(), &zeros(b.ncols(), n)]),
        vstack(&[&-to_complex(&lum.a).transpose(), &b.transpose()]),
    )?;
    oracle_fcr_everywhere(&p, cfg)
}

/// One analysis verdict next to the dense reference answer.
#[derive(Debug, Clone)]
pub struct CrossCheck {
    pub check: &'static str,
    pub report: AnalysisReport,
    /// `None` when the reference is inconclusive (irregular model).
    pub oracle: Option<bool>,
}

impl CrossCheck {
    /// Pass matches `true`, fail matches `false`, inconclusive matches an
    /// inconclusive reference.
    pub fn agrees(&self) -> bool {
        matches!(
            (self.report.verdict, self.oracle),
            (Verdict::Pass, Some(true))
                | (Verdict::Fail, Some(false))
                | (Verdict::Inconclusive, None)
        )
    }
}

fn inconclusive(r: Result<bool>) -> Result<Option<bool>> {
    match r {
        Ok(b) => Ok(Some(b)),
        Err(Error::InconclusiveNotRegular) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs regularity, observability and controllability through the analysis
/// module and through the lumped-system references.
pub fn cross_check(model: &NdsModel, opts: &AnalysisOptions) -> Result<Vec<CrossCheck>> {
    let cfg = &opts.tol;
    let lum = build_lumped(model, cfg)?;
    Ok(vec![
        CrossCheck {
            check: "regularity",
            report: check_regularity_with(model, opts)?,
            oracle: Some(oracle_regular(&lum, cfg, &opts.samples)),
        },
        CrossCheck {
            check: "observability",
            report: check_observability_with(model, opts)?,
            oracle: inconclusive(oracle_observable(&lum, cfg))?,
        },
        CrossCheck {
            check: "controllability",
            report: check_controllability_with(model, opts)?,
            oracle: inconclusive(oracle_controllable(&lum, cfg))?,
        },
    ])
}

/// Whether random models are plain numeric or generalized-LFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelMode {
    Numeric,
    Lft,
}

/// Knobs of [`random_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomModelSpec {
    pub seed: u64,
    pub n_subsystems: RangeInclusive<usize>,
    pub x: RangeInclusive<usize>,
    pub v: RangeInclusive<usize>,
    pub z: RangeInclusive<usize>,
    pub u: RangeInclusive<usize>,
    pub y: RangeInclusive<usize>,
    /// Probability that an SCM entry is nonzero.
    pub phi_density: f64,
    /// Probability that a subsystem's `E` is rank deficient.
    pub singular_e_prob: f64,
    /// Probability that a whole coefficient matrix is zero.
    pub zero_matrix_prob: f64,
    /// Probability that an individual entry is zero.
    pub zero_entry_prob: f64,
    /// Widths of the LFT parameter channels (`q1`, `r1`, `q2`, `r2`).
    pub lft_width: RangeInclusive<usize>,
    pub mode: ModelMode,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_subsystems: 1..=4,
            x: 0..=3,
            v: 0..=3,
            z: 0..=3,
            u: 0..=3,
            y: 0..=3,
            phi_density: 0.5,
            singular_e_prob: 0.3,
            zero_matrix_prob: 0.2,
            zero_entry_prob: 0.3,
            lft_width: 0..=2,
            mode: ModelMode::Numeric,
        }
    }
}

impl RandomModelSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        let ranges = [
            ("n_subsystems", &self.n_subsystems),
            ("x", &self.x),
            ("v", &self.v),
            ("z", &self.z),
            ("u", &self.u),
            ("y", &self.y),
            ("lft_width", &self.lft_width),
        ];
        for (name, r) in ranges {
            if r.is_empty() {
                return Err(Error::InvalidArgument(format!("range {name} is empty")));
            }
        }
        for (name, p) in [
            ("phi_density", self.phi_density),
            ("singular_e_prob", self.singular_e_prob),
            ("zero_matrix_prob", self.zero_matrix_prob),
            ("zero_entry_prob", self.zero_entry_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 100;

/// Deterministic random model for `spec.seed`, resampled until it is well
/// posed.
pub fn random_model(spec: &RandomModelSpec) -> Result<NdsModel> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cfg = ToleranceConfig::default();
    for _ in 0..MAX_ATTEMPTS {
        let model = sample(spec, &mut rng);
        if crate::model::validate(&model).is_ok() && check_wellposed(&model, &cfg) {
            return Ok(model);
        }
    }
    Err(Error::GenerationExhausted {
        attempts: MAX_ATTEMPTS,
    })
}

struct Gen<'a> {
    spec: &'a RandomModelSpec,
    rng: &'a mut ChaCha8Rng,
}

impl Gen<'_> {
    fn size(&mut self, r: &RangeInclusive<usize>) -> usize {
        self.rng.random_range(r.clone())
    }

    fn entry(&mut self) -> f64 {
        if self.rng.random_bool(self.spec.zero_entry_prob) {
            0.0
        } else {
            // Small integers keep structural rank drops exact.
            let k: i32 = self.rng.random_range(1..=2);
            if self.rng.random_bool(0.5) {
                k as f64
            } else {
                -k as f64
            }
        }
    }

    fn dense(&mut self, r: usize, c: usize) -> RMatrix {
        RMatrix::from_fn(r, c, |_, _| self.entry())
    }

    fn matrix(&mut self, r: usize, c: usize) -> RMatrix {
        if self.rng.random_bool(self.spec.zero_matrix_prob) {
            RMatrix::zeros(r, c)
        } else {
            self.dense(r, c)
        }
    }

    fn e_matrix(&mut self, n: usize) -> RMatrix {
        if n > 0 && self.rng.random_bool(self.spec.singular_e_prob) {
            let k = self.rng.random_range(0..n);
            self.dense(n, k) * self.dense(k, n)
        } else {
            let mut e = self.dense(n, n);
            for i in 0..n {
                e[(i, i)] += 3.0;
            }
            e
        }
    }

    fn numeric(&mut self, id: String) -> SubsystemNumeric {
        let s = self.spec;
        let d = Dims {
            x: self.size(&s.x),
            v: self.size(&s.v),
            z: self.size(&s.z),
            u: self.size(&s.u),
            y: self.size(&s.y),
        };
        SubsystemNumeric {
            id,
            dims: d,
            e: self.e_matrix(d.x),
            a_xx: self.matrix(d.x, d.x),
            a_xv: self.matrix(d.x, d.v),
            b_x: self.matrix(d.x, d.u),
            a_zx: self.matrix(d.z, d.x),
            a_zv: self.matrix(d.z, d.v),
            b_z: self.matrix(d.z, d.u),
            c_x: self.matrix(d.y, d.x),
            c_v: self.matrix(d.y, d.v),
            d_u: self.matrix(d.y, d.u),
        }
    }

    fn lft(&mut self, id: String) -> SubsystemLft {
        let base = self.numeric(id);
        let d = base.dims;
        let w = self.spec.lft_width.clone();
        let (q1, r1, q2, r2) = (self.size(&w), self.size(&w), self.size(&w), self.size(&w));
        let mut s = SubsystemLft::from_numeric(&base);
        s.f1 = self.matrix(d.x, q1);
        s.f2 = self.matrix(d.x, q1);
        s.f3 = self.matrix(d.y, q1);
        s.f4 = self.matrix(d.z, q1);
        s.g = self.matrix(r1, d.x);
        s.h = self.matrix(r1, q1);
        s.m = self.dense(q1, q1);
        s.j1 = self.matrix(d.x, q2);
        s.j2 = self.matrix(d.y, q2);
        s.j3 = self.matrix(d.z, q2);
        s.k = self.matrix(r2, d.v);
        s.s = self.matrix(r2, q2);
        s.n = self.dense(q2, q2);
        s.p1 = self.dense(q1, r1) * 0.5;
        s.p2 = self.dense(q2, r2) * 0.5;
        s
    }

    fn scm(&mut self, rows: usize, cols: usize) -> Scm {
        let mut scm = Scm::empty(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if self.rng.random_bool(self.spec.phi_density) {
                    let v = loop {
                        let v = self.entry();
                        if v != 0.0 {
                            break v;
                        }
                    };
                    scm.entries.push((r, c, v));
                }
            }
        }
        scm
    }
}

fn sample(spec: &RandomModelSpec, rng: &mut ChaCha8Rng) -> NdsModel {
    let mut g = Gen { spec, rng };
    let n = g.size(&spec.n_subsystems);
    let mut model = match spec.mode {
        ModelMode::Numeric => NdsModel::numeric(
            (0..n).map(|i| g.numeric(format!("s{}", i + 1))).collect(),
            Scm::empty(0, 0),
        ),
        ModelMode::Lft => NdsModel::lft(
            (0..n).map(|i| g.lft(format!("s{}", i + 1))).collect(),
            Scm::empty(0, 0),
        ),
    };
    let t = model.totals();
    model.scm = g.scm(t.v, t.z);
    model
}
