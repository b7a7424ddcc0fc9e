//! Regularity, observability and controllability checks on networked
//! models. Every verdict comes with the points that were tested and, for
//! failures, null vectors of the matrix that lost rank.

mod numeric;
mod param;
mod reduce;

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::spectral_norm;
use crate::model::{NdsModel, RMatrix, Subsystems};
use crate::pencil::{Matrix, ToleranceConfig};

pub use numeric::{
    build_theta, build_xi_c, build_xi_inf_c, build_xi_inf_o, build_xi_o, check_controllability,
    check_controllability_with, check_observability, check_observability_finite,
    check_observability_infinity, check_observability_with, check_regularity,
    check_regularity_with, subsystem_obs_structure, SubsystemObsStructure,
};
pub use param::{
    build_param_pencils, check_controllability_param, check_observability_param,
    check_subsystem_design, ParamPencils,
};

/// Sample points for the regularity and subsystem-design tests.
///
/// Generated points lie on the circle of radius `1 + max ||M||_inf` over
/// the model's matrices, `lambda_k = r exp(2 pi i k / K)`. Extra points are
/// used first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleConfig {
    pub extra_points: Vec<Complex64>,
}

impl SampleConfig {
    /// `count` pairwise distinct points.
    pub fn points(&self, count: usize, radius: f64) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::with_capacity(count);
        for &p in &self.extra_points {
            if out.len() < count && !out.contains(&p) {
                out.push(p);
            }
        }
        let k = count + self.extra_points.len();
        for i in 0..k {
            if out.len() == count {
                break;
            }
            let t = std::f64::consts::TAU * i as f64 / k as f64;
            let p = Complex64::from_polar(radius, t);
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    /// `1 +` the largest max-row-sum norm among `mats`.
    pub fn radius_of<'a>(mats: impl IntoIterator<Item = &'a RMatrix>) -> f64 {
        let norm = |m: &RMatrix| {
            m.row_iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        1.0 + mats.into_iter().map(norm).fold(0.0, f64::max)
    }

    /// Circle radius for a model: covers every stored matrix and `Phi`.
    pub fn model_radius(model: &NdsModel) -> f64 {
        let phi = model.scm.to_dense();
        let mut mats: Vec<&RMatrix> = vec![&phi];
        match &model.subsystems {
            Subsystems::Numeric(subs) => {
                for s in subs {
                    mats.extend(s.fields().into_iter().map(|(_, m, _)| m));
                }
            }
            Subsystems::Lft(subs) => {
                for s in subs {
                    mats.extend(s.fields().into_iter().map(|(_, m, _)| m));
                }
            }
        }
        Self::radius_of(mats)
    }
}

/// What to do when a subsystem's singular set is the whole plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// Test the full network pencil densely.
    #[default]
    Allow,
    /// Report `inconclusive` instead.
    Forbid,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisOptions {
    pub tol: ToleranceConfig,
    pub fallback: FallbackPolicy,
    pub samples: SampleConfig,
}

impl From<ToleranceConfig> for AnalysisOptions {
    fn from(tol: ToleranceConfig) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotWellposed,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Per-subsystem reduction, rank tests only at the singular points.
    Scalable,
    /// Structure of the full network pencil.
    FallbackDense,
    /// Direct rank tests of a full network matrix.
    Dense,
}

/// A complex number as it appears in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cpx {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Cpx {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<Cpx> for Complex64 {
    fn from(z: Cpx) -> Self {
        Complex64::new(z.re, z.im)
    }
}

/// Evidence for a failed rank condition: `matrix(lambda) * witness ~ 0`.
///
/// Matrix names: `theta`, `xi_o`, `xi_inf_o`, `xi_c^T`, `xi_inf_c^T`,
/// `xi_p`, `xi_inf_p`, `xi_p_sub`, and the reduced forms `reduced_o`,
/// `reduced_inf_o`, `reduced_p`, `reduced_inf_p`, `stack_sub`. Constant
/// matrices carry no `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Cpx>,
    pub witness: Vec<Cpx>,
    pub matrix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystem: Option<usize>,
    /// The matrix the witness was checked against; not serialized.
    #[serde(skip)]
    pub evaluated: Option<Matrix>,
}

impl Certificate {
    pub(crate) fn new(
        lambda: Option<Complex64>,
        matrix: &str,
        evaluated: Matrix,
        witness: &[Complex64],
    ) -> Self {
        Self {
            lambda: lambda.map(Cpx::from),
            witness: normalize_witness(witness)
                .into_iter()
                .map(Cpx::from)
                .collect(),
            matrix: matrix.to_string(),
            subsystem: None,
            evaluated: Some(evaluated),
        }
    }

    pub fn witness_vec(&self) -> Vec<Complex64> {
        self.witness.iter().map(|&z| z.into()).collect()
    }

    pub fn lambda_value(&self) -> Option<Complex64> {
        self.lambda.map(Complex64::from)
    }

    /// `||M w|| / (||M|| ||w||)` against the stored matrix.
    pub fn residual(&self) -> Option<f64> {
        self.evaluated
            .as_ref()
            .map(|m| witness_residual(m, &self.witness_vec()))
    }
}

/// Unit norm, with the first clearly nonzero entry rotated onto the
/// positive real axis.
pub fn normalize_witness(v: &[Complex64]) -> Vec<Complex64> {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n == 0.0 {
        return v.to_vec();
    }
    let mut out: Vec<Complex64> = v.iter().map(|z| z / n).collect();
    if let Some(lead) = out.iter().find(|z| z.norm() > 1e-10).copied() {
        let rot = lead.conj() / lead.norm();
        for z in &mut out {
            *z *= rot;
        }
    }
    out
}

/// Relative residual `||M w|| / (||M||_2 ||w||)`.
pub fn witness_residual(m: &Matrix, w: &[Complex64]) -> f64 {
    if m.ncols() != w.len() {
        return f64::INFINITY;
    }
    let wv = Matrix::from_column_slice(w.len(), 1, w);
    let wn = wv.norm();
    let r = (m * &wv).norm();
    let mn = spectral_norm(m);
    if mn == 0.0 || wn == 0.0 {
        r
    } else {
        r / (mn * wn)
    }
}

/// Verdict of one part of a combined check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartVerdict {
    pub name: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub check: String,
    pub verdict: Verdict,
    pub method: Method,
    /// Points at which a rank test actually ran.
    pub lambda_points: Vec<Cpx>,
    pub certificates: Vec<Certificate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<PartVerdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub timings_ms: f64,
}

impl AnalysisReport {
    pub(crate) fn new(check: &str, method: Method) -> Self {
        Self {
            check: check.to_string(),
            verdict: Verdict::Pass,
            method,
            lambda_points: Vec::new(),
            certificates: Vec::new(),
            parts: Vec::new(),
            notes: Vec::new(),
            timings_ms: 0.0,
        }
    }

    pub(crate) fn with_verdict(check: &str, verdict: Verdict, note: impl Into<String>) -> Self {
        let mut r = Self::new(check, Method::Dense);
        r.verdict = verdict;
        r.notes.push(note.into());
        r
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Orders certificates by `(Re lambda, Im lambda, subsystem)`; constant
    /// matrices sort last.
    pub(crate) fn sort_certificates(&mut self) {
        let key = |c: &Certificate| {
            let l = c.lambda.unwrap_or(Cpx {
                re: f64::INFINITY,
                im: f64::INFINITY,
            });
            (l.re, l.im, c.subsystem.unwrap_or(usize::MAX))
        };
        self.certificates.sort_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.cmp(&kb.2))
        });
    }

    pub(crate) fn timed(mut self, start: Instant) -> Self {
        self.timings_ms = start.elapsed().as_secs_f64() * 1e3;
        self
    }
}
