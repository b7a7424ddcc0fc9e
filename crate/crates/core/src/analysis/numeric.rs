use std::time::Instant;

use num_complex::Complex64;

use super::reduce::{cluster, reduced_fcr, Layout, Reduction};
use super::{
    AnalysisOptions, AnalysisReport, Certificate, FallbackPolicy, Method, PartVerdict,
    SampleConfig, Verdict,
};
use crate::error::{Error, Result};
use crate::kcf::{singular_points, wong_rank_drops, KroneckerStructure, SingularPointSet};
use crate::linalg::{block_diag, eye, hstack, rows, to_complex, vstack, zeros};
use crate::model::{
    assemble, dualize, evaluate_model, wellposedness, NdsModel, SubsystemNumeric, Totals,
};
use crate::oracle::fcr_everywhere_structure;
use crate::pencil::{
    null_basis, null_via_composition, rank_of, smallest_right_singular_vector, Matrix, Pencil,
    ToleranceConfig,
};

/// Complex block-diagonal stacks of a numeric model plus `Phi`.
pub(crate) struct Net {
    pub t: Totals,
    pub e: Matrix,
    pub axx: Matrix,
    pub axv: Matrix,
    pub azx: Matrix,
    pub azv: Matrix,
    pub bx: Matrix,
    pub bz: Matrix,
    pub cx: Matrix,
    pub cv: Matrix,
    pub phi: Matrix,
}

impl Net {
    pub fn new(model: &NdsModel) -> Result<Self> {
        let st = assemble(model)?;
        Ok(Self {
            t: model.totals(),
            e: to_complex(&st.e),
            axx: to_complex(&st.a_xx),
            axv: to_complex(&st.a_xv),
            azx: to_complex(&st.a_zx),
            azv: to_complex(&st.a_zv),
            bx: to_complex(&st.b_x),
            bz: to_complex(&st.b_z),
            cx: to_complex(&st.c_x),
            cv: to_complex(&st.c_v),
            phi: to_complex(&model.scm.to_dense()),
        })
    }

    /// `[-Phi A_zx, I - Phi A_zv]`
    fn coupling_rows(&self) -> Matrix {
        hstack(&[
            &-(&self.phi * &self.azx),
            &(eye(self.t.v) - &self.phi * &self.azv),
        ])
    }
}

/// `[[l0 E - A_xx, -A_xv], [-Phi A_zx, I - Phi A_zv]]`
pub fn build_theta(model: &NdsModel, l0: Complex64) -> Result<Matrix> {
    let net = Net::new(model)?;
    Ok(theta(&net, l0))
}

fn theta(net: &Net, l0: Complex64) -> Matrix {
    let top = hstack(&[&(&net.e * l0 - &net.axx), &-&net.axv]);
    vstack(&[&top, &net.coupling_rows()])
}

/// The observability pencil on columns `[x; v]`:
/// `[[l E - A_xx, -A_xv], [-C_x, -C_v], [-Phi A_zx, I - Phi A_zv]]`.
pub fn build_xi_o(model: &NdsModel) -> Result<Pencil> {
    let net = Net::new(model)?;
    Ok(xi_o(&net))
}

fn xi_o(net: &Net) -> Pencil {
    let (mx, mv, my) = (net.t.x, net.t.v, net.t.y);
    let g = vstack(&[&hstack(&[&net.e, &zeros(mx, mv)]), &zeros(my + mv, mx + mv)]);
    let h = vstack(&[
        &hstack(&[&-&net.axx, &-&net.axv]),
        &hstack(&[&-&net.cx, &-&net.cv]),
        &net.coupling_rows(),
    ]);
    Pencil { g, h }
}

/// `[[E, 0], [-C_x, -C_v], [-Phi A_zx, I - Phi A_zv]]`
pub fn build_xi_inf_o(model: &NdsModel) -> Result<Matrix> {
    let net = Net::new(model)?;
    Ok(xi_inf_o(&net))
}

fn xi_inf_o(net: &Net) -> Matrix {
    vstack(&[
        &hstack(&[&net.e, &zeros(net.t.x, net.t.v)]),
        &hstack(&[&-&net.cx, &-&net.cv]),
        &net.coupling_rows(),
    ])
}

/// The controllability pencil on columns `[x; u; z]`:
/// `[[l E - A_xx, -B_x, -A_xv Phi], [-A_zx, -B_z, I - A_zv Phi]]`.
pub fn build_xi_c(model: &NdsModel) -> Result<Pencil> {
    let net = Net::new(model)?;
    let (mx, mu, mz) = (net.t.x, net.t.u, net.t.z);
    let g = vstack(&[
        &hstack(&[&net.e, &zeros(mx, mu + mz)]),
        &zeros(mz, mx + mu + mz),
    ]);
    let h = vstack(&[
        &hstack(&[&-&net.axx, &-&net.bx, &-(&net.axv * &net.phi)]),
        &hstack(&[&-&net.azx, &-&net.bz, &(eye(mz) - &net.azv * &net.phi)]),
    ]);
    Ok(Pencil { g, h })
}

/// `[[E, -B_x, -A_xv Phi], [0, -B_z, I - A_zv Phi]]`
pub fn build_xi_inf_c(model: &NdsModel) -> Result<Matrix> {
    let net = Net::new(model)?;
    let (mx, mz) = (net.t.x, net.t.z);
    Ok(vstack(&[
        &hstack(&[&net.e, &-&net.bx, &-(&net.axv * &net.phi)]),
        &hstack(&[&zeros(mz, mx), &-&net.bz, &(eye(mz) - &net.azv * &net.phi)]),
    ]))
}

/// Per-subsystem data for the scalable observability test.
#[derive(Debug, Clone)]
pub struct SubsystemObsStructure {
    /// Rows of the null basis of `[C_x C_v]` belonging to `x`.
    pub n_x: Matrix,
    /// Rows belonging to `v`.
    pub n_v: Matrix,
    /// Structure of `l E N_x - (A_xx N_x + A_xv N_v)`.
    pub ks: KroneckerStructure,
    pub lambda_set: SingularPointSet,
    pub v_inv_lead: Matrix,
}

pub(crate) fn obs_reduction(sub: &SubsystemNumeric, cfg: &ToleranceConfig) -> Result<Reduction> {
    let d = sub.dims;
    let c = hstack(&[&to_complex(&sub.c_x), &to_complex(&sub.c_v)]);
    let basis = null_basis(&c, cfg);
    let g = hstack(&[&to_complex(&sub.e), &zeros(d.x, d.v)]);
    let h = -hstack(&[&to_complex(&sub.a_xx), &to_complex(&sub.a_xv)]);
    Reduction::new(basis, &g, &h, cfg)
}

pub fn subsystem_obs_structure(
    sub: &SubsystemNumeric,
    cfg: &ToleranceConfig,
) -> Result<SubsystemObsStructure> {
    let r = obs_reduction(sub, cfg)?;
    let d = sub.dims;
    Ok(SubsystemObsStructure {
        n_x: rows(&r.basis, 0..d.x),
        n_v: rows(&r.basis, d.x..d.x + d.v),
        lambda_set: r.set,
        v_inv_lead: r.vinv,
        ks: r.ks,
    })
}

/// Numeric copy of the model, or a `not_wellposed` report.
pub(crate) fn prepare(
    model: &NdsModel,
    check: &str,
    cfg: &ToleranceConfig,
) -> Result<std::result::Result<NdsModel, AnalysisReport>> {
    let numeric = match evaluate_model(model, cfg) {
        Ok(m) => m,
        Err(e @ Error::LftIllPosed { .. }) => {
            return Ok(Err(AnalysisReport::with_verdict(
                check,
                Verdict::NotWellposed,
                e.to_string(),
            )))
        }
        Err(e) => return Err(e),
    };
    let w = wellposedness(&numeric, cfg)?;
    if !w.wellposed {
        return Ok(Err(AnalysisReport::with_verdict(
            check,
            Verdict::NotWellposed,
            format!("I - Phi*A_zv is singular (rcond {:.3e})", w.rcond),
        )));
    }
    Ok(Ok(numeric))
}

/// Dense regularity test of the network.
pub fn check_regularity(model: &NdsModel, cfg: &ToleranceConfig) -> Result<AnalysisReport> {
    check_regularity_with(model, &AnalysisOptions::from(*cfg))
}

pub fn check_regularity_with(model: &NdsModel, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let start = Instant::now();
    let model = match prepare(model, "regularity", &opts.tol)? {
        Ok(m) => m,
        Err(r) => return Ok(r.timed(start)),
    };
    let net = Net::new(&model)?;
    let radius = SampleConfig::model_radius(&model);
    let points = opts.samples.points(net.t.x + 1, radius);
    Ok(regularity_over(points, "regularity", "theta", |l| theta(&net, l), &opts.tol).timed(start))
}

/// Passes at the first point where the square matrix is invertible;
/// otherwise fails with one null vector per point.
pub(crate) fn regularity_over(
    points: Vec<Complex64>,
    check: &str,
    name: &str,
    build: impl Fn(Complex64) -> Matrix,
    cfg: &ToleranceConfig,
) -> AnalysisReport {
    let mut report = AnalysisReport::new(check, Method::Dense);
    let mut certs = Vec::new();
    for l in points {
        report.lambda_points.push(l.into());
        let m = build(l);
        if rank_of(&m, cfg) == m.ncols() {
            return report;
        }
        let w = smallest_right_singular_vector(&m).unwrap_or_default();
        certs.push(Certificate::new(Some(l), name, m, &w));
    }
    report.verdict = Verdict::Fail;
    report.certificates = certs;
    report.sort_certificates();
    report
}

/// Rank test at the union of the subsystems' singular points, or the dense
/// structure test when some singular set is the whole plane.
pub fn check_observability_finite(
    model: &NdsModel,
    cfg: &ToleranceConfig,
) -> Result<AnalysisReport> {
    let start = Instant::now();
    let opts = AnalysisOptions::from(*cfg);
    let model = match prepare(model, "observability_finite", cfg)? {
        Ok(m) => m,
        Err(r) => return Ok(r.timed(start)),
    };
    Ok(finite(&model, &opts)?.timed(start))
}

fn finite(model: &NdsModel, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let cfg = &opts.tol;
    let net = Net::new(model)?;
    let subs = model.numeric_subsystems()?;
    let reds = subs
        .iter()
        .map(|s| obs_reduction(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut report = AnalysisReport::new("observability_finite", Method::Scalable);
    if let Some(i) = reds.iter().position(|r| r.set.whole_plane) {
        let why = format!(
            "subsystem {i} has a right singular block; its singular set is the whole plane"
        );
        return dense_fallback(&xi_o(&net), "xi_o", report, why, opts);
    }
    let layout = Layout::new(
        &subs
            .iter()
            .map(|s| vec![s.dims.x, s.dims.v])
            .collect::<Vec<_>>(),
    );
    let sets: Vec<&SingularPointSet> = reds.iter().map(|r| &r.set).collect();
    let pencil = xi_o(&net);
    for (l0, own) in cluster(&sets, cfg.rel_rank_tol) {
        report.lambda_points.push(l0.into());
        let zs: Vec<Matrix> = reds
            .iter()
            .zip(&own)
            .zip(subs)
            .map(|((r, p), s)| match p {
                Some(p) => r.null_at(*p, true, cfg),
                None => zeros(s.dims.x + s.dims.v, 0),
            })
            .collect();
        let width: usize = zs.iter().map(|z| z.ncols()).sum();
        if width == 0 {
            continue;
        }
        let xs: Vec<Matrix> = zs
            .iter()
            .zip(subs)
            .map(|(z, s)| rows(z, s.dims.x..s.dims.x + s.dims.v))
            .collect();
        let ys: Vec<Matrix> = zs
            .iter()
            .zip(subs)
            .map(|(z, s)| hstack(&[&to_complex(&s.a_zx), &to_complex(&s.a_zv)]) * z)
            .collect();
        let reduced = block_diag(&xs) - &net.phi * block_diag(&ys);
        let zg = layout.place(&zs);
        let full = pencil.eval(l0);
        if reduced_fcr(&reduced, &full, &zg, cfg) {
            continue;
        }
        report.verdict = Verdict::Fail;
        let w = smallest_right_singular_vector(&reduced).unwrap_or_default();
        let lifted = zg * Matrix::from_column_slice(width, 1, &w);
        report.certificates.push(lift_or_reduce(
            Some(l0),
            (full, "xi_o", lifted.as_slice()),
            (reduced, "reduced_o", &w),
            cfg,
        ));
    }
    report.sort_certificates();
    Ok(report)
}

/// Certificate on the full matrix when the lifted witness checks out there,
/// otherwise on the reduced matrix.
pub(crate) fn lift_or_reduce(
    l0: Option<Complex64>,
    full: (Matrix, &str, &[Complex64]),
    reduced: (Matrix, &str, &[Complex64]),
    cfg: &ToleranceConfig,
) -> Certificate {
    let cert = Certificate::new(l0, full.1, full.0, full.2);
    if cert.residual().is_some_and(|r| r <= cfg.residual_tol) {
        cert
    } else {
        Certificate::new(l0, reduced.1, reduced.0, reduced.2)
    }
}

/// Everywhere-FCR test of a whole pencil; failures get witnesses at the
/// finite eigenvalues, or at one generic point when right singular blocks
/// make every point fail.
pub(crate) fn dense_fallback(
    p: &Pencil,
    name: &str,
    mut report: AnalysisReport,
    why: String,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    report.method = Method::FallbackDense;
    report.notes.push(why);
    if opts.fallback == FallbackPolicy::Forbid {
        report.verdict = Verdict::Inconclusive;
        report.notes.push("dense fallback is forbidden".into());
        return Ok(report);
    }
    let cfg = &opts.tol;
    let set = match fcr_everywhere_structure(p, cfg) {
        Ok((true, _)) => return Ok(report),
        Ok((false, ks)) => singular_points(&ks, cfg),
        Err(Error::Conditioning(why)) => {
            let set = wong_rank_drops(p, cfg)?;
            if !set.whole_plane && set.points.is_empty() {
                return Ok(report);
            }
            report.notes.push(format!(
                "canonical form unavailable ({why}); used the Wong limit"
            ));
            set
        }
        Err(e) => return Err(e),
    };
    report.verdict = Verdict::Fail;
    let points = if set.whole_plane {
        vec![Complex64::new(1.0 + p.scale(), 0.0)]
    } else {
        set.points
    };
    for l in points {
        report.lambda_points.push(l.into());
        let m = p.eval(l);
        let w = smallest_right_singular_vector(&m).unwrap_or_default();
        report
            .certificates
            .push(Certificate::new(Some(l), name, m, &w));
    }
    report.sort_certificates();
    Ok(report)
}

/// `[E; C]`-type condition, reduced subsystem by subsystem.
pub fn check_observability_infinity(
    model: &NdsModel,
    cfg: &ToleranceConfig,
) -> Result<AnalysisReport> {
    let start = Instant::now();
    let model = match prepare(model, "observability_infinity", cfg)? {
        Ok(m) => m,
        Err(r) => return Ok(r.timed(start)),
    };
    Ok(infinity(&model, cfg)?.timed(start))
}

fn infinity(model: &NdsModel, cfg: &ToleranceConfig) -> Result<AnalysisReport> {
    let net = Net::new(model)?;
    let subs = model.numeric_subsystems()?;
    let mut report = AnalysisReport::new("observability_infinity", Method::Scalable);
    let ws = subs
        .iter()
        .map(|s| {
            let d = s.dims;
            let top = hstack(&[&to_complex(&s.e), &zeros(d.x, d.v)]);
            let bottom = hstack(&[&to_complex(&s.c_x), &to_complex(&s.c_v)]);
            null_via_composition(&top, &bottom, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let width: usize = ws.iter().map(|w| w.ncols()).sum();
    if width == 0 {
        return Ok(report);
    }
    let layout = Layout::new(
        &subs
            .iter()
            .map(|s| vec![s.dims.x, s.dims.v])
            .collect::<Vec<_>>(),
    );
    let wg = layout.place(&ws);
    let reduced = net.coupling_rows() * &wg;
    let full = xi_inf_o(&net);
    if reduced_fcr(&reduced, &full, &wg, cfg) {
        return Ok(report);
    }
    report.verdict = Verdict::Fail;
    let w = smallest_right_singular_vector(&reduced).unwrap_or_default();
    let lifted = &wg * Matrix::from_column_slice(width, 1, &w);
    report.certificates.push(lift_or_reduce(
        None,
        (full, "xi_inf_o", lifted.as_slice()),
        (reduced, "reduced_inf_o", &w),
        cfg,
    ));
    Ok(report)
}

/// Fail if any part fails, otherwise inconclusive if any part is, otherwise
/// pass.
pub(crate) fn combine(parts: &[&AnalysisReport]) -> Verdict {
    if parts.iter().any(|r| r.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if parts.iter().any(|r| r.verdict != Verdict::Pass) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

pub(crate) fn merge_parts(check: &str, parts: Vec<AnalysisReport>) -> AnalysisReport {
    let refs: Vec<&AnalysisReport> = parts.iter().collect();
    let verdict = combine(&refs);
    let method = if parts.iter().any(|r| r.method == Method::FallbackDense) {
        Method::FallbackDense
    } else {
        Method::Scalable
    };
    let mut out = AnalysisReport::new(check, method);
    out.verdict = verdict;
    for p in parts {
        out.parts.push(PartVerdict {
            name: p.check.clone(),
            verdict: p.verdict,
        });
        out.lambda_points.extend(p.lambda_points);
        out.certificates.extend(p.certificates);
        out.notes.extend(p.notes);
    }
    out.sort_certificates();
    out
}

/// Complete observability: finite and infinite parts on a regular,
/// well-posed network.
pub fn check_observability(model: &NdsModel, cfg: &ToleranceConfig) -> Result<AnalysisReport> {
    check_observability_with(model, &AnalysisOptions::from(*cfg))
}

pub fn check_observability_with(
    model: &NdsModel,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let start = Instant::now();
    let model = match prepare(model, "observability", &opts.tol)? {
        Ok(m) => m,
        Err(r) => return Ok(r.timed(start)),
    };
    let reg = check_regularity_with(&model, opts)?;
    if reg.verdict != Verdict::Pass {
        return Ok(irregular("observability", reg).timed(start));
    }
    let parts = vec![finite(&model, opts)?, infinity(&model, &opts.tol)?];
    Ok(merge_parts("observability", parts).timed(start))
}

pub(crate) fn irregular(check: &str, reg: AnalysisReport) -> AnalysisReport {
    let mut r = AnalysisReport::new(check, Method::Dense);
    r.verdict = Verdict::Inconclusive;
    r.lambda_points = reg.lambda_points;
    r.parts.push(PartVerdict {
        name: reg.check,
        verdict: reg.verdict,
    });
    r.notes
        .push("the network is not regular, so the rank conditions do not apply".into());
    r
}

/// Complete controllability, decided on the dual network. Witnesses are
/// left null vectors of the controllability matrices.
pub fn check_controllability(model: &NdsModel, cfg: &ToleranceConfig) -> Result<AnalysisReport> {
    check_controllability_with(model, &AnalysisOptions::from(*cfg))
}

pub fn check_controllability_with(
    model: &NdsModel,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let start = Instant::now();
    let model = match prepare(model, "controllability", &opts.tol)? {
        Ok(m) => m,
        Err(r) => return Ok(r.timed(start)),
    };
    let mut r = check_observability_with(&dualize(&model)?, opts)?;
    r.check = "controllability".into();
    for p in &mut r.parts {
        p.name = p.name.replace("observability", "controllability");
    }
    for c in &mut r.certificates {
        c.matrix = match c.matrix.as_str() {
            "xi_o" => "xi_c^T".into(),
            "xi_inf_o" => "xi_inf_c^T".into(),
            "reduced_o" => "reduced_c".into(),
            "reduced_inf_o" => "reduced_inf_c".into(),
            other => format!("dual_{other}"),
        };
    }
    Ok(r.timed(start))
}
