use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use nds_core::analysis::{
    check_controllability_with, check_observability_param, check_observability_with,
    check_regularity_with, check_subsystem_design, subsystem_obs_structure, AnalysisOptions,
    AnalysisReport, Verdict,
};
use nds_core::model::{
    evaluate_model, model_to_json, parse_model, wellposedness, NdsModel, SubsystemLft, Subsystems,
};
use nds_core::oracle::{cross_check, random_model, ModelMode, RandomModelSpec};
use nds_core::{Error, Result};

use crate::CheckKind;

const DEFAULT_CHECKS: [CheckKind; 3] = [
    CheckKind::Regularity,
    CheckKind::Observability,
    CheckKind::Controllability,
];

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

/// 1 if anything failed, else 2 if anything was not decided, else 0.
fn exit_code(reports: &[AnalysisReport]) -> u8 {
    let any = |v: Verdict| reports.iter().any(|r| r.verdict == v);
    if any(Verdict::Fail) {
        1
    } else if any(Verdict::NotWellposed) || any(Verdict::Inconclusive) {
        2
    } else {
        0
    }
}

fn run_one(
    model: &NdsModel,
    kind: CheckKind,
    opts: &AnalysisOptions,
) -> Result<Vec<AnalysisReport>> {
    Ok(match kind {
        CheckKind::Regularity => vec![check_regularity_with(model, opts)?],
        CheckKind::Observability if model.is_lft() => vec![check_observability_param(model, opts)?],
        CheckKind::Observability => vec![check_observability_with(model, opts)?],
        CheckKind::Controllability => vec![check_controllability_with(model, opts)?],
        CheckKind::SubsystemDesign => {
            let subs: Vec<SubsystemLft> = match &model.subsystems {
                Subsystems::Lft(s) => s.clone(),
                Subsystems::Numeric(s) => s.iter().map(SubsystemLft::from_numeric).collect(),
            };
            subs.iter()
                .map(|s| {
                    let mut r = check_subsystem_design(s, opts)?;
                    r.notes.insert(0, format!("subsystem {}", s.id));
                    Ok(r)
                })
                .collect::<Result<_>>()?
        }
    })
}

pub fn check(
    input: &Path,
    checks: &[CheckKind],
    opts: &AnalysisOptions,
    json_out: Option<&Path>,
) -> Result<u8> {
    let model = parse_model(input)?;
    let checks = if checks.is_empty() {
        &DEFAULT_CHECKS[..]
    } else {
        checks
    };
    let mut reports = Vec::new();
    for &kind in checks {
        reports.extend(run_one(&model, kind, opts)?);
    }
    let mut text = String::new();
    for r in &reports {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        text.push_str(&line);
        text.push('\n');
    }
    match json_out {
        Some(path) => {
            fs::write(path, &text).map_err(|e| io_error(path, e))?;
            for r in &reports {
                println!("{}: {}", r.check, verdict_name(r.verdict));
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| io_error(Path::new("<stdout>"), e))?;
        }
    }
    Ok(exit_code(&reports))
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::NotWellposed => "not_wellposed",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// Disagreement lines for one model, empty when every check agrees.
fn disagreements(model: &NdsModel, opts: &AnalysisOptions) -> Result<Vec<String>> {
    Ok(cross_check(model, opts)?
        .into_iter()
        .filter(|c| !c.agrees())
        .map(|c| {
            let reference = match c.oracle {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "inconclusive",
            };
            format!(
                "{}: analysis {} ({:?}), reference {reference}",
                c.check,
                verdict_name(c.report.verdict),
                c.report.method
            )
        })
        .collect())
}

pub fn verify(
    input: Option<&Path>,
    seed: u64,
    count: u64,
    mode: ModelMode,
    opts: &AnalysisOptions,
) -> Result<u8> {
    let mut agree = 0u64;
    let mut total = 0u64;
    let mut out = std::io::stdout().lock();
    let mut emit = |line: &str| {
        let _ = writeln!(out, "{line}");
    };
    match input {
        Some(path) => {
            let model = parse_model(path)?;
            total = 1;
            let bad = disagreements(&model, opts)?;
            if bad.is_empty() {
                agree = 1;
            }
            for line in bad {
                emit(&format!("{}: {line}", path.display()));
            }
        }
        None => {
            for s in seed..seed + count {
                let spec = RandomModelSpec {
                    mode,
                    ..RandomModelSpec::with_seed(s)
                };
                let model = random_model(&spec)?;
                total += 1;
                let bad = disagreements(&model, opts)?;
                if bad.is_empty() {
                    agree += 1;
                }
                for line in bad {
                    emit(&format!("seed {s}: {line}"));
                }
            }
        }
    }
    emit(&format!("agreement {agree}/{total}"));
    Ok(if agree == total { 0 } else { 1 })
}

pub fn gen_random(seed: u64, mode: ModelMode, json_out: Option<&Path>) -> Result<u8> {
    let spec = RandomModelSpec {
        mode,
        ..RandomModelSpec::with_seed(seed)
    };
    let model = random_model(&spec)?;
    let text = serde_json::to_string_pretty(&model_to_json(&model))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    match json_out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| io_error(path, e))?,
        None => println!("{text}"),
    }
    Ok(0)
}

pub fn explain(input: &Path, opts: &AnalysisOptions) -> Result<u8> {
    let model = parse_model(input)?;
    let t = model.totals();
    let mut s = String::new();
    let mode = if model.is_lft() { "lft" } else { "numeric" };
    let _ = writeln!(s, "model: {mode}, {} subsystems", model.len());
    let _ = writeln!(
        s,
        "totals: x={} v={} z={} u={} y={}",
        t.x, t.v, t.z, t.u, t.y
    );
    let _ = writeln!(
        s,
        "scm: {}x{}, {} nonzero entries",
        model.scm.rows,
        model.scm.cols,
        model.scm.entries.len()
    );
    let wp = wellposedness(&model, &opts.tol)?;
    let _ = writeln!(
        s,
        "well-posed: {} (rcond {:.3e})",
        if wp.wellposed { "yes" } else { "no" },
        wp.rcond
    );
    if wp.wellposed {
        let numeric = evaluate_model(&model, &opts.tol)?;
        let mut whole = Vec::new();
        for sub in numeric.numeric_subsystems()? {
            let st = subsystem_obs_structure(sub, &opts.tol)?;
            let (mu, xi, eta, kappa, rho) = st.ks.invariants();
            let d = sub.dims;
            let _ = writeln!(
                s,
                "subsystem {} (x={} v={} z={} u={} y={}): reduced pencil blocks mu={mu} K={xi:?} N={eta:?} L={kappa:?} J={rho:?}",
                sub.id, d.x, d.v, d.z, d.u, d.y
            );
            if st.lambda_set.whole_plane {
                whole.push(sub.id.clone());
                let _ = writeln!(s, "  singular set: whole plane");
            } else {
                let pts: Vec<String> = st
                    .lambda_set
                    .points
                    .iter()
                    .map(|p| format!("{:.6}{:+.6}i", p.re, p.im))
                    .collect();
                let _ = writeln!(s, "  singular points: [{}]", pts.join(", "));
            }
        }
        if whole.is_empty() {
            let _ = writeln!(s, "observability method: scalable");
        } else {
            let _ = writeln!(
                s,
                "observability method: fallback_dense (whole-plane singular set in {})",
                whole.join(", ")
            );
        }
    }
    print!("{s}");
    Ok(0)
}
