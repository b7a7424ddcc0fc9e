//! The JSON model file format.
//!
//! ```json
//! {"version": 1, "mode": "numeric",
//!  "subsystems": [{"id": "s1", "dims": {"x": 1, "v": 0, "z": 0, "u": 0, "y": 1},
//!                  "matrices": {"E": [[1]], "A_xx": [[0]], "C_x": [[1]]}}],
//!  "scm": {"entries": []}}
//! ```
//!
//! LFT subsystems use `base`, `factors`, `params` and `numeric` objects in
//! place of `matrices`. Omitted numeric matrices are zero.

use serde_json::{json, Map, Value};

use super::{validate, Dims, NdsModel, RMatrix, Scm, SubsystemLft, SubsystemNumeric, Subsystems};
use crate::error::{Error, Result};

fn perr(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        message: message.into(),
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| perr(path, "expected an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| perr(path, "expected an array"))
}

fn as_count(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| perr(path, "expected a nonnegative integer"))
}

fn as_number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| perr(path, "expected a number"))
}

/// Row-major nested array. An empty outer array yields a `0 x 0` matrix
/// that is reshaped later once the expected width is known.
fn parse_matrix(v: &Value, path: &str) -> Result<RMatrix> {
    let rows = as_array(v, path)?;
    let mut data = Vec::new();
    let mut width = None;
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let row = as_array(row, &rp)?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(perr(
                    rp,
                    format!("row has {} entries, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        for (j, x) in row.iter().enumerate() {
            data.push(as_number(x, &format!("{rp}[{j}]"))?);
        }
    }
    Ok(RMatrix::from_row_slice(
        rows.len(),
        width.unwrap_or(0),
        &data,
    ))
}

/// Empty matrices carry no width information; give them the expected shape.
fn fit(m: RMatrix, want: (usize, usize)) -> RMatrix {
    if m.is_empty() && want.0 * want.1 == 0 {
        RMatrix::zeros(want.0, want.1)
    } else {
        m
    }
}

struct Fields<'a> {
    obj: Option<&'a Map<String, Value>>,
    path: String,
}

impl<'a> Fields<'a> {
    fn new(parent: &'a Map<String, Value>, key: &str, path: &str) -> Result<Self> {
        let path = format!("{path}.{key}");
        let obj = match parent.get(key) {
            None => None,
            Some(v) => Some(as_object(v, &path)?),
        };
        Ok(Self { obj, path })
    }

    fn matrix(&self, key: &str, want: (usize, usize)) -> Result<RMatrix> {
        match self.obj.and_then(|o| o.get(key)) {
            None => Ok(RMatrix::zeros(want.0, want.1)),
            Some(v) => Ok(fit(parse_matrix(v, &format!("{}.{key}", self.path))?, want)),
        }
    }

    fn raw(&self, key: &str) -> Result<Option<RMatrix>> {
        match self.obj.and_then(|o| o.get(key)) {
            None => Ok(None),
            Some(v) => parse_matrix(v, &format!("{}.{key}", self.path)).map(Some),
        }
    }
}

fn parse_dims(obj: &Map<String, Value>, path: &str) -> Result<Dims> {
    let p = format!("{path}.dims");
    let d = as_object(obj.get("dims").ok_or_else(|| perr(&p, "missing"))?, &p)?;
    let get = |k: &str| -> Result<usize> {
        match d.get(k) {
            None => Ok(0),
            Some(v) => as_count(v, &format!("{p}.{k}")),
        }
    };
    Ok(Dims {
        x: get("x")?,
        v: get("v")?,
        z: get("z")?,
        u: get("u")?,
        y: get("y")?,
    })
}

fn parse_id(obj: &Map<String, Value>, path: &str, index: usize) -> Result<String> {
    match obj.get("id") {
        None => Ok(format!("{index}")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(perr(format!("{path}.id"), "expected a string")),
    }
}

fn parse_numeric(obj: &Map<String, Value>, path: &str, index: usize) -> Result<SubsystemNumeric> {
    let id = parse_id(obj, path, index)?;
    let dims = parse_dims(obj, path)?;
    let f = Fields::new(obj, "matrices", path)?;
    let mut s = SubsystemNumeric::zeros(id, dims);
    s.e = f.matrix("E", (dims.x, dims.x))?;
    s.a_xx = f.matrix("A_xx", (dims.x, dims.x))?;
    s.a_xv = f.matrix("A_xv", (dims.x, dims.v))?;
    s.b_x = f.matrix("B_x", (dims.x, dims.u))?;
    s.a_zx = f.matrix("A_zx", (dims.z, dims.x))?;
    s.a_zv = f.matrix("A_zv", (dims.z, dims.v))?;
    s.b_z = f.matrix("B_z", (dims.z, dims.u))?;
    s.c_x = f.matrix("C_x", (dims.y, dims.x))?;
    s.c_v = f.matrix("C_v", (dims.y, dims.v))?;
    s.d_u = f.matrix("D_u", (dims.y, dims.u))?;
    Ok(s)
}

fn parse_lft(obj: &Map<String, Value>, path: &str, index: usize) -> Result<SubsystemLft> {
    let id = parse_id(obj, path, index)?;
    let d = parse_dims(obj, path)?;
    if !obj.contains_key("factors") {
        return Err(perr(
            format!("{path}.factors"),
            format!("subsystem \"{id}\" has no factors object"),
        ));
    }
    let base = Fields::new(obj, "base", path)?;
    let fac = Fields::new(obj, "factors", path)?;
    let par = Fields::new(obj, "params", path)?;
    let num = Fields::new(obj, "numeric", path)?;

    // Channel widths come from the square cores M, N and the rows of G, K.
    let m = fac.raw("M")?.unwrap_or_else(|| RMatrix::zeros(0, 0));
    let n = fac.raw("N")?.unwrap_or_else(|| RMatrix::zeros(0, 0));
    let q1 = m.nrows();
    let q2 = n.nrows();
    let g = fit(
        fac.raw("G")?.unwrap_or_else(|| RMatrix::zeros(0, d.x)),
        (0, d.x),
    );
    let k = fit(
        fac.raw("K")?.unwrap_or_else(|| RMatrix::zeros(0, d.v)),
        (0, d.v),
    );
    let r1 = g.nrows();
    let r2 = k.nrows();

    Ok(SubsystemLft {
        id,
        dims: d,
        e0: base.matrix("E", (d.x, d.x))?,
        a_xx0: base.matrix("A_xx", (d.x, d.x))?,
        a_zx0: base.matrix("A_zx", (d.z, d.x))?,
        c_x0: base.matrix("C_x", (d.y, d.x))?,
        a_xv0: base.matrix("A_xv", (d.x, d.v))?,
        a_zv0: base.matrix("A_zv", (d.z, d.v))?,
        c_v0: base.matrix("C_v", (d.y, d.v))?,
        f1: fac.matrix("F1", (d.x, q1))?,
        f2: fac.matrix("F2", (d.x, q1))?,
        f3: fac.matrix("F3", (d.y, q1))?,
        f4: fac.matrix("F4", (d.z, q1))?,
        g,
        h: fac.matrix("H", (r1, q1))?,
        m: fit(m, (q1, q1)),
        j1: fac.matrix("J1", (d.x, q2))?,
        j2: fac.matrix("J2", (d.y, q2))?,
        j3: fac.matrix("J3", (d.z, q2))?,
        k,
        s: fac.matrix("S", (r2, q2))?,
        n: fit(n, (q2, q2)),
        p1: par.matrix("P1", (q1, r1))?,
        p2: par.matrix("P2", (q2, r2))?,
        b_x: num.matrix("B_x", (d.x, d.u))?,
        b_z: num.matrix("B_z", (d.z, d.u))?,
        d_u: num.matrix("D_u", (d.y, d.u))?,
    })
}

fn parse_scm(root: &Map<String, Value>, rows: usize, cols: usize) -> Result<Scm> {
    let mut scm = Scm::empty(rows, cols);
    let Some(v) = root.get("scm") else {
        return Ok(scm);
    };
    let obj = as_object(v, "scm")?;
    let Some(entries) = obj.get("entries") else {
        return Ok(scm);
    };
    for (k, e) in as_array(entries, "scm.entries")?.iter().enumerate() {
        let p = format!("scm.entries[{k}]");
        let t = as_array(e, &p)?;
        if t.len() != 3 {
            return Err(perr(p, "expected [row, col, value]"));
        }
        scm.entries.push((
            as_count(&t[0], &format!("{p}[0]"))?,
            as_count(&t[1], &format!("{p}[1]"))?,
            as_number(&t[2], &format!("{p}[2]"))?,
        ));
    }
    Ok(scm)
}

/// Builds and validates a model from a parsed JSON document.
pub fn model_from_json(doc: &Value) -> Result<NdsModel> {
    let root = as_object(doc, "$")?;
    match root.get("version") {
        None => {}
        Some(v) if v.as_u64() == Some(1) => {}
        Some(_) => return Err(perr("version", "only version 1 is supported")),
    }
    let mode = match root.get("mode") {
        None => "numeric",
        Some(v) => v
            .as_str()
            .ok_or_else(|| perr("mode", "expected a string"))?,
    };
    let subs = as_array(
        root.get("subsystems")
            .ok_or_else(|| perr("subsystems", "missing"))?,
        "subsystems",
    )?;
    let mut objs = Vec::with_capacity(subs.len());
    for (i, s) in subs.iter().enumerate() {
        objs.push(as_object(s, &format!("subsystems[{i}]"))?);
    }
    let subsystems = match mode {
        "numeric" => Subsystems::Numeric(
            objs.iter()
                .enumerate()
                .map(|(i, o)| parse_numeric(o, &format!("subsystems[{i}]"), i))
                .collect::<Result<_>>()?,
        ),
        "lft" => Subsystems::Lft(
            objs.iter()
                .enumerate()
                .map(|(i, o)| parse_lft(o, &format!("subsystems[{i}]"), i))
                .collect::<Result<_>>()?,
        ),
        other => return Err(perr("mode", format!("unknown mode \"{other}\""))),
    };
    let mut model = NdsModel {
        subsystems,
        scm: Scm::empty(0, 0),
    };
    let t = model.totals();
    model.scm = parse_scm(root, t.v, t.z)?;
    validate(&model)?;
    Ok(model)
}

/// Parses and validates a model from JSON text.
pub fn parse_model_str(text: &str) -> Result<NdsModel> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        perr(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    model_from_json(&doc)
}

/// Reads, parses and validates a model file.
pub fn parse_model(path: impl AsRef<std::path::Path>) -> Result<NdsModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| perr(path.display().to_string(), e.to_string()))?;
    parse_model_str(&text)
}

fn matrix_json(m: &RMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

fn dims_json(d: &Dims) -> Value {
    json!({"x": d.x, "v": d.v, "z": d.z, "u": d.u, "y": d.y})
}

fn fields_json<'a>(fields: impl IntoIterator<Item = (&'static str, &'a RMatrix)>) -> Value {
    Value::Object(
        fields
            .into_iter()
            .map(|(k, m)| (k.to_string(), matrix_json(m)))
            .collect(),
    )
}

/// Serializes a model to the file format. Keys are emitted in sorted order,
/// so equal models give identical text.
pub fn model_to_json(model: &NdsModel) -> Value {
    let (mode, subsystems): (&str, Vec<Value>) = match &model.subsystems {
        Subsystems::Numeric(subs) => (
            "numeric",
            subs.iter()
                .map(|s| {
                    json!({
                        "id": s.id,
                        "dims": dims_json(&s.dims),
                        "matrices": fields_json(s.fields().into_iter().map(|(k, m, _)| (k, m))),
                    })
                })
                .collect(),
        ),
        Subsystems::Lft(subs) => (
            "lft",
            subs.iter()
                .map(|s| {
                    json!({
                        "id": s.id,
                        "dims": dims_json(&s.dims),
                        "base": fields_json([
                            ("E", &s.e0), ("A_xx", &s.a_xx0), ("A_zx", &s.a_zx0), ("C_x", &s.c_x0),
                            ("A_xv", &s.a_xv0), ("A_zv", &s.a_zv0), ("C_v", &s.c_v0),
                        ]),
                        "factors": fields_json([
                            ("F1", &s.f1), ("F2", &s.f2), ("F3", &s.f3), ("F4", &s.f4),
                            ("G", &s.g), ("H", &s.h), ("M", &s.m),
                            ("J1", &s.j1), ("J2", &s.j2), ("J3", &s.j3),
                            ("K", &s.k), ("S", &s.s), ("N", &s.n),
                        ]),
                        "params": fields_json([("P1", &s.p1), ("P2", &s.p2)]),
                        "numeric": fields_json([("B_x", &s.b_x), ("B_z", &s.b_z), ("D_u", &s.d_u)]),
                    })
                })
                .collect(),
        ),
    };
    let entries: Vec<Value> = model
        .scm
        .entries
        .iter()
        .map(|&(r, c, v)| json!([r, c, v]))
        .collect();
    json!({
        "version": 1,
        "mode": mode,
        "subsystems": subsystems,
        "scm": {"entries": entries},
    })
}
