//! JSON problem documents.
//!
//! Matrices are row-major arrays of rows; every entry is a number or an
//! expression string in `t`. A document may carry `variants`, each a JSON
//! merge patch applied to the base document.

use std::fmt;

use chebtrack::dense::{self, Matrix};
use chebtrack::lqt_model::{
    output_to_state_reform, ConstraintSet, DelayTerm, OutputTracking, PointEquality, TerminalEquality,
    WindowInequality,
};
use chebtrack::{DelayedLqtProblem, MatrixFn, Scalar};
use serde_json::{Map, Value};

use crate::expr;

#[derive(Debug, Clone, PartialEq)]
pub struct DocError {
    /// JSON pointer of the offending field.
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for DocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

impl std::error::Error for DocError {}

type Res<T> = Result<T, DocError>;

fn fail<T>(pointer: &str, message: impl Into<String>) -> Res<T> {
    Err(DocError { pointer: pointer.to_string(), message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Discretization {
    pub k: Option<u32>,
    pub order: Option<usize>,
    pub samples_per_subinterval: Option<usize>,
}

/// One fully parsed problem, ready to solve.
#[derive(Clone, Debug)]
pub struct ProblemCase {
    pub name: String,
    /// Variant label, `None` for a document without variants.
    pub label: Option<String>,
    pub problem: DelayedLqtProblem,
    pub discretization: Discretization,
    pub round_delays: bool,
}

/// Splits a document into its cases; variants share the base fields.
pub fn parse_document(text: &str) -> Res<Vec<ProblemCase>> {
    let root: Value = serde_json::from_str(text).map_err(|e| DocError { pointer: String::new(), message: e.to_string() })?;
    let Value::Object(mut base) = root else {
        return fail("", "document must be a JSON object");
    };
    let variants = base.remove("variants");
    let base = Value::Object(base);
    let Some(variants) = variants else {
        return Ok(vec![parse_case(&base, None)?]);
    };
    let Value::Array(list) = variants else {
        return fail("/variants", "expected an array");
    };
    if list.is_empty() {
        return fail("/variants", "expected at least one variant");
    }
    let mut out = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        let ptr = format!("/variants/{i}");
        let label = match v.get("label") {
            Some(Value::String(s)) if !s.is_empty() && !s.contains(['/', '\\']) => s.clone(),
            _ => return fail(&format!("{ptr}/label"), "expected a non-empty label without path separators"),
        };
        if out.iter().any(|c: &ProblemCase| c.label.as_deref() == Some(&label)) {
            return fail(&format!("{ptr}/label"), "duplicate label");
        }
        let mut doc = base.clone();
        if let Some(patch) = v.get("patch") {
            merge_patch(&mut doc, patch);
        }
        let case = parse_case(&doc, Some(label)).map_err(|e| DocError {
            pointer: e.pointer,
            message: format!("{} (variant {i})", e.message),
        })?;
        out.push(case);
    }
    Ok(out)
}

/// JSON merge patch: objects merge recursively, `null` deletes, anything else replaces.
pub fn merge_patch(target: &mut Value, patch: &Value) {
    let Value::Object(p) = patch else {
        *target = patch.clone();
        return;
    };
    if !target.is_object() {
        *target = Value::Object(Map::new());
    }
    let t = target.as_object_mut().expect("object");
    for (k, v) in p {
        if v.is_null() {
            t.remove(k);
        } else {
            merge_patch(t.entry(k.clone()).or_insert(Value::Null), v);
        }
    }
}

const KNOWN: &[&str] = &[
    "name",
    "q",
    "r",
    "t_f",
    "A",
    "B",
    "delayed_state_terms",
    "delayed_input_terms",
    "f",
    "g",
    "x0",
    "Q",
    "R",
    "T",
    "reference",
    "constraints",
    "compat_continuity",
    "output_tracking",
    "discretization",
    "round_delays",
    "description",
];

fn parse_case(doc: &Value, label: Option<String>) -> Res<ProblemCase> {
    let obj = doc.as_object().expect("object");
    for key in obj.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return fail(&format!("/{key}"), "unknown field");
        }
    }
    let name = match obj.get("name") {
        None => "problem".to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return fail("/name", "expected a string"),
    };
    let q = dimension(obj, "q")?;
    let r = dimension(obj, "r")?;
    let t_f = constant(required(obj, "t_f", "")?, "/t_f")?;
    if !(t_f > 0.0) || !t_f.is_finite() {
        return fail("/t_f", "horizon must be positive");
    }
    let mut p = DelayedLqtProblem::new(q, r, t_f);
    p.a = matrix_fn(required(obj, "A", "")?, "/A", q, q)?;
    p.b = matrix_fn(required(obj, "B", "")?, "/B", q, r)?;
    p.delayed_state = delay_terms(obj.get("delayed_state_terms"), "/delayed_state_terms", q, q)?;
    p.delayed_input = delay_terms(obj.get("delayed_input_terms"), "/delayed_input_terms", q, r)?;
    if let Some(f) = obj.get("f") {
        p.initial_state = column_fn(f, "/f", q)?;
    }
    if let Some(g) = obj.get("g") {
        p.initial_control = column_fn(g, "/g", r)?;
    }
    p.x0 = match obj.get("x0") {
        Some(v) => constant_vector(v, "/x0", q)?,
        None => p.initial_state.eval_vec(0.0),
    };
    if let Some(v) = obj.get("Q") {
        p.q_weight = constant_matrix(v, "/Q", q, q)?;
    }
    if let Some(v) = obj.get("R") {
        p.r_weight = matrix_fn(v, "/R", r, r)?;
    }
    if let Some(v) = obj.get("T") {
        p.t_weight = constant_matrix(v, "/T", q, q)?;
    }
    if let Some(v) = obj.get("reference") {
        p.reference = column_fn(v, "/reference", q)?;
    }
    if let Some(v) = obj.get("compat_continuity") {
        p.compat_continuity = v.as_bool().ok_or_else(|| err("/compat_continuity", "expected a boolean"))?;
    }
    if let Some(c) = obj.get("constraints") {
        p.constraints = constraints(c, "/constraints", q, r)?;
    }
    if let Some(out) = obj.get("output_tracking") {
        let tracking = output_tracking(out, "/output_tracking", q, r)?;
        p = output_to_state_reform(&p, &tracking)
            .map_err(|e| err("/output_tracking", e.to_string()))?
            .problem;
    }
    p.validate().map_err(|e| err("", e.to_string()))?;
    let round_delays = match obj.get("round_delays") {
        None => false,
        Some(v) => v.as_bool().ok_or_else(|| err("/round_delays", "expected a boolean"))?,
    };
    let discretization = match obj.get("discretization") {
        None => Discretization::default(),
        Some(v) => discretization(v, "/discretization")?,
    };
    Ok(ProblemCase { name, label, problem: p, discretization, round_delays })
}

fn err(pointer: &str, message: impl Into<String>) -> DocError {
    DocError { pointer: pointer.to_string(), message: message.into() }
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str, base: &str) -> Res<&'a Value> {
    obj.get(key).ok_or_else(|| err(&format!("{base}/{key}"), "missing required field"))
}

fn dimension(obj: &Map<String, Value>, key: &str) -> Res<usize> {
    let ptr = format!("/{key}");
    match required(obj, key, "")?.as_u64() {
        Some(n) if n > 0 => Ok(n as usize),
        _ => fail(&ptr, "expected a positive integer"),
    }
}

fn scalar(v: &Value, ptr: &str) -> Res<Scalar> {
    match v {
        Value::Number(n) => Ok(Scalar::Const(n.as_f64().unwrap_or(f64::NAN))),
        Value::String(s) => expr::parse(s).map(expr::Expr::into_scalar).map_err(|e| err(ptr, e.to_string())),
        _ => fail(ptr, "expected a number or an expression string"),
    }
}

fn constant(v: &Value, ptr: &str) -> Res<f64> {
    match scalar(v, ptr)? {
        Scalar::Const(c) if c.is_finite() => Ok(c),
        Scalar::Const(_) => fail(ptr, "value is not finite"),
        Scalar::Func(_) => fail(ptr, "expected a constant, found an expression in t"),
    }
}

fn array<'a>(v: &'a Value, ptr: &str, len: usize) -> Res<&'a Vec<Value>> {
    match v {
        Value::Array(a) if a.len() == len => Ok(a),
        Value::Array(a) => fail(ptr, format!("expected {len} entries, found {}", a.len())),
        _ => fail(ptr, "expected an array"),
    }
}

fn matrix_fn(v: &Value, ptr: &str, rows: usize, cols: usize) -> Res<MatrixFn> {
    let mut entries = Vec::with_capacity(rows * cols);
    for (i, row) in array(v, ptr, rows)?.iter().enumerate() {
        let rptr = format!("{ptr}/{i}");
        for (j, e) in array(row, &rptr, cols)?.iter().enumerate() {
            entries.push(scalar(e, &format!("{rptr}/{j}"))?);
        }
    }
    MatrixFn::new(rows, cols, entries).map_err(|e| err(ptr, e.to_string()))
}

fn constant_matrix(v: &Value, ptr: &str, rows: usize, cols: usize) -> Res<Matrix> {
    let mut out = Vec::with_capacity(rows);
    for (i, row) in array(v, ptr, rows)?.iter().enumerate() {
        let rptr = format!("{ptr}/{i}");
        let vals = array(row, &rptr, cols)?
            .iter()
            .enumerate()
            .map(|(j, e)| constant(e, &format!("{rptr}/{j}")))
            .collect::<Res<Vec<f64>>>()?;
        out.push(vals);
    }
    Ok(if rows == 0 { Matrix::zeros(0, cols) } else { dense::from_rows(&out) })
}

fn column_fn(v: &Value, ptr: &str, len: usize) -> Res<MatrixFn> {
    let entries = array(v, ptr, len)?
        .iter()
        .enumerate()
        .map(|(i, e)| scalar(e, &format!("{ptr}/{i}")))
        .collect::<Res<Vec<_>>>()?;
    Ok(MatrixFn::column(entries))
}

fn row_fn(v: &Value, ptr: &str, len: usize) -> Res<MatrixFn> {
    let entries = array(v, ptr, len)?
        .iter()
        .enumerate()
        .map(|(i, e)| scalar(e, &format!("{ptr}/{i}")))
        .collect::<Res<Vec<_>>>()?;
    MatrixFn::new(1, len, entries).map_err(|e| err(ptr, e.to_string()))
}

fn constant_vector(v: &Value, ptr: &str, len: usize) -> Res<Vec<f64>> {
    array(v, ptr, len)?.iter().enumerate().map(|(i, e)| constant(e, &format!("{ptr}/{i}"))).collect()
}

fn object<'a>(v: &'a Value, ptr: &str, allowed: &[&str]) -> Res<&'a Map<String, Value>> {
    let Value::Object(o) = v else {
        return fail(ptr, "expected an object");
    };
    for key in o.keys() {
        if !allowed.contains(&key.as_str()) {
            return fail(&format!("{ptr}/{key}"), "unknown field");
        }
    }
    Ok(o)
}

fn list<'a>(v: Option<&'a Value>, ptr: &str) -> Res<&'a [Value]> {
    match v {
        None => Ok(&[]),
        Some(Value::Array(a)) => Ok(a),
        Some(_) => fail(ptr, "expected an array"),
    }
}

fn delay_terms(v: Option<&Value>, ptr: &str, rows: usize, cols: usize) -> Res<Vec<DelayTerm>> {
    let mut out = Vec::new();
    for (i, item) in list(v, ptr)?.iter().enumerate() {
        let iptr = format!("{ptr}/{i}");
        let o = object(item, &iptr, &["matrix", "delay"])?;
        let matrix = matrix_fn(required(o, "matrix", &iptr)?, &format!("{iptr}/matrix"), rows, cols)?;
        let delay = constant(required(o, "delay", &iptr)?, &format!("{iptr}/delay"))?;
        if !(delay >= 0.0) {
            return fail(&format!("{iptr}/delay"), "delay must be non-negative");
        }
        out.push(DelayTerm { matrix, delay });
    }
    Ok(out)
}

fn constraints(v: &Value, ptr: &str, q: usize, r: usize) -> Res<ConstraintSet> {
    let o = object(v, ptr, &["point", "terminal", "inequality"])?;
    let mut set = ConstraintSet::default();
    for (i, item) in list(o.get("point"), &format!("{ptr}/point"))?.iter().enumerate() {
        let iptr = format!("{ptr}/point/{i}");
        let p = object(item, &iptr, &["time", "state", "control", "value"])?;
        set.point_equalities.push(PointEquality {
            time: constant(required(p, "time", &iptr)?, &format!("{iptr}/time"))?,
            state: match p.get("state") {
                Some(s) => constant_vector(s, &format!("{iptr}/state"), q)?,
                None => vec![0.0; q],
            },
            control: match p.get("control") {
                Some(s) => constant_vector(s, &format!("{iptr}/control"), r)?,
                None => vec![0.0; r],
            },
            value: constant(required(p, "value", &iptr)?, &format!("{iptr}/value"))?,
        });
    }
    for (i, item) in list(o.get("terminal"), &format!("{ptr}/terminal"))?.iter().enumerate() {
        let iptr = format!("{ptr}/terminal/{i}");
        let p = object(item, &iptr, &["state", "value"])?;
        set.terminal_equalities.push(TerminalEquality {
            state: constant_vector(required(p, "state", &iptr)?, &format!("{iptr}/state"), q)?,
            value: constant(required(p, "value", &iptr)?, &format!("{iptr}/value"))?,
        });
    }
    for (i, item) in list(o.get("inequality"), &format!("{ptr}/inequality"))?.iter().enumerate() {
        let iptr = format!("{ptr}/inequality/{i}");
        let p = object(item, &iptr, &["window", "state", "control", "bound"])?;
        let window = constant_vector(required(p, "window", &iptr)?, &format!("{iptr}/window"), 2)?;
        set.window_inequalities.push(WindowInequality {
            start: window[0],
            end: window[1],
            state: match p.get("state") {
                Some(s) => row_fn(s, &format!("{iptr}/state"), q)?,
                None => MatrixFn::zeros(1, q),
            },
            control: match p.get("control") {
                Some(s) => row_fn(s, &format!("{iptr}/control"), r)?,
                None => MatrixFn::zeros(1, r),
            },
            bound: scalar(required(p, "bound", &iptr)?, &format!("{iptr}/bound"))?,
        });
    }
    Ok(set)
}

fn output_tracking(v: &Value, ptr: &str, q: usize, r: usize) -> Res<OutputTracking> {
    let o = object(v, ptr, &["C", "D", "Q", "T", "reference"])?;
    let c_val = required(o, "C", ptr)?;
    let p = match c_val {
        Value::Array(a) if !a.is_empty() => a.len(),
        _ => return fail(&format!("{ptr}/C"), "expected a non-empty array of rows"),
    };
    let c = constant_matrix(c_val, &format!("{ptr}/C"), p, q)?;
    let d = match o.get("D") {
        Some(d) => constant_matrix(d, &format!("{ptr}/D"), p, r)?,
        None => Matrix::zeros(p, r),
    };
    let q_weight = constant_matrix(required(o, "Q", ptr)?, &format!("{ptr}/Q"), p, p)?;
    let t_weight = o.get("T").map(|t| constant_matrix(t, &format!("{ptr}/T"), p, p)).transpose()?;
    let reference = column_fn(required(o, "reference", ptr)?, &format!("{ptr}/reference"), p)?;
    Ok(OutputTracking { c, d, q_weight, t_weight, reference })
}

fn discretization(v: &Value, ptr: &str) -> Res<Discretization> {
    let o = object(v, ptr, &["k", "M", "samples_per_subinterval"])?;
    let int = |key: &str| -> Res<Option<u64>> {
        match o.get(key) {
            None => Ok(None),
            Some(x) => x.as_u64().map(Some).ok_or_else(|| err(&format!("{ptr}/{key}"), "expected a non-negative integer")),
        }
    };
    Ok(Discretization {
        k: int("k")?.map(|v| v as u32),
        order: int("M")?.map(|v| v as usize),
        samples_per_subinterval: int("samples_per_subinterval")?.map(|v| v as usize),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_patch_semantics() {
        let mut doc = json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge_patch(&mut doc, &json!({"b": {"c": null, "e": 4}, "f": [1]}));
        assert_eq!(doc, json!({"a": 1, "b": {"d": 3, "e": 4}, "f": [1]}));
    }

    #[test]
    fn pointer_in_errors() {
        let text = r#"{"q": 1, "r": 1, "t_f": 1, "A": [["t^^2"]], "B": [[1]]}"#;
        let e = parse_document(text).unwrap_err();
        assert_eq!(e.pointer, "/A/0/0");
        let text = r#"{"q": 1, "r": 1, "t_f": 1, "A": [[0]]}"#;
        assert_eq!(parse_document(text).unwrap_err().pointer, "/B");
        let text = r#"{"q": 1, "r": 1, "t_f": 1, "A": [[0]], "B": [[1]], "Q": [["t"]]}"#;
        assert_eq!(parse_document(text).unwrap_err().pointer, "/Q/0/0");
        let text = r#"{"q": 1, "r": 1, "t_f": 1, "A": [[0]], "B": [[1]], "bogus": 1}"#;
        assert_eq!(parse_document(text).unwrap_err().pointer, "/bogus");
    }

    #[test]
    fn variants_patch_the_base() {
        let text = r#"{"q": 1, "r": 1, "t_f": 1, "A": [[0]], "B": [[1]], "Q": [[1]],
            "variants": [{"label": "base"}, {"label": "heavy", "patch": {"Q": [[10]]}}]}"#;
        let cases = parse_document(text).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[1].label.as_deref(), Some("heavy"));
        assert_eq!(cases[1].problem.q_weight[(0, 0)], 10.0);
        assert_eq!(cases[0].problem.q_weight[(0, 0)], 1.0);
    }
}
