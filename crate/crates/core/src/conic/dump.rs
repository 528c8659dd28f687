//! Plain-text listing of a program, one item per line in declaration order.
//!
//! ```text
//! minimize
//!   obj: +1 x +2 x^2 +3
//! subject to
//!   eq   bal: +1 x -1 p -1 = 0
//!   geq  x:lo: +1 x -1 >= 0
//!   soc  cone: || +1 y, +2 z || <= +1 x
//! params
//!   p = 0
//! vars
//!   x in [1, inf)
//! ```

use std::fmt::Write as _;

use super::expr::Affine;
use super::program::{ConicProgram, RowKind};

fn num(v: f64) -> String {
    if v >= 0.0 {
        format!("+{v}")
    } else {
        format!("{v}")
    }
}

fn affine(p: &ConicProgram, e: &Affine) -> String {
    let mut parts = Vec::new();
    for &(v, a) in &e.vars {
        parts.push(format!("{} {}", num(a), p.vars()[v.0].name));
    }
    for &(q, b) in &e.params {
        parts.push(format!("{} {}", num(b), p.params()[q.0].name));
    }
    if e.constant != 0.0 || parts.is_empty() {
        parts.push(num(e.constant));
    }
    parts.join(" ")
}

/// Renders the program listing described in the module docs.
pub fn dump(p: &ConicProgram) -> String {
    let mut out = String::from("minimize\n");
    let obj = p.objective();
    let mut line = affine(p, &obj.linear);
    for &(v, q) in &obj.quadratic {
        let _ = write!(line, " {} {}^2", num(q), p.vars()[v.0].name);
    }
    let _ = writeln!(out, "  obj: {line}");
    out.push_str("subject to\n");
    for row in p.rows() {
        let (tag, rel) = match row.kind {
            RowKind::Eq => ("eq  ", "="),
            RowKind::Geq => ("geq ", ">="),
        };
        let _ = writeln!(out, "  {tag} {}: {} {rel} 0", row.name, affine(p, &row.expr));
    }
    for soc in p.socs() {
        let tail: Vec<String> = soc.tail.iter().map(|e| affine(p, e)).collect();
        let _ = writeln!(out, "  soc  {}: || {} || <= {}", soc.name, tail.join(", "), affine(p, &soc.head));
    }
    out.push_str("params\n");
    for prm in p.params() {
        let _ = writeln!(out, "  {} = {}", prm.name, prm.value);
    }
    out.push_str("vars\n");
    for v in p.vars() {
        let lo = v.lower.map_or("(-inf".to_string(), |l| format!("[{l}"));
        let hi = v.upper.map_or("inf)".to_string(), |u| format!("{u}]"));
        let _ = writeln!(out, "  {} in {lo}, {hi}", v.name);
    }
    out
}
