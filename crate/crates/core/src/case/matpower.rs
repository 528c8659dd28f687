//! Reader and writer for the MATPOWER case format.
//!
//! Only the `bus`, `gen`, `branch` and `gencost` tables plus `baseMVA` are
//! read. Out-of-service generators and branches are dropped, isolated buses
//! (type 4) are kept but carry no devices.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::network::{Branch, Bus, Cost, Generator, Load, Network};
use super::CaseError;

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;

struct Table {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

fn syntax(line: usize, msg: impl Into<String>) -> CaseError {
    CaseError::Syntax { line, msg: msg.into() }
}

/// Parses a MATPOWER case and converts it to per unit.
pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let mut name = String::from("case");
    let mut base_mva = None;
    let mut tables: HashMap<String, Table> = HashMap::new();
    let mut open: Option<(String, Table)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some((tname, mut table)) = open.take() {
            let (body, closes) = match line.find(']') {
                Some(p) => {
                    let tail = line[p + 1..].trim().trim_end_matches(';').trim();
                    if !tail.is_empty() {
                        return Err(syntax(lineno, format!("unexpected `{tail}` after `]`")));
                    }
                    (&line[..p], true)
                }
                None => (line, false),
            };
            read_rows(body, lineno, &mut table.rows)?;
            if closes {
                tables.insert(tname, table);
            } else {
                open = Some((tname, table));
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            return Err(syntax(lineno, format!("unrecognized statement `{line}`")));
        };
        let Some(eq) = rest.find('=') else {
            return Err(syntax(lineno, "expected `=`"));
        };
        let field = rest[..eq].trim().to_string();
        let value = rest[eq + 1..].trim();
        if let Some(body) = value.strip_prefix('[') {
            let mut table = Table { line: lineno, rows: Vec::new() };
            match body.find(']') {
                Some(p) => {
                    read_rows(&body[..p], lineno, &mut table.rows)?;
                    tables.insert(field, table);
                }
                None => {
                    read_rows(body, lineno, &mut table.rows)?;
                    open = Some((field, table));
                }
            }
        } else if field == "baseMVA" {
            let v = value.trim_end_matches(';').trim();
            base_mva = Some(v.parse::<f64>().map_err(|_| syntax(lineno, format!("bad number `{v}`")))?);
        }
    }
    if let Some((tname, table)) = open {
        return Err(syntax(table.line, format!("table `{tname}` is never closed")));
    }

    let base = base_mva.ok_or_else(|| CaseError::Missing("baseMVA".into()))?;
    if !(base > 0.0) {
        return Err(CaseError::Invalid("baseMVA must be positive".into()));
    }
    let take = |key: &str| tables.get(key).ok_or_else(|| CaseError::Missing(key.into()));
    let bus_t = take("bus")?;
    let gen_t = take("gen")?;
    let branch_t = take("branch")?;
    let cost_t = take("gencost")?;

    let mut buses = Vec::new();
    let mut loads = Vec::new();
    for (line, row) in &bus_t.rows {
        need(row, BUS_COLS, *line)?;
        let id = as_id(row[0], *line)?;
        if buses.iter().any(|b: &Bus| b.id == id) {
            return Err(syntax(*line, format!("duplicate bus {id}")));
        }
        let (vmax, vmin) = (row[11], row[12]);
        if vmin > vmax {
            return Err(CaseError::Invalid(format!("bus {id}: Vmin above Vmax")));
        }
        buses.push(Bus { id, vmin, vmax, gs: row[4] / base, bs: row[5] / base });
        if row[2] != 0.0 || row[3] != 0.0 {
            loads.push(Load { bus: id, pd: row[2] / base, qd: row[3] / base });
        }
    }
    let known = |id: usize| buses.iter().any(|b| b.id == id);

    if cost_t.rows.len() < gen_t.rows.len() {
        return Err(CaseError::Invalid("fewer gencost rows than generators".into()));
    }
    let mut generators = Vec::new();
    for ((line, row), (cline, crow)) in gen_t.rows.iter().zip(&cost_t.rows) {
        need(row, GEN_COLS, *line)?;
        let bus = as_id(row[0], *line)?;
        if !known(bus) {
            return Err(CaseError::DanglingGenerator { line: *line, bus });
        }
        let cost = parse_cost(crow, *cline, base)?;
        if row[7] <= 0.0 {
            continue;
        }
        let (pmin, pmax) = (row[9] / base, row[8] / base);
        if pmin > pmax {
            return Err(CaseError::Invalid(format!("generator at bus {bus}: Pmin above Pmax")));
        }
        generators.push(Generator { bus, pmin, pmax, qmin: row[4] / base, qmax: row[3] / base, cost });
    }

    let mut branches = Vec::new();
    for (line, row) in &branch_t.rows {
        need(row, BRANCH_COLS, *line)?;
        let from = as_id(row[0], *line)?;
        let to = as_id(row[1], *line)?;
        for end in [from, to] {
            if !known(end) {
                return Err(CaseError::DanglingBranch { line: *line, bus: end });
            }
        }
        if row[10] <= 0.0 {
            continue;
        }
        if row[2] == 0.0 && row[3] == 0.0 {
            return Err(syntax(*line, "zero series impedance"));
        }
        let rate = if row[5] > 0.0 { Some(row[5] / base) } else { None };
        let tap = if row[8] == 0.0 { 1.0 } else { row[8] };
        branches.push(Branch { from, to, r: row[2], x: row[3], b: row[4], rate, tap, shift: row[9].to_radians() });
    }

    Ok(Network { name, base_mva: base, buses, generators, branches, loads })
}

fn read_rows(body: &str, line: usize, rows: &mut Vec<(usize, Vec<f64>)>) -> Result<(), CaseError> {
    for chunk in body.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in chunk.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            let v = match tok {
                "Inf" | "inf" => f64::INFINITY,
                "-Inf" | "-inf" => f64::NEG_INFINITY,
                _ => tok.parse::<f64>().map_err(|_| syntax(line, format!("bad number `{tok}`")))?,
            };
            row.push(v);
        }
        rows.push((line, row));
    }
    Ok(())
}

fn need(row: &[f64], cols: usize, line: usize) -> Result<(), CaseError> {
    if row.len() < cols {
        Err(syntax(line, format!("expected at least {cols} columns, found {}", row.len())))
    } else {
        Ok(())
    }
}

fn as_id(v: f64, line: usize) -> Result<usize, CaseError> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(syntax(line, format!("bus number `{v}` is not a positive integer")))
    }
}

fn parse_cost(row: &[f64], line: usize, base: f64) -> Result<Cost, CaseError> {
    if row.len() < 4 {
        return Err(syntax(line, "gencost row too short"));
    }
    if row[0] != 2.0 {
        return Err(CaseError::UnsupportedCost { line, reason: format!("cost model {}", row[0]) });
    }
    let n = row[3];
    if n.fract() != 0.0 || n < 1.0 {
        return Err(syntax(line, "bad coefficient count"));
    }
    let n = n as usize;
    if row.len() < 4 + n {
        return Err(syntax(line, format!("expected {n} cost coefficients")));
    }
    let coef = &row[4..4 + n];
    // Leading zero coefficients do not raise the degree.
    let degree = coef.iter().position(|&c| c != 0.0).map_or(0, |p| n - 1 - p);
    if degree > 2 {
        return Err(CaseError::UnsupportedCost { line, reason: format!("polynomial degree {degree}") });
    }
    let at = |k: usize| if k < n { coef[n - 1 - k] } else { 0.0 };
    Ok(Cost { c2: at(2) * base * base, c1: at(1) * base, c0: at(0) })
}

/// Finds the value whose image under `forward` is exactly `target`,
/// starting near `guess`. Used so that writing and re-reading a per-unit
/// value reproduces it bit for bit.
fn invert(target: f64, guess: f64, forward: impl Fn(f64) -> f64) -> f64 {
    if !guess.is_finite() || forward(guess) == target {
        return guess;
    }
    let (mut up, mut down) = (guess, guess);
    for _ in 0..64 {
        up = up.next_up();
        if forward(up) == target {
            return up;
        }
        down = down.next_down();
        if forward(down) == target {
            return down;
        }
    }
    guess
}

fn fmt(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{v:?}")
    }
}

/// Writes a network back to MATPOWER text in the original units.
pub fn serialize_case(net: &Network) -> String {
    let base = net.base_mva;
    let mw = |pu: f64| invert(pu, pu * base, |v| v / base);
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", net.name);
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", fmt(base));
    let _ = writeln!(out, "\n%% bus data");
    let _ = writeln!(out, "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(out, "mpc.bus = [");
    for bus in &net.buses {
        let load = net.loads.iter().find(|l| l.bus == bus.id);
        let (pd, qd) = load.map_or((0.0, 0.0), |l| (mw(l.pd), mw(l.qd)));
        let _ = writeln!(
            out,
            "\t{}\t1\t{}\t{}\t{}\t{}\t1\t1.0\t0.0\t1.0\t1\t{}\t{};",
            bus.id,
            fmt(pd),
            fmt(qd),
            fmt(mw(bus.gs)),
            fmt(mw(bus.bs)),
            fmt(bus.vmax),
            fmt(bus.vmin)
        );
    }
    let _ = writeln!(out, "];\n\n%% generator data");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &net.generators {
        let _ = writeln!(
            out,
            "\t{}\t0.0\t0.0\t{}\t{}\t1.0\t{}\t1\t{}\t{};",
            g.bus,
            fmt(mw(g.qmax)),
            fmt(mw(g.qmin)),
            fmt(base),
            fmt(mw(g.pmax)),
            fmt(mw(g.pmin))
        );
    }
    let _ = writeln!(out, "];\n\n%% generator cost data");
    let _ = writeln!(out, "mpc.gencost = [");
    for g in &net.generators {
        let c2 = invert(g.cost.c2, g.cost.c2 / (base * base), |v| v * base * base);
        let c1 = invert(g.cost.c1, g.cost.c1 / base, |v| v * base);
        let _ = writeln!(out, "\t2\t0.0\t0.0\t3\t{}\t{}\t{};", fmt(c2), fmt(c1), fmt(g.cost.c0));
    }
    let _ = writeln!(out, "];\n\n%% branch data");
    let _ = writeln!(out, "mpc.branch = [");
    for br in &net.branches {
        let rate = br.rate.map_or(0.0, mw);
        let shift = invert(br.shift, br.shift.to_degrees(), f64::to_radians);
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t1\t-360.0\t360.0;",
            br.from,
            br.to,
            fmt(br.r),
            fmt(br.x),
            fmt(br.b),
            fmt(rate),
            fmt(rate),
            fmt(rate),
            fmt(br.tap),
            fmt(shift)
        );
    }
    let _ = writeln!(out, "];");
    out
}
