use super::{ReduceError, ReducedProblem};
use crate::conic::{Affine, ConicBuilder, ConicProgram, Relation, VarId};
use crate::solver::{
    branch_and_bound, enumerate_binaries, multistart, solve_conic, solve_nlp, Block, Fixings, Nlp, QuadExpr, RowCone,
    Solution, SolveOptions, Status,
};

fn affine(e: &QuadExpr) -> Affine {
    let mut a = Affine::constant(e.constant);
    for &(j, c) in &e.linear {
        a.add_term(VarId(j), c);
    }
    a
}

fn bound(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Rewrites an NLP whose rows are affine, second-order cones or concave
/// diagonal quadratics `ℓ(x) − Σ qᵢxᵢ² ≥ 0`, with a convex diagonal
/// quadratic objective, as a conic program over the same variables.
pub fn as_conic(nlp: &Nlp) -> Result<ConicProgram, ReduceError> {
    let mut b = ConicBuilder::new();
    for j in 0..nlp.num_vars() {
        b.add_variable(&nlp.names[j], bound(nlp.lower[j]), bound(nlp.upper[j]))?;
    }
    for (name, block) in &nlp.blocks {
        let Block::Rows { cone, rows } = block else {
            return Err(ReduceError::NotConic(format!("block `{name}` is smoothed")));
        };
        match cone {
            RowCone::Eq | RowCone::Geq => {
                for (i, row) in rows.iter().enumerate() {
                    let rname = format!("{name}#{i}");
                    if row.is_affine() {
                        let rel = if *cone == RowCone::Eq { Relation::Eq } else { Relation::Geq };
                        b.add_linear(&rname, rel, affine(row))?;
                        continue;
                    }
                    let concave = *cone == RowCone::Geq && row.quad.iter().all(|&(i, j, c)| i == j && c <= 0.0);
                    if !concave {
                        return Err(ReduceError::NotConic(format!("row `{rname}` is not convex")));
                    }
                    // ℓ ≥ Σqx²  ⇔  ‖(2√q·x, ℓ − 1)‖ ≤ ℓ + 1
                    let l = affine(&QuadExpr { quad: Vec::new(), ..row.clone() });
                    let mut tail: Vec<Affine> =
                        row.quad.iter().map(|&(i, _, c)| Affine::term(VarId(i), 2.0 * (-c).sqrt())).collect();
                    tail.push(l.clone().plus_const(-1.0));
                    b.add_soc(&rname, l.plus_const(1.0), tail)?;
                }
            }
            RowCone::Soc => {
                if rows.iter().any(|r| !r.is_affine()) {
                    return Err(ReduceError::NotConic(format!("cone `{name}` has quadratic entries")));
                }
                b.add_soc(name, affine(&rows[0]), rows[1..].iter().map(affine).collect())?;
            }
        }
    }
    let obj = &nlp.objective;
    if obj.quad.iter().any(|&(i, j, _)| i != j) {
        return Err(ReduceError::NotConic("objective has cross terms".into()));
    }
    let quadratic = obj.quad.iter().map(|&(i, _, c)| (VarId(i), c)).collect();
    b.set_quadratic_objective(affine(&QuadExpr { quad: Vec::new(), ..obj.clone() }), quadratic)?;
    Ok(b.build())
}

fn with_fixings(nlp: &Nlp, fixed: &Fixings) -> Nlp {
    let mut out = nlp.clone();
    for &(j, v) in fixed {
        out.lower[j] = v;
        out.upper[j] = v;
    }
    out
}

fn failed(status: Status) -> Solution {
    Solution {
        point: Vec::new(),
        dual: None,
        objective: f64::NAN,
        infeasibility: f64::INFINITY,
        status,
        iterations: 0,
        wall_time: 0.0,
        nodes: None,
        mip_gap: None,
    }
}

fn conic_solve(nlp: &Nlp, opts: &SolveOptions) -> Solution {
    match as_conic(nlp) {
        Ok(p) => {
            let mut s = solve_conic(&p, opts);
            s.dual = None;
            if !s.point.is_empty() {
                s.objective = nlp.objective_value(&s.point);
                s.infeasibility = nlp.violation(&s.point);
            }
            s
        }
        Err(_) => failed(Status::InfeasiblePoint),
    }
}

/// Solves a reduced problem, minimizing the negated upper-level objective.
///
/// Binaries go through branch-and-bound (or full enumeration when
/// `opts.exhaustive`), convex relaxations through the conic solver and the
/// rest through multistart from `start`.
pub fn solve_reduced(r: &ReducedProblem, start: &[f64], opts: &SolveOptions) -> Result<Solution, ReduceError> {
    let nlp = &r.nlp;
    if r.convex {
        // surface conversion errors before any search
        as_conic(nlp)?;
    }
    if nlp.has_integers() {
        let node = |fixed: &Fixings| {
            let sub = with_fixings(nlp, fixed);
            if r.convex {
                conic_solve(&sub, opts)
            } else {
                let s0: Vec<f64> = start.iter().enumerate().map(|(j, v)| v.clamp(sub.lower[j], sub.upper[j])).collect();
                solve_nlp(&sub, &s0, opts)
            }
        };
        let free = nlp.integer.iter().filter(|&&j| nlp.lower[j] < nlp.upper[j]).count();
        let sol = if opts.exhaustive && free <= 16 {
            enumerate_binaries(&nlp.integer, &Vec::new(), node)
        } else {
            branch_and_bound(&nlp.integer, &Vec::new(), node, opts)
        };
        return Ok(sol);
    }
    if r.convex {
        return Ok(conic_solve(nlp, opts));
    }
    Ok(multistart(nlp, start, opts))
}
