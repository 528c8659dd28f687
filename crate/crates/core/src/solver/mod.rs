//! Solvers: a conic interior point method for convex programs, a nonlinear
//! interior point method for the reduced problems, multistart and
//! branch-and-bound.

pub mod bnb;
pub mod cones;
pub mod conic_ipm;
pub mod linalg;
pub mod multistart;
pub mod nlp;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, RowKind};
use cones::{push_cone, Cone};
use conic_ipm::{solve_standard, StandardForm};
use linalg::Csc;

pub use bnb::{branch_and_bound, enumerate_binaries, Fixings};
pub use multistart::{multistart, perturbed_start};
pub use nlp::{solve_nlp, solve_nlp_detailed, Block, Nlp, QuadExpr, RowCone};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    pub starts: usize,
    /// Perturbation radius of multistart, in scaled variables.
    pub radius: f64,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub seed: u64,
    /// Branch-and-bound enumerates every assignment instead of pruning.
    pub exhaustive: bool,
    /// Relative gap at which branch-and-bound stops.
    pub mip_gap: f64,
    /// Iteration log on stderr.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            opt_tol: 1e-8,
            max_iter: 200,
            starts: 16,
            radius: 0.6,
            time_limit: None,
            seed: 0,
            exhaustive: false,
            mip_gap: 1e-6,
            trace: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.feas_tol > 0.0 && self.opt_tol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.starts == 0 || self.max_iter == 0 {
            return Err("counts must be at least one".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    /// Feasible to tolerance but not certified optimal.
    Feasible,
    /// Converged to a point that violates the constraints.
    InfeasiblePoint,
    IterationLimit,
    TimeLimit,
    /// Certificate of primal infeasibility.
    Infeasible,
    /// Certificate of dual infeasibility.
    Unbounded,
}

impl Status {
    pub fn is_usable(&self) -> bool {
        matches!(self, Status::Optimal | Status::Feasible)
    }

    /// Lower is better; used to merge results.
    pub fn rank(&self) -> u8 {
        match self {
            Status::Optimal => 0,
            Status::Feasible => 1,
            Status::TimeLimit => 2,
            Status::IterationLimit => 3,
            Status::InfeasiblePoint => 4,
            Status::Unbounded => 5,
            Status::Infeasible => 6,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "Optimal",
            Status::Feasible => "Feasible",
            Status::InfeasiblePoint => "Converged to infeas. point",
            Status::IterationLimit => "Iteration limit",
            Status::TimeLimit => "Time limit",
            Status::Infeasible => "Infeasible",
            Status::Unbounded => "Unbounded",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub point: Vec<f64>,
    /// Multipliers in the layout of the dual program, when available.
    pub dual: Option<Vec<f64>>,
    pub objective: f64,
    pub infeasibility: f64,
    pub status: Status,
    pub iterations: usize,
    pub wall_time: f64,
    pub nodes: Option<usize>,
    pub mip_gap: Option<f64>,
}

/// Standard form of a conic program. Row order: every linear row in
/// program order (each one its own cone entry), then every SOC row.
pub fn standard_form(p: &ConicProgram) -> StandardForm {
    let n = p.num_vars();
    let theta = p.param_values();
    let mut trip = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let push_row = |expr: &crate::conic::Affine, trip: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
        let i = b.len();
        for &(v, a) in &expr.vars {
            trip.push((i, v.0, -a));
        }
        b.push(expr.offset(&theta));
    };
    for row in p.rows() {
        push_row(&row.expr, &mut trip, &mut b);
        push_cone(
            &mut cones,
            match row.kind {
                RowKind::Eq => Cone::Zero(1),
                RowKind::Geq => Cone::NonNeg(1),
            },
        );
    }
    for soc in p.socs() {
        for e in soc.vector() {
            push_row(&e, &mut trip, &mut b);
        }
        cones.push(Cone::Soc(soc.dim()));
    }
    let mut pdiag = vec![0.0; n];
    for &(v, q) in &p.objective().quadratic {
        pdiag[v.0] += 2.0 * q;
    }
    let mut q = vec![0.0; n];
    for &(v, c) in &p.objective().linear.vars {
        q[v.0] += c;
    }
    let m = b.len();
    StandardForm { n, p: pdiag, q, a: Csc::from_triplets(m, n, &trip), b, cones }
}

/// Solves a convex conic program. On success `dual` holds the multipliers
/// in the variable order of [`crate::conic::dualize`], copy variables set to
/// their primal counterparts.
pub fn solve_conic(p: &ConicProgram, opts: &SolveOptions) -> Solution {
    let start = std::time::Instant::now();
    let sf = standard_form(p);
    let res = solve_standard(&sf, opts);
    let mut dual = res.z.clone();
    for &(v, _) in &p.objective().quadratic {
        dual.push(res.x[v.0]);
    }
    let eval = crate::conic::evaluate_primal(p, &res.x).expect("solver returns a full point");
    let constant = p.objective().linear.offset(&p.param_values());
    Solution {
        objective: res.primal_objective + constant,
        infeasibility: eval.infeasibility,
        point: res.x,
        dual: Some(dual),
        status: res.status,
        iterations: res.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        nodes: None,
        mip_gap: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{Affine, ConicBuilder, Relation};

    #[test]
    fn textbook_lp() {
        let mut b = ConicBuilder::new();
        let x = b.add_variable("x", Some(1.0), None).unwrap();
        b.set_quadratic_objective(Affine::var(x), vec![]).unwrap();
        let p = b.build();
        let s = solve_conic(&p, &SolveOptions::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 1.0).abs() < 1e-7);
        assert!((s.dual.unwrap()[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn norm_minimization() {
        let mut b = ConicBuilder::new();
        let t = b.free("t").unwrap();
        b.add_soc("c", Affine::var(t), vec![Affine::constant(3.0), Affine::constant(4.0)]).unwrap();
        b.set_quadratic_objective(Affine::var(t), vec![]).unwrap();
        let s = solve_conic(&b.build(), &SolveOptions::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 5.0).abs() < 1e-7, "{}", s.objective);
    }

    #[test]
    fn infeasible_lp() {
        let mut b = ConicBuilder::new();
        let x = b.add_variable("x", Some(1.0), None).unwrap();
        b.add_linear("neg", Relation::Leq, Affine::var(x)).unwrap();
        b.set_quadratic_objective(Affine::var(x), vec![]).unwrap();
        let s = solve_conic(&b.build(), &SolveOptions::default());
        assert_eq!(s.status, Status::Infeasible);
    }

    #[test]
    fn unbounded_lp() {
        let mut b = ConicBuilder::new();
        let x = b.free("x").unwrap();
        b.set_quadratic_objective(Affine::var(x), vec![]).unwrap();
        let s = solve_conic(&b.build(), &SolveOptions::default());
        assert_eq!(s.status, Status::Unbounded);
    }

    #[test]
    fn small_qp() {
        // min x² − 2x
        let mut b = ConicBuilder::new();
        let x = b.free("x").unwrap();
        b.set_quadratic_objective(Affine::term(x, -2.0), vec![(x, 1.0)]).unwrap();
        let s = solve_conic(&b.build(), &SolveOptions::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 1.0).abs() < 1e-7);
        assert!((s.objective + 1.0).abs() < 1e-7);
    }
}
