//! Best-first branch-and-bound over binary variables.
//!
//! The caller supplies the node relaxation as a function of the current
//! fixings, so the same search drives conic and nonlinear relaxations.
//! Nodes are solved in fixed-size batches; the batch composition depends
//! only on the tree, so the parallel and sequential builds explore the same
//! nodes and return the same incumbent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::multistart::compare;
use super::{Solution, SolveOptions, Status};
use crate::par;

const BATCH: usize = 8;
const INT_TOL: f64 = 1e-6;

/// Fixings `(variable, value)` of one node.
pub type Fixings = Vec<(usize, f64)>;

struct Node {
    bound: f64,
    seq: usize,
    fixed: Fixings,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Node {
    // max-heap: lowest bound first, then oldest
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then_with(|| o.seq.cmp(&self.seq))
    }
}

/// The binary with value farthest from integral; ties go to the lowest
/// index. `None` when every binary is integral.
pub fn most_fractional(x: &[f64], integer: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut sorted = integer.to_vec();
    sorted.sort_unstable();
    for j in sorted {
        let f = (x[j] - x[j].round()).abs();
        if f > INT_TOL && best.is_none_or(|(_, g)| f > g) {
            best = Some((j, f));
        }
    }
    best.map(|b| b.0)
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

/// Minimizes over binaries `integer` (each in `{0, 1}`) with node
/// relaxations from `solve`. Binaries listed in `preset` are already fixed.
pub fn branch_and_bound<F>(integer: &[usize], preset: &Fixings, solve: F, opts: &SolveOptions) -> Solution
where
    F: Fn(&Fixings) -> Solution + Sync + Send,
{
    let clock = Instant::now();
    let free: Vec<usize> = integer.iter().copied().filter(|j| !preset.iter().any(|f| f.0 == *j)).collect();
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, seq: 0, fixed: preset.clone() });
    let mut seq = 1;
    let mut incumbent: Option<Solution> = None;
    let mut nodes = 0;
    let mut iterations = 0;
    let mut status = Status::Optimal;
    let mut root_failure: Option<Solution> = None;

    loop {
        let inc = incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective);
        let mut batch = Vec::new();
        while batch.len() < BATCH {
            let Some(node) = heap.pop() else { break };
            if relative_gap(inc, node.bound) <= opts.mip_gap && incumbent.is_some() {
                continue;
            }
            batch.push(node);
        }
        if batch.is_empty() {
            break;
        }
        if let Some(limit) = opts.time_limit {
            if clock.elapsed().as_secs_f64() > limit {
                heap.extend(batch);
                status = Status::TimeLimit;
                break;
            }
        }
        let sols = par::map(&batch, |node| solve(&node.fixed));
        nodes += batch.len();
        // rounding heuristic on the first fractional relaxation of the batch
        let rounded =
            sols.iter().find(|s| s.status.is_usable() && most_fractional(&s.point, &free).is_some()).map(|s| {
                let mut fixed = preset.clone();
                fixed.extend(free.iter().map(|&j| (j, s.point[j].round().clamp(0.0, 1.0))));
                solve(&fixed)
            });
        if let Some(sol) = rounded {
            nodes += 1;
            iterations += sol.iterations;
            if sol.status.is_usable() && incumbent.as_ref().is_none_or(|cur| compare(&sol, cur) == Ordering::Less) {
                incumbent = Some(sol);
            }
        }
        for (node, sol) in batch.into_iter().zip(sols) {
            iterations += sol.iterations;
            if !sol.status.is_usable() {
                if node.seq == 0 {
                    root_failure = Some(sol);
                }
                continue;
            }
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective);
            if relative_gap(inc, sol.objective) <= opts.mip_gap && incumbent.is_some() {
                continue;
            }
            match most_fractional(&sol.point, &free) {
                None => {
                    let better = match &incumbent {
                        None => true,
                        Some(cur) => compare(&sol, cur) == Ordering::Less,
                    };
                    if better {
                        incumbent = Some(sol);
                    }
                }
                Some(j) => {
                    for v in [0.0, 1.0] {
                        let mut fixed = node.fixed.clone();
                        fixed.push((j, v));
                        heap.push(Node { bound: sol.objective, seq, fixed });
                        seq += 1;
                    }
                }
            }
        }
    }

    let wall_time = clock.elapsed().as_secs_f64();
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some(mut best) => {
            let bound = open_bound.min(best.objective);
            best.mip_gap = Some(relative_gap(best.objective, bound));
            best.nodes = Some(nodes);
            best.iterations = iterations;
            best.wall_time = wall_time;
            if status == Status::Optimal && best.status != Status::Optimal {
                status = best.status;
            }
            best.status = status;
            best
        }
        None => {
            let mut out = root_failure.unwrap_or_else(|| Solution {
                point: Vec::new(),
                dual: None,
                objective: f64::NAN,
                infeasibility: f64::INFINITY,
                status: Status::Infeasible,
                iterations: 0,
                wall_time: 0.0,
                nodes: None,
                mip_gap: None,
            });
            if status == Status::TimeLimit {
                out.status = Status::TimeLimit;
            } else if out.status.is_usable() {
                out.status = Status::Infeasible;
            }
            out.nodes = Some(nodes);
            out.mip_gap = Some(f64::INFINITY);
            out.iterations = iterations;
            out.wall_time = wall_time;
            out
        }
    }
}

/// Solves every assignment of the free binaries (at most 2¹⁶) and keeps the
/// best; the reference answer for branch-and-bound.
pub fn enumerate_binaries<F>(integer: &[usize], preset: &Fixings, solve: F) -> Solution
where
    F: Fn(&Fixings) -> Solution + Sync + Send,
{
    let clock = Instant::now();
    let free: Vec<usize> = integer.iter().copied().filter(|j| !preset.iter().any(|f| f.0 == *j)).collect();
    assert!(free.len() <= 16, "exhaustive enumeration limited to 16 binaries");
    let masks: Vec<u32> = (0..1u32 << free.len()).collect();
    let sols = par::map(&masks, |&mask| {
        let mut fixed = preset.clone();
        fixed.extend(free.iter().enumerate().map(|(b, &j)| (j, f64::from((mask >> b) & 1))));
        solve(&fixed)
    });
    let n = sols.len();
    let iterations = sols.iter().map(|s| s.iterations).sum();
    let mut best = sols.into_iter().min_by(compare).expect("at least one assignment");
    if !best.status.is_usable() {
        best.status = Status::Infeasible;
    }
    best.nodes = Some(n);
    best.mip_gap = Some(0.0);
    best.iterations = iterations;
    best.wall_time = clock.elapsed().as_secs_f64();
    best
}
