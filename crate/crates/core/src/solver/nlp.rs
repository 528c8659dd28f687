//! Interior point method for smooth, possibly nonconvex programs whose rows
//! are equalities, nonnegativity constraints or second-order cone
//! memberships.
//!
//! Inequality rows get slacks `s = g(x)` kept inside their cone with a
//! log barrier and Nesterov–Todd scaling. Steps come from the primal-dual
//! Newton system, regularized until the direction has positive curvature,
//! and are accepted by backtracking on an ℓ1 penalty-barrier merit function
//! with one second-order correction.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cones::{self, Cone, Scaling};
use super::linalg::{dot, inf_norm, Csc, SparseLu};
use super::{Solution, SolveOptions, Status};
use crate::smoothing::{self, SmoothingKind};

/// `constant + Σ aᵢ·xᵢ + Σ c·xᵢ·xⱼ`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadExpr {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub quad: Vec<(usize, usize, f64)>,
}

impl QuadExpr {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Self::default() }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, a: f64) -> Self {
        Self { linear: vec![(i, a)], ..Self::default() }
    }

    pub fn add_linear(&mut self, i: usize, a: f64) -> &mut Self {
        self.linear.push((i, a));
        self
    }

    pub fn add_quad(&mut self, i: usize, j: usize, c: f64) -> &mut Self {
        self.quad.push((i.min(j), i.max(j), c));
        self
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add(&mut self, other: &QuadExpr, scale: f64) -> &mut Self {
        self.constant += scale * other.constant;
        self.linear.extend(other.linear.iter().map(|&(i, a)| (i, scale * a)));
        self.quad.extend(other.quad.iter().map(|&(i, j, c)| (i, j, scale * c)));
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = QuadExpr::default();
        out.add(self, s);
        out
    }

    /// Merges repeated terms and drops exact zeros.
    pub fn canonical(mut self) -> Self {
        self.linear.sort_by_key(|t| t.0);
        let mut lin: Vec<(usize, f64)> = Vec::with_capacity(self.linear.len());
        for (i, a) in self.linear {
            match lin.last_mut() {
                Some(last) if last.0 == i => last.1 += a,
                _ => lin.push((i, a)),
            }
        }
        lin.retain(|t| t.1 != 0.0);
        self.quad.sort_by_key(|t| (t.0, t.1));
        let mut quad: Vec<(usize, usize, f64)> = Vec::with_capacity(self.quad.len());
        for (i, j, c) in self.quad {
            match quad.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += c,
                _ => quad.push((i, j, c)),
            }
        }
        quad.retain(|t| t.2 != 0.0);
        self.linear = lin;
        self.quad = quad;
        self
    }

    pub fn is_affine(&self) -> bool {
        self.quad.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant
            + self.linear.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
            + self.quad.iter().map(|&(i, j, c)| c * x[i] * x[j]).sum::<f64>()
    }

    /// Gradient as `(index, value)` entries in a fixed structural order;
    /// indices may repeat.
    pub fn gradient(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut out = self.linear.clone();
        for &(i, j, c) in &self.quad {
            out.push((i, c * x[j]));
            out.push((j, c * x[i]));
        }
        out
    }

    /// Hessian entries, both triangles, times `w`.
    pub fn hessian(&self, w: f64, out: &mut Vec<(usize, usize, f64)>) {
        for &(i, j, c) in &self.quad {
            if i == j {
                out.push((i, i, 2.0 * c * w));
            } else {
                out.push((i, j, c * w));
                out.push((j, i, c * w));
            }
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.linear.iter().map(|t| t.0).chain(self.quad.iter().flat_map(|t| [t.0, t.1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowCone {
    /// Every row `= 0`.
    Eq,
    /// Every row `≥ 0`.
    Geq,
    /// The rows form one vector `(head, tail…)` with `‖tail‖ ≤ head`.
    Soc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Block {
    Rows {
        cone: RowCone,
        rows: Vec<QuadExpr>,
    },
    /// `φ_ε(x, y) = 0` for affine cone vectors `x` and `y`.
    Smoothed {
        kind: SmoothingKind,
        eps: f64,
        x: Vec<QuadExpr>,
        y: Vec<QuadExpr>,
    },
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Rows { rows, .. } => rows.len(),
            Block::Smoothed { x, .. } => x.len(),
        }
    }

    fn push_cones(&self, out: &mut Vec<Cone>) {
        match self {
            Block::Rows { cone: RowCone::Eq, rows } => {
                (0..rows.len()).for_each(|_| cones::push_cone(out, Cone::Zero(1)))
            }
            Block::Rows { cone: RowCone::Geq, rows } => {
                (0..rows.len()).for_each(|_| cones::push_cone(out, Cone::NonNeg(1)))
            }
            Block::Rows { cone: RowCone::Soc, rows } => out.push(Cone::Soc(rows.len())),
            Block::Smoothed { x, .. } => cones::push_cone(out, Cone::Zero(x.len())),
        }
    }

    fn is_conic(&self) -> bool {
        matches!(self, Block::Rows { cone: RowCone::Geq | RowCone::Soc, .. })
    }

    pub fn eval(&self, v: &[f64], out: &mut Vec<f64>) {
        match self {
            Block::Rows { rows, .. } => out.extend(rows.iter().map(|r| r.eval(v))),
            Block::Smoothed { kind, eps, x, y } => {
                let xv: Vec<f64> = x.iter().map(|r| r.eval(v)).collect();
                let yv: Vec<f64> = y.iter().map(|r| r.eval(v)).collect();
                out.extend(smoothing::residual(*kind, &xv, &yv, *eps));
            }
        }
    }

    /// Largest violation of the block's relation at `v`.
    pub fn violation(&self, v: &[f64]) -> f64 {
        let mut vals = Vec::with_capacity(self.dim());
        self.eval(v, &mut vals);
        match self {
            Block::Rows { cone: RowCone::Geq, .. } => vals.iter().fold(0.0, |m, &g| m.max(-g)),
            Block::Rows { cone: RowCone::Soc, .. } => (cones::tail_norm(&vals) - vals[0]).max(0.0),
            _ => inf_norm(&vals),
        }
    }

    /// Jacobian entries `(local row, var, value)`.
    fn jacobian(&self, v: &[f64], out: &mut Vec<(usize, usize, f64)>) {
        match self {
            Block::Rows { rows, .. } => {
                for (k, r) in rows.iter().enumerate() {
                    out.extend(r.gradient(v).into_iter().map(|(j, a)| (k, j, a)));
                }
            }
            Block::Smoothed { kind, eps, x, y } => {
                let xv: Vec<f64> = x.iter().map(|r| r.eval(v)).collect();
                let yv: Vec<f64> = y.iter().map(|r| r.eval(v)).collect();
                let (jx, jy) = smoothing::jacobian(*kind, &xv, &yv, *eps);
                let d = x.len();
                for k in 0..d {
                    for a in 0..d {
                        let (cx, cy) = (jx.at(k, a), jy.at(k, a));
                        out.extend(x[a].linear.iter().map(|&(j, c)| (k, j, cx * c)));
                        out.extend(y[a].linear.iter().map(|&(j, c)| (k, j, cy * c)));
                    }
                }
            }
        }
    }

    /// `Σₖ wₖ·∇²gₖ` as full-matrix entries.
    fn hessian(&self, v: &[f64], w: &[f64], out: &mut Vec<(usize, usize, f64)>) {
        match self {
            Block::Rows { rows, .. } => {
                for (r, &wk) in rows.iter().zip(w) {
                    r.hessian(wk, out);
                }
            }
            Block::Smoothed { kind, eps, x, y } => {
                let xv: Vec<f64> = x.iter().map(|r| r.eval(v)).collect();
                let yv: Vec<f64> = y.iter().map(|r| r.eval(v)).collect();
                let hs = smoothing::hessians(*kind, &xv, &yv, *eps);
                let d2 = 2 * x.len();
                let mut m = vec![0.0; d2 * d2];
                for (h, &wk) in hs.iter().zip(w) {
                    for (mi, hi) in m.iter_mut().zip(h) {
                        *mi += wk * hi;
                    }
                }
                let comp = |a: usize| if a < x.len() { &x[a].linear } else { &y[a - x.len()].linear };
                for a in 0..d2 {
                    for b in 0..d2 {
                        let mab = m[a * d2 + b];
                        for &(j, ca) in comp(a) {
                            for &(l, cb) in comp(b) {
                                out.push((j, l, ca * mab * cb));
                            }
                        }
                    }
                }
            }
        }
    }
}

/// A nonlinear program `min f(x)` over named, bounded variables and blocks
/// of rows. `integer` marks binaries for branch-and-bound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Nlp {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Typical magnitude of each variable; the solver works on `x / scale`.
    pub scale: Vec<f64>,
    pub objective: QuadExpr,
    pub blocks: Vec<(String, Block)>,
    pub integer: Vec<usize>,
}

impl Nlp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, scale: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.scale.push(if scale > 0.0 && scale.is_finite() { scale } else { 1.0 });
        self.names.len() - 1
    }

    pub fn add_block(&mut self, name: impl Into<String>, block: Block) {
        self.blocks.push((name.into(), block));
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.1.dim()).sum()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    pub fn rows(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_rows());
        for (_, b) in &self.blocks {
            b.eval(x, &mut out);
        }
        out
    }

    /// Largest violation over all blocks and bounds.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let rows = self.blocks.iter().fold(0.0f64, |m, (_, b)| m.max(b.violation(x)));
        (0..x.len()).fold(rows, |m, j| m.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]))
    }

    /// Violation per block, by name.
    pub fn block_violations(&self, x: &[f64]) -> Vec<(String, f64)> {
        self.blocks.iter().map(|(n, b)| (n.clone(), b.violation(x))).collect()
    }

    /// Gradient of the Lagrangian `∇f − Σ zᵢ∇gᵢ` over the block rows.
    pub fn lagrangian_gradient(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (j, v) in self.objective.gradient(x) {
            g[j] += v;
        }
        let mut row0 = 0;
        let mut ent = Vec::new();
        for (_, b) in &self.blocks {
            ent.clear();
            b.jacobian(x, &mut ent);
            for &(k, j, v) in &ent {
                g[j] -= z[row0 + k] * v;
            }
            row0 += b.dim();
        }
        g
    }

    /// A copy with variable `j` fixed to `value`.
    pub fn with_fixed(&self, j: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.lower[j] = value;
        out.upper[j] = value;
        out
    }

    pub fn has_integers(&self) -> bool {
        self.integer.iter().any(|&j| self.lower[j] < self.upper[j])
    }

    /// Every variable appears in the objective or some row.
    pub fn unreferenced(&self) -> Vec<usize> {
        let mut used = vec![false; self.num_vars()];
        self.objective.vars().for_each(|j| used[j] = true);
        for (_, b) in &self.blocks {
            let exprs: Vec<&QuadExpr> = match b {
                Block::Rows { rows, .. } => rows.iter().collect(),
                Block::Smoothed { x, y, .. } => x.iter().chain(y).collect(),
            };
            for e in exprs {
                e.vars().for_each(|j| used[j] = true);
            }
        }
        (0..used.len()).filter(|&j| !used[j]).collect()
    }
}

/// Primal point, slacks, constraint values and merit of a trial step.
type TrialPoint = (Vec<f64>, Vec<f64>, Vec<f64>, f64);

/// One accepted step of the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub mu: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub step: f64,
    pub infeasibility: f64,
}

#[derive(Debug, Clone)]
pub struct NlpOutcome {
    pub x: Vec<f64>,
    /// Row multipliers of the block rows, in original units.
    pub z: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub objective: f64,
    pub infeasibility: f64,
    /// Scaled stationarity at the returned point.
    pub stationarity: f64,
    pub trace: Vec<TraceEntry>,
}

/// Bound rows `sign·x̂ⱼ + offset` over scaled variables.
#[derive(Debug, Clone, Copy)]
struct BoundRow {
    var: usize,
    sign: f64,
    offset: f64,
}

struct Model<'a> {
    nlp: &'a Nlp,
    n: usize,
    d: Vec<f64>,
    m_blocks: usize,
    bounds: Vec<BoundRow>,
    cones: Vec<Cone>,
    zero: Vec<bool>,
    rs: Vec<f64>,
    os: f64,
    /// Inequality relaxation, added to every conic row.
    relax: Vec<f64>,
}

impl<'a> Model<'a> {
    fn new(nlp: &'a Nlp, relax: f64) -> Self {
        let n = nlp.num_vars();
        let d = nlp.scale.clone();
        let mut cones_ = Vec::new();
        let mut relax_v = Vec::new();
        for (_, b) in &nlp.blocks {
            b.push_cones(&mut cones_);
            let r = if b.is_conic() { relax } else { 0.0 };
            match b {
                Block::Rows { cone: RowCone::Soc, rows } => {
                    relax_v.push(r);
                    relax_v.extend(std::iter::repeat_n(0.0, rows.len() - 1));
                }
                _ => relax_v.extend(std::iter::repeat_n(r, b.dim())),
            }
        }
        let m_blocks = nlp.num_rows();
        let mut bounds = Vec::new();
        let mut bound_cones = Vec::new();
        for j in 0..n {
            let (l, u) = (nlp.lower[j] / d[j], nlp.upper[j] / d[j]);
            if l == u {
                bounds.push(BoundRow { var: j, sign: 1.0, offset: -l });
                bound_cones.push(Cone::Zero(1));
                continue;
            }
            if l.is_finite() {
                bounds.push(BoundRow { var: j, sign: 1.0, offset: -l });
                bound_cones.push(Cone::NonNeg(1));
            }
            if u.is_finite() {
                bounds.push(BoundRow { var: j, sign: -1.0, offset: u });
                bound_cones.push(Cone::NonNeg(1));
            }
        }
        for c in bound_cones {
            relax_v.push(if matches!(c, Cone::NonNeg(_)) { relax } else { 0.0 });
            cones::push_cone(&mut cones_, c);
        }
        let m = m_blocks + bounds.len();
        let mut zero = vec![false; m];
        let offs = cones::offsets(&cones_);
        for (k, c) in cones_.iter().enumerate() {
            if let Cone::Zero(_) = c {
                zero[offs[k]..offs[k + 1]].iter_mut().for_each(|t| *t = true);
            }
        }
        Self { nlp, n, d, m_blocks, bounds, cones: cones_, zero, rs: vec![1.0; m], os: 1.0, relax: relax_v }
    }

    fn m(&self) -> usize {
        self.m_blocks + self.bounds.len()
    }

    fn unscale(&self, xh: &[f64]) -> Vec<f64> {
        xh.iter().zip(&self.d).map(|(a, b)| a * b).collect()
    }

    fn f(&self, xh: &[f64]) -> f64 {
        self.os * self.nlp.objective.eval(&self.unscale(xh))
    }

    fn grad_f(&self, xh: &[f64]) -> Vec<f64> {
        let x = self.unscale(xh);
        let mut g = vec![0.0; self.n];
        for (j, v) in self.nlp.objective.gradient(&x) {
            g[j] += v * self.d[j] * self.os;
        }
        g
    }

    /// Scaled rows, relaxation included.
    fn g(&self, xh: &[f64]) -> Vec<f64> {
        let x = self.unscale(xh);
        let mut out = self.nlp.rows(&x);
        for b in &self.bounds {
            out.push(b.sign * xh[b.var] + b.offset);
        }
        for i in 0..out.len() {
            out[i] = (out[i] + self.relax[i]) * self.rs[i];
        }
        out
    }

    fn jac_unscaled_rows(&self, xh: &[f64]) -> Vec<(usize, usize, f64)> {
        let x = self.unscale(xh);
        let mut out = Vec::new();
        let mut row0 = 0;
        let mut ent = Vec::new();
        for (_, b) in &self.nlp.blocks {
            ent.clear();
            b.jacobian(&x, &mut ent);
            out.extend(ent.iter().map(|&(k, j, v)| (row0 + k, j, v * self.d[j])));
            row0 += b.dim();
        }
        for (k, b) in self.bounds.iter().enumerate() {
            out.push((row0 + k, b.var, b.sign));
        }
        out
    }

    fn jac(&self, xh: &[f64]) -> Csc {
        let mut t = self.jac_unscaled_rows(xh);
        for e in t.iter_mut() {
            e.2 *= self.rs[e.0];
        }
        Csc::from_triplets(self.m(), self.n, &t)
    }

    /// Hessian of `os·f − Σ zᵢ·rsᵢ·gᵢ` in scaled variables.
    fn hess(&self, xh: &[f64], z: &[f64]) -> Vec<(usize, usize, f64)> {
        let x = self.unscale(xh);
        let mut out = Vec::new();
        self.nlp.objective.hessian(self.os, &mut out);
        let mut row0 = 0;
        for (_, b) in &self.nlp.blocks {
            let k = b.dim();
            let w: Vec<f64> = (row0..row0 + k).map(|i| -z[i] * self.rs[i]).collect();
            b.hessian(&x, &w, &mut out);
            row0 += k;
        }
        for e in out.iter_mut() {
            e.2 *= self.d[e.0] * self.d[e.1];
        }
        out
    }

    /// Row and objective scaling from gradients at the start.
    fn set_scaling(&mut self, xh: &[f64]) {
        let gmax = 100.0;
        let gf = inf_norm(&self.grad_f(xh));
        self.os = if gf > gmax { gmax / gf } else { 1.0 };
        let mut rowmax = vec![0.0f64; self.m()];
        for (i, _, v) in self.jac_unscaled_rows(xh) {
            rowmax[i] = rowmax[i].max(v.abs());
        }
        let mut rs: Vec<f64> = rowmax.iter().map(|&r| if r > gmax { gmax / r } else { 1.0 }).collect();
        let offs = cones::offsets(&self.cones);
        for (k, c) in self.cones.iter().enumerate() {
            if let Cone::Soc(_) = c {
                let r = offs[k]..offs[k + 1];
                let lo = rs[r.clone()].iter().copied().fold(f64::INFINITY, f64::min);
                rs[r].iter_mut().for_each(|t| *t = lo);
            }
        }
        self.rs = rs;
    }

    fn barrier(&self, s: &[f64]) -> f64 {
        let offs = cones::offsets(&self.cones);
        let mut b = 0.0;
        for (k, c) in self.cones.iter().enumerate() {
            let v = &s[offs[k]..offs[k + 1]];
            match c {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => b += v.iter().map(|t| t.ln()).sum::<f64>(),
                Cone::Soc(_) => b += 0.5 * (v[0] * v[0] - v[1..].iter().map(|t| t * t).sum::<f64>()).ln(),
            }
        }
        b
    }

    fn barrier_grad(&self, s: &[f64]) -> Vec<f64> {
        let offs = cones::offsets(&self.cones);
        let mut g = vec![0.0; s.len()];
        for (k, c) in self.cones.iter().enumerate() {
            let r = offs[k]..offs[k + 1];
            let v = &s[r.clone()];
            match c {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => {
                    for (gi, vi) in g[r].iter_mut().zip(v) {
                        *gi = 1.0 / vi;
                    }
                }
                Cone::Soc(_) => {
                    let det = v[0] * v[0] - v[1..].iter().map(|t| t * t).sum::<f64>();
                    g[r.start] = v[0] / det;
                    for i in 1..v.len() {
                        g[r.start + i] = -v[i] / det;
                    }
                }
            }
        }
        g
    }

    /// `μ·s⁻¹` per conic block; the central-path dual for a slack.
    fn central_dual(&self, s: &[f64], mu: f64) -> Vec<f64> {
        self.barrier_grad(s).into_iter().map(|g| mu * g).collect()
    }

    /// Pushes conic slacks strictly inside with a margin relative to their
    /// size.
    fn push_slacks(&self, s: &mut [f64]) {
        let offs = cones::offsets(&self.cones);
        for (k, c) in self.cones.iter().enumerate() {
            let r = offs[k]..offs[k + 1];
            match c {
                Cone::Zero(_) => s[r].iter_mut().for_each(|t| *t = 0.0),
                Cone::NonNeg(_) => s[r].iter_mut().for_each(|t| *t = t.max(1e-2 * t.abs().max(1.0))),
                Cone::Soc(_) => {
                    let v = &mut s[r];
                    let want = 1e-2 * inf_norm(v).max(1.0);
                    let m = v[0] - cones::tail_norm(v);
                    if m < want {
                        v[0] += want - m;
                    }
                }
            }
        }
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|t| t.abs()).sum()
}

/// Pushes a start point inside its bounds, in scaled variables.
fn push_start(nlp: &Nlp, x: &[f64]) -> Vec<f64> {
    (0..nlp.num_vars())
        .map(|j| {
            let d = nlp.scale[j];
            let (l, u) = (nlp.lower[j] / d, nlp.upper[j] / d);
            let v = x[j] / d;
            if l == u {
                return l;
            }
            let pl = 1e-2 * l.abs().max(1.0);
            let pu = 1e-2 * u.abs().max(1.0);
            let (pl, pu) = if l.is_finite() && u.is_finite() {
                (pl.min(0.25 * (u - l)), pu.min(0.25 * (u - l)))
            } else {
                (pl, pu)
            };
            v.max(l + pl).min(u - pu)
        })
        .collect()
}

/// Solves `min f(x)` from `start`. Binaries are treated as continuous.
pub fn solve_nlp_detailed(nlp: &Nlp, start: &[f64], opts: &SolveOptions) -> NlpOutcome {
    let clock = Instant::now();
    let tol = opts.opt_tol;
    let mut model = Model::new(nlp, 0.1 * opts.feas_tol);
    let n = model.n;
    let m = model.m();
    let mut x = push_start(nlp, start);
    model.set_scaling(&x);
    let model = model;
    let cs = model.cones.clone();

    let mut mu: f64 = 0.1;
    let mut gx = model.g(&x);
    let mut s = gx.clone();
    model.push_slacks(&mut s);
    let mut z = model.central_dual(&s, mu);
    init_equality_duals(&model, &x, &mut z);

    let mut lu = SparseLu::new();
    let mut penalty: f64 = 1.0;
    let mut dw_last: f64 = 0.0;
    let mut status = Status::IterationLimit;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut ls_failures = 0;
    let mut stationarity = f64::INFINITY;

    for it in 0..=opts.max_iter {
        iterations = it;
        let gf = model.grad_f(&x);
        let jac = model.jac(&x);
        let jtz = jac.mul_t(&z);
        let rd: Vec<f64> = (0..n).map(|j| gf[j] - jtz[j]).collect();
        let rp: Vec<f64> = (0..m).map(|i| gx[i] - s[i]).collect();
        let sd = (l1(&z) / (m.max(1) as f64)).max(100.0) / 100.0;
        let comp = |mu: f64| -> f64 {
            let sz = cones::jordan_all(&cs, &s, &z);
            let e = cones::unit(&cs, mu);
            inf_norm(&sz.iter().zip(&e).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        stationarity = inf_norm(&rd) / sd;
        let feas = inf_norm(&rp);
        let e0 = stationarity.max(feas).max(comp(0.0) / sd);
        let viol = nlp.violation(&model.unscale(&x));
        if opts.trace {
            eprintln!(
                "nlp it={it} f={:.9e} stat={stationarity:.2e} feas={feas:.2e} viol={viol:.2e} mu={mu:.2e} nu={penalty:.2e}",
                nlp.objective_value(&model.unscale(&x))
            );
        }
        if e0 <= tol && viol <= opts.feas_tol {
            status = Status::Optimal;
            break;
        }
        while mu > tol / 10.0 && stationarity.max(feas).max(comp(mu) / sd) <= 10.0 * mu {
            mu = (tol / 10.0).max((0.2 * mu).min(mu.powf(1.5)));
        }
        if it == opts.max_iter {
            break;
        }
        if let Some(limit) = opts.time_limit {
            if clock.elapsed().as_secs_f64() > limit {
                status = Status::TimeLimit;
                break;
            }
        }

        // Newton direction with curvature-driven regularization
        let scaling = Scaling::new(&cs, &s, &z);
        let lam2 = cones::jordan_all(&cs, &scaling.lambda, &scaling.lambda);
        let e = cones::unit(&cs, mu);
        let rc = scaling.lambda_div(&e.iter().zip(&lam2).map(|(a, b)| a - b).collect::<Vec<_>>());
        let wrc = scaling.apply(&rc);
        let hess = model.hess(&x, &z);
        let w2 = scaling.w2_entries(0, 1.0);
        let rhs_for = |rp: &[f64]| -> Vec<f64> {
            let mut r: Vec<f64> = rd.iter().map(|v| -v).collect();
            r.extend((0..m).map(|i| -rp[i] + wrc[i]));
            r
        };
        let mut dw = 0.0f64;
        let mut dc = 0.0f64;
        let mut attempt = 0;
        let solved = loop {
            attempt += 1;
            if attempt > 40 || dw > 1e40 {
                break None;
            }
            let k = kkt_matrix(n, m, &hess, &jac, &w2, dw, dc);
            let Ok(fac) = lu.factor(&k) else {
                dc = if dc == 0.0 { 1e-8 * mu.powf(0.25) } else { dc * 10.0 };
                continue;
            };
            let rhs = rhs_for(&rp);
            let sol = fac.solve_refined(&rhs, |v| k.mul(v), 20);
            if sol.iter().any(|v| !v.is_finite()) {
                if dc == 0.0 {
                    dc = 1e-8 * mu.powf(0.25);
                } else {
                    dw = next_dw(dw, dw_last);
                }
                continue;
            }
            let dx = sol[..n].to_vec();
            let dz: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
            let jdx = jac.mul(&dx);
            let curv = quad_form(&hess, &dx) + dw * dot(&dx, &dx) + w_inv2_form(&scaling, &jdx);
            if curv >= 1e-12 * dot(&dx, &dx) || inf_norm(&dx) < 1e-14 {
                break Some((k, fac, dx, dz, jdx));
            }
            dw = next_dw(dw, dw_last);
        };
        let Some((kmat, fac, dx, dz, _)) = solved else {
            status = Status::InfeasiblePoint;
            break;
        };
        if dw > 0.0 {
            dw_last = dw;
        }
        let w2dz = scaling.apply_w2(&dz);
        let ds: Vec<f64> = (0..m).map(|i| if model.zero[i] { 0.0 } else { wrc[i] - w2dz[i] }).collect();

        // merit and penalty update
        let tau = (1.0 - mu).max(0.99);
        let alpha_p = (tau * cones::max_step_all(&cs, &s, &ds)).min(1.0);
        let alpha_d = (tau * cones::max_step_all(&cs, &z, &dz)).min(1.0);
        let bgrad = model.barrier_grad(&s);
        let rp1 = l1(&rp);
        let base = dot(&gf, &dx) - mu * dot(&bgrad, &ds);
        let curv = 0.5 * (quad_form(&hess, &dx) + dw * dot(&dx, &dx) + w_inv2_form(&scaling, &ds)).max(0.0);
        if rp1 > 0.0 {
            let need = (base + curv) / (0.9 * rp1);
            if penalty < need {
                penalty = need + 1.0;
            }
        }
        let merit = |f: f64, s: &[f64], g: &[f64]| -> f64 {
            f - mu * model.barrier(s) + penalty * l1(&g.iter().zip(s).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        let phi0 = merit(model.f(&x), &s, &gx);
        let dphi = base - penalty * rp1;

        let mut alpha = alpha_p;
        let mut accepted: Option<TrialPoint> = None;
        let mut tried_soc = false;
        while alpha > 1e-14 {
            let xt: Vec<f64> = (0..n).map(|j| x[j] + alpha * dx[j]).collect();
            let st: Vec<f64> = (0..m).map(|i| s[i] + alpha * ds[i]).collect();
            let gt = model.g(&xt);
            let phit = merit(model.f(&xt), &st, &gt);
            if phit.is_finite() && phit <= phi0 + 1e-4 * alpha * dphi {
                accepted = Some((xt, st, gt, phit));
                break;
            }
            if !tried_soc && alpha == alpha_p && alpha_p > 0.5 {
                tried_soc = true;
                // second-order correction against the curvature of the rows
                let rpt: Vec<f64> = (0..m).map(|i| alpha * rp[i] + (gt[i] - st[i])).collect();
                let rhs = rhs_for(&rpt);
                let sol = fac.solve_refined(&rhs, |v| kmat.mul(v), 20);
                if sol.iter().all(|v| v.is_finite()) {
                    let cx = &sol[..n];
                    let cz: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
                    let cw = scaling.apply_w2(&cz);
                    let cs_: Vec<f64> = (0..m).map(|i| if model.zero[i] { 0.0 } else { wrc[i] - cw[i] }).collect();
                    let a2 = (tau * cones::max_step_all(&cs, &s, &cs_)).min(1.0);
                    let xc: Vec<f64> = (0..n).map(|j| x[j] + a2 * cx[j]).collect();
                    let sc: Vec<f64> = (0..m).map(|i| s[i] + a2 * cs_[i]).collect();
                    let gc = model.g(&xc);
                    let phic = merit(model.f(&xc), &sc, &gc);
                    if phic.is_finite() && phic <= phi0 + 1e-4 * a2 * dphi {
                        accepted = Some((xc, sc, gc, phic));
                        alpha = a2;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, mut sn, gn, phin)) = accepted else {
            ls_failures += 1;
            if ls_failures > 3 {
                status = Status::InfeasiblePoint;
                break;
            }
            // shrink the step region and retry with a fresh penalty
            dw_last = dw_last.max(1e-4) * 100.0;
            penalty *= 10.0;
            continue;
        };
        ls_failures = 0;
        for i in 0..m {
            z[i] += alpha_d * dz[i];
        }
        // slack reset and dual safeguard on scalar inequalities
        let offs = cones::offsets(&cs);
        for (k, c) in cs.iter().enumerate() {
            if let Cone::NonNeg(_) = c {
                for i in offs[k]..offs[k + 1] {
                    if gn[i] > sn[i] {
                        sn[i] = gn[i];
                    }
                    z[i] = z[i].clamp(mu / (1e10 * sn[i]), 1e10 * mu / sn[i]);
                }
            }
        }
        x = xn;
        s = sn;
        gx = gn;
        trace.push(TraceEntry {
            iteration: it,
            mu,
            merit_before: phi0,
            merit_after: phin,
            step: alpha,
            infeasibility: inf_norm(&(0..m).map(|i| gx[i] - s[i]).collect::<Vec<_>>()),
        });
        if x.iter().any(|v| !v.is_finite()) {
            status = Status::InfeasiblePoint;
            break;
        }
    }

    let xo = model.unscale(&x);
    let infeasibility = nlp.violation(&xo);
    if status != Status::Optimal && status != Status::TimeLimit {
        // feasible to tolerance but without a multiplier certificate, as at
        // degenerate complementarity points
        if infeasibility <= opts.feas_tol || (infeasibility <= 1e-6 && stationarity <= 1e-4) {
            status = Status::Feasible;
        } else if status == Status::IterationLimit && infeasibility > 1e-6 {
            status = Status::InfeasiblePoint;
        }
    }
    let z_out: Vec<f64> = (0..model.m_blocks).map(|i| z[i] * model.rs[i] / model.os).collect();
    NlpOutcome {
        objective: nlp.objective_value(&xo),
        x: xo,
        z: z_out,
        status,
        iterations,
        infeasibility,
        stationarity,
        trace,
    }
}

/// Least-squares multipliers for the equality rows at the start.
fn init_equality_duals(model: &Model, x: &[f64], z: &mut [f64]) {
    let n = model.n;
    let m = model.m();
    let zero_rows: Vec<usize> = (0..m).filter(|&i| model.zero[i]).collect();
    if zero_rows.is_empty() {
        return;
    }
    let jac = model.jac(x);
    let gf = model.grad_f(x);
    let jtz = jac.mul_t(z);
    let target: Vec<f64> = (0..n).map(|j| gf[j] - jtz[j]).collect();
    let mut pos = vec![usize::MAX; m];
    for (k, &i) in zero_rows.iter().enumerate() {
        pos[i] = k;
    }
    let mz = zero_rows.len();
    let mut t = Vec::new();
    for j in 0..n {
        t.push((j, j, 1.0));
        for k in jac.colptr[j]..jac.colptr[j + 1] {
            let p = pos[jac.rowidx[k]];
            if p != usize::MAX {
                t.push((n + p, j, jac.vals[k]));
                t.push((j, n + p, jac.vals[k]));
            }
        }
    }
    for p in 0..mz {
        t.push((n + p, n + p, -1e-8));
    }
    let k = Csc::from_triplets(n + mz, n + mz, &t);
    let mut rhs = target;
    rhs.extend(std::iter::repeat_n(0.0, mz));
    let Ok(f) = SparseLu::new().factor(&k) else { return };
    let sol = f.solve_refined(&rhs, |v| k.mul(v), 2);
    let y = &sol[n..];
    if y.iter().all(|v| v.is_finite()) && inf_norm(y) <= 1e3 {
        for (p, &i) in zero_rows.iter().enumerate() {
            z[i] = y[p];
        }
    }
}

fn next_dw(dw: f64, last: f64) -> f64 {
    if dw == 0.0 {
        if last == 0.0 {
            1e-4
        } else {
            (last / 3.0).max(1e-20)
        }
    } else if last == 0.0 {
        dw * 100.0
    } else {
        dw * 8.0
    }
}

fn quad_form(h: &[(usize, usize, f64)], v: &[f64]) -> f64 {
    h.iter().map(|&(i, j, a)| v[i] * a * v[j]).sum()
}

/// `vᵀW⁻²v` over the conic rows.
fn w_inv2_form(scaling: &Scaling, v: &[f64]) -> f64 {
    let wv = scaling.apply_inv(v);
    dot(&wv, &wv)
}

fn kkt_matrix(
    n: usize,
    m: usize,
    hess: &[(usize, usize, f64)],
    jac: &Csc,
    w2: &[(usize, usize, f64)],
    dw: f64,
    dc: f64,
) -> Csc {
    let mut t = Vec::with_capacity(hess.len() + 2 * jac.nnz() + n + m + w2.len());
    t.extend_from_slice(hess);
    for j in 0..n {
        t.push((j, j, dw));
        for k in jac.colptr[j]..jac.colptr[j + 1] {
            let i = jac.rowidx[k];
            t.push((n + i, j, jac.vals[k]));
            t.push((j, n + i, jac.vals[k]));
        }
    }
    for i in 0..m {
        t.push((n + i, n + i, -dc));
    }
    for &(i, j, v) in w2 {
        t.push((n + i, n + j, -v));
    }
    Csc::from_triplets(n + m, n + m, &t)
}

/// Solves `min f(x)` from `start` and packs the result.
pub fn solve_nlp(nlp: &Nlp, start: &[f64], opts: &SolveOptions) -> Solution {
    let clock = Instant::now();
    let out = solve_nlp_detailed(nlp, start, opts);
    Solution {
        point: out.x,
        dual: Some(out.z),
        objective: out.objective,
        infeasibility: out.infeasibility,
        status: out.status,
        iterations: out.iterations,
        wall_time: clock.elapsed().as_secs_f64(),
        nodes: None,
        mip_gap: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn unconstrained_concave_max() {
        // maximize −(v − 3)²  ⇔  minimize v² − 6v
        let mut p = Nlp::new();
        let v = p.add_var("v", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        p.objective = QuadExpr::term(v, -6.0);
        p.objective.add_quad(v, v, 1.0);
        let s = solve_nlp(&p, &[0.0], &opts());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn bounded_linear_program() {
        // min −x − y  s.t.  x + 2y ≤ 4, 3x + y ≤ 6, x, y ≥ 0  →  (1.6, 1.2)
        let mut p = Nlp::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = p.add_var("y", 0.0, f64::INFINITY, 1.0);
        let mut o = QuadExpr::term(x, -1.0);
        o.add_linear(y, -1.0);
        p.objective = o;
        let mut r1 = QuadExpr::constant(4.0);
        r1.add_linear(x, -1.0).add_linear(y, -2.0);
        let mut r2 = QuadExpr::constant(6.0);
        r2.add_linear(x, -3.0).add_linear(y, -1.0);
        p.add_block("c", Block::Rows { cone: RowCone::Geq, rows: vec![r1, r2] });
        let s = solve_nlp(&p, &[0.0, 0.0], &opts());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] - 1.6).abs() < 1e-7 && (s.point[1] - 1.2).abs() < 1e-7, "{:?}", s.point);
    }

    #[test]
    fn nonconvex_equality() {
        // min x + y on the circle x² + y² = 2  →  (−1, −1)
        let mut p = Nlp::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let mut o = QuadExpr::var(x);
        o.add_linear(y, 1.0);
        p.objective = o;
        let mut c = QuadExpr::constant(-2.0);
        c.add_quad(x, x, 1.0).add_quad(y, y, 1.0);
        p.add_block("circle", Block::Rows { cone: RowCone::Eq, rows: vec![c] });
        let s = solve_nlp(&p, &[-0.5, -1.5], &opts());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.point[0] + 1.0).abs() < 1e-7 && (s.point[1] + 1.0).abs() < 1e-7, "{:?}", s.point);
    }

    #[test]
    fn soc_row() {
        // min t  s.t.  ‖(x − 3, 4)‖ ≤ t, x ≤ 1  →  t = √20
        let mut p = Nlp::new();
        let t = p.add_var("t", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let x = p.add_var("x", f64::NEG_INFINITY, 1.0, 1.0);
        p.objective = QuadExpr::var(t);
        let mut a = QuadExpr::constant(-3.0);
        a.add_linear(x, 1.0);
        p.add_block(
            "cone",
            Block::Rows { cone: RowCone::Soc, rows: vec![QuadExpr::var(t), a, QuadExpr::constant(4.0)] },
        );
        let s = solve_nlp(&p, &[10.0, 0.0], &opts());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 20f64.sqrt()).abs() < 1e-7, "{}", s.objective);
    }

    #[test]
    fn smoothed_scalar_system() {
        // Kanzow root with x₀ + y₀ = 0.25 at ε = 0.1
        let mut p = Nlp::new();
        let x0 = p.add_var("x0", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y0 = p.add_var("y0", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        p.add_block(
            "sm",
            Block::Smoothed {
                kind: SmoothingKind::Kanzow,
                eps: 0.1,
                x: vec![QuadExpr::var(x0)],
                y: vec![QuadExpr::var(y0)],
            },
        );
        let mut sum = QuadExpr::constant(-0.25);
        sum.add_linear(x0, 1.0).add_linear(y0, 1.0);
        p.add_block("sum", Block::Rows { cone: RowCone::Eq, rows: vec![sum] });
        let s = solve_nlp(&p, &[0.3, 0.0], &opts());
        assert_eq!(s.status, Status::Optimal);
        let (a, b) = (s.point[0], s.point[1]);
        let ok =
            ((a - 0.2).abs() < 1e-9 && (b - 0.05).abs() < 1e-9) || ((a - 0.05).abs() < 1e-9 && (b - 0.2).abs() < 1e-9);
        assert!(ok, "{a} {b}");
    }

    #[test]
    fn merit_decreases_on_accepted_steps() {
        let mut p = Nlp::new();
        let x = p.add_var("x", -5.0, 5.0, 1.0);
        let y = p.add_var("y", -5.0, 5.0, 1.0);
        let mut o = QuadExpr::default();
        o.add_quad(x, y, 1.0).add_linear(x, 0.3);
        p.objective = o;
        let mut c = QuadExpr::constant(1.0);
        c.add_quad(x, x, -1.0).add_quad(y, y, -1.0);
        p.add_block("disc", Block::Rows { cone: RowCone::Geq, rows: vec![c] });
        let out = solve_nlp_detailed(&p, &[0.5, 0.5], &opts());
        assert!(out.status.is_usable());
        for t in &out.trace {
            assert!(t.merit_after <= t.merit_before + 1e-12 * t.merit_before.abs().max(1.0), "{t:?}");
        }
    }
}
