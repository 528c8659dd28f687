//! Single-level reductions of the bidding problem.
//!
//! The lower level enters through its primal rows, its dual and whatever the
//! technique uses to tie the two together. Every reduction maximizes the
//! storage profit; the emitted [`Nlp`] minimizes its negation.

mod convert;
mod technique;
mod upper;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{relative_gap_pct, Affine, ConicError, DualProgram, PairingMap, RowKind};
use crate::opf::{LowerLevelBundle, OperatingPoint, PriceBounds, PriceSurface};
use crate::smoothing::SmoothingKind;
use crate::solver::{Block, Nlp, QuadExpr, RowCone};

pub use convert::{as_conic, solve_reduced};
pub use technique::{parse_technique_list, TechniqueKind, TechniqueSpec};
pub use upper::{UpperLevelModel, UpperVars};

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("unknown technique `{0}`; valid names: {names}", names = TechniqueKind::valid_names())]
    UnknownTechnique(String),
    #[error("{0}")]
    Parameter(String),
    #[error("stationarity strengthening inapplicable: no generator has a quadratic cost")]
    StationarityInapplicable,
    #[error("{0} needs price bounds")]
    MissingBounds(TechniqueKind),
    #[error("bundle and dual do not match: {0}")]
    Mismatch(String),
    #[error("not convertible to a conic program: {0}")]
    NotConic(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// Origin of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarTag {
    Upper,
    Primal,
    Dual,
    Auxiliary,
}

/// Origin of a constraint block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockTag {
    Upper,
    Primal,
    Dual,
    Stationarity,
    Technique,
}

/// A reduced single-level program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedProblem {
    pub spec: TechniqueSpec,
    pub nlp: Nlp,
    pub var_tags: Vec<VarTag>,
    pub block_tags: Vec<BlockTag>,
    pub upper: UpperVars,
    /// NLP index of each lower-level primal variable.
    pub primal: Vec<usize>,
    /// NLP index of each lower-level dual variable.
    pub dual: Vec<usize>,
    pub primal_objective: QuadExpr,
    pub dual_objective: QuadExpr,
    pub profit: QuadExpr,
    /// The continuous relaxation is convex.
    pub convex: bool,
    /// Storage rating, energy capacity.
    pub(crate) storage: (f64, f64),
    pub(crate) efficiency: (f64, f64),
    pub(crate) initial_energy: f64,
    /// Auxiliary products `(w, a, b)` with `w ≈ a·b` for warm starts.
    pub(crate) products: Vec<(usize, usize, usize)>,
}

impl ReducedProblem {
    /// The upper-level objective being maximized.
    pub fn objective(&self, x: &[f64]) -> f64 {
        -self.nlp.objective_value(x)
    }

    pub fn profit_at(&self, x: &[f64]) -> f64 {
        self.profit.eval(x)
    }

    /// Storage injections `(p, q)`; `q` is empty without reactive bids.
    pub fn bids(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.upper.p_es.iter().map(|&j| x[j]).collect(), self.upper.q_es.iter().map(|&j| x[j]).collect())
    }

    pub fn lower_primal(&self, x: &[f64]) -> Vec<f64> {
        self.primal.iter().map(|&j| x[j]).collect()
    }

    pub fn lower_dual(&self, x: &[f64]) -> Vec<f64> {
        self.dual.iter().map(|&j| x[j]).collect()
    }

    /// `(Ω^p, Ω^d)` at a point.
    pub fn lower_objectives(&self, x: &[f64]) -> (f64, f64) {
        (self.primal_objective.eval(x), self.dual_objective.eval(x))
    }

    /// Auxiliary products `(w, a, b)` standing for `w = a·b`.
    pub fn products(&self) -> &[(usize, usize, usize)] {
        &self.products
    }

    pub fn gap_pct(&self, x: &[f64]) -> f64 {
        let (p, d) = self.lower_objectives(x);
        relative_gap_pct(p, d)
    }

    /// Start point from a solved lower level: its primal and dual values,
    /// the upper level at the operating point's bids, products evaluated.
    pub fn warm_start(&self, op: &OperatingPoint) -> Vec<f64> {
        let n = self.nlp.num_vars();
        let mut v: Vec<f64> = (0..n).map(|j| 0.0f64.clamp(self.nlp.lower[j], self.nlp.upper[j])).collect();
        if op.x.len() == self.primal.len() {
            for (&j, &val) in self.primal.iter().zip(&op.x) {
                v[j] = val;
            }
        }
        if op.y.len() == self.dual.len() {
            for (&j, &val) in self.dual.iter().zip(&op.y) {
                v[j] = val;
            }
        }
        let u = &self.upper;
        let (eta_ch, eta_dis) = self.efficiency;
        let mut soe = self.initial_energy;
        for t in 0..u.soe.len() {
            let p = op.p_bids.get(t).copied().unwrap_or(0.0);
            v[u.p_es[t]] = p;
            v[u.p_ch[t]] = (-p).max(0.0);
            v[u.p_dis[t]] = p.max(0.0);
            soe += eta_ch * v[u.p_ch[t]] - v[u.p_dis[t]] / eta_dis;
            v[u.soe[t]] = soe;
            if !u.q_es.is_empty() {
                let q = op.q_bids.get(t).copied().unwrap_or(0.0);
                v[u.q_es[t]] = q;
                v[u.q_ch[t]] = (-q).max(0.0);
                v[u.q_dis[t]] = q.max(0.0);
            }
            if let Some(&x) = u.xp.get(t) {
                v[x] = if p < 0.0 { 1.0 } else { 0.0 };
            }
            if let Some(&x) = u.xq.get(t) {
                v[x] = if op.q_bids.get(t).copied().unwrap_or(0.0) < 0.0 { 1.0 } else { 0.0 };
            }
        }
        for &(w, a, b) in &self.products {
            v[w] = (v[a] * v[b]).clamp(self.nlp.lower[w], self.nlp.upper[w]);
        }
        v
    }

    /// Sets the solver scale of every variable from a reference point:
    /// storage variables use the rating, the rest `max(1, |value|)`.
    pub fn with_scaling(mut self, reference: &[f64]) -> Self {
        let (rating, cap) = self.storage;
        for j in 0..self.nlp.num_vars() {
            self.nlp.scale[j] = match self.var_tags[j] {
                VarTag::Upper => {
                    if self.upper.soe.contains(&j) {
                        cap
                    } else if self.nlp.integer.contains(&j) {
                        1.0
                    } else {
                        rating
                    }
                }
                _ => reference[j].abs().max(1.0),
            };
        }
        self
    }

    /// Number of variables per tag.
    pub fn count(&self, tag: VarTag) -> usize {
        self.var_tags.iter().filter(|&&t| t == tag).count()
    }

    /// Blocks of one origin.
    pub fn blocks_tagged(&self, tag: BlockTag) -> impl Iterator<Item = &(String, Block)> + '_ {
        self.nlp.blocks.iter().zip(&self.block_tags).filter(move |(_, &t)| t == tag).map(|(b, _)| b)
    }
}

/// `Σₜ (pᵉˢₜ·λ1[t,β] + qᵉˢₜ·λ2[t,β])`; `q` may be empty.
pub fn profit_of(p: &[f64], q: &[f64], surface: &PriceSurface, bus: usize) -> f64 {
    let active: f64 = p.iter().zip(&surface.lambda1).map(|(v, l)| v * l[bus]).sum();
    let reactive: f64 = q.iter().zip(&surface.lambda2).map(|(v, l)| v * l[bus]).sum();
    active + reactive
}

/// Where a lower-level parameter lives in the reduced problem.
#[derive(Debug, Clone, Copy)]
enum ParamRef {
    Var(usize),
    Const(f64),
}

pub(crate) struct Builder {
    nlp: Nlp,
    var_tags: Vec<VarTag>,
    block_tags: Vec<BlockTag>,
    products: Vec<(usize, usize, usize)>,
}

impl Builder {
    pub(crate) fn new() -> Self {
        Self { nlp: Nlp::new(), var_tags: Vec::new(), block_tags: Vec::new(), products: Vec::new() }
    }

    pub(crate) fn var(&mut self, name: impl Into<String>, lo: f64, hi: f64, tag: VarTag) -> usize {
        self.var_tags.push(tag);
        self.nlp.add_var(name, lo, hi, 1.0)
    }

    pub(crate) fn binary(&mut self, name: impl Into<String>, tag: VarTag) -> usize {
        let j = self.var(name, 0.0, 1.0, tag);
        self.nlp.integer.push(j);
        j
    }

    pub(crate) fn rows(&mut self, name: impl Into<String>, tag: BlockTag, cone: RowCone, rows: Vec<QuadExpr>) {
        if rows.is_empty() {
            return;
        }
        self.block_tags.push(tag);
        self.nlp.add_block(name, Block::Rows { cone, rows });
    }
}

fn lin(terms: &[(usize, f64)], constant: f64) -> QuadExpr {
    let mut e = QuadExpr::constant(constant);
    for &(j, a) in terms {
        e.add_linear(j, a);
    }
    e
}

/// `e · v` for affine `e`.
fn times_var(e: &QuadExpr, v: usize) -> QuadExpr {
    let mut out = QuadExpr::constant(0.0);
    for &(j, a) in &e.linear {
        out.add_quad(j, v, a);
    }
    if e.constant != 0.0 {
        out.add_linear(v, e.constant);
    }
    out
}

struct Lower<'a> {
    bundle: &'a LowerLevelBundle,
    dual: &'a DualProgram,
    primal: Vec<usize>,
    duals: Vec<usize>,
    params: Vec<ParamRef>,
}

impl Lower<'_> {
    fn affine(&self, e: &Affine) -> QuadExpr {
        let mut out = QuadExpr::constant(e.constant);
        for &(v, a) in &e.vars {
            out.add_linear(self.primal[v.0], a);
        }
        for &(p, b) in &e.params {
            match self.params[p.0] {
                ParamRef::Var(j) => {
                    out.add_linear(j, b);
                }
                ParamRef::Const(c) => {
                    out.add_const(b * c);
                }
            }
        }
        out
    }

    fn primal_objective(&self) -> QuadExpr {
        let obj = self.bundle.program.objective();
        let mut e = self.affine(&obj.linear);
        for &(v, q) in &obj.quadratic {
            let j = self.primal[v.0];
            e.add_quad(j, j, q);
        }
        e
    }

    fn dual_objective(&self) -> QuadExpr {
        let d = &self.dual.objective;
        let mut e = self.affine(&d.constant);
        for &(k, a) in &d.linear {
            e.add_linear(self.duals[k], a);
        }
        for &(k, p, b) in &d.bilinear {
            match self.params[p.0] {
                ParamRef::Var(j) => {
                    e.add_quad(self.duals[k], j, b);
                }
                ParamRef::Const(c) => {
                    e.add_linear(self.duals[k], b * c);
                }
            }
        }
        for &(k, q) in &d.quadratic {
            let j = self.duals[k];
            e.add_quad(j, j, -q);
        }
        e
    }

    fn stationarity(&self, row: &crate::conic::StationarityRow) -> QuadExpr {
        let mut e = QuadExpr::constant(row.constant);
        if row.primal_coef != 0.0 {
            e.add_linear(self.primal[row.var.0], row.primal_coef);
        }
        for &(k, a) in &row.terms {
            e.add_linear(self.duals[k], a);
        }
        e
    }

    fn price(&self, rows: &[Vec<usize>], t: usize, bus: usize) -> Result<usize, ReduceError> {
        let r = rows[t][bus];
        self.dual
            .row_multiplier(r)
            .map(|k| self.duals[k])
            .ok_or_else(|| ReduceError::Mismatch(format!("balance row {r} has no multiplier")))
    }
}

/// One kind of storage injection (active or reactive) as seen by the
/// expansions and envelopes.
struct Injection<'a> {
    tag: char,
    inj: &'a [usize],
    ch: &'a [usize],
    dis: &'a [usize],
    sign: &'a [usize],
    price: Vec<usize>,
    bounds: &'a PriceBounds,
}

/// Builds the reduced problem of `spec`.
pub fn reduce(
    upper: &UpperLevelModel,
    bundle: &LowerLevelBundle,
    dual: &DualProgram,
    pairing: &PairingMap,
    prices: &PriceSurface,
    spec: &TechniqueSpec,
) -> Result<ReducedProblem, ReduceError> {
    use TechniqueKind::*;
    spec.validate()?;
    let kind = spec.kind;
    let prog = &bundle.program;
    if dual.stationarity.len() != prog.num_vars() || dual.row_dual.len() != prog.rows().len() {
        return Err(ReduceError::Mismatch("dual was not derived from this program".into()));
    }
    if upper.horizon != bundle.horizon() {
        return Err(ReduceError::Mismatch(format!(
            "upper level spans {} hours, lower level {}",
            upper.horizon,
            bundle.horizon()
        )));
    }
    let reactive = upper.reactive && bundle.has_reactive();
    let steps = kind.uses_steps();
    let strong = dual.strengthening_rows(prog);
    if kind == PdS && strong.is_empty() {
        return Err(ReduceError::StationarityInapplicable);
    }
    if kind.uses_price_bounds() && (prices.bounds1.is_none() || (reactive && prices.bounds2.is_none())) {
        return Err(ReduceError::MissingBounds(kind));
    }

    let mut b = Builder::new();
    let uv = upper.emit(&mut b, reactive, spec.binaries || steps);

    let primal: Vec<usize> = prog
        .vars()
        .iter()
        .map(|v| b.var(format!("x:{}", v.name), f64::NEG_INFINITY, f64::INFINITY, VarTag::Primal))
        .collect();
    let duals: Vec<usize> = dual
        .vars
        .iter()
        .map(|v| b.var(format!("y:{}", v.name), f64::NEG_INFINITY, f64::INFINITY, VarTag::Dual))
        .collect();
    let mut params: Vec<ParamRef> = prog.params().iter().map(|p| ParamRef::Const(p.value)).collect();
    for (t, id) in bundle.p_es.iter().enumerate() {
        params[id.0] = ParamRef::Var(uv.p_es[t]);
    }
    for (t, id) in bundle.q_es.iter().enumerate() {
        params[id.0] = if reactive { ParamRef::Var(uv.q_es[t]) } else { ParamRef::Const(0.0) };
    }
    let low = Lower { bundle, dual, primal: primal.clone(), duals: duals.clone(), params };

    let beta = bundle.storage_bus;
    let horizon = bundle.horizon();
    let lam1: Vec<usize> = (0..horizon).map(|t| low.price(&bundle.balance_p, t, beta)).collect::<Result<_, _>>()?;
    let lam2: Vec<usize> = if reactive {
        (0..horizon).map(|t| low.price(&bundle.balance_q, t, beta)).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let omega_p = low.primal_objective().canonical();
    let omega_d = low.dual_objective().canonical();
    let mut profit = QuadExpr::constant(0.0);
    for t in 0..horizon {
        profit.add_quad(uv.p_es[t], lam1[t], 1.0);
        if reactive {
            profit.add_quad(uv.q_es[t], lam2[t], 1.0);
        }
    }
    let profit = profit.canonical();
    // profit + Ω^d − Ω^p; the bilinear terms cancel
    let mut convexified = profit.clone();
    convexified.add(&omega_d, 1.0).add(&omega_p, -1.0);
    let convexified = convexified.canonical();

    // primal feasibility
    let smoothed = matches!(kind, Sm1 | Sm2);
    let (mut eq, mut geq) = (Vec::new(), Vec::new());
    for row in prog.rows() {
        let e = low.affine(&row.expr);
        match row.kind {
            RowKind::Eq => eq.push(e),
            RowKind::Geq => geq.push(e),
        }
    }
    b.rows("primal equalities", BlockTag::Primal, RowCone::Eq, eq);
    if !smoothed {
        b.rows("primal inequalities", BlockTag::Primal, RowCone::Geq, geq);
        for soc in prog.socs() {
            let rows = soc.vector().iter().map(|e| low.affine(e)).collect();
            b.rows(format!("primal {}", soc.name), BlockTag::Primal, RowCone::Soc, rows);
        }
    }

    // dual feasibility
    let stat = dual.stationarity.iter().map(|r| low.stationarity(r)).collect();
    b.rows("dual stationarity", BlockTag::Dual, RowCone::Eq, stat);
    if !smoothed {
        b.rows(
            "dual nonnegativity",
            BlockTag::Dual,
            RowCone::Geq,
            dual.nonneg.iter().map(|&k| QuadExpr::var(duals[k])).collect(),
        );
        for (m, block) in dual.cones.iter().enumerate() {
            let rows = block.iter().map(|&k| QuadExpr::var(duals[k])).collect();
            b.rows(format!("dual cone {}", prog.socs()[m].name), BlockTag::Dual, RowCone::Soc, rows);
        }
    }
    if kind.strengthened() {
        b.rows(
            "strengthening",
            BlockTag::Stationarity,
            RowCone::Eq,
            strong.iter().map(|r| low.stationarity(r)).collect(),
        );
    }

    // complementarity products x·y per pair
    let pair_products = || -> Vec<QuadExpr> {
        pairing
            .pairs
            .iter()
            .map(|pair| {
                let mut e = QuadExpr::constant(0.0);
                for (a, &k) in pair.primal_vector(prog).iter().zip(&pair.dual) {
                    e.add(&times_var(&low.affine(a), duals[k]), 1.0);
                }
                e.canonical()
            })
            .collect()
    };
    let sum = |es: &[QuadExpr]| {
        let mut s = QuadExpr::constant(0.0);
        for e in es {
            s.add(e, 1.0);
        }
        s.canonical()
    };
    let gap = {
        let mut g = omega_d.clone();
        g.add(&omega_p, -1.0);
        g.canonical()
    };

    let mut objective = convexified.clone();
    match kind {
        Pd | PdS => {}
        Sd => b.rows("strong duality", BlockTag::Technique, RowCone::Eq, vec![gap.clone()]),
        SdR => {
            let mut r = gap.clone();
            r.add_const(spec.eps());
            b.rows("relaxed strong duality", BlockTag::Technique, RowCone::Geq, vec![r]);
        }
        Cs => b.rows("complementarity", BlockTag::Technique, RowCone::Eq, pair_products()),
        CsR => {
            let rows = pair_products()
                .into_iter()
                .map(|e| {
                    let mut r = e.scaled(-1.0);
                    r.add_const(spec.eps());
                    r
                })
                .collect();
            b.rows("relaxed complementarity", BlockTag::Technique, RowCone::Geq, rows);
        }
        CsA => b.rows("aggregated complementarity", BlockTag::Technique, RowCone::Eq, vec![sum(&pair_products())]),
        CsAr => {
            let mut r = sum(&pair_products()).scaled(-1.0);
            r.add_const(pairing.len() as f64 * spec.eps());
            b.rows("relaxed aggregated complementarity", BlockTag::Technique, RowCone::Geq, vec![r]);
        }
        PfSd => {
            objective = profit.clone();
            objective.add(&gap, 1.0 + spec.pi());
        }
        PfCs => {
            objective.add(&sum(&pair_products()), -spec.pi());
        }
        Sm1 | Sm2 => {
            let sk = if kind == Sm1 { SmoothingKind::Chks } else { SmoothingKind::Kanzow };
            for pair in &pairing.pairs {
                let x = pair.primal_vector(prog).iter().map(|a| low.affine(a)).collect();
                let y = pair.dual.iter().map(|&k| QuadExpr::var(duals[k])).collect();
                b.block_tags.push(BlockTag::Technique);
                b.nlp.add_block(format!("smoothed {}", pair.name), Block::Smoothed { kind: sk, eps: spec.eps(), x, y });
            }
        }
        Mc | BeSd | BePf | UeSd | UePf => {
            let mut kinds = vec![Injection {
                tag: 'p',
                inj: &uv.p_es,
                ch: &uv.p_ch,
                dis: &uv.p_dis,
                sign: &uv.xp,
                price: lam1.clone(),
                bounds: prices.bounds1.as_ref().expect("checked above"),
            }];
            if reactive {
                kinds.push(Injection {
                    tag: 'q',
                    inj: &uv.q_es,
                    ch: &uv.q_ch,
                    dis: &uv.q_dis,
                    sign: &uv.xq,
                    price: lam2.clone(),
                    bounds: prices.bounds2.as_ref().expect("checked above"),
                });
            }
            // Σ w ≈ Σ injection·price
            let mut w_sum = QuadExpr::constant(0.0);
            for k in &kinds {
                let w = if kind == Mc {
                    mccormick(&mut b, k, upper.rating, beta)
                } else {
                    expansion(&mut b, k, upper.rating, beta, spec.steps(), matches!(kind, UeSd | UePf))
                };
                w_sum.add(&w, 1.0);
            }
            match kind {
                Mc | BeSd | UeSd => {
                    // Ω^d with the bilinears replaced, minus Ω^p
                    let mut r = gap.clone();
                    r.add(&profit, 1.0).add(&w_sum, -1.0);
                    b.rows("strong duality envelope", BlockTag::Technique, RowCone::Geq, vec![r.canonical()]);
                }
                _ => {
                    objective = convexified.scaled(1.0 + spec.pi());
                    objective.add(&w_sum, -spec.pi());
                }
            }
        }
    }
    b.nlp.objective = objective.scaled(-1.0).canonical();

    Ok(ReducedProblem {
        spec: *spec,
        nlp: b.nlp,
        var_tags: b.var_tags,
        block_tags: b.block_tags,
        upper: uv,
        primal,
        dual: duals,
        primal_objective: omega_p,
        dual_objective: omega_d,
        profit,
        convex: kind.is_convex(),
        storage: (upper.rating, upper.capacity),
        efficiency: (upper.eta_ch, upper.eta_dis),
        initial_energy: upper.initial_energy,
        products: b.products,
    })
}

/// McCormick envelope of `injection·price` per hour; returns `Σ w`.
fn mccormick(b: &mut Builder, k: &Injection, rating: f64, bus: usize) -> QuadExpr {
    let (plo, phi) = (-rating, rating);
    let mut total = QuadExpr::constant(0.0);
    let mut rows = Vec::new();
    for t in 0..k.inj.len() {
        let (llo, lhi) = (k.bounds.lower[t][bus], k.bounds.upper[t][bus]);
        let w = b.var(format!("w{}[{t}]", k.tag), f64::NEG_INFINITY, f64::INFINITY, VarTag::Auxiliary);
        b.products.push((w, k.inj[t], k.price[t]));
        let (p, l) = (k.inj[t], k.price[t]);
        // under: w ≥ l̲p + λp̲ − l̲p̲, w ≥ l̄p + λp̄ − l̄p̄
        rows.push(lin(&[(w, 1.0), (p, -llo), (l, -plo)], llo * plo));
        rows.push(lin(&[(w, 1.0), (p, -lhi), (l, -phi)], lhi * phi));
        // over: w ≤ l̄p + λp̲ − l̄p̲, w ≤ l̲p + λp̄ − l̲p̄
        rows.push(lin(&[(w, -1.0), (p, lhi), (l, plo)], -lhi * plo));
        rows.push(lin(&[(w, -1.0), (p, llo), (l, phi)], -llo * phi));
        total.add_linear(w, 1.0);
    }
    b.rows(format!("McCormick {}", k.tag), BlockTag::Technique, RowCone::Geq, rows);
    total
}

/// Binary (`unary == false`) or unary expansion of `injection·price`;
/// returns `Σ (w^dis − w^ch)`.
fn expansion(b: &mut Builder, k: &Injection, rating: f64, bus: usize, d: usize, unary: bool) -> QuadExpr {
    let nbits = (d as f64).log2().ceil() as usize;
    let (levels, weights): (f64, Vec<f64>) = if unary {
        (d as f64, (1..=d).map(|u| u as f64).collect())
    } else {
        (((1usize << nbits) - 1) as f64, (0..nbits).map(|bit| (1usize << bit) as f64).collect())
    };
    let name = if unary { "ue" } else { "be" };
    let mut total = QuadExpr::constant(0.0);
    let (mut eq, mut geq) = (Vec::new(), Vec::new());
    for t in 0..k.inj.len() {
        let (llo, lhi) = (k.bounds.lower[t][bus], k.bounds.upper[t][bus]);
        let (ch, dis, x, l) = (k.ch[t], k.dis[t], k.sign[t], k.price[t]);
        let wch = b.var(format!("w{}_ch[{t}]", k.tag), f64::NEG_INFINITY, f64::INFINITY, VarTag::Auxiliary);
        let wdis = b.var(format!("w{}_dis[{t}]", k.tag), f64::NEG_INFINITY, f64::INFINITY, VarTag::Auxiliary);
        b.products.push((wch, ch, l));
        b.products.push((wdis, dis, l));
        let y = b.var(format!("y{}[{t}]", k.tag), 0.0, levels, VarTag::Auxiliary);
        let bits: Vec<usize> =
            (0..weights.len()).map(|i| b.binary(format!("x{}_{name}[{t}][{i}]", k.tag), VarTag::Auxiliary)).collect();
        let ws: Vec<usize> = (0..weights.len())
            .map(|i| b.var(format!("w{}_{name}[{t}][{i}]", k.tag), f64::NEG_INFINITY, f64::INFINITY, VarTag::Auxiliary))
            .collect();
        for (&w, &bit) in ws.iter().zip(&bits) {
            b.products.push((w, bit, l));
        }
        // y = Σ weight·x
        let mut r = lin(&[(y, 1.0)], 0.0);
        for (&bit, &wt) in bits.iter().zip(&weights) {
            r.add_linear(bit, -wt);
        }
        eq.push(r);
        if unary {
            // at most one level
            let mut r = QuadExpr::constant(1.0);
            for &bit in &bits {
                r.add_linear(bit, -1.0);
            }
            geq.push(r);
        }
        // (ch + dis)/s̄ = y/levels
        eq.push(lin(&[(ch, 1.0 / rating), (dis, 1.0 / rating), (y, -1.0 / levels)], 0.0));
        // (w^ch + w^dis)/s̄ = Σ weight·w/levels
        let mut r = lin(&[(wch, 1.0 / rating), (wdis, 1.0 / rating)], 0.0);
        for (&w, &wt) in ws.iter().zip(&weights) {
            r.add_linear(w, -wt / levels);
        }
        eq.push(r);
        // m̲·x ≤ w^ch ≤ m̄·x and the same for w^dis with 1 − x, where
        // [m̲, m̄] = [min(0, λ̲), max(0, λ̄)]·s̄ holds every price·magnitude
        let (mlo, mhi) = (llo.min(0.0) * rating, lhi.max(0.0) * rating);
        geq.push(lin(&[(wch, 1.0), (x, -mlo)], 0.0));
        geq.push(lin(&[(wch, -1.0), (x, mhi)], 0.0));
        geq.push(lin(&[(wdis, 1.0), (x, mlo)], -mlo));
        geq.push(lin(&[(wdis, -1.0), (x, -mhi)], mhi));
        for (&bit, &w) in bits.iter().zip(&ws) {
            // λ̲·x ≤ w ≤ λ̄·x
            geq.push(lin(&[(w, 1.0), (bit, -llo)], 0.0));
            geq.push(lin(&[(w, -1.0), (bit, lhi)], 0.0));
            // λ + λ̄x − λ̄ ≤ w ≤ λ + λ̲x − λ̲
            geq.push(lin(&[(w, 1.0), (l, -1.0), (bit, -lhi)], lhi));
            geq.push(lin(&[(w, -1.0), (l, 1.0), (bit, llo)], -llo));
        }
        total.add_linear(wdis, 1.0).add_linear(wch, -1.0);
    }
    b.rows(format!("expansion {} mapping", k.tag), BlockTag::Technique, RowCone::Eq, eq);
    b.rows(format!("expansion {} envelopes", k.tag), BlockTag::Technique, RowCone::Geq, geq);
    total
}
