//! Lower-level market clearing over the horizon: a DC linear program or the
//! Jabr second-order cone relaxation of AC power flow, with the storage
//! injections as parameters, thermal screening and locational prices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BilevelInstance, LowerLevelModel, Violation};
use crate::conic::{dualize, Affine, ConicBuilder, ConicError, ConicProgram, ParamId, Relation, VarId};
use crate::solver::{solve_conic, SolveOptions, Status};

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("network is not connected")]
    Disconnected,
    #[error("branch {0} has zero reactance")]
    ZeroReactance(usize),
    #[error("price bound width {0} is negative")]
    NegativeWidth(f64),
    #[error("dual solution has {got} values, at least {expected} needed")]
    MissingDual { expected: usize, got: usize },
    #[error("bids cover {got} hours, horizon is {expected}")]
    Horizon { expected: usize, got: usize },
    #[error("lower level solve ended with status `{0}`")]
    Solve(Status),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// Branch-hours whose thermal limit is part of the program.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    set: BTreeSet<(usize, usize)>,
}

impl Screen {
    pub fn none() -> Self {
        Self::default()
    }

    /// Every rated branch in every hour.
    pub fn all(inst: &BilevelInstance) -> Self {
        let mut s = Self::none();
        for t in 0..inst.horizon() {
            for (k, br) in inst.network.branches.iter().enumerate() {
                if br.rate.is_some() {
                    s.insert(t, k);
                }
            }
        }
        s
    }

    pub fn contains(&self, hour: usize, branch: usize) -> bool {
        self.set.contains(&(hour, branch))
    }

    pub fn insert(&mut self, hour: usize, branch: usize) -> bool {
        self.set.insert((hour, branch))
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.set.iter().copied()
    }
}

/// Power leaving each end of a branch, as expressions of the program
/// variables. The reactive parts are absent in the DC model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_fr: Affine,
    pub p_to: Affine,
    pub q_fr: Option<Affine>,
    pub q_to: Option<Affine>,
}

impl BranchFlow {
    /// Larger apparent power of the two ends.
    pub fn loading(&self, x: &[f64], theta: &[f64]) -> f64 {
        let q = |e: &Option<Affine>| e.as_ref().map_or(0.0, |e| e.eval(x, theta));
        let fr = self.p_fr.eval(x, theta).hypot(q(&self.q_fr));
        let to = self.p_to.eval(x, theta).hypot(q(&self.q_to));
        fr.max(to)
    }
}

/// The lower-level program and the handles the reduction needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerLevelBundle {
    pub model: LowerLevelModel,
    pub program: ConicProgram,
    /// Active balance row per `[hour][bus]`.
    pub balance_p: Vec<Vec<usize>>,
    /// Reactive balance row per `[hour][bus]`; empty for DC.
    pub balance_q: Vec<Vec<usize>>,
    /// Storage active injection per hour.
    pub p_es: Vec<ParamId>,
    /// Storage reactive injection per hour; empty for DC.
    pub q_es: Vec<ParamId>,
    /// Active generation per `[hour][generator]`.
    pub pg: Vec<Vec<VarId>>,
    pub flows: Vec<Vec<BranchFlow>>,
    pub screen: Screen,
    /// Position of the storage bus.
    pub storage_bus: usize,
}

impl LowerLevelBundle {
    pub fn horizon(&self) -> usize {
        self.p_es.len()
    }

    pub fn has_reactive(&self) -> bool {
        !self.q_es.is_empty()
    }

    /// The program with the storage bids as parameter values. `q` is
    /// ignored by the DC model.
    pub fn with_bids(&self, p: &[f64], q: &[f64]) -> Result<ConicProgram, OpfError> {
        let t = self.horizon();
        if p.len() != t || (self.has_reactive() && q.len() != t) {
            return Err(OpfError::Horizon { expected: t, got: if p.len() != t { p.len() } else { q.len() } });
        }
        let mut values = self.program.param_values();
        for (id, v) in self.p_es.iter().zip(p) {
            values[id.0] = *v;
        }
        for (id, v) in self.q_es.iter().zip(q) {
            values[id.0] = *v;
        }
        Ok(self.program.with_params(&values)?)
    }
}

fn sq(v: f64) -> f64 {
    v * v
}

/// Builds the lower level of the instance's model.
pub fn build_lower_level(inst: &BilevelInstance, screen: &Screen) -> Result<LowerLevelBundle, OpfError> {
    match inst.model {
        LowerLevelModel::Dc => build_dc(inst, screen),
        LowerLevelModel::Jabr => build_jabr(inst, screen),
    }
}

fn generation(
    b: &mut ConicBuilder,
    inst: &BilevelInstance,
    t: usize,
    reactive: bool,
    obj: &mut Affine,
    quad: &mut Vec<(VarId, f64)>,
) -> Result<(Vec<VarId>, Vec<VarId>), OpfError> {
    let mut pg = Vec::new();
    let mut qg = Vec::new();
    for (g, gen) in inst.network.generators.iter().enumerate() {
        let p = b.add_variable(&format!("pg[{t}][{g}]"), Some(gen.pmin), Some(gen.pmax))?;
        obj.add_term(p, gen.cost.c1);
        obj.constant += gen.cost.c0;
        if gen.cost.c2 != 0.0 {
            quad.push((p, gen.cost.c2));
        }
        pg.push(p);
        if reactive {
            qg.push(b.add_variable(&format!("qg[{t}][{g}]"), Some(gen.qmin), Some(gen.qmax))?);
        }
    }
    Ok((pg, qg))
}

fn check(inst: &BilevelInstance) -> Result<(), OpfError> {
    if !inst.network.is_connected() {
        return Err(OpfError::Disconnected);
    }
    if let Some(k) = inst.network.branches.iter().position(|br| br.x == 0.0 && br.r == 0.0) {
        return Err(OpfError::ZeroReactance(k));
    }
    Ok(())
}

/// DC power flow: angles per hour, lossless flows `(θᵢ − θⱼ − σ)/(x·τ)`,
/// screened limits `|flow| ≤ S̄` and nodal active balances.
pub fn build_dc(inst: &BilevelInstance, screen: &Screen) -> Result<LowerLevelBundle, OpfError> {
    check(inst)?;
    let net = &inst.network;
    if let Some(k) = net.branches.iter().position(|br| br.x == 0.0) {
        return Err(OpfError::ZeroReactance(k));
    }
    let nb = net.buses.len();
    let beta = inst.storage_bus();
    let gens_at = net.generators_at();
    let mut b = ConicBuilder::new();
    let mut obj = Affine::zero();
    let mut quad = Vec::new();
    let (mut balance_p, mut p_es, mut pg_all, mut flows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());

    for t in 0..inst.horizon() {
        let pe = b.add_parameter(&format!("p_es[{t}]"), 0.0)?;
        p_es.push(pe);
        let (pg, _) = generation(&mut b, inst, t, false, &mut obj, &mut quad)?;
        let mut va = Vec::with_capacity(nb);
        for i in 0..nb {
            let fix = if i == 0 { Some(0.0) } else { None };
            va.push(b.add_variable(&format!("va[{t}][{i}]"), fix, fix)?);
        }
        let mut hour_flows = Vec::new();
        let mut injection: Vec<Affine> = vec![Affine::zero(); nb];
        for (k, br) in net.branches.iter().enumerate() {
            let (i, j) = net.branch_ends(k);
            let y = 1.0 / (br.x * br.tap);
            let p_fr = Affine::term(va[i], y).plus(va[j], -y).plus_const(-y * br.shift);
            injection[i].add_expr(&p_fr, -1.0);
            injection[j].add_expr(&p_fr, 1.0);
            if let (Some(rate), true) = (br.rate, screen.contains(t, k)) {
                b.add_linear(&format!("flow+[{t}][{k}]"), Relation::Geq, p_fr.scaled(-1.0).plus_const(rate))?;
                b.add_linear(&format!("flow-[{t}][{k}]"), Relation::Geq, p_fr.clone().plus_const(rate))?;
            }
            hour_flows.push(BranchFlow { p_to: p_fr.scaled(-1.0), p_fr, q_fr: None, q_to: None });
        }
        let (pd, _) = inst.bus_loads(t);
        let mut rows = Vec::with_capacity(nb);
        for i in 0..nb {
            let mut e = injection[i].clone();
            for &g in &gens_at[i] {
                e.add_term(pg[g], 1.0);
            }
            e.constant -= pd[i] + net.buses[i].gs;
            if i == beta {
                e.add_param(pe, 1.0);
            }
            rows.push(b.add_linear(&format!("bal_p[{t}][{i}]"), Relation::Eq, e)?);
        }
        balance_p.push(rows);
        pg_all.push(pg);
        flows.push(hour_flows);
    }
    b.set_quadratic_objective(obj, quad)?;
    Ok(LowerLevelBundle {
        model: LowerLevelModel::Dc,
        program: b.build(),
        balance_p,
        balance_q: Vec::new(),
        p_es,
        q_es: Vec::new(),
        pg: pg_all,
        flows,
        screen: screen.clone(),
        storage_bus: beta,
    })
}

/// Jabr relaxation: squared magnitudes `wᵢ`, one `(c, s) = V_i·V_j*` per
/// connected bus pair with `c² + s² ≤ wᵢ·wⱼ`, pi-model flows with tap and
/// phase shift, apparent-power limits and active and reactive balances.
pub fn build_jabr(inst: &BilevelInstance, screen: &Screen) -> Result<LowerLevelBundle, OpfError> {
    check(inst)?;
    let net = &inst.network;
    let nb = net.buses.len();
    let beta = inst.storage_bus();
    let gens_at = net.generators_at();
    let mut b = ConicBuilder::new();
    let mut obj = Affine::zero();
    let mut quad = Vec::new();
    let (mut balance_p, mut balance_q) = (Vec::new(), Vec::new());
    let (mut p_es, mut q_es, mut pg_all, mut flows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());

    for t in 0..inst.horizon() {
        let pe = b.add_parameter(&format!("p_es[{t}]"), 0.0)?;
        let qe = b.add_parameter(&format!("q_es[{t}]"), 0.0)?;
        p_es.push(pe);
        q_es.push(qe);
        let (pg, qg) = generation(&mut b, inst, t, true, &mut obj, &mut quad)?;
        let mut w = Vec::with_capacity(nb);
        for (i, bus) in net.buses.iter().enumerate() {
            w.push(b.add_variable(&format!("w[{t}][{i}]"), Some(sq(bus.vmin)), Some(sq(bus.vmax)))?);
        }
        let mut pairs: BTreeMap<(usize, usize), (VarId, VarId)> = BTreeMap::new();
        for k in 0..net.branches.len() {
            let (i, j) = net.branch_ends(k);
            let key = (i.min(j), i.max(j));
            if pairs.contains_key(&key) {
                continue;
            }
            let c = b.free(&format!("wr[{t}][{}-{}]", key.0, key.1))?;
            let s = b.free(&format!("wi[{t}][{}-{}]", key.0, key.1))?;
            b.add_soc(
                &format!("jabr[{t}][{}-{}]", key.0, key.1),
                Affine::var(w[key.0]).plus(w[key.1], 1.0),
                vec![Affine::term(c, 2.0), Affine::term(s, 2.0), Affine::var(w[key.0]).plus(w[key.1], -1.0)],
            )?;
            pairs.insert(key, (c, s));
        }

        let mut inj_p: Vec<Affine> = vec![Affine::zero(); nb];
        let mut inj_q: Vec<Affine> = vec![Affine::zero(); nb];
        let mut hour_flows = Vec::new();
        for (k, br) in net.branches.iter().enumerate() {
            let (f, to) = net.branch_ends(k);
            let (c, s0) = pairs[&(f.min(to), f.max(to))];
            // s of V_f·V_to* flips sign when the pair is stored reversed
            let ss = if f <= to { 1.0 } else { -1.0 };
            let (g, bser) = br.series_admittance();
            let (bc_fr, bc_to) = br.charging();
            let (cs, sn) = (br.shift.cos(), br.shift.sin());
            let tau = br.tap;
            let a = (g * cs - bser * sn) / tau;
            let bb = (g * sn + bser * cs) / tau;
            let cc = (g * cs + bser * sn) / tau;
            let d = (g * sn - bser * cs) / tau;
            let p_fr = Affine::term(w[f], g / sq(tau)).plus(c, -a).plus(s0, -bb * ss);
            let q_fr = Affine::term(w[f], -(bser + bc_fr) / sq(tau)).plus(s0, -a * ss).plus(c, bb);
            let p_to = Affine::term(w[to], g).plus(c, -cc).plus(s0, -d * ss);
            let q_to = Affine::term(w[to], -(bser + bc_to)).plus(c, -d).plus(s0, cc * ss);
            inj_p[f].add_expr(&p_fr, -1.0);
            inj_q[f].add_expr(&q_fr, -1.0);
            inj_p[to].add_expr(&p_to, -1.0);
            inj_q[to].add_expr(&q_to, -1.0);
            if let (Some(rate), true) = (br.rate, screen.contains(t, k)) {
                let head = Affine::constant(rate);
                b.add_soc(&format!("smax_fr[{t}][{k}]"), head.clone(), vec![p_fr.clone(), q_fr.clone()])?;
                b.add_soc(&format!("smax_to[{t}][{k}]"), head, vec![p_to.clone(), q_to.clone()])?;
            }
            hour_flows.push(BranchFlow { p_fr, p_to, q_fr: Some(q_fr), q_to: Some(q_to) });
        }

        let (pd, qd) = inst.bus_loads(t);
        let (mut rows_p, mut rows_q) = (Vec::with_capacity(nb), Vec::with_capacity(nb));
        for i in 0..nb {
            let bus = &net.buses[i];
            let mut ep = inj_p[i].clone().plus(w[i], -bus.gs).plus_const(-pd[i]);
            let mut eq = inj_q[i].clone().plus(w[i], bus.bs).plus_const(-qd[i]);
            for &gi in &gens_at[i] {
                ep.add_term(pg[gi], 1.0);
                eq.add_term(qg[gi], 1.0);
            }
            if i == beta {
                ep.add_param(pe, 1.0);
                eq.add_param(qe, 1.0);
            }
            rows_p.push(b.add_linear(&format!("bal_p[{t}][{i}]"), Relation::Eq, ep)?);
            rows_q.push(b.add_linear(&format!("bal_q[{t}][{i}]"), Relation::Eq, eq)?);
        }
        balance_p.push(rows_p);
        balance_q.push(rows_q);
        pg_all.push(pg);
        flows.push(hour_flows);
    }
    b.set_quadratic_objective(obj, quad)?;
    Ok(LowerLevelBundle {
        model: LowerLevelModel::Jabr,
        program: b.build(),
        balance_p,
        balance_q,
        p_es,
        q_es,
        pg: pg_all,
        flows,
        screen: screen.clone(),
        storage_bus: beta,
    })
}

/// Bounds on the prices of one kind, per `[hour][bus]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBounds {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl PriceBounds {
    pub fn contains(&self, t: usize, i: usize, v: f64, tol: f64) -> bool {
        v >= self.lower[t][i] - tol && v <= self.upper[t][i] + tol
    }
}

/// Locational prices per `[hour][bus]` and, once estimated, their bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSurface {
    pub lambda1: Vec<Vec<f64>>,
    /// Reactive prices; empty for DC.
    pub lambda2: Vec<Vec<f64>>,
    pub bounds1: Option<PriceBounds>,
    pub bounds2: Option<PriceBounds>,
}

impl PriceSurface {
    pub fn has_reactive(&self) -> bool {
        !self.lambda2.is_empty()
    }
}

/// Half-widths of the price envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceWidths {
    pub active: f64,
    pub reactive: f64,
}

impl Default for PriceWidths {
    fn default() -> Self {
        Self { active: 1000.0, reactive: 300.0 }
    }
}

impl PriceWidths {
    pub fn scaled(&self, f: f64) -> Self {
        Self { active: self.active * f, reactive: self.reactive * f }
    }
}

/// Prices read from the balance-row multipliers of a lower-level dual
/// point. The multiplier of row `r` is dual variable `r`.
pub fn extract_prices(bundle: &LowerLevelBundle, dual: &[f64]) -> Result<PriceSurface, OpfError> {
    let need = bundle.program.rows().len();
    if dual.len() < need {
        return Err(OpfError::MissingDual { expected: need, got: dual.len() });
    }
    let read = |rows: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
        rows.iter().map(|hour| hour.iter().map(|&r| dual[r]).collect()).collect()
    };
    Ok(PriceSurface {
        lambda1: read(&bundle.balance_p),
        lambda2: read(&bundle.balance_q),
        bounds1: None,
        bounds2: None,
    })
}

/// Envelope `[λ − width, λ + width]` around every price. Active lower
/// bounds are clamped at zero unless the price itself is negative.
pub fn estimate_price_bounds(surface: &PriceSurface, widths: PriceWidths) -> Result<PriceSurface, OpfError> {
    for w in [widths.active, widths.reactive] {
        if !(w >= 0.0) {
            return Err(OpfError::NegativeWidth(w));
        }
    }
    let make = |prices: &Vec<Vec<f64>>, w: f64, clamp: bool| PriceBounds {
        lower: prices
            .iter()
            .map(|h| h.iter().map(|&l| if clamp && l >= 0.0 { (l - w).max(0.0) } else { l - w }).collect())
            .collect(),
        upper: prices.iter().map(|h| h.iter().map(|&l| l + w).collect()).collect(),
    };
    let mut out = surface.clone();
    out.bounds1 = Some(make(&surface.lambda1, widths.active, true));
    out.bounds2 = surface.has_reactive().then(|| make(&surface.lambda2, widths.reactive, false));
    Ok(out)
}

/// A solved lower level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub x: Vec<f64>,
    /// Multipliers in dual-program order.
    pub y: Vec<f64>,
    /// System expenses `Ω^p`.
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub prices: PriceSurface,
    pub status: Status,
    pub iterations: usize,
    pub p_bids: Vec<f64>,
    pub q_bids: Vec<f64>,
}

impl OperatingPoint {
    pub fn relative_gap_pct(&self) -> f64 {
        crate::conic::relative_gap_pct(self.primal_objective, self.dual_objective)
    }
}

/// Clears the market with the storage bids held fixed.
pub fn solve_lower_level(
    bundle: &LowerLevelBundle,
    p_bids: &[f64],
    q_bids: &[f64],
    opts: &SolveOptions,
) -> Result<OperatingPoint, OpfError> {
    let q_bids = if bundle.has_reactive() { q_bids.to_vec() } else { Vec::new() };
    let q_in = if bundle.has_reactive() { q_bids.clone() } else { vec![0.0; p_bids.len()] };
    let prog = bundle.with_bids(p_bids, &q_in)?;
    let sol = solve_conic(&prog, opts);
    if !sol.status.is_usable() {
        return Err(OpfError::Solve(sol.status));
    }
    let y = sol.dual.unwrap_or_default();
    let (dual, _) = dualize(&prog);
    let dual_objective = dual.objective.value(&y, &dual.params);
    let prices = extract_prices(bundle, &y)?;
    Ok(OperatingPoint {
        primal_objective: prog.objective_value(&sol.point),
        x: sol.point,
        y,
        dual_objective,
        prices,
        status: sol.status,
        iterations: sol.iterations,
        p_bids: p_bids.to_vec(),
        q_bids,
    })
}

/// Every rated branch-hour loaded above its limit, screened or not.
pub fn thermal_violations(inst: &BilevelInstance, bundle: &LowerLevelBundle, x: &[f64], tol: f64) -> Vec<Violation> {
    let theta = bundle.program.param_values();
    let mut out = Vec::new();
    for (t, hour) in bundle.flows.iter().enumerate() {
        for (k, fl) in hour.iter().enumerate() {
            let Some(rate) = inst.network.branches[k].rate else { continue };
            let flow = fl.loading(x, &theta);
            if flow > rate * (1.0 + tol) + tol {
                out.push(Violation { hour: t, branch: k, flow, limit: rate });
            }
        }
    }
    out
}

/// Screening at the given bids: starting from no limits, adds every
/// branch-hour loaded above `threshold·S̄` and re-solves until the set is
/// stable. `start` seeds the set.
pub fn screen_limits(
    inst: &BilevelInstance,
    start: &Screen,
    p_bids: &[f64],
    q_bids: &[f64],
    opts: &SolveOptions,
) -> Result<(Screen, LowerLevelBundle, OperatingPoint), OpfError> {
    let mut screen = start.clone();
    loop {
        let bundle = build_lower_level(inst, &screen)?;
        let op = solve_lower_level(&bundle, p_bids, q_bids, opts)?;
        let theta = bundle.with_bids(p_bids, &pad(q_bids, p_bids.len()))?.param_values();
        let mut grew = false;
        for (t, hour) in bundle.flows.iter().enumerate() {
            for (k, fl) in hour.iter().enumerate() {
                let Some(rate) = inst.network.branches[k].rate else { continue };
                if !screen.contains(t, k) && fl.loading(&op.x, &theta) > inst.thermal_threshold * rate {
                    screen.insert(t, k);
                    grew = true;
                }
            }
        }
        if !grew {
            return Ok((screen, bundle, op));
        }
    }
}

fn pad(q: &[f64], n: usize) -> Vec<f64> {
    if q.len() == n {
        q.to_vec()
    } else {
        vec![0.0; n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{build_instance, Branch, Bus, Cost, Generator, Load, LoadProfile, Network, StorageSpec};

    fn bus(id: usize) -> Bus {
        Bus { id, vmin: 0.9, vmax: 1.1, gs: 0.0, bs: 0.0 }
    }

    fn gen(bus: usize, c1: f64) -> Generator {
        Generator { bus, pmin: 0.0, pmax: 10.0, qmin: -10.0, qmax: 10.0, cost: Cost { c2: 0.0, c1, c0: 0.0 } }
    }

    fn line(rate: Option<f64>) -> Branch {
        Branch { from: 1, to: 2, r: 0.0, x: 0.1, b: 0.0, rate, tap: 1.0, shift: 0.0 }
    }

    fn two_bus(gens: Vec<Generator>, rate: Option<f64>, load: f64, model: LowerLevelModel) -> BilevelInstance {
        let net = Network {
            name: "two".into(),
            base_mva: 100.0,
            buses: vec![bus(1), bus(2)],
            generators: gens,
            branches: vec![line(rate)],
            loads: vec![Load { bus: 2, pd: load, qd: 0.0 }],
        };
        build_instance(net, &LoadProfile::flat(1), StorageSpec::new(2), model, 0.85).unwrap()
    }

    fn solve(inst: &BilevelInstance, screen: &Screen) -> (LowerLevelBundle, OperatingPoint) {
        let bundle = build_lower_level(inst, screen).unwrap();
        let op = solve_lower_level(&bundle, &[0.0], &[0.0], &SolveOptions::default()).unwrap();
        (bundle, op)
    }

    #[test]
    fn single_generator_sets_uniform_price() {
        let inst = two_bus(vec![gen(1, 10.0)], None, 1.0, LowerLevelModel::Dc);
        let (bundle, op) = solve(&inst, &Screen::none());
        assert!((op.x[bundle.pg[0][0].0] - 1.0).abs() < 1e-6);
        for l in &op.prices.lambda1[0] {
            assert!((l - 10.0).abs() < 1e-6, "{l}");
        }
        assert!(op.prices.lambda2.is_empty());
    }

    #[test]
    fn congestion_separates_prices() {
        let inst = two_bus(vec![gen(1, 10.0), gen(2, 20.0)], Some(0.5), 1.0, LowerLevelModel::Dc);
        let (bundle, op) = solve(&inst, &Screen::all(&inst));
        assert!((op.x[bundle.pg[0][0].0] - 0.5).abs() < 1e-6);
        assert!((op.x[bundle.pg[0][1].0] - 0.5).abs() < 1e-6);
        assert!((op.prices.lambda1[0][0] - 10.0).abs() < 1e-6);
        assert!((op.prices.lambda1[0][1] - 20.0).abs() < 1e-6);
    }

    #[test]
    fn zero_load_dispatches_nothing() {
        let inst = two_bus(vec![gen(1, 10.0)], None, 0.0, LowerLevelModel::Dc);
        let (bundle, op) = solve(&inst, &Screen::none());
        assert!(op.x[bundle.pg[0][0].0].abs() < 1e-7);
        assert!(op.primal_objective.abs() < 1e-6);
    }

    #[test]
    fn lossless_branch_conserves_active_power() {
        let inst = two_bus(vec![gen(1, 10.0)], None, 1.0, LowerLevelModel::Jabr);
        let (bundle, op) = solve(&inst, &Screen::none());
        let th = bundle.program.param_values();
        let f = &bundle.flows[0][0];
        let (a, b) = (f.p_fr.eval(&op.x, &th), f.p_to.eval(&op.x, &th));
        assert!((a + b).abs() < 1e-6, "{a} {b}");
        assert!((a - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fixed_voltage_fixes_squared_magnitude() {
        let mut inst = two_bus(vec![gen(1, 10.0)], None, 1.0, LowerLevelModel::Jabr);
        for b in &mut inst.network.buses {
            b.vmin = 1.0;
            b.vmax = 1.0;
        }
        let bundle = build_jabr(&inst, &Screen::none()).unwrap();
        let w = bundle.program.var_by_name("w[0][1]").unwrap();
        let v = &bundle.program.vars()[w.0];
        assert_eq!((v.lower, v.upper), (Some(1.0), Some(1.0)));
        assert!(bundle.program.row_by_name("w[0][1]:fix").is_some());
    }

    #[test]
    fn disconnected_network_is_rejected() {
        let mut inst = two_bus(vec![gen(1, 10.0)], None, 1.0, LowerLevelModel::Dc);
        inst.network.branches.clear();
        assert!(matches!(build_dc(&inst, &Screen::none()), Err(OpfError::Disconnected)));
    }

    #[test]
    fn price_bounds() {
        let s = PriceSurface { lambda1: vec![vec![10.0]], lambda2: vec![vec![-2.0]], bounds1: None, bounds2: None };
        let b = estimate_price_bounds(&s, PriceWidths::default()).unwrap();
        let b1 = b.bounds1.unwrap();
        assert_eq!((b1.lower[0][0], b1.upper[0][0]), (0.0, 1010.0));
        let b2 = b.bounds2.unwrap();
        assert_eq!((b2.lower[0][0], b2.upper[0][0]), (-302.0, 298.0));
        let z = estimate_price_bounds(&s, PriceWidths { active: 0.0, reactive: 0.0 }).unwrap().bounds1.unwrap();
        assert_eq!((z.lower[0][0], z.upper[0][0]), (10.0, 10.0));
        assert!(estimate_price_bounds(&s, PriceWidths { active: -1.0, reactive: 0.0 }).is_err());
    }

    #[test]
    fn screening_adds_overloaded_branches_only() {
        let inst = two_bus(vec![gen(1, 10.0), gen(2, 20.0)], Some(0.5), 1.0, LowerLevelModel::Dc);
        let (screen, _, op) = screen_limits(&inst, &Screen::none(), &[0.0], &[0.0], &SolveOptions::default()).unwrap();
        assert_eq!(screen.len(), 1);
        assert!((op.prices.lambda1[0][1] - 20.0).abs() < 1e-6);
        let light = two_bus(vec![gen(1, 10.0)], Some(5.0), 1.0, LowerLevelModel::Dc);
        let (screen, _, _) = screen_limits(&light, &Screen::none(), &[0.0], &[0.0], &SolveOptions::default()).unwrap();
        assert!(screen.is_empty());
    }
}
