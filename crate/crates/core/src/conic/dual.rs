use serde::{Deserialize, Serialize};

use super::expr::{Affine, ParamId, VarId};
use super::program::{ConicProgram, RowKind};
use super::ConicError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualVarKind {
    /// Free multiplier of linear equality `row`.
    Equality { row: usize },
    /// Nonnegative multiplier of linear inequality `row`.
    Inequality { row: usize },
    /// Component `k` of the cone multiplier of SOC row `soc`.
    Cone { soc: usize, k: usize },
    /// Stand-in for a quadratic primal variable in the dual objective.
    Copy { var: VarId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVar {
    pub name: String,
    pub kind: DualVarKind,
}

/// `primal_coef·xⱼ + Σ coef·y + constant = 0`.
///
/// In the dual proper `primal_coef` is zero for linear variables and the
/// quadratic term is carried by the copy variable inside `terms`. The
/// strengthening rows put the primal variable back in place of its copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityRow {
    pub name: String,
    pub var: VarId,
    pub primal_coef: f64,
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl StationarityRow {
    pub fn residual(&self, x: &[f64], y: &[f64]) -> f64 {
        self.primal_coef * x[self.var.0] + self.terms.iter().map(|&(k, a)| a * y[k]).sum::<f64>() + self.constant
    }
}

/// `Ω^d = constant(θ) + Σ a·y + Σ b·y·θ − Σ q·u²`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualObjective {
    pub constant: Affine,
    pub linear: Vec<(usize, f64)>,
    pub bilinear: Vec<(usize, ParamId, f64)>,
    pub quadratic: Vec<(usize, f64)>,
}

impl DualObjective {
    pub fn value(&self, y: &[f64], theta: &[f64]) -> f64 {
        self.constant.offset(theta)
            + self.linear.iter().map(|&(k, a)| a * y[k]).sum::<f64>()
            + self.bilinear.iter().map(|&(k, p, b)| b * y[k] * theta[p.0]).sum::<f64>()
            - self.quadratic.iter().map(|&(k, q)| q * y[k] * y[k]).sum::<f64>()
    }
}

/// The dual of a [`ConicProgram`], to be maximized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualProgram {
    pub vars: Vec<DualVar>,
    /// One row per primal variable.
    pub stationarity: Vec<StationarityRow>,
    /// Indices of sign-constrained multipliers.
    pub nonneg: Vec<usize>,
    /// Index blocks of cone multipliers, head first.
    pub cones: Vec<Vec<usize>>,
    pub objective: DualObjective,
    /// Parameter values copied from the primal.
    pub params: Vec<f64>,
    /// Dual index of each equality row's multiplier, by primal row.
    pub row_dual: Vec<Option<usize>>,
    /// Copy variable of each quadratic primal variable.
    pub copies: Vec<(VarId, usize)>,
}

impl DualProgram {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Multiplier of a primal linear row.
    pub fn row_multiplier(&self, row: usize) -> Option<usize> {
        self.row_dual.get(row).copied().flatten()
    }

    /// The stationarity rows of quadratic variables written with the primal
    /// variable instead of its copy: `ċ − Σ duals + 2c̈·x = 0`.
    pub fn strengthening_rows(&self, primal: &ConicProgram) -> Vec<StationarityRow> {
        primal
            .objective()
            .quadratic
            .iter()
            .map(|&(v, q)| {
                let row = &self.stationarity[v.0];
                let copy = self.copies.iter().find(|c| c.0 == v).map(|c| c.1);
                StationarityRow {
                    name: format!("strong[{}]", primal.vars()[v.0].name),
                    var: v,
                    primal_coef: 2.0 * q,
                    terms: row.terms.iter().copied().filter(|t| Some(t.0) != copy).collect(),
                    constant: row.constant,
                }
            })
            .collect()
    }
}

/// Which primal row a cone pair comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimalRef {
    Inequality(usize),
    Soc(usize),
}

/// A primal cone row and its dual cone variable block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConePair {
    pub name: String,
    pub primal: PrimalRef,
    pub dual: Vec<usize>,
}

impl ConePair {
    pub fn is_scalar(&self) -> bool {
        self.dual.len() == 1
    }

    pub fn dim(&self) -> usize {
        self.dual.len()
    }

    /// The primal cone vector as affine expressions.
    pub fn primal_vector(&self, p: &ConicProgram) -> Vec<Affine> {
        match self.primal {
            PrimalRef::Inequality(r) => vec![p.rows()[r].expr.clone()],
            PrimalRef::Soc(m) => p.socs()[m].vector(),
        }
    }
}

/// Every linear inequality and SOC row of the primal, once each, in row
/// order (inequalities first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingMap {
    pub pairs: Vec<ConePair>,
}

impl PairingMap {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Complementarity sum `Σ xᵀy` at a primal/dual point.
    pub fn complementarity(&self, p: &ConicProgram, x: &[f64], y: &[f64]) -> f64 {
        let theta = p.param_values();
        self.pairs
            .iter()
            .map(|pair| {
                pair.primal_vector(p).iter().zip(&pair.dual).map(|(e, &k)| e.eval(x, &theta) * y[k]).sum::<f64>()
            })
            .sum()
    }
}

/// Forms the conic dual.
///
/// With `L = Ω^p − Σλᵢ·eqᵢ − Σyₖ·ineqₖ − Σyₘᵀ·socₘ`, the stationarity row of
/// `xⱼ` reads `cⱼ + 2qⱼ·uⱼ − Σ(coefficients · multipliers) = 0` and
/// `Ω^d = c₀ − Σqⱼ·uⱼ² − Σ multiplier · offset`.
pub fn dualize(p: &ConicProgram) -> (DualProgram, PairingMap) {
    let n = p.num_vars();
    let mut vars = Vec::new();
    let mut nonneg = Vec::new();
    let mut cones = Vec::new();
    let mut pairs = Vec::new();
    let mut row_dual = vec![None; p.rows().len()];
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut objective = DualObjective { constant: Affine::zero(), ..DualObjective::default() };
    objective.constant.constant = p.objective().linear.constant;
    objective.constant.params = p.objective().linear.params.clone();

    let attach = |k: usize, e: &Affine, columns: &mut Vec<Vec<(usize, f64)>>, obj: &mut DualObjective| {
        for &(v, a) in &e.vars {
            columns[v.0].push((k, -a));
        }
        if e.constant != 0.0 {
            obj.linear.push((k, -e.constant));
        }
        for &(q, b) in &e.params {
            obj.bilinear.push((k, q, -b));
        }
    };

    for (r, row) in p.rows().iter().enumerate() {
        let k = vars.len();
        match row.kind {
            RowKind::Eq => {
                vars.push(DualVar { name: format!("lam[{}]", row.name), kind: DualVarKind::Equality { row: r } });
            }
            RowKind::Geq => {
                vars.push(DualVar { name: format!("mu[{}]", row.name), kind: DualVarKind::Inequality { row: r } });
                nonneg.push(k);
                pairs.push(ConePair { name: row.name.clone(), primal: PrimalRef::Inequality(r), dual: vec![k] });
            }
        }
        row_dual[r] = Some(k);
        attach(k, &row.expr, &mut columns, &mut objective);
    }
    for (m, soc) in p.socs().iter().enumerate() {
        let mut block = Vec::with_capacity(soc.dim());
        for (c, e) in soc.vector().iter().enumerate() {
            let k = vars.len();
            vars.push(DualVar { name: format!("y[{}][{c}]", soc.name), kind: DualVarKind::Cone { soc: m, k: c } });
            block.push(k);
            attach(k, e, &mut columns, &mut objective);
        }
        pairs.push(ConePair { name: soc.name.clone(), primal: PrimalRef::Soc(m), dual: block.clone() });
        cones.push(block);
    }

    let mut copies = Vec::new();
    for &(v, q) in &p.objective().quadratic {
        let k = vars.len();
        vars.push(DualVar { name: format!("u[{}]", p.vars()[v.0].name), kind: DualVarKind::Copy { var: v } });
        columns[v.0].push((k, 2.0 * q));
        objective.quadratic.push((k, q));
        copies.push((v, k));
    }

    let mut lin = vec![0.0; n];
    for &(v, c) in &p.objective().linear.vars {
        lin[v.0] += c;
    }
    let stationarity = columns
        .into_iter()
        .enumerate()
        .map(|(j, terms)| StationarityRow {
            name: format!("stat[{}]", p.vars()[j].name),
            var: VarId(j),
            primal_coef: 0.0,
            terms,
            constant: lin[j],
        })
        .collect();

    (
        DualProgram { vars, stationarity, nonneg, cones, objective, params: p.param_values(), row_dual, copies },
        PairingMap { pairs },
    )
}

/// Objective value and largest constraint violation at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub infeasibility: f64,
}

fn soc_violation(v: &[f64]) -> f64 {
    let tail = v[1..].iter().map(|t| t * t).sum::<f64>().sqrt();
    (tail - v[0]).max(0.0)
}

/// Evaluates the primal at `x` with its stored parameters.
pub fn evaluate_primal(p: &ConicProgram, x: &[f64]) -> Result<Evaluation, ConicError> {
    if x.len() != p.num_vars() {
        return Err(ConicError::MissingValues { expected: p.num_vars(), got: x.len() });
    }
    let theta = p.param_values();
    let mut worst: f64 = 0.0;
    for row in p.rows() {
        let v = row.expr.eval(x, &theta);
        worst = worst.max(match row.kind {
            RowKind::Eq => v.abs(),
            RowKind::Geq => (-v).max(0.0),
        });
    }
    for soc in p.socs() {
        let v: Vec<f64> = soc.vector().iter().map(|e| e.eval(x, &theta)).collect();
        worst = worst.max(soc_violation(&v));
    }
    Ok(Evaluation { objective: p.objective_value(x), infeasibility: worst })
}

/// Evaluates the dual at `y` with the parameters stored in the dual.
pub fn evaluate_dual(d: &DualProgram, y: &[f64]) -> Result<Evaluation, ConicError> {
    if y.len() != d.num_vars() {
        return Err(ConicError::MissingValues { expected: d.num_vars(), got: y.len() });
    }
    let mut worst: f64 = 0.0;
    for row in &d.stationarity {
        let r: f64 = row.terms.iter().map(|&(k, a)| a * y[k]).sum::<f64>() + row.constant;
        worst = worst.max(r.abs());
    }
    for &k in &d.nonneg {
        worst = worst.max((-y[k]).max(0.0));
    }
    for block in &d.cones {
        let v: Vec<f64> = block.iter().map(|&k| y[k]).collect();
        worst = worst.max(soc_violation(&v));
    }
    Ok(Evaluation { objective: d.objective.value(y, &d.params), infeasibility: worst })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityGap {
    pub absolute: f64,
    /// `absolute / max(1, |Ω^p|) · 100`.
    pub relative_pct: f64,
}

/// Relative gap in percent, as reported everywhere in the crate.
pub fn relative_gap_pct(primal: f64, dual: f64) -> f64 {
    (primal - dual) / primal.abs().max(1.0) * 100.0
}

/// Gap between a feasible primal point and a feasible dual point.
pub fn duality_gap(
    p: &ConicProgram,
    d: &DualProgram,
    x: &[f64],
    y: &[f64],
    tol: f64,
) -> Result<DualityGap, ConicError> {
    let ep = evaluate_primal(p, x)?;
    if ep.infeasibility > tol {
        return Err(ConicError::Infeasible { side: "primal", violation: ep.infeasibility });
    }
    let ed = evaluate_dual(d, y)?;
    if ed.infeasibility > tol {
        return Err(ConicError::Infeasible { side: "dual", violation: ed.infeasibility });
    }
    let absolute = ep.objective - ed.objective;
    Ok(DualityGap { absolute, relative_pct: relative_gap_pct(ep.objective, ed.objective) })
}

/// Recasts a dual as a primal program `min −Ω^d` over the dual variables,
/// with the parameters frozen at their stored values.
pub fn dual_as_primal(d: &DualProgram) -> Result<ConicProgram, ConicError> {
    use super::program::{ConicBuilder, Relation};
    let mut b = ConicBuilder::new();
    let mut ids = Vec::with_capacity(d.num_vars());
    let mut is_nonneg = vec![false; d.num_vars()];
    for &k in &d.nonneg {
        is_nonneg[k] = true;
    }
    for (k, v) in d.vars.iter().enumerate() {
        let lower = if is_nonneg[k] { Some(0.0) } else { None };
        ids.push(b.add_variable(&v.name, lower, None)?);
    }
    for row in &d.stationarity {
        let mut e = Affine::constant(row.constant);
        for &(k, a) in &row.terms {
            e.add_term(ids[k], a);
        }
        b.add_linear(&row.name, Relation::Eq, e)?;
    }
    for (m, block) in d.cones.iter().enumerate() {
        let head = Affine::var(ids[block[0]]);
        let tail = block[1..].iter().map(|&k| Affine::var(ids[k])).collect();
        b.add_soc(&format!("dual_cone[{m}]"), head, tail)?;
    }
    let mut lin = Affine::constant(-d.objective.constant.offset(&d.params));
    for &(k, a) in &d.objective.linear {
        lin.add_term(ids[k], -a);
    }
    for &(k, p, c) in &d.objective.bilinear {
        lin.add_term(ids[k], -c * d.params[p.0]);
    }
    let quad = d.objective.quadratic.iter().map(|&(k, q)| (ids[k], q)).collect();
    b.set_quadratic_objective(lin, quad)?;
    Ok(b.build())
}
