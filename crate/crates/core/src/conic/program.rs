use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::expr::{Affine, ParamId, VarId};
use super::ConicError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    /// `expr = 0`
    Eq,
    /// `expr ≥ 0`
    Geq,
}

/// Relation requested through the builder; `Leq` is stored negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Geq,
    Leq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub kind: RowKind,
    pub expr: Affine,
}

/// `‖tail‖ ≤ head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocRow {
    pub name: String,
    pub head: Affine,
    pub tail: Vec<Affine>,
}

impl SocRow {
    pub fn dim(&self) -> usize {
        1 + self.tail.len()
    }

    /// Cone vector `(head, tail…)` as a list of expressions.
    pub fn vector(&self) -> Vec<Affine> {
        std::iter::once(self.head.clone()).chain(self.tail.iter().cloned()).collect()
    }
}

/// `Σ qⱼ·xⱼ² + linear`, with every `qⱼ ≥ 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub linear: Affine,
    pub quadratic: Vec<(VarId, f64)>,
}

/// A convex program `min objective` over linear and second-order cone rows.
///
/// Variable bounds are recorded on the variable and also materialized as
/// linear rows, so the dual carries a multiplier for each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    vars: Vec<Variable>,
    params: Vec<Parameter>,
    rows: Vec<LinearRow>,
    socs: Vec<SocRow>,
    objective: Objective,
}

impl ConicProgram {
    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn socs(&self) -> &[SocRow] {
        &self.socs
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn param_by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn row_by_name(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.name == name)
    }

    /// Same program with new parameter values.
    pub fn with_params(&self, values: &[f64]) -> Result<Self, ConicError> {
        if values.len() != self.params.len() {
            return Err(ConicError::Dimension(format!(
                "{} parameter values for {} parameters",
                values.len(),
                self.params.len()
            )));
        }
        let mut out = self.clone();
        for (p, v) in out.params.iter_mut().zip(values) {
            p.value = *v;
        }
        Ok(out)
    }

    /// Same program without the named rows.
    pub fn without_rows(&self, drop: &HashSet<String>) -> Self {
        let mut out = self.clone();
        out.rows.retain(|r| !drop.contains(&r.name));
        out.socs.retain(|s| !drop.contains(&s.name));
        out
    }

    /// Objective value `Ω^p` at `x` with the stored parameter values.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let theta = self.param_values();
        self.objective.linear.eval(x, &theta)
            + self.objective.quadratic.iter().map(|&(v, q)| q * x[v.0] * x[v.0]).sum::<f64>()
    }
}

/// Builds a [`ConicProgram`]; the program is immutable once built.
#[derive(Debug, Default)]
pub struct ConicBuilder {
    prog: Option<ConicProgram>,
    names: HashSet<String>,
    param_names: HashSet<String>,
}

impl ConicBuilder {
    pub fn new() -> Self {
        Self {
            prog: Some(ConicProgram {
                vars: Vec::new(),
                params: Vec::new(),
                rows: Vec::new(),
                socs: Vec::new(),
                objective: Objective::default(),
            }),
            names: HashSet::new(),
            param_names: HashSet::new(),
        }
    }

    fn p(&mut self) -> &mut ConicProgram {
        self.prog.as_mut().expect("builder not yet finished")
    }

    fn claim(&mut self, name: &str) -> Result<(), ConicError> {
        if !self.names.insert(name.to_string()) {
            return Err(ConicError::DuplicateName(name.to_string()));
        }
        Ok(())
    }

    /// Declares a variable. Bounds become rows `name:lo`, `name:hi`, or a
    /// single equality `name:fix` when they coincide.
    pub fn add_variable(&mut self, name: &str, lower: Option<f64>, upper: Option<f64>) -> Result<VarId, ConicError> {
        self.claim(name)?;
        if let (Some(l), Some(u)) = (lower, upper) {
            if l > u {
                return Err(ConicError::Bounds(format!("{name}: lower {l} above upper {u}")));
            }
        }
        for b in [lower, upper].into_iter().flatten() {
            if !b.is_finite() {
                return Err(ConicError::Bounds(format!("{name}: bound {b} is not finite")));
            }
        }
        let id = VarId(self.p().vars.len());
        self.p().vars.push(Variable { name: name.into(), lower, upper });
        match (lower, upper) {
            (Some(l), Some(u)) if l == u => {
                self.claim(&format!("{name}:fix"))?;
                self.push_row(format!("{name}:fix"), RowKind::Eq, Affine::var(id).plus_const(-l));
            }
            _ => {
                if let Some(l) = lower {
                    self.claim(&format!("{name}:lo"))?;
                    self.push_row(format!("{name}:lo"), RowKind::Geq, Affine::var(id).plus_const(-l));
                }
                if let Some(u) = upper {
                    self.claim(&format!("{name}:hi"))?;
                    self.push_row(format!("{name}:hi"), RowKind::Geq, Affine::term(id, -1.0).plus_const(u));
                }
            }
        }
        Ok(id)
    }

    pub fn free(&mut self, name: &str) -> Result<VarId, ConicError> {
        self.add_variable(name, None, None)
    }

    /// Declares a parameter with its current value.
    pub fn add_parameter(&mut self, name: &str, value: f64) -> Result<ParamId, ConicError> {
        if !self.param_names.insert(name.to_string()) {
            return Err(ConicError::DuplicateName(name.to_string()));
        }
        let id = ParamId(self.p().params.len());
        self.p().params.push(Parameter { name: name.into(), value });
        Ok(id)
    }

    fn push_row(&mut self, name: String, kind: RowKind, expr: Affine) {
        self.p().rows.push(LinearRow { name, kind, expr: expr.canonical() });
    }

    fn check(&self, e: &Affine) -> Result<(), ConicError> {
        let prog = self.prog.as_ref().expect("builder not yet finished");
        if let Some(&(v, _)) = e.vars.iter().find(|(v, _)| v.0 >= prog.vars.len()) {
            return Err(ConicError::UndeclaredVariable(v.0));
        }
        if let Some(&(p, _)) = e.params.iter().find(|(p, _)| p.0 >= prog.params.len()) {
            return Err(ConicError::UndeclaredParameter(p.0));
        }
        let finite = e.vars.iter().all(|t| t.1.is_finite())
            && e.params.iter().all(|t| t.1.is_finite())
            && e.constant.is_finite();
        if !finite {
            return Err(ConicError::NonFinite);
        }
        Ok(())
    }

    /// Adds `expr (=|≥|≤) 0` and returns the row index.
    pub fn add_linear(&mut self, name: &str, rel: Relation, expr: Affine) -> Result<usize, ConicError> {
        self.check(&expr)?;
        self.claim(name)?;
        let (kind, expr) = match rel {
            Relation::Eq => (RowKind::Eq, expr),
            Relation::Geq => (RowKind::Geq, expr),
            Relation::Leq => (RowKind::Geq, expr.scaled(-1.0)),
        };
        let idx = self.p().rows.len();
        self.push_row(name.into(), kind, expr);
        Ok(idx)
    }

    /// Adds `‖tail‖ ≤ head` and returns the cone index.
    pub fn add_soc(&mut self, name: &str, head: Affine, tail: Vec<Affine>) -> Result<usize, ConicError> {
        self.check(&head)?;
        for t in &tail {
            self.check(t)?;
        }
        self.claim(name)?;
        let idx = self.p().socs.len();
        self.p().socs.push(SocRow {
            name: name.into(),
            head: head.canonical(),
            tail: tail.into_iter().map(Affine::canonical).collect(),
        });
        Ok(idx)
    }

    /// Sets `min Σ qⱼ·xⱼ² + linear`. Negative `qⱼ` would make the program
    /// nonconvex and is rejected.
    pub fn set_quadratic_objective(&mut self, linear: Affine, quadratic: Vec<(VarId, f64)>) -> Result<(), ConicError> {
        self.check(&linear)?;
        let nv = self.p().vars.len();
        for &(v, q) in &quadratic {
            if v.0 >= nv {
                return Err(ConicError::UndeclaredVariable(v.0));
            }
            if !(q >= 0.0) || !q.is_finite() {
                return Err(ConicError::Nonconvex(self.p().vars[v.0].name.clone(), q));
            }
        }
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        let mut quadratic = quadratic;
        quadratic.sort_by_key(|t| t.0);
        for (v, q) in quadratic {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += q,
                _ => merged.push((v, q)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.p().objective = Objective { linear: linear.canonical(), quadratic: merged };
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.prog.as_ref().map_or(0, |p| p.vars.len())
    }

    /// Finishes the program.
    pub fn build(mut self) -> ConicProgram {
        self.prog.take().expect("builder not yet finished")
    }
}
