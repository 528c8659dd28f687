//! Convex programs with linear and second-order cone rows, and their duals.

mod dual;
mod dump;
mod expr;
mod program;

pub use dual::{
    dual_as_primal, duality_gap, dualize, evaluate_dual, evaluate_primal, relative_gap_pct, ConePair, DualObjective,
    DualProgram, DualVar, DualVarKind, DualityGap, Evaluation, PairingMap, PrimalRef, StationarityRow,
};
pub use dump::dump;
pub use expr::{Affine, ParamId, VarId};
pub use program::{ConicBuilder, ConicProgram, LinearRow, Objective, Parameter, Relation, RowKind, SocRow, Variable};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("variable #{0} is not declared")]
    UndeclaredVariable(usize),
    #[error("parameter #{0} is not declared")]
    UndeclaredParameter(usize),
    #[error("quadratic coefficient {1} on `{0}` makes the objective nonconvex")]
    Nonconvex(String, f64),
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("coefficient is not finite")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("point has {got} values, program has {expected} variables")]
    MissingValues { expected: usize, got: usize },
    #[error("{side} point violates a constraint by {violation:e}")]
    Infeasible { side: &'static str, violation: f64 },
}
