//! The sequential bidding algorithm and the experiments built on it.
//!
//! One outer iteration clears the market at the current bids, bounds the
//! prices, dualizes, builds a warm start, reduces and solves, then verifies
//! the resulting bids against the market cleared with every thermal limit.

mod cli;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cli::cli_main;

use crate::case::{BilevelInstance, CaseError, SolveReport, Violation};
use crate::conic::{dualize, DualProgram, PairingMap};
use crate::opf::{
    estimate_price_bounds, screen_limits, thermal_violations, LowerLevelBundle, OperatingPoint, OpfError, PriceSurface,
    PriceWidths, Screen,
};
use crate::reduce::{profit_of, reduce, solve_reduced, ReduceError, ReducedProblem, TechniqueSpec, UpperLevelModel};
use crate::par;
use crate::solver::{Solution, SolveOptions, Status};

/// Relative tolerance on thermal limits and price envelopes.
const CHECK_TOL: f64 = 1e-6;
/// Reactive prices below this magnitude count as zero.
const ZERO_PRICE: f64 = 1e-6;
/// First smoothing parameter of the continuation.
const EPS_START: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error("bids outside the storage rating: {0}")]
    Bids(String),
    #[error("reduced problem ended with status `{status}`")]
    Solve { status: Status, iterations: usize, wall_time: f64 },
}

/// Outcome of clearing the market at fixed bids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verification {
    pub actual_profit: f64,
    /// System expenses `Ω^p`.
    pub actual_expenses: f64,
    pub prices: PriceSurface,
    /// Rated branch-hours above their limit; empty for a feasible market.
    pub violations: Vec<Violation>,
    /// Thermal limits the clearing needed.
    pub screen: Screen,
    pub point: OperatingPoint,
}

/// Every outer iteration of one run, the last one first in importance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequentialRun {
    pub reports: Vec<SolveReport>,
    pub p_bids: Vec<f64>,
    pub q_bids: Vec<f64>,
}

impl SequentialRun {
    pub fn last(&self) -> &SolveReport {
        self.reports.last().expect("at least one outer iteration")
    }
}

/// Step 1 state shared by everything solved around one operating point.
struct Baseline {
    screen: Screen,
    bundle: LowerLevelBundle,
    op: OperatingPoint,
    dual: DualProgram,
    pairing: PairingMap,
}

impl Baseline {
    fn new(screen: Screen, bundle: LowerLevelBundle, op: OperatingPoint) -> Self {
        let (dual, pairing) = dualize(&bundle.program);
        Self { screen, bundle, op, dual, pairing }
    }

    fn at(
        inst: &BilevelInstance,
        screen: &Screen,
        p: &[f64],
        q: &[f64],
        opts: &SolveOptions,
    ) -> Result<Self, DriverError> {
        let (screen, bundle, op) = screen_limits(inst, screen, p, q, opts)?;
        Ok(Self::new(screen, bundle, op))
    }

    fn idle(inst: &BilevelInstance, opts: &SolveOptions) -> Result<Self, DriverError> {
        let zero = vec![0.0; inst.horizon()];
        Self::at(inst, &Screen::none(), &zero, &zero, opts)
    }
}

fn check_bids(inst: &BilevelInstance, p: &[f64], q: &[f64]) -> Result<(), DriverError> {
    let t = inst.horizon();
    if p.len() != t || !(q.is_empty() || q.len() == t) {
        return Err(DriverError::Bids(format!("expected {t} hours")));
    }
    let s = inst.storage.rating;
    for h in 0..t {
        let qh = q.get(h).copied().unwrap_or(0.0);
        if p[h].hypot(qh) > s * (1.0 + CHECK_TOL) + CHECK_TOL {
            return Err(DriverError::Bids(format!("hour {h}: |({}, {qh})| > {s}", p[h])));
        }
    }
    Ok(())
}

fn verify_from(
    inst: &BilevelInstance,
    screen: &Screen,
    p: &[f64],
    q: &[f64],
    opts: &SolveOptions,
) -> Result<(Verification, LowerLevelBundle), DriverError> {
    check_bids(inst, p, q)?;
    let zero;
    let q = if q.is_empty() {
        zero = vec![0.0; p.len()];
        &zero
    } else {
        q
    };
    let (screen, bundle, op) = screen_limits(inst, screen, p, q, opts)?;
    let violations = thermal_violations(inst, &bundle, &op.x, CHECK_TOL);
    let v = Verification {
        actual_profit: profit_of(p, q, &op.prices, bundle.storage_bus),
        actual_expenses: op.primal_objective,
        prices: op.prices.clone(),
        violations,
        screen,
        point: op,
    };
    Ok((v, bundle))
}

/// Clears the market with the storage bids fixed and checks every thermal
/// limit. `q` may be empty.
pub fn verify(inst: &BilevelInstance, p: &[f64], q: &[f64], opts: &SolveOptions) -> Result<Verification, DriverError> {
    verify_from(inst, &Screen::none(), p, q, opts).map(|v| v.0)
}

/// A solution the driver may act on: usable, or a feasible incumbent left
/// by a time limit.
fn accepted(sol: &Solution) -> bool {
    sol.status.is_usable()
        || (sol.status == Status::TimeLimit && !sol.point.is_empty() && sol.infeasibility <= CHECK_TOL)
}

fn prices_inside(bounds: &PriceSurface, actual: &PriceSurface, bus: usize) -> bool {
    let inside = |b: &Option<crate::opf::PriceBounds>, l: &[Vec<f64>]| match b {
        Some(b) => l.iter().enumerate().all(|(t, h)| b.contains(t, bus, h[bus], CHECK_TOL * h[bus].abs().max(1.0))),
        None => true,
    };
    inside(&bounds.bounds1, &actual.lambda1) && inside(&bounds.bounds2, &actual.lambda2)
}

fn diff_pct(computed: f64, actual: f64) -> f64 {
    if actual != 0.0 {
        (computed - actual) / actual.abs() * 100.0
    } else if computed == 0.0 {
        0.0
    } else {
        f64::NAN
    }
}

/// Steps 2 to 6 around one baseline, with the screen-expansion and
/// bound-widening retries. Returns the report, the verification and the
/// bundle it was cleared on.
fn outer_step(
    inst: &BilevelInstance,
    first: &Baseline,
    spec: &TechniqueSpec,
    opts: &SolveOptions,
    iteration: usize,
) -> Result<(SolveReport, Verification, LowerLevelBundle), DriverError> {
    let clock = Instant::now();
    let upper = UpperLevelModel::new(inst);
    let mut expanded: Option<Baseline> = None;
    let mut widths = PriceWidths::default();
    let mut may_widen = spec.kind.uses_price_bounds();
    let mut iterations = 0;
    loop {
        let base = expanded.as_ref().unwrap_or(first);
        let prices = estimate_price_bounds(&base.op.prices, widths)?;
        let r = reduce(&upper, &base.bundle, &base.dual, &base.pairing, &prices, spec)?;
        let start = r.warm_start(&base.op);
        let r = r.with_scaling(&start);
        let mut sol = solve_reduced(&r, &start, opts)?;
        iterations += sol.iterations;
        if !accepted(&sol) && spec.kind.is_smoothing() && spec.eps() < EPS_START {
            sol = continuation(&r, &start, spec, opts, |s| {
                Ok(reduce(&upper, &base.bundle, &base.dual, &base.pairing, &prices, s)?.with_scaling(&start))
            })?;
            iterations += sol.iterations;
        }
        if !accepted(&sol) {
            return Err(DriverError::Solve {
                status: sol.status,
                iterations,
                wall_time: clock.elapsed().as_secs_f64(),
            });
        }
        let x = &sol.point;
        let (p, q) = r.bids(x);
        let (v, bundle) = verify_from(inst, &base.screen, &p, &q, opts)?;

        if expanded.is_none() && v.screen.len() > base.screen.len() {
            let again = Baseline::at(inst, &v.screen, &base.op.p_bids, &base.op.q_bids, opts)?;
            expanded = Some(again);
            continue;
        }
        if may_widen && !prices_inside(&prices, &v.prices, base.bundle.storage_bus) {
            may_widen = false;
            widths = widths.scaled(10.0);
            continue;
        }

        let computed_profit = r.profit_at(x);
        let report = SolveReport {
            technique: spec.kind.name().into(),
            params: spec.params(),
            status: sol.status.to_string(),
            computed_profit,
            actual_profit: v.actual_profit,
            profit_diff_pct: diff_pct(computed_profit, v.actual_profit),
            duality_gap_pct: r.gap_pct(x),
            computed_expenses: r.lower_objectives(x).0,
            actual_expenses: v.actual_expenses,
            wall_time_s: clock.elapsed().as_secs_f64(),
            iterations,
            nodes: sol.nodes,
            mip_gap: sol.mip_gap,
            outer_iteration: iteration,
            violations: v.violations.clone(),
        };
        return Ok((report, v, bundle));
    }
}

/// Smoothing continuation: solves at ε = 1e-2, 1e-3, … and finally at the
/// target, each from the previous point. `build` reduces at a given ε.
fn continuation<F>(
    target: &ReducedProblem,
    start: &[f64],
    spec: &TechniqueSpec,
    opts: &SolveOptions,
    build: F,
) -> Result<Solution, DriverError>
where
    F: Fn(&TechniqueSpec) -> Result<ReducedProblem, DriverError>,
{
    let mut point = start.to_vec();
    let mut iterations = 0;
    let mut eps = EPS_START;
    while eps > spec.eps() * 1.5 {
        let sol = solve_reduced(&build(&spec.with_eps(eps))?, &point, opts)?;
        iterations += sol.iterations;
        if !accepted(&sol) {
            return Ok(Solution { iterations, ..sol });
        }
        point = sol.point;
        eps *= 0.1;
    }
    let sol = solve_reduced(target, &point, opts)?;
    Ok(Solution { iterations: iterations + sol.iterations, ..sol })
}

fn run_from(
    inst: &BilevelInstance,
    mut base: Baseline,
    spec: &TechniqueSpec,
    opts: &SolveOptions,
    outer_iterations: usize,
) -> Result<SequentialRun, DriverError> {
    let mut reports = Vec::new();
    let mut bids = (Vec::new(), Vec::new());
    for k in 1..=outer_iterations.max(1) {
        let (report, v, bundle) = outer_step(inst, &base, spec, opts, k)?;
        reports.push(report);
        bids = (v.point.p_bids.clone(), v.point.q_bids.clone());
        base = Baseline::new(v.screen, bundle, v.point);
    }
    Ok(SequentialRun { reports, p_bids: bids.0, q_bids: bids.1 })
}

/// Runs the sequential algorithm from the idle operating point. Every
/// later outer iteration starts from the previous verification.
pub fn run_sequential(
    inst: &BilevelInstance,
    spec: &TechniqueSpec,
    opts: &SolveOptions,
    outer_iterations: usize,
) -> Result<SequentialRun, DriverError> {
    spec.validate()?;
    run_from(inst, Baseline::idle(inst, opts)?, spec, opts, outer_iterations)
}

/// One report per spec around a shared idle baseline. Failures become rows
/// carrying their status.
pub fn compare_techniques(
    inst: &BilevelInstance,
    specs: &[TechniqueSpec],
    opts: &SolveOptions,
) -> Result<Vec<SolveReport>, DriverError> {
    let base = Baseline::idle(inst, opts)?;
    let rows = specs
        .iter()
        .map(|spec| {
            let clock = Instant::now();
            let out = spec.validate().map_err(DriverError::from).and_then(|_| outer_step(inst, &base, spec, opts, 1));
            match out {
                Ok((report, _, _)) => report,
                Err(DriverError::Solve { status, iterations, wall_time }) => {
                    let mut row = SolveReport::failed(spec.kind.name(), &spec.params(), &status.to_string());
                    row.iterations = iterations;
                    row.wall_time_s = wall_time;
                    row.outer_iteration = 1;
                    row
                }
                Err(e) => {
                    let mut row = SolveReport::failed(spec.kind.name(), &spec.params(), &e.to_string());
                    row.wall_time_s = clock.elapsed().as_secs_f64();
                    row
                }
            }
        })
        .collect();
    Ok(rows)
}

/// Reactive bidding benefit at one storage bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusBenefit {
    /// External bus number.
    pub bus: usize,
    /// Reactive prices were zero at the operating point; nothing was run.
    pub excluded: bool,
    pub profit_active_only: f64,
    pub profit_with_reactive: f64,
    /// `(with − without)/max(1, |without|)·100`.
    pub increase_pct: f64,
    /// Actual system expenses without minus with reactive bids.
    pub savings: f64,
    /// `ok`, or the failure of either run.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub network: String,
    pub technique: String,
    pub buses: Vec<BusBenefit>,
    /// Mean savings over mean absolute profit increase, over the buses
    /// that ran.
    pub ratio: f64,
}

impl StudyResult {
    /// Buses by increase, largest first.
    pub fn sorted(&self) -> Vec<&BusBenefit> {
        let mut v: Vec<&BusBenefit> = self.buses.iter().collect();
        v.sort_by(|a, b| b.increase_pct.total_cmp(&a.increase_pct).then(a.bus.cmp(&b.bus)));
        v
    }
}

fn bus_benefit(
    inst: &BilevelInstance,
    bus: usize,
    spec: &TechniqueSpec,
    opts: &SolveOptions,
) -> Result<BusBenefit, DriverError> {
    let mut active = inst.clone();
    active.storage.bus = bus;
    active.reactive_bids = false;
    let base = Baseline::idle(&active, opts)?;
    let beta = base.bundle.storage_bus;
    let zero_prices = base.op.prices.lambda2.iter().all(|h| h[beta].abs() <= ZERO_PRICE);
    if zero_prices {
        return Ok(BusBenefit {
            bus,
            excluded: true,
            profit_active_only: 0.0,
            profit_with_reactive: 0.0,
            increase_pct: 0.0,
            savings: 0.0,
            status: "excluded".into(),
        });
    }
    let without = run_from(&active, base, spec, opts, 1)?;
    // the reactive run starts where the active-only run ended, q = 0
    let mut reactive = active.clone();
    reactive.reactive_bids = true;
    let zero_q = vec![0.0; reactive.horizon()];
    let from = Baseline::at(&reactive, &Screen::none(), &without.p_bids, &zero_q, opts)?;
    let with = run_from(&reactive, from, spec, opts, 1)?;
    let (a, b) = (without.last(), with.last());
    Ok(BusBenefit {
        bus,
        excluded: false,
        profit_active_only: a.actual_profit,
        profit_with_reactive: b.actual_profit,
        increase_pct: (b.actual_profit - a.actual_profit) / a.actual_profit.abs().max(1.0) * 100.0,
        savings: a.actual_expenses - b.actual_expenses,
        status: "ok".into(),
    })
}

/// Places the storage at every bus in turn and measures what reactive bids
/// add. Per-bus failures are recorded and the study continues.
pub fn reactive_benefit_study(
    inst: &BilevelInstance,
    spec: &TechniqueSpec,
    opts: &SolveOptions,
) -> Result<StudyResult, DriverError> {
    spec.validate()?;
    if inst.model != crate::case::LowerLevelModel::Jabr {
        return Err(DriverError::Case(CaseError::Invalid("the reactive study needs the Jabr lower level".into())));
    }
    let ids: Vec<usize> = inst.network.buses.iter().map(|b| b.id).collect();
    let buses = par::map(&ids, |&bus| {
        bus_benefit(inst, bus, spec, opts).unwrap_or_else(|e| BusBenefit {
            bus,
            excluded: false,
            profit_active_only: f64::NAN,
            profit_with_reactive: f64::NAN,
            increase_pct: f64::NAN,
            savings: f64::NAN,
            status: e.to_string(),
        })
    });
    let ran: Vec<&BusBenefit> = buses.iter().filter(|b| !b.excluded && b.status == "ok").collect();
    let ratio = if ran.is_empty() {
        f64::NAN
    } else {
        let n = ran.len() as f64;
        let savings = ran.iter().map(|b| b.savings).sum::<f64>() / n;
        let gain = ran.iter().map(|b| b.profit_with_reactive - b.profit_active_only).sum::<f64>() / n;
        savings / gain
    };
    Ok(StudyResult { network: inst.network.name.clone(), technique: spec.to_string(), buses, ratio })
}

#[cfg(test)]
mod tests;
