//! Case files, load profiles, storage units and report output.

mod matpower;
mod network;
mod report;

pub use matpower::{parse_case, serialize_case};
pub use network::{Branch, Bus, Cost, Generator, Load, Network};
pub use report::{write_report, write_reports, SolveReport, Violation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unsupported cost ({reason}); only polynomials of degree at most 2 are read")]
    UnsupportedCost { line: usize, reason: String },
    #[error("line {line}: branch endpoint {bus} is not a declared bus")]
    DanglingBranch { line: usize, bus: usize },
    #[error("line {line}: generator bus {bus} is not a declared bus")]
    DanglingGenerator { line: usize, bus: usize },
    #[error("missing `{0}`")]
    Missing(String),
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("invalid storage: {0}")]
    Storage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Hourly multipliers applied to the base loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    factors: Vec<f64>,
}

impl LoadProfile {
    /// A profile over any horizon of at least one hour.
    pub fn new(factors: Vec<f64>) -> Result<Self, CaseError> {
        if factors.is_empty() {
            return Err(CaseError::Profile("empty profile".into()));
        }
        if let Some(f) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(CaseError::Profile(format!("factor {f} is not positive")));
        }
        Ok(Self { factors })
    }

    /// Constant factor 1 over `hours`.
    pub fn flat(hours: usize) -> Self {
        Self { factors: vec![1.0; hours.max(1)] }
    }

    /// Reads a day profile: 24 numbers, one per line, `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, CaseError> {
        let mut factors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v = line
                .parse::<f64>()
                .map_err(|_| CaseError::Syntax { line: i + 1, msg: format!("bad factor `{line}`") })?;
            factors.push(v);
        }
        if factors.len() != 24 {
            return Err(CaseError::Profile(format!("expected 24 factors, found {}", factors.len())));
        }
        Self::new(factors)
    }

    /// The bundled winter weekday profile.
    pub fn winter_weekday() -> Self {
        Self::parse(crate::data::WINTER_WEEKDAY).expect("bundled profile parses")
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalPolicy {
    Free,
    /// Final state of energy equals the initial one.
    Fixed,
}

/// The strategic storage unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    /// External bus number.
    pub bus: usize,
    /// Energy capacity in p.u.·h.
    pub capacity: f64,
    /// Apparent power rating in p.u.
    pub rating: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub initial_fraction: f64,
    pub terminal: TerminalPolicy,
}

impl StorageSpec {
    /// 100 MWh / 60 MW at 90% efficiency, half full, free terminal state.
    pub fn new(bus: usize) -> Self {
        Self {
            bus,
            capacity: 1.0,
            rating: 0.6,
            eta_ch: 0.9,
            eta_dis: 0.9,
            initial_fraction: 0.5,
            terminal: TerminalPolicy::Free,
        }
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let eff = |e: f64| e > 0.0 && e <= 1.0;
        if !eff(self.eta_ch) || !eff(self.eta_dis) {
            return Err(CaseError::Storage("efficiencies must lie in (0, 1]".into()));
        }
        if !(self.rating > 0.0) {
            return Err(CaseError::Storage("rating must be positive".into()));
        }
        if !(self.capacity > 0.0) {
            return Err(CaseError::Storage("capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_fraction) {
            return Err(CaseError::Storage("initial fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn initial_energy(&self) -> f64 {
        self.capacity * self.initial_fraction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowerLevelModel {
    Dc,
    Jabr,
}

/// Loads of one hour, aligned with `Network::loads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourLoads {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
}

/// Everything the sequential bidding algorithm needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelInstance {
    pub network: Network,
    pub loads: Vec<HourLoads>,
    pub storage: StorageSpec,
    pub model: LowerLevelModel,
    pub thermal_threshold: f64,
    /// Allows the storage to bid reactive power (Jabr only).
    pub reactive_bids: bool,
}

impl BilevelInstance {
    pub fn horizon(&self) -> usize {
        self.loads.len()
    }

    /// Position of the storage bus.
    pub fn storage_bus(&self) -> usize {
        self.network.bus_index(self.storage.bus).expect("validated at build time")
    }

    /// Net active and reactive load per bus position at hour `t`.
    pub fn bus_loads(&self, t: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.network.buses.len();
        let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
        for (k, load) in self.network.loads.iter().enumerate() {
            let i = self.network.bus_index(load.bus).expect("load bus exists");
            p[i] += self.loads[t].pd[k];
            q[i] += self.loads[t].qd[k];
        }
        (p, q)
    }
}

/// Scales the base loads by the profile and attaches the storage unit.
pub fn build_instance(
    network: Network,
    profile: &LoadProfile,
    storage: StorageSpec,
    model: LowerLevelModel,
    threshold: f64,
) -> Result<BilevelInstance, CaseError> {
    if network.bus_index(storage.bus).is_none() {
        return Err(CaseError::UnknownBus(storage.bus));
    }
    storage.validate()?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CaseError::Invalid(format!("screening threshold {threshold} outside (0, 1]")));
    }
    for load in &network.loads {
        if network.bus_index(load.bus).is_none() {
            return Err(CaseError::UnknownBus(load.bus));
        }
    }
    let loads = profile
        .factors()
        .iter()
        .map(|f| HourLoads {
            pd: network.loads.iter().map(|l| l.pd * f).collect(),
            qd: network.loads.iter().map(|l| l.qd * f).collect(),
        })
        .collect();
    Ok(BilevelInstance {
        network,
        loads,
        storage,
        model,
        thermal_threshold: threshold,
        reactive_bids: model == LowerLevelModel::Jabr,
    })
}

/// Default screening threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.85;
