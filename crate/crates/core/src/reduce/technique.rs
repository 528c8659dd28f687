use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ReduceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TechniqueKind {
    Pd,
    PdS,
    Sd,
    SdR,
    Mc,
    Cs,
    CsR,
    CsA,
    CsAr,
    PfSd,
    PfCs,
    BeSd,
    BePf,
    UeSd,
    UePf,
    Sm1,
    Sm2,
}

use TechniqueKind::*;

impl TechniqueKind {
    pub const ALL: [TechniqueKind; 17] =
        [Pd, PdS, Sd, SdR, Mc, Cs, CsR, CsA, CsAr, PfSd, PfCs, BeSd, BePf, UeSd, UePf, Sm1, Sm2];

    pub fn name(self) -> &'static str {
        match self {
            Pd => "PD",
            PdS => "PD-S",
            Sd => "SD",
            SdR => "SD-R",
            Mc => "MC",
            Cs => "CS",
            CsR => "CS-R",
            CsA => "CS-A",
            CsAr => "CS-AR",
            PfSd => "PF-SD",
            PfCs => "PF-CS",
            BeSd => "BE-SD",
            BePf => "BE-PF",
            UeSd => "UE-SD",
            UePf => "UE-PF",
            Sm1 => "SM1",
            Sm2 => "SM2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Space-separated list of every name.
    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }

    pub fn default_eps(self) -> Option<f64> {
        match self {
            SdR | CsR | CsAr => Some(1e-2),
            Sm1 | Sm2 => Some(1e-4),
            _ => None,
        }
    }

    pub fn default_pi(self) -> Option<f64> {
        match self {
            PfSd => Some(100.0),
            PfCs | BePf | UePf => Some(10.0),
            _ => None,
        }
    }

    pub fn uses_steps(self) -> bool {
        matches!(self, BeSd | BePf | UeSd | UePf)
    }

    /// Relies on envelopes around the prices.
    pub fn uses_price_bounds(self) -> bool {
        matches!(self, Mc) || self.uses_steps()
    }

    pub fn is_smoothing(self) -> bool {
        matches!(self, Sm1 | Sm2)
    }

    /// Adds the stationarity rows of the quadratic generators.
    pub fn strengthened(self) -> bool {
        matches!(self, PdS | Cs | CsR | CsA | CsAr | PfCs | Sm1 | Sm2)
    }

    /// The continuous relaxation is a convex conic program.
    pub fn is_convex(self) -> bool {
        matches!(self, Pd | PdS | Mc | BeSd | BePf | UeSd | UePf)
    }
}

impl fmt::Display for TechniqueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A technique with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechniqueSpec {
    pub kind: TechniqueKind,
    pub eps: Option<f64>,
    pub pi: Option<f64>,
    /// Discretization steps of the expansions.
    pub steps: Option<usize>,
    /// Binaries forbidding simultaneous charging and discharging.
    pub binaries: bool,
}

impl TechniqueSpec {
    /// The technique with its default parameters.
    pub fn new(kind: TechniqueKind) -> Self {
        Self {
            kind,
            eps: kind.default_eps(),
            pi: kind.default_pi(),
            steps: kind.uses_steps().then_some(8),
            binaries: false,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn with_pi(mut self, pi: f64) -> Self {
        self.pi = Some(pi);
        self
    }

    pub fn with_steps(mut self, d: usize) -> Self {
        self.steps = Some(d);
        self
    }

    pub fn with_binaries(mut self, on: bool) -> Self {
        self.binaries = on;
        self
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(0.0)
    }

    pub fn pi(&self) -> f64 {
        self.pi.unwrap_or(0.0)
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ReduceError> {
        let bad = |m: String| Err(ReduceError::Parameter(m));
        let k = self.kind;
        if self.eps.is_some() != k.default_eps().is_some() {
            return bad(format!("{k} does not take eps"));
        }
        if self.pi.is_some() != k.default_pi().is_some() {
            return bad(format!("{k} does not take pi"));
        }
        if self.steps.is_some() != k.uses_steps() {
            return bad(format!("{k} does not take D"));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("eps must be positive, got {e}"));
            }
        }
        if let Some(p) = self.pi {
            if !(p > 0.0 && p.is_finite()) {
                return bad(format!("pi must be positive, got {p}"));
            }
        }
        if let Some(d) = self.steps {
            if !(2..=1024).contains(&d) {
                return bad(format!("D must lie in 2..=1024, got {d}"));
            }
        }
        Ok(())
    }

    /// Parameters as printed in reports, e.g. `eps=1e-4`.
    pub fn params(&self) -> String {
        let mut parts = Vec::new();
        if let Some(e) = self.eps {
            parts.push(format!("eps={e:e}"));
        }
        if let Some(p) = self.pi {
            parts.push(format!("pi={p}"));
        }
        if let Some(d) = self.steps {
            parts.push(format!("D={d}"));
        }
        if self.binaries {
            parts.push("binaries=on".into());
        }
        parts.join(" ")
    }
}

impl fmt::Display for TechniqueSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.params();
        if p.is_empty() {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "{} {p}", self.kind)
        }
    }
}

impl FromStr for TechniqueSpec {
    type Err = ReduceError;

    /// `NAME [eps=…] [pi=…] [D=…] [binaries=on|off]`; missing parameters
    /// take their defaults.
    fn from_str(s: &str) -> Result<Self, ReduceError> {
        let mut tokens = s.split_whitespace();
        let name = tokens.next().ok_or_else(|| ReduceError::UnknownTechnique(String::new()))?;
        let kind = TechniqueKind::from_name(name).ok_or_else(|| ReduceError::UnknownTechnique(name.into()))?;
        let mut spec = TechniqueSpec::new(kind);
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| ReduceError::Parameter(format!("expected key=value, got `{tok}`")))?;
            let num = || value.parse::<f64>().map_err(|_| ReduceError::Parameter(format!("bad number `{value}`")));
            match key {
                "eps" => spec.eps = Some(num()?),
                "pi" => spec.pi = Some(num()?),
                "D" | "d" => {
                    spec.steps =
                        Some(value.parse().map_err(|_| ReduceError::Parameter(format!("bad step count `{value}`")))?)
                }
                "binaries" => {
                    spec.binaries = match value {
                        "on" | "true" | "1" => true,
                        "off" | "false" | "0" => false,
                        _ => return Err(ReduceError::Parameter(format!("bad switch `{value}`"))),
                    }
                }
                _ => return Err(ReduceError::Parameter(format!("unknown parameter `{key}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Reads a technique list, one spec per line, `#` comments allowed.
pub fn parse_technique_list(text: &str) -> Result<Vec<TechniqueSpec>, ReduceError> {
    text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty()).map(str::parse).collect()
}
