use serde::{Deserialize, Serialize};

/// A bus with its voltage magnitude bounds and shunt admittance, per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number as written in the case file.
    pub id: usize,
    pub vmin: f64,
    pub vmax: f64,
    pub gs: f64,
    pub bs: f64,
}

/// Polynomial generator cost, per unit: `c0 + c1·P + c2·P²` per hour.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cost {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Cost {
    pub fn eval(&self, p: f64) -> f64 {
        self.c0 + self.c1 * p + self.c2 * p * p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub cost: Cost,
}

/// A pi-model branch. Series impedance is kept as written so the file
/// round-trips exactly; admittances are derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, split evenly between the two ends.
    pub b: f64,
    /// Thermal limit; `None` when the file gives a zero rating.
    pub rate: Option<f64>,
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
}

impl Branch {
    /// Series conductance and susceptance `(g, b)` of `1 / (r + jx)`.
    pub fn series_admittance(&self) -> (f64, f64) {
        let d = self.r * self.r + self.x * self.x;
        (self.r / d, -self.x / d)
    }

    /// Charging susceptance at each end.
    pub fn charging(&self) -> (f64, f64) {
        (self.b / 2.0, self.b / 2.0)
    }

    /// Real and imaginary parts of the complex tap `τ·e^{jσ}`.
    pub fn tap_parts(&self) -> (f64, f64) {
        (self.tap * self.shift.cos(), self.tap * self.shift.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    pub pd: f64,
    pub qd: f64,
}

/// A transmission network in per unit on `base_mva`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
}

impl Network {
    /// Position of the bus with external number `id`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Branch endpoints as bus positions. Panics on dangling endpoints,
    /// which the parser already rejects.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        let br = &self.branches[k];
        (
            self.bus_index(br.from).expect("branch endpoint is a bus"),
            self.bus_index(br.to).expect("branch endpoint is a bus"),
        )
    }

    /// Generator positions grouped by bus position.
    pub fn generators_at(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (g, gen) in self.generators.iter().enumerate() {
            if let Some(i) = self.bus_index(gen.bus) {
                out[i].push(g);
            }
        }
        out
    }

    /// True when every bus is reachable from the first one.
    pub fn is_connected(&self) -> bool {
        let n = self.buses.len();
        if n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); n];
        for k in 0..self.branches.len() {
            let (i, j) = self.branch_ends(k);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Whether any generator has a strictly positive quadratic cost.
    pub fn has_quadratic_costs(&self) -> bool {
        self.generators.iter().any(|g| g.cost.c2 > 0.0)
    }
}
