use serde::{Deserialize, Serialize};

/// Index of a decision variable in its program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Index of a parameter: a quantity fixed while the program is solved, such
/// as a storage bid seen by the market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// `Σ aᵢ·vᵢ + Σ bₖ·θₖ + c` over variables `v` and parameters `θ`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub vars: Vec<(VarId, f64)>,
    pub params: Vec<(ParamId, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Self::default() }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, a: f64) -> Self {
        Self { vars: vec![(v, a)], ..Self::default() }
    }

    pub fn param(p: ParamId, b: f64) -> Self {
        Self { params: vec![(p, b)], ..Self::default() }
    }

    /// Adds `a·v`, builder style.
    pub fn plus(mut self, v: VarId, a: f64) -> Self {
        self.vars.push((v, a));
        self
    }

    pub fn plus_param(mut self, p: ParamId, b: f64) -> Self {
        self.params.push((p, b));
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: VarId, a: f64) {
        self.vars.push((v, a));
    }

    pub fn add_param(&mut self, p: ParamId, b: f64) {
        self.params.push((p, b));
    }

    pub fn add_expr(&mut self, other: &Affine, scale: f64) {
        self.vars.extend(other.vars.iter().map(|&(v, a)| (v, a * scale)));
        self.params.extend(other.params.iter().map(|&(p, b)| (p, b * scale)));
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = Self::zero();
        out.add_expr(self, s);
        out
    }

    /// Sorts terms by index and merges duplicates; zero coefficients go.
    pub fn canonical(mut self) -> Self {
        self.vars = merge(self.vars);
        self.params = merge(self.params);
        self
    }

    pub fn eval(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.vars.iter().map(|&(v, a)| a * x[v.0]).sum::<f64>()
            + self.params.iter().map(|&(p, b)| b * theta[p.0]).sum::<f64>()
            + self.constant
    }

    /// Value of the parameter and constant part only.
    pub fn offset(&self, theta: &[f64]) -> f64 {
        self.params.iter().map(|&(p, b)| b * theta[p.0]).sum::<f64>() + self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.vars.is_empty() && self.params.is_empty()
    }
}

fn merge<K: Ord + Copy>(mut terms: Vec<(K, f64)>) -> Vec<(K, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(K, f64)> = Vec::with_capacity(terms.len());
    for (k, a) in terms {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += a,
            _ => out.push((k, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

impl From<VarId> for Affine {
    fn from(v: VarId) -> Self {
        Affine::var(v)
    }
}

impl From<f64> for Affine {
    fn from(c: f64) -> Self {
        Affine::constant(c)
    }
}
