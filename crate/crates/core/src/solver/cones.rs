//! Cone blocks, Jordan algebra and Nesterov–Todd scaling.

use super::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `s = 0`; its multipliers are free.
    Zero(usize),
    NonNeg(usize),
    Soc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::Soc(n) => n,
        }
    }

    /// Contribution to the barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::NonNeg(n) => n,
            Cone::Soc(_) => 1,
        }
    }
}

/// Appends a block, merging with the previous one for linear cones.
pub fn push_cone(cones: &mut Vec<Cone>, c: Cone) {
    match (cones.last_mut(), c) {
        (Some(Cone::Zero(n)), Cone::Zero(m)) | (Some(Cone::NonNeg(n)), Cone::NonNeg(m)) => *n += m,
        _ => cones.push(c),
    }
}

/// Block offsets of a cone list.
pub fn offsets(cones: &[Cone]) -> Vec<usize> {
    let mut out = Vec::with_capacity(cones.len() + 1);
    let mut o = 0;
    out.push(0);
    for c in cones {
        o += c.dim();
        out.push(o);
    }
    out
}

pub fn tail_norm(v: &[f64]) -> f64 {
    v[1..].iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// Smallest spectral value of a block (`+∞` for the zero cone).
pub fn margin(c: Cone, v: &[f64]) -> f64 {
    match c {
        Cone::Zero(_) => f64::INFINITY,
        Cone::NonNeg(_) => v.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => v[0] - tail_norm(v),
    }
}

/// Adds a multiple of the identity element so the margin is at least one
/// when it was not already positive.
pub fn shift_into(c: Cone, v: &mut [f64]) {
    let m = margin(c, v);
    if m.is_finite() && m < 1e-8 {
        let add = 1.0 - m;
        match c {
            Cone::NonNeg(_) => v.iter_mut().for_each(|t| *t += add),
            Cone::Soc(_) => v[0] += add,
            Cone::Zero(_) => {}
        }
    }
}

/// Largest `α ≥ 0` with `v + α·d` in the cone, `+∞` if unbounded. `v` must
/// be strictly inside.
pub fn max_step(c: Cone, v: &[f64], d: &[f64]) -> f64 {
    match c {
        Cone::Zero(_) => f64::INFINITY,
        Cone::NonNeg(_) => {
            v.iter().zip(d).filter(|(_, &di)| di < 0.0).map(|(&vi, &di)| -vi / di).fold(f64::INFINITY, f64::min)
        }
        Cone::Soc(_) => {
            // det(v + αd) = a α² + 2b α + c
            let a = d[0] * d[0] - d[1..].iter().map(|t| t * t).sum::<f64>();
            let b = v[0] * d[0] - dot(&v[1..], &d[1..]);
            let cc = v[0] * v[0] - v[1..].iter().map(|t| t * t).sum::<f64>();
            let mut best = f64::INFINITY;
            let head_root = if d[0] < 0.0 { -v[0] / d[0] } else { f64::INFINITY };
            if a.abs() < 1e-300 {
                if b < 0.0 {
                    best = -cc / (2.0 * b);
                }
            } else {
                let disc = b * b - a * cc;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    let qv = -(b + b.signum() * sq);
                    let roots = [qv / a, if qv != 0.0 { cc / qv } else { f64::INFINITY }];
                    for r in roots {
                        if r > 0.0 && r < best {
                            best = r;
                        }
                    }
                }
            }
            best.min(head_root).max(0.0)
        }
    }
}

/// Jordan product `u ∘ v`.
pub fn jordan(c: Cone, u: &[f64], v: &[f64], out: &mut [f64]) {
    match c {
        Cone::Zero(_) => out.iter_mut().for_each(|t| *t = 0.0),
        Cone::NonNeg(_) => {
            for i in 0..u.len() {
                out[i] = u[i] * v[i];
            }
        }
        Cone::Soc(_) => {
            out[0] = dot(u, v);
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
    }
}

/// Solves `λ ∘ u = v` for `u`.
pub fn jordan_div(c: Cone, lam: &[f64], v: &[f64], out: &mut [f64]) {
    match c {
        Cone::Zero(_) => out.iter_mut().for_each(|t| *t = 0.0),
        Cone::NonNeg(_) => {
            for i in 0..lam.len() {
                out[i] = v[i] / lam[i];
            }
        }
        Cone::Soc(_) => {
            let a = lam[0];
            let det = a * a - lam[1..].iter().map(|t| t * t).sum::<f64>();
            let u0 = (a * v[0] - dot(&lam[1..], &v[1..])) / det;
            out[0] = u0;
            for i in 1..lam.len() {
                out[i] = (v[i] - u0 * lam[i]) / a;
            }
        }
    }
}

/// Nesterov–Todd scaling of one block: `W·z = W⁻¹·s = λ`.
#[derive(Debug, Clone)]
pub enum BlockScaling {
    Zero,
    NonNeg { w: Vec<f64> },
    Soc { eta: f64, w: Vec<f64> },
}

impl BlockScaling {
    pub fn new(c: Cone, s: &[f64], z: &[f64]) -> Self {
        match c {
            Cone::Zero(_) => BlockScaling::Zero,
            Cone::NonNeg(_) => BlockScaling::NonNeg { w: s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect() },
            Cone::Soc(_) => {
                let sa = (s[0] * s[0] - s[1..].iter().map(|t| t * t).sum::<f64>()).max(1e-300).sqrt();
                let za = (z[0] * z[0] - z[1..].iter().map(|t| t * t).sum::<f64>()).max(1e-300).sqrt();
                let sb: Vec<f64> = s.iter().map(|t| t / sa).collect();
                let zb: Vec<f64> = z.iter().map(|t| t / za).collect();
                let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
                let mut w: Vec<f64> = Vec::with_capacity(s.len());
                w.push((sb[0] + zb[0]) / (2.0 * gamma));
                for i in 1..s.len() {
                    w.push((sb[i] - zb[i]) / (2.0 * gamma));
                }
                // keep wᵀJw = 1 exactly
                let t = w[1..].iter().map(|v| v * v).sum::<f64>();
                w[0] = (1.0 + t).sqrt();
                BlockScaling::Soc { eta: (sa / za).sqrt(), w }
            }
        }
    }

    /// `W·v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            BlockScaling::Zero => out.iter_mut().for_each(|t| *t = 0.0),
            BlockScaling::NonNeg { w } => {
                for i in 0..w.len() {
                    out[i] = w[i] * v[i];
                }
            }
            BlockScaling::Soc { eta, w } => {
                let wt = dot(&w[1..], &v[1..]);
                out[0] = eta * (w[0] * v[0] + wt);
                let k = v[0] + wt / (1.0 + w[0]);
                for i in 1..w.len() {
                    out[i] = eta * (v[i] + k * w[i]);
                }
            }
        }
    }

    /// `W⁻¹·v`.
    pub fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            BlockScaling::Zero => out.iter_mut().for_each(|t| *t = 0.0),
            BlockScaling::NonNeg { w } => {
                for i in 0..w.len() {
                    out[i] = v[i] / w[i];
                }
            }
            BlockScaling::Soc { eta, w } => {
                let wt = dot(&w[1..], &v[1..]);
                out[0] = (w[0] * v[0] - wt) / eta;
                let k = -v[0] + wt / (1.0 + w[0]);
                for i in 1..w.len() {
                    out[i] = (v[i] + k * w[i]) / eta;
                }
            }
        }
    }

    /// Entries of `W²` for a block starting at `offset`, upper and lower.
    pub fn w2_entries(&self, offset: usize, scale: f64, out: &mut Vec<(usize, usize, f64)>) {
        match self {
            BlockScaling::Zero => {}
            BlockScaling::NonNeg { w } => {
                for (i, wi) in w.iter().enumerate() {
                    out.push((offset + i, offset + i, scale * wi * wi));
                }
            }
            BlockScaling::Soc { eta, w } => {
                let e2 = eta * eta * scale;
                let n = w.len();
                for i in 0..n {
                    for j in 0..n {
                        let j_ij = if i == j {
                            if i == 0 {
                                1.0
                            } else {
                                -1.0
                            }
                        } else {
                            0.0
                        };
                        out.push((offset + i, offset + j, e2 * (2.0 * w[i] * w[j] - j_ij)));
                    }
                }
            }
        }
    }

    /// `W²·v`.
    pub fn apply_w2(&self, v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; v.len()];
        self.apply(v, &mut tmp);
        self.apply(&tmp, out);
    }
}

/// Scaling of every block plus the scaled point `λ`.
#[derive(Debug, Clone)]
pub struct Scaling {
    pub cones: Vec<Cone>,
    pub offsets: Vec<usize>,
    pub blocks: Vec<BlockScaling>,
    pub lambda: Vec<f64>,
}

impl Scaling {
    pub fn new(cones: &[Cone], s: &[f64], z: &[f64]) -> Self {
        let offs = offsets(cones);
        let mut blocks = Vec::with_capacity(cones.len());
        let mut lambda = vec![0.0; s.len()];
        for (k, &c) in cones.iter().enumerate() {
            let r = offs[k]..offs[k + 1];
            let b = BlockScaling::new(c, &s[r.clone()], &z[r.clone()]);
            b.apply(&z[r.clone()], &mut lambda[r]);
            blocks.push(b);
        }
        Self { cones: cones.to_vec(), offsets: offs, blocks, lambda }
    }

    fn each(&self, v: &[f64], f: impl Fn(usize, &BlockScaling, Cone, &[f64], &mut [f64])) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (k, b) in self.blocks.iter().enumerate() {
            let r = self.offsets[k]..self.offsets[k + 1];
            f(k, b, self.cones[k], &v[r.clone()], &mut out[r]);
        }
        out
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.each(v, |_, b, _, vi, o| b.apply(vi, o))
    }

    pub fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        self.each(v, |_, b, _, vi, o| b.apply_inv(vi, o))
    }

    pub fn apply_w2(&self, v: &[f64]) -> Vec<f64> {
        self.each(v, |_, b, _, vi, o| b.apply_w2(vi, o))
    }

    /// `λ \ v`.
    pub fn lambda_div(&self, v: &[f64]) -> Vec<f64> {
        self.each(v, |k, _, c, vi, o| {
            let r = self.offsets[k]..self.offsets[k + 1];
            jordan_div(c, &self.lambda[r], vi, o)
        })
    }

    pub fn w2_entries(&self, row0: usize, scale: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (k, b) in self.blocks.iter().enumerate() {
            b.w2_entries(row0 + self.offsets[k], scale, &mut out);
        }
        out
    }
}

/// Blockwise Jordan product.
pub fn jordan_all(cones: &[Cone], u: &[f64], v: &[f64]) -> Vec<f64> {
    let offs = offsets(cones);
    let mut out = vec![0.0; u.len()];
    for (k, &c) in cones.iter().enumerate() {
        let r = offs[k]..offs[k + 1];
        jordan(c, &u[r.clone()], &v[r.clone()], &mut out[r]);
    }
    out
}

/// Identity element scaled by `t` (zero on zero-cone blocks).
pub fn unit(cones: &[Cone], t: f64) -> Vec<f64> {
    let offs = offsets(cones);
    let mut out = vec![0.0; *offs.last().unwrap_or(&0)];
    for (k, &c) in cones.iter().enumerate() {
        match c {
            Cone::Zero(_) => {}
            Cone::NonNeg(n) => out[offs[k]..offs[k] + n].iter_mut().for_each(|v| *v = t),
            Cone::Soc(_) => out[offs[k]] = t,
        }
    }
    out
}

/// Largest step keeping every block inside its cone.
pub fn max_step_all(cones: &[Cone], v: &[f64], d: &[f64]) -> f64 {
    let offs = offsets(cones);
    cones
        .iter()
        .enumerate()
        .map(|(k, &c)| max_step(c, &v[offs[k]..offs[k + 1]], &d[offs[k]..offs[k + 1]]))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest margin over all blocks.
pub fn min_margin(cones: &[Cone], v: &[f64]) -> f64 {
    let offs = offsets(cones);
    cones.iter().enumerate().map(|(k, &c)| margin(c, &v[offs[k]..offs[k + 1]])).fold(f64::INFINITY, f64::min)
}

/// `sᵀz` over the non-zero blocks.
pub fn complementarity(cones: &[Cone], s: &[f64], z: &[f64]) -> f64 {
    let offs = offsets(cones);
    cones
        .iter()
        .enumerate()
        .filter(|(_, c)| !matches!(c, Cone::Zero(_)))
        .map(|(k, _)| dot(&s[offs[k]..offs[k + 1]], &z[offs[k]..offs[k + 1]]))
        .sum()
}

pub fn degree(cones: &[Cone]) -> usize {
    cones.iter().map(Cone::degree).sum()
}
