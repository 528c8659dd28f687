//! Smoothed second-order cone complementarity.
//!
//! Both families replace `x ∈ K, y ∈ K, xᵀy = 0` by a square system
//! `φ_ε(x, y) = 0` whose roots satisfy `x ∘ y = ε²·e` with `x`, `y` strictly
//! inside the cone. As `ε → 0` the roots approach complementary pairs.
//!
//! * CHKS: `φ = x − ε·F((x − y)/ε)` with `F(α) = (√(α² + 4) + α)/2`
//!   applied spectrally.
//! * Kanzow: `φ = x + y − √(x² + y² + 2ε²·e)` with the Jordan square and
//!   square root.

pub mod ad;

use serde::{Deserialize, Serialize};

use ad::{HyperDual, Real};

use crate::conic::ConePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SmoothingKind {
    Chks,
    Kanzow,
}

/// A cone pair whose complementarity is replaced by `φ_ε(x, y) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedPairRow {
    pub pair: ConePair,
    pub eps: f64,
    pub kind: SmoothingKind,
}

impl SmoothedPairRow {
    pub fn dim(&self) -> usize {
        self.pair.dim()
    }
}

/// `F(α) = (√(α² + 4) + α)/2`, evaluated without cancellation for α < 0.
pub fn chks_f(alpha: f64) -> f64 {
    let r = (alpha * alpha + 4.0).sqrt();
    if alpha >= 0.0 {
        0.5 * (r + alpha)
    } else {
        2.0 / (r - alpha)
    }
}

fn chks_f_prime(alpha: f64) -> f64 {
    0.5 * (alpha / (alpha * alpha + 4.0).sqrt() + 1.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// Unit vector along `v`, or the first coordinate axis when `v` vanishes.
fn direction(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    let mut w = vec![0.0; v.len()];
    if n > 1e-300 {
        for (wi, vi) in w.iter_mut().zip(v) {
            *wi = vi / n;
        }
    } else if !w.is_empty() {
        w[0] = 1.0;
    }
    w
}

/// Spectral vectors `u₁ = ½(1, −w)`, `u₂ = ½(1, w)`.
fn spectral_vectors(w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut u1 = vec![0.5];
    let mut u2 = vec![0.5];
    for &wi in w {
        u1.push(-0.5 * wi);
        u2.push(0.5 * wi);
    }
    (u1, u2)
}

/// CHKS residual; a scalar pair gives `x₀ − ε·F((x₀ − y₀)/ε)`.
pub fn chks_residual(x: &[f64], y: &[f64], eps: f64) -> Vec<f64> {
    assert_eq!(x.len(), y.len(), "cone vectors must have equal dimension");
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let nz = norm(&z[1..]);
    let psi1 = z[0] - nz;
    let psi2 = z[0] + nz;
    let (u1, u2) = spectral_vectors(&direction(&z[1..]));
    let (f1, f2) = (chks_f(psi1 / eps), chks_f(psi2 / eps));
    x.iter().enumerate().map(|(k, &xk)| xk - eps * (f1 * u1[k] + f2 * u2[k])).collect()
}

/// Kanzow residual; a scalar pair gives `x₀ + y₀ − √(x₀² + y₀² + 2ε²)`.
pub fn kanzow_residual(x: &[f64], y: &[f64], eps: f64) -> Vec<f64> {
    assert_eq!(x.len(), y.len(), "cone vectors must have equal dimension");
    let sq = x.iter().chain(y).map(|t| t * t).sum::<f64>() + 2.0 * eps * eps;
    let cross: Vec<f64> = (1..x.len()).map(|k| x[0] * x[k] + y[0] * y[k]).collect();
    let nc = norm(&cross);
    let psi1 = (sq - 2.0 * nc).max(0.0);
    let psi2 = sq + 2.0 * nc;
    let (u1, u2) = spectral_vectors(&direction(&cross));
    let (s1, s2) = (psi1.sqrt(), psi2.sqrt());
    (0..x.len()).map(|k| x[k] + y[k] - (s1 * u1[k] + s2 * u2[k])).collect()
}

pub fn residual(kind: SmoothingKind, x: &[f64], y: &[f64], eps: f64) -> Vec<f64> {
    match kind {
        SmoothingKind::Chks => chks_residual(x, y, eps),
        SmoothingKind::Kanzow => kanzow_residual(x, y, eps),
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Square {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Square {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    fn matmul(&self, o: &Square) -> Square {
        let n = self.n;
        let mut out = Square::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * o.at(k, j);
                }
            }
        }
        out
    }

    fn sub_from_identity(&self) -> Square {
        let mut out = Square::identity(self.n);
        for (o, v) in out.data.iter_mut().zip(&self.data) {
            *o -= v;
        }
        out
    }
}

/// Jacobian of a spectral function with eigen-derivatives `df1`, `df2`,
/// divided difference `a = (f(λ₂) − f(λ₁))/(λ₂ − λ₁)` and direction `w`.
fn spectral_jacobian(df1: f64, df2: f64, a: f64, w: &[f64]) -> Square {
    let n = w.len() + 1;
    let b = 0.5 * (df1 + df2);
    let c = 0.5 * (df2 - df1);
    let mut m = Square::zeros(n);
    m.set(0, 0, b);
    for i in 1..n {
        m.set(0, i, c * w[i - 1]);
        m.set(i, 0, c * w[i - 1]);
        for j in 1..n {
            let diag = if i == j { a } else { 0.0 };
            m.set(i, j, diag + (b - a) * w[i - 1] * w[j - 1]);
        }
    }
    m
}

/// Arrow matrix `L_x` with `L_x·v = x ∘ v`.
fn arrow(x: &[f64]) -> Square {
    let n = x.len();
    let mut m = Square::zeros(n);
    for i in 0..n {
        m.set(i, i, x[0]);
    }
    for i in 1..n {
        m.set(0, i, x[i]);
        m.set(i, 0, x[i]);
    }
    m
}

/// `(∂φ/∂x, ∂φ/∂y)` in closed form. Valid everywhere, including the
/// degenerate direction where both eigenvalues coincide.
pub fn jacobian(kind: SmoothingKind, x: &[f64], y: &[f64], eps: f64) -> (Square, Square) {
    assert_eq!(x.len(), y.len(), "cone vectors must have equal dimension");
    match kind {
        SmoothingKind::Chks => {
            let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let nz = norm(&z[1..]);
            let (a1, a2) = ((z[0] - nz) / eps, (z[0] + nz) / eps);
            let dd = 0.5 * (1.0 + (a1 + a2) / ((a1 * a1 + 4.0).sqrt() + (a2 * a2 + 4.0).sqrt()));
            let g = spectral_jacobian(chks_f_prime(a1), chks_f_prime(a2), dd, &direction(&z[1..]));
            (g.sub_from_identity(), g)
        }
        SmoothingKind::Kanzow => {
            let sq = x.iter().chain(y).map(|t| t * t).sum::<f64>() + 2.0 * eps * eps;
            let cross: Vec<f64> = (1..x.len()).map(|k| x[0] * x[k] + y[0] * y[k]).collect();
            let nc = norm(&cross);
            let s1 = (sq - 2.0 * nc).max(0.0).sqrt();
            let s2 = (sq + 2.0 * nc).sqrt();
            let g = spectral_jacobian(0.5 / s1, 0.5 / s2, 1.0 / (s1 + s2), &direction(&cross));
            let mut jx = g.matmul(&arrow(x));
            let mut jy = g.matmul(&arrow(y));
            for v in jx.data.iter_mut().chain(jy.data.iter_mut()) {
                *v *= 2.0;
            }
            (jx.sub_from_identity(), jy.sub_from_identity())
        }
    }
}

/// The residual written through divided differences, so it is generic over
/// [`Real`] and free of explicit direction vectors. Agrees with
/// [`residual`] up to rounding.
pub fn residual_generic<T: Real>(kind: SmoothingKind, x: &[T], y: &[T], eps: f64) -> Vec<T> {
    let d = x.len();
    let two = T::cst(2.0);
    let half = T::cst(0.5);
    match kind {
        SmoothingKind::Chks => {
            let e = T::cst(eps);
            let z: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
            if d == 1 {
                let a = z[0] / e;
                let r = (a * a + T::cst(4.0)).sqrt();
                let f = if a.value() < 0.0 { two / (r - a) } else { half * (r + a) };
                return vec![x[0] - e * f];
            }
            let nz2 = z[1..].iter().fold(T::cst(0.0), |s, &t| s + t * t);
            let nz = nz2.sqrt();
            let (a1, a2) = ((z[0] - nz) / e, (z[0] + nz) / e);
            let (r1, r2) = ((a1 * a1 + T::cst(4.0)).sqrt(), (a2 * a2 + T::cst(4.0)).sqrt());
            // ε·(F(α₁) + F(α₂))/2 and the divided difference of εF(·/ε)
            let g0 = e * half * half * (r1 + r2 + a1 + a2);
            let dd = half * (T::cst(1.0) + (a1 + a2) / (r1 + r2));
            let mut out = vec![x[0] - g0];
            out.extend((1..d).map(|k| x[k] - dd * z[k]));
            out
        }
        SmoothingKind::Kanzow => {
            let sq = x.iter().chain(y).fold(T::cst(2.0 * eps * eps), |s, &t| s + t * t);
            if d == 1 {
                return vec![x[0] + y[0] - sq.sqrt()];
            }
            let cross: Vec<T> = (1..d).map(|k| x[0] * x[k] + y[0] * y[k]).collect();
            let nc = cross.iter().fold(T::cst(0.0), |s, &t| s + t * t).sqrt();
            let s1 = (sq - two * nc).sqrt();
            let s2 = (sq + two * nc).sqrt();
            // tail of √v is v̄·(√λ₂ − √λ₁)/(λ₂ − λ₁) = v̄/(√λ₁ + √λ₂), v̄ = 2·cross
            let dd = two / (s1 + s2);
            let mut out = vec![x[0] + y[0] - half * (s1 + s2)];
            out.extend((1..d).map(|k| x[k] + y[k] - dd * cross[k - 1]));
            out
        }
    }
}

/// Hessians of each residual component with respect to the stacked
/// `(x, y)`, as dense `2d × 2d` row-major blocks.
///
/// Near the degenerate direction the hyper-dual chain rule loses the
/// second-order term to cancellation, so there the Hessian is taken by
/// central differences of the closed-form Jacobian instead.
pub fn hessians(kind: SmoothingKind, x: &[f64], y: &[f64], eps: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let scale = 1.0 + x.iter().chain(y).fold(0.0f64, |m, t| m.max(t.abs())) + eps;
    let tail = match kind {
        SmoothingKind::Chks => norm(&x[1..].iter().zip(&y[1..]).map(|(a, b)| a - b).collect::<Vec<_>>()),
        SmoothingKind::Kanzow => norm(&(1..d).map(|k| x[0] * x[k] + y[0] * y[k]).collect::<Vec<_>>()),
    };
    let degenerate_scale = match kind {
        SmoothingKind::Chks => 1e-5 * scale,
        SmoothingKind::Kanzow => 1e-5 * scale * scale,
    };
    if d == 1 || tail > degenerate_scale {
        let mut stacked = x.to_vec();
        stacked.extend_from_slice(y);
        return ad::hessians(&stacked, |v: &[HyperDual]| residual_generic(kind, &v[..d], &v[d..], eps));
    }
    let n = 2 * d;
    let mut out = vec![vec![0.0; n * n]; d];
    let h = 1e-6 * scale;
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    for col in 0..n {
        let bump = |xs: &mut Vec<f64>, ys: &mut Vec<f64>, delta: f64| {
            if col < d {
                xs[col] += delta;
            } else {
                ys[col - d] += delta;
            }
        };
        bump(&mut xs, &mut ys, h);
        let (px, py) = jacobian(kind, &xs, &ys, eps);
        bump(&mut xs, &mut ys, -2.0 * h);
        let (mx, my) = jacobian(kind, &xs, &ys, eps);
        bump(&mut xs, &mut ys, h);
        for (k, hk) in out.iter_mut().enumerate() {
            for j in 0..n {
                let (p, m) = if j < d { (px.at(k, j), mx.at(k, j)) } else { (py.at(k, j - d), my.at(k, j - d)) };
                hk[j * n + col] = (p - m) / (2.0 * h);
            }
        }
    }
    for hk in &mut out {
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (hk[i * n + j] + hk[j * n + i]);
                hk[i * n + j] = avg;
                hk[j * n + i] = avg;
            }
        }
    }
    out
}

/// The positive root `y₀` of the scalar smoothed equation for given `x₀`,
/// i.e. `ε²/x₀`. Kept for tests and warm starts.
pub fn scalar_partner(x0: f64, eps: f64) -> f64 {
    eps * eps / x0
}

/// Moves a cone vector strictly inside the cone: the smallest eigenvalue is
/// raised to at least `margin`.
pub fn push_interior(v: &mut [f64], margin: f64) {
    let t = norm(&v[1..]);
    let lam_min = v[0] - t;
    if lam_min < margin {
        v[0] += margin - lam_min;
    }
}

/// Splits a cone vector into its two spectral values `(λ₁, λ₂)`.
pub fn spectral_values(v: &[f64]) -> (f64, f64) {
    let t = norm(&v[1..]);
    (v[0] - t, v[0] + t)
}
