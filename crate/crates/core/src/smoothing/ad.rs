//! Scalars generic over plain floats and hyper-dual numbers.
//!
//! A hyper-dual `a + b·ε₁ + c·ε₂ + d·ε₁ε₂` with `ε₁² = ε₂² = 0` carries the
//! exact mixed second derivative in `d` when two inputs are seeded in `ε₁`
//! and `ε₂`.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub v: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub fn new(v: f64, e1: f64, e2: f64) -> Self {
        Self { v, e1, e2, e12: 0.0 }
    }

    /// Applies a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        Self { v: f, e1: df * self.e1, e2: df * self.e2, e12: df * self.e12 + d2f * self.e1 * self.e2 }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, e1: self.e1 + o.e1, e2: self.e2 + o.e2, e12: self.e12 + o.e12 }
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, e1: self.e1 - o.e1, e2: self.e2 - o.e2, e12: self.e12 - o.e12 }
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            e1: self.v * o.e1 + self.e1 * o.v,
            e2: self.v * o.e2 + self.e2 * o.v,
            e12: self.v * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.v,
        }
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        self * o.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, e1: -self.e1, e2: -self.e2, e12: -self.e12 }
    }
}

impl Real for HyperDual {
    fn cst(v: f64) -> Self {
        Self { v, ..Self::default() }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
}

/// Hessians of every output of `f` at `x`, as dense row-major `n×n` blocks.
pub fn hessians<F>(x: &[f64], f: F) -> Vec<Vec<f64>>
where
    F: Fn(&[HyperDual]) -> Vec<HyperDual>,
{
    let n = x.len();
    let mut seeded: Vec<HyperDual> = x.iter().map(|&v| HyperDual::cst(v)).collect();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for j in i..n {
            seeded[i].e1 = 1.0;
            seeded[j].e2 = 1.0;
            let r = f(&seeded);
            if out.is_empty() {
                out = vec![vec![0.0; n * n]; r.len()];
            }
            for (k, rk) in r.iter().enumerate() {
                out[k][i * n + j] = rk.e12;
                out[k][j * n + i] = rk.e12;
            }
            seeded[i].e1 = 0.0;
            seeded[j].e2 = 0.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_derivative_of_quotient() {
        // f(a, b) = a / sqrt(b): f_ab = -1 / (2 b^1.5)
        let h = hessians(&[2.0, 4.0], |v| vec![v[0] / v[1].sqrt()]);
        assert!((h[0][1] + 0.5 / 8.0).abs() < 1e-15);
        // f_bb = 3a / (4 b^2.5)
        assert!((h[0][3] - 3.0 * 2.0 / (4.0 * 32.0)).abs() < 1e-15);
        assert_eq!(h[0][0], 0.0);
    }
}
