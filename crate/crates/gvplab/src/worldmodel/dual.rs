//! Minimal forward-mode dual numbers with a fixed number of derivative
//! directions, used to get exact Jacobians of the smooth dynamics.
//!
//! `N` is the number of independent inputs (4 for WallNav: two position and
//! two action components; 6 for PushToy). `N = 0` degenerates to plain value
//! evaluation, so the step function is written once and reused for both.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn con(v: f64) -> Self {
        Dual { v, d: [0.0; N] }
    }

    pub fn var(v: f64, index: usize) -> Self {
        let mut d = [0.0; N];
        d[index] = 1.0;
        Dual { v, d }
    }

    /// Numerically stable logistic function.
    pub fn sigmoid(self) -> Self {
        let s = stable_sigmoid(self.v);
        self.chain(s, s * (1.0 - s))
    }

    /// `log(1 + exp(sharp * x)) / sharp`, the soft hinge.
    pub fn softplus(self, sharp: f64) -> Self {
        let x = self.v * sharp;
        let v = if x > 0.0 {
            self.v + (-x).exp().ln_1p() / sharp
        } else {
            x.exp().ln_1p() / sharp
        };
        self.chain(v, stable_sigmoid(x))
    }

    /// Smooth `min(self, c)`.
    pub fn soft_min(self, c: f64, sharp: f64) -> Self {
        self - (self - Dual::con(c)).softplus(sharp)
    }

    /// Smooth `max(self, c)`.
    pub fn soft_max(self, c: f64, sharp: f64) -> Self {
        self + (Dual::con(c) - self).softplus(sharp)
    }

    /// Smooth clamp to `[0, 1]`.
    pub fn soft_clamp01(self, sharp: f64) -> Self {
        self.soft_max(0.0, sharp).soft_min(1.0, sharp)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r)
    }

    /// Replace near-zero values by `+-eps` with zero derivative; used to
    /// guard divisions whose result is gated off anyway.
    pub fn guard_away_from_zero(self, eps: f64) -> Self {
        if self.v.abs() >= eps {
            self
        } else {
            Dual::con(if self.v >= 0.0 { eps } else { -eps })
        }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = dv * self.d[i];
        }
        Dual { v, d }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] += rhs.d[i];
        }
        Dual {
            v: self.v + rhs.v,
            d,
        }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] -= rhs.d[i];
        }
        Dual {
            v: self.v - rhs.v,
            d,
        }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual {
            v: self.v * rhs.v,
            d,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - self.v * inv * rhs.d[i]) * inv;
        }
        Dual {
            v: self.v * inv,
            d,
        }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = -*x;
        }
        Dual { v: -self.v, d }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.v * rhs, rhs)
    }
}
