//! Hand-rolled two-hidden-layer tanh network with exact input Jacobians.
//!
//! The only gradients the crate needs are small dense chains, so
//! backpropagation is written out directly instead of pulling in an autodiff
//! dependency.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DVector<f64>,
}

/// Cached activations from a forward pass, consumed by backprop.
pub struct ForwardCache {
    pub input: DVector<f64>,
    pub h1: DVector<f64>,
    pub h2: DVector<f64>,
    pub output: DVector<f64>,
}

/// Parameter gradients in the same layout as [`Mlp`].
pub struct MlpGrads {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DVector<f64>,
}

impl Mlp {
    pub fn random<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let scaled = |rows: usize, cols: usize, rng: &mut R| {
            let scale = (1.0 / cols as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| {
                rng.sample::<f64, _>(StandardNormal) * scale
            })
        };
        Mlp {
            w1: scaled(hidden, input, rng),
            b1: DVector::zeros(hidden),
            w2: scaled(hidden, hidden, rng),
            b2: DVector::zeros(hidden),
            w3: scaled(output, hidden, rng),
            b3: DVector::zeros(output),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(hidden, hidden),
            b2: DVector::zeros(hidden),
            w3: DMatrix::zeros(output, hidden),
            b3: DVector::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w3.nrows()
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward_cached(x).output
    }

    pub fn forward_cached(&self, x: &DVector<f64>) -> ForwardCache {
        let h1 = (&self.w1 * x + &self.b1).map(f64::tanh);
        let h2 = (&self.w2 * &h1 + &self.b2).map(f64::tanh);
        let output = &self.w3 * &h2 + &self.b3;
        ForwardCache {
            input: x.clone(),
            h1,
            h2,
            output,
        }
    }

    /// Exact Jacobian d(output)/d(input) at the cached point.
    pub fn input_jacobian(&self, cache: &ForwardCache) -> DMatrix<f64> {
        let mut t1 = self.w1.clone();
        for (i, h) in cache.h1.iter().enumerate() {
            let s = 1.0 - h * h;
            t1.row_mut(i).scale_mut(s);
        }
        let mut t2 = &self.w2 * t1;
        for (i, h) in cache.h2.iter().enumerate() {
            let s = 1.0 - h * h;
            t2.row_mut(i).scale_mut(s);
        }
        &self.w3 * t2
    }

    /// Vector-Jacobian product `J^T w` without materializing the Jacobian.
    pub fn input_vjp(&self, cache: &ForwardCache, w: &DVector<f64>) -> DVector<f64> {
        let d2 = (self.w3.transpose() * w).component_mul(&cache.h2.map(|h| 1.0 - h * h));
        let d1 = (self.w2.transpose() * d2).component_mul(&cache.h1.map(|h| 1.0 - h * h));
        self.w1.transpose() * d1
    }

    /// Parameter gradients for upstream gradient `dy = dL/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, dy: &DVector<f64>) -> MlpGrads {
        let d3 = dy;
        let d2 = (self.w3.transpose() * d3).component_mul(&cache.h2.map(|h| 1.0 - h * h));
        let d1 = (self.w2.transpose() * &d2).component_mul(&cache.h1.map(|h| 1.0 - h * h));
        MlpGrads {
            w3: d3 * cache.h2.transpose(),
            b3: d3.clone(),
            w2: &d2 * cache.h1.transpose(),
            b2: d2,
            w1: &d1 * cache.input.transpose(),
            b1: d1,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.w3.len()
            + self.b3.len()
    }

    pub fn flatten_params(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in [&self.w1, &self.w2, &self.w3] {
            out.extend_from_slice(m.as_slice());
        }
        for b in [&self.b1, &self.b2, &self.b3] {
            out.extend_from_slice(b.as_slice());
        }
        DVector::from_vec(out)
    }

    pub fn set_from_flat(&mut self, flat: &DVector<f64>) {
        let mut off = 0;
        for m in [&mut self.w1, &mut self.w2, &mut self.w3] {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&flat.as_slice()[off..off + n]);
            off += n;
        }
        for b in [&mut self.b1, &mut self.b2, &mut self.b3] {
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&flat.as_slice()[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len());
    }
}

impl MlpGrads {
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::new();
        for m in [&self.w1, &self.w2, &self.w3] {
            out.extend_from_slice(m.as_slice());
        }
        for b in [&self.b1, &self.b2, &self.b3] {
            out.extend_from_slice(b.as_slice());
        }
        DVector::from_vec(out)
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
        self.w3 += &other.w3;
        self.b3 += &other.b3;
    }

    pub fn scale(&mut self, s: f64) {
        self.w1.scale_mut(s);
        self.b1.scale_mut(s);
        self.w2.scale_mut(s);
        self.b2.scale_mut(s);
        self.w3.scale_mut(s);
        self.b3.scale_mut(s);
    }

    pub fn zeros_like(mlp: &Mlp) -> MlpGrads {
        MlpGrads {
            w1: DMatrix::zeros(mlp.w1.nrows(), mlp.w1.ncols()),
            b1: DVector::zeros(mlp.b1.len()),
            w2: DMatrix::zeros(mlp.w2.nrows(), mlp.w2.ncols()),
            b2: DVector::zeros(mlp.b2.len()),
            w3: DMatrix::zeros(mlp.w3.nrows(), mlp.w3.ncols()),
            b3: DVector::zeros(mlp.b3.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let mut rng = RngStream::new(21).rng();
        let mlp = Mlp::random(5, 8, 3, &mut rng);
        let x = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let cache = mlp.forward_cached(&x);
        let jac = mlp.input_jacobian(&cache);
        let h = 1e-6;
        for j in 0..5 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (mlp.forward(&xp) - mlp.forward(&xm)) / (2.0 * h);
            for i in 0..3 {
                assert!((jac[(i, j)] - fd[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn vjp_agrees_with_jacobian() {
        let mut rng = RngStream::new(22).rng();
        let mlp = Mlp::random(4, 6, 4, &mut rng);
        let x = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let w = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let cache = mlp.forward_cached(&x);
        let direct = mlp.input_jacobian(&cache).transpose() * &w;
        let vjp = mlp.input_vjp(&cache, &w);
        assert!((direct - vjp).norm() < 1e-12);
    }

    #[test]
    fn param_gradients_match_finite_differences() {
        let mut rng = RngStream::new(23).rng();
        let mut mlp = Mlp::random(3, 4, 2, &mut rng);
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let target = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let loss = |m: &Mlp| (m.forward(&x) - &target).norm_squared();

        let cache = mlp.forward_cached(&x);
        let dy = (cache.output.clone() - &target) * 2.0;
        let analytic = mlp.backward(&cache, &dy).flatten();

        let theta = mlp.flatten_params();
        let h = 1e-6;
        for k in (0..theta.len()).step_by(7) {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            mlp.set_from_flat(&tp);
            let lp = loss(&mlp);
            mlp.set_from_flat(&tm);
            let lm = loss(&mlp);
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (analytic[k] - fd).abs() < 1e-5,
                "param {k}: analytic {} vs fd {}",
                analytic[k],
                fd
            );
        }
        mlp.set_from_flat(&theta);
    }

    #[test]
    fn zero_network_has_zero_jacobian() {
        let mlp = Mlp::zeros(4, 6, 3);
        let cache = mlp.forward_cached(&DVector::from_element(4, 0.3));
        assert!(mlp.input_jacobian(&cache).norm() == 0.0);
        assert!(cache.output.norm() == 0.0);
    }

    #[test]
    fn flatten_roundtrip() {
        let mut rng = RngStream::new(24).rng();
        let mlp = Mlp::random(3, 5, 2, &mut rng);
        let mut copy = Mlp::zeros(3, 5, 2);
        copy.set_from_flat(&mlp.flatten_params());
        assert_eq!(mlp, copy);
    }
}
