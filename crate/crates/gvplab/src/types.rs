//! Shared domain types and small vector utilities.
//!
//! Everything here is an immutable value type; the rest of the crate passes
//! these around by reference or cheap clone. All arithmetic is f64: the
//! penalty continuation in the solver multiplies residuals by factors up to
//! `rho_max`, which amplifies rounding error too much at 32-bit.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An environment observation: a small real vector in arena coordinates.
///
/// Length is fixed per environment (2 for WallNav, 4 for PushToy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub DVector<f64>);

/// A world-model latent state of dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState(pub DVector<f64>);

/// An action: per-step displacement in arena units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action(pub DVector<f64>);

impl Observation {
    pub fn from_slice(v: &[f64]) -> Self {
        Observation(DVector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl LatentState {
    pub fn from_slice(v: &[f64]) -> Self {
        LatentState(DVector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl Action {
    pub fn from_slice(v: &[f64]) -> Self {
        Action(DVector::from_column_slice(v))
    }

    pub fn zeros(m: usize) -> Self {
        Action(DVector::zeros(m))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Componentwise action box `a_min <= a <= a_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub min: DVector<f64>,
    pub max: DVector<f64>,
}

impl ActionBounds {
    /// Symmetric bounds `[-limit, limit]` in every component.
    pub fn symmetric(dim: usize, limit: f64) -> Self {
        ActionBounds {
            min: DVector::from_element(dim, -limit),
            max: DVector::from_element(dim, limit),
        }
    }

    pub fn new(min: DVector<f64>, max: DVector<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                got: max.len(),
            });
        }
        if min.iter().zip(max.iter()).any(|(lo, hi)| lo >= hi) {
            return Err(Error::InvalidConfig(
                "action bounds require min < max componentwise".into(),
            ));
        }
        Ok(ActionBounds { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Componentwise clip of `a` into the box.
    pub fn clip(&self, a: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            a.len(),
            a.iter()
                .zip(self.min.iter().zip(self.max.iter()))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi)),
        )
    }

    /// True iff every component lies strictly inside the open box.
    pub fn strictly_inside(&self, a: &DVector<f64>) -> bool {
        a.iter()
            .zip(self.min.iter().zip(self.max.iter()))
            .all(|(&v, (&lo, &hi))| v > lo && v < hi)
    }
}

/// Cost-term weights for the grounding objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    /// Guidance alignment weight.
    pub lambda_v: f64,
    /// Terminal goal weight.
    pub lambda_g: f64,
    /// Action regularization weight.
    pub lambda_r: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            lambda_v: 1.0,
            lambda_g: 10.0,
            lambda_r: 0.05,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_v < 0.0 || self.lambda_g < 0.0 || self.lambda_r < 0.0 {
            return Err(Error::InvalidConfig("weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Project `z` onto the unit L2 sphere.
///
/// Errors on (numerically) zero vectors, which carry no direction.
pub fn l2_normalize(z: &DVector<f64>) -> Result<DVector<f64>> {
    let n = z.norm();
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::DegenerateLatent);
    }
    Ok(z / n)
}

/// Mean squared error between two equal-length vectors.
///
/// The mean (rather than sum) keeps goal weights comparable across latent
/// dimensions.
pub fn mse(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let d = (a - b).norm_squared();
    Ok(d / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn normalize_three_four_five() {
        let z = dvector![3.0, 4.0];
        let n = l2_normalize(&z).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-15);
        assert!((n[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_axis_vector() {
        let z = dvector![0.0, 0.0, 7.0];
        let n = l2_normalize(&z).unwrap();
        assert_eq!(n, dvector![0.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_zero_vector_errors() {
        let z = dvector![0.0, 0.0];
        assert!(matches!(l2_normalize(&z), Err(Error::DegenerateLatent)));
    }

    #[test]
    fn normalize_unit_norm_property() {
        let mut rng = crate::rng::RngStream::new(11).rng();
        use rand::Rng;
        for _ in 0..200 {
            let z = DVector::from_fn(5, |_, _| rng.gen_range(-10.0..10.0));
            if z.norm() == 0.0 {
                continue;
            }
            let n = l2_normalize(&z).unwrap();
            assert!((n.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalize_scale_invariance() {
        let mut rng = crate::rng::RngStream::new(12).rng();
        use rand::Rng;
        for _ in 0..200 {
            let z = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            if z.norm() < 1e-6 {
                continue;
            }
            let c: f64 = rng.gen_range(0.1..100.0);
            let a = l2_normalize(&z).unwrap();
            let b = l2_normalize(&(&z * c)).unwrap();
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn mse_examples() {
        assert_eq!(
            mse(&dvector![1.0, 2.0], &dvector![1.0, 2.0]).unwrap(),
            0.0
        );
        assert_eq!(
            mse(&dvector![1.0, 2.0], &dvector![1.0, 0.0]).unwrap(),
            2.0
        );
        assert_eq!(mse(&dvector![0.0], &dvector![3.0]).unwrap(), 9.0);
    }

    #[test]
    fn mse_symmetric_nonnegative() {
        let a = dvector![0.3, -1.2, 4.0];
        let b = dvector![1.0, 0.0, -2.0];
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert!(mse(&a, &b).unwrap() >= 0.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mse_length_mismatch_errors() {
        assert!(mse(&dvector![1.0], &dvector![1.0, 2.0]).is_err());
    }

    #[test]
    fn bounds_reject_inverted() {
        assert!(ActionBounds::new(dvector![0.1, 0.0], dvector![0.0, 1.0]).is_err());
    }

    #[test]
    fn bounds_clip() {
        let b = ActionBounds::symmetric(2, 0.1);
        let clipped = b.clip(&dvector![0.5, -0.02]);
        assert_eq!(clipped, dvector![0.1, -0.02]);
    }
}
