//! The iterate `(x, y, z)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BimaxError, Result};

/// Block dimensions `(d_x, d_y, d_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub dx: usize,
    pub dy: usize,
    pub dz: usize,
}

impl Dims {
    pub fn new(dx: usize, dy: usize, dz: usize) -> Self {
        Self { dx, dy, dz }
    }

    pub fn total(&self) -> usize {
        self.dx + self.dy + self.dz
    }
}

/// Upper variable `x`, lower minimization variable `y` and lower
/// maximization variable `z`. Also used to carry the three partial
/// gradients of a loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTriple {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

impl ParamTriple {
    pub fn new(x: DVector<f64>, y: DVector<f64>, z: DVector<f64>) -> Self {
        Self { x, y, z }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            x: DVector::zeros(dims.dx),
            y: DVector::zeros(dims.dy),
            z: DVector::zeros(dims.dz),
        }
    }

    pub fn from_slices(x: &[f64], y: &[f64], z: &[f64]) -> Self {
        Self {
            x: DVector::from_column_slice(x),
            y: DVector::from_column_slice(y),
            z: DVector::from_column_slice(z),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.x.len(), self.y.len(), self.z.len())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// Largest absolute coordinate over the three blocks.
    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Coordinates in stacked `(x, y, z)` order.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().chain(self.y.iter()).chain(self.z.iter()).copied()
    }

    pub fn to_stacked(&self) -> DVector<f64> {
        DVector::from_iterator(self.dims().total(), self.iter())
    }

    pub fn from_stacked(v: &DVector<f64>, dims: Dims) -> Self {
        Self {
            x: v.rows(0, dims.dx).into_owned(),
            y: v.rows(dims.dx, dims.dy).into_owned(),
            z: v.rows(dims.dx + dims.dy, dims.dz).into_owned(),
        }
    }

    /// Stacked Euclidean norm.
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared() + self.z.norm_squared()).sqrt()
    }

    /// Bit-level equality, treating `-0.0` and `0.0` (and distinct NaN
    /// payloads) as different.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self
                .iter()
                .zip(other.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Stacked Euclidean distance `sqrt(|x-x'|^2 + |y-y'|^2 + |z-z'|^2)`.
pub fn triple_distance(a: &ParamTriple, b: &ParamTriple) -> Result<f64> {
    let (da, db) = (a.dims(), b.dims());
    for (what, expected, got) in [
        ("x block", da.dx, db.dx),
        ("y block", da.dy, db.dy),
        ("z block", da.dz, db.dz),
    ] {
        if expected != got {
            return Err(BimaxError::DimensionMismatch {
                what,
                expected,
                got,
            });
        }
    }
    let sq = (&a.x - &b.x).norm_squared() + (&a.y - &b.y).norm_squared() + (&a.z - &b.z).norm_squared();
    Ok(sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_distance_is_zero() {
        let a = ParamTriple::from_slices(&[1.0, -2.0], &[0.5], &[3.0, 4.0]);
        assert_eq!(triple_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn unit_vector_in_x() {
        let a = ParamTriple::from_slices(&[1.0, 0.0], &[2.0], &[]);
        let b = ParamTriple::from_slices(&[0.0, 0.0], &[2.0], &[]);
        assert_eq!(triple_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn three_four_five() {
        let a = ParamTriple::from_slices(&[3.0, 0.0], &[4.0], &[]);
        let b = ParamTriple::from_slices(&[0.0, 0.0], &[0.0], &[]);
        assert_eq!(triple_distance(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = ParamTriple::from_slices(&[1.0], &[1.0], &[1.0]);
        let b = ParamTriple::from_slices(&[1.0], &[1.0, 2.0], &[1.0]);
        assert!(matches!(
            triple_distance(&a, &b),
            Err(BimaxError::DimensionMismatch { what: "y block", .. })
        ));
    }

    #[test]
    fn stacked_round_trip() {
        let a = ParamTriple::from_slices(&[1.0, 2.0], &[3.0], &[4.0, 5.0, 6.0]);
        let back = ParamTriple::from_stacked(&a.to_stacked(), a.dims());
        assert!(a.bitwise_eq(&back));
    }

    fn triple() -> impl Strategy<Value = ParamTriple> {
        (
            prop::collection::vec(-10.0..10.0f64, 3),
            prop::collection::vec(-10.0..10.0f64, 2),
            prop::collection::vec(-10.0..10.0f64, 2),
        )
            .prop_map(|(x, y, z)| ParamTriple::from_slices(&x, &y, &z))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in triple(), b in triple(), c in triple()) {
            let ab = triple_distance(&a, &b).unwrap();
            let ba = triple_distance(&b, &a).unwrap();
            let bc = triple_distance(&b, &c).unwrap();
            let ac = triple_distance(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab == 0.0, a == b);
        }
    }
}
