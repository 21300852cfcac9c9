//! Symmetric quadratic basis `xi_i xi_j, i <= j` on the 4-dimensional
//! relative state.

use nalgebra::{SMatrix, SVector, Vector4};

pub const STATE_DIM: usize = 4;
pub const FEATURE_DIM: usize = 10;

pub type Weights = SVector<f64, FEATURE_DIM>;
pub type FeatureVector = SVector<f64, FEATURE_DIM>;
/// `d vartheta / d xi`, one row per feature.
pub type FeatureJacobian = SMatrix<f64, FEATURE_DIM, STATE_DIM>;

/// Monomial index table in weight order: squares first, then the cross
/// terms in lexicographic order.
pub const PAIRS: [(usize, usize); FEATURE_DIM] = [
    (0, 0),
    (1, 1),
    (2, 2),
    (3, 3),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 2),
    (1, 3),
    (2, 3),
];

/// Index of the monomial `xi_i xi_j` (either order).
pub fn pair_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    PAIRS.iter().position(|&p| p == (a, b)).expect("indices below STATE_DIM")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeatureMap;

impl FeatureMap {
    pub const fn dim(&self) -> usize {
        FEATURE_DIM
    }

    pub fn eval(&self, xi: &Vector4<f64>) -> FeatureVector {
        FeatureVector::from_fn(|k, _| {
            let (i, j) = PAIRS[k];
            xi[i] * xi[j]
        })
    }

    pub fn jacobian(&self, xi: &Vector4<f64>) -> FeatureJacobian {
        let mut jac = FeatureJacobian::zeros();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            jac[(k, i)] += xi[j];
            jac[(k, j)] += xi[i];
        }
        jac
    }

    /// `V(xi) = W^T vartheta(xi)` as the symmetric matrix `P` with `V = xi^T P xi`.
    pub fn weights_to_matrix(&self, w: &Weights) -> nalgebra::Matrix4<f64> {
        let mut p = nalgebra::Matrix4::zeros();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            if i == j {
                p[(i, i)] = w[k];
            } else {
                p[(i, j)] = 0.5 * w[k];
                p[(j, i)] = 0.5 * w[k];
            }
        }
        p
    }

    /// Inverse of [`Self::weights_to_matrix`]: `W_k = P_ii` or `2 P_ij`.
    pub fn matrix_to_weights(&self, p: &nalgebra::Matrix4<f64>) -> Weights {
        Weights::from_fn(|k, _| {
            let (i, j) = PAIRS[k];
            if i == j {
                p[(i, i)]
            } else {
                p[(i, j)] + p[(j, i)]
            }
        })
    }
}

pub fn features(xi: &Vector4<f64>) -> (FeatureVector, FeatureJacobian) {
    (FeatureMap.eval(xi), FeatureMap.jacobian(xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_state_has_zero_features() {
        let (v, j) = features(&Vector4::zeros());
        assert_eq!(v, FeatureVector::zeros());
        assert_eq!(j, FeatureJacobian::zeros());
    }

    #[test]
    fn unit_vector_selects_square() {
        let (v, _) = features(&Vector4::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(v[pair_index(0, 0)], 1.0);
        assert_eq!(v.sum(), 1.0);
    }

    #[test]
    fn table_is_complete_and_ordered() {
        let mut seen = std::collections::BTreeSet::new();
        assert!(PAIRS[..STATE_DIM].iter().all(|&(i, j)| i == j));
        for &(i, j) in &PAIRS {
            assert!(i <= j && j < STATE_DIM);
            seen.insert((i, j));
        }
        assert_eq!(seen.len(), FEATURE_DIM);
        assert_eq!(pair_index(3, 1), pair_index(1, 3));
    }

    #[test]
    fn weights_matrix_round_trip() {
        let w = Weights::from_fn(|k, _| k as f64 - 3.5);
        let p = FeatureMap.weights_to_matrix(&w);
        assert_eq!(FeatureMap.matrix_to_weights(&p), w);
        let xi = Vector4::new(0.3, -1.2, 2.0, 0.7);
        assert!(((xi.transpose() * p * xi)[0] - w.dot(&FeatureMap.eval(&xi))).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn features_are_even(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, d in -10.0f64..10.0) {
            let xi = Vector4::new(a, b, c, d);
            prop_assert_eq!(FeatureMap.eval(&xi), FeatureMap.eval(&(-xi)));
        }

        #[test]
        fn euler_identity_for_quadratics(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, d in -10.0f64..10.0) {
            // Homogeneous degree two: J(xi) xi = 2 vartheta(xi).
            let xi = Vector4::new(a, b, c, d);
            let (v, j) = features(&xi);
            prop_assert!((j * xi - 2.0 * v).norm() <= 1e-12 * (1.0 + v.norm()));
        }
    }
}
