//! Lift metrics on TM: block assembly of alpha*g1 + beta*g2 + gamma*g3 in
//! the adapted frame, nonsingularity classification, and the determinant
//! identity det(gt) = (alpha*gamma - beta^2)^n (det g)^2.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{IndexInfo, TensorValue};

/// Coefficients (alpha, beta, gamma) of the lift metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// |alpha*gamma - beta^2| below this counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

impl LiftCoefficients {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> LiftCoefficients {
        LiftCoefficients { alpha, beta, gamma }
    }

    /// alpha*gamma - beta^2, the classification key.
    pub fn discriminant(&self) -> f64 {
        self.alpha * self.gamma - self.beta * self.beta
    }

    pub fn is_singular(&self) -> bool {
        self.discriminant().abs() < SINGULAR_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftClass {
    Singular,
    PseudoRiemannian,
    Riemannian,
}

impl LiftClass {
    pub fn name(&self) -> &'static str {
        match self {
            LiftClass::Singular => "singular",
            LiftClass::PseudoRiemannian => "pseudo_riemannian",
            LiftClass::Riemannian => "riemannian",
        }
    }
}

/// The assembled 2n x 2n lift metric at one sample.
#[derive(Clone, Debug)]
pub struct LiftMetricValue {
    /// Block order [horizontal | vertical]; blocks [[a g, b g], [b g, c g]].
    pub matrix: TensorValue,
    pub coefficients: LiftCoefficients,
    /// The base fundamental tensor the blocks were built from.
    pub g: TensorValue,
}

fn check_symmetric(g: &TensorValue) -> Result<usize> {
    if g.rank() != 2 || g.shape()[0] != g.shape()[1] {
        return Err(Error::argument("lift metric needs a square rank-2 base tensor"));
    }
    let n = g.shape()[0];
    let scale = g.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (g.get(&[i, j]) - g.get(&[j, i])).abs() > 1e-12 * scale {
                return Err(Error::argument(
                    "base tensor must be symmetric to assemble a lift metric",
                ));
            }
        }
    }
    Ok(n)
}

fn lift_signature() -> Vec<IndexInfo> {
    vec![IndexInfo::lower("A"), IndexInfo::lower("B")]
}

/// Assembles the block matrix [[a g, b g], [b g, c g]]. The factor 2 in the
/// g2 summand is absorbed by the two off-diagonal blocks each carrying b g.
pub fn build_lift_metric(g: &TensorValue, coeffs: LiftCoefficients) -> Result<LiftMetricValue> {
    let n = check_symmetric(g)?;
    let matrix = TensorValue::from_fn(vec![2 * n, 2 * n], lift_signature(), |idx| {
        let (a, b) = (idx[0], idx[1]);
        let entry = g.get(&[a % n, b % n]);
        match (a < n, b < n) {
            (true, true) => coeffs.alpha * entry,
            (false, false) => coeffs.gamma * entry,
            _ => coeffs.beta * entry,
        }
    });
    Ok(LiftMetricValue {
        matrix,
        coefficients: coeffs,
        g: g.clone(),
    })
}

/// Classifies the lift metric of a positive-definite g: singular when
/// alpha*gamma - beta^2 vanishes, Riemannian when alpha, gamma > 0 and
/// alpha*gamma - beta^2 > 0, pseudo-Riemannian otherwise. The algebraic rule
/// is cross-validated against the eigenvalue signs of the assembled matrix.
pub fn classify_lift(g: &TensorValue, coeffs: LiftCoefficients) -> Result<LiftClass> {
    let algebraic = if coeffs.is_singular() {
        LiftClass::Singular
    } else if coeffs.alpha > 0.0 && coeffs.gamma > 0.0 && coeffs.discriminant() > 0.0 {
        LiftClass::Riemannian
    } else {
        LiftClass::PseudoRiemannian
    };

    let lift = build_lift_metric(g, coeffs)?;
    let eig = lift.matrix.as_matrix().symmetric_eigen();
    let scale = lift.matrix.max_abs().max(1.0);
    let near_zero = 1e-9 * scale;
    let zeros = eig.eigenvalues.iter().filter(|l| l.abs() <= near_zero).count();
    let negatives = eig.eigenvalues.iter().filter(|&&l| l < -near_zero).count();
    let spectral = if zeros > 0 {
        LiftClass::Singular
    } else if negatives == 0 {
        LiftClass::Riemannian
    } else {
        LiftClass::PseudoRiemannian
    };
    if spectral != algebraic {
        return Err(Error::Validation(format!(
            "lift classification mismatch: algebraic {} vs spectral {}",
            algebraic.name(),
            spectral.name()
        )));
    }
    Ok(algebraic)
}

/// Relative residual of det(gt) = (alpha*gamma - beta^2)^n (det g)^2.
pub fn det_identity_residual(g: &TensorValue, coeffs: LiftCoefficients) -> Result<f64> {
    let n = check_symmetric(g)?;
    let lift = build_lift_metric(g, coeffs)?;
    let lhs = lift.matrix.as_matrix().determinant();
    let det_g = DMatrix::from_fn(n, n, |i, j| g.get(&[i, j])).determinant();
    let rhs = coeffs.discriminant().powi(n as i32) * det_g * det_g;
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> TensorValue {
        TensorValue::from_fn(
            vec![n, n],
            vec![IndexInfo::lower("i"), IndexInfo::lower("j")],
            |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 },
        )
    }

    #[test]
    fn diagonal_lift_of_identity() {
        let lift = build_lift_metric(&identity(2), LiftCoefficients::new(1.0, 0.0, 1.0)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(lift.matrix.get(&[i, j]), want);
            }
        }
    }

    #[test]
    fn complete_lift_is_antidiagonal_blocks() {
        let lift = build_lift_metric(&identity(2), LiftCoefficients::new(0.0, 1.0, 0.0)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if (i + 2) % 4 == j || (j + 2) % 4 == i {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(lift.matrix.get(&[i, j]), want, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn determinant_identity_on_fixed_cases() {
        // (2, 1, 1) over I2: det = (2 - 1)^2 * 1 = 1
        let r = det_identity_residual(&identity(2), LiftCoefficients::new(2.0, 1.0, 1.0)).unwrap();
        assert!(r <= 1e-12);

        // g = diag(2, 3), (1, 2, 5): (5 - 4)^2 * 36 = 36
        let g = TensorValue::from_fn(
            vec![2, 2],
            vec![IndexInfo::lower("i"), IndexInfo::lower("j")],
            |idx| match (idx[0], idx[1]) {
                (0, 0) => 2.0,
                (1, 1) => 3.0,
                _ => 0.0,
            },
        );
        let coeffs = LiftCoefficients::new(1.0, 2.0, 5.0);
        let lift = build_lift_metric(&g, coeffs).unwrap();
        assert!((lift.matrix.as_matrix().determinant() - 36.0).abs() <= 1e-10);
        assert!(det_identity_residual(&g, coeffs).unwrap() <= 1e-10);
    }

    #[test]
    fn classification_matches_definition() {
        let g = identity(2);
        assert_eq!(
            classify_lift(&g, LiftCoefficients::new(1.0, 0.0, 1.0)).unwrap(),
            LiftClass::Riemannian
        );
        assert_eq!(
            classify_lift(&g, LiftCoefficients::new(0.0, 1.0, 0.0)).unwrap(),
            LiftClass::PseudoRiemannian
        );
        assert_eq!(
            classify_lift(&g, LiftCoefficients::new(1.0, 1.0, 1.0)).unwrap(),
            LiftClass::Singular
        );
    }

    #[test]
    fn pseudo_class_has_split_signature() {
        // alpha*gamma - beta^2 < 0 over positive-definite g: n plus, n minus
        let g = identity(3);
        let lift = build_lift_metric(&g, LiftCoefficients::new(1.0, 2.0, 1.0)).unwrap();
        let eig = lift.matrix.as_matrix().symmetric_eigen();
        let pos = eig.eigenvalues.iter().filter(|&&l| l > 0.0).count();
        let neg = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
        assert_eq!((pos, neg), (3, 3));
    }

    #[test]
    fn asymmetric_base_rejected() {
        let mut g = identity(2);
        g.set(&[0, 1], 0.5);
        assert!(build_lift_metric(&g, LiftCoefficients::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn assembly_is_linear_in_coefficients() {
        let g = identity(2);
        let a = build_lift_metric(&g, LiftCoefficients::new(1.5, -0.25, 2.0)).unwrap();
        let b = build_lift_metric(&g, LiftCoefficients::new(0.5, 1.0, -1.0)).unwrap();
        let sum = build_lift_metric(&g, LiftCoefficients::new(2.0, 0.75, 1.0)).unwrap();
        assert!(a.matrix.add(&b.matrix).max_abs_diff(&sum.matrix) == 0.0);
    }
}
