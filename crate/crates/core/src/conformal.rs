//! Classification of base vector fields as Killing / homothetic / conformal
//! / none with respect to a lift metric on TM, by estimating the conformal
//! factor pointwise over a sample grid and testing its constancy.

use crate::error::{Error, Result};
use crate::finsler::{FinslerStructure, TangentSample};
use crate::geometry::{self, ConnectionBundle};
use crate::lie::{self, VectorFieldOnM};
use crate::lift::{build_lift_metric, classify_lift, LiftClass, LiftCoefficients};
use crate::tensor::TensorValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Killing,
    Homothetic,
    ConformalNonhomothetic,
    NotConformal,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Killing => "killing",
            Verdict::Homothetic => "homothetic",
            Verdict::ConformalNonhomothetic => "conformal_nonhomothetic",
            Verdict::NotConformal => "not_conformal",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifyTolerances {
    /// Conformality: per-sample fit residual bound.
    pub residual: f64,
    /// Constancy: bound on max - min of the factor estimates.
    pub spread: f64,
    /// Killing: bound on the mean factor.
    pub omega: f64,
}

impl Default for ClassifyTolerances {
    fn default() -> Self {
        ClassifyTolerances {
            residual: 1e-6,
            spread: 1e-6,
            omega: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OmegaSample {
    pub sample: TangentSample,
    pub omega: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct ConformalReport {
    pub verdict: Verdict,
    pub omega_samples: Vec<OmegaSample>,
    pub omega_mean: f64,
    pub omega_spread: f64,
    pub vertical_gradient_max: f64,
    pub horizontal_gradient_max: f64,
    pub note: String,
}

fn frobenius_inner(a: &TensorValue, b: &TensorValue) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Least-squares conformal factor of `lie_g` against `lift_g` in the
/// Frobenius inner product, with the relative fit residual.
pub fn estimate_omega(lie_g: &TensorValue, lift_g: &TensorValue) -> Result<(f64, f64)> {
    if lie_g.shape() != lift_g.shape() {
        return Err(Error::argument("matrix shapes disagree in factor estimate"));
    }
    let norm_sq = frobenius_inner(lift_g, lift_g);
    if norm_sq == 0.0 {
        return Err(Error::argument("lift metric has zero norm"));
    }
    let omega = frobenius_inner(lie_g, lift_g) / (2.0 * norm_sq);
    let mut err_sq = 0.0;
    for (l, g) in lie_g.data().iter().zip(lift_g.data()) {
        let e = l - 2.0 * omega * g;
        err_sq += e * e;
    }
    let residual = err_sq.sqrt() / norm_sq.sqrt().max(1.0);
    Ok((omega, residual))
}

/// Bundles for a sample grid, computed once and shared across fields.
pub fn prepare_bundles(
    structure: &FinslerStructure,
    samples: &[TangentSample],
) -> Result<Vec<ConnectionBundle>> {
    samples
        .iter()
        .map(|s| geometry::cartan_connection(structure, s))
        .collect()
}

fn omega_at(
    structure: &FinslerStructure,
    v: &VectorFieldOnM,
    coeffs: LiftCoefficients,
    sample: &TangentSample,
) -> Result<(f64, f64)> {
    let bundle = geometry::cartan_connection(structure, sample)?;
    omega_at_bundle(&bundle, v, coeffs)
}

fn omega_at_bundle(
    bundle: &ConnectionBundle,
    v: &VectorFieldOnM,
    coeffs: LiftCoefficients,
) -> Result<(f64, f64)> {
    let lie = lie::lie_lift_metric_blocks(bundle, v, coeffs)?;
    let lift = build_lift_metric(&bundle.g, coeffs)?;
    estimate_omega(&lie, &lift.matrix)
}

fn check_grid_coverage(samples: &[TangentSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::argument("classification grid is empty"));
    }
    let mut groups: Vec<(&[f64], usize)> = Vec::new();
    for s in samples {
        match groups.iter_mut().find(|(x, _)| *x == s.x.as_slice()) {
            Some((_, count)) => *count += 1,
            None => groups.push((s.x.as_slice(), 1)),
        }
    }
    if groups.len() < 2 {
        return Err(Error::argument(
            "classification grid needs at least two distinct base points",
        ));
    }
    if groups.iter().any(|(_, count)| *count < 2) {
        return Err(Error::argument(
            "classification grid needs at least two fibers per base point",
        ));
    }
    Ok(())
}

/// Classifies one field over a prepared grid.
pub fn classify_field(
    structure: &FinslerStructure,
    v: &VectorFieldOnM,
    coeffs: LiftCoefficients,
    samples: &[TangentSample],
    tolerances: &ClassifyTolerances,
) -> Result<ConformalReport> {
    let bundles = prepare_bundles(structure, samples)?;
    classify_field_with_bundles(structure, v, coeffs, &bundles, tolerances)
}

/// As [`classify_field`] but reusing bundles shared across several fields.
pub fn classify_field_with_bundles(
    structure: &FinslerStructure,
    v: &VectorFieldOnM,
    coeffs: LiftCoefficients,
    bundles: &[ConnectionBundle],
    tolerances: &ClassifyTolerances,
) -> Result<ConformalReport> {
    if classify_lift_or_err(&bundles, coeffs)? == LiftClass::Singular {
        return Err(Error::argument(
            "lift metric singular: classification undefined",
        ));
    }
    let samples: Vec<TangentSample> = bundles.iter().map(|b| b.sample.clone()).collect();
    check_grid_coverage(&samples)?;

    let mut omega_samples = Vec::with_capacity(bundles.len());
    for bundle in bundles {
        let (omega, residual) = omega_at_bundle(bundle, v, coeffs)?;
        omega_samples.push(OmegaSample {
            sample: bundle.sample.clone(),
            omega,
            residual,
        });
    }

    let exceeding = omega_samples
        .iter()
        .filter(|s| s.residual > tolerances.residual)
        .count();
    let strong = omega_samples
        .iter()
        .filter(|s| s.residual > 10.0 * tolerances.residual)
        .count();

    let omega_mean =
        omega_samples.iter().map(|s| s.omega).sum::<f64>() / omega_samples.len() as f64;
    let omega_min = omega_samples
        .iter()
        .map(|s| s.omega)
        .fold(f64::INFINITY, f64::min);
    let omega_max = omega_samples
        .iter()
        .map(|s| s.omega)
        .fold(f64::NEG_INFINITY, f64::max);
    let omega_spread = omega_max - omega_min;

    let mut note =
        "factor constancy is tested on the sampled grid only, not globally".to_string();

    let verdict = if exceeding > 0 {
        if 4 * strong < omega_samples.len() {
            note.push_str(&format!(
                "; fit residual exceeded tolerance at {exceeding} of {} samples \
                 (strong threshold at {strong})",
                omega_samples.len()
            ));
        }
        Verdict::NotConformal
    } else if omega_mean.abs() <= tolerances.omega && omega_spread <= tolerances.spread {
        Verdict::Killing
    } else if omega_spread <= tolerances.spread {
        Verdict::Homothetic
    } else {
        Verdict::ConformalNonhomothetic
    };

    // gradient probes of the factor, on a capped subset
    let mut vertical_gradient_max = 0.0f64;
    let mut horizontal_gradient_max = 0.0f64;
    if verdict != Verdict::NotConformal {
        let n = structure.dimension();
        let h = 1e-3;
        let stride = (bundles.len() / 8).max(1);
        for bundle in bundles.iter().step_by(stride) {
            for var in 0..2 * n {
                let plus = omega_at(structure, v, coeffs, &bundle.sample.displaced(var, h))?;
                let minus = omega_at(structure, v, coeffs, &bundle.sample.displaced(var, -h))?;
                let grad = ((plus.0 - minus.0) / (2.0 * h)).abs();
                if var < n {
                    horizontal_gradient_max = horizontal_gradient_max.max(grad);
                } else {
                    vertical_gradient_max = vertical_gradient_max.max(grad);
                }
            }
        }
    }

    Ok(ConformalReport {
        verdict,
        omega_samples,
        omega_mean,
        omega_spread,
        vertical_gradient_max,
        horizontal_gradient_max,
        note,
    })
}

fn classify_lift_or_err(
    bundles: &[ConnectionBundle],
    coeffs: LiftCoefficients,
) -> Result<LiftClass> {
    let first = bundles
        .first()
        .ok_or_else(|| Error::argument("classification grid is empty"))?;
    classify_lift(&first.g, coeffs)
}

/// One field's row in the suite summary.
#[derive(Clone, Debug)]
pub struct FieldClassification {
    pub name: String,
    pub report: ConformalReport,
    /// max |L_V N| over the grid, evaluated when gamma != 0 and the field is
    /// Killing or homothetic.
    pub lie_nonlinear_max: Option<f64>,
    /// max |y^k (g_ai L_V F^a_jk + g_aj L_V F^a_ik)| over the grid, when
    /// gamma = 0 and beta != 0.
    pub mixed_connection_max: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TheoremSuiteReport {
    pub fields: Vec<FieldClassification>,
    pub conformal_nonhomothetic_count: usize,
    /// True when no field classifies as conformal-but-not-homothetic.
    pub pass: bool,
}

/// Classifies every field and applies the homothety property: any field
/// whose lift is conformal must come out homothetic (or Killing). For the
/// conformal verdicts it also evaluates the supporting residuals
/// (L_V N when gamma != 0, the contracted connection derivative when
/// gamma = 0 and beta != 0).
pub fn theorem_suite(
    structure: &FinslerStructure,
    fields: &[VectorFieldOnM],
    coeffs: LiftCoefficients,
    samples: &[TangentSample],
    tolerances: &ClassifyTolerances,
) -> Result<TheoremSuiteReport> {
    let bundles = prepare_bundles(structure, samples)?;
    let mut rows = Vec::with_capacity(fields.len());
    let mut conformal_nonhomothetic_count = 0;
    for (slot, field) in fields.iter().enumerate() {
        let report = classify_field_with_bundles(structure, field, coeffs, &bundles, tolerances)?;
        if report.verdict == Verdict::ConformalNonhomothetic {
            conformal_nonhomothetic_count += 1;
        }
        let mut lie_nonlinear_max = None;
        let mut mixed_connection_max = None;
        if matches!(report.verdict, Verdict::Killing | Verdict::Homothetic) {
            if coeffs.gamma != 0.0 {
                let mut worst = 0.0f64;
                for bundle in &bundles {
                    worst = worst.max(lie::lie_nonlinear_connection(bundle, field)?.max_abs());
                }
                lie_nonlinear_max = Some(worst);
            } else if coeffs.beta != 0.0 {
                let n = structure.dimension();
                let mut worst = 0.0f64;
                for bundle in &bundles {
                    let lie_f = lie::lie_connection_coeffs(bundle, field)?;
                    for i in 0..n {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for k in 0..n {
                                for a in 0..n {
                                    acc += bundle.sample.y[k]
                                        * (bundle.g.get(&[a, i]) * lie_f.get(&[j, a, k])
                                            + bundle.g.get(&[a, j]) * lie_f.get(&[i, a, k]));
                                }
                            }
                            worst = worst.max(acc.abs());
                        }
                    }
                }
                mixed_connection_max = Some(worst);
            }
        }
        let name = if field.name().is_empty() {
            format!("field_{slot}")
        } else {
            field.name().to_string()
        };
        rows.push(FieldClassification {
            name,
            report,
            lie_nonlinear_max,
            mixed_connection_max,
        });
    }
    Ok(TheoremSuiteReport {
        pass: conformal_nonhomothetic_count == 0,
        conformal_nonhomothetic_count,
        fields: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::tensor::IndexInfo;
    use approx::assert_relative_eq;

    fn matrix(values: &[f64], n: usize) -> TensorValue {
        TensorValue::new(
            values.to_vec(),
            vec![n, n],
            vec![IndexInfo::lower("A"), IndexInfo::lower("B")],
        )
        .unwrap()
    }

    #[test]
    fn omega_estimation_exact_cases() {
        let lift = matrix(&[1.0, 0.0, 0.0, 1.0], 2);
        let lie = lift.scale(2.0);
        let (omega, residual) = estimate_omega(&lie, &lift).unwrap();
        assert_relative_eq!(omega, 1.0);
        assert_relative_eq!(residual, 0.0);

        let zero = lift.scale(0.0);
        let (omega, residual) = estimate_omega(&zero, &lift).unwrap();
        assert_relative_eq!(omega, 0.0);
        assert_relative_eq!(residual, 0.0);

        assert!(estimate_omega(&lie, &zero).is_err());
    }

    #[test]
    fn omega_estimation_with_orthogonal_error() {
        // E orthogonal to lift in the Frobenius inner product, |E|/|lift| = 0.1
        let lift = matrix(&[1.0, 0.0, 0.0, 1.0], 2);
        let e = matrix(&[0.1, 0.0, 0.0, -0.1], 2);
        assert_relative_eq!(frobenius_inner(&lift, &e), 0.0);
        let lie = lift.scale(2.0).add(&e);
        let (omega, residual) = estimate_omega(&lie, &lift).unwrap();
        assert_relative_eq!(omega, 1.0, epsilon = 1e-14);
        let expected = (0.02f64).sqrt() / (2.0f64).sqrt();
        assert_relative_eq!(residual, expected, epsilon = 1e-14);
    }

    #[test]
    fn euclidean_ground_truth_verdicts() {
        let s = FinslerStructure::euclidean(2);
        let samples = GridSpec::classification_default().samples(2).unwrap();
        let coeffs = LiftCoefficients::new(1.0, 0.0, 1.0);
        let tols = ClassifyTolerances::default();

        let rotation = VectorFieldOnM::from_components(&["-x2", "x1"], 2).unwrap();
        let report = classify_field(&s, &rotation, coeffs, &samples, &tols).unwrap();
        assert_eq!(report.verdict, Verdict::Killing);
        assert!(report.omega_mean.abs() <= 1e-8);

        let dilation = VectorFieldOnM::from_components(&["x1", "x2"], 2).unwrap();
        let report = classify_field(&s, &dilation, coeffs, &samples, &tols).unwrap();
        assert_eq!(report.verdict, Verdict::Homothetic);
        assert_relative_eq!(report.omega_mean, 1.0, epsilon = 1e-8);
        assert!(report.omega_spread <= 1e-8);

        let squared = VectorFieldOnM::from_components(&["x1^2 - x2^2", "2 * x1 * x2"], 2).unwrap();
        let report = classify_field(&s, &squared, coeffs, &samples, &tols).unwrap();
        assert_eq!(report.verdict, Verdict::NotConformal);
        let strong = report
            .omega_samples
            .iter()
            .filter(|o| o.residual > 1e-3)
            .count();
        assert!(4 * strong >= report.omega_samples.len());
    }

    #[test]
    fn singular_coefficients_rejected() {
        let s = FinslerStructure::euclidean(2);
        let samples = GridSpec::classification_default().samples(2).unwrap();
        let rotation = VectorFieldOnM::from_components(&["-x2", "x1"], 2).unwrap();
        let out = classify_field(
            &s,
            &rotation,
            LiftCoefficients::new(1.0, 1.0, 1.0),
            &samples,
            &ClassifyTolerances::default(),
        );
        assert!(out.is_err());
    }

    #[test]
    fn scale_equivariance_of_omega() {
        let s = FinslerStructure::euclidean(2);
        let samples = GridSpec::classification_default().samples(2).unwrap();
        let coeffs = LiftCoefficients::new(2.0, 1.0, 1.0);
        let tols = ClassifyTolerances::default();
        let dilation = VectorFieldOnM::from_components(&["x1", "x2"], 2).unwrap();
        let tripled = dilation.scaled(3.0);
        let base = classify_field(&s, &dilation, coeffs, &samples, &tols).unwrap();
        let scaled = classify_field(&s, &tripled, coeffs, &samples, &tols).unwrap();
        for (a, b) in base.omega_samples.iter().zip(&scaled.omega_samples) {
            assert_relative_eq!(3.0 * a.omega, b.omega, epsilon = 1e-10);
        }
    }
}
