//! Report document written by every command: a deterministic TOML body with
//! a summary, per-check records and (for classify) per-field classification
//! records. Timing goes to stderr, never into the body, so reruns with the
//! same config and seed are byte-identical.

use serde::Serialize;

use finsler_core::conformal::{FieldClassification, TheoremSuiteReport};
use finsler_core::suites::IdentityCheck;
use finsler_core::TensorValue;

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub mode: String,
    pub seed: u64,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub classification: Vec<ClassificationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tensors: Option<TensorDump>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub passed: bool,
    pub total_checks: usize,
    pub failed_checks: usize,
}

#[derive(Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub identity: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct ClassificationRecord {
    pub field: String,
    pub verdict: String,
    pub omega_mean: f64,
    pub omega_spread: f64,
    pub max_fit_residual: f64,
    pub vertical_gradient_max: f64,
    pub horizontal_gradient_max: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lie_nonlinear_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixed_connection_max: Option<f64>,
    pub note: String,
}

#[derive(Debug, Serialize)]
pub struct TensorDump {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub g_inv: Vec<Vec<f64>>,
    pub cartan: Vec<Vec<Vec<f64>>>,
    pub spray: Vec<f64>,
    pub nonlinear: Vec<Vec<f64>>,
    pub connection: Vec<Vec<Vec<f64>>>,
    pub curvature_r: Vec<Vec<Vec<f64>>>,
    pub curvature_hh: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Report {
    pub fn new(command: &str, mode: &str, seed: u64) -> Report {
        Report {
            command: command.to_string(),
            mode: mode.to_string(),
            seed,
            summary: Summary {
                passed: true,
                total_checks: 0,
                failed_checks: 0,
            },
            checks: Vec::new(),
            classification: Vec::new(),
            tensors: None,
        }
    }

    pub fn push_identity_checks(&mut self, checks: &[IdentityCheck]) {
        for check in checks {
            self.checks.push(CheckRecord {
                name: check.name.clone(),
                identity: check.identity.clone(),
                max_residual: check.max_residual,
                tolerance: check.tolerance,
                passed: check.passed,
            });
        }
    }

    pub fn push_check(&mut self, name: &str, identity: &str, residual: f64, tolerance: f64) {
        self.checks.push(CheckRecord {
            name: name.to_string(),
            identity: identity.to_string(),
            max_residual: residual,
            tolerance,
            passed: residual <= tolerance,
        });
    }

    pub fn push_classifications(&mut self, suite: &TheoremSuiteReport) {
        for row in &suite.fields {
            self.classification.push(classification_record(row));
        }
    }

    /// Recomputes the summary from the recorded checks.
    pub fn finalize(&mut self) {
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        self.summary = Summary {
            passed: failed == 0,
            total_checks: self.checks.len(),
            failed_checks: failed,
        };
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn overall_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn classification_record(row: &FieldClassification) -> ClassificationRecord {
    let max_fit_residual = row
        .report
        .omega_samples
        .iter()
        .map(|s| s.residual)
        .fold(0.0, f64::max);
    ClassificationRecord {
        field: row.name.clone(),
        verdict: row.report.verdict.name().to_string(),
        omega_mean: row.report.omega_mean,
        omega_spread: row.report.omega_spread,
        max_fit_residual,
        vertical_gradient_max: row.report.vertical_gradient_max,
        horizontal_gradient_max: row.report.horizontal_gradient_max,
        samples: row.report.omega_samples.len(),
        lie_nonlinear_max: row.lie_nonlinear_max,
        mixed_connection_max: row.mixed_connection_max,
        note: row.report.note.clone(),
    }
}

fn rank1(t: &TensorValue) -> Vec<f64> {
    (0..t.shape()[0]).map(|i| t.get(&[i])).collect()
}

fn rank2(t: &TensorValue) -> Vec<Vec<f64>> {
    (0..t.shape()[0])
        .map(|i| (0..t.shape()[1]).map(|j| t.get(&[i, j])).collect())
        .collect()
}

fn rank3(t: &TensorValue) -> Vec<Vec<Vec<f64>>> {
    (0..t.shape()[0])
        .map(|i| {
            (0..t.shape()[1])
                .map(|j| (0..t.shape()[2]).map(|k| t.get(&[i, j, k])).collect())
                .collect()
        })
        .collect()
}

fn rank4(t: &TensorValue) -> Vec<Vec<Vec<Vec<f64>>>> {
    (0..t.shape()[0])
        .map(|i| {
            (0..t.shape()[1])
                .map(|j| {
                    (0..t.shape()[2])
                        .map(|k| {
                            (0..t.shape()[3]).map(|l| t.get(&[i, j, k, l])).collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn tensor_dump(
    x: &[f64],
    y: &[f64],
    g: &TensorValue,
    g_inv: &TensorValue,
    cartan: &TensorValue,
    spray: &TensorValue,
    nonlinear: &TensorValue,
    connection: &TensorValue,
    curvature_r: &TensorValue,
    curvature_hh: &TensorValue,
) -> TensorDump {
    TensorDump {
        x: x.to_vec(),
        y: y.to_vec(),
        g: rank2(g),
        g_inv: rank2(g_inv),
        cartan: rank3(cartan),
        spray: rank1(spray),
        nonlinear: rank2(nonlinear),
        connection: rank3(connection),
        curvature_r: rank3(curvature_r),
        curvature_hh: rank4(curvature_hh),
    }
}
