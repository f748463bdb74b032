//! Finsler structures: built-in families, an expression-defined family, and
//! sample-based validation of the structure axioms (smoothness off the zero
//! section, positive 1-homogeneity in y, strong convexity of F^2).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, ExprTree};
use crate::geometry;
use crate::grid::GridSpec;
use crate::jet::Jet;

/// Fiber norms below this are treated as the (excluded) zero section.
pub const DEFAULT_MIN_FIBER_NORM: f64 = 1e-6;

/// A point (x, y) of the slit tangent bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TangentSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<TangentSample> {
        Self::with_min_fiber_norm(x, y, DEFAULT_MIN_FIBER_NORM)
    }

    pub fn with_min_fiber_norm(x: Vec<f64>, y: Vec<f64>, min_norm: f64) -> Result<TangentSample> {
        if x.len() != y.len() {
            return Err(Error::argument(format!(
                "base and fiber coordinates disagree in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        let norm = y.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm < min_norm {
            return Err(Error::argument(format!(
                "fiber norm {norm:e} below minimum {min_norm:e} (zero section is excluded)"
            )));
        }
        Ok(TangentSample { x, y })
    }

    pub fn dimension(&self) -> usize {
        self.x.len()
    }

    /// Same base point, scaled fiber.
    pub fn scaled_fiber(&self, lambda: f64) -> TangentSample {
        TangentSample {
            x: self.x.clone(),
            y: self.y.iter().map(|c| c * lambda).collect(),
        }
    }

    /// Sample displaced by `h` along coordinate `var` (0..n base, n..2n fiber).
    pub fn displaced(&self, var: usize, h: f64) -> TangentSample {
        let n = self.dimension();
        let mut out = self.clone();
        if var < n {
            out.x[var] += h;
        } else {
            out.y[var - n] += h;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum StructureKind {
    Euclidean,
    Riemannian { a: Vec<Vec<ExprTree>> },
    Randers { a: Vec<Vec<ExprTree>>, b: Vec<ExprTree> },
    Kropina { a: Vec<Vec<ExprTree>>, b: Vec<ExprTree> },
    Expression { tree: ExprTree },
}

impl StructureKind {
    pub fn name(&self) -> &'static str {
        match self {
            StructureKind::Euclidean => "euclidean",
            StructureKind::Riemannian { .. } => "riemannian",
            StructureKind::Randers { .. } => "randers",
            StructureKind::Kropina { .. } => "kropina",
            StructureKind::Expression { .. } => "expression",
        }
    }
}

/// An evaluatable Finsler function F(x, y) of a fixed dimension.
#[derive(Clone, Debug)]
pub struct FinslerStructure {
    dimension: usize,
    kind: StructureKind,
    source_text: Option<String>,
    min_fiber_norm: f64,
}

/// Outcome of one sample-based validation check.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub worst_sample: Option<TangentSample>,
}

impl ValidationReport {
    fn new(name: &str, tolerance: f64) -> ValidationReport {
        ValidationReport {
            name: name.to_string(),
            max_residual: 0.0,
            tolerance,
            passed: true,
            worst_sample: None,
        }
    }

    fn record(&mut self, residual: f64, sample: &TangentSample) {
        if residual > self.max_residual {
            self.max_residual = residual;
            self.worst_sample = Some(sample.clone());
        }
        if residual > self.tolerance {
            self.passed = false;
        }
    }
}

fn check_square(a: &[Vec<ExprTree>], n: usize, what: &str) -> Result<()> {
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::argument(format!("{what} must be an {n}x{n} matrix")));
    }
    for row in a {
        for entry in row {
            if entry.references_fiber() {
                return Err(Error::argument(format!(
                    "{what} entries must depend on x only"
                )));
            }
        }
    }
    Ok(())
}

fn check_covector(b: &[ExprTree], n: usize, what: &str) -> Result<()> {
    if b.len() != n {
        return Err(Error::argument(format!("{what} must have {n} components")));
    }
    for entry in b {
        if entry.references_fiber() {
            return Err(Error::argument(format!("{what} components must depend on x only")));
        }
    }
    Ok(())
}

/// Parses an n x n matrix of expression sources over x.
pub fn parse_matrix(rows: &[Vec<String>], n: usize) -> Result<Vec<Vec<ExprTree>>> {
    rows.iter()
        .map(|row| row.iter().map(|s| parse_expression(s, n)).collect())
        .collect()
}

/// Parses n covector components over x.
pub fn parse_covector(entries: &[String], n: usize) -> Result<Vec<ExprTree>> {
    entries.iter().map(|s| parse_expression(s, n)).collect()
}

impl FinslerStructure {
    pub fn euclidean(n: usize) -> FinslerStructure {
        FinslerStructure {
            dimension: n,
            kind: StructureKind::Euclidean,
            source_text: None,
            min_fiber_norm: DEFAULT_MIN_FIBER_NORM,
        }
    }

    /// F = sqrt(a_ij(x) y^i y^j). The matrix must be symmetric and positive
    /// definite on the validation grid.
    pub fn riemannian(n: usize, a: Vec<Vec<ExprTree>>) -> Result<FinslerStructure> {
        Self::riemannian_on(n, a, &GridSpec::validation_default())
    }

    /// As [`Self::riemannian`] with a caller-chosen validation grid (needed
    /// when the coefficient matrix degenerates somewhere in the default
    /// region, e.g. diag(1, x1^2) at x1 = 0).
    pub fn riemannian_on(
        n: usize,
        a: Vec<Vec<ExprTree>>,
        grid: &GridSpec,
    ) -> Result<FinslerStructure> {
        check_square(&a, n, "metric matrix")?;
        let s = FinslerStructure {
            dimension: n,
            kind: StructureKind::Riemannian { a },
            source_text: None,
            min_fiber_norm: DEFAULT_MIN_FIBER_NORM,
        };
        s.check_base_matrix(grid)?;
        Ok(s)
    }

    /// F = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i. Rejected when the a-norm of b
    /// reaches 1 anywhere on the validation grid (F would lose positivity and
    /// strong convexity).
    pub fn randers(n: usize, a: Vec<Vec<ExprTree>>, b: Vec<ExprTree>) -> Result<FinslerStructure> {
        Self::randers_on(n, a, b, &GridSpec::validation_default())
    }

    pub fn randers_on(
        n: usize,
        a: Vec<Vec<ExprTree>>,
        b: Vec<ExprTree>,
        grid: &GridSpec,
    ) -> Result<FinslerStructure> {
        check_square(&a, n, "metric matrix")?;
        check_covector(&b, n, "drift covector")?;
        let s = FinslerStructure {
            dimension: n,
            kind: StructureKind::Randers { a, b },
            source_text: None,
            min_fiber_norm: DEFAULT_MIN_FIBER_NORM,
        };
        s.check_base_matrix(grid)?;
        s.check_randers_drift(grid)?;
        Ok(s)
    }

    /// F = (a_ij(x) y^i y^j) / (b_i(x) y^i), defined where b_i y^i > 0.
    pub fn kropina(n: usize, a: Vec<Vec<ExprTree>>, b: Vec<ExprTree>) -> Result<FinslerStructure> {
        Self::kropina_on(n, a, b, &GridSpec::validation_default())
    }

    pub fn kropina_on(
        n: usize,
        a: Vec<Vec<ExprTree>>,
        b: Vec<ExprTree>,
        grid: &GridSpec,
    ) -> Result<FinslerStructure> {
        check_square(&a, n, "metric matrix")?;
        check_covector(&b, n, "drift covector")?;
        let s = FinslerStructure {
            dimension: n,
            kind: StructureKind::Kropina { a, b },
            source_text: None,
            min_fiber_norm: DEFAULT_MIN_FIBER_NORM,
        };
        s.check_base_matrix(grid)?;
        Ok(s)
    }

    /// Structure defined by a DSL expression for F.
    pub fn from_expression(text: &str, n: usize) -> Result<FinslerStructure> {
        let tree = parse_expression(text, n)?;
        Ok(FinslerStructure {
            dimension: n,
            kind: StructureKind::Expression { tree },
            source_text: Some(text.to_string()),
        min_fiber_norm: DEFAULT_MIN_FIBER_NORM,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &StructureKind {
        &self.kind
    }

    pub fn source_text(&self) -> Option<&str> {
        self.source_text.as_deref()
    }

    pub fn min_fiber_norm(&self) -> f64 {
        self.min_fiber_norm
    }

    fn check_sample(&self, sample: &TangentSample) -> Result<()> {
        if sample.dimension() != self.dimension {
            return Err(Error::argument(format!(
                "sample dimension {} does not match structure dimension {}",
                sample.dimension(),
                self.dimension
            )));
        }
        let norm = sample.y.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm < self.min_fiber_norm {
            return Err(Error::argument(
                "sample lies on the excluded zero section".to_string(),
            ));
        }
        Ok(())
    }

    /// Evaluates the base matrix a_ij at a base point.
    fn base_matrix_at(&self, x: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let n = self.dimension;
        let a = match &self.kind {
            StructureKind::Riemannian { a } => a,
            StructureKind::Randers { a, .. } => a,
            StructureKind::Kropina { a, .. } => a,
            _ => return Ok(None),
        };
        let y0 = vec![0.0; n];
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = a[i][j].eval(x, &y0)?;
            }
        }
        Ok(Some(m))
    }

    fn check_base_matrix(&self, grid: &GridSpec) -> Result<()> {
        let n = self.dimension;
        for sample in grid.samples(n)? {
            let Some(m) = self.base_matrix_at(&sample.x)? else {
                return Ok(());
            };
            for i in 0..n {
                for j in (i + 1)..n {
                    if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                        return Err(Error::Validation(format!(
                            "base matrix not symmetric at x={:?}",
                            sample.x
                        )));
                    }
                }
            }
            let eig = m.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
                return Err(Error::Validation(format!(
                    "base matrix not positive definite at x={:?}",
                    sample.x
                )));
            }
        }
        Ok(())
    }

    fn check_randers_drift(&self, grid: &GridSpec) -> Result<()> {
        let n = self.dimension;
        let StructureKind::Randers { b, .. } = &self.kind else {
            return Ok(());
        };
        let y0 = vec![0.0; n];
        for sample in grid.samples(n)? {
            let a = self
                .base_matrix_at(&sample.x)?
                .expect("randers structures carry a base matrix");
            let a_inv = a.clone().try_inverse().ok_or_else(|| {
                Error::singular("base matrix inverse while validating drift")
                    .at_sample(&sample.x, &sample.y)
            })?;
            let bv: Vec<f64> = b
                .iter()
                .map(|e| e.eval(&sample.x, &y0))
                .collect::<Result<_>>()?;
            let mut norm_sq = 0.0;
            for i in 0..n {
                for j in 0..n {
                    norm_sq += bv[i] * a_inv[(i, j)] * bv[j];
                }
            }
            if norm_sq >= 1.0 {
                return Err(Error::Validation(format!(
                    "drift a-norm {} >= 1 at x={:?}; structure rejected",
                    norm_sq.sqrt(),
                    sample.x
                )));
            }
        }
        Ok(())
    }

    /// F at a sample, plain value.
    pub fn evaluate_f(&self, sample: &TangentSample) -> Result<f64> {
        self.check_sample(sample)?;
        let value = match &self.kind {
            StructureKind::Euclidean => {
                sample.y.iter().map(|c| c * c).sum::<f64>().sqrt()
            }
            StructureKind::Riemannian { a } => {
                self.quadratic_value(a, sample)?.sqrt()
            }
            StructureKind::Randers { a, b } => {
                let q = self.quadratic_value(a, sample)?;
                let drift = self.covector_value(b, sample)?;
                q.sqrt() + drift
            }
            StructureKind::Kropina { a, b } => {
                let q = self.quadratic_value(a, sample)?;
                let drift = self.covector_value(b, sample)?;
                if drift <= 0.0 {
                    return Err(Error::domain(format!(
                        "drift pairing b_i y^i = {drift} not positive"
                    ))
                    .at_sample(&sample.x, &sample.y));
                }
                q / drift
            }
            StructureKind::Expression { tree } => tree
                .eval(&sample.x, &sample.y)
                .map_err(|e| e.at_sample(&sample.x, &sample.y))?,
        };
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::domain(format!("F evaluated to {value}"))
                .at_sample(&sample.x, &sample.y));
        }
        Ok(value)
    }

    fn quadratic_value(&self, a: &[Vec<ExprTree>], sample: &TangentSample) -> Result<f64> {
        let n = self.dimension;
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += a[i][j].eval(&sample.x, &sample.y)? * sample.y[i] * sample.y[j];
            }
        }
        if q <= 0.0 {
            return Err(Error::domain(format!(
                "quadratic form a_ij y^i y^j = {q} not positive"
            ))
            .at_sample(&sample.x, &sample.y));
        }
        Ok(q)
    }

    fn covector_value(&self, b: &[ExprTree], sample: &TangentSample) -> Result<f64> {
        let mut v = 0.0;
        for (i, e) in b.iter().enumerate() {
            v += e.eval(&sample.x, &sample.y)? * sample.y[i];
        }
        Ok(v)
    }

    /// Jet of F at the sample over all 2n variables (x first, then y).
    pub fn evaluate_jet(&self, sample: &TangentSample, order: usize) -> Result<Jet> {
        self.check_sample(sample)?;
        let n = self.dimension;
        let vars: Vec<Jet> = (0..2 * n)
            .map(|i| {
                let v = if i < n { sample.x[i] } else { sample.y[i - n] };
                Jet::variable(v, i, 2 * n, order)
            })
            .collect::<Result<_>>()?;
        let attach = |e: Error| e.at_sample(&sample.x, &sample.y);
        let jet = match &self.kind {
            StructureKind::Euclidean => {
                let mut q = Jet::constant(0.0, 2 * n, order);
                for yj in &vars[n..] {
                    q = &q + &(yj * yj);
                }
                q.sqrt().map_err(attach)?
            }
            StructureKind::Riemannian { a } => {
                self.quadratic_jet(a, n, &vars)?.sqrt().map_err(attach)?
            }
            StructureKind::Randers { a, b } => {
                let q = self.quadratic_jet(a, n, &vars)?;
                let drift = self.covector_jet(b, n, &vars)?;
                &q.sqrt().map_err(attach)? + &drift
            }
            StructureKind::Kropina { a, b } => {
                let q = self.quadratic_jet(a, n, &vars)?;
                let drift = self.covector_jet(b, n, &vars)?;
                if drift.value() <= 0.0 {
                    return Err(attach(Error::domain(format!(
                        "drift pairing b_i y^i = {} not positive",
                        drift.value()
                    ))));
                }
                q.div(&drift).map_err(attach)?
            }
            StructureKind::Expression { tree } => tree.eval_jet(n, &vars).map_err(attach)?,
        };
        if !jet.value().is_finite() || jet.value() <= 0.0 {
            return Err(attach(Error::domain(format!(
                "F evaluated to {}",
                jet.value()
            ))));
        }
        Ok(jet)
    }

    fn quadratic_jet(&self, a: &[Vec<ExprTree>], n: usize, vars: &[Jet]) -> Result<Jet> {
        let mut q = Jet::constant(0.0, vars[0].num_vars(), vars[0].max_order());
        for i in 0..n {
            for j in 0..n {
                let aij = a[i][j].eval_jet(n, vars)?;
                q = &q + &(&(&aij * &vars[n + i]) * &vars[n + j]);
            }
        }
        Ok(q)
    }

    fn covector_jet(&self, b: &[ExprTree], n: usize, vars: &[Jet]) -> Result<Jet> {
        let mut v = Jet::constant(0.0, vars[0].num_vars(), vars[0].max_order());
        for (i, e) in b.iter().enumerate() {
            v = &v + &(&e.eval_jet(n, vars)? * &vars[n + i]);
        }
        Ok(v)
    }

    /// Checks positive 1-homogeneity F(x, λy) = λ F(x, y) over the samples.
    /// Failures are reported, not raised.
    pub fn check_homogeneity(
        &self,
        samples: &[TangentSample],
        lambdas: &[f64],
        tolerance: f64,
    ) -> Result<ValidationReport> {
        if lambdas.iter().any(|&l| l <= 0.0) {
            return Err(Error::argument("homogeneity scales must be positive"));
        }
        let mut report = ValidationReport::new("homogeneity", tolerance);
        for sample in samples {
            let f = self.evaluate_f(sample)?;
            for &lambda in lambdas {
                let scaled = self.evaluate_f(&sample.scaled_fiber(lambda))?;
                let residual = (scaled - lambda * f).abs() / (lambda * f);
                report.record(residual, sample);
            }
        }
        Ok(report)
    }

    /// Checks positive definiteness of the fundamental tensor at each sample
    /// via its eigenvalues. Failures are reported, not raised.
    pub fn check_strong_convexity(
        &self,
        samples: &[TangentSample],
    ) -> Result<ValidationReport> {
        let mut report = ValidationReport::new("strong_convexity", 1e-12);
        for sample in samples {
            let g = geometry::fundamental_tensor(self, sample)?;
            let n = self.dimension;
            let m = DMatrix::from_fn(n, n, |i, j| g.get(&[i, j]));
            let eig = m.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            // residual is the positive-definiteness deficit against a
            // scale-relative floor (rank-deficient Hessians sit at ~0)
            let floor = 1e-10 * g.max_abs().max(1.0);
            let deficit = (floor - min).max(0.0);
            report.record(deficit, sample);
        }
        Ok(report)
    }

    /// Runs homogeneity and strong convexity over a grid, plus the Euler
    /// identity y^i dF/dy^i = F.
    pub fn validate(&self, grid: &GridSpec) -> Result<Vec<ValidationReport>> {
        let samples = grid.samples(self.dimension)?;
        let homogeneity = self.check_homogeneity(&samples, &[0.5, 2.0, 3.0], 1e-9)?;
        let convexity = self.check_strong_convexity(&samples)?;
        let mut euler = ValidationReport::new("euler_identity", 1e-9);
        for sample in &samples {
            let jet = self.evaluate_jet(sample, 1)?;
            let f = jet.value();
            let mut contraction = 0.0;
            for i in 0..self.dimension {
                contraction += sample.y[i] * jet.partial(&[self.dimension + i])?;
            }
            euler.record((contraction - f).abs() / f.abs().max(1.0), sample);
        }
        Ok(vec![homogeneity, convexity, euler])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_matrix(n: usize) -> Vec<Vec<ExprTree>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| ExprTree::number(if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn euclidean_norm_value_and_gradient() {
        let s = FinslerStructure::euclidean(2);
        let sample = TangentSample::new(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert_relative_eq!(s.evaluate_f(&sample).unwrap(), 5.0);
        let jet = s.evaluate_jet(&sample, 1).unwrap();
        assert_relative_eq!(jet.partial(&[2]).unwrap(), 0.6, epsilon = 1e-14);
    }

    #[test]
    fn randers_value_and_reduction_to_euclidean() {
        let b = vec![ExprTree::number(0.5), ExprTree::number(0.0)];
        let s = FinslerStructure::randers(2, identity_matrix(2), b).unwrap();
        let sample = TangentSample::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(s.evaluate_f(&sample).unwrap(), 1.5);

        let zero_b = vec![ExprTree::number(0.0), ExprTree::number(0.0)];
        let e = FinslerStructure::randers(2, identity_matrix(2), zero_b).unwrap();
        let sample = TangentSample::new(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert_relative_eq!(e.evaluate_f(&sample).unwrap(), 5.0);
    }

    #[test]
    fn randers_with_unit_drift_rejected() {
        let b = vec![ExprTree::number(1.2), ExprTree::number(0.0)];
        let err = FinslerStructure::randers(2, identity_matrix(2), b).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn homogeneity_passes_for_families_and_fails_for_quadratic() {
        let grid = GridSpec::validation_default();
        let samples = grid.samples(2).unwrap();

        let e = FinslerStructure::euclidean(2);
        let report = e.check_homogeneity(&samples, &[0.5, 2.0, 3.0], 1e-9).unwrap();
        assert!(report.passed, "residual {}", report.max_residual);

        let b = vec![ExprTree::number(0.5), ExprTree::number(0.0)];
        let r = FinslerStructure::randers(2, identity_matrix(2), b).unwrap();
        let report = r.check_homogeneity(&samples, &[0.5, 2.0, 3.0], 1e-12).unwrap();
        assert!(report.passed, "residual {}", report.max_residual);

        // y1^2 is 2-homogeneous: at lambda = 2 the relative residual is
        // |4 - 2|/2 = 1 wherever y1 != 0
        let q = FinslerStructure::from_expression("y1^2", 2).unwrap();
        let ok: Vec<TangentSample> = samples
            .iter()
            .filter(|s| s.y[0].abs() > 0.3)
            .cloned()
            .collect();
        let report = q.check_homogeneity(&ok, &[2.0], 1e-9).unwrap();
        assert!(!report.passed);
        assert_relative_eq!(report.max_residual, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn strong_convexity_detects_degenerate_structure() {
        let grid = GridSpec::validation_default();

        let e = FinslerStructure::euclidean(2);
        let samples = grid.samples(2).unwrap();
        assert!(e.check_strong_convexity(&samples).unwrap().passed);

        let b = vec![ExprTree::number(0.5), ExprTree::number(0.0)];
        let r = FinslerStructure::randers(2, identity_matrix(2), b).unwrap();
        assert!(r.check_strong_convexity(&samples).unwrap().passed);

        // F = y1 + y2 has a rank-deficient Hessian of F^2
        let degenerate = FinslerStructure::from_expression("y1 + y2", 2).unwrap();
        let positive: Vec<TangentSample> = samples
            .iter()
            .filter(|s| s.y[0] + s.y[1] > 0.3)
            .cloned()
            .collect();
        assert!(!degenerate.check_strong_convexity(&positive).unwrap().passed);
    }

    #[test]
    fn kropina_requires_positive_drift_pairing() {
        let b = vec![ExprTree::number(1.0), ExprTree::number(0.0)];
        let k = FinslerStructure::kropina(2, identity_matrix(2), b).unwrap();
        let good = TangentSample::new(vec![0.0, 0.0], vec![1.0, 0.5]).unwrap();
        assert!(k.evaluate_f(&good).is_ok());
        let bad = TangentSample::new(vec![0.0, 0.0], vec![-1.0, 0.5]).unwrap();
        assert!(matches!(k.evaluate_f(&bad), Err(Error::Domain { .. })));
    }

    #[test]
    fn zero_section_samples_rejected() {
        assert!(TangentSample::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(TangentSample::new(vec![0.0, 0.0], vec![1e-9, 0.0]).is_err());
    }

    #[test]
    fn riemannian_quadratic_third_verticals_vanish() {
        // for Riemannian structures F^2 is exactly quadratic in y
        let a = vec![
            vec![
                ExprTree::number(1.0),
                ExprTree::number(0.0),
            ],
            vec![
                ExprTree::number(0.0),
                parse_expression("x1^2", 2).unwrap(),
            ],
        ];
        let grid = GridSpec::validation_default().with_base_range(0.5, 2.0);
        let s = FinslerStructure::riemannian_on(2, a, &grid).unwrap();
        let sample = TangentSample::new(vec![2.0, 0.3], vec![0.7, 1.1]).unwrap();
        let f = s.evaluate_jet(&sample, 3).unwrap();
        let f2 = &f * &f;
        for i in 2..4 {
            for j in 2..4 {
                for k in 2..4 {
                    assert!(f2.partial(&[i, j, k]).unwrap().abs() <= 1e-10);
                }
            }
        }
    }
}
