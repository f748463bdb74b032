//! TOML run configuration: structure, lift coefficients, vector fields,
//! grid, tolerances, mode and seed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use finsler_core::conformal::ClassifyTolerances;
use finsler_core::expr::ExprTree;
use finsler_core::finsler::{parse_covector, parse_matrix};
use finsler_core::lie::VectorFieldOnM;
use finsler_core::lift::LiftCoefficients;
use finsler_core::suites::{EvalMode, SuiteConfig};
use finsler_core::{FinslerStructure, GridSpec};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub seed: u64,
    pub structure: StructureSection,
    pub lift: LiftSection,
    #[serde(default)]
    pub fields: Vec<FieldSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub suite: SuiteSection,
}

fn default_mode() -> String {
    "jet".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSection {
    pub kind: String,
    pub dimension: usize,
    #[serde(default)]
    pub a: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub b: Option<Vec<String>>,
    #[serde(default)]
    pub expression: Option<String>,
    /// Base range used when validating the structure axioms; defaults to the
    /// grid's base range.
    #[serde(default)]
    pub validation_range: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(default)]
    pub name: String,
    pub components: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_points")]
    pub base_points_per_axis: usize,
    #[serde(default = "default_range")]
    pub base_range: [f64; 2],
    #[serde(default = "default_directions")]
    pub fiber_directions: usize,
    #[serde(default = "default_radii")]
    pub fiber_radii: Vec<f64>,
    #[serde(default)]
    pub jitter: bool,
}

fn default_points() -> usize {
    3
}
fn default_range() -> [f64; 2] {
    [-1.0, 1.0]
}
fn default_directions() -> usize {
    8
}
fn default_radii() -> Vec<f64> {
    vec![0.7, 1.3]
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            base_points_per_axis: default_points(),
            base_range: default_range(),
            fiber_directions: default_directions(),
            fiber_radii: default_radii(),
            jitter: false,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub fd_step: Option<f64>,
    pub flow_step: Option<f64>,
    pub bracket_samples: Option<usize>,
    pub lie_samples: Option<usize>,
}

/// Everything a command needs, resolved and validated.
pub struct RunConfig {
    pub structure: FinslerStructure,
    pub coefficients: LiftCoefficients,
    pub fields: Vec<VectorFieldOnM>,
    pub grid: GridSpec,
    pub mode: EvalMode,
    pub seed: u64,
    pub classify_tolerances: ClassifyTolerances,
    pub suite_config: SuiteConfig,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: &Path, mode_override: Option<EvalMode>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let file: ConfigFile =
        toml::from_str(&text).map_err(|e| config_err(format!("config parse error: {e}")))?;
    resolve(file, mode_override)
}

pub fn resolve(
    file: ConfigFile,
    mode_override: Option<EvalMode>,
) -> Result<RunConfig, CliError> {
    let n = file.structure.dimension;
    if !(2..=4).contains(&n) {
        return Err(config_err(format!("dimension {n} out of range [2, 4]")));
    }

    let mode = match mode_override {
        Some(m) => m,
        None => match file.mode.as_str() {
            "jet" => EvalMode::Jet,
            "fd" | "finite_difference" => EvalMode::FiniteDifference,
            other => return Err(config_err(format!("unknown mode '{other}'"))),
        },
    };

    if file.grid.fiber_radii.is_empty() || file.grid.fiber_directions == 0 {
        return Err(config_err("grid must be nonempty"));
    }
    let grid = GridSpec {
        base_points_per_axis: file.grid.base_points_per_axis,
        base_range: (file.grid.base_range[0], file.grid.base_range[1]),
        fiber_directions: file.grid.fiber_directions,
        fiber_radii: file.grid.fiber_radii.clone(),
        seed: file.seed,
        jitter: file.grid.jitter,
    };

    for (name, value) in &file.tolerances {
        if *value <= 0.0 {
            return Err(config_err(format!("tolerance '{name}' must be positive")));
        }
    }

    let validation_grid = {
        let mut g = GridSpec::validation_default();
        let range = file
            .structure
            .validation_range
            .unwrap_or(file.grid.base_range);
        g.base_range = (range[0], range[1]);
        g
    };
    let structure = build_structure(&file.structure, &validation_grid)?;

    // validate the structure axioms before running anything
    let reports = structure
        .validate(&validation_grid)
        .map_err(|e| config_err(format!("structure validation failed to run: {e}")))?;
    for report in &reports {
        if !report.passed {
            return Err(config_err(format!(
                "structure fails {} check: residual {:e} exceeds {:e}",
                report.name, report.max_residual, report.tolerance
            )));
        }
    }

    let mut fields = Vec::with_capacity(file.fields.len());
    for (slot, section) in file.fields.iter().enumerate() {
        let refs: Vec<&str> = section.components.iter().map(String::as_str).collect();
        let name = if section.name.is_empty() {
            format!("field_{slot}")
        } else {
            section.name.clone()
        };
        let field = VectorFieldOnM::from_components(&refs, n)
            .map_err(|e| config_err(format!("field '{name}': {e}")))?
            .named(&name);
        fields.push(field);
    }

    let classify_tolerances = ClassifyTolerances {
        residual: file.tolerances.get("residual").copied().unwrap_or(1e-6),
        spread: file.tolerances.get("spread").copied().unwrap_or(1e-6),
        omega: file.tolerances.get("omega").copied().unwrap_or(1e-6),
    };

    let mut suite_config = SuiteConfig {
        mode,
        tolerance_overrides: file.tolerances.clone(),
        ..SuiteConfig::default()
    };
    if let Some(v) = file.suite.fd_step {
        suite_config.fd_step = v;
    }
    if let Some(v) = file.suite.flow_step {
        suite_config.flow_step = v;
    }
    if let Some(v) = file.suite.bracket_samples {
        suite_config.bracket_samples = v;
    }
    if let Some(v) = file.suite.lie_samples {
        suite_config.lie_samples = v;
    }

    Ok(RunConfig {
        structure,
        coefficients: LiftCoefficients::new(file.lift.alpha, file.lift.beta, file.lift.gamma),
        fields,
        grid,
        mode,
        seed: file.seed,
        classify_tolerances,
        suite_config,
    })
}

fn build_structure(
    section: &StructureSection,
    grid: &GridSpec,
) -> Result<FinslerStructure, CliError> {
    let n = section.dimension;
    let matrix = |what: &str| -> Result<Vec<Vec<ExprTree>>, CliError> {
        let rows = section
            .a
            .as_ref()
            .ok_or_else(|| config_err(format!("{what} structures need the 'a' matrix")))?;
        parse_matrix(rows, n).map_err(|e| config_err(format!("matrix entry: {e}")))
    };
    let covector = |what: &str| -> Result<Vec<ExprTree>, CliError> {
        let entries = section
            .b
            .as_ref()
            .ok_or_else(|| config_err(format!("{what} structures need the 'b' covector")))?;
        parse_covector(entries, n).map_err(|e| config_err(format!("covector entry: {e}")))
    };
    let built = match section.kind.as_str() {
        "euclidean" => Ok(FinslerStructure::euclidean(n)),
        "riemannian" => FinslerStructure::riemannian_on(n, matrix("riemannian")?, grid),
        "randers" => FinslerStructure::randers_on(n, matrix("randers")?, covector("randers")?, grid),
        "kropina" => FinslerStructure::kropina_on(n, matrix("kropina")?, covector("kropina")?, grid),
        "expression" => {
            let text = section
                .expression
                .as_deref()
                .ok_or_else(|| config_err("expression structures need 'expression'"))?;
            FinslerStructure::from_expression(text, n)
        }
        other => return Err(config_err(format!("unknown structure kind '{other}'"))),
    };
    built.map_err(|e| config_err(format!("structure construction: {e}")))
}
