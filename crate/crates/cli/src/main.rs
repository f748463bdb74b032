//! Command-line surface: `verify` runs the identity suites over a grid,
//! `classify` classifies the configured vector fields against the lift
//! metric, and `tensors` dumps every connection-level tensor at one sample.
//!
//! Exit codes: 0 all checks pass, 1 check failures, 2 configuration error,
//! 3 runtime domain error.

mod config;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use finsler_core::conformal;
use finsler_core::geometry;
use finsler_core::lift::classify_lift;
use finsler_core::suites::{self, EvalMode};
use finsler_core::{fd, Error as CoreError, TangentSample};

use config::RunConfig;
use report::Report;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn runtime(e: CoreError) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Jet,
    Fd,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> EvalMode {
        match m {
            ModeArg::Jet => EvalMode::Jet,
            ModeArg::Fd => EvalMode::FiniteDifference,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "finsler",
    version,
    about = "Finsler tangent-bundle geometry: identity verification, tensor dumps and conformal classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every structural identity check over the configured grid.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Tensor evaluation mode (overrides the config).
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the configured vector fields against the lift metric.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump every tensor at one tangent sample.
    Tensors {
        #[arg(long)]
        config: PathBuf,
        /// Base coordinates, comma separated.
        #[arg(long)]
        x: String,
        /// Fiber coordinates, comma separated.
        #[arg(long)]
        y: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let start = Instant::now();
    let outcome = run(cli);
    let code = match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    eprintln!("timing_ms={}", start.elapsed().as_millis());
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Verify { config, mode, out } => {
            let run_config = config::load(&config, mode.map(Into::into))?;
            cmd_verify(&run_config, out.as_deref())
        }
        Command::Classify { config, out } => {
            let run_config = config::load(&config, None)?;
            cmd_classify(&run_config, out.as_deref())
        }
        Command::Tensors {
            config,
            x,
            y,
            mode,
            out,
        } => {
            let run_config = config::load(&config, mode.map(Into::into))?;
            cmd_tensors(&run_config, &x, &y, out.as_deref())
        }
    }
}

fn emit(report: &mut Report, out: Option<&std::path::Path>) -> Result<i32, CliError> {
    report.finalize();
    let body = report.to_toml();
    match out {
        Some(path) => std::fs::write(path, &body)
            .map_err(|e| CliError::Runtime(format!("cannot write report: {e}")))?,
        None => print!("{body}"),
    }
    Ok(if report.overall_passed() { 0 } else { 1 })
}

fn cmd_verify(run: &RunConfig, out: Option<&std::path::Path>) -> Result<i32, CliError> {
    let samples = run
        .grid
        .samples(run.structure.dimension())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let checks = suites::identity_suite(
        &run.structure,
        &samples,
        &run.fields,
        run.coefficients,
        &run.suite_config,
    )
    .map_err(runtime)?;
    let mut report = Report::new("verify", run.mode.name(), run.seed);
    report.push_identity_checks(&checks);
    emit(&mut report, out)
}

fn cmd_classify(run: &RunConfig, out: Option<&std::path::Path>) -> Result<i32, CliError> {
    if run.coefficients.is_singular() {
        return Err(CliError::Config(
            "lift metric singular: alpha*gamma - beta^2 = 0".to_string(),
        ));
    }
    let samples = run
        .grid
        .samples(run.structure.dimension())
        .map_err(|e| CliError::Config(e.to_string()))?;
    if run.fields.is_empty() {
        return Err(CliError::Config(
            "classify needs at least one vector field in the config".to_string(),
        ));
    }
    let suite = conformal::theorem_suite(
        &run.structure,
        &run.fields,
        run.coefficients,
        &samples,
        &run.classify_tolerances,
    )
    .map_err(runtime)?;

    let mut report = Report::new("classify", run.mode.name(), run.seed);
    report.push_classifications(&suite);
    report.push_check(
        "homothety_property",
        "every conformal complete lift is homothetic",
        suite.conformal_nonhomothetic_count as f64,
        0.5,
    );
    let lie_n_max = suite
        .fields
        .iter()
        .filter_map(|f| f.lie_nonlinear_max)
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
    if let Some(worst) = lie_n_max {
        report.push_check(
            "conformal_nonlinear_support",
            "L_V N^h_i = 0 for Killing/homothetic fields",
            worst,
            1e-6,
        );
    }
    let mixed_max = suite
        .fields
        .iter()
        .filter_map(|f| f.mixed_connection_max)
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
    if let Some(worst) = mixed_max {
        report.push_check(
            "conformal_connection_support",
            "y^k (g_ai L_V F^a_jk + g_aj L_V F^a_ik) = 0 for Killing/homothetic fields",
            worst,
            1e-6,
        );
    }
    let vertical_max = suite
        .fields
        .iter()
        .filter(|f| {
            matches!(
                f.report.verdict,
                conformal::Verdict::Killing | conformal::Verdict::Homothetic
            )
        })
        .map(|f| f.report.vertical_gradient_max)
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
    if let Some(worst) = vertical_max {
        report.push_check(
            "factor_fiber_independence",
            "dOmega/dy = 0 for Killing/homothetic fields",
            worst,
            1e-6,
        );
    }
    emit(&mut report, out)
}

fn parse_csv(text: &str, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values =
        values.map_err(|e| CliError::Config(format!("cannot parse {what} '{text}': {e}")))?;
    if values.len() != n {
        return Err(CliError::Config(format!(
            "{what} needs {n} components, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn cmd_tensors(
    run: &RunConfig,
    x: &str,
    y: &str,
    out: Option<&std::path::Path>,
) -> Result<i32, CliError> {
    let n = run.structure.dimension();
    let x = parse_csv(x, n, "--x")?;
    let y = parse_csv(y, n, "--y")?;
    let sample =
        TangentSample::new(x, y).map_err(|e| CliError::Config(e.to_string()))?;

    let mut report = Report::new("tensors", run.mode.name(), run.seed);
    let dump = match run.mode {
        EvalMode::Jet => {
            let bundle = geometry::cartan_connection(&run.structure, &sample).map_err(runtime)?;
            let curv = bundle.hh_curvature().map_err(runtime)?;
            report::tensor_dump(
                &sample.x,
                &sample.y,
                &bundle.g,
                &bundle.g_inv,
                &bundle.cartan,
                &bundle.spray,
                &bundle.nonlinear,
                &bundle.connection,
                &curv.r,
                &curv.hh,
            )
        }
        EvalMode::FiniteDifference => {
            let s = &run.structure;
            let h = run.suite_config.fd_step;
            let g = fd::fundamental_tensor(s, &sample, h).map_err(runtime)?;
            let g_inv = fd::metric_inverse(s, &sample, h).map_err(runtime)?;
            let cartan = fd::cartan_tensor(s, &sample, h).map_err(runtime)?;
            let spray = fd::spray_coefficients(s, &sample, h).map_err(runtime)?;
            let nonlinear = fd::nonlinear_connection(s, &sample, h).map_err(runtime)?;
            let connection = fd::cartan_connection_coeffs(s, &sample, h).map_err(runtime)?;
            let curv = fd::hh_curvature(s, &sample, h).map_err(runtime)?;
            report::tensor_dump(
                &sample.x,
                &sample.y,
                &g,
                &g_inv,
                &cartan,
                &spray,
                &nonlinear,
                &connection,
                &curv.r,
                &curv.hh,
            )
        }
    };
    // deflection serves as the dump's own sanity check record
    let bundle = geometry::cartan_connection(&run.structure, &sample).map_err(runtime)?;
    report.push_check(
        "deflection",
        "y^m F_m^h_i = N^h_i",
        bundle.deflection_residual(),
        1e-8,
    );
    let _ = classify_lift(&bundle.g, run.coefficients).map_err(runtime)?;
    report.tensors = Some(dump);
    emit(&mut report, out)
}
