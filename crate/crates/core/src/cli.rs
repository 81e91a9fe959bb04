//! The `qpr` command line.
//!
//! Exit codes: 0 success, 2 not reducible or unsatisfiable conditions,
//! 3 input error, 4 verification failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::coeff::Coefficient;
use crate::exec::ExecMode;
use crate::linalg::{parse_rational, rat_to_f64, RatMatrix, Rational};
use crate::parse::{lower, parse, parse_coefficient, parse_raw_system, render};
use crate::reduce::{
    classify, gamma_conditions, reduce, BPrimePolicy, ReduceError, ReduceOptions, ReducedSystem,
};
use crate::report::{self, Report};
use crate::system::QPSystem;
use crate::verify::{verify_reduction, VerifyOptions, DEFAULT_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_REDUCIBLE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "qpr",
    version,
    about = "Decouple one variable of a quasipolynomial ODE system"
)]
struct Cli {
    /// Print the machine-readable report instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Echo the canonical system and its matrices.
    Parse { file: PathBuf },
    /// Print the case label.
    Classify { file: PathBuf },
    /// Exponent vector Gamma and the uniform-Gamma conditions.
    Conditions {
        file: PathBuf,
        /// Parameter value, NAME=P/Q (repeatable).
        #[arg(long = "bind", value_name = "NAME=VALUE")]
        bind: Vec<String>,
    },
    /// Build the reduced system.
    Reduce {
        file: PathBuf,
        #[command(flatten)]
        opts: ReduceArgs,
        /// Write the reduced system here.
        #[arg(short = 'o', long = "output", value_name = "OUT.qp")]
        output: Option<PathBuf>,
    },
    /// Reduce, then check the reduction numerically.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        opts: ReduceArgs,
        /// Positive initial state, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        x0: Vec<String>,
        #[arg(long = "t-end", allow_hyphen_values = true)]
        t_end: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Previously emitted reduced system that must match the reduction.
        #[arg(long, value_name = "OUT.qp")]
        reduced: Option<PathBuf>,
        /// Run on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Full report: system, case, conditions and reduction.
    Export {
        file: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[command(flatten)]
        opts: ReduceArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Cvm,
    Completion,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    /// Target for the transformed exponent matrix.
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    /// Explicit transformation matrix as rational CSV (overrides --policy).
    #[arg(long, value_name = "CSVFILE")]
    qmt: Option<PathBuf>,
    /// Constant factor of the new time, e.g. a2.
    #[arg(long, value_name = "EXPR", allow_hyphen_values = true)]
    prefactor: Option<String>,
    /// Parameter value, NAME=P/Q (repeatable).
    #[arg(long = "bind", value_name = "NAME=VALUE")]
    bind: Vec<String>,
}

/// Result of one invocation: exit code and what goes to standard output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub output: String,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

/// Runs `qpr` with `argv` (including the program name).
pub fn execute<I, S>(argv: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            return Outcome {
                code,
                output: e.render().to_string(),
            };
        }
    };
    let json = cli.json;
    let (name, file) = match &cli.command {
        Command::Parse { file } => ("parse", file),
        Command::Classify { file } => ("classify", file),
        Command::Conditions { file, .. } => ("conditions", file),
        Command::Reduce { file, .. } => ("reduce", file),
        Command::Verify { file, .. } => ("verify", file),
        Command::Export { file, .. } => ("export", file),
    };
    let shown = file.display().to_string();
    let bytes = match fs::read(file) {
        Ok(b) => b,
        Err(e) => {
            let mut r = Report::new(name, &shown, b"");
            return finish(&mut r, Err(Failure::input(format!("{shown}: {e}"))), json);
        }
    };
    let mut r = Report::new(name, &shown, &bytes);
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let result = match &cli.command {
        Command::Parse { .. } => cmd_parse(&mut r, &text),
        Command::Classify { .. } => cmd_classify(&mut r, &text),
        Command::Conditions { bind, .. } => cmd_conditions(&mut r, &text, bind),
        Command::Reduce { opts, output, .. } => cmd_reduce(&mut r, &text, opts, output.as_deref()),
        Command::Verify {
            opts,
            x0,
            t_end,
            tol,
            reduced,
            sequential,
            ..
        } => {
            let mode = if *sequential {
                ExecMode::Sequential
            } else {
                ExecMode::Parallel
            };
            cmd_verify(
                &mut r,
                &text,
                opts,
                x0,
                *t_end,
                *tol,
                reduced.as_deref(),
                mode,
            )
        }
        Command::Export { opts, format, .. } => {
            let res = cmd_export(&mut r, &text, opts);
            if res.is_ok() {
                r.text = match format {
                    Format::Json => r.to_json(),
                    Format::Text => r.to_text(),
                };
                let code = r.exit_code;
                return Outcome {
                    code,
                    output: r.text,
                };
            }
            res
        }
    };
    finish(&mut r, result, json)
}

fn finish(r: &mut Report, result: Result<(), Failure>, json: bool) -> Outcome {
    if let Err(f) = result {
        r.exit_code = f.code;
        r.set("error", json!({ "message": f.message }));
        r.line(format!("error: {}", f.message));
    }
    let output = if json { r.to_json() } else { r.text.clone() };
    Outcome {
        code: r.exit_code,
        output,
    }
}

fn load(r: &Report, text: &str) -> Result<QPSystem, Failure> {
    let ast = parse(text).map_err(|e| Failure::input(format!("{}:{e}", r.file)))?;
    lower(&ast).map_err(|e| Failure::input(format!("{}: {e}", r.file)))
}

fn bindings(sys: &QPSystem, bind: &[String]) -> Result<BTreeMap<String, Rational>, Failure> {
    let mut out = BTreeMap::new();
    for b in bind {
        let (name, value) = b
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("--bind expects NAME=VALUE, got `{b}`")))?;
        let name = name.trim();
        if !sys.params.iter().any(|p| p == name) {
            return Err(Failure::input(format!(
                "--bind: `{name}` is not a declared parameter"
            )));
        }
        let v = parse_rational(value.trim())
            .ok_or_else(|| Failure::input(format!("--bind: `{value}` is not a rational number")))?;
        out.insert(name.to_string(), v);
    }
    Ok(out)
}

fn bound_system(
    r: &Report,
    text: &str,
    bind: &[String],
) -> Result<(QPSystem, BTreeMap<String, Rational>), Failure> {
    let sys = load(r, text)?;
    let values = bindings(&sys, bind)?;
    if values.is_empty() {
        return Ok((sys, values));
    }
    let bound = sys
        .substitute(&values)
        .and_then(|s| s.normalize())
        .map_err(|e| Failure::input(format!("{} after binding: {e}", r.file)))?;
    Ok((bound, values))
}

fn read_qmt(path: &Path) -> Result<RatMatrix, Failure> {
    let shown = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::input(format!("{shown}: {e}")))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::input(format!("{shown}: {e}")))?;
        let row = record
            .iter()
            .map(|f| {
                parse_rational(f).ok_or_else(|| {
                    Failure::input(format!("{shown}:{}: `{f}` is not a rational number", i + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(Failure::input(format!("{shown}: expected a square matrix")));
    }
    Ok(RatMatrix::from_rows(rows))
}

fn reduce_options(
    opts: &ReduceArgs,
    sys: &QPSystem,
    values: &BTreeMap<String, Rational>,
) -> Result<ReduceOptions, Failure> {
    let policy = match (&opts.qmt, opts.policy) {
        (Some(path), _) => BPrimePolicy::Explicit(read_qmt(path)?),
        (None, Some(Policy::Cvm)) => BPrimePolicy::CvmIdentity,
        (None, _) => BPrimePolicy::Completion,
    };
    let prefactor = match &opts.prefactor {
        Some(expr) => {
            let mut all = sys.params.clone();
            all.extend(values.keys().cloned());
            let c = parse_coefficient(expr, &all)
                .map_err(|e| Failure::input(format!("--prefactor: {e}")))?;
            let c = c
                .substitute(values)
                .map_err(|e| Failure::input(format!("--prefactor: {e}")))?;
            if c.is_zero() {
                return Err(Failure::input("--prefactor must be nonzero"));
            }
            c
        }
        None => Coefficient::one(),
    };
    Ok(ReduceOptions { policy, prefactor })
}

fn cmd_parse(r: &mut Report, text: &str) -> Result<(), Failure> {
    let sys = load(r, text)?;
    r.set("system", report::system(&sys));
    r.text.push_str(&render(&sys));
    r.line(format!("B = {}", matrix_text(&sys.b)));
    let a: Vec<String> = sys
        .a
        .iter()
        .map(|row| {
            format!(
                "[{}]",
                row.iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    r.line(format!("A = [{}]", a.join(", ")));
    r.line(format!(
        "lambda = [{}]",
        sys.lambda
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    ));
    Ok(())
}

fn matrix_text(m: &RatMatrix) -> String {
    let rows: Vec<String> = (0..m.rows())
        .map(|i| {
            format!(
                "[{}]",
                m.row(i)
                    .iter()
                    .map(crate::linalg::rat_to_short)
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn cmd_classify(r: &mut Report, text: &str) -> Result<(), Failure> {
    let sys = load(r, text)?;
    let case = classify(&sys);
    r.set("case", json!(case.to_string()));
    r.line(case.to_string());
    Ok(())
}

fn cmd_conditions(r: &mut Report, text: &str, bind: &[String]) -> Result<(), Failure> {
    let (sys, _) = bound_system(r, text, bind)?;
    let case = classify(&sys);
    r.set("case", json!(case.to_string()));
    let esys = sys.exp_scale();
    let cond = gamma_conditions(&esys);
    r.set("conditions", report::conditions(&esys.gamma, &cond));
    r.line(format!("case: {case}"));
    for (j, g) in esys.gamma.iter().enumerate() {
        r.line(format!("Gamma[{}] = {g}", j + 1));
    }
    for e in &cond.equations {
        r.line(format!("{e} = 0"));
    }
    if let Some(solved) = cond.solved_form() {
        for (k, v) in solved {
            r.line(format!("solved: {k} = {v}"));
        }
    }
    r.line(format!("verdict: {}", cond.satisfiable));
    if cond.satisfiable == crate::reduce::Satisfiability::No {
        r.exit_code = EXIT_NOT_REDUCIBLE;
    }
    Ok(())
}

fn run_reduce(
    r: &mut Report,
    sys: &QPSystem,
    opts: &ReduceOptions,
) -> Result<crate::reduce::ReductionResult, Failure> {
    r.set("case", json!(classify(sys).to_string()));
    match reduce(sys, opts) {
        Ok(result) => {
            r.set("reduction", report::reduction(&result));
            Ok(result)
        }
        Err(ReduceError::NotReducible(w)) => {
            r.set("not_reducible", report::witness(&w));
            Err(Failure {
                code: EXIT_NOT_REDUCIBLE,
                message: format!("not reducible: {w}"),
            })
        }
        Err(ReduceError::ConditionsUnsatisfied(c)) => {
            let esys = sys.exp_scale();
            r.set("conditions", report::conditions(&esys.gamma, &c));
            Err(Failure {
                code: EXIT_NOT_REDUCIBLE,
                message: format!("conditions are {}", c.satisfiable),
            })
        }
        Err(e @ ReduceError::PolicyInfeasible { .. }) => Err(Failure {
            code: EXIT_NOT_REDUCIBLE,
            message: e.to_string(),
        }),
        Err(e) => Err(Failure::input(e.to_string())),
    }
}

fn cmd_reduce(
    r: &mut Report,
    text: &str,
    args: &ReduceArgs,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let (sys, values) = bound_system(r, text, &args.bind)?;
    let opts = reduce_options(args, &sys, &values)?;
    let result = run_reduce(r, &sys, &opts)?;
    let out = report::reduced_text(&result.reduced);
    match output {
        Some(path) => {
            fs::write(path, &out)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            r.line(format!("case: {}", result.case));
            r.line(format!("wrote {}", path.display()));
        }
        None => r.text.push_str(&out),
    }
    r.line(format!("# {}", result.quadrature_note));
    Ok(())
}

fn parse_state(x0: &[String]) -> Result<Vec<f64>, Failure> {
    x0.iter()
        .map(|s| {
            let s = s.trim();
            parse_rational(s)
                .map(|r| rat_to_f64(&r))
                .or_else(|| s.parse::<f64>().ok())
                .ok_or_else(|| Failure::input(format!("--x0: `{s}` is not a number")))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    r: &mut Report,
    text: &str,
    args: &ReduceArgs,
    x0: &[String],
    t_end: f64,
    tol: f64,
    reduced_file: Option<&Path>,
    mode: ExecMode,
) -> Result<(), Failure> {
    let (sys, values) = bound_system(r, text, &args.bind)?;
    let unbound = sys.used_params();
    if !unbound.is_empty() {
        return Err(Failure::input(format!(
            "unbound parameters: {} (use --bind)",
            unbound.join(", ")
        )));
    }
    let x0 = parse_state(x0)?;
    if x0.len() != sys.n() {
        return Err(Failure::input(format!(
            "--x0 has {} values, system has {} variables",
            x0.len(),
            sys.n()
        )));
    }
    if tol.is_nan() || tol <= 0.0 || !t_end.is_finite() {
        return Err(Failure::input("--tol must be positive and --t-end finite"));
    }
    let opts = reduce_options(args, &sys, &values)?;
    let result = run_reduce(r, &sys, &opts)?;
    if let Some(path) = reduced_file {
        let emitted = fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        // The emitted file may predate the bindings, so bind it too.
        let parsed = parse_raw_system(&emitted)
            .map_err(|e| Failure::input(format!("{}:{e}", path.display())))?
            .substitute(&values)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let matches = match &result.reduced {
            ReducedSystem::Autonomous(s) => s.same_vector_field(&parsed),
            ReducedSystem::Exponential(s) => s.autonomous_part().same_vector_field(&parsed),
        };
        r.set("reduced_file_matches", Value::Bool(matches));
        if !matches {
            return Err(Failure {
                code: EXIT_VERIFY,
                message: format!("{} does not match the reduced system", path.display()),
            });
        }
    }
    let vopts = VerifyOptions {
        tol,
        mode,
        ..VerifyOptions::default()
    };
    let report =
        verify_reduction(&sys, &result, &BTreeMap::new(), &x0, t_end, &vopts).map_err(|e| {
            Failure {
                code: EXIT_VERIFY,
                message: format!("verification failed: {e}"),
            }
        })?;
    r.set("verification", report::verification(&report));
    r.line(format!("case: {}", result.case));
    r.line(format!("max_rel_error: {:e}", report.max_rel_error));
    r.line(format!("quadrature_error: {:e}", report.quadrature_error));
    if let Some(d) = report.constants_drift {
        r.line(format!("constants_drift: {d:e}"));
    }
    r.line(format!("residual: {:e}", report.residual));
    r.line(format!("fd_residual: {:e}", report.fd_residual));
    r.line(format!("steps: {}", report.steps_taken));
    if report.passed() {
        r.line("verification passed");
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!(
                "verification failed: errors exceed {:e}",
                report.threshold()
            ),
        })
    }
}

fn cmd_export(r: &mut Report, text: &str, args: &ReduceArgs) -> Result<(), Failure> {
    let (sys, values) = bound_system(r, text, &args.bind)?;
    let opts = reduce_options(args, &sys, &values)?;
    r.set("system", report::system(&sys));
    let esys = sys.exp_scale();
    r.set(
        "conditions",
        report::conditions(&esys.gamma, &gamma_conditions(&esys)),
    );
    if let Err(f) = run_reduce(r, &sys, &opts) {
        r.set(
            "reduction_error",
            json!({ "message": f.message, "exit_code": f.code }),
        );
    }
    Ok(())
}
