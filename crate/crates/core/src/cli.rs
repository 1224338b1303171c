//! Command-line front end.
//!
//! Every command writes one report. JSON reports carry a schema tag, the
//! library version, the resolved configuration and the result; CSV reports
//! carry a fixed header per subcommand. `--threads` never enters a report,
//! so reports are byte-identical across thread counts.
//!
//! Exit codes: 0 success, 1 usage, IO or library error, 2 verification
//! failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::brownian::{self, KernelEvaluator};
use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::exact::{self, Boundary, Domain, ExactOptions, Kernel, Mode, WindowPolicy};
use crate::frame::Frame;
use crate::mc;
use crate::par;
use crate::reduite::reduite_for;
use crate::verify::{self, InteriorGrid};
use crate::walk_model::{self, catalog, StepDistribution};

pub const REPORT_SCHEMA: &str = "cone-walker.report/1";

#[derive(Parser, Debug)]
#[command(name = "cone-walker", version, about = "Random walks killed at the boundary of a cone")]
pub struct Cli {
    /// Worker threads; 0 uses the library default. Never affects results.
    #[arg(long, env = "CONE_WALKER_THREADS", default_value_t = 0, global = true)]
    pub threads: usize,
    /// Report format. Defaults to csv for series commands, json otherwise.
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Write the report here; the summary line then goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Step-law checks.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Cone geometry.
    #[command(subcommand)]
    Cone(ConeCmd),
    /// Closed-form réduite.
    #[command(subcommand)]
    Reduite(ReduiteCmd),
    /// Exact layer propagation.
    #[command(subcommand)]
    Exact(ExactCmd),
    /// Monte Carlo estimators.
    #[command(subcommand)]
    Mc(McCmd),
    /// Brownian motion killed at the boundary.
    #[command(subcommand)]
    Bm(BmCmd),
    /// Numerical checks of the limit theorems.
    #[command(subcommand)]
    Verify(VerifyCmd),
}

/// Comma-separated lattice point, e.g. `1,1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Point(pub Vec<i64>);

impl FromStr for Point {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_list(s).map(Point)
    }
}

/// Comma-separated real point.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RealPoint(pub Vec<f64>);

impl FromStr for RealPoint {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_list(s).map(RealPoint)
    }
}

/// Comma-separated list of horizons.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct NList(pub Vec<u64>);

impl FromStr for NList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_list(s).map(NList)
    }
}

/// Comma-separated list of reals.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RealList(pub Vec<f64>);

impl FromStr for RealList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_list(s).map(RealList)
    }
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| format!("cannot parse '{t}' in '{s}'"))
        })
        .collect()
}

fn parse_window(s: &str) -> std::result::Result<WindowPolicy, String> {
    WindowPolicy::parse(s).map_err(|e| e.to_string())
}

fn parse_epsilon(s: &str) -> std::result::Result<f64, String> {
    let e: f64 = s.parse().map_err(|_| format!("cannot parse epsilon '{s}'"))?;
    if e > 0.0 && e < 0.5 {
        Ok(e)
    } else {
        Err(format!("epsilon must lie in (0, 1/2), got {e}"))
    }
}

fn parse_samples(s: &str) -> std::result::Result<u64, String> {
    let v = s
        .parse::<f64>()
        .ok()
        .filter(|v| v.fract() == 0.0 && *v >= 1.0 && *v <= 1e15)
        .ok_or_else(|| format!("samples must be a positive integer, got '{s}'"))?;
    Ok(v as u64)
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    match parse_list::<f64>(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected two comma-separated numbers, got '{s}'")),
    }
}

fn parse_n_pair(s: &str) -> std::result::Result<(u64, u64), String> {
    match parse_list::<u64>(s)?.as_slice() {
        [a, b] if a < b => Ok((*a, *b)),
        _ => Err(format!("expected an increasing pair lo,hi, got '{s}'")),
    }
}

/// Model and cone inputs. Either a JSON file path or `builtin:NAME`.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Inputs {
    /// Model file, or builtin:simple1d|nsew|lazy|diagonal.
    #[arg(long)]
    pub model: String,
    /// Cone file, or builtin:orthant<d>|weyl<d>|full<d>.
    #[arg(long)]
    pub cone: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConeInput {
    /// Cone file, or builtin:orthant<d>|weyl<d>|full<d>.
    #[arg(long)]
    pub cone: String,
}

#[derive(Subcommand, Debug)]
pub enum ModelCmd {
    /// Drift, covariance, period and sublattice of a step law.
    Validate {
        #[arg(long)]
        model: String,
        /// Also evaluate the reverse-reachability hint for this cone.
        #[arg(long)]
        cone: Option<String>,
    },
    /// Symmetric decorrelating map and the image law.
    Decorrelate {
        #[arg(long)]
        model: String,
    },
}

#[derive(Subcommand, Debug)]
pub enum ConeCmd {
    /// Facets, exponent and membership of an optional point.
    Info {
        #[command(flatten)]
        cone: ConeInput,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<RealPoint>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ReduiteCmd {
    /// Value and gradient at a point.
    Eval {
        #[command(flatten)]
        cone: ConeInput,
        #[arg(long, allow_hyphen_values = true)]
        point: RealPoint,
    },
    /// Finite-difference Laplacian over interior samples.
    Check {
        #[command(flatten)]
        cone: ConeInput,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        h: f64,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExactArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, allow_hyphen_values = true)]
    pub start: Point,
    #[arg(long)]
    pub n: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Float)]
    pub mode: ModeArg,
    /// auto, full or radius:R.
    #[arg(long, value_parser = parse_window, default_value = "auto")]
    #[serde(serialize_with = "ser_window")]
    pub window: WindowPolicy,
}

fn ser_window<S: serde::Serializer>(w: &WindowPolicy, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&match w {
        WindowPolicy::Full => "full".to_string(),
        WindowPolicy::Radius(r) => format!("radius:{r}"),
        WindowPolicy::Auto { delta } => format!("auto:{delta:e}"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Float,
    Rational,
}

#[derive(Subcommand, Debug)]
pub enum ExactCmd {
    /// P(τ > n) for n = 0..=N.
    Survival(ExactArgs),
    /// P(x + S(n) = y, τ > n) for n = 0..=N.
    Local {
        #[command(flatten)]
        args: ExactArgs,
        #[arg(long, allow_hyphen_values = true)]
        end: Point,
    },
    /// Partial sums of the Green function.
    Green {
        #[command(flatten)]
        args: ExactArgs,
        #[arg(long, allow_hyphen_values = true)]
        end: Point,
    },
    /// E[u(x + S(n)); τ > n] for n = 0..=N.
    HarmonicV(ExactArgs),
    /// Number of paths of each length n = 0..=N from start to end.
    Count {
        #[command(flatten)]
        args: ExactArgs,
        #[arg(long, allow_hyphen_values = true)]
        end: Point,
        /// Let paths touch the boundary.
        #[arg(long)]
        closed: bool,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct McArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub n: u64,
    #[arg(long, value_parser = parse_samples, default_value = "100000")]
    pub samples: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum McCmd {
    /// P(τ > n).
    Survival {
        #[command(flatten)]
        args: McArgs,
        #[arg(long, allow_hyphen_values = true)]
        start: Point,
    },
    /// E[u(y'_ε/√n); t' ≤ τ'] for the reversed walk from `end`.
    BoundaryFunctional {
        #[command(flatten)]
        args: McArgs,
        #[arg(long, allow_hyphen_values = true)]
        end: Point,
        #[arg(long, value_parser = parse_epsilon, default_value = "0.1")]
        epsilon: f64,
    },
    /// Frequency of not entering the shrunken cone before n^{1−ε}.
    StoppingTail {
        #[command(flatten)]
        args: McArgs,
        #[arg(long, allow_hyphen_values = true)]
        start: Point,
        #[arg(long, value_parser = parse_epsilon, default_value = "0.2")]
        epsilon: f64,
    },
    /// Both sides of the Fuk–Nagaev inequality.
    FukNagaev {
        #[command(flatten)]
        args: McArgs,
        /// Displacement threshold.
        #[arg(long)]
        x: f64,
        /// Increment truncation level.
        #[arg(long)]
        y: f64,
    },
    /// Truncated moment of the maximal displacement before the stopping time.
    MaxMoment {
        #[command(flatten)]
        args: McArgs,
        #[arg(long, allow_hyphen_values = true)]
        start: Point,
        #[arg(long, value_parser = parse_epsilon, default_value = "0.1")]
        epsilon: f64,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SeriesArgs {
    #[arg(long, default_value_t = brownian::DEFAULT_SERIES_TERMS)]
    pub terms: usize,
    #[arg(long, default_value_t = brownian::DEFAULT_TOLERANCE)]
    pub tol: f64,
}

#[derive(Subcommand, Debug)]
pub enum BmCmd {
    /// Dirichlet heat kernel K_t(x, y).
    Kernel {
        #[command(flatten)]
        cone: ConeInput,
        #[arg(long, allow_hyphen_values = true)]
        x: RealPoint,
        #[arg(long, allow_hyphen_values = true)]
        y: RealPoint,
        #[arg(long)]
        t: RealList,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Survival probability k_t(x).
    Survival {
        #[command(flatten)]
        cone: ConeInput,
        #[arg(long, allow_hyphen_values = true)]
        x: RealPoint,
        #[arg(long)]
        t: RealList,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// χ and χ₀ from the large-t behaviour.
    FitConstants {
        #[command(flatten)]
        cone: ConeInput,
        #[arg(long, value_parser = parse_pair, default_value = "100,1000000")]
        t_range: (f64, f64),
        #[arg(long, default_value_t = 33)]
        points: usize,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Ratio statistics of the two-sided Gaussian bounds.
    CheckBounds {
        #[command(flatten)]
        cone: ConeInput,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_parser = parse_pair, default_value = "0.01,100")]
        t_range: (f64, f64),
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        series: SeriesArgs,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyCommon {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Start point.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Point,
    #[arg(long, value_parser = parse_window, default_value = "auto")]
    #[serde(serialize_with = "ser_window")]
    pub window: WindowPolicy,
}

#[derive(Subcommand, Debug)]
pub enum VerifyCmd {
    /// Fitted exponent of P(τ > n) against −p/2.
    Survival {
        #[command(flatten)]
        common: VerifyCommon,
        /// Fit window lo,hi.
        #[arg(long, value_parser = parse_n_pair)]
        n_grid: (u64, u64),
        #[arg(long, default_value_t = 0.08)]
        tolerance: f64,
    },
    /// Fitted exponent of the return probability against −p − d/2.
    LltExponent {
        #[command(flatten)]
        common: VerifyCommon,
        #[arg(long, value_parser = parse_n_pair)]
        n_grid: (u64, u64),
        #[arg(long, default_value_t = 0.15)]
        tolerance: f64,
    },
    /// Flatness of exact over Gaussian prediction on the deep interior.
    Interior {
        #[command(flatten)]
        common: VerifyCommon,
        /// Horizons; with several, the spread must also shrink from first to last.
        #[arg(long)]
        n_grid: NList,
        #[arg(long, value_parser = parse_epsilon, default_value = "0.1")]
        epsilon: f64,
        #[arg(long = "A", default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 0.15)]
        max_spread: f64,
    },
    /// Exact over predicted local probability near the boundary.
    Boundary {
        #[command(flatten)]
        common: VerifyCommon,
        #[arg(long)]
        n_grid: NList,
        #[arg(long, value_parser = parse_epsilon, default_value = "0.1")]
        epsilon: f64,
        /// κ·V(x); calibrated from an interior run when omitted.
        #[arg(long)]
        kappa_v: Option<f64>,
        #[arg(long, default_value_t = 400)]
        calibration_n: u64,
        #[arg(long = "A", default_value_t = 2.0)]
        a: f64,
        #[arg(long, value_parser = parse_samples, default_value = "100000")]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_parser = parse_pair, default_value = "0.8,1.25")]
        ratio_range: (f64, f64),
    },
    /// One-step defect of V approximated at a finite horizon.
    HarmonicV {
        #[command(flatten)]
        inputs: Inputs,
        /// Points to test; repeat the flag for several.
        #[arg(long, allow_hyphen_values = true, required = true)]
        x: Vec<Point>,
        #[arg(long, default_value_t = 512)]
        horizon: u64,
        #[arg(long, value_parser = parse_window, default_value = "auto")]
        window: WindowPolicy,
        #[arg(long, default_value_t = 0.02)]
        max_defect: f64,
    },
    /// Minimum of n^{p/2}·P(τ_z > n) over points and horizons.
    LowerBound {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, allow_hyphen_values = true, required = true)]
        x: Vec<Point>,
        #[arg(long)]
        n_grid: NList,
        #[arg(long, value_parser = parse_samples, default_value = "100000")]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        floor: f64,
    },
}

/// CLI failure, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Library(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Library(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Library(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A finished command before formatting.
pub struct Outcome {
    pub command: String,
    pub config: Value,
    pub result: Value,
    /// `Some` for checks with a pass/fail verdict.
    pub pass: Option<bool>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub default_format: Format,
    pub summary: String,
}

#[derive(Serialize)]
struct Report<'a> {
    schema: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a Value,
    result: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pass: Option<bool>,
}

impl Outcome {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let r = Report {
                    schema: REPORT_SCHEMA,
                    version: env!("CARGO_PKG_VERSION"),
                    command: &self.command,
                    config: &self.config,
                    result: &self.result,
                    pass: self.pass,
                };
                let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Csv => {
                let mut s = String::new();
                if self.header.is_empty() {
                    s.push_str("key,value\n");
                    let mut flat = Vec::new();
                    flatten("", &self.result, &mut flat);
                    if let Some(p) = self.pass {
                        flat.push(("pass".into(), p.to_string()));
                    }
                    for (k, v) in flat {
                        let _ = writeln!(s, "{k},{v}");
                    }
                } else {
                    let _ = writeln!(s, "{}", self.header.join(","));
                    for r in &self.rows {
                        let _ = writeln!(s, "{}", r.join(","));
                    }
                }
                s
            }
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let joined: Vec<String> = a.iter().map(scalar).collect();
            out.push((prefix.to_string(), format!("\"{}\"", joined.join(";"))));
        }
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        _ => out.push((prefix.to_string(), scalar(v))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Shortest round-trip representation, so CSV values are reproducible.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("value serializes")
}

fn read_file(kind: &str, path: &str) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {kind} file '{path}': {e}")))
}

/// Load a model from a JSON file or a `builtin:` name.
pub fn load_model(spec: &str) -> CliResult<StepDistribution> {
    match spec.strip_prefix("builtin:") {
        Some("simple1d") => Ok(catalog::simple_1d()),
        Some("nsew") => Ok(catalog::nsew()),
        Some("lazy") => Ok(catalog::lazy()),
        Some("diagonal") => Ok(catalog::diagonal()),
        Some(other) => Err(CliError::Usage(format!("unknown builtin model '{other}'"))),
        None => StepDistribution::from_json(&read_file("model", spec)?)
            .map_err(|e| CliError::Io(format!("invalid model file '{spec}': {e}"))),
    }
}

/// Load a cone from a JSON file or a `builtin:` name.
pub fn load_cone(spec: &str) -> CliResult<ConeSpec> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let split = name.find(|c: char| c.is_ascii_digit()).unwrap_or(name.len());
        let (kind, d) = name.split_at(split);
        let dim: usize = d
            .parse()
            .ok()
            .filter(|&d| d >= 1)
            .ok_or_else(|| CliError::Usage(format!("builtin cone '{name}' needs a dimension")))?;
        return match kind {
            "orthant" => Ok(ConeSpec::orthant(dim)),
            "weyl" => Ok(ConeSpec::weyl_a(dim)),
            "full" => Ok(ConeSpec::full_space(dim)),
            _ => Err(CliError::Usage(format!("unknown builtin cone '{name}'"))),
        };
    }
    ConeSpec::from_json(&read_file("cone", spec)?)
        .map_err(|e| CliError::Io(format!("invalid cone file '{spec}': {e}")))
}

fn resolved(inputs: &Inputs) -> CliResult<(StepDistribution, ConeSpec, Value)> {
    let model = load_model(&inputs.model)?;
    let cone = load_cone(&inputs.cone)?;
    let v = json!({
        "model": serde_json::from_str::<Value>(&model.to_json()).expect("model json"),
        "cone": to_value(&cone),
    });
    Ok((model, cone, v))
}

fn config_with<T: Serialize>(args: &T, resolved: Value) -> Value {
    json!({"args": to_value(args), "resolved": resolved})
}

fn frame(model: StepDistribution, cone: ConeSpec) -> CliResult<Frame> {
    Ok(Frame::new(model, cone)?)
}

fn series_rows(values: &[f64], loss: &[f64]) -> Vec<Vec<String>> {
    values
        .iter()
        .zip(loss)
        .enumerate()
        .map(|(n, (v, l))| vec![n.to_string(), num(*v), num(*l)])
        .collect()
}

fn options(args: &ExactArgs) -> CliResult<ExactOptions> {
    match args.mode {
        ModeArg::Float => Ok(ExactOptions::float(args.window)),
        ModeArg::Rational => {
            if args.window != WindowPolicy::Full && args.window != WindowPolicy::default() {
                return Err(CliError::Usage("rational mode requires --window full".into()));
            }
            Ok(ExactOptions {
                mode: Mode::Rational,
                window: WindowPolicy::Full,
            })
        }
    }
}

fn outcome(command: &str, config: Value, result: Value, default_format: Format) -> Outcome {
    Outcome {
        command: command.to_string(),
        config,
        result,
        pass: None,
        header: Vec::new(),
        rows: Vec::new(),
        default_format,
        summary: String::new(),
    }
}

fn run_model(cmd: &ModelCmd) -> CliResult<Outcome> {
    match cmd {
        ModelCmd::Validate { model, cone } => {
            let m = load_model(model)?;
            let report = match cone {
                Some(c) => walk_model::validate_model_for_cone(&m, &load_cone(c)?)?,
                None => walk_model::validate_model(&m)?,
            };
            let mut o = outcome(
                "model validate",
                json!({"model": model, "cone": cone}),
                to_value(&report),
                Format::Json,
            );
            o.summary = format!(
                "model valid: period {}, sublattice index {}",
                report.period, report.sublattice_index
            );
            Ok(o)
        }
        ModelCmd::Decorrelate { model } => {
            let m = load_model(model)?;
            let (image, t) = walk_model::decorrelate(&m)?;
            let steps: Vec<Value> = image
                .steps
                .iter()
                .map(|(v, p)| json!({"v": v, "p": p}))
                .collect();
            let mut o = outcome(
                "model decorrelate",
                json!({"model": model}),
                json!({"transform": t, "image_steps": steps, "image_covariance": rows_of(&image.covariance())}),
                Format::Json,
            );
            o.summary = match t.as_scalar() {
                Some(c) => format!("decorrelating map is scalar {c}"),
                None => "decorrelating map is a full matrix".into(),
            };
            Ok(o)
        }
    }
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn run_cone(cmd: &ConeCmd) -> CliResult<Outcome> {
    let ConeCmd::Info { cone, point } = cmd;
    let c = load_cone(&cone.cone)?;
    let exponent = reduite_for(&c).ok().map(|u| u.p);
    let mut result = json!({
        "cone": to_value(&c),
        "dim": c.dim(),
        "facet_normals": c.facet_normals(),
        "exponent": exponent,
        "unit_ball_fraction": c.unit_ball_fraction(),
    });
    if let Some(p) = point {
        result["point"] = json!({
            "inside": c.contains(&p.0)?,
            "distance_to_boundary": if c.contains(&p.0)? { Some(c.dist_boundary(&p.0)?) } else { None },
        });
    }
    let mut o = outcome("cone info", json!({"cone": cone.cone, "point": point}), result, Format::Json);
    o.summary = format!("cone of dimension {}, exponent {:?}", c.dim(), exponent);
    Ok(o)
}

fn run_reduite(cmd: &ReduiteCmd) -> CliResult<Outcome> {
    match cmd {
        ReduiteCmd::Eval { cone, point } => {
            let c = load_cone(&cone.cone)?;
            let u = reduite_for(&c)?;
            if point.0.len() != c.dim() {
                return Err(Error::DimensionMismatch {
                    expected: c.dim(),
                    got: point.0.len(),
                }
                .into());
            }
            let value = if c.contains(&point.0)? { u.eval(&point.0) } else { 0.0 };
            let grad = u.grad(&point.0).ok();
            let mut o = outcome(
                "reduite eval",
                json!({"cone": cone.cone, "point": point}),
                json!({"p": u.p, "value": value, "gradient": grad}),
                Format::Json,
            );
            o.header = vec!["p", "value"];
            o.rows = vec![vec![num(u.p), num(value)]];
            o.summary = format!("u = {value:e}");
            Ok(o)
        }
        ReduiteCmd::Check { cone, samples, h } => {
            let u = reduite_for(&load_cone(&cone.cone)?)?;
            let residual = u.check_harmonic(*samples, *h)?;
            let mut o = outcome(
                "reduite check",
                json!({"cone": cone.cone, "samples": samples, "h": h}),
                json!({"p": u.p, "max_scaled_laplacian": residual}),
                Format::Json,
            );
            o.summary = format!("max scaled Laplacian {residual:e}");
            Ok(o)
        }
    }
}

fn run_exact(cmd: &ExactCmd) -> CliResult<Outcome> {
    match cmd {
        ExactCmd::Survival(args) => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let s = exact::survival(&model, &cone, &args.start.0, args.n, &options(args)?)?;
            let mut o = outcome("exact survival", config_with(args, res), to_value(&s), Format::Csv);
            o.header = vec!["n", "value", "truncation_loss"];
            o.rows = series_rows(&s.values, &s.truncation_loss);
            if let Some(ex) = &s.exact {
                o.header.push("exact");
                for (r, e) in o.rows.iter_mut().zip(ex) {
                    r.push(e.clone());
                }
            }
            o.summary = format!("P(tau > {}) = {:e}", args.n, s.values.last().unwrap_or(&f64::NAN));
            Ok(o)
        }
        ExactCmd::Local { args, end } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let config = config_with(&(args, end), res);
            let mut o;
            if args.mode == ModeArg::Rational {
                options(args)?;
                let mut values = Vec::new();
                let mut exact_values = Vec::new();
                let kernel = Kernel::rational(&model)?;
                let domain = Domain {
                    cone: &cone,
                    boundary: Boundary::Open,
                };
                exact::propagate(&kernel, domain, &args.start.0, args.n, None, |t| {
                    let v = t.get(&end.0);
                    values.push(walk_model::rational_to_f64(&v));
                    exact_values.push(v.to_string());
                })?;
                let loss = vec![0.0; values.len()];
                o = outcome(
                    "exact local",
                    config,
                    json!({"values": values, "exact": exact_values, "truncation_loss": loss}),
                    Format::Csv,
                );
                o.header = vec!["n", "value", "truncation_loss", "exact"];
                o.rows = series_rows(&values, &loss);
                for (r, e) in o.rows.iter_mut().zip(exact_values) {
                    r.push(e);
                }
                o.summary = format!("P(x -> y in {}) = {:e}", args.n, values.last().unwrap_or(&f64::NAN));
            } else {
                let (values, loss) =
                    exact::local_series(&model, &cone, &args.start.0, &end.0, args.n, args.window)?;
                o = outcome(
                    "exact local",
                    config,
                    json!({"values": values, "truncation_loss": loss}),
                    Format::Csv,
                );
                o.header = vec!["n", "value", "truncation_loss"];
                o.rows = series_rows(&values, &loss);
                o.summary = format!("P(x -> y in {}) = {:e}", args.n, values.last().unwrap_or(&f64::NAN));
            }
            Ok(o)
        }
        ExactCmd::Green { args, end } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let decay = reduite_for(&cone.canonicalize())
                .ok()
                .map(|u| u.p + cone.dim() as f64 / 2.0);
            let g = exact::green_partial(&model, &cone, &args.start.0, &end.0, args.n, decay, args.window)?;
            let mut o = outcome("exact green", config_with(&(args, end), res), to_value(&g), Format::Csv);
            o.header = vec!["n", "partial_sum"];
            o.rows = g
                .partial_sums
                .iter()
                .enumerate()
                .map(|(n, v)| vec![n.to_string(), num(*v)])
                .collect();
            o.summary = format!("Green partial sum {:e}, tail estimate {:?}", g.value, g.tail_estimate);
            Ok(o)
        }
        ExactCmd::HarmonicV(args) => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let f = frame(model, cone)?;
            let h = exact::harmonic_v(&f, &args.start.0, args.n, args.window)?;
            let mut o = outcome("exact harmonic-v", config_with(args, res), to_value(&h), Format::Csv);
            o.header = vec!["n", "value", "truncation_loss"];
            o.rows = series_rows(&h.values, &h.truncation_loss);
            o.summary = format!("V(x) ~ {:e} (Cauchy diagnostic {:e})", h.limit(), h.cauchy_diagnostic);
            Ok(o)
        }
        ExactCmd::Count { args, end, closed } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let stepset: Vec<Vec<i64>> = model.steps().iter().map(|s| s.v.clone()).collect();
            let boundary = if *closed { Boundary::Closed } else { Boundary::Open };
            let domain = Domain { cone: &cone, boundary };
            let mut counts = Vec::new();
            exact::propagate(&Kernel::counting(&stepset), domain, &args.start.0, args.n, None, |t| {
                counts.push(t.get(&end.0).to_string())
            })?;
            let mut o = outcome(
                "exact count",
                config_with(&(args, end, closed), res),
                json!({"counts": counts}),
                Format::Csv,
            );
            o.header = vec!["n", "count"];
            o.rows = counts
                .iter()
                .enumerate()
                .map(|(n, c)| vec![n.to_string(), c.clone()])
                .collect();
            o.summary = format!("{} paths of length {}", counts.last().cloned().unwrap_or_default(), args.n);
            Ok(o)
        }
    }
}

fn estimate_row(n: u64, e: &mc::MCEstimate) -> Vec<String> {
    vec![
        n.to_string(),
        num(e.mean),
        num(e.std_error),
        e.samples.to_string(),
        num(e.censored_fraction),
    ]
}

const ESTIMATE_HEADER: [&str; 5] = ["n", "mean", "std_error", "samples", "censored_fraction"];

fn run_mc(cmd: &McCmd) -> CliResult<Outcome> {
    match cmd {
        McCmd::Survival { args, start } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let e = mc::mc_survival(&model, &cone, &start.0, args.n, args.samples, args.seed)?;
            let mut o = outcome("mc survival", config_with(&(args, start), res), to_value(&e), Format::Csv);
            o.header = ESTIMATE_HEADER.to_vec();
            o.rows = vec![estimate_row(args.n, &e)];
            o.summary = format!("P(tau > {}) ~ {:e} +/- {:e}", args.n, e.mean, e.std_error);
            Ok(o)
        }
        McCmd::BoundaryFunctional { args, end, epsilon } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let f = frame(model, cone)?.reversed();
            let e = mc::mc_boundary_functional(&f, &end.0, args.n, *epsilon, args.samples, args.seed)?;
            let mut o = outcome(
                "mc boundary-functional",
                config_with(&(args, end, epsilon), res),
                to_value(&e),
                Format::Csv,
            );
            o.header = ESTIMATE_HEADER.to_vec();
            o.rows = vec![estimate_row(args.n, &e)];
            o.summary = format!("functional ~ {:e} +/- {:e}", e.mean, e.std_error);
            Ok(o)
        }
        McCmd::StoppingTail { args, start, epsilon } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let f = frame(model, cone)?;
            let t = mc::mc_stopping_time_tail(&f, &start.0, args.n, *epsilon, args.samples, args.seed)?;
            let mut o = outcome(
                "mc stopping-tail",
                config_with(&(args, start, epsilon), res),
                to_value(&t),
                Format::Csv,
            );
            o.header = vec!["n", "horizon", "frequency", "hits", "samples", "lower", "upper"];
            o.rows = vec![vec![
                args.n.to_string(),
                t.horizon.to_string(),
                num(t.frequency),
                t.hits.to_string(),
                t.samples.to_string(),
                num(t.lower),
                num(t.upper),
            ]];
            o.summary = format!("tail frequency {:e} ({} of {})", t.frequency, t.hits, t.samples);
            Ok(o)
        }
        McCmd::FukNagaev { args, x, y } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let f = frame(model, cone)?;
            let r = mc::mc_fuk_nagaev(&f, *x, *y, args.n, args.samples, args.seed)?;
            let mut o = outcome("mc fuk-nagaev", config_with(&(args, x, y), res), to_value(&r), Format::Csv);
            o.header = vec!["n", "x", "y", "lhs", "lhs_std_error", "rhs", "holds"];
            o.rows = vec![vec![
                args.n.to_string(),
                num(*x),
                num(*y),
                num(r.lhs.mean),
                num(r.lhs.std_error),
                num(r.rhs),
                r.holds.to_string(),
            ]];
            o.summary = format!("lhs {:e} vs bound {:e}", r.lhs.mean, r.rhs);
            Ok(o)
        }
        McCmd::MaxMoment {
            args,
            start,
            epsilon,
            alpha,
        } => {
            let (model, cone, res) = resolved(&args.inputs)?;
            let f = frame(model, cone)?;
            let e = mc::mc_max_displacement_moment(
                &f,
                &start.0,
                args.n,
                *epsilon,
                *alpha,
                args.samples,
                args.seed,
            )?;
            let mut o = outcome(
                "mc max-moment",
                config_with(&(args, start, epsilon, alpha), res),
                to_value(&e),
                Format::Csv,
            );
            o.header = ESTIMATE_HEADER.to_vec();
            o.rows = vec![estimate_row(args.n, &e)];
            o.summary = format!("truncated moment ~ {:e} +/- {:e}", e.mean, e.std_error);
            Ok(o)
        }
    }
}

fn evaluator(cone: &ConeInput, series: &SeriesArgs) -> CliResult<(ConeSpec, KernelEvaluator)> {
    let c = load_cone(&cone.cone)?;
    let ev = KernelEvaluator::new(&c)?.with_series(series.terms, series.tol);
    Ok((c, ev))
}

fn run_bm(cmd: &BmCmd) -> CliResult<Outcome> {
    match cmd {
        BmCmd::Kernel {
            cone,
            x,
            y,
            t,
            series,
        } => {
            let (c, ev) = evaluator(cone, series)?;
            let values = t
                .0
                .iter()
                .map(|&t| ev.kernel(&x.0, &y.0, t))
                .collect::<Result<Vec<f64>>>()?;
            let mut o = outcome(
                "bm kernel",
                json!({"cone": cone.cone, "resolved_cone": c, "x": x, "y": y, "t": t, "series": series}),
                json!({"t": t, "values": values}),
                Format::Csv,
            );
            o.header = vec!["t", "value"];
            o.rows = t.0.iter().zip(&values).map(|(t, v)| vec![num(*t), num(*v)]).collect();
            o.summary = format!("{} kernel values", values.len());
            Ok(o)
        }
        BmCmd::Survival { cone, x, t, series } => {
            let (c, ev) = evaluator(cone, series)?;
            let values = t
                .0
                .iter()
                .map(|&t| ev.survival(&x.0, t))
                .collect::<Result<Vec<f64>>>()?;
            let mut o = outcome(
                "bm survival",
                json!({"cone": cone.cone, "resolved_cone": c, "x": x, "t": t, "series": series}),
                json!({"t": t, "values": values}),
                Format::Csv,
            );
            o.header = vec!["t", "value"];
            o.rows = t.0.iter().zip(&values).map(|(t, v)| vec![num(*t), num(*v)]).collect();
            o.summary = format!("{} survival values", values.len());
            Ok(o)
        }
        BmCmd::FitConstants {
            cone,
            t_range,
            points,
            series,
        } => {
            let (c, ev) = evaluator(cone, series)?;
            let u = reduite_for(&ev.cone)?;
            let k = brownian::fit_asymptotic_constants_on(&ev, &u, t_range.0, t_range.1, *points)?;
            let mut o = outcome(
                "bm fit-constants",
                json!({"cone": cone.cone, "resolved_cone": c, "t_range": t_range, "points": points, "series": series}),
                to_value(&k),
                Format::Csv,
            );
            o.header = vec!["chi", "chi0", "fit_residual"];
            o.rows = vec![vec![num(k.chi), num(k.chi0), num(k.fit_residual)]];
            o.summary = format!("chi = {:e}, chi0 = {:e}", k.chi, k.chi0);
            Ok(o)
        }
        BmCmd::CheckBounds {
            cone,
            samples,
            t_range,
            seed,
            series,
        } => {
            let (c, ev) = evaluator(cone, series)?;
            let u = reduite_for(&ev.cone)?;
            let r = brownian::check_gaussian_bounds(&ev, &u, *samples, *t_range, *seed)?;
            let scaling = brownian::check_kernel_scaling(&ev, *samples, 0.1, *seed)?;
            let mut o = outcome(
                "bm check-bounds",
                json!({"cone": cone.cone, "resolved_cone": c, "samples": samples, "t_range": t_range, "seed": seed, "series": series}),
                json!({"bounds": r, "scaling": scaling}),
                Format::Json,
            );
            o.summary = format!(
                "finite {}, decade stability {:.3}",
                r.finite, r.decade_stability
            );
            Ok(o)
        }
    }
}

fn run_verify(cmd: &VerifyCmd) -> CliResult<Outcome> {
    match cmd {
        VerifyCmd::Survival {
            common,
            n_grid,
            tolerance,
        }
        | VerifyCmd::LltExponent {
            common,
            n_grid,
            tolerance,
        } => {
            let survival = matches!(cmd, VerifyCmd::Survival { .. });
            let (model, cone, res) = resolved(&common.inputs)?;
            let f = frame(model, cone)?;
            let check = if survival {
                verify::verify_survival_exponent(&f, &common.x.0, *n_grid, *tolerance, common.window)?
            } else {
                verify::verify_llt_exponent(&f, &common.x.0, *n_grid, *tolerance, common.window)?
            };
            let name = if survival { "verify survival" } else { "verify llt-exponent" };
            let mut o = outcome(
                name,
                config_with(&(common, n_grid, tolerance), res),
                to_value(&check),
                Format::Json,
            );
            o.pass = Some(check.pass);
            o.header = vec!["slope", "intercept", "r_squared", "points", "expected", "tolerance", "pass"];
            o.rows = vec![vec![
                num(check.fit.slope),
                num(check.fit.intercept),
                num(check.fit.r_squared),
                check.fit.points.to_string(),
                num(check.expected),
                num(check.tolerance),
                check.pass.to_string(),
            ]];
            o.summary = format!(
                "slope {:.5} vs {:.5} +/- {}",
                check.fit.slope, check.expected, check.tolerance
            );
            Ok(o)
        }
        VerifyCmd::Interior {
            common,
            n_grid,
            epsilon,
            a,
            max_spread,
        } => {
            let (model, cone, res) = resolved(&common.inputs)?;
            let f = frame(model, cone)?;
            let reports = n_grid
                .0
                .iter()
                .map(|&n| {
                    verify::verify_interior_llt(
                        &f,
                        &common.x.0,
                        n,
                        *a,
                        *epsilon,
                        InteriorGrid::Shrunken,
                        common.window,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let within = reports.iter().all(|r| r.ratio_spread <= *max_spread);
            let shrinking = match (reports.first(), reports.last()) {
                (Some(a), Some(b)) if reports.len() > 1 => b.ratio_spread < a.ratio_spread,
                _ => true,
            };
            let mut o = outcome(
                "verify interior",
                config_with(&(common, n_grid, epsilon, a, max_spread), res),
                json!({"reports": reports, "spread_within_limit": within, "spread_shrinking": shrinking}),
                Format::Json,
            );
            o.pass = Some(within && shrinking);
            o.header = vec!["n", "kappa_estimate", "ratio_spread", "grid_size"];
            o.rows = reports
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        num(r.kappa_estimate),
                        num(r.ratio_spread),
                        r.grid_size.to_string(),
                    ]
                })
                .collect();
            o.summary = format!(
                "spreads {:?}",
                reports.iter().map(|r| r.ratio_spread).collect::<Vec<_>>()
            );
            Ok(o)
        }
        VerifyCmd::Boundary {
            common,
            n_grid,
            epsilon,
            kappa_v,
            calibration_n,
            a,
            samples,
            seed,
            ratio_range,
        } => {
            let (model, cone, res) = resolved(&common.inputs)?;
            let f = frame(model, cone)?;
            let (kv, calibration) = match kappa_v {
                Some(k) => (*k, None),
                None => {
                    let r = verify::verify_interior_llt(
                        &f,
                        &common.x.0,
                        *calibration_n,
                        *a,
                        *epsilon,
                        InteriorGrid::Shrunken,
                        common.window,
                    )?;
                    (r.kappa_estimate, Some(r))
                }
            };
            let report = verify::verify_boundary_llt(
                &f,
                &common.x.0,
                &n_grid.0,
                *epsilon,
                kv,
                *samples,
                *seed,
                *ratio_range,
                common.window,
            )?;
            let mut o = outcome(
                "verify boundary",
                config_with(
                    &json!({"common": common, "n_grid": n_grid, "epsilon": epsilon, "kappa_v": kappa_v,
                        "calibration_n": calibration_n, "A": a, "samples": samples, "seed": seed,
                        "ratio_range": ratio_range}),
                    res,
                ),
                json!({"calibration": calibration, "report": report}),
                Format::Json,
            );
            o.pass = Some(report.pass);
            o.header = vec!["n", "y", "exact", "functional", "predicted", "ratio"];
            o.rows = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        format!("\"{}\"", r.y.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")),
                        num(r.exact),
                        num(r.functional.mean),
                        num(r.predicted),
                        num(r.ratio),
                    ]
                })
                .collect();
            o.summary = format!("ratios in [{:.4}, {:.4}]", report.ratio_min, report.ratio_max);
            Ok(o)
        }
        VerifyCmd::HarmonicV {
            inputs,
            x,
            horizon,
            window,
            max_defect,
        } => {
            let (model, cone, res) = resolved(inputs)?;
            let f = frame(model, cone)?;
            let points: Vec<Vec<i64>> = x.iter().map(|p| p.0.clone()).collect();
            let r = verify::verify_harmonicity_v(&f, &points, *horizon, *window)?;
            let mut o = outcome(
                "verify harmonic-v",
                config_with(
                    &json!({"inputs": inputs, "x": x, "horizon": horizon,
                        "window": WindowArg(*window), "max_defect": max_defect}),
                    res,
                ),
                to_value(&r),
                Format::Json,
            );
            o.pass = Some(r.max_defect <= *max_defect);
            o.header = vec!["x", "v", "neighbour_sum", "defect"];
            o.rows = r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        format!("\"{}\"", row.x.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")),
                        num(row.v),
                        num(row.neighbour_sum),
                        num(row.defect),
                    ]
                })
                .collect();
            o.summary = format!("max defect {:e}", r.max_defect);
            Ok(o)
        }
        VerifyCmd::LowerBound {
            inputs,
            x,
            n_grid,
            samples,
            seed,
            floor,
        } => {
            let (model, cone, res) = resolved(inputs)?;
            let f = frame(model, cone)?;
            let points: Vec<Vec<i64>> = x.iter().map(|p| p.0.clone()).collect();
            let r = verify::verify_uniform_lower_bound(&f, &points, &n_grid.0, *samples, *seed, *floor)?;
            let mut o = outcome(
                "verify lower-bound",
                config_with(&(inputs, x, n_grid, samples, seed, floor), res),
                to_value(&r),
                Format::Json,
            );
            o.pass = Some(r.pass);
            o.header = vec!["z", "n", "survival", "std_error", "normalized"];
            o.rows = r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        format!("\"{}\"", row.z.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")),
                        row.n.to_string(),
                        num(row.survival.mean),
                        num(row.survival.std_error),
                        num(row.normalized),
                    ]
                })
                .collect();
            o.summary = format!("min normalized survival {:e}", r.min_normalized);
            Ok(o)
        }
    }
}

#[derive(Serialize)]
struct WindowArg(#[serde(serialize_with = "ser_window")] WindowPolicy);

/// Run a parsed command line and produce the outcome.
pub fn execute(cli: &Cli) -> CliResult<Outcome> {
    let work = || match &cli.command {
        Command::Model(c) => run_model(c),
        Command::Cone(c) => run_cone(c),
        Command::Reduite(c) => run_reduite(c),
        Command::Exact(c) => run_exact(c),
        Command::Mc(c) => run_mc(c),
        Command::Bm(c) => run_bm(c),
        Command::Verify(c) => run_verify(c),
    };
    par::with_threads(cli.threads, work)
}

fn write_report(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write report '{}': {e}", path.display())))
}

/// Parse `args`, run, and write the report and summary. Returns the exit
/// code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    let format = cli.format.unwrap_or(outcome.default_format);
    let text = outcome.render(format);
    let verdict = match outcome.pass {
        Some(true) => " [PASS]",
        Some(false) => " [FAIL]",
        None => "",
    };
    let summary = format!("{}: {}{}", outcome.command, outcome.summary, verdict);
    match &cli.out {
        Some(path) => {
            if let Err(e) = write_report(path, &text) {
                let _ = writeln!(stderr, "error: {e}");
                return 1;
            }
            let _ = writeln!(stdout, "{summary}");
        }
        None => {
            let _ = write!(stdout, "{text}");
            let _ = writeln!(stderr, "{summary}");
        }
    }
    if outcome.pass == Some(false) {
        2
    } else {
        0
    }
}

/// Entry point for the binary.
pub fn main_from_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("cone-walker").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn survival_csv_has_one_row_per_horizon() {
        let (code, out, _) = run_capture(&[
            "exact", "survival", "--model", "builtin:lazy", "--cone", "builtin:orthant2", "--start",
            "1,1", "--n", "64",
        ]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "n,value,truncation_loss");
        assert_eq!(lines.len(), 66);
        assert!(lines[1].starts_with("0,1.0,"));
    }

    #[test]
    fn missing_file_names_path() {
        let (code, _, err) = run_capture(&[
            "exact", "survival", "--model", "/nonexistent/m.json", "--cone", "builtin:orthant2",
            "--start", "1,1", "--n", "4",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("/nonexistent/m.json"));
    }

    #[test]
    fn zero_tolerance_fails_verification() {
        let (code, out, _) = run_capture(&[
            "verify", "survival", "--model", "builtin:simple1d", "--cone", "builtin:orthant1", "--x",
            "1", "--n-grid", "16,64", "--tolerance", "0",
        ]);
        assert_eq!(code, 2);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["pass"], Value::Bool(false));
        assert_eq!(v["schema"], REPORT_SCHEMA);
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_capture(&["exact"]).0, 1);
        assert_eq!(
            run_capture(&[
                "mc", "stopping-tail", "--model", "builtin:lazy", "--cone", "builtin:orthant2",
                "--start", "1,1", "--n", "10", "--epsilon", "0.7",
            ])
            .0,
            1
        );
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn rational_counts_match_catalan() {
        let (code, out, _) = run_capture(&[
            "exact", "count", "--model", "builtin:simple1d", "--cone", "builtin:orthant1", "--start",
            "0", "--end", "0", "--n", "10", "--closed",
        ]);
        assert_eq!(code, 0);
        let last = out.lines().last().unwrap();
        // Dyck paths of length 10.
        assert_eq!(last, "10,42");
    }

    #[test]
    fn threads_do_not_enter_reports() {
        let args = |t: &'static str| {
            vec![
                "--threads", t, "mc", "survival", "--model", "builtin:lazy", "--cone",
                "builtin:orthant2", "--start", "1,1", "--n", "20", "--samples", "5000", "--format",
                "json",
            ]
        };
        let a = run_capture(&args("1")).1;
        let b = run_capture(&args("3")).1;
        assert_eq!(a, b);
        assert!(!a.contains("threads"));
    }

    #[test]
    fn flatten_produces_dotted_keys() {
        let mut out = Vec::new();
        flatten("", &json!({"a": {"b": 1, "c": [1, 2]}}), &mut out);
        assert_eq!(
            out,
            vec![("a.b".to_string(), "1".to_string()), ("a.c".to_string(), "\"1;2\"".to_string())]
        );
    }
}
