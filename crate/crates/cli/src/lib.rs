//! Command-line driver: checks, induced objects, gauges and family specs.
//!
//! Exit codes: 0 when every claim holds, 1 when a check or a mathematical
//! construction fails, 2 on usage, IO or parse errors.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use paracontact::exprlang::{parse_expr, parse_immersion, Expr, ImmersionSpec, Interval};
use paracontact::families::{
    builtin_description, builtin_example, classification_family_with, FamilyOptions, FamilyParams, BUILTIN_NAMES,
};
use paracontact::gauge::{apply_gauge, eta_parallel_gauge, full_parallel_gauge, GaugeChange, GaugeOptions};
use paracontact::paraframe::geometry_at;
use paracontact::verify::{builtin_claims, check_all, default_grid, CheckOptions, Tolerances};
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "paracontact",
    version,
    about = "Induced almost paracontact structures on affine hypersurfaces",
    after_help = "Environment:\n  PARACONTACT_THREADS  size of the worker pool used for grid sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full verification suite on a spec.
    Check(CheckArgs),
    /// Print Γ, h, S, τ, ξ, η and φ at a point.
    Induce(InduceArgs),
    /// Emit a spec with a changed transversal field.
    Gauge(GaugeArgs),
    /// Emit a classification-family spec.
    Family(FamilyArgs),
    /// List the builtin examples.
    Examples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Both,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["file", "builtin"])))]
struct Source {
    /// Spec file.
    file: Option<PathBuf>,
    /// Builtin example name (see `examples`).
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    source: Source,
    /// Number of sample points.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    grid: u64,
    /// Seed for the sample points and random test fields.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance for residuals computed exactly from jets.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    tol_alg: f64,
    /// Tolerance for residuals involving finite differences.
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    tol_fd: f64,
    /// Also write the JSON report to this path.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    /// What to print on standard output.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct InduceArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated coordinates of the point.
    #[arg(long, value_name = "V1,...", allow_hyphen_values = true)]
    point: String,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["phi", "z", "eta_normalize", "full_parallel"]).multiple(true)))]
struct GaugeArgs {
    #[command(flatten)]
    source: Source,
    /// Scale factor Φ of C̄ = ΦC + f_*Z (default 1).
    #[arg(long, value_name = "EXPR", allow_hyphen_values = true)]
    phi: Option<String>,
    /// Comma-separated components of Z (default 0).
    #[arg(long, value_name = "EXPR,...", allow_hyphen_values = true)]
    z: Option<String>,
    /// Make ξ̄ = ∂_y, requires ∇η = 0 and η(∂_y) = 1.
    #[arg(long, conflicts_with_all = ["phi", "z"])]
    eta_normalize: bool,
    /// Make φ, η and ξ parallel in adapted coordinates.
    #[arg(long, conflicts_with_all = ["phi", "z"])]
    full_parallel: bool,
    /// Simpson panels for the parallelising quadrature.
    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u64).range(2..))]
    panels: u64,
    /// Write the spec here instead of standard output.
    #[arg(long, short, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FamilyArgs {
    /// Half of the hypersurface dimension minus one.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// The 2n vectors b_i, separated by ';', each comma-separated.
    #[arg(long, value_name = "VEC;...", allow_hyphen_values = true)]
    b: String,
    /// Comma-separated vector v.
    #[arg(long, value_name = "VEC", allow_hyphen_values = true)]
    v: String,
    /// α as an expression in y.
    #[arg(long, value_name = "EXPR", allow_hyphen_values = true)]
    alpha: String,
    /// Domain as LO:HI per coordinate, comma-separated (default -1:1).
    #[arg(long, value_name = "LO:HI,...", allow_hyphen_values = true)]
    domain: Option<String>,
    /// Simpson panels for non-closed-form integrals of α.
    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u64).range(2..))]
    panels: u64,
    /// Write the spec here instead of standard output.
    #[arg(long, short, value_name = "PATH")]
    output: Option<PathBuf>,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be a positive number".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn math(message: impl Into<String>) -> Self {
        Failure { code: EXIT_FAILURE, message: message.into() }
    }
}

type Outcome = Result<i32, Failure>;

/// Runs with process standard streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    run_with_io(&argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// Runs with `argv[0]` as the program name, writing to the given streams.
pub fn run_with_io(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Check(a) => check(a, out),
        Command::Induce(a) => induce(a, out),
        Command::Gauge(a) => gauge(a, out),
        Command::Family(a) => family(a, out),
        Command::Examples => examples(out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load(source: &Source) -> Result<(String, ImmersionSpec), Failure> {
    if let Some(name) = &source.builtin {
        let spec = builtin_example(name)
            .map_err(|e| Failure::usage(format!("{e}; known: {}", BUILTIN_NAMES.join(", "))))?;
        return Ok((name.clone(), spec));
    }
    let path = source.file.as_deref().expect("clap requires a source");
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let spec = parse_immersion(&text).map_err(|e| Failure::usage(format!("{}:{e}", path.display())))?;
    Ok((path.display().to_string(), spec))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure::usage(format!("writing output: {e}")))
}

fn emit_to(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => emit(out, text),
    }
}

fn check(a: CheckArgs, out: &mut dyn Write) -> Outcome {
    let (name, spec) = load(&a.source)?;
    let opts = CheckOptions {
        tol: Tolerances { alg: a.tol_alg, fd: a.tol_fd, ..Tolerances::default() },
        ..CheckOptions::default()
    };
    let grid = default_grid(&spec, a.grid as usize, a.seed, &opts);
    let mut report = check_all(&spec, &grid, &opts);
    report.spec = name;
    if let Some(claims) = a.source.builtin.as_deref().and_then(builtin_claims) {
        report.set_expectations(&claims);
    }
    let json = report.to_json() + "\n";
    if let Some(p) = &a.json {
        emit_to(Some(p), out, &json)?;
    }
    match a.format {
        Format::Text => emit(out, &report.to_text())?,
        Format::Json => emit(out, &json)?,
        Format::Both => {
            emit(out, &report.to_text())?;
            emit(out, &json)?;
        }
    }
    Ok(if report.claims_met { EXIT_OK } else { EXIT_FAILURE })
}

fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| Failure::usage(format!("{what}: {s:?}: {e}"))))
        .collect()
}

/// Row-major copy for serialization.
fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn induce(a: InduceArgs, out: &mut dyn Write) -> Outcome {
    let (_, spec) = load(&a.source)?;
    let u = parse_vector(&a.point, "--point")?;
    if u.len() != spec.dim() {
        return Err(Failure::usage(format!("--point needs {} coordinates, got {}", spec.dim(), u.len())));
    }
    let g = geometry_at(&spec, &u, &Default::default()).map_err(|e| Failure::math(e.to_string()))?;
    let m = spec.dim();
    let ind = &g.induced;
    let gamma: Vec<Vec<Vec<f64>>> =
        (0..m).map(|k| (0..m).map(|i| (0..m).map(|j| ind.gamma[(k, i, j)]).collect()).collect()).collect();
    let para = match &g.paracontact {
        Ok(pc) => json!({
            "xi": pc.xi.as_slice(),
            "eta": pc.eta.as_slice(),
            "phi": rows(&pc.phi),
            "jtangency_residual": pc.jtangency_residual,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let doc = json!({
        "point": u,
        "gamma": gamma,
        "h": rows(&ind.h),
        "s": rows(&ind.s),
        "tau": ind.tau.as_slice(),
        "paracontact": para,
    });

    let mut text = String::new();
    let vars = spec.vars();
    let _ = writeln!(text, "point ({})", join(&u));
    for (k, name) in vars.iter().enumerate() {
        let _ = writeln!(text, "Γ^{name}_ij");
        for i in 0..m {
            let _ = writeln!(text, "  {}", join(&(0..m).map(|j| ind.gamma[(k, i, j)]).collect::<Vec<_>>()));
        }
    }
    write_matrix(&mut text, "h", &ind.h);
    write_matrix(&mut text, "S", &ind.s);
    let _ = writeln!(text, "τ  {}", join(ind.tau.as_slice()));
    match &g.paracontact {
        Ok(pc) => {
            let _ = writeln!(text, "ξ  {}", join(pc.xi.as_slice()));
            let _ = writeln!(text, "η  {}", join(pc.eta.as_slice()));
            write_matrix(&mut text, "φ", &pc.phi);
        }
        Err(e) => {
            let _ = writeln!(text, "no paracontact structure: {e}");
        }
    }
    let json_text = serde_json::to_string_pretty(&doc).expect("serializes") + "\n";
    match a.format {
        Format::Text => emit(out, &text)?,
        Format::Json => emit(out, &json_text)?,
        Format::Both => {
            emit(out, &text)?;
            emit(out, &json_text)?;
        }
    }
    Ok(EXIT_OK)
}

// `+ 0.0` prints negative zero as 0.
fn join(v: &[f64]) -> String {
    v.iter().map(|x| (x + 0.0).to_string()).collect::<Vec<_>>().join(" ")
}

fn write_matrix(text: &mut String, label: &str, m: &DMatrix<f64>) {
    let _ = writeln!(text, "{label}");
    for r in rows(m) {
        let _ = writeln!(text, "  {}", join(&r));
    }
}

fn gauge(a: GaugeArgs, out: &mut dyn Write) -> Outcome {
    let (_, spec) = load(&a.source)?;
    let vars = spec.vars().to_vec();
    let parse = |t: &str, what: &str| parse_expr(t.trim(), &vars).map_err(|e| Failure::usage(format!("{what}: {e}")));
    let gauged = if a.eta_normalize || a.full_parallel {
        let opts = GaugeOptions { panels: a.panels as usize, ..GaugeOptions::default() };
        let normal = eta_parallel_gauge(&spec, &opts).map_err(|e| Failure::math(e.to_string()))?;
        if a.full_parallel {
            full_parallel_gauge(&normal, &opts).map_err(|e| Failure::math(e.to_string()))?
        } else {
            normal
        }
    } else {
        let phi = match &a.phi {
            Some(t) => parse(t, "--phi")?,
            None => Expr::Num(1.0),
        };
        let z = match &a.z {
            Some(t) => t.split(',').map(|c| parse(c, "--z")).collect::<Result<Vec<_>, _>>()?,
            None => vec![Expr::Num(0.0); spec.dim()],
        };
        if z.len() != spec.dim() {
            return Err(Failure::usage(format!("--z needs {} components, got {}", spec.dim(), z.len())));
        }
        apply_gauge(&spec, &GaugeChange { phi, z }).map_err(|e| Failure::math(e.to_string()))?
    };
    emit_to(a.output.as_deref(), out, &gauged.to_text())?;
    Ok(EXIT_OK)
}

fn parse_domain(text: &str) -> Result<Vec<Interval>, Failure> {
    text.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Failure::usage(format!("--domain: expected LO:HI, got {part:?}")))?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Failure::usage(format!("--domain: {s:?}: {e}")));
            let (lo, hi) = (num(lo)?, num(hi)?);
            if !(lo < hi) {
                return Err(Failure::usage(format!("--domain: empty interval {part:?}")));
            }
            Ok(Interval::new(lo, hi))
        })
        .collect()
}

fn family(a: FamilyArgs, out: &mut dyn Write) -> Outcome {
    let n = a.n as usize;
    let b = a.b.split(';').map(|s| parse_vector(s, "--b")).collect::<Result<Vec<_>, _>>()?;
    let v = parse_vector(&a.v, "--v")?;
    let alpha = parse_expr(&a.alpha, &["y".to_string()]).map_err(|e| Failure::usage(format!("--alpha: {e}")))?;
    let domain = a.domain.as_deref().map(parse_domain).transpose()?;
    let opts = FamilyOptions { domain, panels: a.panels as usize };
    let spec = classification_family_with(&FamilyParams { n, b, v, alpha }, &opts)
        .map_err(|e| Failure::usage(e.to_string()))?;
    emit_to(a.output.as_deref(), out, &spec.to_text())?;
    Ok(EXIT_OK)
}

fn examples(out: &mut dyn Write) -> Outcome {
    let width = BUILTIN_NAMES.iter().map(|n| n.len()).max().unwrap_or(0);
    let mut text = String::new();
    for name in BUILTIN_NAMES {
        let _ = writeln!(text, "{name:width$}  {}", builtin_description(name).expect("builtin"));
    }
    emit(out, &text)?;
    Ok(EXIT_OK)
}
