//! `qharness` command-line front end.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use qharness::checks::{
    exact_suite, harness_report, martingale_ck_reports, q1_ks_report, q1_moment_reports, q1_regime_report, qm1_reports,
    tilde_at_zero_suite, TOL_CK, TOL_HARNESS, TOL_MARTINGALE,
};
use qharness::connection::{QDraw, Sweep};
use qharness::markov::{validate_grid, MarkovError, PathSampler, TransitionKernel};
use qharness::q1::{Q1Error, Q1Params, Q1Sampler, StraddleMode};
use qharness::qm1::{sample_qm1_paths, Qm1Error, Qm1Params};
use qharness::report::CheckReport;
use qharness::spectral::{discrete_atoms, support_interval, SpectralError, DEFAULT_ORDER};
use qharness::HarnessParams;

#[derive(Parser)]
#[command(name = "qharness", version, about = "Bi-Poisson quadratic harness: sampling, quadrature and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths on a time grid.
    Sample(SampleArgs),
    /// Nodes and weights of a marginal law or a transition kernel.
    Quadrature(QuadratureArgs),
    /// Run a check suite; exit 0 iff every check passes.
    Check {
        #[command(subcommand)]
        which: CheckCommand,
    },
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    /// Rescale to η > 0, θ = ±η (needs ηθ ≠ 0) and report the map.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Clone, Copy)]
struct SeedArg {
    #[arg(long, env = "QHARNESS_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Straddle {
    Direct,
    ThroughBoundary,
}

impl From<Straddle> for StraddleMode {
    fn from(s: Straddle) -> Self {
        match s {
            Straddle::Direct => StraddleMode::Direct,
            Straddle::ThroughBoundary => StraddleMode::ThroughBoundary,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// `start:stop:step` or a comma list, starting at 0.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Trajectory table file [default: qharness-sample.<format>].
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// q = 1 only: how a step across θ/η is drawn.
    #[arg(long, value_enum, default_value_t = Straddle::ThroughBoundary)]
    straddle: Straddle,
}

#[derive(Args)]
struct QuadratureArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    t: f64,
    /// With `--x`: kernel `P_{s,t}(x, ·)` instead of the marginal at `t`.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Nodes/weights file [default: qharness-quadrature.<format>].
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Clone)]
struct NumericArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 8)]
    n_max: usize,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Override the pass threshold.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Exact expansion, representation, recursion and generalized-coefficient identities.
    Identities {
        #[arg(long, default_value_t = 6)]
        n_max: i64,
        #[arg(long, default_value_t = 20)]
        tuples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Exact cancellations behind the recursion identity.
    Appendix {
        #[arg(long, default_value_t = 8)]
        n_max: i64,
        #[arg(long, default_value_t = 10)]
        tuples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Martingale property at the nodes of π_s (or at `--x`).
    Martingale {
        #[command(flatten)]
        num: NumericArgs,
        /// `s,u`.
        #[arg(long, default_value = "0.5,1")]
        times: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Option<Vec<f64>>,
    },
    /// Chapman–Kolmogorov at the nodes of π_s (or at `--x`).
    Ck {
        #[command(flatten)]
        num: NumericArgs,
        /// `s,t,u`.
        #[arg(long, default_value = "0.5,1,1.5")]
        times: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Option<Vec<f64>>,
    },
    /// Two-sided conditional mean and variance in weak form.
    Harness {
        #[command(flatten)]
        num: NumericArgs,
        #[arg(long, default_value = "0.5,1,1.5")]
        times: String,
        #[arg(long, default_value_t = 2)]
        a_max: u32,
        #[arg(long, default_value_t = 2)]
        b_max: u32,
    },
    /// Moments, regimes and two-step consistency of the q = 1 sampler.
    Q1Moments {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value = "0,0.25,0.5,1,1.5,2")]
        grid: String,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_enum, default_value_t = Straddle::ThroughBoundary)]
        straddle: Straddle,
    },
    /// Closed-form q = -1 checks.
    Qm1Exact {
        #[command(flatten)]
        params: ParamArgs,
        /// `s,t,u`.
        #[arg(long, default_value = "0.5,1,2")]
        times: String,
    },
    /// Exact suites, plus the numeric suites for `--q` when given.
    All {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
    },
}

/// Error with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn bad_input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "bad-input",
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            kind: "numeric-failure",
            message: message.into(),
        }
    }
}

impl From<MarkovError> for Failure {
    fn from(e: MarkovError) -> Self {
        match e {
            MarkovError::OutsideSupport { .. } => Self {
                code: 4,
                kind: "outside-support",
                message: e.to_string(),
            },
            MarkovError::InvalidTimes(_) | MarkovError::InvalidArgument(_) => Self::bad_input(e.to_string()),
            MarkovError::Spectral(SpectralError::UnsupportedQ(_)) => Self::bad_input(e.to_string()),
            MarkovError::Spectral(_) => Self::numeric(e.to_string()),
        }
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        MarkovError::from(e).into()
    }
}

impl From<Q1Error> for Failure {
    fn from(e: Q1Error) -> Self {
        match e {
            Q1Error::Times(m) => m.into(),
            Q1Error::InvalidParams { .. } => Self::bad_input(e.to_string()),
            Q1Error::UnidentifiableRegime { .. } => Self::numeric(e.to_string()),
        }
    }
}

impl From<Qm1Error> for Failure {
    fn from(e: Qm1Error) -> Self {
        match e {
            Qm1Error::Grid(m) => m.into(),
            Qm1Error::InvalidParams { .. } | Qm1Error::InvalidTimes(_) => Self::bad_input(e.to_string()),
            Qm1Error::DegenerateConditioning { .. } => Self::numeric(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

/// `start:stop:step` or a comma list; strictly increasing.
fn parse_times(spec: &str) -> Result<Vec<f64>, Failure> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Failure::bad_input(format!("not a finite number: {s:?}")))
    };
    let times = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, h] = parts[..] else {
            return Err(Failure::bad_input(format!("grid must be start:stop:step, got {spec:?}")));
        };
        let (start, stop, step) = (num(a)?, num(b)?, num(h)?);
        if step <= 0.0 || stop < start {
            return Err(Failure::bad_input(format!("grid {spec:?} needs step > 0 and stop >= start")));
        }
        let count = ((stop - start) / step * (1.0 + 1e-12)).floor() as usize;
        (0..=count).map(|i| start + i as f64 * step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::bad_input(format!("times must increase strictly: {spec:?}")));
    }
    Ok(times)
}

fn times_n<const K: usize>(spec: &str) -> Result<[f64; K], Failure> {
    let v = parse_times(spec)?;
    v.try_into()
        .map_err(|v: Vec<f64>| Failure::bad_input(format!("expected {K} times, got {}", v.len())))
}

/// Map `Y_t = sign · c · X_{λt}` taking (η, θ) to (η', ±η') with η' > 0.
struct Normalization {
    sign: f64,
    space_scale: f64,
    time_scale: f64,
    eta: f64,
    theta: f64,
}

impl Normalization {
    fn new(eta: f64, theta: f64) -> Result<Self, Failure> {
        if eta * theta == 0.0 {
            return Err(Failure::bad_input("--normalize needs ηθ ≠ 0"));
        }
        let sign = eta.signum();
        let (eta, theta) = (eta * sign, theta * sign);
        let root = (eta * theta.abs()).sqrt();
        Ok(Self {
            sign,
            space_scale: (eta / theta.abs()).sqrt(),
            time_scale: theta.abs() / eta,
            eta: root,
            theta: theta.signum() * root,
        })
    }

    fn json(&self) -> Value {
        json!({"sign": self.sign, "space_scale": self.space_scale, "time_scale": self.time_scale, "eta": self.eta, "theta": self.theta})
    }
}

/// Validated parameters, optionally normalized; `q` falls back to `q_default`.
fn resolve(args: &ParamArgs, q_default: Option<f64>) -> Result<(HarnessParams, Option<Value>), Failure> {
    let q = match (args.q, q_default) {
        (Some(q), Some(d)) if q != d => return Err(Failure::bad_input(format!("this command needs q = {d}, got {q}"))),
        (Some(q), _) | (None, Some(q)) => q,
        (None, None) => return Err(Failure::bad_input("--q is required")),
    };
    let (mut eta, mut theta, mut map) = (args.eta, args.theta, None);
    if args.normalize {
        let n = Normalization::new(eta, theta)?;
        (eta, theta) = (n.eta, n.theta);
        map = Some(n.json());
    }
    let p = HarnessParams::new(eta, theta, q).map_err(|e| Failure::bad_input(e.to_string()))?;
    Ok((p, map))
}

/// q = 1 parameters with `η, θ < 0` handled by `X → -X`; returns the sign.
fn q1_params(p: &HarnessParams) -> Result<(Q1Params, f64), Failure> {
    let sign = if p.eta < 0.0 && p.theta < 0.0 { -1.0 } else { 1.0 };
    let qp = Q1Params::new(sign * p.eta, sign * p.theta)
        .map_err(|_| Failure::bad_input(format!("q = 1 needs ηθ > 0, got η={}, θ={}", p.eta, p.theta)))?;
    Ok((qp, sign))
}

fn emit(reports: &[CheckReport]) -> bool {
    for r in reports {
        println!("{}", r.to_json_line());
    }
    reports.iter().all(|r| r.pass)
}

fn write_output(path: &PathBuf, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure {
        code: 3,
        kind: "io",
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn default_path(stem: &str, format: Format) -> PathBuf {
    PathBuf::from(format!("{stem}.{}", if format == Format::Csv { "csv" } else { "json" }))
}

fn cmd_sample(a: &SampleArgs) -> Outcome {
    let (params, map) = resolve(&a.params, None)?;
    let grid = parse_times(&a.grid)?;
    validate_grid(&grid)?;
    let seed = a.seed.seed;
    let (sampler, values): (&str, Vec<Vec<f64>>) = if params.q == 1.0 {
        let (qp, sign) = q1_params(&params)?;
        let paths = Q1Sampler::new(qp, a.straddle.into()).sample_paths(&grid, a.paths, seed)?;
        ("q1-exact", paths.into_iter().map(|p| p.values.into_iter().map(|v| sign * v).collect()).collect())
    } else if params.q == -1.0 {
        let qp = Qm1Params::from_harness(&params)?;
        ("qm1-exact", sample_qm1_paths(&grid, a.paths, seed, &qp)?.into_iter().map(|p| p.values).collect())
    } else {
        let mut s = PathSampler::new(TransitionKernel::new(params.clone(), a.order));
        ("quadrature", s.sample_paths(&grid, a.paths, seed)?.into_iter().map(|p| p.values).collect())
    };
    let body = match a.format {
        Format::Csv => {
            let mut out = grid.iter().map(|t| format!("t={t}")).collect::<Vec<_>>().join(",");
            out.push('\n');
            for row in &values {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                let _ = writeln!(out, "{}", line.join(","));
            }
            out
        }
        Format::Json => json!({"grid": grid, "seed": seed, "paths": values}).to_string(),
    };
    let path = a.output.clone().unwrap_or_else(|| default_path("qharness-sample", a.format));
    write_output(&path, &body)?;
    let n = values.len() as f64;
    let mean: Vec<f64> = (0..grid.len()).map(|i| values.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let variance: Vec<f64> = (0..grid.len())
        .map(|i| values.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
        .collect();
    let mut summary = json!({
        "command": "sample", "sampler": sampler, "eta": params.eta, "theta": params.theta, "q": params.q,
        "paths": values.len(), "seed": seed, "grid": grid, "mean": mean, "variance": variance,
        "output": path.display().to_string(),
    });
    if let Some(m) = map {
        summary["normalization"] = m;
    }
    println!("{summary}");
    Ok(true)
}

fn cmd_quadrature(a: &QuadratureArgs) -> Outcome {
    let (params, map) = resolve(&a.params, None)?;
    if params.q.abs() >= 1.0 {
        return Err(Failure::bad_input("quadrature needs |q| < 1"));
    }
    let kernel = TransitionKernel::new(params.clone(), a.order);
    let mut info = json!({"command": "quadrature", "eta": params.eta, "theta": params.theta, "q": params.q, "t": a.t, "order": a.order});
    let measure = match (a.s, a.x) {
        (Some(s), Some(x)) => {
            info["kind"] = json!("kernel");
            info["s"] = json!(s);
            info["x"] = json!(x);
            kernel.kernel(s, a.t, x)?
        }
        (None, None) => {
            info["kind"] = json!("marginal");
            if a.t.is_nan() || a.t < 0.0 {
                return Err(Failure::bad_input(format!("need t >= 0, got {}", a.t)));
            }
            match support_interval(a.t, &params) {
                Ok((lo, hi)) => info["support_interval"] = json!([lo, hi]),
                Err(SpectralError::DegenerateAC) => {
                    info["support_interval"] = Value::Null;
                    info["support_note"] = json!("no absolutely continuous part (ηθ + 1 - q = 0)");
                }
                Err(e) => return Err(e.into()),
            }
            info["atoms"] = json!(discrete_atoms(a.t, &params));
            kernel.marginal(a.t)?
        }
        _ => return Err(Failure::bad_input("--s and --x go together")),
    };
    info["nodes"] = json!(measure.len());
    info["mean"] = json!(measure.mean());
    info["variance"] = json!(measure.variance());
    let body = match a.format {
        Format::Csv => measure.to_csv(),
        Format::Json => measure.to_json(),
    };
    let path = a.output.clone().unwrap_or_else(|| default_path("qharness-quadrature", a.format));
    write_output(&path, &body)?;
    info["output"] = json!(path.display().to_string());
    if let Some(m) = map {
        info["normalization"] = m;
    }
    println!("{info}");
    Ok(true)
}

fn print_normalization(map: &Option<Value>) {
    if let Some(m) = map {
        println!("{}", json!({"normalization": m}));
    }
}

fn run_exact(n_identities: i64, tuples: usize, seed: u64) -> bool {
    let mut ok = true;
    for kind in [Sweep::Expansion, Sweep::Representation, Sweep::Recursion, Sweep::Tilde] {
        let (report, failing) = exact_suite(kind, n_identities, tuples, seed, QDraw::Interior);
        for f in &failing {
            println!("{}", f.to_json_line());
        }
        ok &= emit(&[report]);
    }
    ok & emit(&[tilde_at_zero_suite(n_identities, tuples, seed)])
}

fn run_appendix(n_max: i64, tuples: usize, seed: u64) -> bool {
    let (report, failing) = exact_suite(Sweep::Appendix, n_max, tuples, seed, QDraw::Interior);
    for f in &failing {
        println!("{}", f.to_json_line());
    }
    emit(&[report])
}

fn numeric_params(num: &NumericArgs) -> Result<(HarnessParams, Option<Value>), Failure> {
    let r = resolve(&num.params, None)?;
    if r.0.q.abs() >= 1.0 {
        return Err(Failure::bad_input("martingale/ck/harness checks need |q| < 1; use q1-moments or qm1-exact"));
    }
    Ok(r)
}

fn run_q1(params: &HarnessParams, grid: &[f64], paths: usize, seed: u64, mode: StraddleMode) -> Outcome {
    let (qp, _) = q1_params(params)?;
    let mut reports = q1_moment_reports(&qp, grid, paths, seed, mode)?;
    reports.push(q1_regime_report(&qp));
    let b = qp.boundary();
    reports.push(q1_ks_report(&qp, b, 1.5 * b, paths, seed)?);
    reports.push(q1_ks_report(&qp, 0.5 * b, 0.8 * b, paths, seed)?);
    Ok(emit(&reports))
}

fn cmd_check(which: &CheckCommand) -> Outcome {
    match which {
        CheckCommand::Identities { n_max, tuples, seed } => Ok(run_exact(*n_max, *tuples, seed.seed)),
        CheckCommand::Appendix { n_max, tuples, seed } => Ok(run_appendix(*n_max, *tuples, seed.seed)),
        CheckCommand::Martingale { num, times, x } => {
            let (p, map) = numeric_params(num)?;
            let [s, u] = times_n::<2>(times)?;
            print_normalization(&map);
            // The intermediate time only feeds the unused CK half.
            let [m, _] = martingale_ck_reports(&p, num.order, (s, 0.5 * (s + u), u), num.n_max, x.as_deref(), num.tolerance.unwrap_or(TOL_MARTINGALE), TOL_CK)?;
            Ok(emit(&[m]))
        }
        CheckCommand::Ck { num, times, x } => {
            let (p, map) = numeric_params(num)?;
            let [s, t, u] = times_n::<3>(times)?;
            print_normalization(&map);
            let [_, c] = martingale_ck_reports(&p, num.order, (s, t, u), num.n_max, x.as_deref(), TOL_MARTINGALE, num.tolerance.unwrap_or(TOL_CK))?;
            Ok(emit(&[c]))
        }
        CheckCommand::Harness { num, times, a_max, b_max } => {
            let (p, map) = numeric_params(num)?;
            let [s, t, u] = times_n::<3>(times)?;
            print_normalization(&map);
            let r = harness_report(&p, num.order, (s, t, u), (*a_max, *b_max), num.tolerance.unwrap_or(TOL_HARNESS))?;
            Ok(emit(&[r]))
        }
        CheckCommand::Q1Moments { params, grid, paths, seed, straddle } => {
            let (p, map) = resolve(params, Some(1.0))?;
            let grid = parse_times(grid)?;
            print_normalization(&map);
            run_q1(&p, &grid, *paths, seed.seed, (*straddle).into())
        }
        CheckCommand::Qm1Exact { params, times } => {
            let (p, map) = resolve(params, Some(-1.0))?;
            let ts = times_n::<3>(times)?;
            print_normalization(&map);
            Ok(emit(&qm1_reports(&Qm1Params::from_harness(&p)?, ts.into())?))
        }
        CheckCommand::All { params, seed, paths } => {
            let mut ok = run_exact(6, 20, seed.seed);
            ok &= run_appendix(8, 10, seed.seed);
            if params.q.is_some() {
                let (p, map) = resolve(params, None)?;
                print_normalization(&map);
                ok &= if p.q == 1.0 {
                    run_q1(&p, &[0.0, 0.25, 0.5, 1.0, 1.5, 2.0], *paths, seed.seed, StraddleMode::ThroughBoundary)?
                } else if p.q == -1.0 {
                    let qp = Qm1Params::from_harness(&p)?;
                    emit(&qm1_reports(&qp, (0.5, 1.0, 2.0))?) & emit(&qm1_reports(&qp, (0.1, 0.2, 0.4))?)
                } else {
                    let mc = martingale_ck_reports(&p, DEFAULT_ORDER, (0.5, 1.0, 1.5), 8, None, TOL_MARTINGALE, TOL_CK)?;
                    let h = harness_report(&p, DEFAULT_ORDER, (0.5, 1.0, 1.5), (2, 2), TOL_HARNESS)?;
                    emit(&mc) & emit(&[h])
                };
            }
            Ok(ok)
        }
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", json!({"error": f.kind, "message": f.message, "exit_code": f.code}));
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(Failure::bad_input(e.to_string().trim_end())),
    };
    let outcome = match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Quadrature(a) => cmd_quadrature(a),
        Command::Check { which } => cmd_check(which),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => fail(f),
    }
}
