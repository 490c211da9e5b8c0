mod experiment;
mod plot;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use netalloc::distributed::{compare_traces, simulate, write_messages_csv, DistributedMethod};
use netalloc::metrics::{brute_force_solve, feasibility_violation, utility, KKT_MAX_LINKS};
use netalloc::problem::{
    generate_random_network, generate_uniform_network, load_problem, make_quadratic_utilities, save_problem_with,
    MatrixFormat, NetworkProblem, UtilitySpec,
};
use netalloc::solvers::{
    build_certificate, recover_primal_from_certificate, solve, solve_ellipsoid, Method, SolverConfig,
};
use serde::Serialize;

/// Failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    pub fn solver(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, error: error.into() }
    }

    pub fn check(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 4, error: error.into() }
    }
}

pub type Outcome<T = ()> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "netalloc", version, about = "Dual methods for network utility maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a problem instance as JSON.
    Generate(GenerateArgs),
    /// Run one method on a problem file.
    Solve(SolveArgs),
    /// Run an experiment spec and write reports, CSVs and a summary table.
    Bench(BenchArgs),
    /// Run the ellipsoid method and recover a primal point from its certificate.
    Certify(CertifyArgs),
    /// Run a method as a message-passing simulation and compare with the centralized run.
    Distributed(DistributedArgs),
    /// Draw convergence curves from report files as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NetworkKind {
    Uniform,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UtilityKind {
    Quadratic,
    Log,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixKind {
    Dense,
    Coo,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "random")]
    network: NetworkKind,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// Common capacity of a uniform network.
    #[arg(long, default_value_t = 5.0)]
    b: f64,
    #[arg(long, value_enum, default_value = "quadratic")]
    utility: UtilityKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "dense")]
    matrix: MatrixKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iter", default_value_t = 1_000_000)]
    max_iter: usize,
    /// Bound on the norm of an optimal dual point. Computed for small
    /// quadratic instances when omitted.
    #[arg(long = "R")]
    radius: Option<f64>,
    #[arg(long = "record-every", default_value_t = 1)]
    record_every: usize,
    /// Stop once the gap and violation targets are met.
    #[arg(long = "early-exit")]
    early_exit: bool,
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    spec: PathBuf,
    /// Overrides the output directory of the experiment file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 4 when a row misses its accuracy targets.
    #[arg(long)]
    check: bool,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct CertifyArgs {
    problem: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistributedArgs {
    problem: PathBuf,
    #[arg(long, value_parser = parse_distributed)]
    method: DistributedMethod,
    #[command(flatten)]
    run: RunArgs,
    /// Largest accepted deviation between the two runs.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Message log as CSV.
    #[arg(long)]
    messages: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: netalloc::Error| e.to_string())
}

fn parse_distributed(s: &str) -> Result<DistributedMethod, String> {
    s.parse().map_err(|e: netalloc::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Bench(a) => experiment::bench(&a.spec, a.out.as_deref(), a.check, a.jobs),
        Command::Certify(a) => certify(a),
        Command::Distributed(a) => distributed(a),
        Command::Plot(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn generate(a: GenerateArgs) -> Outcome {
    let network = match a.network {
        NetworkKind::Uniform => generate_uniform_network(a.m, a.n, a.b),
        NetworkKind::Random => generate_random_network(a.m, a.n, a.seed),
    }
    .map_err(Failure::input)?;
    let utilities = match a.utility {
        UtilityKind::Quadratic => make_quadratic_utilities(a.n, a.seed),
        UtilityKind::Log => UtilitySpec::logarithmic_for(&network),
    };
    let problem = NetworkProblem::new(network, utilities).map_err(Failure::input)?;
    let format = match a.matrix {
        MatrixKind::Dense => MatrixFormat::Dense,
        MatrixKind::Coo => MatrixFormat::Coo,
    };
    save_problem_with(&problem, &a.out, format)
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::solver)
}

fn read_problem(path: &Path) -> Outcome<NetworkProblem> {
    load_problem(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::input)
}

/// Optimal utility when a brute-force oracle covers the instance.
pub fn known_optimum(problem: &NetworkProblem) -> Option<f64> {
    brute_force_solve(problem, 41).ok().map(|(_, value)| value)
}

/// `R` from the command line, or the norm of the KKT multiplier on small
/// quadratic instances.
pub fn resolve_radius(problem: &NetworkProblem, given: Option<f64>) -> anyhow::Result<f64> {
    if let Some(r) = given {
        return Ok(r);
    }
    if problem.utilities.is_strongly_concave() && problem.links() <= KKT_MAX_LINKS {
        let star = netalloc::metrics::kkt_solve(problem)?;
        let norm = star.multipliers.iter().map(|v| v * v).sum::<f64>().sqrt();
        return Ok(norm.max(1e-6));
    }
    Err(anyhow!("--R is required for this instance (no exact dual solution available)"))
}

fn config_for(problem: &NetworkProblem, run: &RunArgs) -> Outcome<SolverConfig> {
    let radius = resolve_radius(problem, run.radius).map_err(Failure::input)?;
    let cfg = SolverConfig {
        eps: run.eps,
        radius,
        max_iter: run.max_iter,
        seed: run.seed,
        record_every: run.record_every,
        reference_value: known_optimum(problem),
        early_exit: run.early_exit,
        ..Default::default()
    };
    cfg.validate().map_err(Failure::input)?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => experiment::write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::solver),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(Failure::solver)
        }
    }
}

fn solve_cmd(a: SolveArgs) -> Outcome {
    let problem = read_problem(&a.problem)?;
    let cfg = config_for(&problem, &a.run)?;
    let report = solve(&problem, a.method, &cfg).map_err(Failure::solver)?;
    let text = match a.format {
        Format::Json => report.to_json().map_err(Failure::solver)? + "\n",
        Format::Csv => report.history_csv(true),
    };
    emit(a.out.as_deref(), &text)
}

#[derive(Serialize)]
struct CertifyOutput {
    iterations: usize,
    interior_steps: usize,
    weights: std::collections::BTreeMap<usize, f64>,
    primal: Vec<f64>,
    utility: f64,
    feasibility: f64,
    optimum: Option<f64>,
    dual: Vec<f64>,
}

fn certify(a: CertifyArgs) -> Outcome {
    let problem = read_problem(&a.problem)?;
    let cfg = config_for(&problem, &a.run)?;
    let (report, trace) = solve_ellipsoid(&problem, &cfg).map_err(Failure::solver)?;
    let xi = build_certificate(&trace).map_err(Failure::solver)?;
    let x = recover_primal_from_certificate(&trace, &xi).map_err(Failure::solver)?;
    let out = CertifyOutput {
        iterations: report.iterations,
        interior_steps: trace.domain_steps().len(),
        utility: utility(&problem, &x),
        feasibility: feasibility_violation(&problem, &x),
        optimum: cfg.reference_value,
        weights: xi.weights,
        primal: x.into_inner(),
        dual: report.dual.into_inner(),
    };
    let text = serde_json::to_string_pretty(&out).map_err(Failure::solver)? + "\n";
    emit(a.out.as_deref(), &text)
}

fn distributed(a: DistributedArgs) -> Outcome {
    let problem = read_problem(&a.problem)?;
    let cfg = config_for(&problem, &a.run)?;
    let central = solve(&problem, a.method.centralized(), &cfg).map_err(Failure::solver)?;
    let run = simulate(a.method, &problem, &cfg, a.messages.is_some()).map_err(Failure::solver)?;
    let deviation = compare_traces(&central, &run.report).map_err(Failure::solver)?;
    if let (Some(path), Some(log)) = (&a.messages, &run.messages) {
        let mut buf = Vec::new();
        write_messages_csv(log, &mut buf).map_err(Failure::solver)?;
        experiment::write_atomic(path, &buf)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::solver)?;
    }
    if let Some(path) = &a.out {
        emit(Some(path), &(run.report.to_json().map_err(Failure::solver)? + "\n"))?;
    }
    println!(
        "method={} iterations={} messages={} max_deviation={deviation:e}",
        a.method, run.report.iterations, run.message_count
    );
    if deviation > a.tolerance {
        return Err(Failure::check(anyhow!("distributed run deviates by {deviation:e} (tolerance {:e})", a.tolerance)));
    }
    Ok(())
}

fn plot_cmd(a: PlotArgs) -> Outcome {
    let mut reports = Vec::new();
    for path in &a.reports {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::input)?;
        let report = netalloc::solvers::SolverReport::from_json(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(Failure::input)?;
        reports.push(report);
    }
    let svg = plot::convergence_svg(&reports).map_err(Failure::input)?;
    emit(Some(&a.out), &svg)
}
