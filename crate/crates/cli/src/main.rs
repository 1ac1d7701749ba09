//! `mdescent`: run solves, reference flows, and the benchmark reproduction.
//!
//! Exit codes: 0 success, 2 iteration cap reached, 3 numerical failure,
//! 64 usage error, 74 I/O error.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use manifold_descent::escape::Classification;
use manifold_descent::flows::{check_assumptions, AssumptionCheck};
use manifold_descent::problems::{self, PolynomialSpec, BUILTIN_NAMES};
use manifold_descent::{
    integrate, solve_with_escape, Error, FlowKind, FlowSpec, Problem, SolveReport, SolverConfig, StepRule, Termination,
};
use nalgebra::DVector;

use output::{num, vector};

const EXIT_MAX_ITERS: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Numerical(Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::RankDeficient { .. } | Error::NonFinite(_) | Error::LineSearchFailed { .. } => {
                CliError::Numerical(e)
            }
            Error::DimensionMismatch { .. }
            | Error::InvalidConfig(_)
            | Error::UnknownProblem(_)
            | Error::Spec { .. } => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mdescent",
    version,
    about = "Equality-constrained descent on an extended system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve from one starting point, restarting away from non-minima.
    Solve(SolveArgs),
    /// Integrate one of the reference flows.
    Flow(FlowArgs),
    /// Solve the built-in problems from their fixed starting points.
    Reproduce(ReproduceArgs),
    /// Sample a box and report evidence about the flow hypotheses.
    Check(CheckArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ProblemSource {
    /// Built-in problem name.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_NAMES))]
    problem: Option<String>,
    /// Polynomial problem file (TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl ProblemSource {
    fn load(&self) -> Result<Problem, CliError> {
        if let Some(name) = &self.problem {
            return Ok(problems::builtin(name)?);
        }
        let path = self.spec.as_deref().expect("clap enforces one source");
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let spec =
            PolynomialSpec::from_toml_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        problems::from_spec(&spec).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StepRuleArg {
    Safeguarded,
    PenaltyArmijo,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: ProblemSource,
    /// Starting point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// Trajectory CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Lipschitz bound of the cost gradient.
    #[arg(long)]
    lipschitz_f: Option<f64>,
    #[arg(long)]
    tol_grad: Option<f64>,
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long, value_enum)]
    step_rule: Option<StepRuleArg>,
    #[arg(long)]
    max_restarts: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Manifold,
    Extended,
    Tts,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    source: ProblemSource,
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Time scale of the two-time-scale flow.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = FlowSpec::DEFAULT_DT)]
    dt: f64,
    /// Flow CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Restrict to one built-in problem.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_NAMES))]
    problem: Option<String>,
    #[arg(long, env = "MDESCENT_OUT_DIR", default_value = "runs")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    source: ProblemSource,
    /// Half width of the sampling cube.
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_point(text: &str, n: usize) -> Result<DVector<f64>, CliError> {
    let coords = text
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("invalid --x0 `{text}`: {e}")))?;
    if coords.len() != n {
        return Err(CliError::Usage(format!(
            "--x0 has {} coordinates, the problem has n = {n}",
            coords.len()
        )));
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(CliError::Usage(format!("--x0 `{text}` is not finite")));
    }
    Ok(DVector::from_vec(coords))
}

fn classification_name(report: &SolveReport) -> &'static str {
    match report.second_order.as_ref().map(|s| s.classification) {
        Some(Classification::LocalMinCandidate) => "local-min-candidate",
        Some(Classification::EscapableStationary) => "escapable-stationary",
        None => "unclassified",
    }
}

fn termination_code(t: Termination) -> u8 {
    match t {
        Termination::Converged => 0,
        Termination::MaxIters => EXIT_MAX_ITERS,
        Termination::RankDeficient | Termination::LineSearchFailed => EXIT_NUMERICAL,
    }
}

fn summary(problem: &Problem, report: &SolveReport) -> Vec<String> {
    let mut lines = vec![
        format!("problem={}", problem.name()),
        format!("termination={}", report.termination.as_str()),
        format!("iterations={}", report.iterations),
        format!("restarts={}", report.restarts),
        format!("x_star={}", vector(&report.x_star)),
        format!("f_star={}", num(report.f_star)),
        format!("lambda={}", vector(&report.lambda_star)),
        format!("classification={}", classification_name(report)),
    ];
    if let Some(so) = &report.second_order {
        lines.push(format!("max_eig={}", num(so.max_eig)));
    }
    lines.push(format!("feasibility={}", num(report.feasibility)));
    lines.push(format!("stationarity={}", num(report.stationarity)));
    lines
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, CliError> {
    let problem = args.source.load()?;
    let x0 = parse_point(&args.x0, problem.n())?;
    let defaults = SolverConfig::default();
    let config = SolverConfig {
        max_iters: args.max_iters.unwrap_or(defaults.max_iters),
        lipschitz_f: args.lipschitz_f.unwrap_or(defaults.lipschitz_f),
        tol_grad: args.tol_grad.unwrap_or(defaults.tol_grad),
        tol_feas: args.tol_feas.unwrap_or(defaults.tol_feas),
        step_rule: match args.step_rule {
            Some(StepRuleArg::PenaltyArmijo) => StepRule::PenaltyArmijo,
            Some(StepRuleArg::Safeguarded) => StepRule::Safeguarded,
            None => defaults.step_rule,
        },
        max_restarts: args.max_restarts.unwrap_or(defaults.max_restarts),
        ..defaults
    };
    let report = solve_with_escape(&problem, &x0, &config)?;
    if let Some(path) = &args.out {
        output::write_trajectory(path, problem.n(), &report.trajectory).map_err(CliError::io(path))?;
    }
    for line in summary(&problem, &report) {
        println!("{line}");
    }
    Ok(termination_code(report.termination))
}

fn cmd_flow(args: &FlowArgs) -> Result<u8, CliError> {
    let problem = args.source.load()?;
    let x0 = parse_point(&args.x0, problem.n())?;
    let kind = match args.kind {
        KindArg::Manifold => FlowKind::OnManifold,
        KindArg::Extended => FlowKind::Extended,
        KindArg::Tts => FlowKind::TwoTimeScale,
    };
    let spec = FlowSpec {
        kind,
        epsilon: args.epsilon,
        t_end: args.t_end,
        dt: args.dt,
    };
    spec.validate()?;
    if kind == FlowKind::OnManifold {
        let feas = problem.constraints(&x0)?.norm();
        if feas > 1e-8 {
            eprintln!(
                "warning: x0 is off the constraint manifold (|h| = {feas:.3e}); the on-manifold flow only keeps feasible points feasible"
            );
        }
    }
    let trace = integrate(&problem, &x0, &spec)?;
    if let Some(path) = &args.out {
        output::write_flow(path, problem.n(), &trace).map_err(CliError::io(path))?;
    }
    let last = trace.len() - 1;
    println!("problem={}", problem.name());
    println!("samples={}", trace.len());
    println!("t_end={}", num(trace.times[last]));
    println!("x_end={}", vector(trace.final_state()));
    println!("f_end={}", num(trace.f_vals[last]));
    println!("V_end={}", num(trace.v_vals[last]));
    println!("max_feas_norm={}", num(trace.max_feas_norm()));
    println!("feas_norm_end={}", num(trace.feas_norms[last]));
    println!("stationarity_end={}", num(trace.grad_ftilde_norms[last]));
    Ok(0)
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<u8, CliError> {
    let names: Vec<&str> = match &args.problem {
        Some(name) => vec![name.as_str()],
        None => BUILTIN_NAMES.to_vec(),
    };
    let config = SolverConfig::default();
    let mut manifest = vec!["file,problem,x0,termination,iterations,restarts,f_star".to_string()];
    let mut code = 0;
    for name in names {
        let problem = problems::builtin(name)?;
        for (i, x0) in problems::reproduction_starts(name)?.iter().enumerate() {
            let report = solve_with_escape(&problem, x0, &config)?;
            let file = format!("{name}_{i}.csv");
            let path = args.out_dir.join(&file);
            output::write_trajectory(&path, problem.n(), &report.trajectory).map_err(CliError::io(&path))?;
            println!(
                "{file}: termination={} iterations={} f_star={}",
                report.termination.as_str(),
                report.iterations,
                num(report.f_star)
            );
            manifest.push(format!(
                "{file},{name},\"{}\",{},{},{},{}",
                vector(x0),
                report.termination.as_str(),
                report.iterations,
                report.restarts,
                num(report.f_star)
            ));
            code = code.max(termination_code(report.termination));
        }
    }
    let path = args.out_dir.join("manifest.csv");
    output::write_lines(&path, &manifest).map_err(CliError::io(&path))?;
    Ok(code)
}

fn cmd_check(args: &CheckArgs) -> Result<u8, CliError> {
    let problem = args.source.load()?;
    if !(args.half_width > 0.0 && args.half_width.is_finite()) {
        return Err(CliError::Usage(format!(
            "--half-width must be positive, got {}",
            args.half_width
        )));
    }
    let check = AssumptionCheck {
        seed: args.seed,
        ..AssumptionCheck::cube(problem.n(), args.half_width, args.count)
    };
    let report = check_assumptions(&problem, &check);
    println!("problem={}", problem.name());
    println!("samples={}", report.samples);
    println!("rank_deficient={}", report.rank_deficient);
    println!("a1_hits={}", report.a1_hits.len());
    println!("a2_hits={}", report.a2_hits.len());
    println!("manifold_points={}", report.manifold_points);
    println!("max_grad_v_on_manifold={}", num(report.max_grad_v_on_manifold));
    println!("sublevel_diameter={}", num(report.sublevel_diameter));
    println!("sublevel_diameter_doubled={}", num(report.sublevel_diameter_doubled));
    println!("a3_suspect={}", report.a3_suspect);
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Flow(args) => cmd_flow(args),
        Command::Reproduce(args) => cmd_reproduce(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
