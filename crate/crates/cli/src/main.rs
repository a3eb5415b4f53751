use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ktsolve_core::analysis::{rate_report, run_invariant_suite, CheckStatus};
use ktsolve_core::linalg::mm;
use ktsolve_core::{
    generate, solve, Builder, MatrixHandle, Method, ProblemSpec, RelaxationSchedule, SolveConfig,
    SolveRun, Termination,
};
use serde::{Deserialize, Serialize};

mod relax;

use relax::parse_relax;

/// Kaczmarz and Kaczmarz-Tanabe solvers for consistent linear systems.
#[derive(Parser)]
#[command(name = "ktsolve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve A x = b with the chosen method
    Solve(SolveArgs),
    /// Restricted singular values of the iteration operator Q(u)
    Rate(RateArgs),
    /// Run the invariant suite on a system
    Check(CheckArgs),
    /// Write a generated problem to A.mtx, b.txt and x_true.txt
    Gen(GenArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// MatrixMarket file holding A
    #[arg(long, value_name = "PATH", conflicts_with = "gen")]
    matrix: Option<PathBuf>,
    /// Right-hand side, one value per line
    #[arg(long, value_name = "PATH", requires = "matrix")]
    rhs: Option<PathBuf>,
    /// Known solution used for error tracking
    #[arg(long, value_name = "PATH", requires = "matrix")]
    x_true: Option<PathBuf>,
    /// Generated problem, e.g. random:20,10,seed=3 or tomo:8,40
    #[arg(long, value_name = "SPEC")]
    gen: Option<String>,
    /// Relaxation: a scalar, a comma list of m values, or random:lo,hi,seed=s
    #[arg(long, value_name = "SPEC", default_value = "1.0")]
    relax: String,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_name = "NAME", default_value = "relaxed-kt")]
    method: String,
    /// Starting point: zero or a vector file
    #[arg(long, value_name = "zero|PATH", default_value = "zero")]
    x0: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Construction used for C(u)
    #[arg(long, value_name = "NAME", default_value = "algorithm1")]
    builder: String,
    /// Per-iteration CSV history
    #[arg(long, value_name = "PATH.csv")]
    history: Option<PathBuf>,
    /// Run summary as JSON
    #[arg(long, value_name = "PATH.json")]
    summary: Option<PathBuf>,
    /// Write C(u) as a MatrixMarket array
    #[arg(long, value_name = "PATH.mtx")]
    export_c: Option<PathBuf>,
    /// Re-run the configuration recorded in a summary file
    #[arg(long, value_name = "PATH.json", conflicts_with_all = ["matrix", "gen"])]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Length of the bound curve sigma^k
    #[arg(long, default_value_t = 50)]
    curve_len: usize,
    /// Output file (stdout when absent)
    #[arg(long, value_name = "PATH.json")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Random vectors per vector-level check
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when absent)
    #[arg(long, value_name = "PATH.json")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Problem spec, e.g. rank_deficient:12,8,rank=5,seed=1
    spec: String,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

/// Where the system came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Source {
    Gen {
        spec: String,
    },
    Files {
        matrix: PathBuf,
        rhs: Option<PathBuf>,
        x_true: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunConfig {
    source: Source,
    method: Method,
    relax: String,
    builder: String,
    x0: String,
    tol: f64,
    max_iters: usize,
}

/// Everything about a run except wall-clock times, so that re-running the
/// same configuration gives an identical file.
#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    config: RunConfig,
    mu: Vec<f64>,
    termination: Termination,
    iterations: usize,
    final_rel_residual: f64,
    final_abs_error: Option<f64>,
    rel_residuals: Vec<f64>,
    abs_errors: Vec<Option<f64>>,
    solution: Vec<f64>,
}

#[derive(Serialize)]
struct HistoryRow {
    iter: usize,
    rel_residual: f64,
    abs_error: Option<f64>,
    elapsed_ms: f64,
}

struct System {
    a: MatrixHandle,
    b: Option<Vec<f64>>,
    x_true: Option<Vec<f64>>,
}

fn load(source: &Source) -> Result<System> {
    match source {
        Source::Gen { spec } => {
            let spec: ProblemSpec = spec.parse().with_context(|| format!("--gen '{spec}'"))?;
            let p = generate(&spec)?;
            Ok(System {
                a: p.a,
                b: Some(p.b),
                x_true: Some(p.x_true),
            })
        }
        Source::Files { matrix, rhs, x_true } => {
            let a = mm::read_matrix_market(matrix)?;
            let b = rhs.as_ref().map(mm::read_vector).transpose()?;
            let xt = x_true.as_ref().map(mm::read_vector).transpose()?;
            if let Some(b) = &b {
                if b.len() != a.nrows() {
                    bail!(
                        "{}: {} values but {} has {} rows",
                        rhs.as_ref().unwrap().display(),
                        b.len(),
                        matrix.display(),
                        a.nrows()
                    );
                }
            }
            if let Some(x) = &xt {
                if x.len() != a.ncols() {
                    bail!(
                        "{}: {} values but {} has {} columns",
                        x_true.as_ref().unwrap().display(),
                        x.len(),
                        matrix.display(),
                        a.ncols()
                    );
                }
            }
            Ok(System { a, b, x_true: xt })
        }
    }
}

impl ProblemArgs {
    fn source(&self) -> Result<Source> {
        match (&self.gen, &self.matrix) {
            (Some(spec), None) => Ok(Source::Gen { spec: spec.clone() }),
            (None, Some(matrix)) => Ok(Source::Files {
                matrix: matrix.clone(),
                rhs: self.rhs.clone(),
                x_true: self.x_true.clone(),
            }),
            _ => bail!("give exactly one of --matrix or --gen"),
        }
    }
}

fn schedule(relax: &str, m: usize) -> Result<RelaxationSchedule> {
    let u = parse_relax(relax, m)?;
    if let Some(w) = u.warning() {
        eprintln!("warning: {w}");
    }
    Ok(u)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => {
            let mut f = File::create(path).with_context(|| format!("{}", path.display()))?;
            writeln!(f, "{text}").with_context(|| format!("{}", path.display()))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn write_history(path: &Path, run: &SolveRun) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("{}", path.display()))?;
    for r in &run.records {
        w.serialize(HistoryRow {
            iter: r.iter,
            rel_residual: r.rel_residual,
            abs_error: r.abs_error,
            elapsed_ms: r.elapsed_ms,
        })
        .with_context(|| format!("{}", path.display()))?;
    }
    w.flush().with_context(|| format!("{}", path.display()))?;
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let config = match &args.replay {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
            let s: Summary =
                serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
            s.config
        }
        None => RunConfig {
            source: args.problem.source()?,
            method: args.method.parse()?,
            relax: args.problem.relax.clone(),
            builder: args.builder.clone(),
            x0: args.x0.clone(),
            tol: args.tol,
            max_iters: args.max_iters,
        },
    };
    let sys = load(&config.source)?;
    let b = sys.b.clone().context("solve needs a right-hand side (--rhs or --gen)")?;
    let (m, n) = (sys.a.nrows(), sys.a.ncols());
    let u = schedule(&config.relax, m)?;
    if !config.method.is_relaxed() && u.mu().iter().any(|&v| v != 1.0) {
        eprintln!("warning: --method {} uses mu = 1; --relax is ignored", config.method);
    }
    let builder: Builder = config.builder.parse()?;
    let x0 = match config.x0.as_str() {
        "zero" => None,
        path => {
            let x = mm::read_vector(path)?;
            if x.len() != n {
                bail!("{path}: {} values but the matrix has {n} columns", x.len());
            }
            Some(x)
        }
    };
    let solve_config = SolveConfig {
        method: config.method,
        tol: config.tol,
        max_iters: config.max_iters,
        x0,
        reference: sys.x_true.clone(),
        builder,
        ..SolveConfig::default()
    };
    let run = solve(&sys.a, &b, &u, &solve_config)?;

    if let Some(path) = &args.history {
        write_history(path, &run)?;
    }
    if let Some(path) = &args.export_c {
        let c = match &run.factor {
            Some(c) => c.clone(),
            None => builder.build(&sys.a, &RelaxationSchedule::per_row(run.mu.clone()))?,
        };
        c.write_matrix_market(path)?;
    }
    let last = run.final_record().clone();
    if let Some(path) = &args.summary {
        let summary = Summary {
            config: config.clone(),
            mu: run.mu.clone(),
            termination: run.termination,
            iterations: run.iterations(),
            final_rel_residual: last.rel_residual,
            final_abs_error: last.abs_error,
            rel_residuals: run.records.iter().map(|r| r.rel_residual).collect(),
            abs_errors: run.records.iter().map(|r| r.abs_error).collect(),
            solution: run.solution.clone(),
        };
        write_json(&summary, Some(path))?;
    }

    let status = match run.termination {
        Termination::Converged => "converged",
        Termination::MaxIters => "max_iters",
        Termination::Diverged => "diverged",
    };
    print!(
        "{status}: method={} iterations={} rel_residual={:.3e}",
        config.method,
        run.iterations(),
        last.rel_residual
    );
    if let Some(e) = last.abs_error {
        print!(" abs_error={e:.3e}");
    }
    println!();
    Ok(match run.termination {
        Termination::Diverged => ExitCode::from(2),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_rate(args: RateArgs) -> Result<ExitCode> {
    let sys = load(&args.problem.source()?)?;
    let u = schedule(&args.problem.relax, sys.a.nrows())?;
    let report = rate_report(&sys.a, &u, args.curve_len)?;
    write_json(&report, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let sys = load(&args.problem.source()?)?;
    let b = sys.b.context("check needs a right-hand side (--rhs or --gen)")?;
    let u = schedule(&args.problem.relax, sys.a.nrows())?;
    let report = run_invariant_suite(&sys.a, &b, &u, args.trials, args.seed)?;
    for c in &report.checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "N/A ",
        };
        eprintln!("{tag} {:<34} {:.3e} (tol {:.0e}) {}", c.name, c.max_violation, c.tolerance, c.note);
    }
    write_json(&report, args.out.as_deref())?;
    if report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: invariant check failed");
        Ok(ExitCode::from(1))
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let spec: ProblemSpec = args.spec.parse().with_context(|| format!("spec '{}'", args.spec))?;
    let p = generate(&spec)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("{}", args.out.display()))?;
    mm::write_matrix_market(args.out.join("A.mtx"), &p.a)?;
    mm::write_vector_with_comment(args.out.join("b.txt"), &p.b, Some(&format!("b for {spec}")))?;
    mm::write_vector_with_comment(args.out.join("x_true.txt"), &p.x_true, Some(&format!("x_true for {spec}")))?;
    println!("{spec}: {}x{} written to {}", p.a.nrows(), p.a.ncols(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Rate(a) => cmd_rate(a),
        Command::Check(a) => cmd_check(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            // Core errors already embed their source in the message.
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
