use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fixalm_core::alm::{run_alm, verify, SolveReport};
use fixalm_core::designer::{design, DesignInput, DesignReport};
use fixalm_core::fxp::{FxError, FxFormat, OverflowPolicy};
use fixalm_core::harness::num::NumParams;
use fixalm_core::harness::oracle::{oracle_solve, OracleOptions};
use fixalm_core::harness::table::{build_workload, render, reproduce_table, TableConfig};
use fixalm_core::inner::{Arithmetic, SolverError};
use fixalm_core::par::{with_jobs, Exec};
use fixalm_core::problem::{Problem, ProblemError};

#[derive(Parser, Debug)]
#[command(name = "fixalm", version, about = "Fixed-point augmented Lagrangian solver and precision designer")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Choose word/fraction lengths and iteration counts for a problem family.
    Design(DesignArgs),
    /// Run the solver on one problem and write its report.
    Solve(SolveArgs),
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Solve, compare against a reference solution and audit the bounds.
    Verify(SolveArgs),
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Random network-utility instance solved by consensus ADMM; audits the
    /// fixed-point solver on one node's subproblems.
    Num(NumArgs),
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {v}"))
    }
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

#[derive(Args, Debug, Clone)]
struct Tuning {
    /// Penalty parameter.
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    rho: f64,
    /// Share of the accuracy budget given to the dual update.
    #[arg(long, default_value_t = 0.5, value_parser = unit_open)]
    alpha: f64,
    /// Seed for gradient sampling and instance generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples used to bound the objective gradient.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Args, Debug, Clone, Copy)]
struct PolicyFlags {
    /// Signal every overflow as an error (default).
    #[arg(long, conflicts_with = "saturate")]
    strict: bool,
    /// Clamp overflowing values to the representable range.
    #[arg(long)]
    saturate: bool,
}

impl PolicyFlags {
    fn policy(&self) -> OverflowPolicy {
        if self.saturate {
            OverflowPolicy::Saturate
        } else {
            OverflowPolicy::Strict
        }
    }
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Problem file (JSON); repeat to design for a family.
    #[arg(long, required = true)]
    problem: Vec<PathBuf>,
    /// Target accuracy.
    #[arg(long, value_parser = positive)]
    eps: f64,
    #[command(flatten)]
    tuning: Tuning,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Float,
    Fixed,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Problem file (JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Target accuracy the configuration is designed for.
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    eps: f64,
    /// Arithmetic for the iterate path.
    #[arg(long, value_enum, default_value_t = Mode::Fixed)]
    mode: Mode,
    /// Fraction length override.
    #[arg(long)]
    fl: Option<u32>,
    /// Word length override.
    #[arg(long)]
    wl: Option<u32>,
    /// Outer iteration override.
    #[arg(long)]
    k_out: Option<u64>,
    /// Inner accuracy in float mode.
    #[arg(long, default_value_t = 1e-12, value_parser = positive)]
    tol: f64,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    policy: PolicyFlags,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the outer trajectory as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NumArgs {
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    sinks: usize,
    #[arg(long, default_value_t = 4)]
    max_degree: usize,
    /// Accuracies, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 0.1, 0.01], value_parser = positive)]
    eps: Vec<f64>,
    /// ADMM rounds, one subproblem instance each.
    #[arg(long, default_value_t = 30)]
    instances: usize,
    /// ADMM step.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    mu: f64,
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    rho: f64,
    #[arg(long, default_value_t = 0.5, value_parser = unit_open)]
    alpha: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[command(flatten)]
    policy: PolicyFlags,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the network and every subproblem instance as JSON into this directory.
    #[arg(long)]
    dump: Option<PathBuf>,
}

fn load(path: &Path) -> Result<Problem> {
    Problem::load(path).with_context(|| format!("loading {}", path.display()))
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Human-readable text goes to stdout when JSON goes to a file, else stderr.
fn say(out: Option<&Path>, text: &str) {
    if out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

fn design_input<'a>(problems: &'a [Problem], eps: f64, t: &Tuning) -> DesignInput<'a> {
    let mut input = DesignInput::new(problems, eps);
    input.rho = t.rho;
    input.alpha = t.alpha;
    input.seed = t.seed;
    input.samples = t.samples;
    input
}

fn cmd_design(args: &DesignArgs) -> Result<bool> {
    let problems = args.problem.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let report = design(&design_input(&problems, args.eps, &args.tuning))?;
    write_json(&report, args.out.as_deref())?;
    say(args.out.as_deref(), &report.summary());
    Ok(true)
}

fn format_for(d: &DesignReport, args: &SolveArgs) -> Result<FxFormat> {
    let fl = args.fl.unwrap_or(d.fl);
    let wl = args.wl.unwrap_or(if args.fl.is_some() { d.wl - d.fl + fl } else { d.wl });
    if wl <= fl + 1 {
        bail!("word length must exceed fraction length + 1 (got wl={wl}, fl={fl})");
    }
    Ok(FxFormat::new(wl, fl)?)
}

enum Run {
    Done(Box<SolveReport>),
    /// Overflow signalled in strict mode, or data not representable.
    Overflow(String),
}

fn run_solver(problem: &Problem, args: &SolveArgs) -> Result<(DesignReport, Run)> {
    let d = design(&design_input(std::slice::from_ref(problem), args.eps, &args.tuning))?;
    let arithmetic = match args.mode {
        Mode::Float => Arithmetic::Float,
        Mode::Fixed => Arithmetic::Fixed {
            fmt: format_for(&d, args)?,
            policy: args.policy.policy(),
        },
    };
    let mut cfg = d.alm_config(arithmetic);
    let mut stop = d.stop_config();
    if args.mode == Mode::Float {
        cfg = cfg.with_budgets(args.tol, 0.0);
        stop.b_in = args.tol;
        stop.k_in_max = stop.k_in_max.max(1_000_000);
    }
    cfg.measure_errors = args.mode == Mode::Fixed;
    cfg.record_iterates = args.trace.is_some();
    if let Some(k) = args.k_out {
        cfg.k_out = k;
    }
    log::info!("solving with {:?}, K_out={}", cfg.arithmetic, cfg.k_out);
    match run_alm(problem, &cfg, &stop) {
        Ok(rep) => Ok((d, Run::Done(Box::new(rep)))),
        Err(SolverError::Fx(e @ FxError::Overflow { .. })) => Ok((d, Run::Overflow(e.to_string()))),
        Err(SolverError::Problem(e @ ProblemError::NotRepresentable { .. })) => {
            Ok((d, Run::Overflow(e.to_string())))
        }
        Err(e) => Err(e.into()),
    }
}

fn write_trace(path: &Path, problem: &Problem, rep: &SolveReport) -> Result<()> {
    let mut text = String::from("k,objective,residual,lambda_inf\n");
    for (k, x) in rep.x_history.iter().enumerate() {
        text.push_str(&format!(
            "{k},{},{},{}\n",
            problem.eval_objective(x)?,
            problem.residual(x).norm(),
            rep.lambda(k).amax()
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn solve_summary(rep: &SolveReport) -> String {
    format!(
        "K_out {}  inner iters {}  f(x_bar) {:.10}  |r(x_bar)| {:.3e}  f(x_last) {:.10}  |r(x_last)| {:.3e}  saturations {}\n",
        rep.k_out,
        rep.inner.total_iters,
        rep.objective_bar,
        rep.residual_bar,
        rep.objective_last,
        rep.residual_last,
        rep.audit.saturations
    )
}

fn overflow_report(d: &DesignReport, args: &SolveArgs, msg: &str) -> serde_json::Value {
    serde_json::json!({
        "overflow": msg,
        "fl": args.fl.unwrap_or(d.fl),
        "wl": args.wl,
        "designed": {"fl": d.fl, "wl": d.wl},
    })
}

fn cmd_solve(args: &SolveArgs) -> Result<bool> {
    let problem = load(&args.problem)?;
    let (d, run) = run_solver(&problem, args)?;
    match run {
        Run::Done(rep) => {
            if let Some(t) = &args.trace {
                write_trace(t, &problem, &rep)?;
            }
            write_json(&rep, args.out.as_deref())?;
            say(args.out.as_deref(), &solve_summary(&rep));
            Ok(true)
        }
        Run::Overflow(msg) => {
            write_json(&overflow_report(&d, args, &msg), args.out.as_deref())?;
            eprintln!("overflow: {msg}");
            Ok(false)
        }
    }
}

fn cmd_verify(args: &SolveArgs) -> Result<bool> {
    let problem = load(&args.problem)?;
    let (d, run) = run_solver(&problem, args)?;
    let rep = match run {
        Run::Done(rep) => rep,
        Run::Overflow(msg) => {
            if let Some(out) = &args.out {
                write_json(&overflow_report(&d, args, &msg), Some(out))?;
            }
            println!("FAIL overflow: {msg}");
            return Ok(false);
        }
    };
    let reference = oracle_solve(&problem, &OracleOptions::default())?;
    let v = verify(&rep, &problem, reference.f, &reference.lambda());
    if let Some(out) = &args.out {
        write_json(&serde_json::json!({"report": *rep, "verification": v}), Some(out))?;
    }
    let mark = |ok: bool| if ok { "ok  " } else { "FAIL" };
    let b = &v.bounds;
    let lines = [
        format!(
            "{} optimality  {:.4e} <= {:.4e} <= {:.4e}",
            mark(v.opt_within),
            b.opt_lo,
            v.opt_gap,
            b.opt_hi
        ),
        format!(
            "{} feasibility {:.4e} <= {:.4e}{}",
            mark(v.feas_within),
            v.infeasibility,
            b.feas,
            if b.feas_trivial { " (trivial)" } else { "" }
        ),
        format!("{} overflow    {} saturations", mark(true), rep.audit.saturations),
        format!("     dual box admits lambda*: {}", v.dual_box_admits),
        format!(
            "     measured rounding: dual {:.3e} (budget {:.3e}), primal {:.3e} (bound {:.3e})",
            rep.eps_out_max, rep.b_out, rep.eps_gp_max, rep.eps_gp_bound
        ),
    ];
    println!("{}", lines.join("\n"));
    Ok(v.passed())
}

fn cmd_bench_num(args: &NumArgs) -> Result<bool> {
    let cfg = TableConfig {
        params: NumParams {
            nodes: args.nodes,
            sinks: args.sinks,
            max_degree: args.max_degree,
            ..NumParams::default()
        },
        seed: args.seed,
        eps: args.eps.clone(),
        instances: args.instances,
        mu: args.mu,
        alpha: args.alpha,
        rho: args.rho,
        policy: args.policy.policy(),
        samples: args.samples,
        exec: Exec::Parallel,
    };
    if let Some(dir) = &args.dump {
        dump_instances(&cfg, dir)?;
    }
    let report = reproduce_table(&cfg)?;
    if let Some(out) = &args.out {
        write_json(&report, Some(out))?;
    }
    print!("{}", render(&report));
    Ok(report.passed())
}

fn dump_instances(cfg: &TableConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let work = build_workload(cfg)?;
    write_json(&work.num, Some(&dir.join("network.json")))?;
    for (i, p) in work.instances.iter().enumerate() {
        let path = dir.join(format!("node{}_round{:02}.json", work.target, i));
        fs::write(&path, p.to_json_string()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench {
            which: BenchCommand::Num(a),
        } => cmd_bench_num(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FIXALM_LOG", "warn")).init();
    let cli = Cli::parse();
    match with_jobs(cli.jobs, || run(&cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
