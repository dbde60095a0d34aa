//! `walsh`: solve, verify and simulate Walsh spider HJB systems.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use walsh_core::assumptions::validate_assumptions;
use walsh_core::network::build_grid;
use walsh_core::solver::{
    march_local_time, monotonicity_violations, solve_l_independent, verify_comparison,
    ComparisonOptions, StaticOptions,
};
use walsh_core::spider::value::truncation_horizon;
use walsh_core::spider::{
    downcrossing_report, local_time_report, non_stickiness_check, occupation_constant,
    occupation_identity_check, ConstantSpider, ProblemSpider, SimConfig, StatsConfig,
};
use walsh_core::testfn::{certify, linear_oracle, solve_param_ode, vanishing_limit_study};

use walsh::config::{parse_config, Command, FluxName, RunConfig, Settings, UpwindingName};
use walsh::ensemble::{collect_stats, estimate_value_parallel, THREADS_ENV};
use walsh::error::{read, write};
use walsh::problem_file::load_problem;
use walsh::reports;
use walsh::solution_io::{fmt_f64, test_function_csv, write_solution, Format};
use walsh::testfn_file::{parse_identity_schedule, parse_schedule, parse_spec, ReflectionName};

#[derive(Parser)]
#[command(
    name = "walsh",
    version,
    about = "Solve, verify and simulate Walsh spider HJB systems on star networks"
)]
#[command(after_help = format!("Environment:\n  {THREADS_ENV}  worker threads for Monte Carlo ensembles (default: all cores)\n\nExit status: 0 success, 1 error, 2 verification failure."))]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the structural assumptions on a problem by sampling its coefficients.
    Validate(ValidateArgs),
    /// Solve the local-time system by marching from l = K down to l = 0.
    Solve(SolveArgs),
    /// Solve an l-independent problem through the local-time embedding.
    SolveStatic(StaticArgs),
    /// Randomized check that ordered data give ordered discrete solutions.
    VerifyComparison(ComparisonArgs),
    /// Parametric ODE test functions.
    #[command(subcommand)]
    Testfn(TestfnCmd),
    /// Evaluate the closed-form solution of lambda u - sigma u'' = 0, u'(0) = 0, u(R) = z.
    Oracle(OracleArgs),
    /// Monte Carlo estimate of the fixed-control value, or simulator identity checks.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum TestfnCmd {
    /// Solve one spec and certify its bounds.
    Solve(TestfnSolveArgs),
    /// Run a vanishing-limit study over a decreasing schedule.
    Study(StudyArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML file with default values for any flag (flags win).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ProblemArg {
    /// Problem file (TOML).
    #[arg(long)]
    problem: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Intervals per ray [default: 200].
    #[arg(long)]
    nx: Option<usize>,
    /// Intervals in local time [default: 200].
    #[arg(long)]
    nl: Option<usize>,
    /// Policy-iteration and compatibility tolerance [default: 1e-8].
    #[arg(long)]
    tol: Option<f64>,
    /// Policy-iteration cap per ray solve [default: 200].
    #[arg(long)]
    max_iters: Option<usize>,
    /// First-derivative discretization [default: monotone].
    #[arg(long, value_enum)]
    upwinding: Option<UpwindingName>,
    /// Vertex-derivative discretization [default: first].
    #[arg(long, value_enum)]
    flux: Option<FluxName>,
}

impl GridArgs {
    fn settings(&self) -> Settings {
        Settings {
            nx: self.nx,
            nl: self.nl,
            tol: self.tol,
            max_iters: self.max_iters,
            upwinding: self.upwinding,
            flux: self.flux,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    problem: ProblemArg,
    /// Samples per axis [default: 21].
    #[arg(long)]
    samples: Option<usize>,
    /// Tolerance of the spin-sum check [default: 1e-8].
    #[arg(long)]
    tol: Option<f64>,
    /// Grid used for the stencil monotonicity count [default: 200].
    #[arg(long)]
    nx: Option<usize>,
    /// [default: 200]
    #[arg(long)]
    nl: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    problem: ProblemArg,
    #[command(flatten)]
    grid: GridArgs,
    /// Solution file; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StaticArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    problem: ProblemArg,
    #[command(flatten)]
    grid: GridArgs,
    /// Decreasing schedule [default: 0.2,0.1,0.05].
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Bound on the l-variation of the final slice [default: 1e-6].
    #[arg(long)]
    l_tol: Option<f64>,
    /// CSV of the extrapolated slice (`ray,x,u`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComparisonArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    problem: ProblemArg,
    #[command(flatten)]
    grid: GridArgs,
    /// [default: 20]
    #[arg(long)]
    trials: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Offset of the perturbed boundary data [default: 0.1].
    #[arg(long)]
    delta: Option<f64>,
    /// JSON report with every trial.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TestfnSolveArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Spec file (TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// CSV of the sampled test function.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Schedule file (TOML).
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Ray length.
    #[arg(long = "R")]
    length: Option<f64>,
    /// Dirichlet value at x = R.
    #[arg(long)]
    z: Option<f64>,
    /// Evaluation points.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    at: Option<Vec<f64>>,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct SimulateArgs {
    #[command(subcommand)]
    checks: Option<SimulateCmd>,
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    problem: ProblemArg,
    /// [default: 10000]
    #[arg(long)]
    paths: Option<u64>,
    /// [default: 1e-3]
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon [default: ln(1e6) / lambda].
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Initial position [default: 0.5].
    #[arg(long)]
    x0: Option<f64>,
    /// Initial ray, from 1 [default: 1].
    #[arg(long)]
    ray: Option<usize>,
    /// Initial local time [default: 0].
    #[arg(long)]
    l0: Option<f64>,
    /// [default: mirror]
    #[arg(long, value_enum)]
    reflection: Option<ReflectionName>,
    /// JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// Local-time, down-crossing, occupation and non-stickiness checks.
    IdentityChecks(IdentityArgs),
}

#[derive(Args)]
struct IdentityArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Schedule file (TOML).
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn config(command: Command, file: &ConfigArg, flags: Settings) -> Result<RunConfig> {
    let text = match &file.config {
        Some(p) => Some(read(p)?),
        None => None,
    };
    Ok(parse_config(command, text.as_deref(), flags)?)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(value: &Value, report: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    print(&format!("{text}\n"))?;
    if let Some(p) = report {
        write(p, &(text + "\n"))?;
    }
    Ok(())
}

/// `Ok(true)` on success, `Ok(false)` on a failed verification.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Cmd::Validate(a) => {
            let flags = Settings {
                problem: a.problem.problem,
                samples: a.samples,
                tol: a.tol,
                nx: a.nx,
                nl: a.nl,
                ..Default::default()
            };
            let c = config(Command::Validate, &a.config, flags)?;
            let data = load_problem(c.problem.as_deref().unwrap())?;
            let rep = validate_assumptions(&data, c.samples, c.tol)?;
            let grid = build_grid(data.network(), c.nx, c.nl)?;
            let bad = monotonicity_violations(&data, &grid, c.solver_options().upwinding)?;
            emit(&reports::assumptions(&rep, bad), None)?;
            Ok(rep.all_pass() && bad == 0)
        }
        Cmd::Solve(a) => {
            let flags = Settings {
                problem: a.problem.problem,
                out: a.out,
                ..a.grid.settings()
            };
            let c = config(Command::Solve, &a.config, flags)?;
            let data = load_problem(c.problem.as_deref().unwrap())?;
            let grid = build_grid(data.network(), c.nx, c.nl)?;
            let start = Instant::now();
            let mut rep = march_local_time(&data, &grid, &c.solver_options())?;
            rep.wall_clock_secs = Some(start.elapsed().as_secs_f64());
            if let Some(out) = &c.out {
                write_solution(&rep.solution, out, Format::from_path(out))?;
            }
            emit(&reports::solve(&rep), None)?;
            Ok(true)
        }
        Cmd::SolveStatic(a) => {
            let flags = Settings {
                problem: a.problem.problem,
                eps: a.eps,
                l_tol: a.l_tol,
                out: a.out,
                ..a.grid.settings()
            };
            let c = config(Command::SolveStatic, &a.config, flags)?;
            let data = load_problem(c.problem.as_deref().unwrap())?;
            let opts = StaticOptions {
                nx: c.nx,
                nl: c.nl,
                eps: c.eps.clone(),
                l_tol: c.l_tol,
                solver: c.solver_options(),
            };
            match solve_l_independent(&data, &opts) {
                Ok(sol) => {
                    if let Some(out) = &c.out {
                        let mut s = String::from("ray,x,u\n");
                        for (i, r) in sol.extrapolated.rays.iter().enumerate() {
                            for (x, u) in sol.extrapolated.x.iter().zip(r) {
                                s.push_str(&format!("{},{},{}\n", i + 1, fmt_f64(*x), fmt_f64(*u)));
                            }
                        }
                        write(out, &s)?;
                    }
                    emit(&reports::statics(&sol), None)?;
                    Ok(true)
                }
                Err(e @ walsh_core::Error::LVariation { .. }) => {
                    eprintln!("verification failed: {e}");
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        }
        Cmd::VerifyComparison(a) => {
            let flags = Settings {
                problem: a.problem.problem,
                trials: a.trials,
                seed: a.seed,
                delta: a.delta,
                report: a.report,
                ..a.grid.settings()
            };
            let c = config(Command::VerifyComparison, &a.config, flags)?;
            let data = load_problem(c.problem.as_deref().unwrap())?;
            let grid = build_grid(data.network(), c.nx, c.nl)?;
            let copts = ComparisonOptions {
                trials: c.trials,
                seed: c.seed,
                delta: c.delta,
                tol: 1e-9,
            };
            let rep = verify_comparison(&data, &grid, &copts, &c.solver_options())?;
            emit(&reports::comparison(&rep), c.report.as_deref())?;
            Ok(rep.passed())
        }
        Cmd::Testfn(TestfnCmd::Solve(a)) => {
            let c = config(
                Command::TestfnSolve,
                &a.config,
                Settings {
                    spec: a.spec,
                    out: a.out,
                    ..Default::default()
                },
            )?;
            let input = parse_spec(&read(c.spec.as_deref().unwrap())?)?;
            let spec = if input.absorbing {
                input.spec.with_absorbing_slope()?
            } else {
                input.spec
            };
            let tf = solve_param_ode(&spec, &input.options)?;
            let cert = certify(&tf, 1e-8);
            if let Some(out) = &c.out {
                write(out, &test_function_csv(&tf))?;
            }
            let mut checks = Map::new();
            checks.insert("m_bound".into(), json!(cert.m_bound));
            checks.insert("m_bound_ok".into(), json!(cert.m_bound_ok));
            checks.insert("gradient_ok".into(), json!(cert.gradient_ok));
            checks.insert("vertex_gradient_ok".into(), json!(cert.vertex_gradient_ok));
            checks.insert("flux_identity_ok".into(), json!(cert.flux_ok));
            checks.insert("absorption_ok".into(), json!(cert.absorption_ok));
            emit(&reports::test_function(&tf, &checks), None)?;
            // with a user-chosen slope the absorption inequality is informative only
            Ok(cert.m_bound_ok
                && cert.gradient_ok
                && cert.vertex_gradient_ok
                && cert.flux_ok
                && (cert.absorption_ok || !input.absorbing))
        }
        Cmd::Testfn(TestfnCmd::Study(a)) => {
            let c = config(
                Command::TestfnStudy,
                &a.config,
                Settings {
                    schedule: a.schedule,
                    report: a.report,
                    ..Default::default()
                },
            )?;
            let input = parse_schedule(&read(c.schedule.as_deref().unwrap())?)?;
            let rows = vanishing_limit_study(&input.base, &input.rows, &input.options)?;
            emit(&reports::study(&rows), c.report.as_deref())?;
            Ok(true)
        }
        Cmd::Oracle(a) => {
            let flags = Settings {
                lambda: a.lambda,
                sigma: a.sigma,
                length: a.length,
                z: a.z,
                at: a.at,
                ..Default::default()
            };
            let c = config(Command::Oracle, &a.config, flags)?;
            let p = c.oracle.as_ref().unwrap();
            let o = linear_oracle(p.lambda, p.sigma, p.length, p.z)?;
            let mut table = String::from("x,u\n");
            for &x in &p.at {
                table.push_str(&format!("{},{}\n", fmt_f64(x), fmt_f64(o.eval(x))));
            }
            print(&table)?;
            Ok(true)
        }
        Cmd::Simulate(a) => match a.checks {
            Some(SimulateCmd::IdentityChecks(b)) => identity_checks(b),
            None => simulate(a),
        },
    }
}

fn simulate(a: SimulateArgs) -> Result<bool> {
    let flags = Settings {
        problem: a.problem.problem,
        paths: a.paths,
        dt: a.dt,
        horizon: a.horizon,
        seed: a.seed,
        x0: a.x0,
        ray: a.ray,
        l0: a.l0,
        reflection: a.reflection,
        report: a.report,
        ..Default::default()
    };
    let c = config(Command::Simulate, &a.config, flags)?;
    let data = load_problem(c.problem.as_deref().unwrap())?;
    let n = data.network();
    if c.ray > n.rays() {
        bail!("`ray`: {} outside 1..={}", c.ray, n.rays());
    }
    if c.x0 >= n.length() {
        bail!(
            "`x0`: {} must lie below the ray length {}",
            c.x0,
            n.length()
        );
    }
    let model = ProblemSpider::first_controls(&data);
    let cfg = SimConfig {
        dt: c.dt,
        horizon: c
            .horizon
            .unwrap_or_else(|| truncation_horizon(data.lambda())),
        reflection: c.reflection.into(),
        seed: c.seed,
        x0: c.x0,
        ray0: c.ray - 1,
        l0: c.l0,
        radius: Some(n.length()),
        local_time_cap: (!n.is_unbounded()).then(|| n.horizon()),
    };
    let rep = estimate_value_parallel(&model, &cfg, c.paths)?;
    let mut v = reports::estimator(&rep);
    v["state"] = json!({ "x": c.x0, "ray": c.ray, "l": c.l0 });
    v["seed"] = json!(c.seed);
    v["horizon"] = json!(cfg.horizon);
    emit(&v, c.report.as_deref())?;
    Ok(true)
}

fn identity_checks(b: IdentityArgs) -> Result<bool> {
    let c = config(
        Command::IdentityChecks,
        &b.config,
        Settings {
            schedule: b.schedule,
            report: b.report,
            ..Default::default()
        },
    )?;
    let s = parse_identity_schedule(&read(c.schedule.as_deref().unwrap())?)?;
    let model = ConstantSpider::new(s.drift.clone(), s.volatility.clone(), s.spin.clone())
        .context("schedule coefficients")?;
    let cfg = SimConfig {
        dt: s.dt,
        horizon: s.horizon,
        reflection: s.reflection.into(),
        seed: s.seed,
        ..Default::default()
    };
    let sc = StatsConfig {
        crossing_eps: s.eps.clone(),
        band_eps: s.eps.clone(),
        delta: s.delta.clone(),
    };
    let stats = collect_stats(&model, &cfg, &sc, s.paths)?;
    let constant = occupation_constant(&model)?;
    let mut out = Map::new();
    out.insert(
        "local_time".into(),
        reports::estimator(&local_time_report(&stats)?),
    );
    // driftless with a common volatility s: l(t) = s L(t) with E L(t) = sqrt(2t/pi)
    if s.drift.iter().all(|b| *b == 0.0) && s.volatility.windows(2).all(|w| w[0] == w[1]) {
        let reference = s.volatility[0] * (2.0 * s.horizon / std::f64::consts::PI).sqrt();
        out.insert("local_time_reference".into(), json!(reference));
    }
    out.insert("occupation_constant".into(), json!(constant));
    let per = |f: &dyn Fn(usize) -> walsh_core::Result<walsh_core::spider::EstimatorReport>,
               n: usize|
     -> Result<Value> {
        Ok(Value::Array(
            (0..n)
                .map(|k| f(k).map(|r| reports::estimator(&r)))
                .collect::<walsh_core::Result<_>>()?,
        ))
    };
    out.insert(
        "downcrossing".into(),
        per(&|k| downcrossing_report(&stats, k), s.eps.len())?,
    );
    out.insert(
        "occupation".into(),
        per(
            &|k| occupation_identity_check(&stats, k, constant),
            s.eps.len(),
        )?,
    );
    out.insert(
        "non_stickiness".into(),
        per(&|k| non_stickiness_check(&stats, k), s.delta.len())?,
    );
    emit(&Value::Object(out), c.report.as_deref())?;
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
