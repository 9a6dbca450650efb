//! Command-line front end: single solves, closed-loop simulation, the
//! encoding benchmark and polygon generation.
//!
//! Exit codes: 0 success, 1 bad input (I/O or schema, messages name the
//! offending JSON path), 2 setup or numerical failure, 3 iteration limit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use hmpc::admm::{solve, AdmmSettings, SolveStatus};
use hmpc::assemble::{assemble, objective_value, Encoding};
use hmpc::bench::{run_bench, surrogate_problem, BenchConfig, SURROGATE_POSITION_STATES};
use hmpc::io::{parse_encoding, ProblemFile, ScenarioFile, SettingsFile};
use hmpc::kkt::build_kkt_operators;
use hmpc::polygon::gen_polygon;
use hmpc::problem::HmpcProblem;
use hmpc::sim::{run_closed_loop, ClosedLoopTrace, SimError};

#[derive(Parser)]
#[command(name = "hmpc", version, about = "Harmonic MPC solver and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// ADMM penalty parameter (overrides file settings)
    #[arg(long, global = true)]
    rho: Option<f64>,

    /// Primal exit tolerance
    #[arg(long = "eps-p", global = true)]
    eps_p: Option<f64>,

    /// Dual exit tolerance
    #[arg(long = "eps-d", global = true)]
    eps_d: Option<f64>,

    /// Iteration limit
    #[arg(long = "max-iter", global = true)]
    max_iter: Option<usize>,

    /// Constraint encoding: band | soc-split
    #[arg(long, global = true)]
    encoding: Option<String>,

    /// RNG seed for randomized runs
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output path (stdout when omitted; the benchmark appends .csv/.json)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble and solve a single instance, emitting the result as JSON
    Solve {
        /// Problem JSON file
        problem: PathBuf,
        /// State JSON file: {"x": [...], "x_r": [...], "u_r": [...]}
        state: PathBuf,
    },
    /// Run a closed-loop scenario, emitting one CSV row per step
    Simulate {
        /// Scenario JSON file (embeds its problem)
        scenario: PathBuf,
    },
    /// Compare the band and split-cone encodings over growing polygons
    BenchCompare(BenchArgs),
    /// Emit regular-polygon constraint rows, optionally appended to a problem
    GenPolygon {
        /// Number of sides
        #[arg(long)]
        sides: usize,
        /// Vertex distance from the origin
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        /// Base problem to augment; emits plain rows when omitted
        #[arg(long)]
        problem: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Base problem JSON file; the built-in surrogate plant when omitted
    problem: Option<PathBuf>,
    /// Inclusive polygon side range, e.g. 8..64
    #[arg(long = "sides-range", default_value = "8..64")]
    sides_range: String,
    /// Step between side counts
    #[arg(long = "sides-step", default_value_t = 8)]
    sides_step: usize,
    /// Solves per (sides, encoding) cell
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Polygon circumradius
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
    /// Override the problem file's position_states, e.g. 0,2
    #[arg(long = "position-states")]
    position_states: Option<String>,
}

enum CliError {
    Input(String),
    Failure(String),
    MaxIterations(String),
}

impl CliError {
    fn report(&self) -> (&str, u8) {
        match self {
            CliError::Input(m) => (m, 1),
            CliError::Failure(m) => (m, 2),
            CliError::MaxIterations(m) => (m, 3),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (message, code) = err.report();
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve { problem, state } => cmd_solve(cli, problem, state),
        Command::Simulate { scenario } => cmd_simulate(cli, scenario),
        Command::BenchCompare(args) => cmd_bench_compare(cli, args),
        Command::GenPolygon { sides, radius, problem } => {
            cmd_gen_polygon(cli, *sides, *radius, problem.as_deref())
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn settings_from_flags(cli: &Cli, base: Option<&SettingsFile>) -> Result<AdmmSettings, CliError> {
    let mut file = base.cloned().unwrap_or_default();
    if cli.rho.is_some() {
        file.rho = cli.rho;
    }
    if cli.eps_p.is_some() {
        file.eps_p = cli.eps_p;
    }
    if cli.eps_d.is_some() {
        file.eps_d = cli.eps_d;
    }
    if cli.max_iter.is_some() {
        file.max_iter = cli.max_iter;
    }
    file.resolve().map_err(|e| CliError::Input(e.to_string()))
}

fn encoding_from_flags(cli: &Cli, base: Option<Encoding>) -> Result<Encoding, CliError> {
    match &cli.encoding {
        Some(name) => parse_encoding(name).map_err(|e| CliError::Input(e.to_string())),
        None => Ok(base.unwrap_or_default()),
    }
}

fn emit(cli: &Cli, content: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Failure(format!("{}: {e}", path.display()))),
        None => {
            if content.ends_with('\n') {
                print!("{content}");
            } else {
                println!("{content}");
            }
            Ok(())
        }
    }
}

#[derive(serde::Deserialize)]
struct StateFile {
    x: Vec<f64>,
    #[serde(default)]
    x_r: Option<Vec<f64>>,
    #[serde(default)]
    u_r: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct SolveOutput {
    status: &'static str,
    encoding: &'static str,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    setup_time_us: u64,
    solve_time_us: u64,
    objective: f64,
    u0: Vec<f64>,
    trajectory: Vec<TrajectoryPoint>,
    theta: ThetaOutput,
    z: Vec<f64>,
}

#[derive(Serialize)]
struct TrajectoryPoint {
    x: Vec<f64>,
    u: Vec<f64>,
}

#[derive(Serialize)]
struct ThetaOutput {
    x_e: Vec<f64>,
    x_s: Vec<f64>,
    x_c: Vec<f64>,
    u_e: Vec<f64>,
    u_s: Vec<f64>,
    u_c: Vec<f64>,
}

fn cmd_solve(cli: &Cli, problem_path: &Path, state_path: &Path) -> Result<(), CliError> {
    let (problem, _) = hmpc::io::parse_problem(&read_file(problem_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", problem_path.display())))?;
    let state: StateFile = serde_json::from_str(&read_file(state_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", state_path.display())))?;

    let x = vector_checked("x", state.x, problem.n_x())?;
    let x_r = match state.x_r {
        Some(v) => vector_checked("x_r", v, problem.n_x())?,
        None => DVector::zeros(problem.n_x()),
    };
    let u_r = match state.u_r {
        Some(v) => vector_checked("u_r", v, problem.n_u())?,
        None => DVector::zeros(problem.n_u()),
    };

    let settings = settings_from_flags(cli, None)?;
    let encoding = encoding_from_flags(cli, None)?;

    let mut qp = assemble(&problem, encoding).map_err(|e| CliError::Input(e.to_string()))?;
    qp.update_online(&x, &x_r, &u_r);
    let ops = build_kkt_operators(&qp.h, &qp.g, &qp.c, settings.rho, qp.dims.n_x)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let result = solve(&qp, &ops, &settings, None)
        .map_err(|e| CliError::Failure(e.to_string()))?;

    let extracted = qp.extract_solution(result.z().as_slice());
    let output = SolveOutput {
        status: match result.status {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
        },
        encoding: encoding.as_str(),
        iterations: result.iterations,
        primal_residual: result.primal_residual,
        dual_residual: result.dual_residual,
        setup_time_us: result.setup_time.as_micros() as u64,
        solve_time_us: result.solve_time.as_micros() as u64,
        objective: objective_value(&problem, result.z().as_slice(), &x_r, &u_r),
        u0: extracted.u0.as_slice().to_vec(),
        trajectory: extracted
            .trajectory
            .iter()
            .map(|(x, u)| TrajectoryPoint {
                x: x.as_slice().to_vec(),
                u: u.as_slice().to_vec(),
            })
            .collect(),
        theta: ThetaOutput {
            x_e: extracted.theta.x_e.as_slice().to_vec(),
            x_s: extracted.theta.x_s.as_slice().to_vec(),
            x_c: extracted.theta.x_c.as_slice().to_vec(),
            u_e: extracted.theta.u_e.as_slice().to_vec(),
            u_s: extracted.theta.u_s.as_slice().to_vec(),
            u_c: extracted.theta.u_c.as_slice().to_vec(),
        },
        z: result.z().as_slice().to_vec(),
    };
    emit(cli, &serde_json::to_string_pretty(&output).unwrap())?;

    if result.status == SolveStatus::MaxIterations {
        return Err(CliError::MaxIterations(format!(
            "iteration limit reached ({} iterations, primal {:.3e}, dual {:.3e})",
            result.iterations, result.primal_residual, result.dual_residual
        )));
    }
    Ok(())
}

fn vector_checked(name: &str, v: Vec<f64>, len: usize) -> Result<DVector<f64>, CliError> {
    if v.len() != len {
        return Err(CliError::Input(format!(
            "{name}: expected {len} entries, got {}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(&v))
}

fn trace_to_csv(trace: &ClosedLoopTrace, n_x: usize, n_u: usize) -> String {
    let mut out = String::from("t");
    for i in 0..n_x {
        out.push_str(&format!(",x{i}"));
    }
    for i in 0..n_u {
        out.push_str(&format!(",u{i}"));
    }
    for i in 0..n_x {
        out.push_str(&format!(",xr{i}"));
    }
    out.push_str(",iterations,solve_time_us,primal_res,dual_res\n");
    for record in &trace.records {
        out.push_str(&record.step.to_string());
        for v in record.x.iter().chain(record.u.iter()).chain(record.x_r.iter()) {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(
            ",{},{},{},{}\n",
            record.iterations,
            record.solve_time.as_micros(),
            record.primal_residual,
            record.dual_residual
        ));
    }
    out
}

fn cmd_simulate(cli: &Cli, scenario_path: &Path) -> Result<(), CliError> {
    let file: ScenarioFile = serde_json::from_str(&read_file(scenario_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", scenario_path.display())))?;
    let mut scenario = file
        .to_scenario()
        .map_err(|e| CliError::Input(format!("{}: {e}", scenario_path.display())))?;
    scenario.settings = settings_from_flags(cli, file.settings.as_ref())?;
    let file_encoding = file.encoding.as_deref().map(parse_encoding).transpose()
        .map_err(|e| CliError::Input(e.to_string()))?;
    scenario.encoding = encoding_from_flags(cli, file_encoding)?;

    let trace = match run_closed_loop(&scenario) {
        Ok(trace) => trace,
        Err(SimError::Diverged { step, source, trace }) => {
            let csv = trace_to_csv(&trace, scenario.problem.n_x(), scenario.problem.n_u());
            emit(cli, &csv)?;
            return Err(CliError::Failure(format!("step {step}: {source}")));
        }
        Err(e) => return Err(CliError::Input(e.to_string())),
    };

    emit(cli, &trace_to_csv(&trace, scenario.problem.n_x(), scenario.problem.n_u()))?;
    if !trace.all_converged() {
        return Err(CliError::MaxIterations(
            "one or more steps hit the iteration limit (see iteration column)".into(),
        ));
    }
    Ok(())
}

fn parse_sides_range(text: &str) -> Result<(usize, usize), CliError> {
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Input(format!("sides-range: bad integer \"{s}\"")))
    };
    match text.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if lo > hi {
                return Err(CliError::Input(format!(
                    "sides-range: {lo}..{hi} is empty"
                )));
            }
            Ok((lo, hi))
        }
        None => {
            let v = parse(text)?;
            Ok((v, v))
        }
    }
}

fn cmd_bench_compare(cli: &Cli, args: &BenchArgs) -> Result<(), CliError> {
    let (problem, file_positions): (HmpcProblem, Option<[usize; 2]>) = match &args.problem {
        Some(path) => hmpc::io::parse_problem(&read_file(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => (surrogate_problem(5, 0.3), Some(SURROGATE_POSITION_STATES)),
    };
    let position_states = match &args.position_states {
        Some(text) => {
            let parts: Vec<_> = text.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(CliError::Input(
                    "position-states: expected two comma-separated indices".into(),
                ));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| CliError::Input(format!("position-states: bad index \"{s}\"")))
            };
            [parse(parts[0])?, parse(parts[1])?]
        }
        None => file_positions.ok_or_else(|| {
            CliError::Input(
                "the problem file does not designate position_states; pass --position-states".into(),
            )
        })?,
    };

    let (lo, hi) = parse_sides_range(&args.sides_range)?;
    if args.sides_step == 0 {
        return Err(CliError::Input("sides-step must be at least 1".into()));
    }
    let sides: Vec<usize> = (lo..=hi).step_by(args.sides_step).collect();
    if args.runs == 0 {
        return Err(CliError::Input("runs must be at least 1".into()));
    }

    let cfg = BenchConfig {
        sides,
        runs: args.runs,
        radius: args.radius,
        seed: cli.seed,
        settings: settings_from_flags(cli, None)?,
        position_states,
    };
    let report = run_bench(&problem, &cfg).map_err(|e| CliError::Failure(e.to_string()))?;

    let csv = report.to_csv();
    let json = serde_json::to_string_pretty(&report).unwrap();
    match &cli.out {
        Some(prefix) => {
            let csv_path = prefix.with_extension("csv");
            let json_path = prefix.with_extension("json");
            fs::write(&csv_path, csv)
                .map_err(|e| CliError::Failure(format!("{}: {e}", csv_path.display())))?;
            fs::write(&json_path, json)
                .map_err(|e| CliError::Failure(format!("{}: {e}", json_path.display())))?;
        }
        None => println!("{csv}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct PolygonOutput {
    sides: usize,
    circumradius: f64,
    rows: Vec<[f64; 2]>,
    upper: f64,
    lower: f64,
}

fn cmd_gen_polygon(
    cli: &Cli,
    sides: usize,
    radius: f64,
    problem_path: Option<&Path>,
) -> Result<(), CliError> {
    let poly = gen_polygon(sides, radius).map_err(|e| CliError::Input(e.to_string()))?;
    match problem_path {
        None => {
            let output = PolygonOutput {
                sides,
                circumradius: radius,
                upper: poly.bound,
                lower: -poly.bound,
                rows: poly.rows.clone(),
            };
            emit(cli, &serde_json::to_string_pretty(&output).unwrap())
        }
        Some(path) => {
            let (problem, positions) = hmpc::io::parse_problem(&read_file(path)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let positions = positions.ok_or_else(|| {
                CliError::Input(format!(
                    "{}: no position_states designated; cannot place polygon rows",
                    path.display()
                ))
            })?;
            let augmented = hmpc::bench::with_polygon(&problem, positions, sides, radius)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let file = ProblemFile::from_problem(&augmented, Some(positions));
            emit(cli, &serde_json::to_string_pretty(&file).unwrap())
        }
    }
}
