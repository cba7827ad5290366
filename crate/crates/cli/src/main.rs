//! `retarda`: simulate delay systems and run reachability / stability
//! experiments from the command line.
//!
//! Every command prints one JSON line on stdout. Exit codes: 0 success,
//! 2 bad arguments or input files, 3 numeric failure or refusal.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retarda_core::history::{HistoryLiteral, PiecewiseHistory};
use retarda_core::pipeline::{run_gas_to_ugas, PipelineConfig};
use retarda_core::reachability::{
    estimate_reach_with, extend_reach_bound, fc_probe, geometric_radii, time_grid, ReachBound,
    SampleFamily,
};
use retarda_core::signals::SignalLiteral;
use retarda_core::stability::{
    check_ls_ga, check_ugas, EnvelopeDocument, Margins, StabilityError, ENVELOPE_SCHEMA_VERSION,
};
use retarda_core::{
    catalog, delayed_inputs, lift_to_tds, parse_system, solve_ode, solve_tds, InputSignal,
    SolveConfig, SystemDef,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "retarda",
    version,
    about = "Delay-system simulation and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a delay system and write the trajectory as CSV.
    Simulate(SimulateArgs),
    /// Solve, extract the delayed-state signal, re-solve as an ODE and compare.
    Reduce(ReduceArgs),
    /// Build a history from an ODE initial state and delayed-state signal.
    Lift(LiftArgs),
    /// Sampled reachability table and reach bound.
    Reach(ReachArgs),
    /// Search for finite escape.
    FcProbe(FcArgs),
    /// Fit a uniform decay bound and check it on held-out data.
    Stability(StabilityArgs),
    /// Check an envelope file, or probe local stability and attractivity.
    Verify(VerifyArgs),
    /// List catalog systems, or print one.
    Catalog(CatalogArgs),
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// Catalog entry name.
    #[arg(long, conflicts_with = "system")]
    catalog: Option<String>,
    /// System-spec JSON file.
    #[arg(long)]
    system: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TolArgs {
    #[arg(long, default_value_t = 1e-9)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    #[arg(long)]
    max_step: Option<f64>,
}

impl TolArgs {
    fn config(&self) -> Result<SolveConfig, CliError> {
        let mut cfg = SolveConfig::with_tolerances(self.rtol, self.atol);
        if let Some(h) = self.max_step {
            cfg.max_step = h;
        }
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct InitialArgs {
    /// History literal JSON file (pieces plus point_value).
    #[arg(long, conflicts_with = "constant")]
    history: Option<PathBuf>,
    /// Constant history, comma separated (default: all ones).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    constant: Option<Vec<f64>>,
    /// Input signal literal JSON file (default: zero).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    init: InitialArgs,
    #[arg(long)]
    t_final: f64,
    #[command(flatten)]
    tol: TolArgs,
    /// Output grid spacing; default is every step end.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Exit with code 3 if the solution escapes.
    #[arg(long)]
    forbid_escape: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    init: InitialArgs,
    #[arg(long)]
    t_final: f64,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LiftArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// ODE initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    z0: Vec<f64>,
    /// Delayed-state signal literal JSON file (p·n components).
    #[arg(long, conflicts_with = "v_constant")]
    v: Option<PathBuf>,
    /// Constant delayed-state signal, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v_constant: Option<Vec<f64>>,
    #[arg(long)]
    delta: f64,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReachArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Radii, comma separated; default is a geometric grid up to --r-max.
    #[arg(long, value_delimiter = ',')]
    radius: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    r_max: f64,
    #[arg(long)]
    t_final: f64,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 11)]
    time_points: usize,
    #[arg(long, default_value_t = 4)]
    history_pieces: usize,
    #[arg(long, default_value_t = 8)]
    input_pieces: usize,
    /// Also write the bound extended to this many multiples of the horizon.
    #[arg(long)]
    extend: Option<usize>,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FcArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[arg(long)]
    r_max: f64,
    #[arg(long)]
    t_final: f64,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[arg(long, default_value_t = 5.0)]
    r_max: f64,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    #[arg(long, default_value_t = 60)]
    reach_samples: usize,
    #[arg(long, default_value_t = 40)]
    fit_samples: usize,
    #[arg(long, default_value_t = 1000)]
    check_samples: usize,
    #[arg(long)]
    seed: u64,
    /// Seed of the held-out check (derived from --seed by default).
    #[arg(long)]
    check_seed: Option<u64>,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Envelope JSON written by `stability`; without it the LS/GA probe runs.
    #[arg(long)]
    envelope: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    radius: Vec<f64>,
    /// Tolerances ε of the local-stability probe.
    #[arg(long, value_delimiter = ',', default_value = "0.1,1")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CatalogArgs {
    /// Entry to print; lists all entries when absent.
    name: Option<String>,
}

enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn load_system(a: &SystemArgs) -> Result<SystemDef, CliError> {
    match (&a.catalog, &a.system) {
        (Some(name), None) => catalog::load(name).map_err(config),
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
            parse_system(&text).map_err(|e| config(format!("{}: {e}", path.display())))
        }
        _ => Err(CliError::Config(
            "give exactly one of --catalog or --system".into(),
        )),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn load_initial(
    sys: &SystemDef,
    a: &InitialArgs,
) -> Result<(PiecewiseHistory, InputSignal), CliError> {
    let x0 = match (&a.history, &a.constant) {
        (Some(path), _) => {
            let lit: HistoryLiteral = read_json(path)?;
            PiecewiseHistory::from_literal(&lit)
                .map_err(|e| config(format!("{}: {e}", path.display())))?
        }
        (None, Some(c)) => {
            if c.len() != sys.n() {
                return Err(CliError::Config(format!(
                    "--constant has {} values, n = {}",
                    c.len(),
                    sys.n()
                )));
            }
            PiecewiseHistory::constant(sys.theta_p(), c)
        }
        (None, None) => PiecewiseHistory::constant(sys.theta_p(), &vec![1.0; sys.n()]),
    };
    let u = match &a.input {
        Some(path) => {
            let lit: SignalLiteral = read_json(path)?;
            InputSignal::from_literal(sys.m(), &lit)
                .map_err(|e| config(format!("{}: {e}", path.display())))?
        }
        None => InputSignal::zero(sys.m()),
    };
    Ok((x0, u))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| config(format!("{}: {e}", dir.display())))?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| config(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.flush())
        .map_err(|e| config(format!("{}: {e}", target.display())))?;
    tmp.persist(&target)
        .map_err(|e| config(format!("{}: {e}", target.display())))?;
    Ok(target)
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn tol_json(cfg: &SolveConfig) -> Value {
    serde_json::to_value(cfg).expect("serializable")
}

fn simulate(a: &SimulateArgs) -> Result<Value, CliError> {
    let sys = load_system(&a.sys)?;
    let (x0, u) = load_initial(&sys, &a.init)?;
    let cfg = a.tol.config()?;
    let traj = solve_tds(&sys, &x0, &u, a.t_final, &cfg).map_err(numeric)?;
    let times = match a.grid_step {
        Some(dt) if dt > 0.0 => {
            let k = (traj.t_end() / dt).floor() as usize;
            let mut t: Vec<f64> = (0..=k).map(|i| i as f64 * dt).collect();
            if t.last().is_some_and(|&l| l < traj.t_end()) {
                t.push(traj.t_end());
            }
            t
        }
        Some(_) => return Err(CliError::Config("--grid-step must be positive".into())),
        None => traj.step_times(),
    };
    let csv = write_atomic(&a.out, "trajectory.csv", &traj.to_csv(&times))?;
    let meta = json!({
        "system": sys.name,
        "t_final": a.t_final,
        "t_end": traj.t_end(),
        "x_end": traj.eval(traj.t_end()),
        "escape": traj.escape(),
        "stats": traj.stats(),
        "breakpoints": traj.breakpoints(),
        "solver": tol_json(&cfg),
    });
    write_atomic(&a.out, "meta.json", &pretty(&meta))?;
    if a.forbid_escape {
        if let Some(e) = traj.escape() {
            return Err(CliError::Numeric(format!(
                "solution escaped at t = {}",
                e.time
            )));
        }
    }
    Ok(json!({
        "system": sys.name,
        "t_end": traj.t_end(),
        "x_end": traj.eval(traj.t_end()),
        "escaped": traj.escaped(),
        "escape_time": traj.escape().map(|e| e.time),
        "steps": traj.stats().accepted,
        "trajectory": csv,
        "solver": tol_json(&cfg),
    }))
}

fn max_deviation(
    a: &retarda_core::Trajectory,
    b: &retarda_core::Trajectory,
    lo: f64,
    hi: f64,
) -> f64 {
    let mut times: Vec<f64> = a
        .step_times()
        .into_iter()
        .chain(b.step_times())
        .filter(|&t| t >= lo && t <= hi)
        .collect();
    let k = 1000;
    times.extend((0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64));
    times
        .iter()
        .map(|&t| {
            a.eval(t)
                .iter()
                .zip(b.eval(t))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn reduce(a: &ReduceArgs) -> Result<Value, CliError> {
    let sys = load_system(&a.sys)?;
    let (x0, u) = load_initial(&sys, &a.init)?;
    let cfg = a.tol.config()?;
    let tds = solve_tds(&sys, &x0, &u, a.t_final, &cfg).map_err(numeric)?;
    if let Some(e) = tds.escape() {
        return Err(CliError::Numeric(format!(
            "solution escaped at t = {}",
            e.time
        )));
    }
    let v = delayed_inputs(&x0, &tds, sys.delays()).map_err(numeric)?;
    let ode = solve_ode(&sys, x0.point_value(), &v, &u, a.t_final, &cfg).map_err(numeric)?;
    let dev = max_deviation(&tds, &ode, 0.0, a.t_final);
    let grid = time_grid(a.t_final, 201, &[]);
    write_atomic(&a.out, "v.json", &pretty(&v.to_literal()))?;
    write_atomic(&a.out, "v.csv", &v.to_csv(&grid))?;
    write_atomic(&a.out, "tds.csv", &tds.to_csv(&grid))?;
    write_atomic(&a.out, "ode.csv", &ode.to_csv(&grid))?;
    Ok(json!({
        "system": sys.name,
        "t_final": a.t_final,
        "max_deviation": dev,
        "v_pieces": v.pieces().len(),
        "solver": tol_json(&cfg),
    }))
}

fn lift(a: &LiftArgs) -> Result<Value, CliError> {
    let sys = load_system(&a.sys)?;
    let cfg = a.tol.config()?;
    let v = match (&a.v, &a.v_constant) {
        (Some(path), _) => {
            let lit: SignalLiteral = read_json(path)?;
            InputSignal::from_literal(sys.n() * sys.p(), &lit)
                .map_err(|e| config(format!("{}: {e}", path.display())))?
        }
        (None, Some(c)) => InputSignal::constant(c),
        (None, None) => return Err(CliError::Config("give --v or --v-constant".into())),
    };
    let x0 = lift_to_tds(&sys, &a.z0, &v, a.delta).map_err(config)?;
    let u = InputSignal::zero(sys.m());
    let tds = solve_tds(&sys, &x0, &u, a.delta, &cfg).map_err(numeric)?;
    let ode = solve_ode(&sys, &a.z0, &v, &u, a.delta, &cfg).map_err(numeric)?;
    let dev = max_deviation(&tds, &ode, 0.0, a.delta);
    let path = write_atomic(&a.out, "history.json", &pretty(&x0))?;
    Ok(json!({
        "system": sys.name,
        "delta": a.delta,
        "window_bound": sys.delays().lift_window_bound(),
        "round_trip_deviation": dev,
        "history": path,
        "solver": tol_json(&cfg),
    }))
}

fn reach(a: &ReachArgs) -> Result<Value, CliError> {
    let sys = load_system(&a.sys)?;
    let cfg = a.tol.config()?;
    let radii = match &a.radius {
        Some(r) => r.clone(),
        None => geometric_radii(a.r_max / 100.0, a.r_max, 8),
    };
    let times = time_grid(a.t_final, a.time_points, &[]);
    let family = SampleFamily {
        history_pieces: a.history_pieces,
        input_pieces: a.input_pieces,
    };
    let table = estimate_reach_with(&sys, &radii, &times, a.samples, a.seed, &cfg, &family)
        .map_err(|e| match e {
            retarda_core::reachability::ReachError::Solve { .. } => numeric(e),
            other => config(other),
        })?;
    let csv = write_atomic(&a.out, "reach.csv", &table.to_csv())?;
    let mut summary = json!({
        "system": sys.name,
        "radii": radii,
        "t_final": a.t_final,
        "samples": a.samples,
        "seed": a.seed,
        "escaped": table.any_escape(),
        "final_estimates": table.sup_estimates.iter().map(|row| row[row.len() - 1]).collect::<Vec<_>>(),
        "table": csv,
        "solver": tol_json(&cfg),
    });
    if !table.any_escape() && radii.len() >= 2 {
        let bound = ReachBound::from_table(&table).map_err(numeric)?;
        summary["bound"] = json!(write_atomic(&a.out, "bound.json", &pretty(&bound))?);
        if let Some(n) = a.extend {
            let ext = extend_reach_bound(&bound, n).map_err(config)?;
            summary["extended"] = json!(write_atomic(
                &a.out,
                &format!("bound_x{n}.json"),
                &pretty(&ext)
            )?);
            summary["extended_extrapolated"] = json!(ext.extrapolated);
        }
    }
    Ok(summary)
}

fn fc(a: &FcArgs) -> Result<Value, CliError> {
    let sys = load_system(&a.sys)?;
    let cfg = a.tol.config()?;
    let rep = fc_probe(&sys, a.r_max, a.t_final, a.samples, a.seed, &cfg).map_err(numeric)?;
    let path = write_atomic(&a.out, "fc_probe.json", &pretty(&rep))?;
    Ok(json!({
        "system": sys.name,
        "r_max": a.r_max,
        "t_final": a.t_final,
        "samples": a.samples,
        "seed": a.seed,
        "witnesses": rep.witnesses.len(),
        "first_escape": rep.witnesses.first().map(|w| w.t_star),
        "report": path,
        "solver": tol_json(&cfg),
    }))
}

fn stability(a: &StabilityArgs) -> Result<Value, CliError> {
    let sys = load_system(&a.sys)?;
    let cfg = PipelineConfig {
        r_max: a.r_max,
        horizon: a.horizon,
        reach_samples: a.reach_samples,
        fit_samples: a.fit_samples,
        check_samples: a.check_samples,
        seed: a.seed,
        check_seed: a.check_seed,
        solve: a.tol.config()?,
        ..PipelineConfig::default()
    };
    let rep = run_gas_to_ugas(&sys, &cfg).map_err(|e| match e {
        StabilityError::Argument(_) => config(e),
        other => numeric(other),
    })?;
    let doc = EnvelopeDocument {
        schema_version: ENVELOPE_SCHEMA_VERSION,
        envelope: rep.bar_beta.clone(),
        margins: Margins::default(),
        provenance: json!({
            "system": sys.name,
            "seed": cfg.seed,
            "check_seed": rep.check_seed,
            "r_star": rep.r_star,
            "config": cfg,
        }),
    };
    let env_path = write_atomic(&a.out, "envelope.json", &pretty(&doc))?;
    let viol_path = write_atomic(&a.out, "violations.csv", &rep.ugas.violations_csv())?;
    write_atomic(&a.out, "report.json", &pretty(&rep))?;
    let summary = json!({
        "system": sys.name,
        "r_star": rep.r_star,
        "samples": rep.ugas.samples,
        "checks": rep.ugas.checks,
        "violations": rep.ugas.violations.len(),
        "max_ratio": rep.ugas.max_ratio,
        "seed": cfg.seed,
        "check_seed": rep.check_seed,
        "envelope": env_path,
        "violation_csv": viol_path,
        "config": cfg,
    });
    if rep.ugas.violations.is_empty() {
        Ok(summary)
    } else {
        Err(CliError::Numeric(format!(
            "{} violations",
            rep.ugas.violations.len()
        )))
    }
}

fn verify(a: &VerifyArgs) -> Result<Value, CliError> {
    let sys = load_system(&a.sys)?;
    let cfg = a.tol.config()?;
    match &a.envelope {
        Some(path) => {
            let doc: EnvelopeDocument = read_json(path)?;
            if doc.schema_version != ENVELOPE_SCHEMA_VERSION {
                return Err(CliError::Config(format!(
                    "unsupported schema_version {}",
                    doc.schema_version
                )));
            }
            let rep = check_ugas(
                &sys,
                &doc.envelope,
                &a.radius,
                a.horizon,
                a.samples,
                a.seed,
                &cfg,
            )
            .map_err(numeric)?;
            let csv = write_atomic(&a.out, "violations.csv", &rep.violations_csv())?;
            let summary = json!({
                "system": sys.name,
                "samples": rep.samples,
                "checks": rep.checks,
                "violations": rep.violations.len(),
                "max_ratio": rep.max_ratio,
                "seed": a.seed,
                "violation_csv": csv,
            });
            if rep.violations.is_empty() {
                Ok(summary)
            } else {
                Err(CliError::Numeric(format!(
                    "{} violations",
                    rep.violations.len()
                )))
            }
        }
        None => {
            let rep = check_ls_ga(&sys, &a.eps, &a.radius, a.horizon, a.samples, a.seed, &cfg)
                .map_err(numeric)?;
            let path = write_atomic(&a.out, "ls_ga.json", &pretty(&rep))?;
            Ok(json!({
                "system": sys.name,
                "locally_stable": rep.locally_stable(),
                "globally_attractive": rep.globally_attractive(),
                "safe_delta": rep.ls.iter().map(|e| e.safe_delta).collect::<Vec<_>>(),
                "seed": a.seed,
                "report": path,
            }))
        }
    }
}

fn list_catalog(a: &CatalogArgs) -> Result<Value, CliError> {
    match &a.name {
        Some(name) => {
            let text = catalog::source(name)
                .ok_or_else(|| CliError::Config(format!("unknown catalog entry '{name}'")))?;
            let v: Value = serde_json::from_str(text).map_err(config)?;
            Ok(json!({ "entry": v }))
        }
        None => Ok(json!({ "entries": catalog::names().collect::<Vec<_>>() })),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Reduce(_) => "reduce",
        Command::Lift(_) => "lift",
        Command::Reach(_) => "reach",
        Command::FcProbe(_) => "fc-probe",
        Command::Stability(_) => "stability",
        Command::Verify(_) => "verify",
        Command::Catalog(_) => "catalog",
    }
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("RETARDA_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            CliError::Config(format!(
                "RETARDA_THREADS must be a positive integer (got '{v}')"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(config)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let msg = e.kind().to_string();
            println!(
                "{}",
                json!({ "status": "error", "exit_code": 2, "error": msg })
            );
            return ExitCode::from(2);
        }
    };
    let name = command_name(&cli.command);
    let result = init_threads().and_then(|_| match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reduce(a) => reduce(a),
        Command::Lift(a) => lift(a),
        Command::Reach(a) => reach(a),
        Command::FcProbe(a) => fc(a),
        Command::Stability(a) => stability(a),
        Command::Verify(a) => verify(a),
        Command::Catalog(a) => list_catalog(a),
    });
    match result {
        Ok(mut summary) => {
            summary["command"] = json!(name);
            summary["status"] = json!("ok");
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("retarda {name}: {}", e.message());
            println!(
                "{}",
                json!({ "command": name, "status": "error", "exit_code": e.code(), "error": e.message() })
            );
            ExitCode::from(e.code())
        }
    }
}
