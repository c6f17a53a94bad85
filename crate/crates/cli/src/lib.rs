//! The `jsq` command line: simulation, rate evaluation, fluid solves, path
//! action, action minimisation, Monte Carlo verification and the
//! acceptance suite.
//!
//! Queue and stream indices are 1-based on the command line and in every
//! output file.

pub mod acceptance;
pub mod output;
pub mod parse;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jsq_core::{
    check_replications, estimate_rare_event, extrapolate_rate, fluid_solve, local_rate,
    local_rate_bruteforce, minimize_action, nominal_inputs, path_action, psi_ij, scale_path,
    simulate, ActionReport, DomainLabel, InitialCost, LdpError, PiecewisePath, PoissonCost,
    RareEventSpec, RateOptions, RateStatus, SamplePath, SimConfig, TieRule, Topology,
};
use serde::Serialize;
use serde_json::{json, Value};

use output::{num, nums, to_json_string, Csv, RunOutputs};

/// An error with a specific exit status.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "jsq", version, about = "Join-the-shortest-queue networks: simulation, rate function, fluid model and path action")]
pub struct Cli {
    /// TOML file with one table per subcommand; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for replications and multistarts.
    #[arg(long, global = true, env = "JSQ_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate the n-th system and write its scaled path as CSV.
    Simulate(SimulateArgs),
    /// Evaluate the local rate function L(x, y).
    Rate(RateArgs),
    /// Solve the fluid model forward in time.
    Fluid(FluidArgs),
    /// Action of a piecewise-linear queue path.
    Action(ActionArgs),
    /// Minimise the action over paths reaching a terminal threshold.
    Optimize(OptimizeArgs),
    /// Monte Carlo estimates of a rare event against the optimised action.
    Verify(VerifyArgs),
    /// Run the acceptance suite.
    Acceptance(AcceptanceArgs),
}

const SUBCOMMANDS: [&str; 7] = ["simulate", "rate", "fluid", "action", "optimize", "verify", "acceptance"];

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Scaled horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `lowest` or `uniform`.
    #[arg(long, default_value = "lowest")]
    pub tie: String,
    /// Initial scaled queue lengths; zeros when omitted.
    #[arg(long)]
    pub q0: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sample on a uniform scaled-time grid instead of at every event.
    #[arg(long)]
    pub grid: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMethod {
    /// Interior-point solve of the full program.
    Solver,
    /// The reduced program of the domain containing x.
    Reduced,
    /// Grid search.
    Bruteforce,
}

#[derive(Args, Debug, Serialize)]
pub struct RateArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = RateMethod::Solver)]
    pub method: RateMethod,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 5.0)]
    pub box_radius: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct FluidArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub q0: String,
    /// CSV `t, a_1..a_M, b_1..b_K` of cumulative inputs; nominal rates when
    /// omitted.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ActionArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// CSV `t, q_1..q_K`.
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Charge an infinite initial cost unless the path starts here.
    #[arg(long)]
    pub q0: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// For example `terminal:k=1,c=1,T=1`.
    #[arg(long)]
    pub event: String,
    #[arg(long)]
    pub q0: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub event: String,
    #[arg(long, default_value = "10,20,40")]
    pub scales: String,
    /// One count for every scale, or a comma-separated list.
    #[arg(long, default_value = "1e6")]
    pub reps: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub q0: Option<String>,
    #[arg(long, default_value = "lowest")]
    pub tie: String,
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    /// Expected hits required at the smallest scale.
    #[arg(long, default_value_t = 10.0)]
    pub min_hits: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct AcceptanceArgs {
    /// Group names (`rate`, `fluid`, `ldp`, `sim`, `cost`), criterion
    /// numbers or names, comma-separated.
    #[arg(long)]
    pub only: Option<String>,
    /// List the criteria without running them.
    #[arg(long)]
    pub list: bool,
}

fn input_error(message: String) -> anyhow::Error {
    Exit {
        code: EXIT_INPUT,
        kind: "input",
        message,
    }
    .into()
}

pub fn load_topology(path: &Path) -> Result<Topology> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Exit {
                code: EXIT_INPUT,
                kind: "topology-not-found",
                message: format!("topology not found: {}", path.display()),
            }
            .into()
        } else {
            input_error(format!("cannot read topology {}: {e}", path.display()))
        }
    })?;
    Topology::from_toml_str(&text).map_err(|e| input_error(format!("invalid topology {}: {e}", path.display())))
}

fn vector_of(s: Option<&str>, len: usize, what: &str) -> Result<Vec<f64>> {
    let v = match s {
        Some(s) => parse::vector(s)?,
        None => vec![0.0; len],
    };
    if v.len() != len {
        bail!("{what} has {} entries, expected {len}", v.len());
    }
    Ok(v)
}

fn tie_rule(s: &str) -> Result<TieRule> {
    Ok(s.parse::<TieRule>()?)
}

/// Emits `text` to `out` (with a manifest) or to stdout.
fn emit(out: Option<&Path>, outputs: RunOutputs, text: &str) -> Result<()> {
    match out {
        Some(_) => {
            outputs.write()?;
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn config_value<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

/// The simulated path as CSV: `t, Q1.., A1.., B1.., D1.., E1_1..`, at every
/// event or on a grid.
pub fn simulate_csv(path: &SamplePath, grid: Option<f64>) -> Result<String> {
    let (k_count, m_count) = (path.num_servers(), path.num_streams());
    let mut header = vec!["t".to_string()];
    header.extend((1..=k_count).map(|k| format!("Q{k}")));
    header.extend((1..=m_count).map(|m| format!("A{m}")));
    header.extend((1..=k_count).map(|k| format!("B{k}")));
    header.extend((1..=k_count).map(|k| format!("D{k}")));
    for k in 1..=k_count {
        header.extend((1..=m_count).map(|m| format!("E{k}_{m}")));
    }
    let mut csv = Csv::new(header);
    match grid {
        Some(h) => {
            let sampled = scale_path(path, h)?;
            for (t, v) in sampled.times().iter().zip(sampled.values()) {
                csv.row(std::iter::once(*t).chain(v.iter().copied()));
            }
        }
        None => {
            let n = path.n() as f64;
            for i in 0..=path.num_events() {
                let t = path.time(i) / n;
                let row = path
                    .queue(i)
                    .iter()
                    .chain(path.arrivals(i))
                    .chain(path.service(i))
                    .chain(path.departures(i))
                    .chain(path.routed(i))
                    .map(|&c| c as f64 / n);
                csv.row(std::iter::once(t).chain(row));
            }
        }
    }
    Ok(csv.into_string())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let topology = load_topology(&args.topology)?;
    let cfg = SimConfig {
        n: args.n,
        horizon: args.horizon,
        seed: args.seed,
        tie: tie_rule(&args.tie)?,
        q0_scaled: vector_of(args.q0.as_deref(), topology.num_servers(), "q0")?,
    };
    let path = simulate(&topology, &cfg)?;
    let csv = simulate_csv(&path, args.grid)?;
    let mut outputs = RunOutputs::new("simulate", config_value(args), vec![args.seed]);
    if let Some(out) = &args.out {
        outputs.add(out, csv.clone());
    }
    emit(args.out.as_deref(), outputs, &csv)
}

fn label_json(label: &DomainLabel) -> Value {
    json!({
        "zero_set": label.zero_set.iter().map(|k| k + 1).collect::<Vec<_>>(),
        "argmin": label.argmin.iter().map(|s| s.iter().map(|k| k + 1).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

fn status_json(status: RateStatus) -> Value {
    match status {
        RateStatus::Optimal => json!("optimal"),
        RateStatus::Infeasible { queue } => json!({"infeasible": {"queue": queue + 1}}),
        RateStatus::InfiniteCost => json!("infinite-cost"),
    }
}

fn cmd_rate(args: &RateArgs) -> Result<()> {
    let topology = load_topology(&args.topology)?;
    let k_count = topology.num_servers();
    let x = vector_of(Some(&args.x), k_count, "x")?;
    let y = vector_of(Some(&args.y), k_count, "y")?;
    let cost = PoissonCost::new(&topology);
    let opts = RateOptions::with_tol(args.tol);
    let report = match args.method {
        RateMethod::Solver => {
            let w = local_rate(&x, &y, &topology, &cost, &opts)?;
            json!({
                "L": num(w.value),
                "method": "solver",
                "status": status_json(w.status),
                "label": label_json(&w.label),
                "a": nums(&w.a),
                "b": nums(&w.b),
                "e": w.e.iter().map(|r| nums(r)).collect::<Vec<_>>(),
                "d": nums(&w.d),
                "kkt_residual": num(w.kkt_residual),
                "newton_steps": w.newton_steps,
            })
        }
        RateMethod::Reduced => {
            let label = jsq_core::classify_domain(&x, &topology)?;
            let v = psi_ij(&label, &y, &topology, &cost, &opts)?;
            json!({"L": num(v), "method": "reduced", "label": label_json(&label)})
        }
        RateMethod::Bruteforce => {
            let v = local_rate_bruteforce(&x, &y, &topology, &cost, args.grid_step, args.box_radius)?;
            json!({"L": num(v), "method": "bruteforce", "grid_step": args.grid_step, "box_radius": args.box_radius})
        }
    };
    let text = to_json_string(&report)?;
    let mut outputs = RunOutputs::new("rate", config_value(args), vec![]);
    if let Some(out) = &args.out {
        outputs.add(out, text.clone());
    }
    emit(args.out.as_deref(), outputs, &text)
}

fn cmd_fluid(args: &FluidArgs) -> Result<()> {
    let topology = load_topology(&args.topology)?;
    let (k_count, m_count) = (topology.num_servers(), topology.num_streams());
    let q0 = vector_of(Some(&args.q0), k_count, "q0")?;
    let (a, b) = match &args.inputs {
        Some(p) => parse::inputs_file(p, m_count, k_count)?,
        None => nominal_inputs(&topology, args.horizon)?,
    };
    let sol = fluid_solve(&topology, &q0, &a, &b, args.horizon, args.h)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=k_count).map(|k| format!("q{k}")));
    header.extend((1..=k_count).map(|k| format!("d{k}")));
    for k in 1..=k_count {
        header.extend((1..=m_count).map(|m| format!("e{k}_{m}")));
    }
    let mut csv = Csv::new(header);
    for (i, t) in sol.q.times().iter().enumerate() {
        let row = std::iter::once(*t)
            .chain(sol.q.values()[i].iter().copied())
            .chain(sol.d.values()[i].iter().copied())
            .chain(sol.e.values()[i].iter().copied());
        csv.row(row);
    }
    let csv = csv.into_string();
    let mut outputs = RunOutputs::new("fluid", config_value(args), vec![]);
    if let Some(out) = &args.out {
        outputs.add(out, csv.clone());
    }
    emit(args.out.as_deref(), outputs, &csv)
}

fn path_json(path: &PiecewisePath) -> Value {
    json!({
        "t": nums(path.times()),
        "q": path.values().iter().map(|v| nums(v)).collect::<Vec<_>>(),
    })
}

fn action_json(report: &ActionReport) -> Value {
    json!({
        "total": num(report.total),
        "initial": num(report.initial),
        "running": num(report.running),
        "negative": report.negative,
        "closable_tail": report.closable_tail,
        "pieces": report.pieces.iter().map(|p| json!({
            "t0": num(p.t0),
            "t1": num(p.t1),
            "L": num(p.rate),
            "velocity": nums(&p.velocity),
            "status": status_json(p.status),
            "label": label_json(&p.label),
        })).collect::<Vec<_>>(),
    })
}

fn pieces_csv(report: &ActionReport) -> String {
    let k_count = report.path.dim();
    let mut header = vec!["t0".to_string(), "t1".to_string(), "L".to_string()];
    header.extend((1..=k_count).map(|k| format!("v{k}")));
    let mut csv = Csv::new(header);
    for p in &report.pieces {
        csv.row([p.t0, p.t1, p.rate].into_iter().chain(p.velocity.iter().copied()));
    }
    csv.into_string()
}

fn path_csv(path: &PiecewisePath) -> String {
    let mut header = vec!["t".to_string()];
    header.extend((1..=path.dim()).map(|k| format!("q{k}")));
    let mut csv = Csv::new(header);
    for (t, v) in path.times().iter().zip(path.values()) {
        csv.row(std::iter::once(*t).chain(v.iter().copied()));
    }
    csv.into_string()
}

fn cmd_action(args: &ActionArgs) -> Result<()> {
    let topology = load_topology(&args.topology)?;
    let path = parse::path_file(&args.path, topology.num_servers())?;
    let initial = match &args.q0 {
        Some(s) => InitialCost::Fixed(vector_of(Some(s), topology.num_servers(), "q0")?),
        None => InitialCost::Free,
    };
    let cost = PoissonCost::new(&topology);
    let report = path_action(&path, &topology, &cost, &initial, &RateOptions::with_tol(args.tol))?;
    let text = to_json_string(&action_json(&report))?;
    let mut outputs = RunOutputs::new("action", config_value(args), vec![]);
    if let Some(out) = &args.out {
        outputs.add(out, text.clone());
        outputs.add(output::sibling(out, "pieces.csv"), pieces_csv(&report));
    }
    emit(args.out.as_deref(), outputs, &text)
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<()> {
    let topology = load_topology(&args.topology)?;
    let (target, horizon) = parse::event(&args.event)?;
    let q0 = vector_of(args.q0.as_deref(), topology.num_servers(), "q0")?;
    let cost = PoissonCost::new(&topology);
    let best = minimize_action(
        &target,
        &q0,
        horizon,
        &topology,
        &cost,
        args.segments,
        &RateOptions::with_tol(args.tol),
    )?;
    let report = json!({
        "value": num(best.value),
        "segments": args.segments,
        "path": path_json(&best.path),
        "start_values": nums(&best.start_values),
        "action": action_json(&best.report),
    });
    let text = to_json_string(&report)?;
    let mut outputs = RunOutputs::new("optimize", config_value(args), vec![]);
    if let Some(out) = &args.out {
        outputs.add(out, text.clone());
        outputs.add(output::sibling(out, "path.csv"), path_csv(&best.path));
    }
    emit(args.out.as_deref(), outputs, &text)
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let topology = load_topology(&args.topology)?;
    let (target, horizon) = parse::event(&args.event)?;
    let scales = parse::counts(&args.scales)?;
    if scales.is_empty() {
        bail!("no scales given");
    }
    let reps = parse::counts(&args.reps)?;
    let replications = match reps.len() {
        1 => vec![reps[0]; scales.len()],
        n if n == scales.len() => reps,
        n => bail!("{n} replication counts for {} scales", scales.len()),
    };
    let q0 = vector_of(args.q0.as_deref(), topology.num_servers(), "q0")?;
    let cost = PoissonCost::new(&topology);
    let opts = RateOptions::with_tol(args.tol);

    let terminal = match target {
        jsq_core::EventTarget::Terminal { .. } => target,
        jsq_core::EventTarget::RunningMax { queue, threshold } => {
            // reaching the level at T is one way of reaching it by T
            jsq_core::EventTarget::Terminal { queue, threshold }
        }
    };
    let best = minimize_action(&terminal, &q0, horizon, &topology, &cost, args.segments, &opts)?;
    let (smallest, reps_at_smallest) = scales
        .iter()
        .zip(&replications)
        .min_by_key(|(n, _)| **n)
        .map(|(n, r)| (*n, *r))
        .unwrap();
    if let Err(LdpError::TooFewReplications {
        expected, required, ..
    }) = check_replications(smallest, reps_at_smallest, best.value, args.min_hits)
    {
        return Err(Exit {
            code: EXIT_PRECONDITION,
            kind: "precondition",
            message: format!(
                "precondition failed: {reps_at_smallest} replications at n = {smallest} give {expected:.3} expected hits (reps·exp(−n·I) with I = {:.6}), need at least {required}",
                best.value
            ),
        }
        .into());
    }

    let spec = RareEventSpec {
        target,
        horizon,
        q0_scaled: q0,
        scales,
        replications,
        seed: args.seed,
        tie: tie_rule(&args.tie)?,
    };
    let table = estimate_rare_event(&spec, &topology)?;
    let fit = extrapolate_rate(&table).ok();
    let report = json!({
        "variational_value": num(best.value),
        "optimal_path": path_json(&best.path),
        "table": table.iter().map(|e| json!({
            "n": e.n,
            "replications": e.replications,
            "hits": e.hits,
            "p_hat": num(e.p_hat),
            "p_low": num(e.p_low),
            "p_high": num(e.p_high),
            "rate": e.rate.map(num).unwrap_or(Value::Null),
            "rate_low": num(e.rate_low),
            "rate_high": num(e.rate_high),
            "one_sided": e.one_sided(),
        })).collect::<Vec<_>>(),
        "extrapolated_rate": fit.map(|f| num(f.rate)).unwrap_or(Value::Null),
        "extrapolation_slope": fit.map(|f| num(f.slope)).unwrap_or(Value::Null),
        "relative_gap": fit.map(|f| num((f.rate - best.value).abs() / best.value)).unwrap_or(Value::Null),
    });
    let text = to_json_string(&report)?;

    let mut table_csv = Csv::new(["n", "replications", "hits", "p_hat", "p_low", "p_high", "rate", "rate_low", "rate_high"]);
    let mut plot_csv = Csv::new(["inv_n", "rate", "rate_low", "rate_high"]);
    for e in &table {
        let rate = e.rate.unwrap_or(f64::NAN);
        table_csv.row([
            e.n as f64,
            e.replications as f64,
            e.hits as f64,
            e.p_hat,
            e.p_low,
            e.p_high,
            rate,
            e.rate_low,
            e.rate_high,
        ]);
        plot_csv.row([1.0 / e.n as f64, rate, e.rate_low, e.rate_high]);
    }
    let mut outputs = RunOutputs::new("verify", config_value(args), vec![args.seed]);
    if let Some(out) = &args.out {
        outputs.add(out, text.clone());
        outputs.add(output::sibling(out, "table.csv"), table_csv.into_string());
        outputs.add(output::sibling(out, "plot.csv"), plot_csv.into_string());
    }
    emit(args.out.as_deref(), outputs, &text)
}

fn cmd_acceptance(args: &AcceptanceArgs) -> Result<bool> {
    if args.list {
        for c in &acceptance::CRITERIA {
            println!("{:>2} {:<6} {}", c.id, c.group, c.name);
        }
        return Ok(true);
    }
    let selected = acceptance::CRITERIA
        .iter()
        .filter(|c| args.only.as_deref().is_none_or(|f| c.selected_by(f)))
        .count();
    if selected == 0 {
        return Err(anyhow!("no criterion matches `{}`", args.only.as_deref().unwrap_or("")));
    }
    Ok(acceptance::run_selected(args.only.as_deref(), |line| println!("{line}")))
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a)?,
        Command::Rate(a) => cmd_rate(a)?,
        Command::Fluid(a) => cmd_fluid(a)?,
        Command::Action(a) => cmd_action(a)?,
        Command::Optimize(a) => cmd_optimize(a)?,
        Command::Verify(a) => cmd_verify(a)?,
        Command::Acceptance(a) => {
            return Ok(if cmd_acceptance(a)? { 0 } else { EXIT_FAILURE });
        }
    }
    Ok(0)
}

fn report_error(err: &anyhow::Error) -> i32 {
    let (code, kind) = match err.downcast_ref::<Exit>() {
        Some(e) => (e.code, e.kind),
        None => (EXIT_FAILURE, "error"),
    };
    let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
    let body = json!({"error": {"kind": kind, "code": code, "message": chain.join(": ")}});
    eprintln!("{body}");
    code
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match parse::merge_config(argv, &SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => return report_error(&input_error(format!("{e:#}"))),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let result = match pool.build().context("starting worker threads") {
        Ok(pool) => pool.install(|| dispatch(&cli)),
        Err(e) => Err(e),
    };
    match result {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}
