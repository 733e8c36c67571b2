use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmon_core::optimizer::{optimize, default_init, DescentReport};
use pmon_core::scheduler::{mip::export_lp, solve_extended, JointSearch, VisitSchedule};
use pmon_core::sim::{fmt_g, simulate_params, simulate_with, compile_program, default_gamma, SimTrace, TrajectoryParams};
use pmon_core::{Error, MissionConfig, RunConfig, UncertaintyRate};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "pmon", version, about = "Persistent monitoring: simulate, optimize and schedule agents on a line")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run description (JSON, or TOML by extension).
    #[arg(long, global = true, env = "SP_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, env = "SP_OUT", default_value = "out")]
    out: PathBuf,
    /// Master seed for random runs and restarts.
    #[arg(long, global = true, env = "SP_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SP_THREADS")]
    threads: Option<usize>,
    /// Zero wall-clock fields so that reruns produce identical files.
    #[arg(long, global = true, env = "SP_DETERMINISTIC")]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a fixed trajectory and write its trace.
    Simulate {
        /// Trajectory parameters (JSON); defaults to the config's trajectory.
        #[arg(long, env = "SP_PARAMS")]
        params: Option<PathBuf>,
    },
    /// Gradient descent over switching points and dwell times.
    IpaOptimize(OptimizeArgs),
    /// Enumerate visit sequences and tune dwell times.
    GraphSchedule(ScheduleArgs),
    /// Run both solvers and report the cost gap.
    Compare {
        #[command(flatten)]
        opt: OptimizeArgs,
        #[command(flatten)]
        sched: ScheduleArgs,
    },
    /// Compare the event-driven gradient with central differences.
    GradientCheck {
        #[arg(long, env = "SP_PARAMS")]
        params: Option<PathBuf>,
        /// Difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
}

#[derive(Args, Clone)]
struct OptimizeArgs {
    /// Enable the potential-field term.
    #[arg(long, env = "SP_EXCITATION")]
    excitation: bool,
    /// Iteration limit.
    #[arg(long, env = "SP_ITERATIONS")]
    iterations: Option<usize>,
    /// Starting parameters (JSON); defaults to the config's trajectory or a
    /// sweep over each agent's target group.
    #[arg(long = "init", env = "SP_INIT")]
    init: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    /// Planning window in time units; the result is tiled to the horizon.
    #[arg(long, env = "SP_WINDOW")]
    window: Option<f64>,
    #[arg(long, env = "SP_MAX_STEPS")]
    max_steps: Option<usize>,
    #[arg(long, value_enum, env = "SP_JOINT")]
    joint: Option<Joint>,
    /// Search over repeating cycles.
    #[arg(long, env = "SP_PERIODIC")]
    periodic: bool,
    /// Also write the assignment model as LP text.
    #[arg(long)]
    export_mip: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Joint {
    Exhaustive,
    Partitioned,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Params(_) | Error::NonFinite(_) | Error::Domain(_) | Error::Io(_) => 2,
        Error::Constraint(_) | Error::Aperiodic(_) | Error::Infeasible(_) => 3,
        Error::EnumerationCap { .. } => 4,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Parse(_) => "parse",
        Error::Params(_) => "params",
        Error::NonFinite(_) => "non_finite",
        Error::Domain(_) => "domain",
        Error::Constraint(_) => "constraint",
        Error::EnumerationCap { .. } => "enumeration_cap",
        Error::Mismatch(_) => "mismatch",
        Error::InteriorEvent { .. } => "interior_event",
        Error::UnknownTransition { .. } => "unknown_transition",
        Error::Aperiodic(_) => "aperiodic",
        Error::Infeasible(_) => "infeasible",
        Error::Diverged(_) => "diverged",
        Error::Io(_) => "io",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let mut v = json!({ "error": error_kind(&e), "message": e.to_string(), "exit_code": code });
            if let Error::EnumerationCap { estimate, cap } = &e {
                v["estimate"] = json!(estimate);
                v["cap"] = json!(cap);
                v["hint"] = json!("shorten the window with --window");
            }
            eprintln!("{v}");
            ExitCode::from(code)
        }
    }
}

/// Writes files into the output directory via rename so readers never see
/// half-written content, and remembers each file's digest for the manifest.
struct Output {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Output {
    fn new(dir: &Path) -> pmon_core::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> pmon_core::Result<()> {
        atomic_write(&self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> pmon_core::Result<()> {
        let mut s = serde_json::to_string_pretty(v).expect("json value");
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

struct Run {
    command: &'static str,
    config: RunConfig,
    mission: MissionConfig,
    out: Output,
    started: Instant,
    deterministic: bool,
    seeds: Vec<u64>,
}

impl Run {
    fn wall_clock(&self) -> f64 {
        if self.deterministic {
            0.0
        } else {
            self.started.elapsed().as_secs_f64()
        }
    }

    fn finish(self) -> pmon_core::Result<()> {
        let digest = hex::encode(Sha256::digest(self.config.canonical_json().as_bytes()));
        let files: Vec<Value> = self.out.files.iter().map(|(n, d)| json!({ "file": n, "sha256": d })).collect();
        let manifest = json!({
            "command": self.command,
            "config_sha256": digest,
            "seeds": self.seeds,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_clock_seconds": self.wall_clock(),
            "outputs": files,
        });
        let mut s = serde_json::to_string_pretty(&manifest).expect("json value");
        s.push('\n');
        atomic_write(&self.out.dir.join("manifest.json"), s.as_bytes())?;
        Ok(())
    }
}

fn run(cli: &Cli) -> pmon_core::Result<()> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let path = cli.common.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.common.seed {
        config.stochastic.master_seed = seed;
        config.descent.restart_seed = seed;
    }
    let command = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::IpaOptimize(_) => "ipa-optimize",
        Command::GraphSchedule(_) => "graph-schedule",
        Command::Compare { .. } => "compare",
        Command::GradientCheck { .. } => "gradient-check",
    };
    match &cli.command {
        Command::IpaOptimize(a) | Command::Compare { opt: a, .. } => apply_optimize_args(&mut config, a),
        _ => {}
    }
    match &cli.command {
        Command::GraphSchedule(a) | Command::Compare { sched: a, .. } => apply_schedule_args(&mut config, a),
        _ => {}
    }
    config.validate()?;
    let mission = config.mission()?;
    let seeds = if config.stochastic.is_random() { vec![config.stochastic.master_seed] } else { vec![] };
    let mut run = Run {
        command,
        mission,
        out: Output::new(&cli.common.out)?,
        config,
        started: Instant::now(),
        deterministic: cli.common.deterministic,
        seeds,
    };
    let outcome = match &cli.command {
        Command::Simulate { params } => cmd_simulate(&mut run, params.as_deref()),
        Command::IpaOptimize(a) => cmd_optimize(&mut run, a, "").map(|_| ()),
        Command::GraphSchedule(a) => cmd_schedule(&mut run, a, "").map(|_| ()),
        Command::Compare { opt, sched } => cmd_compare(&mut run, opt, sched),
        Command::GradientCheck { params, step } => cmd_gradient_check(&mut run, params.as_deref(), *step),
    };
    // The manifest is written even when a run ends in a constraint violation,
    // since its outputs are still on disk.
    let manifest = run.finish();
    outcome.and(manifest)
}

fn apply_optimize_args(c: &mut RunConfig, a: &OptimizeArgs) {
    if a.excitation {
        c.excitation.enabled = true;
    }
    if let Some(n) = a.iterations {
        c.descent.max_iterations = n;
    }
}

fn apply_schedule_args(c: &mut RunConfig, a: &ScheduleArgs) {
    if a.window.is_some() {
        c.schedule.window = a.window;
    }
    if a.max_steps.is_some() {
        c.schedule.max_steps = a.max_steps;
    }
    if let Some(j) = a.joint {
        c.schedule.joint = match j {
            Joint::Exhaustive => JointSearch::Exhaustive,
            Joint::Partitioned => JointSearch::Partitioned,
        };
    }
    if a.periodic {
        c.schedule.periodic = true;
    }
}

fn read_params(path: &Path, mission: &MissionConfig) -> pmon_core::Result<TrajectoryParams> {
    let text = fs::read_to_string(path)?;
    let p: TrajectoryParams = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    p.validate(mission)?;
    Ok(p)
}

fn params_or_config(run: &Run, path: Option<&Path>) -> pmon_core::Result<Option<TrajectoryParams>> {
    match path {
        Some(p) => read_params(p, &run.mission).map(Some),
        None => Ok(run.config.trajectory.clone()),
    }
}

fn write_trace(run: &mut Run, prefix: &str, trace: &SimTrace) -> pmon_core::Result<()> {
    let step = run.config.simulation.output_step(run.mission.horizon());
    let step = if step > 0.0 { step } else { 1.0 };
    run.out.write(&format!("{prefix}trace.csv"), trace.to_csv(step).as_bytes())?;
    run.out.json(&format!("{prefix}events.json"), &trace.events_json())
}

fn crossing_error(trace: &SimTrace, mission: &MissionConfig) -> pmon_core::Result<()> {
    if mission.no_cross() && !trace.diagnostics.crossings.is_empty() {
        return Err(Error::Constraint(format!(
            "agents cross {} time(s) under no_cross",
            trace.diagnostics.crossings.len()
        )));
    }
    Ok(())
}

fn trace_summary(trace: &SimTrace) -> Value {
    json!({
        "cost": trace.cost,
        "horizon": trace.horizon,
        "final_uncertainty": trace.final_uncertainty,
        "events": trace.events.len(),
        "sensing_events": trace.sensing_event_count(),
        "diagnostics": serde_json::to_value(&trace.diagnostics).unwrap_or(Value::Null),
    })
}

fn cmd_simulate(run: &mut Run, params: Option<&Path>) -> pmon_core::Result<()> {
    let p = params_or_config(run, params)?
        .ok_or_else(|| Error::Config("simulate needs --params or a trajectory section".into()))?;
    let program = compile_program(&p, &run.mission)?;
    let trace = simulate_with(&program, &run.mission, &UncertaintyRate::Deterministic, run.config.simulation.options());
    write_trace(run, "", &trace)?;
    run.out.json("summary.json", &trace_summary(&trace))?;
    println!("cost {}", fmt_g(trace.cost));
    crossing_error(&trace, &run.mission)
}

fn history_csv(rep: &DescentReport) -> String {
    let mut s = String::from("iteration,cost,j1,j2,grad_norm,step\n");
    for r in &rep.history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.iteration,
            fmt_g(r.cost),
            fmt_g(r.j1),
            fmt_g(r.j2),
            fmt_g(r.grad_norm),
            fmt_g(r.step)
        );
    }
    s
}

/// Gradient descent; outputs carry `prefix`. The final trace is always on
/// the nominal mission so random runs can be compared with the scheduler.
fn cmd_optimize(run: &mut Run, a: &OptimizeArgs, prefix: &str) -> pmon_core::Result<DescentReport> {
    let objective = run.config.objective()?;
    let init = match params_or_config(run, a.init.as_deref())? {
        Some(p) => p,
        None => {
            let gamma = run.config.descent.gamma.unwrap_or_else(|| default_gamma(&run.mission));
            default_init(&run.mission, gamma)
        }
    };
    let mut rep = optimize(&init, &objective, &run.config.descent)?;
    if run.deterministic {
        rep.wall_clock_seconds = 0.0;
    }
    run.seeds = rep.seeds.clone();
    let trace = match rep.final_trace.take() {
        Some(t) if !objective.random().is_random() => t,
        _ => simulate_params(&rep.final_params, &run.mission, &UncertaintyRate::Deterministic)?,
    };
    run.out.json(&format!("{prefix}report.json"), &serde_json::to_value(&rep).expect("report serializes"))?;
    run.out.json(&format!("{prefix}params.json"), &serde_json::to_value(&rep.final_params).expect("params serialize"))?;
    run.out.write(&format!("{prefix}history.csv"), history_csv(&rep).as_bytes())?;
    write_trace(run, prefix, &trace)?;
    println!("status {:?} iterations {} cost {}", rep.status, rep.iterations, fmt_g(rep.final_cost));
    crossing_error(&trace, &run.mission)?;
    rep.final_trace = Some(trace);
    Ok(rep)
}

fn cmd_schedule(run: &mut Run, a: &ScheduleArgs, prefix: &str) -> pmon_core::Result<(VisitSchedule, SimTrace)> {
    if a.export_mip {
        let horizon = run.config.schedule.window.map_or(run.mission.horizon(), |w| w.min(run.mission.horizon()));
        let steps = run
            .config
            .schedule
            .max_steps
            .unwrap_or_else(|| pmon_core::scheduler::default_max_steps(&run.mission, horizon));
        let lp = export_lp(&run.mission.with_horizon(horizon)?, steps);
        run.out.write("model.lp", lp.as_bytes())?;
    }
    let schedule = solve_extended(&run.mission, &run.config.schedule)?;
    let trace = simulate_params(&schedule.to_params(&run.mission), &run.mission, &UncertaintyRate::Deterministic)?;
    run.out.json(&format!("{prefix}schedule.json"), &schedule.to_json())?;
    write_trace(run, prefix, &trace)?;
    println!("schedule cost {}", fmt_g(schedule.cost));
    Ok((schedule, trace))
}

fn cmd_compare(run: &mut Run, opt: &OptimizeArgs, sched: &ScheduleArgs) -> pmon_core::Result<()> {
    let rep = cmd_optimize(run, opt, "ipa_")?;
    let (schedule, graph_trace) = cmd_schedule(run, sched, "graph_")?;
    let ipa_trace = rep.final_trace.as_ref().expect("trace kept");
    let ipa = ipa_trace.cost;
    let graph = schedule.cost;
    let gap = if graph != 0.0 { (ipa - graph).abs() / graph.abs() } else { (ipa - graph).abs() };
    let report = json!({
        "ipa_cost": ipa,
        "ipa_status": serde_json::to_value(rep.status).unwrap(),
        "graph_cost": graph,
        "relative_gap": gap,
    });
    run.out.json("compare.json", &report)?;
    let step = run.config.simulation.output_step(run.mission.horizon());
    let step = if step > 0.0 { step } else { 1.0 };
    let n = run.mission.num_agents();
    let mut csv = String::from("t");
    for j in 1..=n {
        let _ = write!(csv, ",ipa_s_{j}");
    }
    for j in 1..=n {
        let _ = write!(csv, ",graph_s_{j}");
    }
    csv.push_str(",ipa_cost_rate,graph_cost_rate\n");
    for (a, b) in ipa_trace.dense(step).iter().zip(graph_trace.dense(step).iter()) {
        csv.push_str(&fmt_g(a.t));
        for v in a.positions.iter().chain(&b.positions) {
            csv.push(',');
            csv.push_str(&fmt_g(*v));
        }
        let _ = writeln!(csv, ",{},{}", fmt_g(a.uncertainty.iter().sum()), fmt_g(b.uncertainty.iter().sum()));
    }
    run.out.write("compare.csv", csv.as_bytes())?;
    println!("ipa {} graph {} gap {:.4}", fmt_g(ipa), fmt_g(graph), gap);
    Ok(())
}

fn cmd_gradient_check(run: &mut Run, params: Option<&Path>, step: f64) -> pmon_core::Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config("--step must be positive".into()));
    }
    let objective = run.config.objective()?;
    let p = match params_or_config(run, params)? {
        Some(p) => p,
        None => {
            let gamma = run.config.descent.gamma.unwrap_or_else(|| default_gamma(&run.mission));
            default_init(&run.mission, gamma)
        }
    };
    let reals = objective.realizations(0)?;
    run.seeds = reals.iter().map(|r| r.seed).filter(|_| objective.random().is_random()).collect();
    let base = objective.evaluate(&p, &reals, 0, true)?;
    let grad = base.gradient.expect("gradient requested");
    let layout = p.layout();
    let v = p.to_vec();
    let mut csv = String::from("index,agent,kind,position,ipa,fd,abs_err,rel_err\n");
    let mut worst = 0.0f64;
    for (k, &g) in grad.iter().enumerate() {
        let j = (0..layout.offset.len()).rev().find(|&j| layout.offset[j] <= k).unwrap_or(0);
        let local = k - layout.offset[j];
        let (kind, l) = if local < layout.gamma[j] { ("theta", local) } else { ("omega", local - layout.gamma[j]) };
        let fd = central(&objective, &reals, &layout, &v, k, step);
        let (abs, rel) = match fd {
            Some(fd) => ((g - fd).abs(), (g - fd).abs() / fd.abs().max(1e-12)),
            None => (f64::NAN, f64::NAN),
        };
        if abs.is_finite() {
            worst = worst.max(abs.min(rel));
        }
        let _ = writeln!(
            csv,
            "{k},{},{kind},{},{},{},{},{}",
            j + 1,
            l + 1,
            fmt_g(g),
            fd.map_or("nan".into(), fmt_g),
            fmt_g(abs),
            fmt_g(rel)
        );
    }
    run.out.write("gradient_check.csv", csv.as_bytes())?;
    print!("{csv}");
    eprintln!("largest min(abs, rel) error {worst:.3e}");
    Ok(())
}

/// Central difference of the combined objective, or `None` when a
/// perturbation leaves the feasible set.
fn central(
    objective: &pmon_core::objective::Objective,
    reals: &[pmon_core::objective::Realization],
    layout: &pmon_core::sim::ParamLayout,
    v: &[f64],
    k: usize,
    h: f64,
) -> Option<f64> {
    let mut w = v.to_vec();
    w[k] = v[k] + h;
    let plus = objective.evaluate(&TrajectoryParams::from_vec(layout, &w), reals, 0, false).ok()?;
    w[k] = v[k] - h;
    let minus = objective.evaluate(&TrajectoryParams::from_vec(layout, &w), reals, 0, false).ok()?;
    Some((plus.combined - minus.combined) / (2.0 * h))
}
