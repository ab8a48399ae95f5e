//! Command-line experiment runner.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ActivitySpec, ExperimentConfig, InitialSpec, KernelSpec, Mode, NamedActivity};
use crate::error::{Error, Result};
use crate::grid::{Density, Grid};
use crate::io::{write_csv, write_density, Field};
use crate::model::RateModel;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "TEM_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "temlab", version, about = "Time-elapsed population model experiments")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output.dir`, then `$TEM_OUT`, then `temlab-out`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed point of the activity map and the stationary density.
    Steady,
    /// Autonomous or linear (prescribed input) run.
    Simulate,
    /// Run with delayed activity feedback.
    Delay(DelayArgs),
    /// Sample the activity map and classify its fixed point.
    Map,
    /// Distance between two autonomous solutions.
    Contract,
    /// Distributed birth ages.
    Distr,
    /// Two coupled populations.
    System,
    /// Particle Monte Carlo.
    Oracle(OracleArgs),
    /// Run several configs concurrently, each into `<out>/<config stem>`.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct DelayArgs {
    #[arg(long)]
    pub delay: Option<f64>,
    /// Number of delay intervals in the limit profile.
    #[arg(long)]
    pub intervals: Option<usize>,
    /// Initial activity: a number, or i_bar, i_minus, i_plus.
    #[arg(long = "i-ini", value_parser = parse_activity)]
    pub i_ini: Option<ActivitySpec>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub particles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Config files; with `--config` also given, that one runs too.
    pub configs: Vec<PathBuf>,
}

fn parse_activity(s: &str) -> std::result::Result<ActivitySpec, String> {
    match s {
        "i_bar" => Ok(ActivitySpec::Named(NamedActivity::IBar)),
        "i_minus" => Ok(ActivitySpec::Named(NamedActivity::IMinus)),
        "i_plus" => Ok(ActivitySpec::Named(NamedActivity::IPlus)),
        _ => s
            .parse::<f64>()
            .map(ActivitySpec::Value)
            .map_err(|_| format!("expected a number or one of i_bar, i_minus, i_plus, got `{s}`")),
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

/// Output files of one experiment, recorded for the manifest.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn csv<I: IntoIterator<Item = Vec<Field>>>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()> {
        let path = self.path(name);
        write_csv(&path, header, rows)
    }

    fn density(&mut self, name: &str, d: &Density) -> Result<()> {
        let path = self.path(name);
        write_density(&path, d)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    fn finish(mut self, command: &str, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let bytes = fs::read(self.dir.join(name))?;
            outputs.push(json!({ "file": name, "sha256": hex::encode(Sha256::digest(&bytes)) }));
        }
        let manifest = json!({
            "command": command,
            "mode": config.run.mode.name(),
            "seed": config.seed,
            "config_sha256": config.hash(),
            "outputs": outputs,
        });
        self.json("manifest.json", &manifest)?;
        Ok(self.files.iter().map(|f| self.dir.join(f)).collect())
    }
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    model: RateModel,
    grid: Grid,
}

impl<'a> Context<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let model = config.model.build()?;
        let grid = config.grid.build(&model)?;
        Ok(Context { config, model, grid })
    }

    fn t_end(&self) -> f64 {
        self.config.run.t_end.unwrap_or_else(|| {
            if self.model.r0() > 0.0 {
                20.0 / self.model.r0()
            } else {
                20.0
            }
        })
    }

    fn steady(&self) -> Result<crate::steadystate::SteadyState> {
        crate::steadystate::fixed_point_phi(&self.model, &self.grid)
    }

    fn initial(&self, spec: &InitialSpec) -> Result<Density> {
        let grid = self.grid;
        match spec {
            InitialSpec::StationaryAt { activity } => spec.build(grid, || {
                crate::steadystate::stationary_density(&self.model, &grid, *activity)
            }),
            _ => spec.build(grid, || Ok(self.steady()?.density)),
        }
    }

    fn activity(&self, spec: ActivitySpec, field: &str) -> Result<f64> {
        let named = match spec {
            ActivitySpec::Value(v) => return Ok(v),
            ActivitySpec::Named(n) => n,
        };
        let ss = self.steady()?;
        if named == NamedActivity::IBar {
            return Ok(ss.i_bar);
        }
        let (lo, hi) = crate::mapdyn::period2_points(&self.model, &self.grid, ss.i_bar)?
            .ok_or_else(|| Error::config(field, "the fixed point is stable, so there is no period-2 pair"))?;
        Ok(if named == NamedActivity::IMinus { lo } else { hi })
    }
}

fn trace_rows(trace: &[crate::solver::TraceRecord]) -> impl Iterator<Item = Vec<Field>> + '_ {
    trace
        .iter()
        .map(|r| vec![r.t.into(), r.activity.into(), r.mass.into(), r.dist_l1.into()])
}

const TRACE_HEADER: [&str; 4] = ["t", "I", "mass", "dist_L1"];

fn decay_of(trace: &[crate::solver::TraceRecord]) -> Option<f64> {
    let (t, d): (Vec<f64>, Vec<f64>) = trace.iter().filter_map(|r| r.dist_l1.map(|d| (r.t, d))).unzip();
    crate::diagnostics::decay_rate(&t, &d).ok()
}

fn run_steady(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    let ss = cx.steady()?;
    println!(
        "I_bar = {:.12}  residual = {:.3e}  tail bound = {:.3e}",
        ss.i_bar, ss.residual, ss.phi.tail_bound
    );
    out.density("density.csv", &ss.density)?;
    Ok(json!({
        "i_bar": ss.i_bar,
        "residual": ss.residual,
        "tail_bound": ss.phi.tail_bound,
        "phi_prime": crate::mapdyn::phi_prime(&cx.model, &cx.grid, ss.i_bar).ok(),
    }))
}

fn run_simulate(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    let run = &cx.config.run;
    let options = crate::solver::RunOptions::new(cx.t_end())
        .stride(run.stride)
        .renormalize(run.renormalize);
    let n0 = cx.initial(&cx.config.initial)?;
    let ss = if cx.model.is_inhibitory() { cx.steady().ok() } else { None };
    let reference = ss.as_ref().map(|s| &s.density);
    let (density, trace) = match run.mode {
        Mode::Linear => {
            let input = run.input.as_ref().ok_or_else(|| Error::config("run.input", "required for mode linear"))?;
            let base = match (input.base, &ss) {
                (Some(b), _) => b,
                (None, Some(s)) => s.i_bar,
                (None, None) => return Err(Error::config("run.input.base", "required when the model has no fixed point")),
            };
            let (amp, rate) = (input.amplitude, input.rate);
            let j = move |t: f64| base + amp * (-rate * t).exp();
            crate::solver::run_linear(&cx.model, n0, &j, &options, reference)?
        }
        _ => crate::solver::run_autonomous(&cx.model, n0, &options, reference)?,
    };
    out.csv("trace.csv", &TRACE_HEADER, trace_rows(&trace))?;
    out.density("final_density.csv", &density)?;
    let last = trace.last().expect("trace has a final record");
    let first = &trace[0];
    Ok(json!({
        "i_bar": ss.as_ref().map(|s| s.i_bar),
        "i_final": last.activity,
        "mass_drift": last.mass - first.mass,
        "dist_initial": first.dist_l1,
        "dist_final": last.dist_l1,
        "decay_rate": decay_of(&trace),
    }))
}

fn run_delay(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    let run = &cx.config.run;
    let delay = run.delay.ok_or_else(|| Error::config("run.delay", "required for mode delayed"))?;
    let intervals = run.intervals.unwrap_or(6);
    let i_ini = match run.i_ini {
        Some(spec) => cx.activity(spec, "run.i_ini")?,
        None => cx.steady()?.i_bar,
    };
    let n0 = cx.initial(&cx.config.initial)?;
    let profile = crate::delay::limit_profile(&cx.model, &cx.grid, i_ini, intervals)?;
    let t_end = run.t_end.unwrap_or(intervals as f64 * delay);
    let mut options = crate::delay::DelayOptions::new(t_end);
    options.stride = run.stride;
    options.profile = Some(&profile);
    let result = crate::delay::run_delayed(&cx.model, n0, i_ini, delay, &options)?;
    out.csv(
        "delay_trace.csv",
        &["tau", "I_d", "I_inf"],
        result
            .trace
            .iter()
            .map(|r| vec![r.tau.into(), r.activity.into(), r.profile_activity.into()]),
    )?;
    let covered = (t_end / result.delay).floor() as usize;
    let cesaro = crate::delay::cesaro_error(&result.trace, &profile, result.delay, intervals.min(covered).max(1)).ok();
    let alpha = 0.5 * cx.model.r0();
    let bound = crate::delay::iterate_error_bound(cx.model.gamma_bar(), cx.model.r_max(), cx.model.r0(), alpha, intervals)
        .ok()
        .map(|b| b.cesaro_bound(result.delay, alpha));
    Ok(json!({
        "delay": result.delay,
        "intervals": intervals,
        "i_ini": i_ini,
        "iterates": profile.iterates,
        "i_final": result.trace.last().map(|r| r.activity),
        "cesaro_error": cesaro,
        "cesaro_bound": bound,
        "weak_nonlinearity": crate::delay::weak_nl_check(&cx.model).ok(),
    }))
}

fn run_map(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    let analysis = crate::mapdyn::classify(&cx.model, &cx.grid)?;
    let samples = crate::mapdyn::sample_map(&cx.model, &cx.grid, cx.config.run.map_points.unwrap_or(201))?;
    out.csv(
        "map.csv",
        &["I", "phi", "psi"],
        samples.iter().map(|&(i, p, q)| vec![i.into(), p.into(), q.into()]),
    )?;
    let mut points = vec![("i_bar", analysis.i_bar)];
    if let Some((lo, hi)) = analysis.period2 {
        points.push(("i_minus", lo));
        points.push(("i_plus", hi));
    }
    let phi = |i: f64| crate::steadystate::phi(&cx.model, &cx.grid, i).map(|v| v.value);
    let mut rows = Vec::with_capacity(points.len());
    for &(name, i) in &points {
        let p = phi(i)?;
        rows.push(vec![Field::Text(name.to_string()), i.into(), p.into(), phi(p)?.into()]);
    }
    out.csv("psi_fixed_points.csv", &["point", "I", "phi", "psi"], rows)?;
    Ok(json!({
        "i_bar": analysis.i_bar,
        "phi_prime": analysis.phi_prime_at_fp,
        "classification": analysis.classification,
        "period2": analysis.period2,
        "weak_nonlinearity": crate::delay::weak_nl_check(&cx.model).ok(),
    }))
}

fn contraction_rows(r: &crate::diagnostics::ContractionReport) -> Vec<Vec<Field>> {
    (0..r.times.len())
        .map(|k| {
            vec![
                r.times[k].into(),
                r.distances[k].into(),
                r.g_values.get(k).copied().into(),
                r.defects.get(k).copied().into(),
            ]
        })
        .collect()
}

fn contraction_summary(r: &crate::diagnostics::ContractionReport) -> Value {
    json!({
        "dist_initial": r.distances.first(),
        "dist_final": r.distances.last(),
        "max_violation": r.max_violation,
        "violations": r.violations,
        "max_abs_defect": r.max_abs_defect(),
    })
}

const CONTRACT_HEADER: [&str; 4] = ["t", "dist", "G", "defect"];

fn second_initial<'c>(cx: &'c Context) -> &'c InitialSpec {
    cx.config.run.initial_b.as_ref().unwrap_or(&cx.config.initial)
}

fn run_contract(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    let a = cx.initial(&cx.config.initial)?;
    let b = cx.initial(second_initial(cx))?;
    let report = crate::diagnostics::contraction_test(&cx.model, a, b, cx.t_end())?;
    out.csv("contract.csv", &CONTRACT_HEADER, contraction_rows(&report))?;
    Ok(contraction_summary(&report))
}

fn kernel(cx: &Context) -> Result<crate::extensions::BirthKernel> {
    cx.config.run.kernel.as_ref().unwrap_or(&KernelSpec::Delta0).build(cx.grid)
}

fn run_distr(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    let run = &cx.config.run;
    let kernel = kernel(cx)?;
    let (i_stat, n_stat) = crate::extensions::distributed_stationary(&cx.model, &kernel)?;
    let n0 = match cx.config.initial {
        InitialSpec::Stationary => n_stat.clone(),
        ref spec => cx.initial(spec)?,
    };
    let options = crate::solver::RunOptions::new(cx.t_end())
        .stride(run.stride)
        .renormalize(run.renormalize);
    let (density, trace) = crate::extensions::run_distributed(&cx.model, &kernel, n0, &options, Some(&n_stat))?;
    out.csv("trace.csv", &TRACE_HEADER, trace_rows(&trace))?;
    out.density("final_density.csv", &density)?;
    out.density("stationary_density.csv", &n_stat)?;
    let last = trace.last().expect("trace has a final record");
    Ok(json!({
        "i_bar": i_stat,
        "i_final": last.activity,
        "mass_drift": last.mass - trace[0].mass,
        "dist_final": last.dist_l1,
        "decay_rate": decay_of(&trace),
    }))
}

fn run_system(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    use crate::extensions::{step_system, Population, SystemState};
    let kernel = kernel(cx)?;
    let population = |density| Population {
        model: cx.model.clone(),
        kernel: kernel.clone(),
        density,
    };
    let mut state = SystemState::new(
        population(cx.initial(&cx.config.initial)?),
        population(cx.initial(second_initial(cx))?),
    )?;
    let dt = cx.grid.dt();
    let steps = crate::solver::RunOptions::new(cx.t_end()).steps(dt)?;
    let stride = cx.config.run.stride;
    let mut rows = Vec::with_capacity(steps / stride + 2);
    let row = |state: &SystemState, t: f64| {
        let i = state.current_activities();
        let m = state.masses();
        vec![t.into(), i[0].into(), i[1].into(), m[0].into(), m[1].into()]
    };
    for k in 0..steps {
        if k % stride == 0 {
            rows.push(row(&state, k as f64 * dt));
        }
        step_system(&mut state);
    }
    rows.push(row(&state, steps as f64 * dt));
    out.csv("system_trace.csv", &["t", "I1", "I2", "mass1", "mass2"], rows)?;
    out.density("final_density_1.csv", &state.populations[0].density)?;
    out.density("final_density_2.csv", &state.populations[1].density)?;
    Ok(json!({
        "activities_final": state.current_activities(),
        "masses_final": state.masses(),
    }))
}

fn run_oracle(cx: &Context, out: &mut Artifacts) -> Result<Value> {
    use crate::oracle::{mc_run, McMode, McOptions};
    let run = &cx.config.run;
    let ss = cx.steady()?;
    let t_end = cx.t_end();
    let mode = match run.delay {
        Some(delay) => McMode::Delayed {
            delay,
            i_ini: match run.i_ini {
                Some(spec) => cx.activity(spec, "run.i_ini")?,
                None => ss.i_bar,
            },
        },
        None => McMode::Autonomous,
    };
    let options = McOptions {
        particles: run.particles.unwrap_or(10_000),
        dt: run.mc_dt.unwrap_or_else(|| (0.1 / cx.model.r_max().max(1e-12)).min(0.05)),
        t_end,
        seed: cx.config.seed,
        mode,
        burn_in: run.burn_in.unwrap_or(0.5 * t_end),
        stride: run.stride,
    };
    let initial = cx.initial(&cx.config.initial)?;
    let result = mc_run(&cx.model, &initial, &cx.grid, &options)?;
    out.csv(
        "oracle_trace.csv",
        &["t", "I", "fired_fraction"],
        result
            .trace
            .iter()
            .map(|r| vec![r.t.into(), r.activity.into(), r.fired_fraction.into()]),
    )?;
    out.csv(
        "histogram.csv",
        &["x", "density_mc", "density_pde"],
        result
            .mean_histogram
            .samples()
            .zip(ss.density.values())
            .map(|((x, mc), &pde)| vec![x.into(), mc.into(), pde.into()]),
    )?;
    let stats = result.activity_stats(options.burn_in, 20).ok();
    Ok(json!({
        "particles": options.particles,
        "dt": options.dt,
        "i_bar": ss.i_bar,
        "activity_mean": stats.map(|s| s.0),
        "activity_se": stats.map(|s| s.1),
        "histogram_l1": result.mean_histogram.l1_distance(&ss.density)?,
    }))
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Steady => "steady",
        Command::Simulate => "simulate",
        Command::Delay(_) => "delay",
        Command::Map => "map",
        Command::Contract => "contract",
        Command::Distr => "distr",
        Command::System => "system",
        Command::Oracle(_) => "oracle",
        Command::Sweep(_) => "sweep",
    }
}

fn accepts(command: &str, mode: Mode) -> bool {
    matches!(
        (command, mode),
        ("steady", Mode::Steady)
            | ("simulate", Mode::Autonomous | Mode::Linear)
            | ("delay", Mode::Delayed)
            | ("map", Mode::Map)
            | ("contract", Mode::Contract)
            | ("distr", Mode::Distr)
            | ("system", Mode::System)
            | ("oracle", Mode::Oracle)
    )
}

fn default_command(mode: Mode) -> &'static str {
    match mode {
        Mode::Steady => "steady",
        Mode::Autonomous | Mode::Linear => "simulate",
        Mode::Delayed => "delay",
        Mode::Map => "map",
        Mode::Contract => "contract",
        Mode::Distr => "distr",
        Mode::System => "system",
        Mode::Oracle => "oracle",
    }
}

/// Runs one validated config into `out_dir` and returns the written files.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let command = default_command(config.run.mode);
    let cx = Context::new(config)?;
    let mut out = Artifacts::new(out_dir)?;
    info!("{command}: mode {} into {}", config.run.mode.name(), out_dir.display());
    let mut summary = match config.run.mode {
        Mode::Steady => run_steady(&cx, &mut out)?,
        Mode::Autonomous | Mode::Linear => run_simulate(&cx, &mut out)?,
        Mode::Delayed => run_delay(&cx, &mut out)?,
        Mode::Map => run_map(&cx, &mut out)?,
        Mode::Contract => run_contract(&cx, &mut out)?,
        Mode::Distr => run_distr(&cx, &mut out)?,
        Mode::System => run_system(&cx, &mut out)?,
        Mode::Oracle => run_oracle(&cx, &mut out)?,
    };
    if let Value::Object(map) = &mut summary {
        map.insert("mode".into(), json!(config.run.mode.name()));
        map.insert("model".into(), json!(cx.model.kind().name()));
        map.insert("dx".into(), json!(cx.grid.dx()));
        map.insert("x_max".into(), json!(cx.grid.x_max()));
    }
    out.json("summary.json", &summary)?;
    out.finish(command, config)
}

fn output_dir(cli_out: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = cli_out {
        return dir.to_path_buf();
    }
    if let Some(dir) = &config.output.dir {
        return dir.clone();
    }
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("temlab-out"))
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn apply_overrides(command: &Command, config: &mut ExperimentConfig) {
    match command {
        Command::Delay(args) => {
            if args.delay.is_some() {
                config.run.delay = args.delay;
            }
            if args.intervals.is_some() {
                config.run.intervals = args.intervals;
            }
            if args.i_ini.is_some() {
                config.run.i_ini = args.i_ini;
            }
        }
        Command::Oracle(args) => {
            if args.particles.is_some() {
                config.run.particles = args.particles;
            }
        }
        _ => {}
    }
}

fn run_single(cli: &Cli) -> Result<Vec<PathBuf>> {
    let name = command_name(&cli.command);
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::config("--config", format!("required for `{name}`")))?;
    let mut config = load(path, cli.seed)?;
    if !accepts(name, config.run.mode) {
        return Err(Error::config(
            "run.mode",
            format!("`{}` cannot run with subcommand `{name}`", config.run.mode.name()),
        ));
    }
    apply_overrides(&cli.command, &mut config);
    run_experiment(&config, &output_dir(cli.out.as_deref(), &config))
}

fn run_sweep(cli: &Cli, args: &SweepArgs) -> i32 {
    let mut paths: Vec<PathBuf> = cli.config.iter().cloned().collect();
    paths.extend(args.configs.iter().cloned());
    if paths.is_empty() {
        eprintln!("error: sweep needs at least one config");
        return EXIT_VALIDATION;
    }
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("temlab-out"));
    let codes: Vec<(PathBuf, i32)> = paths
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let outcome = load(path, cli.seed).and_then(|config| run_experiment(&config, &root.join(&stem)));
            let code = match outcome {
                Ok(_) => EXIT_OK,
                Err(e) => {
                    eprintln!("{}: {e}", path.display());
                    exit_code(&e)
                }
            };
            (path.clone(), code)
        })
        .collect();
    for (path, code) in &codes {
        println!("{}\t{}", path.display(), if *code == EXIT_OK { "ok" } else { "failed" });
    }
    codes.iter().map(|&(_, c)| c).max().unwrap_or(EXIT_OK)
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Command::Sweep(args) = &cli.command {
        return run_sweep(cli, args);
    }
    match run_single(cli) {
        Ok(files) => {
            for f in &files {
                println!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if !e.is_validation() {
                warn!("numerical failure in `{}`", command_name(&cli.command));
            }
            exit_code(&e)
        }
    }
}
