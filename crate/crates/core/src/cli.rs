//! Command-line front end. [`run`] parses arguments and returns the process
//! exit status: 0 success, 1 configuration error, 2 infeasible, 3 failed
//! assumption.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::Value;

use crate::antiwindup_plant::{assemble_unchecked, build_sector_model, AwSynthesisPlant};
use crate::antiwindup_synth::{check_assumptions, sweep_tau, AwCompensator, Certificate, FilterRoute};
use crate::artifacts;
use crate::config::{self, ChannelScaling, ResolvedConfig, TauGrid};
use crate::error::Error;
use crate::minimax_lqr::{optimize_taus, solve_minimax_lqr_with, InitialCondition, MinimaxLqrSolution, TauVector};
use crate::simulate::{simulate, tracking_metrics, Mode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;

/// Caps the parallelism of multiplier sweeps.
pub const THREADS_ENV: &str = "AWSYNTH_THREADS";

pub const LQR_FILE: &str = "lqr_solution.json";
pub const COMPENSATOR_FILE: &str = "aw_compensator.json";
pub const SWEEP_FILE: &str = "tau_sweep.csv";
pub const ASSUMPTIONS_FILE: &str = "assumptions.txt";
pub const METRICS_FILE: &str = "metrics.json";

pub fn trace_file(mode: Mode) -> String {
    format!("trace_{}.csv", mode.name())
}

#[derive(Debug, Parser)]
#[command(name = "awsynth", version, about = "Minimax LQR / minimax LQG antiwindup synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stage 1: robust state feedback ignoring saturation.
    SynthLqr(RunArgs),
    /// Stage 2: antiwindup compensator for the stage-1 loop.
    SynthAw(RunArgs),
    /// Closed-loop simulation from previously written artifacts.
    Simulate(RunArgs),
    /// Stage 2 over an explicit multiplier grid.
    SweepTau {
        #[command(flatten)]
        run: RunArgs,
        /// `min:max:points`, logarithmically spaced.
        #[arg(long)]
        grid: String,
    },
    /// Print a ready-made configuration.
    Example {
        #[arg(value_enum)]
        name: ExampleName,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(short = 'c', long = "config")]
    pub config: PathBuf,
    /// Output directory; falls back to `output_dir` in the config, then `.`.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExampleName {
    Ahfv,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::config(format!("i/o error: {e}"))
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoFeasibleTau { .. }
        | Error::NoStabilizingSolution(_)
        | Error::IllConditioned { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::RiccatiInfeasible { .. }
        | Error::SpectralRadiusViolation { .. }
        | Error::Numerical(_) => EXIT_INFEASIBLE,
        Error::NotStabilizing { .. } => EXIT_ASSUMPTION,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(stderr, "{text}") } else { write!(stdout, "{text}") };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::SynthLqr(a) => {
            let (cfg, out) = prepare(&a)?;
            cmd_synth_lqr(&cfg, &out, stderr)
        }
        Command::SynthAw(a) => {
            let (cfg, out) = prepare(&a)?;
            let grid = cfg.raw.stage2.tau_grid.clone();
            cmd_synth_aw(&cfg, &grid, &out, stderr)
        }
        Command::SweepTau { run, grid } => {
            let grid = TauGrid::parse(&grid).map_err(Failure::config)?;
            config::check_grid(&grid).map_err(Failure::config)?;
            let (cfg, out) = prepare(&run)?;
            cmd_synth_aw(&cfg, &grid, &out, stderr)
        }
        Command::Simulate(a) => {
            let (cfg, out) = prepare(&a)?;
            cmd_simulate(&cfg, &out, stderr)
        }
        Command::Example { name: ExampleName::Ahfv } => {
            let text = serde_json::to_string_pretty(&config::ahfv_example_config()).map_err(|e| Failure::config(e.to_string()))?;
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn prepare(a: &RunArgs) -> Result<(ResolvedConfig, PathBuf), Failure> {
    let cfg = config::load_config(&a.config).map_err(|e| Failure::config(format!("{}: {e}", a.config.display())))?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.raw.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

/// Thread cap from [`THREADS_ENV`]; `None` lets the pool decide.
pub fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
    }
}

/// Stage-1 solution as configured: fixed multipliers, or the searched optimum.
pub fn stage_one(cfg: &ResolvedConfig) -> Result<MinimaxLqrSolution, Error> {
    let s1 = &cfg.raw.stage1;
    let x0 = match &s1.x0 {
        Some(v) => InitialCondition::Known(nalgebra::DVector::from_vec(v.clone())),
        None => InitialCondition::Random,
    };
    match &s1.taus {
        Some(t) => solve_minimax_lqr_with(&cfg.plant, &cfg.stage1_weights, &TauVector::new(t.clone())?, &x0),
        None if cfg.plant.num_channels() == 0 => solve_minimax_lqr_with(&cfg.plant, &cfg.stage1_weights, &TauVector::empty(), &x0),
        None => Ok(optimize_taus(&cfg.plant, &cfg.stage1_weights, &x0, &s1.search.to_search_config())?.best),
    }
}

/// Augmented stage-2 plant, without the Hurwitz check on `Ā` (the
/// assumption report covers it).
pub fn stage_two_plant(cfg: &ResolvedConfig, s1: &MinimaxLqrSolution) -> Result<AwSynthesisPlant, Error> {
    let sector = build_sector_model(&cfg.plant.b, &cfg.saturation)?;
    let plant = match cfg.raw.stage2.channel_scaling {
        ChannelScaling::StageOne => {
            let scales: Vec<f64> = s1.taus.as_slice().iter().map(|t| t.sqrt()).collect();
            cfg.plant.rescaled_channels(&scales)?
        }
        ChannelScaling::None => cfg.plant.clone(),
    };
    let gain = match &cfg.raw.stage1.gain_override {
        Some(g) => config::to_dmatrix(g, "gain_override")?,
        None => s1.gain.clone(),
    };
    assemble_unchecked(&plant, &sector, &gain)
}

fn note(stderr: &mut dyn Write, path: &Path) {
    let _ = writeln!(stderr, "wrote {}", path.display());
}

pub fn cmd_synth_lqr(cfg: &ResolvedConfig, out: &Path, stderr: &mut dyn Write) -> Result<(), Failure> {
    let sol = stage_one(cfg)?;
    let path = out.join(LQR_FILE);
    artifacts::write_json(&path, &artifacts::lqr_solution_json(&sol))?;
    note(stderr, &path);
    Ok(())
}

pub fn cmd_synth_aw(cfg: &ResolvedConfig, grid: &TauGrid, out: &Path, stderr: &mut dyn Write) -> Result<(), Failure> {
    let threads = thread_cap()?;
    let s1 = stage_one(cfg)?;
    let aw = stage_two_plant(cfg, &s1)?;
    let taus = grid.values();
    let assumptions_path = out.join(ASSUMPTIONS_FILE);

    let pre = check_assumptions(&aw, &cfg.stage2_weights, taus[0])?;
    let hard = pre.hard_failures();
    if !hard.is_empty() {
        artifacts::write_atomic(&assumptions_path, pre.render().as_bytes())?;
        note(stderr, &assumptions_path);
        return Err(Failure { code: EXIT_ASSUMPTION, message: format!("assumption items {hard:?} fail") });
    }

    let result = match sweep_tau(&aw, &cfg.stage2_weights, &taus, threads) {
        Ok(r) => r,
        Err(e) => {
            artifacts::write_atomic(&assumptions_path, pre.render().as_bytes())?;
            note(stderr, &assumptions_path);
            return Err(e.into());
        }
    };
    let sweep_path = out.join(SWEEP_FILE);
    artifacts::write_atomic(&sweep_path, artifacts::tau_sweep_csv(&result.points).as_bytes())?;
    note(stderr, &sweep_path);

    let report = check_assumptions(&aw, &cfg.stage2_weights, result.best.certificate.tau)?;
    artifacts::write_atomic(&assumptions_path, report.render().as_bytes())?;
    note(stderr, &assumptions_path);

    let comp_path = out.join(COMPENSATOR_FILE);
    artifacts::write_json(&comp_path, &artifacts::compensator_json(&result.best))?;
    note(stderr, &comp_path);
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("missing artifact {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

pub fn read_compensator(v: &Value) -> Result<AwCompensator, String> {
    let cert = &v["certificate"];
    let scalar = |key: &str| cert[key].as_f64().ok_or_else(|| format!("certificate.{key} missing"));
    Ok(AwCompensator {
        a_aw: artifacts::read_matrix(&v["a_aw"], "a_aw")?,
        b_aw: artifacts::read_matrix(&v["b_aw"], "b_aw")?,
        c_aw: artifacts::read_matrix(&v["c_aw"], "c_aw")?,
        certificate: Certificate {
            y_inf: artifacts::read_matrix(&cert["y_inf"], "y_inf")?,
            x_inf: artifacts::read_matrix(&cert["x_inf"], "x_inf")?,
            tau: scalar("tau")?,
            rho_yx: scalar("rho_yx")?,
            w_tau: scalar("w_tau")?,
            filter_residual: scalar("filter_residual")?,
            filter_bound: scalar("filter_bound")?,
            control_residual: scalar("control_residual")?,
            control_bound: scalar("control_bound")?,
            filter_route: match cert["filter_route"].as_str() {
                Some("inverse_dual") => FilterRoute::InverseDual,
                _ => FilterRoute::Stabilizing,
            },
        },
    })
}

pub fn cmd_simulate(cfg: &ResolvedConfig, out: &Path, stderr: &mut dyn Write) -> Result<(), Failure> {
    let sim = &cfg.raw.simulation;
    let lqr = read_json(&out.join(LQR_FILE))?;
    let gain = artifacts::read_matrix(&lqr["gain"], "gain").map_err(Failure::config)?;
    let comp = if sim.modes.contains(&Mode::SaturatedAw) {
        let v = read_json(&out.join(COMPENSATOR_FILE))?;
        Some(read_compensator(&v).map_err(Failure::config)?)
    } else {
        None
    };
    let runs: Vec<_> = sim
        .modes
        .par_iter()
        .map(|&mode| simulate(&cfg.plant, &gain, comp.as_ref(), &cfg.saturation, &sim.for_mode(mode)).map(|t| (mode, t)))
        .collect::<Result<_, _>>()?;
    let mut metrics = Vec::with_capacity(runs.len());
    for (mode, trace) in &runs {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, sim.trace_stride)?;
        let path = out.join(trace_file(*mode));
        artifacts::write_atomic(&path, &buf)?;
        note(stderr, &path);
        metrics.push((*mode, tracking_metrics(trace)?));
    }
    let path = out.join(METRICS_FILE);
    artifacts::write_json(&path, &artifacts::metrics_json(&metrics))?;
    note(stderr, &path);
    Ok(())
}
