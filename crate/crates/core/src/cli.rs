//! Command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::caseio::{load_irradiance_csv, parse_case, CaseData, CaseFormat};
use crate::engine::{plateau_total_demand, Distributed, Scenario, SimTrace, Simulation, SimulationConfig};
use crate::graph::WeightScheme;
use crate::oracle::{reference_admm, solve_centralized_ed, DispatchSolution};
use crate::scalar::Real;
use crate::trace::{snapshots_json, write_trace_csv, MessageLog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Matpower,
    Native,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Metropolis,
    MeanMetropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Fully distributed agents exchanging neighbor messages.
    Distributed,
    /// Centralized ADMM with an exact mismatch coordinator.
    ReferenceAdmm,
    /// Centralized equal-incremental-cost dispatch for the first plateau.
    Oracle,
    /// Parse and validate the case, then exit.
    ValidateCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

/// Distributed dynamic economic dispatch simulator.
#[derive(Debug, Clone, Parser)]
#[command(name = "dyndispatch", version, about)]
pub struct CliConfig {
    /// Case file (MATPOWER `.m` or native `.json`).
    #[arg(long)]
    pub case: PathBuf,
    /// Case format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "distributed")]
    pub mode: Mode,
    /// Consensus weight scheme.
    #[arg(long, value_enum, default_value = "mean-metropolis")]
    pub weights: WeightsArg,
    /// Scaled penalty N²ρ on the MW scale.
    #[arg(long, default_value_t = 0.063546)]
    pub n2_rho: f64,
    /// Mean-Metropolis smoothing ε.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Number of rounds.
    #[arg(long, default_value_t = 100_000)]
    pub iters: usize,
    /// Rounds between demand updates.
    #[arg(long, default_value_t = 20_000)]
    pub demand_step: usize,
    /// Irradiance CSV (`time_s,irradiance`); sample j drives plateau j.
    #[arg(long)]
    pub irradiance: Option<PathBuf>,
    /// PV capacity as a fraction of each bus's nominal load.
    #[arg(long, default_value_t = 1.0)]
    pub pv_factor: f64,
    /// Price spread tolerance in $/p.u.h.
    #[arg(long, default_value_t = 0.1)]
    pub tol_lambda: f64,
    /// Mismatch estimate tolerance in p.u.
    #[arg(long, default_value_t = 1e-3)]
    pub tol_mismatch: f64,
    /// Consecutive rounds within tolerance that count as converged.
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    /// Seed for the initial price draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path: trace CSV for simulations, JSON for oracle mode.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare the final state with the centralized oracle and print the gap.
    #[arg(long)]
    pub oracle_check: bool,
    /// Stop once converged and no demand steps remain.
    #[arg(long)]
    pub early_stop: bool,
    /// Exit with status 1 if the run ends unconverged.
    #[arg(long)]
    pub require_convergence: bool,
    /// Record per-agent snapshots every this many rounds.
    #[arg(long)]
    pub snapshot_interval: Option<usize>,
    /// Snapshot JSON path (requires --snapshot-interval).
    #[arg(long, requires = "snapshot_interval")]
    pub snapshots_out: Option<PathBuf>,
    /// Log every published message to this CSV (distributed mode).
    #[arg(long)]
    pub messages_out: Option<PathBuf>,
    /// Record elapsed wall time in the trace (makes output nondeterministic).
    #[arg(long)]
    pub wall_time: bool,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: Precision,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    NotConverged,
}

impl<E: std::fmt::Display> From<E> for CliError
where
    E: std::error::Error,
{
    fn from(e: E) -> Self {
        Self::Input(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn input<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(msg.into()))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).or_else(|e| input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .or_else(|e| input(format!("{}: {e}", path.display())))
}

impl CliConfig {
    pub fn simulation_config(&self, pv_levels: Vec<f64>) -> SimulationConfig {
        SimulationConfig {
            n2_rho: self.n2_rho,
            max_iter: self.iters,
            demand_step_interval: self.demand_step,
            epsilon: self.epsilon,
            weight_scheme: match self.weights {
                WeightsArg::Metropolis => WeightScheme::Metropolis,
                WeightsArg::MeanMetropolis => WeightScheme::MeanMetropolis,
            },
            tol_lambda: self.tol_lambda,
            tol_mismatch: self.tol_mismatch,
            convergence_window: self.window,
            rng_seed: self.seed,
            pv_capacity_factor: self.pv_factor,
            pv_levels,
            early_stop: self.early_stop,
            record_wall_time: self.wall_time,
            snapshot_interval: self.snapshot_interval,
        }
    }

    fn load_case(&self) -> CliResult<CaseData> {
        let text = read(&self.case)?;
        let format = match self.format {
            Some(FormatArg::Matpower) => CaseFormat::Matpower,
            Some(FormatArg::Native) => CaseFormat::Native,
            None => CaseFormat::from_path(&self.case),
        };
        parse_case(&text, format).or_else(|e| input(format!("{}: {e}", self.case.display())))
    }

    fn load_levels(&self) -> CliResult<Vec<f64>> {
        match &self.irradiance {
            None => Ok(Vec::new()),
            Some(path) => load_irradiance_csv(&read(path)?)
                .map(|p| p.values)
                .or_else(|e| input(format!("{}: {e}", path.display()))),
        }
    }
}

fn oracle_for(case: &CaseData, cfg: &SimulationConfig, plateau: usize) -> CliResult<DispatchSolution<f64>> {
    let gens: Vec<_> = case.generators.iter().map(|g| g.params()).collect();
    Ok(solve_centralized_ed(&gens, plateau_total_demand(case, cfg, plateau))?)
}

/// `max(max_i |p_i − p*_i|, max_i |λ_i − λ*|)` over the final state.
pub fn oracle_gap(trace: &SimTrace, oracle: &DispatchSolution<f64>) -> f64 {
    let p = trace.generator_outputs(&trace.final_agents);
    let power = p
        .iter()
        .zip(&oracle.dispatch)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let price = trace
        .final_agents
        .iter()
        .map(|a| (a.lambda - oracle.lambda).abs())
        .fold(0.0, f64::max);
    power.max(price)
}

fn simulate<T: Real>(cfg: &CliConfig, case: &CaseData, sim_cfg: &SimulationConfig) -> CliResult<SimTrace> {
    let trace = match cfg.mode {
        Mode::ReferenceAdmm => reference_admm::<T>(case, sim_cfg)?,
        _ => {
            let scenario = Scenario::<T>::build(case, sim_cfg)?;
            let dynamics = Distributed::cold_start(&scenario)?;
            let sim = Simulation::new(scenario, dynamics);
            match &cfg.messages_out {
                None => sim.run()?,
                Some(path) => {
                    let mut log = MessageLog::new(create(path)?)?;
                    let mut failure = None;
                    let trace = sim.run_with(|s| {
                        if failure.is_none() {
                            if let Err(e) = log.write_round(s.iteration(), s.dynamics().messages()) {
                                failure = Some(e);
                            }
                        }
                    })?;
                    if let Some(e) = failure {
                        return Err(e.into());
                    }
                    log.finish()?.flush()?;
                    trace
                }
            }
        }
    };
    Ok(trace)
}

fn run_simulation_mode<T: Real, W: Write>(cfg: &CliConfig, case: &CaseData, out: &mut W) -> CliResult<()> {
    let sim_cfg = cfg.simulation_config(cfg.load_levels()?);
    let trace = simulate::<T>(cfg, case, &sim_cfg)?;
    if let Some(path) = &cfg.out {
        let mut f = create(path)?;
        write_trace_csv(&trace, &mut f)?;
        f.flush()?;
    }
    if let Some(path) = &cfg.snapshots_out {
        let mut f = create(path)?;
        f.write_all(snapshots_json(&trace.snapshots).as_bytes())?;
        f.flush()?;
    }
    let lambda = trace.final_lambda_mean();
    if cfg.oracle_check {
        let last = trace.plateaus.last().map_or(0, |p| p.index);
        let oracle = oracle_for(case, &sim_cfg, last)?;
        writeln!(
            out,
            "converged={} iters={} lambda={} oracle_gap={}",
            trace.converged,
            trace.iterations,
            lambda,
            oracle_gap(&trace, &oracle)
        )?;
    } else {
        writeln!(out, "converged={} iters={} lambda={}", trace.converged, trace.iterations, lambda)?;
    }
    if cfg.require_convergence && !trace.converged {
        return Err(CliError::NotConverged);
    }
    Ok(())
}

fn run_oracle_mode<W: Write>(cfg: &CliConfig, case: &CaseData, out: &mut W) -> CliResult<()> {
    let sim_cfg = cfg.simulation_config(cfg.load_levels()?);
    sim_cfg.validate()?;
    let demand = plateau_total_demand(case, &sim_cfg, 0);
    let gens: Vec<_> = case.generators.iter().map(|g| g.params()).collect();
    let sol = solve_centralized_ed(&gens, demand)?;
    writeln!(out, "lambda={} total_cost={} total_demand={}", sol.lambda, sol.total_cost, demand)?;
    for (g, p) in case.generators.iter().zip(&sol.dispatch) {
        writeln!(out, "bus={} p={}", g.bus, p)?;
    }
    if let Some(path) = &cfg.out {
        let json = serde_json::json!({
            "lambda": sol.lambda,
            "total_cost": sol.total_cost,
            "total_demand": demand,
            "dispatch": case.generators.iter().zip(&sol.dispatch)
                .map(|(g, p)| serde_json::json!({"bus": g.bus, "p": p}))
                .collect::<Vec<_>>(),
        });
        let mut f = create(path)?;
        f.write_all(serde_json::to_string_pretty(&json)?.as_bytes())?;
        f.flush()?;
    }
    Ok(())
}

fn execute<W: Write>(cfg: &CliConfig, out: &mut W) -> CliResult<()> {
    let case = cfg.load_case()?;
    match cfg.mode {
        Mode::ValidateCase => {
            writeln!(
                out,
                "valid case={} buses={} generators={} branches={} base_mva={}",
                case.name,
                case.buses.len(),
                case.generators.len(),
                case.branches.len(),
                case.base_mva
            )?;
            Ok(())
        }
        Mode::Oracle => run_oracle_mode(cfg, &case, out),
        Mode::Distributed | Mode::ReferenceAdmm => match cfg.precision {
            Precision::F64 => run_simulation_mode::<f64, W>(cfg, &case, out),
            Precision::F32 => run_simulation_mode::<f32, W>(cfg, &case, out),
        },
    }
}

/// Parses `args` (including the program name) and runs. Returns the exit
/// code.
pub fn run<I, T, W, E>(args: I, out: &mut W, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
    E: Write,
{
    let cfg = match CliConfig::try_parse_from(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cfg, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::NotConverged) => {
            let _ = writeln!(err, "error: run did not converge");
            EXIT_NOT_CONVERGED
        }
        Err(CliError::Input(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INPUT
        }
    }
}
