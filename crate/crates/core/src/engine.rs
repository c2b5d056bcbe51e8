//! Bulk-synchronous simulation driver.
//!
//! A [`Scenario`] fixes everything derived from the case and configuration:
//! the communication graph, mixing weights, penalty, per-agent generators and
//! the demand schedule. A [`Simulation`] advances a [`Dynamics`] through
//! rounds `k = 1..=max_iter`; round `k` sees the demand of plateau
//! `⌊(k − 1) / demand_step_interval⌋`. Metrics are recorded for the initial
//! state (iteration 0) and after every round.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{agent_round, AgentError, AgentState, GeneratorParams, IndexedInbox, NeighborMessage};
use crate::caseio::{BusId, CaseData, CaseError};
use crate::graph::{
    build_weights, discover_size, validate_consensus_matrix, CommGraph, ConsensusMatrixReport, GraphError,
    WeightMatrix, WeightScheme,
};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error(
        "demand step {step} (from iteration {iteration}): total demand {total_demand} outside [{min_supply}, {max_supply}]"
    )]
    InfeasibleCase {
        step: usize,
        iteration: usize,
        total_demand: f64,
        min_supply: f64,
        max_supply: f64,
    },
    #[error("communication graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("graph error: {0}")]
    Graph(GraphError),
    #[error("case error: {0}")]
    Case(#[from] CaseError),
    #[error("mixing weights do not reach consensus: {0:?}")]
    NonMixingWeights(ConsensusMatrixReport),
    #[error("agent error: {0}")]
    Agent(#[from] AgentError),
    #[error("bus {bus} has negative nominal load {load}")]
    NegativeNominalLoad { bus: BusId, load: f64 },
    #[error("irradiance {value} is outside [0, 1]")]
    IrradianceOutOfRange { value: f64 },
    #[error("node {node} does not exist")]
    UnknownNode { node: usize },
}

impl From<GraphError> for EngineError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::DisconnectedGraph { components } => Self::DisconnectedGraph { components },
            other => Self::Graph(other),
        }
    }
}

/// Simulation parameters. Powers are per-unit; `n2_rho` is the product
/// `N² ρ` expressed on the MW scale, so the penalty used internally is
/// `n2_rho · base_mva² / N²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n2_rho: f64,
    pub max_iter: usize,
    pub demand_step_interval: usize,
    pub epsilon: f64,
    pub weight_scheme: WeightScheme,
    /// Price spread tolerance, $/p.u.h.
    pub tol_lambda: f64,
    /// Mismatch estimate tolerance, p.u.
    pub tol_mismatch: f64,
    pub convergence_window: usize,
    pub rng_seed: u64,
    pub pv_capacity_factor: f64,
    /// Normalized irradiance per demand plateau; the last value is held.
    /// Empty means no PV.
    pub pv_levels: Vec<f64>,
    pub early_stop: bool,
    pub record_wall_time: bool,
    pub snapshot_interval: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n2_rho: 0.063546,
            max_iter: 100_000,
            demand_step_interval: 20_000,
            epsilon: 1.0,
            weight_scheme: WeightScheme::MeanMetropolis,
            tol_lambda: 0.1,
            tol_mismatch: 1e-3,
            convergence_window: 50,
            rng_seed: 0,
            pv_capacity_factor: 1.0,
            pv_levels: Vec::new(),
            early_stop: false,
            record_wall_time: false,
            snapshot_interval: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |reason: String| Err(EngineError::InvalidConfig { reason });
        if !(self.n2_rho.is_finite() && self.n2_rho > 0.0) {
            return bad(format!("n2_rho must be positive, got {}", self.n2_rho));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if self.demand_step_interval == 0 {
            return bad("demand_step_interval must be at least 1".into());
        }
        if !(self.tol_lambda > 0.0 && self.tol_mismatch > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.convergence_window == 0 {
            return bad("convergence_window must be at least 1".into());
        }
        if !(self.pv_capacity_factor.is_finite() && self.pv_capacity_factor >= 0.0) {
            return bad(format!("pv_capacity_factor must be non-negative, got {}", self.pv_capacity_factor));
        }
        if self.weight_scheme == WeightScheme::MeanMetropolis && !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.snapshot_interval == Some(0) {
            return bad("snapshot_interval must be at least 1".into());
        }
        if let Some(&v) = self.pv_levels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(EngineError::IrradianceOutOfRange { value: v });
        }
        Ok(())
    }

    /// Number of demand plateaus rounds `1..=max_iter` pass through.
    pub fn plateau_count(&self) -> usize {
        self.max_iter.div_ceil(self.demand_step_interval)
    }

    pub fn irradiance_at(&self, plateau: usize) -> f64 {
        match self.pv_levels.len() {
            0 => 0.0,
            n => self.pv_levels[plateau.min(n - 1)],
        }
    }
}

/// Net demand `P̃_d − Îr · factor · P̃_d` at one node.
pub fn apply_demand_step(
    case: &CaseData,
    irradiance: f64,
    pv_capacity_factor: f64,
    node: usize,
) -> Result<f64, EngineError> {
    if !(0.0..=1.0).contains(&irradiance) {
        return Err(EngineError::IrradianceOutOfRange { value: irradiance });
    }
    let bus = case.buses.get(node).ok_or(EngineError::UnknownNode { node })?;
    if bus.load < 0.0 {
        return Err(EngineError::NegativeNominalLoad {
            bus: bus.id,
            load: bus.load,
        });
    }
    Ok(net_demand(bus.load, irradiance, pv_capacity_factor))
}

/// Total net demand of `plateau`.
pub fn plateau_total_demand(case: &CaseData, cfg: &SimulationConfig, plateau: usize) -> f64 {
    let irradiance = cfg.irradiance_at(plateau);
    case.buses
        .iter()
        .map(|b| net_demand(b.load, irradiance, cfg.pv_capacity_factor))
        .sum()
}

/// Buses with negative nominal load (net injections) carry no PV.
fn net_demand(load: f64, irradiance: f64, pv_capacity_factor: f64) -> f64 {
    if load > 0.0 {
        load - irradiance * pv_capacity_factor * load
    } else {
        load
    }
}

/// Per-round summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub iteration: usize,
    pub lambda_spread: f64,
    pub lambda_mean: f64,
    pub total_gen: f64,
    pub total_demand: f64,
    pub max_abs_mismatch_estimate: f64,
    pub wall_time: f64,
}

impl RoundMetrics {
    pub fn from_agents<T: Real>(iteration: usize, agents: &[AgentState<T>], wall_time: f64) -> Self {
        let n = agents.len().max(1) as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lambda_sum, mut gen, mut demand, mut mismatch) = (0.0, 0.0, 0.0, 0.0_f64);
        for a in agents {
            let lambda = a.lambda.to_f64_lossy();
            lo = lo.min(lambda);
            hi = hi.max(lambda);
            lambda_sum += lambda;
            gen += a.p_g.to_f64_lossy();
            demand += a.p_d.to_f64_lossy();
            mismatch = mismatch.max(a.p_gd_bar.to_f64_lossy().abs());
        }
        Self {
            iteration,
            lambda_spread: if agents.is_empty() { 0.0 } else { hi - lo },
            lambda_mean: lambda_sum / n,
            total_gen: gen,
            total_demand: demand,
            max_abs_mismatch_estimate: mismatch,
            wall_time,
        }
    }

    pub fn within_tolerance(&self, cfg: &SimulationConfig) -> bool {
        self.lambda_spread <= cfg.tol_lambda && self.max_abs_mismatch_estimate <= cfg.tol_mismatch
    }
}

/// True iff every entry of `window` is within both tolerances.
pub fn detect_convergence(window: &[RoundMetrics], cfg: &SimulationConfig) -> bool {
    !window.is_empty() && window.iter().all(|m| m.within_tolerance(cfg))
}

/// One agent's state, widened to `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent: usize,
    pub bus: BusId,
    pub p_g: f64,
    pub p_d: f64,
    pub p_gd_bar: f64,
    pub w: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub agents: Vec<AgentSnapshot>,
}

/// One constant-demand stretch of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauRecord {
    pub index: usize,
    /// First round that sees this plateau's demand.
    pub start_iteration: usize,
    /// Last round recorded on this plateau.
    pub end_iteration: usize,
    pub irradiance: f64,
    pub total_demand: f64,
    /// First round at which the convergence window was satisfied.
    pub first_converged: Option<usize>,
    /// Agent states after `end_iteration`.
    pub final_agents: Vec<AgentSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub case_name: String,
    pub rho: f64,
    /// `metrics[k]` describes the state after round `k`; `metrics[0]` is the
    /// initial state.
    pub metrics: Vec<RoundMetrics>,
    pub plateaus: Vec<PlateauRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_agents: Vec<AgentSnapshot>,
    /// Agent index of each case generator, in case order.
    pub generator_agents: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub stopped_early: bool,
}

impl SimTrace {
    pub fn final_lambda_mean(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.lambda_mean)
    }

    /// Outputs of the case generators, in case order.
    pub fn generator_outputs(&self, agents: &[AgentSnapshot]) -> Vec<f64> {
        self.generator_agents.iter().map(|&i| agents[i].p_g).collect()
    }
}

/// Everything a run needs that does not change from round to round.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub case: CaseData,
    pub cfg: SimulationConfig,
    pub graph: CommGraph,
    pub weights: WeightMatrix<T>,
    pub generators: Vec<GeneratorParams<T>>,
    pub rho: T,
    /// Network size as learned by each agent.
    pub n_est: Vec<usize>,
    /// `(MC_min, MC_max)` bracket for the initial price draw.
    pub mc_range: (f64, f64),
    /// Last plateau whose irradiance differs from its predecessor.
    pub last_step_plateau: usize,
}

impl<T: Real> Scenario<T> {
    pub fn build(case: &CaseData, cfg: &SimulationConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        case.validate()?;
        let graph = case.comm_graph()?;
        let n = graph.node_count();
        let discovery = discover_size(&graph)?;
        let weights = build_weights::<T>(&graph, cfg.weight_scheme, T::lit(cfg.epsilon))?;
        let report = validate_consensus_matrix(&weights);
        if !report.is_valid() {
            return Err(EngineError::NonMixingWeights(report));
        }
        let rho = cfg.n2_rho * case.base_mva * case.base_mva / (n as f64 * n as f64);
        let generators: Vec<GeneratorParams<T>> = case.agent_generators().iter().map(|g| g.cast()).collect();
        let mc_min = case.generators.iter().map(|g| g.b).fold(f64::INFINITY, f64::min);
        let mc_max = case
            .generators
            .iter()
            .map(|g| 2.0 * g.a * g.p_max + g.b)
            .fold(f64::NEG_INFINITY, f64::max);
        let mc_range = if case.generators.is_empty() { (0.0, 0.0) } else { (mc_min, mc_max) };

        let min_supply: f64 = case.generators.iter().map(|g| g.p_min).sum();
        let max_supply: f64 = case.generators.iter().map(|g| g.p_max).sum();
        let mut last_step_plateau = 0;
        for step in 0..cfg.plateau_count() {
            if step > 0 && cfg.irradiance_at(step) != cfg.irradiance_at(step - 1) {
                last_step_plateau = step;
            }
            let total_demand = plateau_total_demand(case, cfg, step);
            if total_demand < min_supply || total_demand > max_supply {
                return Err(EngineError::InfeasibleCase {
                    step,
                    iteration: step * cfg.demand_step_interval + 1,
                    total_demand,
                    min_supply,
                    max_supply,
                });
            }
        }
        Ok(Self {
            case: case.clone(),
            cfg: cfg.clone(),
            graph,
            weights,
            generators,
            rho: T::lit(rho),
            n_est: discovery.counts,
            mc_range,
            last_step_plateau,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.generators.len()
    }

    pub fn plateau_of_round(&self, k: usize) -> usize {
        k.saturating_sub(1) / self.cfg.demand_step_interval
    }

    pub fn demand(&self, plateau: usize) -> Vec<T> {
        let irradiance = self.cfg.irradiance_at(plateau);
        self.case
            .buses
            .iter()
            .map(|b| T::lit(net_demand(b.load, irradiance, self.cfg.pv_capacity_factor)))
            .collect()
    }

    /// Initial prices: agent `i` gets `MC_min + (MC_max − MC_min) · u_i`
    /// with `u_i = (x_i >> 11) · 2⁻⁵³` and `x_i` the `i`-th output of
    /// ChaCha8 seeded with `rng_seed`.
    pub fn initial_lambdas(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
        let (lo, hi) = self.mc_range;
        (0..self.agent_count())
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                lo + (hi - lo) * u
            })
            .collect()
    }

    pub fn snapshot(&self, agents: &[AgentState<T>]) -> Vec<AgentSnapshot> {
        agents
            .iter()
            .zip(&self.case.buses)
            .enumerate()
            .map(|(i, (a, bus))| AgentSnapshot {
                agent: i,
                bus: bus.id,
                p_g: a.p_g.to_f64_lossy(),
                p_d: a.p_d.to_f64_lossy(),
                p_gd_bar: a.p_gd_bar.to_f64_lossy(),
                w: a.w.to_f64_lossy(),
                lambda: a.lambda.to_f64_lossy(),
            })
            .collect()
    }
}

/// A round-update rule driven by [`Simulation`].
pub trait Dynamics<T: Real> {
    fn agents(&self) -> &[AgentState<T>];
    /// Performs one round given this round's per-agent demand.
    fn advance(&mut self, scenario: &Scenario<T>, demand: &[T]) -> Result<(), EngineError>;
}

/// The fully distributed algorithm: every agent runs [`agent_round`] on the
/// previous round's messages.
#[derive(Debug, Clone)]
pub struct Distributed<T> {
    agents: Vec<AgentState<T>>,
    messages: Vec<NeighborMessage<T>>,
}

impl<T: Real> Distributed<T> {
    /// Cold start with the scenario's seeded initial prices.
    pub fn cold_start(scenario: &Scenario<T>) -> Result<Self, EngineError> {
        let demand = scenario.demand(0);
        let agents = scenario
            .initial_lambdas()
            .into_iter()
            .enumerate()
            .map(|(i, l0)| AgentState::initial(i, demand[i], T::lit(l0), scenario.n_est[i], scenario.rho))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_states(agents))
    }

    /// Starts from explicit states; `agents[i].id` must equal `i`.
    pub fn from_states(agents: Vec<AgentState<T>>) -> Self {
        let messages = agents.iter().map(AgentState::message).collect();
        Self { agents, messages }
    }

    pub fn messages(&self) -> &[NeighborMessage<T>] {
        &self.messages
    }
}

impl<T: Real> Dynamics<T> for Distributed<T> {
    fn agents(&self) -> &[AgentState<T>] {
        &self.agents
    }

    fn advance(&mut self, scenario: &Scenario<T>, demand: &[T]) -> Result<(), EngineError> {
        let inbox = IndexedInbox(&self.messages);
        let mut agents = Vec::with_capacity(self.agents.len());
        let mut messages = Vec::with_capacity(self.agents.len());
        for (i, s) in self.agents.iter().enumerate() {
            let (next, msg) = agent_round(s, &scenario.generators[i], &inbox, scenario.weights.row(i), demand[i])?;
            agents.push(next);
            messages.push(msg);
        }
        self.agents = agents;
        self.messages = messages;
        Ok(())
    }
}

/// Round-by-round driver that records a [`SimTrace`].
pub struct Simulation<T, D = Distributed<T>> {
    scenario: Scenario<T>,
    dynamics: D,
    iteration: usize,
    plateau: usize,
    demand: Vec<T>,
    streak: usize,
    started: Instant,
    trace: SimTrace,
}

impl<T: Real> Simulation<T, Distributed<T>> {
    pub fn distributed(case: &CaseData, cfg: &SimulationConfig) -> Result<Self, EngineError> {
        let scenario = Scenario::build(case, cfg)?;
        let dynamics = Distributed::cold_start(&scenario)?;
        Ok(Self::new(scenario, dynamics))
    }
}

impl<T: Real, D: Dynamics<T>> Simulation<T, D> {
    pub fn new(scenario: Scenario<T>, dynamics: D) -> Self {
        let demand = scenario.demand(0);
        let trace = SimTrace {
            case_name: scenario.case.name.clone(),
            rho: scenario.rho.to_f64_lossy(),
            metrics: Vec::with_capacity(scenario.cfg.max_iter + 1),
            plateaus: Vec::new(),
            snapshots: Vec::new(),
            final_agents: Vec::new(),
            generator_agents: scenario.case.generator_agents(),
            iterations: 0,
            converged: false,
            stopped_early: false,
        };
        let mut sim = Self {
            scenario,
            dynamics,
            iteration: 0,
            plateau: 0,
            demand,
            streak: 0,
            started: Instant::now(),
            trace,
        };
        sim.open_plateau(0, 1);
        sim.record();
        sim
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    pub fn dynamics(&self) -> &D {
        &self.dynamics
    }

    pub fn agents(&self) -> &[AgentState<T>] {
        self.dynamics.agents()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn metrics(&self) -> &[RoundMetrics] {
        &self.trace.metrics
    }

    /// True once the last `convergence_window` rounds met both tolerances.
    pub fn is_converged(&self) -> bool {
        self.streak >= self.scenario.cfg.convergence_window
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.scenario.cfg.max_iter || self.trace.stopped_early
    }

    fn open_plateau(&mut self, index: usize, start_iteration: usize) {
        let total_demand = self.demand.iter().map(|d| d.to_f64_lossy()).sum();
        self.trace.plateaus.push(PlateauRecord {
            index,
            start_iteration,
            end_iteration: start_iteration.saturating_sub(1),
            irradiance: self.scenario.cfg.irradiance_at(index),
            total_demand,
            first_converged: None,
            final_agents: Vec::new(),
        });
    }

    fn close_plateau(&mut self) {
        let snap = self.scenario.snapshot(self.dynamics.agents());
        let p = self.trace.plateaus.last_mut().expect("a plateau is open");
        p.end_iteration = self.iteration;
        p.final_agents = snap;
    }

    fn record(&mut self) {
        let wall = if self.scenario.cfg.record_wall_time {
            self.started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let m = RoundMetrics::from_agents(self.iteration, self.dynamics.agents(), wall);
        if m.within_tolerance(&self.scenario.cfg) {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.is_converged() {
            let p = self.trace.plateaus.last_mut().expect("a plateau is open");
            p.first_converged.get_or_insert(self.iteration);
        }
        if let Some(every) = self.scenario.cfg.snapshot_interval {
            if self.iteration.is_multiple_of(every) {
                self.trace.snapshots.push(Snapshot {
                    iteration: self.iteration,
                    agents: self.scenario.snapshot(self.dynamics.agents()),
                });
            }
        }
        self.trace.metrics.push(m);
    }

    /// Runs one round. Returns `Ok(false)` without doing anything once the
    /// run is finished.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        if self.is_finished() {
            return Ok(false);
        }
        let k = self.iteration + 1;
        let plateau = self.scenario.plateau_of_round(k);
        if plateau != self.plateau {
            self.close_plateau();
            self.plateau = plateau;
            self.demand = self.scenario.demand(plateau);
            self.open_plateau(plateau, k);
        }
        self.dynamics.advance(&self.scenario, &self.demand)?;
        self.iteration = k;
        self.record();
        if self.scenario.cfg.early_stop && self.is_converged() && self.plateau >= self.scenario.last_step_plateau {
            self.trace.stopped_early = self.iteration < self.scenario.cfg.max_iter;
        }
        Ok(true)
    }

    /// Runs to completion, calling `observer` after initialization and after
    /// every round.
    pub fn run_with<F>(mut self, mut observer: F) -> Result<SimTrace, EngineError>
    where
        F: FnMut(&Self),
    {
        observer(&self);
        while self.step()? {
            observer(&self);
        }
        Ok(self.finish())
    }

    pub fn run(self) -> Result<SimTrace, EngineError> {
        self.run_with(|_| {})
    }

    pub fn finish(mut self) -> SimTrace {
        self.close_plateau();
        self.trace.final_agents = self.scenario.snapshot(self.dynamics.agents());
        self.trace.iterations = self.iteration;
        self.trace.converged = self.is_converged();
        self.trace
    }
}

/// Runs the distributed algorithm on `case` with `cfg`.
pub fn run_simulation<T: Real>(case: &CaseData, cfg: &SimulationConfig) -> Result<SimTrace, EngineError> {
    Simulation::<T>::distributed(case, cfg)?.run()
}
