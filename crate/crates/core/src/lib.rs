//! Fully distributed dynamic economic dispatch.
//!
//! Agents sitting on the buses of a power network agree on a market price
//! and the network power mismatch by dynamic average consensus over their
//! communication graph, while each solves a closed-form local ADMM step for
//! its own generator. A centralized oracle provides ground truth.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for common use.

pub mod agent;
pub mod caseio;
pub mod cli;
pub mod consensus;
pub mod engine;
pub mod graph;
pub mod oracle;
pub mod scalar;
pub mod trace;

pub use agent::{agent_round, AgentError, AgentState, GeneratorParams, NeighborMessage};
pub use caseio::{
    load_irradiance_csv, parse_case, parse_matpower_case, parse_native_case, CaseData, CaseError, CaseFormat,
    IrradianceProfile,
};
pub use consensus::{dynamic_consensus_step, run_static_consensus, static_consensus_step, DynamicConsensus};
pub use engine::{
    apply_demand_step, detect_convergence, run_simulation, EngineError, RoundMetrics, Scenario, SimTrace, Simulation,
    SimulationConfig,
};
pub use graph::{
    build_laplacian, build_weights, discover_size, mean_metropolis_weights, metropolis_weights,
    validate_consensus_matrix, CommGraph, GraphError, WeightMatrix, WeightScheme,
};
pub use oracle::{reference_admm, solve_centralized_ed, DispatchSolution, OracleError};
pub use scalar::Real;

pub type WeightMatrix64 = WeightMatrix<f64>;
pub type WeightMatrix32 = WeightMatrix<f32>;
pub type AgentState64 = AgentState<f64>;
pub type AgentState32 = AgentState<f32>;
pub type GeneratorParams64 = GeneratorParams<f64>;
pub type GeneratorParams32 = GeneratorParams<f32>;
pub type Scenario64 = Scenario<f64>;
pub type Scenario32 = Scenario<f32>;
pub type Simulation64 = Simulation<f64>;
pub type Simulation32 = Simulation<f32>;
pub type DispatchSolution64 = DispatchSolution<f64>;
