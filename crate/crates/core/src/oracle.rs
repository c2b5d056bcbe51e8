//! Centralized economic dispatch by bisection on the system price, plus a
//! centralized ADMM reference that shares the engine's trace format.

use thiserror::Error;

use crate::agent::{local_primal_update, update_price, AgentError, AgentState, GeneratorParams};
use crate::caseio::CaseData;
use crate::engine::{Dynamics, EngineError, Scenario, SimTrace, Simulation, SimulationConfig};
use crate::scalar::Real;

const BISECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("demand {demand} is outside the feasible range [{min_supply}, {max_supply}]")]
    InfeasibleDemand {
        demand: f64,
        min_supply: f64,
        max_supply: f64,
    },
    #[error("no finite price clears demand {demand} (residual {residual})")]
    UnboundedPrice { demand: f64, residual: f64 },
    #[error("generator {index}: {source}")]
    InvalidGenerator { index: usize, source: AgentError },
}

/// Optimal dispatch: outputs in input order, the clearing price and the total
/// cost.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution<T> {
    pub dispatch: Vec<T>,
    pub lambda: T,
    pub total_cost: T,
}

/// Residual tolerance `|Σ p − D|` the solver guarantees.
pub fn balance_tolerance<T: Real>(total_demand: T) -> T {
    let floor = T::lit(1e-10);
    let scaled = T::epsilon() * T::lit(64.0) * (T::one() + total_demand.abs());
    floor.max(scaled)
}

fn supply_low<T: Real>(gens: &[GeneratorParams<T>], lambda: T) -> T {
    gens.iter().map(|g| g.response(lambda)).sum()
}

fn supply_high<T: Real>(gens: &[GeneratorParams<T>], lambda: T) -> T {
    gens.iter()
        .map(|g| {
            if g.a == T::zero() && lambda >= g.b {
                g.p_max
            } else {
                g.response(lambda)
            }
        })
        .sum()
}

fn solution<T: Real>(gens: &[GeneratorParams<T>], dispatch: Vec<T>, lambda: T) -> DispatchSolution<T> {
    let total_cost = gens.iter().zip(&dispatch).map(|(g, &p)| g.cost(p)).sum();
    DispatchSolution {
        dispatch,
        lambda,
        total_cost,
    }
}

/// Dispatch at a linear generator's kink `lambda = b`: every generator with
/// that exact marginal cost shares the remaining demand in proportion to its
/// range.
fn kink_dispatch<T: Real>(gens: &[GeneratorParams<T>], lambda: T, demand: T) -> Vec<T> {
    let lo = supply_low(gens, lambda);
    let hi = supply_high(gens, lambda);
    let share = if hi > lo { (demand - lo) / (hi - lo) } else { T::zero() };
    gens.iter()
        .map(|g| {
            if g.a == T::zero() && g.b == lambda {
                g.p_min + share * (g.p_max - g.p_min)
            } else {
                g.response(lambda)
            }
        })
        .collect()
}

/// Prices at which some generator's response changes slope.
fn breakpoints<T: Real>(gens: &[GeneratorParams<T>]) -> Vec<T> {
    let two = T::lit(2.0);
    gens.iter()
        .flat_map(|g| [g.b + two * g.a * g.p_min, g.b + two * g.a * g.p_max])
        .collect()
}

/// Minimizes `Σ a p² + b p + c` subject to `Σ p = total_demand` and the box
/// limits. The returned price is `inf { λ : Σ p_i(λ) ≥ D }`.
pub fn solve_centralized_ed<T: Real>(
    gens: &[GeneratorParams<T>],
    total_demand: T,
) -> Result<DispatchSolution<T>, OracleError> {
    for (index, g) in gens.iter().enumerate() {
        g.validate()
            .map_err(|source| OracleError::InvalidGenerator { index, source })?;
    }
    let tol = balance_tolerance(total_demand);
    let min_supply: T = gens.iter().map(|g| g.p_min).sum();
    let max_supply: T = gens.iter().map(|g| g.p_max).sum();
    if !total_demand.is_finite() || total_demand < min_supply - tol || total_demand > max_supply + tol {
        return Err(OracleError::InfeasibleDemand {
            demand: total_demand.to_f64_lossy(),
            min_supply: min_supply.to_f64_lossy(),
            max_supply: max_supply.to_f64_lossy(),
        });
    }
    if gens.is_empty() {
        return Ok(solution(gens, Vec::new(), T::zero()));
    }

    let mut kinks: Vec<T> = gens.iter().filter(|g| g.a == T::zero()).map(|g| g.b).collect();
    kinks.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    kinks.dedup();
    for &k in &kinks {
        if supply_low(gens, k) < total_demand && total_demand <= supply_high(gens, k) {
            return Ok(solution(gens, kink_dispatch(gens, k, total_demand), k));
        }
    }

    let points = breakpoints(gens);
    let mut lo = points.iter().copied().fold(T::infinity(), T::min) - T::one();
    let mut hi = points.iter().copied().fold(T::neg_infinity(), T::max) + T::one();
    for _ in 0..BISECTION_ITERS {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if supply_low(gens, mid) >= total_demand {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let mut lambda = hi;
    let mut dispatch: Vec<T> = gens.iter().map(|g| g.response(lambda)).collect();
    let free: Vec<usize> = (0..gens.len())
        .filter(|&i| gens[i].a > T::zero() && dispatch[i] > gens[i].p_min && dispatch[i] < gens[i].p_max)
        .collect();
    let residual = total_demand - dispatch.iter().copied().sum::<T>();
    if free.is_empty() {
        let slack = T::epsilon() * T::lit(16.0) * (T::one() + hi.abs());
        lambda = points
            .iter()
            .copied()
            .filter(|&p| p <= hi + slack)
            .fold(lo, T::max);
    } else {
        let two = T::lit(2.0);
        let gain: T = free.iter().map(|&i| T::one() / (two * gens[i].a)).sum();
        let shift = residual / gain;
        lambda = lambda + shift;
        for &i in &free {
            let g = &gens[i];
            dispatch[i] = (dispatch[i] + shift / (two * g.a)).max(g.p_min).min(g.p_max);
        }
    }
    let residual = total_demand - dispatch.iter().copied().sum::<T>();
    if residual.abs() > tol {
        return Err(OracleError::UnboundedPrice {
            demand: total_demand.to_f64_lossy(),
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(solution(gens, dispatch, lambda))
}

/// Centralized ADMM: a coordinator sees the exact average mismatch and holds
/// the single scaled dual; agents keep only the primal step. Every agent's
/// `p_gd_bar` and `w` mirror the coordinator's values.
#[derive(Debug, Clone)]
pub struct Centralized<T> {
    agents: Vec<AgentState<T>>,
}

impl<T: Real> Centralized<T> {
    /// `p = 0`, exact mismatch, and `W⁰` chosen so the price is the mean of
    /// the scenario's seeded initial prices.
    pub fn cold_start(scenario: &Scenario<T>) -> Result<Self, EngineError> {
        let lambda0 = scenario.initial_lambdas();
        let mean = T::lit(lambda0.iter().sum::<f64>() / lambda0.len().max(1) as f64);
        let demand = scenario.demand(0);
        let n = scenario.agent_count();
        let agents = (0..n)
            .map(|i| AgentState::initial(i, demand[i], mean, n, scenario.rho))
            .collect::<Result<Vec<_>, _>>()?;
        let mut c = Self { agents };
        let avg = c.average_mismatch();
        c.share(avg, mean / (scenario.rho * T::from_count(n)));
        Ok(c)
    }

    /// Starts from explicit states; agent 0's `w` is taken as the common dual.
    pub fn from_states(states: Vec<AgentState<T>>) -> Self {
        let mut c = Self { agents: states };
        if let Some(w) = c.agents.first().map(|a| a.w) {
            let avg = c.average_mismatch();
            c.share(avg, w);
        }
        c
    }

    fn average_mismatch(&self) -> T {
        let total: T = self.agents.iter().map(AgentState::local_mismatch).sum();
        total / T::from_count(self.agents.len())
    }

    fn share(&mut self, p_gd_bar: T, w: T) {
        let n = self.agents.len();
        for a in &mut self.agents {
            a.p_gd_bar = p_gd_bar;
            a.w = w;
            a.n_est = n;
            a.lambda = update_price(w, a.rho, n);
        }
    }
}

impl<T: Real> Dynamics<T> for Centralized<T> {
    fn agents(&self) -> &[AgentState<T>] {
        &self.agents
    }

    fn advance(&mut self, scenario: &Scenario<T>, demand: &[T]) -> Result<(), EngineError> {
        for (i, a) in self.agents.iter_mut().enumerate() {
            let p_g = local_primal_update(a, &scenario.generators[i])?;
            a.p_g = p_g;
            a.p_d = demand[i];
        }
        let avg = self.average_mismatch();
        let w = self.agents.first().map_or(T::zero(), |a| a.w) - avg;
        self.share(avg, w);
        Ok(())
    }
}

/// Runs the centralized ADMM reference with the same schedule, metrics and
/// trace format as the distributed engine.
pub fn reference_admm<T: Real>(case: &CaseData, cfg: &SimulationConfig) -> Result<SimTrace, EngineError> {
    let scenario = Scenario::<T>::build(case, cfg)?;
    let dynamics = Centralized::cold_start(&scenario)?;
    Simulation::new(scenario, dynamics).run()
}
