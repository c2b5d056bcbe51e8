//! A single dispatch agent: one (possibly empty) quadratic-cost generator plus
//! a local load.
//!
//! Each round an agent reads only its own state, its row of the mixing
//! matrix, and the estimates its neighbors published in the previous round.
//! Outgoing messages carry two numbers: the mismatch estimate and the scaled
//! dual. Generation, demand and cost data stay local.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{LocalWeights, NodeId};
use crate::scalar::{clip, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("penalty rho must be positive, got {rho}")]
    NonPositiveRho { rho: f64 },
    #[error("agent count must be at least 1")]
    ZeroAgentCount,
    #[error("agent {agent} is missing messages from neighbors {missing:?}")]
    MissingNeighborMessage { agent: NodeId, missing: Vec<NodeId> },
    #[error("invalid generator: {reason}")]
    InvalidGenerator { reason: String },
}

/// Quadratic cost `a p² + b p + c` on `[p_min, p_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub p_min: T,
    pub p_max: T,
}

impl<T: Real> GeneratorParams<T> {
    pub fn new(a: T, b: T, c: T, p_min: T, p_max: T) -> Result<Self, AgentError> {
        let g = Self {
            a,
            b,
            c,
            p_min,
            p_max,
        };
        g.validate()?;
        Ok(g)
    }

    /// The degenerate generator of a load-only bus.
    pub fn null() -> Self {
        Self {
            a: T::zero(),
            b: T::zero(),
            c: T::zero(),
            p_min: T::zero(),
            p_max: T::zero(),
        }
    }

    pub fn is_null(&self) -> bool {
        *self == Self::null()
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let fields = [self.a, self.b, self.c, self.p_min, self.p_max];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::InvalidGenerator {
                reason: "non-finite parameter".into(),
            });
        }
        if self.a < T::zero() {
            return Err(AgentError::InvalidGenerator {
                reason: format!("negative curvature a = {}", self.a),
            });
        }
        if self.p_min > self.p_max {
            return Err(AgentError::InvalidGenerator {
                reason: format!("p_min {} exceeds p_max {}", self.p_min, self.p_max),
            });
        }
        Ok(())
    }

    pub fn cost(&self, p: T) -> T {
        self.a * p * p + self.b * p + self.c
    }

    pub fn marginal_cost(&self, p: T) -> T {
        T::lit(2.0) * self.a * p + self.b
    }

    /// Output a price-taker would choose at price `lambda`. For `a = 0` this
    /// is the bang-bang response, with `p_min` at `lambda == b`.
    pub fn response(&self, lambda: T) -> T {
        if self.a > T::zero() {
            clip((lambda - self.b) / (T::lit(2.0) * self.a), self.p_min, self.p_max)
        } else if lambda > self.b {
            self.p_max
        } else {
            self.p_min
        }
    }

    pub fn cast<U: Real>(&self) -> GeneratorParams<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        GeneratorParams {
            a: c(self.a),
            b: c(self.b),
            c: c(self.c),
            p_min: c(self.p_min),
            p_max: c(self.p_max),
        }
    }
}

/// What one agent publishes to its neighbors each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborMessage<T> {
    pub sender_id: NodeId,
    pub p_gd_bar: T,
    pub w: T,
}

/// Local state of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState<T> {
    pub id: NodeId,
    /// Generation setpoint.
    pub p_g: T,
    /// Local demand.
    pub p_d: T,
    /// Estimate of the network-average mismatch `(Σ p_g − Σ p_d) / N`.
    pub p_gd_bar: T,
    /// Scaled dual estimate; the price is `rho * n_est * w`.
    pub w: T,
    pub lambda: T,
    pub n_est: usize,
    pub rho: T,
}

impl<T: Real> AgentState<T> {
    /// Cold start: no generation, the mismatch estimate seeded with the local
    /// mismatch `0 − p_d`, and `w` chosen so the price equals `lambda0`.
    pub fn initial(id: NodeId, p_d: T, lambda0: T, n_est: usize, rho: T) -> Result<Self, AgentError> {
        check_rho_n(rho, n_est)?;
        Ok(Self {
            id,
            p_g: T::zero(),
            p_d,
            p_gd_bar: -p_d,
            w: lambda0 / (rho * T::from_count(n_est)),
            lambda: lambda0,
            n_est,
            rho,
        })
    }

    pub fn message(&self) -> NeighborMessage<T> {
        NeighborMessage {
            sender_id: self.id,
            p_gd_bar: self.p_gd_bar,
            w: self.w,
        }
    }

    pub fn local_mismatch(&self) -> T {
        self.p_g - self.p_d
    }
}

fn check_rho_n<T: Real>(rho: T, n: usize) -> Result<(), AgentError> {
    if !(rho > T::zero()) {
        return Err(AgentError::NonPositiveRho {
            rho: rho.to_f64_lossy(),
        });
    }
    if n == 0 {
        return Err(AgentError::ZeroAgentCount);
    }
    Ok(())
}

/// Source of the previous round's neighbor messages.
pub trait Inbox<T> {
    fn message(&self, sender: NodeId) -> Option<&NeighborMessage<T>>;
}

/// A plain list of messages, searched by sender id.
impl<T> Inbox<T> for [NeighborMessage<T>] {
    fn message(&self, sender: NodeId) -> Option<&NeighborMessage<T>> {
        self.iter().find(|m| m.sender_id == sender)
    }
}

impl<T> Inbox<T> for Vec<NeighborMessage<T>> {
    fn message(&self, sender: NodeId) -> Option<&NeighborMessage<T>> {
        self.as_slice().message(sender)
    }
}

/// Every agent's message stored at the index of its sender id.
#[derive(Debug, Clone, Copy)]
pub struct IndexedInbox<'a, T>(pub &'a [NeighborMessage<T>]);

impl<T> Inbox<T> for IndexedInbox<'_, T> {
    #[inline]
    fn message(&self, sender: NodeId) -> Option<&NeighborMessage<T>> {
        self.0.get(sender).filter(|m| m.sender_id == sender)
    }
}

fn mix_messages<T, M, F>(
    agent: NodeId,
    weights: &LocalWeights<T>,
    own: T,
    msgs: &M,
    field: F,
) -> Result<T, AgentError>
where
    T: Real,
    M: Inbox<T> + ?Sized,
    F: Fn(&NeighborMessage<T>) -> T,
{
    let mut acc = weights.self_weight * own;
    let mut missing = Vec::new();
    for &(j, a) in &weights.neighbors {
        match msgs.message(j) {
            Some(m) => acc = acc + a * field(m),
            None => missing.push(j),
        }
    }
    if missing.is_empty() {
        Ok(acc)
    } else {
        Err(AgentError::MissingNeighborMessage { agent, missing })
    }
}

/// Closed-form minimizer of the local augmented cost, clipped to the
/// generator limits:
/// `clip((N ρ ψ − b) / (2a + ρ))` with `ψ = p_g / N − p̄_gd + w`.
pub fn local_primal_update<T: Real>(s: &AgentState<T>, g: &GeneratorParams<T>) -> Result<T, AgentError> {
    check_rho_n(s.rho, s.n_est)?;
    let n = T::from_count(s.n_est);
    let psi = s.p_g / n - s.p_gd_bar + s.w;
    let unclipped = (n * s.rho * psi - g.b) / (T::lit(2.0) * g.a + s.rho);
    Ok(clip(unclipped, g.p_min, g.p_max))
}

/// Dynamic-consensus step on the mismatch estimate, biased by the change in
/// the local mismatch `p_g − p_d`.
pub fn update_mismatch_estimate<T, M>(
    s: &AgentState<T>,
    msgs: &M,
    weights: &LocalWeights<T>,
    p_gd_new: T,
    p_gd_old: T,
) -> Result<T, AgentError>
where
    T: Real,
    M: Inbox<T> + ?Sized,
{
    let mixed = mix_messages(s.id, weights, s.p_gd_bar, msgs, |m| m.p_gd_bar)?;
    Ok(mixed + (p_gd_new - p_gd_old))
}

/// Consensus step on the scaled dual, driven down by the fresh mismatch
/// estimate.
pub fn update_dual<T, M>(
    s: &AgentState<T>,
    msgs: &M,
    weights: &LocalWeights<T>,
    p_gd_bar_new: T,
) -> Result<T, AgentError>
where
    T: Real,
    M: Inbox<T> + ?Sized,
{
    let mixed = mix_messages(s.id, weights, s.w, msgs, |m| m.w)?;
    Ok(mixed - p_gd_bar_new)
}

/// `λ = ρ N w`.
#[inline]
pub fn update_price<T: Real>(w: T, rho: T, n: usize) -> T {
    rho * T::from_count(n) * w
}

/// One full round: primal update, mismatch estimate, dual, price. `p_d_new`
/// is this round's local demand; a demand change enters only as a bias in
/// the mismatch estimate.
pub fn agent_round<T, M>(
    s: &AgentState<T>,
    g: &GeneratorParams<T>,
    msgs: &M,
    weights: &LocalWeights<T>,
    p_d_new: T,
) -> Result<(AgentState<T>, NeighborMessage<T>), AgentError>
where
    T: Real,
    M: Inbox<T> + ?Sized,
{
    let p_g = local_primal_update(s, g)?;
    let p_gd_bar = update_mismatch_estimate(s, msgs, weights, p_g - p_d_new, s.p_g - s.p_d)?;
    let w = update_dual(s, msgs, weights, p_gd_bar)?;
    let next = AgentState {
        p_g,
        p_d: p_d_new,
        p_gd_bar,
        w,
        lambda: update_price(w, s.rho, s.n_est),
        ..*s
    };
    Ok((next, next.message()))
}
