//! Static and dynamic average consensus.
//!
//! The dynamic variant adds each node's signal increment as a bias, so with a
//! column-stochastic mixing matrix and `x⁰ = z⁰` the estimates always sum to
//! the signals: `Σ x^k = Σ z^k`.

use thiserror::Error;

use crate::graph::{validate_consensus_matrix, ConsensusMatrixReport, LocalWeights, NodeId, WeightMatrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("dimension mismatch: weight matrix is {expected}x{expected}, vector has {got} entries")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight matrix fails the consensus conditions: {0:?}")]
    InvalidWeightMatrix(ConsensusMatrixReport),
}

fn check_dim<T>(w: &WeightMatrix<T>, len: usize) -> Result<(), ConsensusError>
where
    T: Real,
{
    if w.dim() == len {
        Ok(())
    } else {
        Err(ConsensusError::DimensionMismatch {
            expected: w.dim(),
            got: len,
        })
    }
}

/// One node's mix: `a_ii x_i + Σ_j a_ij x_j`, reading neighbor values through
/// `value_of`.
#[inline]
pub fn mix_node<T, F>(row: &LocalWeights<T>, own: T, mut value_of: F) -> T
where
    T: Real,
    F: FnMut(NodeId) -> T,
{
    row.neighbors
        .iter()
        .fold(row.self_weight * own, |acc, &(j, a)| acc + a * value_of(j))
}

fn mix_all<T: Real>(w: &WeightMatrix<T>, x: &[T]) -> Vec<T> {
    w.rows()
        .iter()
        .enumerate()
        .map(|(i, row)| mix_node(row, x[i], |j| x[j]))
        .collect()
}

/// `x' = W x`.
pub fn static_consensus_step<T: Real>(w: &WeightMatrix<T>, x: &[T]) -> Result<Vec<T>, ConsensusError> {
    check_dim(w, x.len())?;
    Ok(mix_all(w, x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticConsensusOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// False when `max_iter` was exhausted before reaching `tol`.
    pub converged: bool,
}

/// Iterates `x ← W x` until every entry is within `tol` of the initial mean.
pub fn run_static_consensus<T: Real>(
    w: &WeightMatrix<T>,
    x0: &[T],
    tol: T,
    max_iter: usize,
) -> Result<StaticConsensusOutcome<T>, ConsensusError> {
    check_dim(w, x0.len())?;
    let report = validate_consensus_matrix(w);
    if !report.is_valid() {
        return Err(ConsensusError::InvalidWeightMatrix(report));
    }
    let mean = x0.iter().copied().sum::<T>() / T::from_count(x0.len());
    let within = |x: &[T]| x.iter().all(|&v| (v - mean).abs() <= tol);
    let mut x = x0.to_vec();
    let mut iterations = 0;
    while !within(&x) {
        if iterations == max_iter {
            return Ok(StaticConsensusOutcome {
                x,
                iterations,
                converged: false,
            });
        }
        x = mix_all(w, &x);
        iterations += 1;
    }
    Ok(StaticConsensusOutcome {
        x,
        iterations,
        converged: true,
    })
}

/// `x' = W x + (z_new - z_old)`.
pub fn dynamic_consensus_step<T: Real>(
    w: &WeightMatrix<T>,
    x: &[T],
    z_new: &[T],
    z_old: &[T],
) -> Result<Vec<T>, ConsensusError> {
    check_dim(w, x.len())?;
    check_dim(w, z_new.len())?;
    check_dim(w, z_old.len())?;
    Ok(w
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| mix_node(row, x[i], |j| x[j]) + (z_new[i] - z_old[i]))
        .collect())
}

/// Dynamic consensus tracker that remembers the last signal it saw.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicConsensus<T> {
    estimates: Vec<T>,
    last_signal: Vec<T>,
}

impl<T: Real> DynamicConsensus<T> {
    /// Starts with `x⁰ = z⁰`, the initialization the conservation property
    /// requires.
    pub fn new(initial_signal: Vec<T>) -> Self {
        Self {
            estimates: initial_signal.clone(),
            last_signal: initial_signal,
        }
    }

    pub fn estimates(&self) -> &[T] {
        &self.estimates
    }

    pub fn last_signal(&self) -> &[T] {
        &self.last_signal
    }

    pub fn step(&mut self, w: &WeightMatrix<T>, z_new: &[T]) -> Result<&[T], ConsensusError> {
        let next = dynamic_consensus_step(w, &self.estimates, z_new, &self.last_signal)?;
        self.estimates = next;
        self.last_signal.copy_from_slice(z_new);
        Ok(&self.estimates)
    }

    /// `|Σ x − Σ z|`.
    pub fn conservation_residual(&self) -> T {
        let sx: T = self.estimates.iter().copied().sum();
        let sz: T = self.last_signal.iter().copied().sum();
        (sx - sz).abs()
    }
}
