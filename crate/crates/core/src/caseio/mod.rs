//! Case data: buses with nominal loads, quadratic-cost generators, and the
//! branch list that doubles as the agents' communication graph.
//!
//! All quantities are per-unit on `base_mva`. Cost coefficients are rescaled
//! so that `a p² + b p + c` is still in $/h with `p` in p.u.

mod irradiance;
mod matpower;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::GeneratorParams;
use crate::graph::{CommGraph, GraphError};

pub use irradiance::{load_irradiance_csv, IrradianceProfile};
pub use matpower::parse_matpower_case;

pub type BusId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing matrix or field `mpc.{name}`")]
    MissingMatrix { name: String },
    #[error("malformed `mpc.{matrix}` at line {line} (row {row}): {message}")]
    MalformedMatrix {
        matrix: String,
        line: usize,
        row: usize,
        message: String,
    },
    #[error("unsupported cost model at gencost row {row} (line {line}): model {model}, ncost {ncost}")]
    UnsupportedCostModel {
        row: usize,
        line: usize,
        model: i64,
        ncost: i64,
    },
    #[error("{kind} {index} references unknown bus {bus}")]
    DanglingReference {
        kind: &'static str,
        index: usize,
        bus: BusId,
    },
    #[error("duplicate bus id {id} at buses[{index}]")]
    DuplicateBus { id: BusId, index: usize },
    #[error("generators[{index}] is the second generator at bus {bus}; one generator per bus is supported")]
    MultipleGeneratorsAtBus { index: usize, bus: BusId },
    #[error("generators[{index}]: {reason}")]
    InvalidGenerator { index: usize, reason: String },
    #[error("branches[{index}] connects bus {bus} to itself")]
    SelfLoopBranch { index: usize, bus: BusId },
    #[error("buses[{index}] (id {id}) has a non-finite load")]
    NonFiniteLoad { index: usize, id: BusId },
    #[error("base_mva must be positive and finite, got {value}")]
    InvalidBaseMva { value: f64 },
    #[error("case has no buses")]
    NoBuses,
    #[error("branch list leaves the network disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("irradiance line {line}: time {time} does not increase")]
    NonMonotoneTime { line: usize, time: f64 },
    #[error("irradiance line {line}: negative value {value}")]
    NegativeIrradiance { line: usize, value: f64 },
    #[error("irradiance profile is empty or all zero")]
    EmptyProfile,
    #[error("irradiance line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    /// Nominal demand, p.u.
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseGenerator {
    pub bus: BusId,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl CaseGenerator {
    pub fn params(&self) -> GeneratorParams<f64> {
        GeneratorParams {
            a: self.a,
            b: self.b,
            c: self.c,
            p_min: self.p_min,
            p_max: self.p_max,
        }
    }
}

/// A validated dispatch case. The field layout is the native JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseData {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<CaseGenerator>,
    pub branches: Vec<(BusId, BusId)>,
}

impl CaseData {
    /// Checks every invariant; parsers call this before returning.
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(CaseError::InvalidBaseMva {
                value: self.base_mva,
            });
        }
        if self.buses.is_empty() {
            return Err(CaseError::NoBuses);
        }
        let mut index = HashMap::with_capacity(self.buses.len());
        for (i, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(CaseError::DuplicateBus { id: bus.id, index: i });
            }
            if !bus.load.is_finite() {
                return Err(CaseError::NonFiniteLoad { index: i, id: bus.id });
            }
        }
        let mut has_gen = vec![false; self.buses.len()];
        for (i, g) in self.generators.iter().enumerate() {
            let Some(&b) = index.get(&g.bus) else {
                return Err(CaseError::DanglingReference {
                    kind: "generator",
                    index: i,
                    bus: g.bus,
                });
            };
            if std::mem::replace(&mut has_gen[b], true) {
                return Err(CaseError::MultipleGeneratorsAtBus { index: i, bus: g.bus });
            }
            g.params()
                .validate()
                .map_err(|e| CaseError::InvalidGenerator {
                    index: i,
                    reason: e.to_string(),
                })?;
        }
        for (i, &(f, t)) in self.branches.iter().enumerate() {
            for bus in [f, t] {
                if !index.contains_key(&bus) {
                    return Err(CaseError::DanglingReference {
                        kind: "branch",
                        index: i,
                        bus,
                    });
                }
            }
            if f == t {
                return Err(CaseError::SelfLoopBranch { index: i, bus: f });
            }
        }
        let graph = self.build_graph(&index)?;
        match graph.component_count() {
            1 => Ok(()),
            components => Err(CaseError::Disconnected { components }),
        }
    }

    fn build_graph(&self, index: &HashMap<BusId, usize>) -> Result<CommGraph, CaseError> {
        CommGraph::from_edges_dedup(
            self.buses.len(),
            self.branches.iter().map(|(f, t)| (index[f], index[t])),
        )
        .map_err(|e| match e {
            GraphError::SelfLoop { node } => CaseError::SelfLoopBranch {
                index: 0,
                bus: self.buses[node].id,
            },
            _ => CaseError::NoBuses,
        })
    }

    /// Bus id → agent index (position in `buses`).
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Deduplicated undirected branch graph over agent indices.
    pub fn comm_graph(&self) -> Result<CommGraph, CaseError> {
        self.build_graph(&self.bus_index())
    }

    /// Per-agent generator parameters; load-only buses get the null generator.
    pub fn agent_generators(&self) -> Vec<GeneratorParams<f64>> {
        let index = self.bus_index();
        let mut out = vec![GeneratorParams::null(); self.buses.len()];
        for g in &self.generators {
            out[index[&g.bus]] = g.params();
        }
        out
    }

    /// Agent index of each entry of `generators`.
    pub fn generator_agents(&self) -> Vec<usize> {
        let index = self.bus_index();
        self.generators.iter().map(|g| index[&g.bus]).collect()
    }

    pub fn total_nominal_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    pub fn to_native_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case data serializes")
    }
}

pub fn parse_native_case(json_text: &str) -> Result<CaseData, CaseError> {
    let case: CaseData = serde_json::from_str(json_text).map_err(|e| CaseError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    case.validate()?;
    Ok(case)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Matpower,
    Native,
}

impl CaseFormat {
    /// `.json` is native; everything else is read as MATPOWER.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Native,
            _ => Self::Matpower,
        }
    }
}

pub fn parse_case(text: &str, format: CaseFormat) -> Result<CaseData, CaseError> {
    match format {
        CaseFormat::Matpower => parse_matpower_case(text),
        CaseFormat::Native => parse_native_case(text),
    }
}
