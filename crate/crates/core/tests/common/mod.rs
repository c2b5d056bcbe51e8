#![allow(dead_code)]

use dyndispatch::caseio::{Bus, CaseData, CaseGenerator};
use dyndispatch::engine::{PlateauRecord, SimTrace};
use dyndispatch::graph::CommGraph;
use dyndispatch::oracle::{solve_centralized_ed, DispatchSolution};
use rand::rngs::StdRng;
use rand::Rng;

pub const CASE30: &str = include_str!("../../data/case30.m");
pub const CASE300: &str = include_str!("../../data/case300.m");
pub const PV_PROFILE: &str = include_str!("../../data/pv_afternoon.csv");

/// Random spanning tree on `n` nodes plus each remaining pair with
/// probability `extra`.
pub fn random_connected_graph(rng: &mut StdRng, n: usize, extra: f64) -> CommGraph {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(extra) {
                edges.push((i, j));
            }
        }
    }
    CommGraph::from_edges_dedup(n, edges).expect("valid edges")
}

/// Edges drawn independently with probability `p`; may be disconnected.
pub fn random_graph(rng: &mut StdRng, n: usize, p: f64) -> CommGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    CommGraph::new(n, edges).expect("valid edges")
}

/// Random connected case on the MW scale, converted to p.u. on 100 MVA:
/// `a ∈ [0.005, 0.1] $/MW²h`, `b ∈ [1, 40] $/MWh`, demand placed uniformly
/// inside the feasible range.
pub fn random_case(rng: &mut StdRng, max_nodes: usize, max_gens: usize) -> CaseData {
    let base = 100.0;
    let n = rng.gen_range(2..=max_nodes);
    let graph = random_connected_graph(rng, n, 0.2);
    let n_gen = rng.gen_range(1..=max_gens.min(n));
    let mut hosts: Vec<usize> = (0..n).collect();
    for i in 0..n_gen {
        let j = rng.gen_range(i..n);
        hosts.swap(i, j);
    }
    let generators: Vec<CaseGenerator> = hosts[..n_gen]
        .iter()
        .map(|&h| {
            let p_min = rng.gen_range(0.0..20.0);
            let p_max = p_min + rng.gen_range(20.0..200.0);
            CaseGenerator {
                bus: h as u64 + 1,
                a: rng.gen_range(0.005..0.1) * base * base,
                b: rng.gen_range(1.0..40.0) * base,
                c: 0.0,
                p_min: p_min / base,
                p_max: p_max / base,
            }
        })
        .collect();
    let lo: f64 = generators.iter().map(|g| g.p_min).sum();
    let hi: f64 = generators.iter().map(|g| g.p_max).sum();
    let demand = lo + rng.gen_range(0.05..0.95) * (hi - lo);
    let shares: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = shares.iter().sum();
    let buses = (0..n)
        .map(|i| Bus { id: i as u64 + 1, load: demand * shares[i] / total })
        .collect();
    CaseData {
        name: "random".into(),
        base_mva: base,
        buses,
        generators,
        branches: graph.edges().iter().map(|&(a, b)| (a as u64 + 1, b as u64 + 1)).collect(),
    }
}

pub fn oracle(case: &CaseData, total_demand: f64) -> DispatchSolution<f64> {
    let gens: Vec<_> = case.generators.iter().map(|g| g.params()).collect();
    solve_centralized_ed(&gens, total_demand).expect("feasible")
}

/// Rounds after the plateau start until the spread first drops to `tol`.
pub fn lambda_first_crossing(trace: &SimTrace, plateau: &PlateauRecord, tol: f64) -> Option<usize> {
    (plateau.start_iteration..=plateau.end_iteration)
        .find(|&k| trace.metrics[k].lambda_spread <= tol)
        .map(|k| k - plateau.start_iteration + 1)
}

/// Rounds after the plateau start until the spread stays at or below `tol`
/// for the rest of the plateau.
pub fn lambda_settle(trace: &SimTrace, plateau: &PlateauRecord, tol: f64) -> Option<usize> {
    let range = plateau.start_iteration..=plateau.end_iteration;
    match range.clone().rev().find(|&k| trace.metrics[k].lambda_spread > tol) {
        None => Some(0),
        Some(k) if k == plateau.end_iteration => None,
        Some(k) => Some(k + 1 - plateau.start_iteration + 1),
    }
}

/// Rounds after the plateau start until the largest mismatch estimate falls
/// to `fraction` of its post-step peak and stays there.
pub fn mismatch_settle(trace: &SimTrace, plateau: &PlateauRecord, fraction: f64) -> Option<usize> {
    let range = plateau.start_iteration..=plateau.end_iteration;
    let peak = range
        .clone()
        .map(|k| trace.metrics[k].max_abs_mismatch_estimate)
        .fold(0.0, f64::max);
    let limit = fraction * peak;
    match range.clone().rev().find(|&k| trace.metrics[k].max_abs_mismatch_estimate > limit) {
        None => Some(0),
        Some(k) if k == plateau.end_iteration => None,
        Some(k) => Some(k + 1 - plateau.start_iteration + 1),
    }
}
