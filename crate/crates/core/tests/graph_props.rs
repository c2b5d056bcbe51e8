mod common;

use common::{random_connected_graph, random_graph};
use dyndispatch::graph::{
    algebraic_connectivity, build_laplacian, build_weights, discover_size, symmetric_eigenvalues,
    validate_consensus_matrix, CommGraph, GraphError, WeightScheme,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn laplacian_spectrum_matches_bfs_connectivity(seed in any::<u64>(), n in 1usize..25, p in 0.02f64..0.4) {
        let g = random_graph(&mut StdRng::seed_from_u64(seed), n, p);
        let l = build_laplacian::<f64>(&g);
        let eig = symmetric_eigenvalues(&l);
        let zeros = eig.iter().filter(|v| v.abs() < 1e-9).count();
        prop_assert_eq!(zeros, g.component_count());
        prop_assert_eq!(algebraic_connectivity(&l) > 0.0, g.is_connected() && n > 1);
        for i in 0..n {
            let row: f64 = l.row(i).iter().sum();
            prop_assert!(row.abs() < 1e-12);
        }
    }

    #[test]
    fn size_discovery_counts_every_node(seed in any::<u64>(), n in 1usize..40, p in 0.0f64..0.3) {
        let g = random_connected_graph(&mut StdRng::seed_from_u64(seed), n, p);
        let d = discover_size(&g).unwrap();
        prop_assert!(d.counts.iter().all(|&c| c == n));
        prop_assert_eq!(Some(d.rounds), g.diameter());
    }

    #[test]
    fn size_discovery_rejects_disconnected(seed in any::<u64>(), n in 2usize..20) {
        let g = random_graph(&mut StdRng::seed_from_u64(seed), n, 0.1);
        prop_assume!(!g.is_connected());
        let rejected = matches!(discover_size(&g), Err(GraphError::DisconnectedGraph { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn weights_are_symmetric_doubly_stochastic_and_local(seed in any::<u64>(), n in 2usize..30, eps in 0.1f64..3.0) {
        let g = random_connected_graph(&mut StdRng::seed_from_u64(seed), n, 0.15);
        for scheme in [WeightScheme::Metropolis, WeightScheme::MeanMetropolis] {
            let w = build_weights::<f64>(&g, scheme, eps).unwrap();
            for i in 0..n {
                prop_assert!((w.row(i).row_sum() - 1.0).abs() <= 1e-12);
                for j in 0..n {
                    prop_assert_eq!(w.get(i, j), w.get(j, i));
                    if i != j && !g.has_edge(i, j) {
                        prop_assert_eq!(w.get(i, j), 0.0);
                    }
                }
            }
            let report = validate_consensus_matrix(&w);
            prop_assert!(report.row_stochastic && report.col_stochastic);
            // Metropolis weights on regular bipartite graphs keep eigenvalue -1.
            let expect_mixing = scheme == WeightScheme::MeanMetropolis || !(g.is_regular() && g.is_bipartite());
            prop_assert_eq!(report.is_valid(), expect_mixing);
        }
    }
}

#[test]
fn even_cycles_separate_the_schemes() {
    for n in [4, 6, 10] {
        let g = CommGraph::cycle(n);
        let m = validate_consensus_matrix(&build_weights::<f64>(&g, WeightScheme::Metropolis, 1.0).unwrap());
        let mm = validate_consensus_matrix(&build_weights::<f64>(&g, WeightScheme::MeanMetropolis, 1.0).unwrap());
        assert!(!m.is_valid());
        assert!(mm.is_valid());
    }
}
