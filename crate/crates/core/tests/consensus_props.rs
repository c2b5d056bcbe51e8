mod common;

use common::random_connected_graph;
use dyndispatch::consensus::{run_static_consensus, static_consensus_step, DynamicConsensus};
use dyndispatch::graph::{build_weights, validate_consensus_matrix, WeightScheme};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn deviation(x: &[f64], mean: f64) -> f64 {
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dynamic_consensus_conserves_the_signal_sum(seed in any::<u64>(), n in 2usize..20, rounds in 1usize..80) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.2);
        let w = build_weights::<f64>(&g, WeightScheme::MeanMetropolis, 1.0).unwrap();
        let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut t = DynamicConsensus::new(z0);
        for _ in 0..rounds {
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            t.step(&w, &z).unwrap();
            let scale: f64 = z.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(t.conservation_residual() <= 1e-12 * scale);
        }
    }

    #[test]
    fn static_consensus_decays_by_the_spectral_gap(seed in any::<u64>(), n in 3usize..25) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.2);
        let w = build_weights::<f64>(&g, WeightScheme::MeanMetropolis, 1.0).unwrap();
        let gap = validate_consensus_matrix(&w).spectral_radius_gap;
        prop_assert!(gap < 1.0);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let e0 = deviation(&x, mean);
        for k in 1..=40 {
            x = static_consensus_step(&w, &x).unwrap();
            prop_assert!(deviation(&x, mean) <= gap.powi(k) * e0 + 1e-9);
            let drift = x.iter().sum::<f64>() / n as f64 - mean;
            prop_assert!(drift.abs() <= 1e-12 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn dynamic_consensus_tracks_a_settled_signal(seed in any::<u64>(), n in 2usize..15) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.3);
        let w = build_weights::<f64>(&g, WeightScheme::MeanMetropolis, 1.0).unwrap();
        let mut t = DynamicConsensus::new(vec![0.0; n]);
        for _ in 0..20 {
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            t.step(&w, &z).unwrap();
        }
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        for _ in 0..5000 {
            t.step(&w, &z).unwrap();
        }
        prop_assert!(t.estimates().iter().all(|e| (e - mean).abs() < 1e-8));
    }

    #[test]
    fn static_consensus_reaches_the_mean(seed in any::<u64>(), n in 2usize..20) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.3);
        let w = build_weights::<f64>(&g, WeightScheme::MeanMetropolis, 1.0).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let mean = x0.iter().sum::<f64>() / n as f64;
        let out = run_static_consensus(&w, &x0, 1e-9, 100_000).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.x.iter().all(|v| (v - mean).abs() <= 1e-9));
    }
}
