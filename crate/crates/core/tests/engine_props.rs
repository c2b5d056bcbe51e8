mod common;

use common::{random_case, CASE30};
use dyndispatch::engine::{run_simulation, Simulation, SimulationConfig};
use dyndispatch::parse_matpower_case;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn stepped_config(seed: u64) -> SimulationConfig {
    SimulationConfig {
        n2_rho: 0.002,
        max_iter: 3000,
        demand_step_interval: 1000,
        pv_levels: vec![0.1, 0.6, 0.3],
        rng_seed: seed,
        ..SimulationConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn estimates_sum_to_true_mismatch_every_round(seed in any::<u64>()) {
        let case = random_case(&mut StdRng::seed_from_u64(seed), 15, 8);
        let Ok(sim) = Simulation::<f64>::distributed(&case, &stepped_config(seed)) else {
            // PV can push some random cases below their minimum output.
            return Ok(());
        };
        let mut worst = 0.0_f64;
        sim.run_with(|s| {
            let (mut est, mut actual, mut scale) = (0.0, 0.0, 0.0_f64);
            for a in s.agents() {
                est += a.p_gd_bar;
                actual += a.p_g - a.p_d;
                scale += a.p_g.abs() + a.p_d.abs();
            }
            worst = worst.max((est - actual).abs() / scale.max(1.0));
        }).unwrap();
        prop_assert!(worst <= 1e-9, "{}", worst);
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let case = random_case(&mut StdRng::seed_from_u64(seed), 10, 5);
        let cfg = SimulationConfig { pv_levels: vec![], ..stepped_config(seed) };
        let a = run_simulation::<f64>(&case, &cfg).unwrap();
        let b = run_simulation::<f64>(&case, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn metrics_are_finite(seed in any::<u64>()) {
        let case = random_case(&mut StdRng::seed_from_u64(seed), 10, 5);
        let cfg = SimulationConfig { pv_levels: vec![], ..stepped_config(seed) };
        let t = run_simulation::<f64>(&case, &cfg).unwrap();
        for m in &t.metrics {
            prop_assert!(m.lambda_spread.is_finite() && m.lambda_mean.is_finite());
            prop_assert!(m.total_gen.is_finite() && m.max_abs_mismatch_estimate.is_finite());
        }
    }
}

#[test]
fn f32_and_f64_agree_on_ieee30() {
    let case = parse_matpower_case(CASE30).unwrap();
    let cfg = SimulationConfig {
        max_iter: 5000,
        demand_step_interval: 5000,
        ..SimulationConfig::default()
    };
    let a = run_simulation::<f64>(&case, &cfg).unwrap();
    let b = run_simulation::<f32>(&case, &cfg).unwrap();
    let rel = (a.final_lambda_mean() - b.final_lambda_mean()).abs() / a.final_lambda_mean();
    assert!(rel < 1e-3, "{rel}");
    let pa = a.generator_outputs(&a.final_agents);
    let pb = b.generator_outputs(&b.final_agents);
    for (x, y) in pa.iter().zip(&pb) {
        assert!((x - y).abs() < 1e-3, "{x} vs {y}");
    }
}

#[test]
fn early_stop_waits_for_the_last_demand_step() {
    let case = parse_matpower_case(CASE30).unwrap();
    let cfg = SimulationConfig {
        max_iter: 100_000,
        demand_step_interval: 5000,
        pv_levels: vec![0.3, 0.5, 0.2],
        early_stop: true,
        ..SimulationConfig::default()
    };
    let t = run_simulation::<f64>(&case, &cfg).unwrap();
    assert!(t.stopped_early && t.converged);
    assert!(t.iterations > 10_000 && t.iterations < 11_000, "{}", t.iterations);
    assert_eq!(t.plateaus.len(), 3);
}
