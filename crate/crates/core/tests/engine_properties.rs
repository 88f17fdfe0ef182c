use hidden_action_core::beliefs::MemoryCapacity;
use hidden_action_core::engine::{
    run_scenario, ScenarioConfig, DELTA_GRID, LOCAL_FRACTION_GRID, MEMORY_GRID, SIGMA_FRACTION_GRID,
};
use hidden_action_core::metrics::{mean_normalized_action, squared_distance};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = ScenarioConfig> {
    (0..3usize, 0..3usize, 0..3usize, 0..4usize, any::<u64>()).prop_map(|(d, m, l, s, seed)| ScenarioConfig {
        delta: DELTA_GRID[d],
        memory: MEMORY_GRID[m],
        local_fraction: LOCAL_FRACTION_GRID[l],
        sigma_fraction: SIGMA_FRACTION_GRID[s],
        runs: 6,
        periods: 12,
        master_seed: seed,
        ..ScenarioConfig::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn period_invariants(cfg in config()) {
        let result = run_scenario(cfg.clone()).unwrap();
        let a_star = result.scenario.benchmark.a_star;
        for run in &result.runs {
            prop_assert!(run.periods[0].action <= a_star + 1e-9);
            for (i, p) in run.periods.iter().enumerate() {
                prop_assert_eq!(p.t, i + 1);
                prop_assert!(cfg.memory.admits(p.principal_memory_len));
                prop_assert!(cfg.memory.admits(p.agent_memory_len));
                if cfg.memory == MemoryCapacity::Unbounded {
                    prop_assert_eq!(p.principal_memory_len, i + 1);
                }
                prop_assert!((p.u_p + p.share - p.outcome).abs() <= 4.0 * f64::EPSILON * p.outcome.abs().max(1.0));
                prop_assert!((p.outcome - (p.action * 50.0 + p.theta)).abs() <= 1e-9 * p.outcome.abs().max(1.0));
                if !p.accepted {
                    prop_assert_eq!(p.action, 0.0);
                    prop_assert_eq!(p.share, 0.0);
                }
                prop_assert!(p.search_lower <= p.search_upper);
            }
        }
    }

    #[test]
    fn replay_is_bit_identical(cfg in config()) {
        let a = run_scenario(cfg.clone()).unwrap();
        let b = run_scenario(cfg).unwrap();
        prop_assert_eq!(a.runs, b.runs);
    }

    #[test]
    fn jensen_on_simulated_panels(cfg in config()) {
        let result = run_scenario(cfg).unwrap();
        let panel = result.action_panel();
        let a_star = result.scenario.benchmark.a_star;
        for t in 1..=panel.periods() {
            let d = squared_distance(&panel, t, a_star).unwrap();
            let m = mean_normalized_action(&panel, t, a_star).unwrap();
            prop_assert!(d / panel.runs() as f64 >= (1.0 - m).powi(2) - 1e-12);
        }
    }
}

#[test]
fn different_seeds_differ() {
    let base = ScenarioConfig {
        runs: 3,
        periods: 5,
        sigma_fraction: 0.25,
        ..ScenarioConfig::default()
    };
    let a = run_scenario(ScenarioConfig {
        master_seed: 1,
        ..base.clone()
    })
    .unwrap();
    let b = run_scenario(ScenarioConfig { master_seed: 2, ..base }).unwrap();
    assert_ne!(a.runs, b.runs);
}
