use proptest::prelude::*;
use ranctl_core::kpi::{reward, RewardBounds, RewardMode};
use ranctl_core::ransim::{default_profiles, CellState, SchedulerOption, SimConfig, UeProfile};

fn run(option: SchedulerOption, seed: u64, ticks: usize) -> Vec<String> {
    let cfg = SimConfig::default();
    let profiles = default_profiles();
    let mut cell = CellState::new(&profiles, &cfg, seed);
    (0..ticks)
        .map(|t| format!("{:?}", cell.step(option, &profiles, t >= 80, &cfg).unwrap()))
        .collect()
}

#[test]
fn ninety_ticks_are_reproducible() {
    let a = run(SchedulerOption::MaximumCOverI, 2024, 90);
    assert_eq!(a, run(SchedulerOption::MaximumCOverI, 2024, 90));
    assert_ne!(a, run(SchedulerOption::MaximumCOverI, 2025, 90));
}

#[test]
fn constant_policy_ordering_over_fifty_runs() {
    let cfg = SimConfig::default();
    let profiles = default_profiles();
    let bounds = RewardBounds::for_sim(&cfg);
    let mut tput = [0.0; 5];
    let mut gap = [0.0; 5];
    for seed in 0..50u64 {
        for option in SchedulerOption::ALL {
            let mut cell = CellState::new(&profiles, &cfg, seed);
            for _ in 0..80 {
                let obs = cell.step(option, &profiles, false, &cfg).unwrap();
                tput[option.code()] += obs.cell_throughput_mbps;
                gap[option.code()] += obs.ue_throughput_gap();
                let r = reward(&obs, RewardMode::UeGap, &bounds).unwrap().value();
                assert!(r <= 0.0);
            }
        }
    }
    let best_tput = (0..5).max_by(|&a, &b| tput[a].total_cmp(&tput[b])).unwrap();
    let least_gap = (0..5).min_by(|&a, &b| gap[a].total_cmp(&gap[b])).unwrap();
    assert_eq!(best_tput, SchedulerOption::MaximumCOverI.code(), "{tput:?}");
    assert_eq!(least_gap, SchedulerOption::EqualRate.code(), "{gap:?}");
}

#[test]
fn without_rf_jitter_rsrp_is_nominal() {
    let cfg = SimConfig {
        sigma_rf_db: 0.0,
        ..SimConfig::default()
    };
    let profiles = default_profiles();
    let mut cell = CellState::new(&profiles, &cfg, 1);
    let obs = cell.step(SchedulerOption::EqualRate, &profiles, false, &cfg).unwrap();
    let nominal: Vec<f64> = profiles.iter().map(|p| p.rsrp_dbm).collect();
    assert_eq!(obs.ue_rsrp_dbm, nominal);
}

fn arb_profiles() -> impl Strategy<Value = Vec<UeProfile>> {
    prop::collection::vec(
        (-140.0..=-40.0f64, 0.0..3000.0f64, 0.0..1500.0f64).prop_map(|(rsrp_dbm, demand_mean, demand_std)| UeProfile {
            rsrp_dbm,
            demand_mean,
            demand_std,
        }),
        1..6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // 64 cases x 20 ticks x 5 options is well over 1000 seeded ticks.
    #[test]
    fn conservation_and_budget(profiles in arb_profiles(), seed in any::<u64>(), budget in 1u32..200, rest_every in 2usize..10) {
        let cfg = SimConfig { prb_budget: budget, ..SimConfig::default() };
        for option in SchedulerOption::ALL {
            let mut cell = CellState::new(&profiles, &cfg, seed);
            for t in 0..20 {
                let before = cell.ue_queues.clone();
                let obs = cell.step(option, &profiles, t % rest_every == 0, &cfg).unwrap();
                prop_assert!(obs.allocation.iter().sum::<u32>() <= budget);
                prop_assert!((0.0..=1.0).contains(&obs.prb_utilization));
                let sum: f64 = obs.ue_throughput_mbps.iter().sum();
                prop_assert!((obs.cell_throughput_mbps - sum).abs() <= 1e-9 * (1.0 + sum));
                for (i, queued) in before.iter().enumerate() {
                    let available = queued + obs.ue_demand_mb[i];
                    prop_assert!(obs.ue_served_mb[i] >= 0.0);
                    prop_assert!(obs.ue_served_mb[i] <= available);
                    prop_assert!((cell.ue_queues[i] - (available - obs.ue_served_mb[i])).abs() <= 1e-9 * (1.0 + available));
                    prop_assert!(cell.ue_queues[i] >= 0.0);
                    prop_assert!(cell.pf_avg_throughput[i] >= cfg.pf_floor_mbps);
                    if available == 0.0 {
                        prop_assert_eq!(obs.allocation[i], 0);
                    }
                }
            }
        }
    }
}
