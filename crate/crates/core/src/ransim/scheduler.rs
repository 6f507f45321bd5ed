//! PRB allocation for the five scheduler options.
//!
//! All disciplines are need-capped: a UE never receives more PRBs than it takes
//! to drain its backlog plus this tick's demand. Ranked disciplines (max C/I and
//! the PF family) fill UEs in rank order; EQUAL_RATE hands out PRBs one at a time
//! to the UE with the lowest served volume so far.

use super::{spectral_efficiency, CellState, SchedulerOption};
use crate::{Error, Result};

/// PRBs required to carry `volume_mb` at `efficiency`, rounded up.
pub fn prbs_needed(volume_mb: f64, efficiency: f64, prb_bits_mb: f64) -> u32 {
    if volume_mb <= 0.0 || efficiency <= 0.0 {
        return 0;
    }
    let exact = volume_mb / (efficiency * prb_bits_mb);
    // Guard against 3.0000000001 rounding up to 4.
    (exact * (1.0 - 1e-12)).ceil().max(1.0) as u32
}

/// Allocates PRBs for `option` from the scheduler's inputs.
///
/// `available_mb` is backlog plus new demand per UE; `pf_avg_mbps` is only read by
/// the proportional-fair options.
pub fn allocate(
    option: SchedulerOption,
    efficiencies: &[f64],
    available_mb: &[f64],
    pf_avg_mbps: &[f64],
    prb_budget: u32,
    prb_bits_mb: f64,
) -> Result<Vec<u32>> {
    if prb_budget == 0 {
        return Err(Error::InvalidArgument("prb_budget must be positive".into()));
    }
    let n = efficiencies.len();
    if available_mb.len() != n || pf_avg_mbps.len() != n {
        return Err(Error::Shape(format!(
            "scheduler inputs disagree on UE count: {} efficiencies, {} volumes, {} averages",
            n,
            available_mb.len(),
            pf_avg_mbps.len()
        )));
    }
    if let Some(v) = available_mb.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative or non-finite volume {v}")));
    }

    let need: Vec<u32> = efficiencies
        .iter()
        .zip(available_mb)
        .map(|(&e, &v)| prbs_needed(v, e, prb_bits_mb))
        .collect();

    let alloc = match option {
        SchedulerOption::EqualRate => equal_rate(efficiencies, available_mb, &need, prb_budget, prb_bits_mb),
        SchedulerOption::MaximumCOverI => ranked_fill(efficiencies, &need, prb_budget),
        pf => {
            let alpha = pf.fairness_exponent().expect("PF option has an exponent");
            let metric: Vec<f64> = efficiencies
                .iter()
                .zip(pf_avg_mbps)
                .map(|(&e, &avg)| e / avg.powf(alpha))
                .collect();
            ranked_fill(&metric, &need, prb_budget)
        }
    };
    Ok(alloc)
}

/// Scheduler entry point operating on the cell's current RF and queues.
pub fn schedule_prbs(
    option: SchedulerOption,
    state: &CellState,
    demands_mb: &[f64],
    prb_budget: u32,
    prb_bits_mb: f64,
) -> Result<Vec<u32>> {
    if demands_mb.len() != state.ue_queues.len() {
        return Err(Error::Shape(format!(
            "{} demands for {} UEs",
            demands_mb.len(),
            state.ue_queues.len()
        )));
    }
    let efficiencies = state
        .ue_rsrp
        .iter()
        .map(|&r| spectral_efficiency(r))
        .collect::<Result<Vec<_>>>()?;
    let available: Vec<f64> = state.ue_queues.iter().zip(demands_mb).map(|(q, d)| q + d).collect();
    allocate(
        option,
        &efficiencies,
        &available,
        &state.pf_avg_throughput,
        prb_budget,
        prb_bits_mb,
    )
}

fn ranked_fill(metric: &[f64], need: &[u32], budget: u32) -> Vec<u32> {
    let mut order: Vec<usize> = (0..metric.len()).collect();
    // Stable sort keeps the lowest index first among equal metrics.
    order.sort_by(|&a, &b| metric[b].total_cmp(&metric[a]));
    let mut alloc = vec![0; metric.len()];
    let mut left = budget;
    for i in order {
        let take = need[i].min(left);
        alloc[i] = take;
        left -= take;
        if left == 0 {
            break;
        }
    }
    alloc
}

fn equal_rate(efficiencies: &[f64], available: &[f64], need: &[u32], budget: u32, prb_bits_mb: f64) -> Vec<u32> {
    let mut alloc = vec![0u32; efficiencies.len()];
    let served = |i: usize, prbs: u32| -> f64 { available[i].min(prbs as f64 * efficiencies[i] * prb_bits_mb) };
    for _ in 0..budget {
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..alloc.len() {
            if alloc[i] >= need[i] {
                continue;
            }
            let s = served(i, alloc[i]);
            if pick.is_none_or(|(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        match pick {
            Some((i, _)) => alloc[i] += 1,
            None => break,
        }
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use SchedulerOption::*;

    const BITS: f64 = 1.0;
    const BIG: f64 = 1e9;

    #[test]
    fn equal_rate_symmetric_split() {
        let a = allocate(EqualRate, &[2.0, 2.0], &[BIG, BIG], &[1.0, 1.0], 50, BITS).unwrap();
        assert_eq!(a, vec![25, 25]);
    }

    #[test]
    fn max_c_over_i_takes_everything() {
        let a = allocate(MaximumCOverI, &[2.0, 1.0], &[BIG, BIG], &[1.0, 1.0], 50, BITS).unwrap();
        assert_eq!(a, vec![50, 0]);
    }

    /// Every integer split of 30 PRBs, scored by |served_a - served_b|.
    fn brute_force_equal_split(eff: [f64; 2], budget: u32) -> (u32, u32) {
        (0..=budget)
            .map(|a| (a, budget - a))
            .min_by(|x, y| {
                let gx = (x.0 as f64 * eff[0] - x.1 as f64 * eff[1]).abs();
                let gy = (y.0 as f64 * eff[0] - y.1 as f64 * eff[1]).abs();
                gx.total_cmp(&gy)
            })
            .unwrap()
    }

    #[test]
    fn equal_rate_matches_brute_force() {
        let oracle = brute_force_equal_split([2.0, 1.0], 30);
        assert_eq!(oracle, (10, 20));
        let a = allocate(EqualRate, &[2.0, 1.0], &[BIG, BIG], &[1.0, 1.0], 30, BITS).unwrap();
        assert_eq!((a[0], a[1]), oracle);
    }

    #[test]
    fn pf_exponents_rank_by_metric() {
        // UE 0 has the better channel but a much higher average rate.
        let eff = [4.0, 2.0];
        let avg = [16.0, 2.0];
        let vol = [BIG, BIG];
        // alpha 1.5: 4/64 vs 2/2.83 -> UE 1 first.
        assert_eq!(
            allocate(ProportionalFairHigh, &eff, &vol, &avg, 10, BITS).unwrap(),
            vec![0, 10]
        );
        // alpha 1.0: 0.25 vs 1.0 -> UE 1 first.
        assert_eq!(
            allocate(ProportionalFairMedium, &eff, &vol, &avg, 10, BITS).unwrap(),
            vec![0, 10]
        );
        // alpha 0.5: 1.0 vs 1.414 -> UE 1 first.
        assert_eq!(
            allocate(ProportionalFairLow, &eff, &vol, &avg, 10, BITS).unwrap(),
            vec![0, 10]
        );
        let avg = [4.0, 2.0];
        // alpha 0.5: 2.0 vs 1.414 -> UE 0; alpha 1.5: 0.5 vs 0.707 -> UE 1.
        assert_eq!(
            allocate(ProportionalFairLow, &eff, &vol, &avg, 10, BITS).unwrap(),
            vec![10, 0]
        );
        assert_eq!(
            allocate(ProportionalFairHigh, &eff, &vol, &avg, 10, BITS).unwrap(),
            vec![0, 10]
        );
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a = allocate(MaximumCOverI, &[1.0, 1.0, 1.0], &[BIG; 3], &[1.0; 3], 7, BITS).unwrap();
        assert_eq!(a, vec![7, 0, 0]);
        let a = allocate(EqualRate, &[1.0, 1.0], &[BIG; 2], &[1.0; 2], 7, BITS).unwrap();
        assert_eq!(a, vec![4, 3]);
    }

    #[test]
    fn zero_volume_ue_gets_nothing() {
        for option in SchedulerOption::ALL {
            let a = allocate(option, &[4.0, 1.0], &[0.0, 5.0], &[1.0, 1.0], 20, BITS).unwrap();
            assert_eq!(a, vec![0, 5], "{option}");
        }
    }

    #[test]
    fn need_cap_spills_to_next_ue() {
        let a = allocate(MaximumCOverI, &[4.0, 1.0], &[10.0, BIG], &[1.0; 2], 20, BITS).unwrap();
        assert_eq!(a, vec![3, 17]);
    }

    #[test]
    fn zero_budget_is_an_error() {
        assert!(allocate(EqualRate, &[1.0], &[1.0], &[1.0], 0, BITS).is_err());
    }

    #[test]
    fn prbs_needed_rounds_up_exactly() {
        assert_eq!(prbs_needed(0.0, 2.0, 1.0), 0);
        assert_eq!(prbs_needed(6.0, 2.0, 1.0), 3);
        assert_eq!(prbs_needed(6.1, 2.0, 1.0), 4);
        assert_eq!(prbs_needed(0.3 * 3.0, 0.3, 1.0), 3);
    }
}
