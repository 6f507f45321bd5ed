//! Deterministic discrete-time simulator of one LTE cell. One tick is one
//! simulated minute; the five scheduler options are the control knob.

mod channel;
mod scheduler;
mod traffic;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use channel::{sinr_db, spectral_efficiency, MAX_EFFICIENCY, RSRP_MAX_DBM, RSRP_MIN_DBM};
pub use scheduler::{allocate, prbs_needed, schedule_prbs};
pub use traffic::{fit_traffic_profiles, generate_demands, read_traffic_records, TrafficRecord};

use crate::seed::{seeded_rng, SimRng};
use crate::{Error, Result};

/// MAC scheduler configuration. Integer codes 0..=4 are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerOption {
    #[serde(rename = "EQUAL_RATE")]
    EqualRate,
    #[serde(rename = "PROPORTIONAL_FAIR_HIGH")]
    ProportionalFairHigh,
    #[serde(rename = "PROPORTIONAL_FAIR_MEDIUM")]
    ProportionalFairMedium,
    #[serde(rename = "PROPORTIONAL_FAIR_LOW")]
    ProportionalFairLow,
    #[serde(rename = "MAXIMUM_C_OVER_I")]
    MaximumCOverI,
}

impl SchedulerOption {
    pub const COUNT: usize = 5;

    pub const ALL: [SchedulerOption; Self::COUNT] = [
        SchedulerOption::EqualRate,
        SchedulerOption::ProportionalFairHigh,
        SchedulerOption::ProportionalFairMedium,
        SchedulerOption::ProportionalFairLow,
        SchedulerOption::MaximumCOverI,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("scheduler code {code} not in 0..5")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SchedulerOption::EqualRate => "EQUAL_RATE",
            SchedulerOption::ProportionalFairHigh => "PROPORTIONAL_FAIR_HIGH",
            SchedulerOption::ProportionalFairMedium => "PROPORTIONAL_FAIR_MEDIUM",
            SchedulerOption::ProportionalFairLow => "PROPORTIONAL_FAIR_LOW",
            SchedulerOption::MaximumCOverI => "MAXIMUM_C_OVER_I",
        }
    }

    /// Exponent on the average rate in the PF metric `eff / avg^alpha`.
    /// Higher means fairer.
    pub fn fairness_exponent(self) -> Option<f64> {
        match self {
            SchedulerOption::ProportionalFairHigh => Some(1.5),
            SchedulerOption::ProportionalFairMedium => Some(1.0),
            SchedulerOption::ProportionalFairLow => Some(0.5),
            _ => None,
        }
    }
}

impl fmt::Display for SchedulerOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheduler option `{s}`")))
    }
}

/// Traffic and RF profile of one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeProfile {
    pub rsrp_dbm: f64,
    /// Mean demand, megabits per tick.
    pub demand_mean: f64,
    /// Demand standard deviation, megabits per tick.
    pub demand_std: f64,
}

impl UeProfile {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(RSRP_MIN_DBM..=RSRP_MAX_DBM).contains(&self.rsrp_dbm) {
            return Err(format!(
                "rsrp_dbm {} outside [{RSRP_MIN_DBM}, {RSRP_MAX_DBM}]",
                self.rsrp_dbm
            ));
        }
        if !(self.demand_mean.is_finite() && self.demand_mean >= 0.0) {
            return Err(format!("demand_mean {} must be finite and >= 0", self.demand_mean));
        }
        if !(self.demand_std.is_finite() && self.demand_std >= 0.0) {
            return Err(format!("demand_std {} must be finite and >= 0", self.demand_std));
        }
        Ok(())
    }
}

/// The four lab UEs: RSRP -115/-110/-105/-94 dBm.
pub fn default_profiles() -> Vec<UeProfile> {
    [(-115.0, 700.0), (-110.0, 900.0), (-105.0, 1100.0), (-94.0, 1400.0)]
        .into_iter()
        .map(|(rsrp_dbm, demand_mean)| UeProfile {
            rsrp_dbm,
            demand_mean,
            demand_std: 0.4 * demand_mean,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub prb_budget: u32,
    /// Megabits one PRB carries over a tick at 1 bit/s/Hz (180 kHz x 60 s).
    pub prb_bits_mb: f64,
    pub tick_seconds: f64,
    /// EMA weight of the newest sample in the PF average.
    pub pf_ema: f64,
    pub pf_floor_mbps: f64,
    /// Per-tick RSRP jitter standard deviation, dB. Zero disables RF dynamics.
    pub sigma_rf_db: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            prb_budget: 100,
            prb_bits_mb: 10.8,
            tick_seconds: 60.0,
            pf_ema: 0.2,
            pf_floor_mbps: 0.01,
            sigma_rf_db: 1.0,
        }
    }
}

impl SimConfig {
    /// Cell throughput with every PRB at peak efficiency, Mbps.
    pub fn peak_throughput_mbps(&self) -> f64 {
        self.peak_volume_mb() / self.tick_seconds
    }

    /// Volume served in one tick with every PRB at peak efficiency, megabits.
    pub fn peak_volume_mb(&self) -> f64 {
        self.prb_budget as f64 * MAX_EFFICIENCY * self.prb_bits_mb
    }

    /// Returns the offending key (relative to `[sim]`) and reason.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.prb_budget == 0 {
            return Err(("prb_budget", "must be positive".into()));
        }
        let positive = [
            ("prb_bits_mb", self.prb_bits_mb),
            ("tick_seconds", self.tick_seconds),
            ("pf_floor_mbps", self.pf_floor_mbps),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err((key, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.pf_ema > 0.0 && self.pf_ema <= 1.0) {
            return Err(("pf_ema", format!("must be in (0, 1], got {}", self.pf_ema)));
        }
        if !(self.sigma_rf_db.is_finite() && self.sigma_rf_db >= 0.0) {
            return Err((
                "sigma_rf_db",
                format!("must be finite and >= 0, got {}", self.sigma_rf_db),
            ));
        }
        Ok(())
    }
}

// Downlink budget behind the timing-advance proxy: 46 dBm over 1200 REs and a
// 128.1 + 37.6 log10(d_km) macro path loss.
const RE_POWER_DBM: f64 = 15.2;

/// Distance (metres) implied by a nominal RSRP under the macro path-loss model.
pub fn distance_from_rsrp(rsrp_dbm: f64) -> f64 {
    1000.0 * 10f64.powf((RE_POWER_DBM - rsrp_dbm - 128.1) / 37.6)
}

/// Simulator truth for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub tick_index: u64,
    /// Backlog per UE, megabits.
    pub ue_queues: Vec<f64>,
    /// RSRP in effect for the current tick, dBm.
    pub ue_rsrp: Vec<f64>,
    /// EMA of served rate per UE, Mbps; floored at `pf_floor_mbps`.
    pub pf_avg_throughput: Vec<f64>,
    pub last_allocation: Vec<u32>,
    /// Fixed per-UE distance used for timing-advance KPIs, metres.
    pub ue_distance_m: Vec<f64>,
    pub rng: SimRng,
}

impl CellState {
    pub fn new(profiles: &[UeProfile], cfg: &SimConfig, seed: u64) -> Self {
        let n = profiles.len();
        Self {
            tick_index: 0,
            ue_queues: vec![0.0; n],
            ue_rsrp: profiles.iter().map(|p| p.rsrp_dbm).collect(),
            pf_avg_throughput: vec![cfg.pf_floor_mbps; n],
            last_allocation: vec![0; n],
            ue_distance_m: profiles.iter().map(|p| distance_from_rsrp(p.rsrp_dbm)).collect(),
            rng: seeded_rng(seed),
        }
    }

    pub fn num_ues(&self) -> usize {
        self.ue_queues.len()
    }

    /// Advances one tick: demand, RF jitter, scheduling, service, PF update.
    ///
    /// Random draws happen before scheduling and never depend on `option`, so
    /// two runs from the same state see the same demand and RF regardless of
    /// the actions taken.
    pub fn step(
        &mut self,
        option: SchedulerOption,
        profiles: &[UeProfile],
        rest: bool,
        cfg: &SimConfig,
    ) -> Result<TickObservables> {
        let n = self.num_ues();
        if profiles.len() != n {
            return Err(Error::Shape(format!("{} profiles for {n} UEs", profiles.len())));
        }

        let demands = generate_demands(profiles, rest, &mut self.rng);
        for (rsrp, p) in self.ue_rsrp.iter_mut().zip(profiles) {
            let jitter = if cfg.sigma_rf_db > 0.0 {
                let z: f64 = self.rng.sample(StandardNormal);
                cfg.sigma_rf_db * z
            } else {
                0.0
            };
            *rsrp = (p.rsrp_dbm + jitter).clamp(RSRP_MIN_DBM, RSRP_MAX_DBM);
        }
        let efficiencies = self
            .ue_rsrp
            .iter()
            .map(|&r| spectral_efficiency(r))
            .collect::<Result<Vec<_>>>()?;

        let allocation = schedule_prbs(option, self, &demands, cfg.prb_budget, cfg.prb_bits_mb)?;

        let mut served = vec![0.0; n];
        let mut active = vec![false; n];
        for i in 0..n {
            let available = self.ue_queues[i] + demands[i];
            active[i] = available > 0.0;
            served[i] = available.min(allocation[i] as f64 * efficiencies[i] * cfg.prb_bits_mb);
            self.ue_queues[i] = (available - served[i]).max(0.0);
        }
        let throughput: Vec<f64> = served.iter().map(|s| s / cfg.tick_seconds).collect();
        for (avg, &t) in self.pf_avg_throughput.iter_mut().zip(&throughput) {
            *avg = ((1.0 - cfg.pf_ema) * *avg + cfg.pf_ema * t).max(cfg.pf_floor_mbps);
        }
        self.last_allocation = allocation.clone();
        self.tick_index += 1;

        let used: u32 = allocation.iter().sum();
        let cell_throughput: f64 = throughput.iter().sum();
        Ok(TickObservables {
            ue_served_mb: served,
            cell_throughput_mbps: cell_throughput,
            cell_spectral_efficiency: cell_throughput * cfg.tick_seconds / (cfg.prb_budget as f64 * cfg.prb_bits_mb),
            ue_throughput_mbps: throughput,
            ue_efficiency: efficiencies,
            ue_rsrp_dbm: self.ue_rsrp.clone(),
            ue_distance_m: self.ue_distance_m.clone(),
            ue_demand_mb: demands,
            ue_queue_mb: self.ue_queues.clone(),
            active_ue_count: active.iter().filter(|a| **a).count(),
            ue_active: active,
            prb_utilization: used as f64 / cfg.prb_budget as f64,
            allocation,
            prb_budget: cfg.prb_budget,
        })
    }
}

/// Measurements produced by one tick; the raw material of KPIs and rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickObservables {
    pub ue_served_mb: Vec<f64>,
    pub ue_throughput_mbps: Vec<f64>,
    /// Sum of UE throughputs.
    pub cell_throughput_mbps: f64,
    /// Cell throughput over the whole carrier bandwidth, bits/s/Hz.
    pub cell_spectral_efficiency: f64,
    /// Per-UE spectral efficiency this tick, bits/s/Hz.
    pub ue_efficiency: Vec<f64>,
    pub ue_rsrp_dbm: Vec<f64>,
    pub ue_distance_m: Vec<f64>,
    /// New demand that arrived this tick.
    pub ue_demand_mb: Vec<f64>,
    /// Backlog left after service.
    pub ue_queue_mb: Vec<f64>,
    /// UE had backlog or demand this tick.
    pub ue_active: Vec<bool>,
    pub active_ue_count: usize,
    pub allocation: Vec<u32>,
    pub prb_budget: u32,
    pub prb_utilization: f64,
}

impl TickObservables {
    /// An idle tick: nothing demanded, nothing served.
    pub fn idle(num_ues: usize, prb_budget: u32) -> Self {
        Self {
            ue_served_mb: vec![0.0; num_ues],
            ue_throughput_mbps: vec![0.0; num_ues],
            cell_throughput_mbps: 0.0,
            cell_spectral_efficiency: 0.0,
            ue_efficiency: vec![0.0; num_ues],
            ue_rsrp_dbm: vec![RSRP_MIN_DBM; num_ues],
            ue_distance_m: vec![0.0; num_ues],
            ue_demand_mb: vec![0.0; num_ues],
            ue_queue_mb: vec![0.0; num_ues],
            ue_active: vec![false; num_ues],
            active_ue_count: 0,
            allocation: vec![0; num_ues],
            prb_budget,
            prb_utilization: 0.0,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.ue_throughput_mbps.len()
    }

    /// Throughputs of active UEs, in UE order.
    pub fn active_throughputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.ue_throughput_mbps
            .iter()
            .zip(&self.ue_active)
            .filter(|(_, a)| **a)
            .map(|(t, _)| *t)
    }

    /// Max minus min throughput over active UEs; 0 when none are active.
    pub fn ue_throughput_gap(&self) -> f64 {
        let (lo, hi) = self
            .active_throughputs()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn worst_ue_throughput(&self) -> f64 {
        let worst = self.active_throughputs().fold(f64::INFINITY, f64::min);
        if worst.is_finite() {
            worst
        } else {
            0.0
        }
    }

    /// Harmonic mean over active UEs; 0 if any active UE got nothing.
    pub fn harmonic_ue_throughput(&self) -> f64 {
        let mut n = 0usize;
        let mut inv = 0.0;
        for t in self.active_throughputs() {
            if t <= 0.0 {
                return 0.0;
            }
            n += 1;
            inv += 1.0 / t;
        }
        if n == 0 {
            0.0
        } else {
            n as f64 / inv
        }
    }
}
