//! State composition and rewards.
//!
//! A state is 58 KPIs, each min-max normalized by the manifest bounds and
//! clipped to `[0, 1]`. CCE utilization, RSRQ and timing advance have no
//! simulator ground truth and are deterministic proxies built from PRB
//! utilization, SINR and the fixed UE distances.

mod manifest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use manifest::{sha256_hex, KpiManifest, ManifestEntry, CQI_BINS, GROUPS, RSRP_BINS, RSRQ_BINS, TA_BINS};

use crate::ransim::{sinr_db, SchedulerOption, SimConfig, TickObservables, MAX_EFFICIENCY};
use crate::{Error, Result};

pub const KPI_DIM: usize = 58;
pub const MANIFEST_VERSION: &str = "kpi-v1";

/// LTE 4-bit CQI table efficiencies (bits/s/Hz) for CQI 1..=15.
pub const CQI_EFFICIENCY: [f64; CQI_BINS] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152,
    5.5547,
];

/// Lower edges of RSRP bins 1..=7; bin 0 is everything below -117.5 dBm.
pub const RSRP_EDGES_DBM: [f64; RSRP_BINS - 1] = [-117.5, -112.5, -107.5, -102.5, -97.5, -92.5, -87.5];
pub const RSRQ_EDGES_DB: [f64; RSRQ_BINS - 1] = [-19.0, -16.0, -13.0, -11.0, -9.0, -7.0, -5.0];
pub const TA_EDGES_M: [f64; TA_BINS - 1] = [250.0, 500.0, 1000.0, 1500.0, 2000.0, 3000.0, 5000.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpiVector {
    values: [f64; KPI_DIM],
}

impl KpiVector {
    /// Validates length and range; used for states coming from files.
    pub fn new(values: &[f64]) -> Result<Self> {
        let values: [f64; KPI_DIM] = values
            .try_into()
            .map_err(|_| Error::Shape(format!("state has {} entries, expected {KPI_DIM}", values.len())))?;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("state entry {i} = {v} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        Self { values: [0.0; KPI_DIM] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn manifest_version(&self) -> &'static str {
        MANIFEST_VERSION
    }
}

/// A clipped reward in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Reward(f64);

impl Reward {
    /// Clips `raw` into `[-1, 1]`; NaN maps to 0.
    pub fn clipped(raw: f64) -> Self {
        if raw.is_nan() {
            Reward(0.0)
        } else {
            Reward(raw.clamp(-1.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Reward> for f64 {
    fn from(r: Reward) -> f64 {
        r.0
    }
}

impl TryFrom<f64> for Reward {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        if (-1.0..=1.0).contains(&v) {
            Ok(Reward(v))
        } else {
            Err(Error::InvalidArgument(format!("reward {v} outside [-1, 1]")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    CellThroughput,
    SpectrumEfficiency,
    UeGap,
}

impl RewardMode {
    pub fn name(self) -> &'static str {
        match self {
            RewardMode::CellThroughput => "cell_throughput",
            RewardMode::SpectrumEfficiency => "spectrum_efficiency",
            RewardMode::UeGap => "ue_gap",
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            RewardMode::CellThroughput,
            RewardMode::SpectrumEfficiency,
            RewardMode::UeGap,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown reward mode `{s}`")))
    }
}

/// Normalizers for the raw reward quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBounds {
    pub throughput_mbps: f64,
    pub spectral_efficiency: f64,
}

impl RewardBounds {
    pub fn for_sim(sim: &SimConfig) -> Self {
        Self {
            throughput_mbps: sim.peak_throughput_mbps(),
            spectral_efficiency: MAX_EFFICIENCY,
        }
    }
}

/// Throughput-family reward. `UeGap` is not a throughput mode and is rejected.
pub fn reward_throughput(obs: &TickObservables, mode: RewardMode, bounds: &RewardBounds) -> Result<Reward> {
    match mode {
        RewardMode::CellThroughput => Ok(Reward::clipped(obs.cell_throughput_mbps / bounds.throughput_mbps)),
        RewardMode::SpectrumEfficiency => Ok(Reward::clipped(
            obs.cell_spectral_efficiency / bounds.spectral_efficiency,
        )),
        RewardMode::UeGap => Err(Error::InvalidArgument("ue_gap is not a throughput reward mode".into())),
    }
}

/// `(min - max)` active-UE throughput over `bound_mbps`; 0 with no active UE.
pub fn reward_ue_gap(obs: &TickObservables, bound_mbps: f64) -> Reward {
    Reward::clipped(-obs.ue_throughput_gap() / bound_mbps)
}

pub fn reward(obs: &TickObservables, mode: RewardMode, bounds: &RewardBounds) -> Result<Reward> {
    match mode {
        RewardMode::UeGap => Ok(reward_ue_gap(obs, bounds.throughput_mbps)),
        m => reward_throughput(obs, m, bounds),
    }
}

/// CQI (1..=15) reported for a spectral efficiency: the highest table entry not
/// above it, floored at 1.
pub fn cqi_index(efficiency: f64) -> usize {
    CQI_EFFICIENCY.iter().take_while(|&&e| e <= efficiency).count().max(1)
}

/// RSRQ proxy in dB from SINR and PRB utilization: RSRQ = RSRP / (RSSI / 12),
/// with RSSI made of two reference REs, `10u` loaded data REs and the noise
/// plus interference floor implied by the SINR.
pub fn rsrq_proxy_db(sinr_db: f64, prb_utilization: f64) -> f64 {
    let sinr = 10f64.powf(sinr_db / 10.0);
    -10.0 * (2.0 + 10.0 * prb_utilization + 12.0 / sinr).log10()
}

fn bin(value: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| e <= value).count()
}

/// Raw (unnormalized) KPI values in manifest order.
pub fn raw_kpis(
    obs: &TickObservables,
    prev_action: SchedulerOption,
    step_in_episode: usize,
    rest: bool,
) -> [f64; KPI_DIM] {
    let mut raw = [0.0; KPI_DIM];
    let n = obs.num_ues();
    let active: Vec<usize> = (0..n).filter(|&i| obs.ue_active[i]).collect();
    let u = obs.prb_utilization;
    let used = obs.allocation.iter().sum::<u32>();

    raw[0] = obs.cell_throughput_mbps;
    raw[1] = if active.is_empty() {
        0.0
    } else {
        active.iter().map(|&i| obs.ue_efficiency[i]).sum::<f64>() / active.len() as f64
    };
    raw[2] = u;
    raw[3] = 1.0 - (1.0 - u) * (1.0 - u);
    raw[4] = if used == 0 {
        0.0
    } else {
        obs.cell_throughput_mbps / used as f64
    };
    raw[5] = active.len() as f64;
    raw[6] = obs.harmonic_ue_throughput();
    raw[7] = obs.worst_ue_throughput();
    raw[8] = obs.ue_throughput_gap();
    raw[9] = if n == 0 {
        0.0
    } else {
        obs.ue_queue_mb.iter().sum::<f64>() / n as f64
    };
    raw[10] = obs.ue_served_mb.iter().sum();
    raw[11] = obs.ue_demand_mb.iter().sum();

    let cqi = 12;
    let rsrp = cqi + CQI_BINS;
    let rsrq = rsrp + RSRP_BINS;
    let ta = rsrq + RSRQ_BINS;
    let action = ta + TA_BINS;
    let phase = action + SchedulerOption::COUNT;
    for &i in &active {
        raw[cqi + cqi_index(obs.ue_efficiency[i]) - 1] += 1.0;
        raw[rsrp + bin(obs.ue_rsrp_dbm[i], &RSRP_EDGES_DBM)] += 1.0;
        raw[rsrq + bin(rsrq_proxy_db(sinr_db(obs.ue_rsrp_dbm[i]), u), &RSRQ_EDGES_DB)] += 1.0;
        raw[ta + bin(obs.ue_distance_m[i], &TA_EDGES_M)] += 1.0;
    }
    raw[action + prev_action.code()] = 1.0;
    raw[phase] = step_in_episode as f64;
    raw[phase + 1] = if rest { 1.0 } else { 0.0 };
    raw
}

/// Normalizes raw KPIs against a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiComposer {
    manifest: KpiManifest,
    steps_demand: usize,
}

impl KpiComposer {
    /// `steps_demand` marks where the rest phase of an episode begins.
    pub fn new(manifest: KpiManifest, steps_demand: usize) -> Self {
        Self { manifest, steps_demand }
    }

    pub fn manifest(&self) -> &KpiManifest {
        &self.manifest
    }

    pub fn compose(&self, obs: &TickObservables, prev_action: SchedulerOption, step_in_episode: usize) -> KpiVector {
        let raw = raw_kpis(obs, prev_action, step_in_episode, step_in_episode >= self.steps_demand);
        let mut values = [0.0; KPI_DIM];
        for (i, (v, r)) in values.iter_mut().zip(raw).enumerate() {
            let (lo, hi) = self.manifest.bounds(i);
            let x = (r - lo) / (hi - lo);
            *v = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        }
        KpiVector { values }
    }
}
