//! The frozen ordering and normalization bounds of the 58-entry state.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{KPI_DIM, MANIFEST_VERSION};
use crate::ransim::{SchedulerOption, SimConfig, MAX_EFFICIENCY};
use crate::{Error, Result};

pub const CQI_BINS: usize = 15;
pub const RSRP_BINS: usize = 8;
pub const RSRQ_BINS: usize = 8;
pub const TA_BINS: usize = 8;

/// Group sizes in manifest order; they sum to `KPI_DIM`.
pub const GROUPS: [(&str, usize); 7] = [
    ("cell", 12),
    ("cqi", CQI_BINS),
    ("rsrp", RSRP_BINS),
    ("rsrq", RSRQ_BINS),
    ("ta", TA_BINS),
    ("action", SchedulerOption::COUNT),
    ("phase", 2),
];

pub(super) const CELL_SCALARS: [&str; 12] = [
    "dl_cell_throughput_mbps",
    "mean_ue_spectral_efficiency",
    "prb_utilization",
    "cce_utilization_proxy",
    "cell_bitrate_per_prb_mbps",
    "active_ue_count",
    "harmonic_ue_throughput_mbps",
    "worst_ue_throughput_mbps",
    "ue_throughput_gap_mbps",
    "mean_queue_mb",
    "served_volume_mb",
    "demand_volume_mb",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub name: String,
    pub group: String,
    pub min_bound: f64,
    pub max_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiManifest {
    entries: Vec<ManifestEntry>,
}

fn canonical_names() -> Vec<(String, &'static str)> {
    let mut out: Vec<(String, &'static str)> = CELL_SCALARS.iter().map(|n| (n.to_string(), "cell")).collect();
    out.extend((1..=CQI_BINS).map(|c| (format!("cqi_{c:02}"), "cqi")));
    out.extend((0..RSRP_BINS).map(|b| (format!("rsrp_bin_{b}"), "rsrp")));
    out.extend((0..RSRQ_BINS).map(|b| (format!("rsrq_bin_{b}"), "rsrq")));
    out.extend((0..TA_BINS).map(|b| (format!("ta_bin_{b}"), "ta")));
    out.extend(
        SchedulerOption::ALL
            .iter()
            .map(|o| (format!("prev_action_{}", o.name().to_lowercase()), "action")),
    );
    out.push(("episode_step".into(), "phase"));
    out.push(("rest_flag".into(), "phase"));
    out
}

impl KpiManifest {
    /// Default bounds for a cell described by `sim` with `num_ues` UEs and
    /// episodes of `steps_per_episode` ticks.
    pub fn default_for(sim: &SimConfig, num_ues: usize, steps_per_episode: usize) -> Self {
        let peak_mbps = sim.peak_throughput_mbps();
        let peak_mb = sim.peak_volume_mb();
        let ues = num_ues as f64;
        let cell_max = [
            peak_mbps,
            MAX_EFFICIENCY,
            1.0,
            1.0,
            MAX_EFFICIENCY * sim.prb_bits_mb / sim.tick_seconds,
            ues,
            peak_mbps,
            peak_mbps,
            peak_mbps,
            4.0 * peak_mb,
            peak_mb,
            peak_mb,
        ];
        let entries = canonical_names()
            .into_iter()
            .enumerate()
            .map(|(index, (name, group))| {
                let max_bound = match group {
                    "cell" => cell_max[index],
                    "cqi" | "rsrp" | "rsrq" | "ta" => ues,
                    "phase" if name == "episode_step" => steps_per_episode as f64,
                    _ => 1.0,
                };
                ManifestEntry {
                    index,
                    name,
                    group: group.into(),
                    min_bound: 0.0,
                    max_bound,
                }
            })
            .collect();
        Self { entries }
    }

    pub fn version(&self) -> &'static str {
        MANIFEST_VERSION
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn bounds(&self, index: usize) -> (f64, f64) {
        let e = &self.entries[index];
        (e.min_bound, e.max_bound)
    }

    /// Checks ordering, names and bounds against the frozen layout.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self> {
        if entries.len() != KPI_DIM {
            return Err(Error::Manifest(format!(
                "expected {KPI_DIM} rows, found {}",
                entries.len()
            )));
        }
        for ((i, e), (name, group)) in entries.iter().enumerate().zip(canonical_names()) {
            if e.index != i || e.name != name || e.group != group {
                return Err(Error::Manifest(format!(
                    "row {i}: expected `{i},{name},{group}`, found `{},{},{}`",
                    e.index, e.name, e.group
                )));
            }
            if !(e.min_bound.is_finite() && e.max_bound.is_finite() && e.min_bound < e.max_bound) {
                return Err(Error::Manifest(format!(
                    "row {i} ({name}): bounds [{}, {}] must be finite with min < max",
                    e.min_bound, e.max_bound
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["index", "name", "group", "min_bound", "max_bound"] {
            return Err(Error::Manifest(format!(
                "unexpected header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let entries = r
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
        Self::from_entries(entries)
    }

    /// Loads a manifest file; when `expected_sha256` is given the file's digest
    /// must match it.
    pub fn load(path: &Path, expected_sha256: Option<&str>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let digest = sha256_hex(&bytes);
        if let Some(expected) = expected_sha256 {
            if !digest.eq_ignore_ascii_case(expected.trim()) {
                return Err(Error::Manifest(format!(
                    "{} has sha256 {digest}, config expects {expected}",
                    path.display()
                )));
            }
        }
        let text = String::from_utf8(bytes).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.to_csv_string().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
