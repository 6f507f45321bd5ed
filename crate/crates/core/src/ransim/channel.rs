//! RSRP to spectral-efficiency mapping.
//!
//! SINR is modelled as `rsrp + 121 dB`, clamped to [-6, 22] dB, then fed into a
//! truncated Shannon bound `min(0.6 * log2(1 + sinr), 4.8)` bits/s/Hz.

use crate::{Error, Result};

pub const RSRP_MIN_DBM: f64 = -140.0;
pub const RSRP_MAX_DBM: f64 = -40.0;

const SINR_OFFSET_DB: f64 = 121.0;
const SINR_MIN_DB: f64 = -6.0;
const SINR_MAX_DB: f64 = 22.0;
const SHANNON_SCALE: f64 = 0.6;

/// Upper bound of [`spectral_efficiency`], bits/s/Hz.
pub const MAX_EFFICIENCY: f64 = 4.8;

/// Clamped SINR in dB for an RSRP reading. No range check.
pub fn sinr_db(rsrp_dbm: f64) -> f64 {
    (rsrp_dbm + SINR_OFFSET_DB).clamp(SINR_MIN_DB, SINR_MAX_DB)
}

pub fn spectral_efficiency(rsrp_dbm: f64) -> Result<f64> {
    if !(RSRP_MIN_DBM..=RSRP_MAX_DBM).contains(&rsrp_dbm) {
        return Err(Error::InvalidArgument(format!(
            "rsrp {rsrp_dbm} dBm outside [{RSRP_MIN_DBM}, {RSRP_MAX_DBM}]"
        )));
    }
    let sinr_linear = 10f64.powf(sinr_db(rsrp_dbm) / 10.0);
    Ok((SHANNON_SCALE * (1.0 + sinr_linear).log2()).min(MAX_EFFICIENCY))
}
