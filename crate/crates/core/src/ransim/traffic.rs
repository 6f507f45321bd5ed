//! Traffic synthesis: k-means profile fitting over historical sessions and
//! per-tick truncated-Normal demand draws.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{UeProfile, RSRP_MAX_DBM, RSRP_MIN_DBM};
use crate::seed::seeded_rng;
use crate::{Error, Result};

const MAX_LLOYD_ITERATIONS: usize = 100;

/// One historical session: RF condition and RRC traffic volume (megabits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficRecord {
    pub rsrp_dbm: f64,
    pub rrc_volume_mb: f64,
}

/// Reads a `rsrp_dbm,rrc_volume_mb` CSV.
pub fn read_traffic_records(path: &Path) -> Result<Vec<TrafficRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["rsrp_dbm", "rrc_volume_mb"] {
        return Err(Error::MalformedRecord {
            index: 0,
            reason: format!(
                "expected header `rsrp_dbm,rrc_volume_mb`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(index, row)| {
            row.map_err(|e| Error::MalformedRecord {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Draws one tick of demand (megabits) per UE.
///
/// Each draw is `Normal(mean, std^2)` clamped at zero. During rest every demand is
/// zero and no randomness is consumed.
pub fn generate_demands<R: Rng + ?Sized>(profiles: &[UeProfile], rest: bool, rng: &mut R) -> Vec<f64> {
    if rest {
        return vec![0.0; profiles.len()];
    }
    profiles
        .iter()
        .map(|p| {
            let z: f64 = rng.sample(StandardNormal);
            (p.demand_mean + p.demand_std * z).max(0.0)
        })
        .collect()
}

/// Clusters sessions on standardized (rsrp, volume) with Lloyd's algorithm and
/// returns one profile per cluster, sorted by RSRP ascending.
///
/// Centers start from a seeded k-means++ draw; iteration stops at an assignment
/// fixpoint or after 100 rounds. `demand_std` is the within-cluster sample
/// standard deviation of volume (0 for singleton clusters).
pub fn fit_traffic_profiles(records: &[TrafficRecord], k: usize, seed: u64) -> Result<Vec<UeProfile>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no traffic records".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    for (index, r) in records.iter().enumerate() {
        if !(RSRP_MIN_DBM..=RSRP_MAX_DBM).contains(&r.rsrp_dbm)
            || !(r.rrc_volume_mb.is_finite() && r.rrc_volume_mb >= 0.0)
        {
            return Err(Error::MalformedRecord {
                index,
                reason: format!("rsrp {} dBm / volume {} Mb out of range", r.rsrp_dbm, r.rrc_volume_mb),
            });
        }
    }
    let distinct = count_distinct(records);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {distinct} distinct records"
        )));
    }

    let points = standardize(records);
    let mut centers = kmeans_pp_init(&points, k, seed);
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (p, slot) in points.iter().zip(assignment.iter_mut()) {
            let nearest = nearest_center(p, &centers);
            if *slot != nearest {
                *slot = nearest;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        for c in 0..k {
            // An emptied cluster keeps its previous center.
            if counts[c] > 0 {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
    }

    let mut profiles: Vec<UeProfile> = (0..k)
        .filter_map(|c| {
            let members: Vec<&TrafficRecord> = records
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                return None;
            }
            let n = members.len() as f64;
            let rsrp = members.iter().map(|r| r.rsrp_dbm).sum::<f64>() / n;
            let mean = members.iter().map(|r| r.rrc_volume_mb).sum::<f64>() / n;
            let std = if members.len() > 1 {
                let ss: f64 = members.iter().map(|r| (r.rrc_volume_mb - mean).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Some(UeProfile {
                rsrp_dbm: rsrp,
                demand_mean: mean,
                demand_std: std,
            })
        })
        .collect();
    if profiles.len() < k {
        return Err(Error::InvalidArgument(format!(
            "k-means left {} of {k} clusters empty",
            k - profiles.len()
        )));
    }
    profiles.sort_by(|a, b| {
        a.rsrp_dbm
            .total_cmp(&b.rsrp_dbm)
            .then(a.demand_mean.total_cmp(&b.demand_mean))
    });
    Ok(profiles)
}

fn count_distinct(records: &[TrafficRecord]) -> usize {
    let mut keys: Vec<(u64, u64)> = records
        .iter()
        // +0.0 normalizes -0.0 so both zeros compare equal.
        .map(|r| ((r.rsrp_dbm + 0.0).to_bits(), (r.rrc_volume_mb + 0.0).to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn standardize(records: &[TrafficRecord]) -> Vec<[f64; 2]> {
    let n = records.len() as f64;
    let column = |f: fn(&TrafficRecord) -> f64| {
        let mean = records.iter().map(f).sum::<f64>() / n;
        let var = records.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        (mean, scale)
    };
    let (m0, s0) = column(|r| r.rsrp_dbm);
    let (m1, s1) = column(|r| r.rrc_volume_mb);
    records
        .iter()
        .map(|r| [(r.rsrp_dbm - m0) / s0, (r.rrc_volume_mb - m1) / s1])
        .collect()
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest_center(p: &[f64; 2], centers: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = dist2(p, &centers[0]);
    for (i, c) in centers.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn kmeans_pp_init(points: &[[f64; 2]], k: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = seeded_rng(seed);
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        // total > 0 holds while fewer than `distinct` centers are placed.
        let mut target = rng.random::<f64>() * total;
        let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            if target < d {
                chosen = i;
                break;
            }
            target -= d;
        }
        let c = points[chosen];
        centers.push(c);
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(dist2(p, &c));
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::seeded_rng;

    fn rec(rsrp: f64, vol: f64) -> TrafficRecord {
        TrafficRecord {
            rsrp_dbm: rsrp,
            rrc_volume_mb: vol,
        }
    }

    #[test]
    fn one_record_per_cluster() {
        let records = [
            rec(-94.0, 40.0),
            rec(-115.0, 10.0),
            rec(-105.0, 30.0),
            rec(-110.0, 20.0),
        ];
        let profiles = fit_traffic_profiles(&records, 4, 3).unwrap();
        let rsrp: Vec<f64> = profiles.iter().map(|p| p.rsrp_dbm).collect();
        assert_eq!(rsrp, vec![-115.0, -110.0, -105.0, -94.0]);
        let means: Vec<f64> = profiles.iter().map(|p| p.demand_mean).collect();
        assert_eq!(means, vec![10.0, 20.0, 30.0, 40.0]);
        assert!(profiles.iter().all(|p| p.demand_std == 0.0));
    }

    #[test]
    fn identical_records_single_cluster() {
        let records = vec![rec(-100.0, 12.5); 7];
        let profiles = fit_traffic_profiles(&records, 1, 0).unwrap();
        assert_eq!(
            profiles,
            vec![UeProfile {
                rsrp_dbm: -100.0,
                demand_mean: 12.5,
                demand_std: 0.0
            }]
        );
    }

    #[test]
    fn errors_on_empty_and_too_many_clusters() {
        assert!(fit_traffic_profiles(&[], 4, 0).is_err());
        let records = vec![rec(-100.0, 1.0), rec(-100.0, 1.0), rec(-90.0, 2.0)];
        assert!(fit_traffic_profiles(&records, 3, 0).is_err());
        assert!(fit_traffic_profiles(&records, 2, 0).is_ok());
    }

    #[test]
    fn recovers_separated_blobs() {
        // Four blobs, 100 points each; volume sigma 5 Mb, rsrp sigma 1 dB.
        let truth = [(-115.0, 100.0), (-110.0, 300.0), (-105.0, 500.0), (-94.0, 700.0)];
        let sigma = 5.0;
        let mut rng = seeded_rng(2024);
        let mut records = Vec::new();
        for &(rsrp, vol) in &truth {
            for _ in 0..100 {
                let zr: f64 = rng.sample(StandardNormal);
                let zv: f64 = rng.sample(StandardNormal);
                records.push(rec(rsrp + zr, vol + sigma * zv));
            }
        }
        let profiles = fit_traffic_profiles(&records, 4, 11).unwrap();
        let tol = 3.0 * sigma / 10.0;
        for (p, &(_, vol)) in profiles.iter().zip(&truth) {
            assert!((p.demand_mean - vol).abs() < tol, "{} vs {vol}", p.demand_mean);
            assert!((p.demand_std - sigma).abs() < 2.0);
        }
    }

    #[test]
    fn zero_variance_demand_is_exact() {
        let profiles = [UeProfile {
            rsrp_dbm: -100.0,
            demand_mean: 42.0,
            demand_std: 0.0,
        }];
        let mut rng = seeded_rng(1);
        assert_eq!(generate_demands(&profiles, false, &mut rng), vec![42.0]);
    }

    #[test]
    fn rest_demands_are_zero() {
        let profiles = [UeProfile {
            rsrp_dbm: -100.0,
            demand_mean: 42.0,
            demand_std: 9.0,
        }; 4];
        let mut rng = seeded_rng(1);
        assert_eq!(generate_demands(&profiles, true, &mut rng), vec![0.0; 4]);
    }

    #[test]
    fn sample_mean_converges() {
        let profiles = [UeProfile {
            rsrp_dbm: -100.0,
            demand_mean: 10.0,
            demand_std: 2.0,
        }];
        let mut rng = seeded_rng(99);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| generate_demands(&profiles, false, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        // Truncation at 0 sits 5 sigma below the mean; its bias is negligible.
        assert!((mean - 10.0).abs() < 3.0 * 2.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn demands_never_negative() {
        let profiles = [UeProfile {
            rsrp_dbm: -100.0,
            demand_mean: 0.5,
            demand_std: 5.0,
        }];
        let mut rng = seeded_rng(5);
        for _ in 0..1000 {
            assert!(generate_demands(&profiles, false, &mut rng)[0] >= 0.0);
        }
    }
}
