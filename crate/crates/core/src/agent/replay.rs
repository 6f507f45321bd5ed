//! Time-ordered experience replay with contiguous same-episode segments.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use crate::kpi::{KpiVector, Reward, KPI_DIM};
use crate::ransim::SchedulerOption;
use crate::{Error, Result};

pub const REPLAY_CAPACITY: usize = 5000;

/// One transition `(S_t, A_t, R_{t+1}, S_{t+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: KpiVector,
    pub action: SchedulerOption,
    pub reward: Reward,
    pub next_state: KpiVector,
    pub episode_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::with_capacity(REPLAY_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Experience> {
        self.items.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Experience> {
        self.items.get(index)
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(exp);
    }

    /// Appends time-ordered historical records; only the newest `capacity` survive.
    pub fn preload(&mut self, records: impl IntoIterator<Item = Experience>) {
        for r in records {
            self.push(r);
        }
    }

    /// Largest episode id present, if any.
    pub fn max_episode_id(&self) -> Option<u64> {
        self.items.iter().map(|e| e.episode_id).max()
    }

    /// Start indices of every run of `n_step` consecutive entries that share one
    /// episode id.
    pub fn valid_starts(&self, n_step: usize) -> Vec<usize> {
        if n_step == 0 || self.items.len() < n_step {
            return Vec::new();
        }
        let mut starts = Vec::new();
        let mut run = 0usize;
        let mut prev: Option<u64> = None;
        for (i, e) in self.items.iter().enumerate() {
            run = if prev == Some(e.episode_id) { run + 1 } else { 1 };
            prev = Some(e.episode_id);
            if run >= n_step {
                starts.push(i + 1 - n_step);
            }
        }
        starts
    }

    /// Draws `batch` segment start indices uniformly, with replacement.
    pub fn sample_starts<R: Rng + ?Sized>(&self, n_step: usize, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        let starts = self.valid_starts(n_step);
        if starts.is_empty() {
            return Err(Error::NoValidSegment(format!(
                "{} buffered experiences hold no run of {n_step} from one episode",
                self.items.len()
            )));
        }
        Ok((0..batch).map(|_| starts[rng.random_range(0..starts.len())]).collect())
    }

    pub fn segment(&self, start: usize, n_step: usize) -> Vec<Experience> {
        self.items.range(start..start + n_step).cloned().collect()
    }

    pub fn sample_segments<R: Rng + ?Sized>(
        &self,
        n_step: usize,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<Experience>>> {
        Ok(self
            .sample_starts(n_step, batch, rng)?
            .into_iter()
            .map(|s| self.segment(s, n_step))
            .collect())
    }
}

fn experience_header() -> Vec<String> {
    let mut h = vec!["episode_id".to_string(), "action_code".into(), "reward".into()];
    h.extend((0..KPI_DIM).map(|i| format!("s_{i}")));
    h.extend((0..KPI_DIM).map(|i| format!("sn_{i}")));
    h
}

/// Reads `episode_id,action_code,reward,s_0..s_57,sn_0..sn_57` rows. A malformed
/// row is reported by its zero-based record index.
pub fn read_experiences_csv(path: &Path) -> Result<Vec<Experience>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(experience_header().iter().map(String::as_str)) {
        return Err(Error::InvalidArgument(format!(
            "{}: header must be episode_id,action_code,reward,s_0..s_{last},sn_0..sn_{last}",
            path.display(),
            last = KPI_DIM - 1
        )));
    }
    let mut out = Vec::new();
    for (index, row) in reader.records().enumerate() {
        let bad = |reason: String| Error::MalformedRecord { index, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let episode_id: u64 = row[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("episode_id `{}`", &row[0])))?;
        let code: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("action_code `{}`", &row[1])))?;
        let action = SchedulerOption::from_code(code).map_err(|e| bad(e.to_string()))?;
        let reward: f64 = row[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("reward `{}`", &row[2])))?;
        let reward = Reward::try_from(reward).map_err(|e| bad(e.to_string()))?;
        let values = row
            .iter()
            .skip(3)
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("state value `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let state = KpiVector::new(&values[..KPI_DIM]).map_err(|e| bad(e.to_string()))?;
        let next_state = KpiVector::new(&values[KPI_DIM..]).map_err(|e| bad(e.to_string()))?;
        out.push(Experience {
            state,
            action,
            reward,
            next_state,
            episode_id,
        });
    }
    Ok(out)
}

pub fn write_experiences_csv<'a>(path: &Path, exps: impl IntoIterator<Item = &'a Experience>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(experience_header())?;
    for e in exps {
        let mut row = vec![
            e.episode_id.to_string(),
            e.action.code().to_string(),
            e.reward.value().to_string(),
        ];
        row.extend(
            e.state
                .as_slice()
                .iter()
                .chain(e.next_state.as_slice())
                .map(f64::to_string),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::seeded_rng;

    pub(crate) fn exp(episode_id: u64, tag: f64) -> Experience {
        let mut s = [0.0; KPI_DIM];
        s[0] = tag;
        Experience {
            state: KpiVector::new(&s).unwrap(),
            action: SchedulerOption::EqualRate,
            reward: Reward::clipped(tag),
            next_state: KpiVector::zeros(),
            episode_id,
        }
    }

    #[test]
    fn push_and_evict() {
        let mut b = ReplayBuffer::default();
        b.push(exp(0, 0.0));
        assert_eq!(b.len(), 1);
        let mut b = ReplayBuffer::default();
        for i in 0..5001u64 {
            b.push(exp(i, 0.0));
        }
        assert_eq!(b.len(), 5000);
        assert_eq!(b.get(0).unwrap().episode_id, 1);
        assert!(b.iter().map(|e| e.episode_id).eq(1..5001));
    }

    #[test]
    fn preload_keeps_newest() {
        let mut b = ReplayBuffer::default();
        b.preload(Vec::new());
        assert!(b.is_empty());
        b.preload((0..6000).map(|i| exp(i, 0.0)));
        assert!(b.iter().map(|e| e.episode_id).eq(1000..6000));
    }

    #[test]
    fn preload_then_push_keeps_time_order() {
        let mut b = ReplayBuffer::with_capacity(10);
        b.preload((0..7).map(|i| exp(i, 0.0)));
        for i in 7..12 {
            b.push(exp(i, 0.0));
        }
        assert!(b.iter().map(|e| e.episode_id).eq(2..12));
    }

    #[test]
    fn two_episodes_of_ten_give_sixteen_starts() {
        let mut b = ReplayBuffer::default();
        b.preload((0..20).map(|i| exp(i / 10, 0.0)));
        let starts = b.valid_starts(3);
        assert_eq!(starts, (0..8).chain(10..18).collect::<Vec<_>>());
        let mut rng = seeded_rng(0);
        for seg in b.sample_segments(3, 200, &mut rng).unwrap() {
            assert_eq!(seg.len(), 3);
            assert!(seg.iter().all(|e| e.episode_id == seg[0].episode_id));
        }
    }

    #[test]
    fn single_step_segments() {
        let mut b = ReplayBuffer::default();
        b.push(exp(3, 0.0));
        assert_eq!(b.valid_starts(1), vec![0]);
        assert!(matches!(
            b.sample_starts(2, 1, &mut seeded_rng(0)),
            Err(Error::NoValidSegment(_))
        ));
        assert!(ReplayBuffer::default().sample_starts(1, 1, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn csv_round_trip_and_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.csv");
        let exps: Vec<Experience> = (0..3).map(|i| exp(i, 0.25 * i as f64)).collect();
        write_experiences_csv(&path, &exps).unwrap();
        assert_eq!(read_experiences_csv(&path).unwrap(), exps);

        let text = std::fs::read_to_string(&path).unwrap();
        let broken = text.replacen("\n2,0,0.5", "\n2,9,0.5", 1);
        std::fs::write(&path, broken).unwrap();
        match read_experiences_csv(&path) {
            Err(Error::MalformedRecord { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }
}
