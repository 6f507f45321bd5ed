//! Episodes, constant-action baselines, training runs and checkpoints.
//!
//! An episode is `steps_demand` ticks of traffic followed by `steps_rest` idle
//! ticks. Only demand ticks produce experiences, rewards and training calls.
//! Each episode starts from a fresh cell seeded by `episode_seed(seed, index)`,
//! so every policy evaluated at the same index faces the same demand and RF.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use crate::config::ExperimentConfig;

use crate::agent::{read_experiences_csv, write_experiences_csv, Agent, AgentConfig, Experience};
use crate::kpi::{self, KpiComposer, RewardBounds, RewardMode};
use crate::qnet::QNetParams;
use crate::ransim::{CellState, SchedulerOption, TickObservables, UeProfile};
use crate::seed::{self, episode_seed, seeded_rng};
use crate::{Error, Result};

/// `(mean, standard error)` with the `n - 1` sample deviation; a single value
/// has standard error 0.
pub fn episode_stats(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("statistics of an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub mean_reward: f64,
    pub stderr: f64,
    pub epsilon_end: f64,
    pub mean_td_error: f64,
}

/// Counters for one episode, beyond its result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpisodeCounters {
    pub ticks: usize,
    pub pushes: usize,
    pub train_calls: usize,
    pub rest_train_calls: usize,
}

/// Everything an episode needs besides the policy.
#[derive(Debug, Clone)]
pub struct Environment {
    pub cfg: ExperimentConfig,
    pub profiles: Vec<UeProfile>,
    pub composer: KpiComposer,
    pub bounds: RewardBounds,
}

impl Environment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let profiles = cfg.resolve_profiles()?;
        let composer = cfg.kpi_composer(profiles.len())?;
        Ok(Self {
            cfg: cfg.clone(),
            profiles,
            composer,
            bounds: cfg.reward_bounds(),
        })
    }

    pub fn reward_mode(&self) -> RewardMode {
        self.cfg.reward_mode
    }
}

pub enum Policy<'a> {
    Constant(SchedulerOption),
    /// Epsilon-greedy on the agent's online network. `epsilon` overrides the
    /// schedule; `train` pushes experiences and runs a training step per tick.
    Agent {
        agent: &'a mut Agent,
        train: bool,
        epsilon: Option<f64>,
        episode_id: u64,
    },
}

/// Runs one episode at `episode_index`.
pub fn run_episode(
    env: &Environment,
    policy: &mut Policy<'_>,
    episode_index: usize,
) -> Result<(EpisodeResult, EpisodeCounters)> {
    let cfg = &env.cfg;
    let mut cell = CellState::new(&env.profiles, &cfg.sim, episode_seed(cfg.seed, episode_index as u64));
    let mut rng = seeded_rng(seed::derive(agent_seed(cfg), 0x1000 + episode_index as u64));
    let mut counters = EpisodeCounters::default();
    let mut rewards = Vec::with_capacity(cfg.steps_demand);
    let mut td_sum = 0.0;

    let mut action = SchedulerOption::EqualRate;
    let mut state = env.composer.compose(
        &TickObservables::idle(env.profiles.len(), cfg.sim.prb_budget),
        action,
        0,
    );

    for t in 0..cfg.steps_demand {
        action = match policy {
            Policy::Constant(a) => *a,
            Policy::Agent { agent, epsilon, .. } => match epsilon {
                Some(e) => agent.act_with_epsilon(state.as_slice(), *e, &mut rng)?,
                None => agent.act(state.as_slice(), &mut rng)?,
            },
        };
        let obs = cell.step(action, &env.profiles, false, &cfg.sim)?;
        counters.ticks += 1;
        let reward = kpi::reward(&obs, cfg.reward_mode, &env.bounds)?;
        let next_state = env.composer.compose(&obs, action, t + 1);
        if let Policy::Agent {
            agent,
            train: true,
            episode_id,
            ..
        } = policy
        {
            agent.buffer.push(Experience {
                state,
                action,
                reward,
                next_state,
                episode_id: *episode_id,
            });
            counters.pushes += 1;
            match agent.train_step(&mut rng) {
                Ok(td) => {
                    td_sum += td;
                    counters.train_calls += 1;
                }
                Err(Error::NoValidSegment(_)) => {}
                Err(e) => return Err(e),
            }
        }
        rewards.push(reward.value());
        state = next_state;
    }
    // Rest: no demand, no experiences, no training; the last action stays in force.
    for _ in 0..cfg.steps_rest {
        cell.step(action, &env.profiles, true, &cfg.sim)?;
        counters.ticks += 1;
    }

    let (mean_reward, stderr) = episode_stats(&rewards)?;
    let epsilon_end = match policy {
        Policy::Constant(_) => 0.0,
        Policy::Agent { agent, epsilon, .. } => epsilon.unwrap_or_else(|| agent.epsilon()),
    };
    let mean_td_error = if counters.train_calls == 0 {
        0.0
    } else {
        td_sum / counters.train_calls as f64
    };
    Ok((
        EpisodeResult {
            episode: episode_index,
            mean_reward,
            stderr,
            epsilon_end,
            mean_td_error,
        },
        counters,
    ))
}

/// Seed of the agent's networks and per-episode action streams.
pub fn agent_seed(cfg: &ExperimentConfig) -> u64 {
    seed::derive(cfg.seed, cfg.agent.seed)
}

pub fn new_agent(cfg: &ExperimentConfig) -> Agent {
    Agent::new(AgentConfig {
        seed: agent_seed(cfg),
        ..cfg.agent.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub action: SchedulerOption,
    pub mean_reward: f64,
    pub stderr: f64,
    pub episodes: usize,
    /// Per-episode mean rewards, by episode index.
    #[serde(skip)]
    pub episode_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTable {
    pub mode: RewardMode,
    pub rows: Vec<BaselineRow>,
}

impl BaselineTable {
    /// Highest mean reward; ties go to the lower action code.
    pub fn best(&self) -> &BaselineRow {
        self.rows.iter().fold(
            &self.rows[0],
            |best, r| if r.mean_reward > best.mean_reward { r } else { best },
        )
    }

    pub fn row(&self, action: SchedulerOption) -> Option<&BaselineRow> {
        self.rows.iter().find(|r| r.action == action)
    }

    /// The configured baseline action, or the best row.
    pub fn reference(&self, configured: Option<SchedulerOption>) -> &BaselineRow {
        configured.and_then(|a| self.row(a)).unwrap_or_else(|| self.best())
    }
}

/// Mean reward of each constant policy over episode indices `episodes`.
pub fn run_constant_episodes(
    env: &Environment,
    action: SchedulerOption,
    episodes: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    episodes
        .map(|i| run_episode(env, &mut Policy::Constant(action), i).map(|(r, _)| r.mean_reward))
        .collect()
}

/// All five constant policies on episode indices `0..baseline_episodes`, one
/// thread per policy.
pub fn run_baseline_suite(env: &Environment) -> Result<BaselineTable> {
    baseline_suite_over(env, 0..env.cfg.baseline_episodes)
}

pub fn baseline_suite_over(env: &Environment, episodes: std::ops::Range<usize>) -> Result<BaselineTable> {
    let results: Vec<Result<BaselineRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = SchedulerOption::ALL
            .into_iter()
            .map(|action| {
                let episodes = episodes.clone();
                s.spawn(move || {
                    let means = run_constant_episodes(env, action, episodes)?;
                    let (mean_reward, stderr) = episode_stats(&means)?;
                    Ok(BaselineRow {
                        action,
                        mean_reward,
                        stderr,
                        episodes: means.len(),
                        episode_means: means,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("baseline worker panicked"))
            .collect()
    });
    Ok(BaselineTable {
        mode: env.cfg.reward_mode,
        rows: results.into_iter().collect::<Result<_>>()?,
    })
}

pub const CURVE_HEADER: &str = "episode,mean_reward,stderr,epsilon_end,mean_td_error";

fn curve_line(r: &EpisodeResult) -> String {
    format!(
        "{},{},{},{},{}\n",
        r.episode, r.mean_reward, r.stderr, r.epsilon_end, r.mean_td_error
    )
}

pub fn curve_to_csv(curve: &[EpisodeResult]) -> String {
    let mut text = format!("{CURVE_HEADER}\n");
    curve.iter().for_each(|r| text.push_str(&curve_line(r)));
    text
}

pub fn write_curve_csv(path: &Path, curve: &[EpisodeResult]) -> Result<()> {
    fs::write(path, curve_to_csv(curve)).map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<EpisodeResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{}: {other:?}", path.display())),
    })?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<EpisodeResult>, _>>()?)
}

pub fn write_baseline_csv(path: &Path, table: &BaselineTable) -> Result<()> {
    let mut text = String::from("action,mean_reward,stderr,episodes\n");
    for r in &table.rows {
        text.push_str(&format!("{},{},{},{}\n", r.action, r.mean_reward, r.stderr, r.episodes));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Learning state saved at an episode boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointState {
    episodes_done: usize,
    action_steps: u64,
    train_steps: u64,
    episode_id_base: u64,
    /// Digest of the resolved config with `episodes` zeroed, so a run may be
    /// resumed with a larger episode budget but nothing else changed.
    config_sha256: String,
}

fn config_digest(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.episodes = 0;
    kpi::sha256_hex(c.to_toml_string().as_bytes())
}

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const CURVE_FILE: &str = "curve.csv";

/// Writes online/target networks, the replay buffer, counters and the curve so
/// far into `dir`, replacing it atomically.
fn save_checkpoint(dir: &Path, agent: &Agent, state: &CheckpointState, curve: &[EpisodeResult]) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    agent.online.save(&tmp.join("online.qnet"))?;
    agent.target.save(&tmp.join("target.qnet"))?;
    write_experiences_csv(&tmp.join("buffer.csv"), agent.buffer.iter())?;
    write_curve_csv(&tmp.join(CURVE_FILE), curve)?;
    let state_path = tmp.join("state.toml");
    fs::write(&state_path, toml::to_string(state).expect("state serializes")).map_err(|e| Error::io(&state_path, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn load_checkpoint(dir: &Path, cfg: &ExperimentConfig) -> Result<(Agent, CheckpointState, Vec<EpisodeResult>)> {
    let state_path = dir.join("state.toml");
    let text = fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
    let state: CheckpointState =
        toml::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {}", state_path.display(), e.message())))?;
    if state.config_sha256 != config_digest(cfg) {
        return Err(Error::Checkpoint(format!(
            "{} was written by a different configuration",
            dir.display()
        )));
    }
    let mut agent = new_agent(cfg);
    agent.online = QNetParams::load(&dir.join("online.qnet"))?;
    agent.target = QNetParams::load(&dir.join("target.qnet"))?;
    agent.buffer.preload(read_experiences_csv(&dir.join("buffer.csv"))?);
    agent.action_steps = state.action_steps;
    agent.train_steps = state.train_steps;
    let curve = read_curve_csv(&dir.join(CURVE_FILE))?;
    if curve.len() != state.episodes_done {
        return Err(Error::Checkpoint(format!(
            "curve has {} rows but {} episodes are recorded",
            curve.len(),
            state.episodes_done
        )));
    }
    Ok((agent, state, curve))
}

/// Loads only the online network from a checkpoint directory or a `.qnet` file.
pub fn load_policy_network(path: &Path) -> Result<QNetParams> {
    if path.is_dir() {
        QNetParams::load(&path.join("online.qnet"))
    } else {
        QNetParams::load(path)
    }
}

pub struct TrainOutcome {
    pub curve: Vec<EpisodeResult>,
    pub agent: Agent,
}

/// Runs `cfg.episodes` training episodes.
///
/// With `out_dir`, the curve is appended to `curve.csv` after every episode and
/// a checkpoint is written at the start, every `checkpoint_every` episodes and
/// at the end. `resume` continues from the checkpoint found in `out_dir`.
pub fn train_experiment(env: &Environment, out_dir: Option<&Path>, resume: bool) -> Result<TrainOutcome> {
    let cfg = &env.cfg;
    let ckpt_dir = out_dir.map(|d| d.join(CHECKPOINT_DIR));

    let (mut agent, mut state, mut curve) = match (&ckpt_dir, resume) {
        (Some(dir), true) => load_checkpoint(dir, cfg)?,
        (None, true) => return Err(Error::InvalidArgument("resume needs an output directory".into())),
        (_, false) => {
            let mut agent = new_agent(cfg);
            if let Some(path) = &cfg.preload {
                agent.buffer.preload(read_experiences_csv(path)?);
            }
            let state = CheckpointState {
                episodes_done: 0,
                action_steps: 0,
                train_steps: 0,
                episode_id_base: agent.buffer.max_episode_id().map_or(0, |m| m + 1),
                config_sha256: config_digest(cfg),
            };
            (agent, state, Vec::new())
        }
    };

    let mut curve_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(CURVE_FILE);
            write_curve_csv(&path, &curve)?;
            let file = File::options()
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            Some((file, path))
        }
        None => None,
    };
    if let (Some(dir), false) = (&ckpt_dir, resume) {
        save_checkpoint(dir, &agent, &state, &curve)?;
    }

    for episode in state.episodes_done..cfg.episodes {
        let (result, _) = run_episode(
            env,
            &mut Policy::Agent {
                agent: &mut agent,
                train: true,
                epsilon: None,
                episode_id: state.episode_id_base + episode as u64,
            },
            episode,
        )?;
        if let Some((file, path)) = curve_file.as_mut() {
            file.write_all(curve_line(&result).as_bytes())
                .map_err(|e| Error::io(&*path, e))?;
        }
        curve.push(result);
        state.episodes_done = episode + 1;
        state.action_steps = agent.action_steps;
        state.train_steps = agent.train_steps;
        let last = episode + 1 == cfg.episodes;
        if let Some(dir) = &ckpt_dir {
            if state.episodes_done % cfg.checkpoint_every == 0 || last {
                save_checkpoint(dir, &agent, &state, &curve)?;
            }
        }
    }
    Ok(TrainOutcome { curve, agent })
}

/// Greedy (or fixed-epsilon) evaluation of `online` without learning.
pub fn evaluate(env: &Environment, online: &QNetParams, episodes: usize, epsilon: f64) -> Result<Vec<EpisodeResult>> {
    let mut agent = new_agent(&env.cfg);
    agent.online = online.clone();
    agent.target = online.clone();
    (0..episodes)
        .map(|i| {
            run_episode(
                env,
                &mut Policy::Agent {
                    agent: &mut agent,
                    train: false,
                    epsilon: Some(epsilon),
                    episode_id: i as u64,
                },
                i,
            )
            .map(|(r, _)| r)
        })
        .collect()
}

/// Path of the curve file inside a run directory.
pub fn curve_path(run_dir: &Path) -> PathBuf {
    run_dir.join(CURVE_FILE)
}
