//! Double-Q learning agent: epsilon-greedy acting, replay, n-step double-Q
//! targets and the training step.

mod replay;
mod tabular;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use replay::{read_experiences_csv, write_experiences_csv, Experience, ReplayBuffer, REPLAY_CAPACITY};
pub use tabular::TabularQ;

use crate::qnet::{Gradient, QNetParams};
use crate::ransim::SchedulerOption;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Per-step multiplier.
    pub epsilon_decay: f64,
    pub n_step: usize,
    pub tau: f64,
    pub learning_rate: f64,
    pub batch_segments: usize,
    pub seed: u64,
    /// Bootstrap with `gamma^(n-1)` instead of `gamma^n`.
    pub paper_literal_target: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_min: 0.1,
            epsilon_decay: 0.999,
            n_step: 3,
            tau: 0.01,
            learning_rate: 1e-3,
            batch_segments: 16,
            seed: 0,
            paper_literal_target: false,
        }
    }
}

impl AgentConfig {
    /// Returns the offending key (relative to `[agent]`) and reason.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(("gamma", format!("must be in (0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) {
            return Err((
                "epsilon_start",
                format!("must be in [0, 1], got {}", self.epsilon_start),
            ));
        }
        if !(self.epsilon_min >= 0.0 && self.epsilon_min <= self.epsilon_start) {
            return Err((
                "epsilon_min",
                format!(
                    "must be in [0, epsilon_start = {}], got {}",
                    self.epsilon_start, self.epsilon_min
                ),
            ));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err((
                "epsilon_decay",
                format!("must be in (0, 1], got {}", self.epsilon_decay),
            ));
        }
        if !(1..=10).contains(&self.n_step) {
            return Err(("n_step", format!("must be in 1..=10, got {}", self.n_step)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(("tau", format!("must be in [0, 1], got {}", self.tau)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err((
                "learning_rate",
                format!("must be finite and >= 0, got {}", self.learning_rate),
            ));
        }
        if self.batch_segments == 0 {
            return Err(("batch_segments", "must be positive".into()));
        }
        Ok(())
    }
}

/// `max(epsilon_min, epsilon_start * epsilon_decay^step)`.
pub fn epsilon_at(step: u64, cfg: &AgentConfig) -> f64 {
    let decayed = cfg.epsilon_start * cfg.epsilon_decay.powf(step as f64);
    decayed.max(cfg.epsilon_min)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice. Always consumes one uniform draw, plus one more when
/// exploring, so the random stream does not depend on the q-values.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> SchedulerOption {
    let explore = rng.random::<f64>() < epsilon;
    let code = if explore {
        rng.random_range(0..SchedulerOption::COUNT)
    } else {
        argmax(q_values)
    };
    SchedulerOption::from_code(code).expect("code below COUNT")
}

/// An action-value function the training step can differentiate and update.
pub trait ActionValue: Clone {
    type Grad;

    fn action_values(&self, state: &[f64]) -> Result<Vec<f64>>;
    fn zero_grad(&self) -> Self::Grad;
    /// `grad += scale * dQ(state, action)/dtheta`.
    fn accumulate_gradient(&self, state: &[f64], action: usize, scale: f64, grad: &mut Self::Grad) -> Result<()>;
    /// `theta += scale * grad`.
    fn apply_gradient(&mut self, grad: &Self::Grad, scale: f64) -> Result<()>;
    /// `self = (1 - tau) * self + tau * online`.
    fn soft_update(&mut self, online: &Self, tau: f64) -> Result<()>;
}

impl ActionValue for QNetParams {
    type Grad = Gradient;

    fn action_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.forward(state)
    }

    fn zero_grad(&self) -> Gradient {
        Gradient::zeros(self.dims())
    }

    fn accumulate_gradient(&self, state: &[f64], action: usize, scale: f64, grad: &mut Gradient) -> Result<()> {
        QNetParams::accumulate_gradient(self, state, action, scale, grad)
    }

    fn apply_gradient(&mut self, grad: &Gradient, scale: f64) -> Result<()> {
        QNetParams::apply_gradient(self, grad, scale)
    }

    fn soft_update(&mut self, online: &Self, tau: f64) -> Result<()> {
        QNetParams::soft_update(self, online, tau)
    }
}

/// n-step double-Q target for a segment `e_0..e_{n-1}`:
/// `sum_i gamma^i r_i + gamma^k Q_target(S', argmax_a Q_online(S', a))`, with
/// `S'` the last entry's next state and `k = n` (or `n - 1` when `literal`).
pub fn double_q_target<Q: ActionValue>(
    segment: &[Experience],
    online: &Q,
    target: &Q,
    gamma: f64,
    literal: bool,
) -> Result<f64> {
    let (first, last) = match segment {
        [] => return Err(Error::InvalidArgument("empty segment".into())),
        [f, .., l] => (f, l),
        [only] => (only, only),
    };
    if let Some(e) = segment.iter().find(|e| e.episode_id != first.episode_id) {
        return Err(Error::InvalidArgument(format!(
            "segment spans episodes {} and {}",
            first.episode_id, e.episode_id
        )));
    }
    let mut ret = 0.0;
    let mut discount = 1.0;
    for e in segment {
        ret += discount * e.reward.value();
        discount *= gamma;
    }
    if literal {
        discount /= gamma;
    }
    let s_next = last.next_state.as_slice();
    let a_star = argmax(&online.action_values(s_next)?);
    Ok(ret + discount * target.action_values(s_next)?[a_star])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent<Q = QNetParams> {
    pub config: AgentConfig,
    pub online: Q,
    pub target: Q,
    pub buffer: ReplayBuffer,
    /// Actions selected so far; drives the epsilon schedule.
    pub action_steps: u64,
    pub train_steps: u64,
}

impl Agent<QNetParams> {
    /// Fresh agent with Glorot-initialized online net and an identical target.
    pub fn new(config: AgentConfig) -> Self {
        let online = crate::qnet::init_params(seed::derive(config.seed, 1));
        let target = online.clone();
        Self::with_networks(config, online, target)
    }
}

impl<Q: ActionValue> Agent<Q> {
    pub fn with_networks(config: AgentConfig, online: Q, target: Q) -> Self {
        Self {
            config,
            online,
            target,
            buffer: ReplayBuffer::default(),
            action_steps: 0,
            train_steps: 0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(self.action_steps, &self.config)
    }

    /// Epsilon-greedy action at the current schedule step; advances the schedule.
    pub fn act<R: Rng + ?Sized>(&mut self, state: &[f64], rng: &mut R) -> Result<SchedulerOption> {
        let eps = self.epsilon();
        self.act_with_epsilon(state, eps, rng)
    }

    pub fn act_with_epsilon<R: Rng + ?Sized>(
        &mut self,
        state: &[f64],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<SchedulerOption> {
        let q = self.online.action_values(state)?;
        self.action_steps += 1;
        Ok(select_action(&q, epsilon, rng))
    }

    /// Samples a batch of segments and trains on it; returns mean |TD error|.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let segments = self
            .buffer
            .sample_segments(self.config.n_step, self.config.batch_segments, rng)?;
        self.train_on_segments(&segments)
    }

    /// One update from explicit segments: targets from the pre-update networks,
    /// gradient averaged over the batch, then the soft target update.
    pub fn train_on_segments(&mut self, segments: &[Vec<Experience>]) -> Result<f64> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let cfg = &self.config;
        let mut grad = self.online.zero_grad();
        let mut abs_td = 0.0;
        for seg in segments {
            let y = double_q_target(seg, &self.online, &self.target, cfg.gamma, cfg.paper_literal_target)?;
            let head = &seg[0];
            let s = head.state.as_slice();
            let a = head.action.code();
            let td = y - self.online.action_values(s)?[a];
            self.online.accumulate_gradient(s, a, td, &mut grad)?;
            abs_td += td.abs();
        }
        let batch = segments.len() as f64;
        self.online.apply_gradient(&grad, cfg.learning_rate / batch)?;
        self.target.soft_update(&self.online, cfg.tau)?;
        self.train_steps += 1;
        Ok(abs_td / batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpi::{KpiVector, Reward, KPI_DIM};
    use crate::seed::seeded_rng;
    use proptest::prelude::*;

    fn state(tag: f64) -> KpiVector {
        let mut s = [0.0; KPI_DIM];
        s[0] = tag;
        s[1] = 1.0 - tag;
        KpiVector::new(&s).unwrap()
    }

    fn exp(s: f64, a: usize, r: f64, sn: f64, ep: u64) -> Experience {
        Experience {
            state: state(s),
            action: SchedulerOption::from_code(a).unwrap(),
            reward: Reward::clipped(r),
            next_state: state(sn),
            episode_id: ep,
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig::default();
        assert_eq!(epsilon_at(0, &cfg), 1.0);
        assert_eq!(epsilon_at(1_000_000, &cfg), 0.1);
        let first_half = (0u64..).find(|&k| epsilon_at(k, &cfg) <= 0.5).unwrap();
        let oracle = (0.5f64.ln() / 0.999f64.ln()).ceil() as u64;
        assert_eq!(first_half, oracle);
        // Zero-based step 693 is the 694th action taken.
        assert_eq!(first_half + 1, 694);
    }

    #[test]
    fn greedy_choice() {
        let q = [0.1, 0.9, 0.2, 0.0, 0.3];
        let mut rng = seeded_rng(0);
        assert_eq!(select_action(&q, 0.0, &mut rng), SchedulerOption::ProportionalFairHigh);
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
    }

    #[test]
    fn uniform_exploration() {
        let mut rng = seeded_rng(42);
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            counts[select_action(&[0.0, 5.0, 0.0, 0.0, 0.0], 1.0, &mut rng).code()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn validation_names_keys() {
        let bad = AgentConfig {
            gamma: 1.5,
            ..AgentConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().0, "gamma");
        let bad = AgentConfig {
            n_step: 0,
            ..AgentConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().0, "n_step");
        assert!(AgentConfig::default().validate().is_ok());
    }

    #[test]
    fn myopic_target_is_first_reward() {
        let net = crate::qnet::init_params(3);
        let seg = [exp(0.2, 1, 0.7, 0.4, 0), exp(0.4, 2, -0.3, 0.6, 0)];
        assert_eq!(double_q_target(&seg, &net, &net, 0.0, false).unwrap(), 0.7);
    }

    #[test]
    fn one_step_substitution() {
        // Target value 2 at the online argmax (action 1).
        let mut online = TabularQ::new(2);
        online.set(1, 1, 5.0);
        let mut target = TabularQ::new(2);
        target.set(1, 1, 2.0);
        target.set(1, 0, 9.0);
        let seg = [Experience {
            state: TabularQ::one_hot(0),
            action: SchedulerOption::EqualRate,
            reward: Reward::clipped(1.0),
            next_state: TabularQ::one_hot(1),
            episode_id: 0,
        }];
        let y = double_q_target(&seg, &online, &target, 0.95, false).unwrap();
        assert!((y - 2.9).abs() < 1e-15);
    }

    #[test]
    fn literal_flag_drops_one_discount() {
        let net = crate::qnet::init_params(3);
        let seg = [
            exp(0.1, 0, 0.5, 0.2, 1),
            exp(0.2, 0, 0.5, 0.3, 1),
            exp(0.3, 0, 0.5, 0.9, 1),
        ];
        let boot = net.forward(state(0.9).as_slice()).unwrap();
        let q = boot[argmax(&boot)];
        let rewards = 0.5 + 0.95 * 0.5 + 0.95f64.powi(2) * 0.5;
        let std = double_q_target(&seg, &net, &net, 0.95, false).unwrap();
        let lit = double_q_target(&seg, &net, &net, 0.95, true).unwrap();
        assert!((std - (rewards + 0.95f64.powi(3) * q)).abs() < 1e-12);
        assert!((lit - (rewards + 0.95f64.powi(2) * q)).abs() < 1e-12);
    }

    #[test]
    fn cross_episode_segment_rejected() {
        let net = crate::qnet::init_params(3);
        let seg = [exp(0.1, 0, 0.5, 0.2, 1), exp(0.2, 0, 0.5, 0.3, 2)];
        assert!(double_q_target(&seg, &net, &net, 0.9, false).is_err());
    }

    #[test]
    fn zero_td_batch_leaves_params() {
        // gamma tiny and rewards equal to current Q: tabular fixpoint.
        let mut q = TabularQ::new(2);
        q.set(0, 0, 0.5);
        let cfg = AgentConfig {
            gamma: 1e-300,
            n_step: 1,
            batch_segments: 4,
            ..AgentConfig::default()
        };
        let mut agent = Agent::with_networks(cfg, q.clone(), q.clone());
        agent.buffer.push(Experience {
            state: TabularQ::one_hot(0),
            action: SchedulerOption::EqualRate,
            reward: Reward::clipped(0.5),
            next_state: TabularQ::one_hot(1),
            episode_id: 0,
        });
        let td = agent.train_step(&mut seeded_rng(0)).unwrap();
        assert_eq!(td, 0.0);
        assert_eq!(agent.online, q);
    }

    #[test]
    fn tau_zero_freezes_target() {
        let cfg = AgentConfig {
            tau: 0.0,
            n_step: 1,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(cfg);
        agent.buffer.push(exp(0.3, 2, 1.0, 0.5, 0));
        let before = agent.target.clone();
        agent.train_step(&mut seeded_rng(1)).unwrap();
        assert_eq!(agent.target, before);
        assert_ne!(agent.online, before);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let cfg = AgentConfig {
            learning_rate: 0.0,
            n_step: 1,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(cfg);
        agent.buffer.push(exp(0.3, 2, 1.0, 0.5, 0));
        let before = agent.clone();
        let a = agent.train_step(&mut seeded_rng(1)).unwrap();
        assert_eq!(agent.online, before.online);
        assert_eq!(a, agent.train_step(&mut seeded_rng(1)).unwrap());
    }

    #[test]
    fn single_transition_regression_converges() {
        let cfg = AgentConfig {
            n_step: 1,
            batch_segments: 1,
            learning_rate: 0.05,
            gamma: 0.5,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(cfg);
        agent.buffer.push(exp(0.3, 4, 0.8, 0.7, 0));
        let mut rng = seeded_rng(9);
        let mut td = f64::INFINITY;
        for _ in 0..5000 {
            td = agent.train_step(&mut rng).unwrap();
            if td < 1e-3 {
                break;
            }
        }
        assert!(td < 1e-3, "{td}");
    }

    proptest! {
        #[test]
        fn identical_nets_one_step_is_classic_q_target(seed in 0u64..500, r in -1.0..1.0f64, s in 0.0..1.0f64, gamma in 0.01..0.99f64) {
            let net = crate::qnet::init_params(seed);
            let seg = [exp(0.5, 0, r, s, 7)];
            let q = net.forward(state(s).as_slice()).unwrap();
            let classic = r + gamma * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((double_q_target(&seg, &net, &net, gamma, false).unwrap() - classic).abs() < 1e-12);
        }

        #[test]
        fn greedy_is_shift_invariant(q in prop::collection::vec(-10.0..10.0f64, 5), c in -100.0..100.0f64) {
            let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
            let mut r1 = seeded_rng(0);
            let mut r2 = seeded_rng(0);
            prop_assert_eq!(select_action(&q, 0.0, &mut r1), select_action(&q, 0.0, &mut r2));
            prop_assert_eq!(argmax(&q), argmax(&shifted));
        }
    }
}
