//! Multi-agent trainers: value-based IQL/VDN/QMIX over an episode replay
//! buffer, and on-policy IA2C/MAA2C.
//!
//! All agents share one network; its input is the agent's observation,
//! zero-padded to the widest observation, followed by a one-hot agent id.
//! Action selection only ever sees observations (see [`PolicySnapshot`]);
//! the global state is read inside training updates alone.

mod actor_critic;
mod buffer;
mod mixer;
mod value;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Observation};
use crate::nn::{Adam, DenseNet, NnError};

pub use actor_critic::{A2cStats, ActorCriticTrainer, Trajectory};
pub use buffer::{Episode, EpisodeBuffer, EpisodeRecorder};
pub use mixer::{MixerCache, MixingNet};
pub use value::ValueTrainer;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MarlError {
    #[error("not ready: replay buffer holds {have} episodes, batch needs {need}")]
    NotReady { have: usize, need: usize },
    #[error("stale trajectory: generated by policy version {got}, trainer is at {expected}")]
    StalePolicy { expected: u64, got: u64 },
    #[error("algorithm {0} does not match this trainer")]
    AlgorithmMismatch(Algorithm),
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Iql,
    Vdn,
    Qmix,
    Ia2c,
    Maa2c,
}

impl Algorithm {
    pub fn is_value_based(self) -> bool {
        matches!(self, Algorithm::Iql | Algorithm::Vdn | Algorithm::Qmix)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Iql => "iql",
            Algorithm::Vdn => "vdn",
            Algorithm::Qmix => "qmix",
            Algorithm::Ia2c => "ia2c",
            Algorithm::Maa2c => "maa2c",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "iql" => Ok(Algorithm::Iql),
            "vdn" => Ok(Algorithm::Vdn),
            "qmix" => Ok(Algorithm::Qmix),
            "ia2c" => Ok(Algorithm::Ia2c),
            "maa2c" => Ok(Algorithm::Maa2c),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Linear ε decay from `start` to `finish` over `anneal_steps` env steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub finish: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            finish: 0.05,
            anneal_steps: 50_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, env_steps: u64) -> f64 {
        if self.anneal_steps == 0 || env_steps >= self.anneal_steps {
            return self.finish;
        }
        let frac = env_steps as f64 / self.anneal_steps as f64;
        self.start + (self.finish - self.start) * frac
    }
}

fn default_hidden() -> usize {
    64
}
fn default_lr() -> f64 {
    0.0005
}
fn default_gamma() -> f64 {
    0.99
}
fn default_batch() -> usize {
    32
}
fn default_buffer() -> usize {
    5000
}
fn default_target_update() -> u64 {
    200
}
fn default_entropy() -> f64 {
    0.01
}
fn default_clip() -> Option<f64> {
    Some(10.0)
}
fn default_embed() -> usize {
    32
}
fn default_one() -> f64 {
    1.0
}

/// Hyperparameters shared by every trainer; fields irrelevant to an
/// algorithm are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Episodes per TD update.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    /// Hard target-network copy period, in training episodes.
    #[serde(default = "default_target_update")]
    pub target_update_episodes: u64,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
    #[serde(default = "default_entropy")]
    pub entropy_coef: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default = "default_embed")]
    pub mixer_embed: usize,
    #[serde(default = "default_hidden")]
    pub hypernet_hidden: usize,
    /// Multiplier applied to rewards before they enter any loss.
    #[serde(default = "default_one")]
    pub reward_scale: f64,
}

impl TrainerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainerConfig {
            algorithm,
            hidden_dim: 64,
            lr: 0.0005,
            gamma: 0.99,
            batch_size: 32,
            buffer_capacity: 5000,
            target_update_episodes: 200,
            epsilon: EpsilonSchedule::default(),
            entropy_coef: 0.01,
            grad_clip: Some(10.0),
            mixer_embed: 32,
            hypernet_hidden: 64,
            reward_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: &str| Err(MarlError::Config(m.to_string()));
        if self.hidden_dim == 0 || self.mixer_embed == 0 || self.hypernet_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 1 <= batch_size <= buffer_capacity");
        }
        if self.target_update_episodes == 0 {
            return bad("target_update_episodes must be at least 1");
        }
        Ok(())
    }
}

/// Input layout for parameter-shared agent networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLayout {
    pub n_agents: usize,
    pub obs_lengths: Vec<usize>,
    pub action_sizes: Vec<usize>,
    pub state_len: usize,
    pub max_obs: usize,
    pub max_actions: usize,
}

impl AgentLayout {
    pub fn from_spec(spec: &EnvSpec) -> Self {
        AgentLayout {
            n_agents: spec.n_agents,
            obs_lengths: spec.obs_lengths.clone(),
            action_sizes: spec.action_sizes.clone(),
            state_len: spec.state_length,
            max_obs: spec.obs_lengths.iter().copied().max().unwrap_or(0),
            max_actions: spec.action_sizes.iter().copied().max().unwrap_or(0),
        }
    }

    pub fn agent_input_dim(&self) -> usize {
        self.max_obs + self.n_agents
    }

    pub fn state_input_dim(&self) -> usize {
        self.state_len + self.n_agents
    }

    /// Padded observation followed by the agent one-hot.
    pub fn write_agent_input<T: Copy + Into<f64>>(&self, agent: usize, obs: &[T], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.agent_input_dim());
        out.fill(0.0);
        for (o, &v) in out.iter_mut().zip(obs) {
            *o = v.into();
        }
        out[self.max_obs + agent] = 1.0;
    }

    pub fn write_state_input<T: Copy + Into<f64>>(&self, agent: usize, state: &[T], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.state_input_dim());
        out.fill(0.0);
        for (o, &v) in out.iter_mut().zip(state) {
            *o = v.into();
        }
        out[self.state_len + agent] = 1.0;
    }
}

/// Lowest-index argmax over the first `valid` entries.
pub fn masked_argmax(scores: &[f64], valid: usize) -> usize {
    let mut best = 0;
    for a in 1..valid {
        if scores[a] > scores[best] {
            best = a;
        }
    }
    best
}

/// Softmax over the first `valid` entries; the rest get probability 0.
pub fn masked_softmax(logits: &[f64], valid: usize) -> Vec<f64> {
    let max = logits[..valid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(a, &z)| if a < valid { (z - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: Option<f64>) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if let Some(max) = max_norm {
        if norm > max {
            let k = max / norm;
            for g in grads.iter_mut() {
                g.iter_mut().for_each(|v| *v *= k);
            }
        }
    }
    norm
}

/// How a snapshot turns network outputs into actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Explore {
    /// Lowest-index argmax.
    Greedy,
    /// Uniform over valid actions with probability ε, greedy otherwise.
    Epsilon(f64),
    /// Sample from the softmax of the outputs.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    QValues,
    Softmax,
}

/// Frozen copy of an agent network, safe to share across rollout threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub kind: PolicyKind,
    pub layout: AgentLayout,
    pub net: DenseNet,
    /// Parameter version of the actor that produced this snapshot.
    pub version: u64,
}

impl PolicySnapshot {
    /// Raw network outputs for every agent, `max_actions` wide.
    pub fn scores(&self, observations: &[Observation]) -> Vec<Vec<f64>> {
        let d = self.layout.agent_input_dim();
        let mut x = ndarray::Array2::zeros((observations.len(), d));
        for (row, o) in observations.iter().enumerate() {
            self.layout.write_agent_input(
                o.agent,
                &o.vector,
                x.row_mut(row).as_slice_mut().unwrap(),
            );
        }
        let out = self.net.predict_batch(x.view()).expect("layout matches network");
        out.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn act(&self, observations: &[Observation], explore: Explore, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let scores = self.scores(observations);
        observations
            .iter()
            .zip(scores)
            .map(|(o, s)| {
                let valid = self.layout.action_sizes[o.agent];
                match explore {
                    Explore::Greedy => masked_argmax(&s, valid),
                    Explore::Epsilon(eps) => {
                        if rng.random::<f64>() < eps {
                            rng.random_range(0..valid)
                        } else {
                            masked_argmax(&s, valid)
                        }
                    }
                    Explore::Sample => sample_categorical(&masked_softmax(&s, valid)[..valid], rng),
                }
            })
            .collect()
    }
}

pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.len() - 1
}

/// Serialized trainer: configuration, layout, networks and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainerConfig,
    pub layout: AgentLayout,
    pub seed: u64,
    pub episodes: u64,
    pub env_steps: u64,
    pub updates: u64,
    pub nets: Vec<(String, DenseNet)>,
    pub optimizers: Vec<(String, Adam)>,
}

pub const CHECKPOINT_FORMAT: u32 = 1;

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<&DenseNet> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn optimizer(&self, name: &str) -> Option<&Adam> {
        self.optimizers.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Either trainer family behind one interface.
#[derive(Debug, Clone)]
pub enum Trainer {
    Value(ValueTrainer),
    ActorCritic(ActorCriticTrainer),
}

impl Trainer {
    pub fn new(config: TrainerConfig, spec: &EnvSpec, seed: u64) -> Result<Self, MarlError> {
        if config.algorithm.is_value_based() {
            Ok(Trainer::Value(ValueTrainer::new(config, spec, seed)?))
        } else {
            Ok(Trainer::ActorCritic(ActorCriticTrainer::new(config, spec, seed)?))
        }
    }

    pub fn config(&self) -> &TrainerConfig {
        match self {
            Trainer::Value(t) => t.config(),
            Trainer::ActorCritic(t) => t.config(),
        }
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        match self {
            Trainer::Value(t) => t.snapshot(),
            Trainer::ActorCritic(t) => t.snapshot(),
        }
    }

    /// Exploration used while collecting training data.
    pub fn training_explore(&self) -> Explore {
        match self {
            Trainer::Value(t) => Explore::Epsilon(t.epsilon()),
            Trainer::ActorCritic(_) => Explore::Sample,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            Trainer::Value(t) => t.checkpoint(),
            Trainer::ActorCritic(t) => t.checkpoint(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, MarlError> {
        if ck.config.algorithm.is_value_based() {
            Ok(Trainer::Value(ValueTrainer::from_checkpoint(ck)?))
        } else {
            Ok(Trainer::ActorCritic(ActorCriticTrainer::from_checkpoint(ck)?))
        }
    }

    pub fn params_finite(&self) -> bool {
        match self {
            Trainer::Value(t) => t.params_finite(),
            Trainer::ActorCritic(t) => t.params_finite(),
        }
    }
}

/// Snapshot from a checkpoint, for evaluation without building a trainer.
pub fn snapshot_from_checkpoint(ck: &Checkpoint) -> Result<PolicySnapshot, MarlError> {
    Ok(Trainer::from_checkpoint(ck)?.snapshot())
}
