//! Multi-agent environment over the simulator: one agent per signal,
//! local lane observations, a global state for centralized critics and a
//! shared reward equal to the negated network-wide queue.

mod config;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesosim::{lane_metrics, LaneMetrics, SimError, SimParams, SimState, Simulator};
use crate::netgraph::RoadNetwork;

pub use config::{ActionMode, EnvConfig};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("agent {agent}: action {action} out of range (action space size {size})")]
    ActionOutOfRange {
        agent: usize,
        action: usize,
        size: usize,
    },
    #[error("expected {expected} actions, got {got}")]
    ActionArity { expected: usize, got: usize },
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("episode already terminated; reset first")]
    EpisodeOver,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: usize,
    /// Per incoming lane `(n/capacity, s, q/capacity)`, then a one-hot of
    /// the current green phase.
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    /// Per lane (all lanes, id order) `(n/capacity, s, q/capacity)`, then
    /// every signal's phase one-hot.
    pub vector: Vec<f64>,
}

/// Network-level metrics gathered at the end of a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StepInfo {
    pub queue_sum: u64,
    pub mean_delay: f64,
    pub mean_speed: f64,
    pub mean_occupancy: f64,
    pub completed: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observations: Vec<Observation>,
    pub state: GlobalState,
    /// Shared reward: `-Σ q` over every lane.
    pub reward: f64,
    /// Per-agent rewards; copies of `reward` unless local rewards are enabled.
    pub agent_rewards: Vec<f64>,
    pub terminated: bool,
    pub info: StepInfo,
}

/// Sizes an external learner needs to build its networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub obs_lengths: Vec<usize>,
    pub action_sizes: Vec<usize>,
    pub state_length: usize,
    pub episode_limit: usize,
}

/// Round-robin or free phase selection mapped onto a target green.
pub fn action_space_size(mode: ActionMode, num_phases: usize) -> usize {
    match mode {
        ActionMode::FreeSelect => num_phases,
        ActionMode::RoundRobin => 2,
    }
}

/// Resolves an action index to the green phase it requests.
pub fn resolve_action(mode: ActionMode, current: usize, num_phases: usize, action: usize) -> usize {
    match mode {
        ActionMode::FreeSelect => action,
        ActionMode::RoundRobin if action == 0 => current,
        ActionMode::RoundRobin => (current + 1) % num_phases,
    }
}

/// One pass over every lane: full-lane counts and counts within the
/// downstream signal's detection range.
#[derive(Debug, Clone)]
struct LaneSnapshot {
    full: Vec<LaneMetrics>,
    visible: Vec<LaneMetrics>,
}

impl LaneSnapshot {
    fn gather(net: &RoadNetwork, state: &SimState, visibility: Option<f64>) -> Self {
        let mut full = Vec::with_capacity(net.num_lanes());
        let mut visible = Vec::with_capacity(net.num_lanes());
        for lane in 0..net.num_lanes() {
            let f = lane_metrics(net, state, lane, f64::INFINITY);
            let range = match (visibility, net.lane_ends(lane).1) {
                (Some(v), _) => v,
                (None, Some(sig)) => net.signals()[sig].visibility,
                (None, None) => f64::INFINITY,
            };
            let v = if range.is_infinite() {
                f
            } else {
                lane_metrics(net, state, lane, range)
            };
            full.push(f);
            visible.push(v);
        }
        LaneSnapshot { full, visible }
    }
}

pub struct TrafficSignalEnv {
    config: EnvConfig,
    sim: Simulator,
    episode_rng: ChaCha8Rng,
    steps: usize,
    ready: bool,
    snapshot: LaneSnapshot,
}

impl TrafficSignalEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let params = SimParams {
            saturation_flow: config.saturation_flow,
            yellow_duration: config.yellow_duration,
        };
        let sim = Simulator::new(config.network.clone(), &config.flows, params, config.seed)?;
        let snapshot = LaneSnapshot::gather(&config.network, sim.state(), config.visibility);
        Ok(TrafficSignalEnv {
            episode_rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            sim,
            steps: 0,
            ready: false,
            snapshot,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.config.network
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn n_agents(&self) -> usize {
        self.config.network.num_signals()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn obs_len(&self, agent: usize) -> usize {
        let net = &self.config.network;
        3 * net.incoming(agent).len() + net.num_phases(agent)
    }

    pub fn state_len(&self) -> usize {
        let net = &self.config.network;
        3 * net.num_lanes() + (0..net.num_signals()).map(|s| net.num_phases(s)).sum::<usize>()
    }

    pub fn action_size(&self, agent: usize) -> usize {
        action_space_size(self.config.action_mode, self.config.network.num_phases(agent))
    }

    pub fn spec(&self) -> EnvSpec {
        let n = self.n_agents();
        EnvSpec {
            n_agents: n,
            obs_lengths: (0..n).map(|i| self.obs_len(i)).collect(),
            action_sizes: (0..n).map(|i| self.action_size(i)).collect(),
            state_length: self.state_len(),
            episode_limit: self.config.episode_limit,
        }
    }

    /// Starts a new episode, continuing this environment's seed sequence.
    pub fn reset(&mut self) -> (Vec<Observation>, GlobalState) {
        let episode_seed = self.episode_rng.random::<u64>();
        self.sim.reset(episode_seed);
        self.steps = 0;
        self.ready = true;
        self.refresh();
        (self.observations(), self.global_state())
    }

    /// Restarts the seed sequence at `seed`, then resets.
    pub fn reset_with_seed(&mut self, seed: u64) -> (Vec<Observation>, GlobalState) {
        self.episode_rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset()
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        self.step_traced(actions, |_| {})
    }

    /// Like [`step`](Self::step), calling `on_tick` with the state after
    /// every simulated second.
    pub fn step_traced(
        &mut self,
        actions: &[usize],
        mut on_tick: impl FnMut(&SimState),
    ) -> Result<StepResult, EnvError> {
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        if self.steps >= self.config.episode_limit {
            return Err(EnvError::EpisodeOver);
        }
        let n = self.n_agents();
        if actions.len() != n {
            return Err(EnvError::ActionArity {
                expected: n,
                got: actions.len(),
            });
        }
        for (agent, &action) in actions.iter().enumerate() {
            let size = self.action_size(agent);
            if action >= size {
                return Err(EnvError::ActionOutOfRange { agent, action, size });
            }
        }
        let net = self.config.network.clone();
        for (agent, &action) in actions.iter().enumerate() {
            let current = self.sim.state().signals[agent].committed_green();
            let target =
                resolve_action(self.config.action_mode, current, net.num_phases(agent), action);
            self.sim.set_phase(agent, target)?;
        }
        for _ in 0..self.config.action_interval {
            self.sim.spawn();
            self.sim.tick();
            on_tick(self.sim.state());
        }
        self.steps += 1;
        self.refresh();
        let reward = self.compute_reward();
        Ok(StepResult {
            observations: self.observations(),
            state: self.global_state(),
            reward,
            agent_rewards: self.agent_rewards(reward),
            terminated: self.steps >= self.config.episode_limit,
            info: self.info(),
        })
    }

    fn refresh(&mut self) {
        self.snapshot =
            LaneSnapshot::gather(&self.config.network, self.sim.state(), self.config.visibility);
    }

    fn phase_one_hot(&self, signal: usize, out: &mut Vec<f64>) {
        let p = self.config.network.num_phases(signal);
        let current = self.sim.state().signals[signal].committed_green();
        out.extend((0..p).map(|k| if k == current { 1.0 } else { 0.0 }));
    }

    pub fn observation(&self, agent: usize) -> Observation {
        let net = &self.config.network;
        let mut vector = Vec::with_capacity(self.obs_len(agent));
        for &lane in net.incoming(agent) {
            let m = self.snapshot.visible[lane];
            let cap = net.lane(lane).capacity as f64;
            vector.extend([m.n as f64 / cap, m.s, m.q as f64 / cap]);
        }
        self.phase_one_hot(agent, &mut vector);
        Observation { agent, vector }
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.n_agents()).map(|i| self.observation(i)).collect()
    }

    pub fn global_state(&self) -> GlobalState {
        let net = &self.config.network;
        let mut vector = Vec::with_capacity(self.state_len());
        for (lane, m) in self.snapshot.full.iter().enumerate() {
            let cap = net.lane(lane).capacity as f64;
            vector.extend([m.n as f64 / cap, m.s, m.q as f64 / cap]);
        }
        for s in 0..net.num_signals() {
            self.phase_one_hot(s, &mut vector);
        }
        GlobalState { vector }
    }

    /// Full-lane queue lengths (no visibility cap), lane id order.
    pub fn lane_queues(&self) -> Vec<usize> {
        self.snapshot.full.iter().map(|m| m.q).collect()
    }

    /// Negated sum of halted vehicles over every lane.
    pub fn compute_reward(&self) -> f64 {
        -(self.snapshot.full.iter().map(|m| m.q).sum::<usize>() as f64)
    }

    fn agent_rewards(&self, global: f64) -> Vec<f64> {
        let net = &self.config.network;
        (0..self.n_agents())
            .map(|agent| {
                if self.config.local_reward {
                    -(net
                        .incoming(agent)
                        .iter()
                        .map(|&l| self.snapshot.full[l].q)
                        .sum::<usize>() as f64)
                } else {
                    global
                }
            })
            .collect()
    }

    pub fn info(&self) -> StepInfo {
        let net = &self.config.network;
        let full = &self.snapshot.full;
        let total: usize = full.iter().map(|m| m.n).sum();
        let moving: f64 = full.iter().map(|m| m.n as f64 * m.s).sum();
        let mean_speed = if total == 0 { 1.0 } else { moving / total as f64 };
        let occupancy = full
            .iter()
            .enumerate()
            .map(|(l, m)| m.n as f64 / net.lane(l).capacity as f64)
            .sum::<f64>()
            / full.len().max(1) as f64;
        let st = self.sim.state();
        StepInfo {
            queue_sum: full.iter().map(|m| m.q as u64).sum(),
            mean_delay: 1.0 - mean_speed,
            mean_speed,
            mean_occupancy: occupancy,
            completed: st.completed,
            dropped: st.dropped,
        }
    }
}
