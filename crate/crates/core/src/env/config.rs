use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::mesosim::FlowSpec;
use crate::netgraph::RoadNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Action `k` requests green phase `k`.
    FreeSelect,
    /// Action 0 keeps the current green, action 1 advances to the next one.
    #[default]
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub network: Arc<RoadNetwork>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub action_mode: ActionMode,
    /// Decision steps per episode.
    #[serde(default = "default_episode_limit")]
    pub episode_limit: usize,
    /// Simulated seconds per decision step.
    #[serde(default = "default_interval")]
    pub action_interval: u64,
    #[serde(default = "default_interval")]
    pub yellow_duration: u64,
    /// Overrides every signal's detection range when set.
    #[serde(default)]
    pub visibility: Option<f64>,
    #[serde(default = "default_saturation_flow")]
    pub saturation_flow: f64,
    /// Give independent learners the queue on their own approaches instead
    /// of the shared network reward.
    #[serde(default)]
    pub local_reward: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_episode_limit() -> usize {
    72
}

fn default_interval() -> u64 {
    5
}

fn default_saturation_flow() -> f64 {
    0.5
}

impl EnvConfig {
    pub fn new(network: Arc<RoadNetwork>, flows: Vec<FlowSpec>) -> Self {
        EnvConfig {
            network,
            flows,
            action_mode: ActionMode::default(),
            episode_limit: default_episode_limit(),
            action_interval: default_interval(),
            yellow_duration: default_interval(),
            visibility: None,
            saturation_flow: default_saturation_flow(),
            local_reward: false,
            seed: 0,
        }
    }

    pub fn with_mode(mut self, mode: ActionMode) -> Self {
        self.action_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Detection range used for `signal`'s observation.
    pub fn effective_visibility(&self, signal: usize) -> f64 {
        self.visibility
            .unwrap_or(self.network.signals()[signal].visibility)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.episode_limit < 1 {
            return bad("episode_limit must be at least 1".into());
        }
        if self.action_interval < 1 {
            return bad("action_interval must be at least 1 second".into());
        }
        if self.yellow_duration != self.action_interval {
            return bad(format!(
                "yellow_duration ({}) must equal action_interval ({})",
                self.yellow_duration, self.action_interval
            ));
        }
        if let Some(v) = self.visibility {
            if !(v > 0.0) {
                return bad("visibility must be positive".into());
            }
        }
        if self.network.num_signals() == 0 {
            return bad("network has no signals".into());
        }
        Ok(())
    }
}
