use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{GlobalState, Observation, StepResult};

/// One finished episode. `observations` and `states` have one more entry
/// than `actions`: the final post-step observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub observations: Vec<Vec<Vec<f32>>>,
    pub states: Vec<Vec<f32>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f32>,
    pub agent_rewards: Vec<Vec<f32>>,
    pub terminated: Vec<bool>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().map(|&r| r as f64).sum()
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Builds an [`Episode`] step by step during a rollout.
#[derive(Debug, Clone)]
pub struct EpisodeRecorder {
    episode: Episode,
}

impl EpisodeRecorder {
    pub fn start(observations: &[Observation], state: &GlobalState) -> Self {
        EpisodeRecorder {
            episode: Episode {
                observations: vec![observations.iter().map(|o| to_f32(&o.vector)).collect()],
                states: vec![to_f32(&state.vector)],
                actions: Vec::new(),
                rewards: Vec::new(),
                agent_rewards: Vec::new(),
                terminated: Vec::new(),
            },
        }
    }

    pub fn push(&mut self, actions: &[usize], result: &StepResult) {
        let e = &mut self.episode;
        e.actions.push(actions.to_vec());
        e.rewards.push(result.reward as f32);
        e.agent_rewards.push(to_f32(&result.agent_rewards));
        e.terminated.push(result.terminated);
        e.observations
            .push(result.observations.iter().map(|o| to_f32(&o.vector)).collect());
        e.states.push(to_f32(&result.state.vector));
    }

    /// Appends a transition from raw parts, for fixtures without an environment.
    pub fn push_raw(
        &mut self,
        actions: Vec<usize>,
        reward: f64,
        agent_rewards: Vec<f64>,
        next_observations: Vec<Vec<f64>>,
        next_state: Vec<f64>,
        terminated: bool,
    ) {
        let e = &mut self.episode;
        e.actions.push(actions);
        e.rewards.push(reward as f32);
        e.agent_rewards.push(to_f32(&agent_rewards));
        e.terminated.push(terminated);
        e.observations
            .push(next_observations.iter().map(|o| to_f32(o)).collect());
        e.states.push(to_f32(&next_state));
    }

    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }

    pub fn finish(self) -> Episode {
        self.episode
    }
}

/// Ring buffer of complete episodes; the oldest is evicted at capacity.
#[derive(Debug, Clone)]
pub struct EpisodeBuffer {
    capacity: usize,
    episodes: VecDeque<Arc<Episode>>,
    inserted: u64,
}

impl EpisodeBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        EpisodeBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1024)),
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(Arc::new(episode));
        self.inserted += 1;
    }

    pub fn get(&self, i: usize) -> Option<&Arc<Episode>> {
        self.episodes.get(i)
    }

    /// `n` distinct episodes chosen uniformly; `None` if fewer are stored.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Arc<Episode>>> {
        if n > self.episodes.len() {
            return None;
        }
        let mut idx = index::sample(rng, self.episodes.len(), n).into_vec();
        idx.sort_unstable();
        Some(idx.into_iter().map(|i| self.episodes[i].clone()).collect())
    }
}
