use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    clip_grad_norm, masked_argmax, AgentLayout, Algorithm, Checkpoint, Episode, EpisodeBuffer,
    MarlError, MixingNet, PolicyKind, PolicySnapshot, TrainerConfig, CHECKPOINT_FORMAT,
};
use crate::env::EnvSpec;
use crate::nn::{Adam, DenseNet};

/// Flattened training batch. Row `m * n_agents + i` holds agent `i` at
/// sample `m`, where a sample is one step of one episode.
struct Batch {
    inputs: Array2<f64>,
    next_inputs: Array2<f64>,
    actions: Vec<usize>,
    agent_rewards: Vec<f64>,
    rewards: Vec<f64>,
    not_done: Vec<f64>,
    states: Array2<f64>,
    next_states: Array2<f64>,
}

/// IQL, VDN and QMIX: a shared agent Q-network, a target copy, and for
/// QMIX a state-conditioned mixer with its own target copy.
#[derive(Debug, Clone)]
pub struct ValueTrainer {
    config: TrainerConfig,
    layout: AgentLayout,
    seed: u64,
    q: DenseNet,
    q_target: DenseNet,
    mixer: Option<MixingNet>,
    mixer_target: Option<MixingNet>,
    q_opt: Adam,
    mixer_opt: Option<Adam>,
    buffer: EpisodeBuffer,
    rng: ChaCha8Rng,
    episodes: u64,
    env_steps: u64,
    updates: u64,
    last_sync_episode: u64,
}

impl ValueTrainer {
    pub fn new(config: TrainerConfig, spec: &EnvSpec, seed: u64) -> Result<Self, MarlError> {
        if !config.algorithm.is_value_based() {
            return Err(MarlError::AlgorithmMismatch(config.algorithm));
        }
        config.validate()?;
        let layout = AgentLayout::from_spec(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = DenseNet::new(
            &[
                layout.agent_input_dim(),
                config.hidden_dim,
                config.hidden_dim,
                layout.max_actions,
            ],
            &mut rng,
        );
        let mixer = (config.algorithm == Algorithm::Qmix).then(|| {
            MixingNet::new(
                layout.n_agents,
                layout.state_len,
                config.mixer_embed,
                config.hypernet_hidden,
                &mut rng,
            )
        });
        Ok(ValueTrainer {
            q_opt: Adam::new(q.num_params()),
            mixer_opt: mixer.as_ref().map(|m| Adam::new(m.num_params())),
            q_target: q.clone(),
            mixer_target: mixer.clone(),
            q,
            mixer,
            buffer: EpisodeBuffer::new(config.buffer_capacity),
            layout,
            seed,
            config,
            rng,
            episodes: 0,
            env_steps: 0,
            updates: 0,
            last_sync_episode: 0,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    pub fn q_net(&self) -> &DenseNet {
        &self.q
    }

    pub fn q_net_mut(&mut self) -> &mut DenseNet {
        &mut self.q
    }

    pub fn target_q_net(&self) -> &DenseNet {
        &self.q_target
    }

    pub fn mixer(&self) -> Option<&MixingNet> {
        self.mixer.as_ref()
    }

    pub fn mixer_mut(&mut self) -> Option<&mut MixingNet> {
        self.mixer.as_mut()
    }

    pub fn buffer(&self) -> &EpisodeBuffer {
        &self.buffer
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Current exploration rate from the env-step counter.
    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.value(self.env_steps)
    }

    /// Copies online parameters into the target networks.
    pub fn sync_target(&mut self) {
        self.q_target = self.q.clone();
        self.mixer_target = self.mixer.clone();
    }

    /// Hard-syncs the targets when `episode_count` crosses a multiple of the
    /// target period. Returns whether a sync happened.
    pub fn target_sync(&mut self, episode_count: u64) -> bool {
        let period = self.config.target_update_episodes;
        if episode_count / period > self.last_sync_episode / period {
            self.sync_target();
            self.last_sync_episode = episode_count;
            true
        } else {
            false
        }
    }

    /// Stores a finished episode and advances the episode and step counters.
    pub fn observe_episode(&mut self, episode: Episode) {
        self.env_steps += episode.len() as u64;
        self.episodes += 1;
        self.buffer.push(episode);
        let count = self.episodes;
        self.target_sync(count);
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            kind: PolicyKind::QValues,
            layout: self.layout.clone(),
            net: self.q.clone(),
            version: self.updates,
        }
    }

    pub fn params_finite(&self) -> bool {
        self.q.all_finite() && self.mixer.as_ref().is_none_or(|m| m.all_finite())
    }

    /// Joint value of per-agent `qs` in `state`: the sum for VDN, the
    /// mixer for QMIX, `None` for IQL.
    pub fn joint_q(&self, qs: &[f64], state: &[f64]) -> Option<f64> {
        match self.config.algorithm {
            Algorithm::Vdn => Some(qs.iter().sum()),
            Algorithm::Qmix => {
                let mixer = self.mixer.as_ref()?;
                let q = ndarray::ArrayView2::from_shape((1, qs.len()), qs).ok()?;
                let s = ndarray::ArrayView2::from_shape((1, state.len()), state).ok()?;
                Some(mixer.forward(q, s)[0])
            }
            _ => None,
        }
    }

    /// One TD update on a batch sampled from the replay buffer.
    pub fn td_update(&mut self) -> Result<f64, MarlError> {
        let need = self.config.batch_size;
        let episodes = self
            .buffer
            .sample(need, &mut self.rng)
            .ok_or(MarlError::NotReady {
                have: self.buffer.len(),
                need,
            })?;
        Ok(self.td_update_on(&episodes))
    }

    /// One TD update on the given episodes.
    pub fn td_update_on(&mut self, episodes: &[Arc<Episode>]) -> f64 {
        let batch = self.build_batch(episodes);
        let (loss, mut q_grads, mut mixer_grads) = self.loss_and_grads(&batch);
        {
            let mut parts: Vec<&mut [f64]> = vec![&mut q_grads];
            if let Some(g) = mixer_grads.as_mut() {
                parts.push(g);
            }
            clip_grad_norm(&mut parts, self.config.grad_clip);
        }
        self.q_opt.update(self.q.params_mut(), &q_grads, self.config.lr);
        if let (Some(mixer), Some(opt), Some(g)) =
            (self.mixer.as_mut(), self.mixer_opt.as_mut(), mixer_grads.as_ref())
        {
            let mut p = mixer.flat_params();
            opt.update(&mut p, g, self.config.lr);
            mixer.set_flat_params(&p);
        }
        self.updates += 1;
        loss
    }

    /// TD loss on `episodes` with unclipped gradients for the Q-net and, for
    /// QMIX, the mixer's flat parameters. Parameters are left untouched.
    pub fn loss_gradients(&self, episodes: &[Arc<Episode>]) -> (f64, Vec<f64>, Option<Vec<f64>>) {
        self.loss_and_grads(&self.build_batch(episodes))
    }

    fn build_batch(&self, episodes: &[Arc<Episode>]) -> Batch {
        let l = &self.layout;
        let n = l.n_agents;
        let samples: usize = episodes.iter().map(|e| e.len()).sum();
        let d = l.agent_input_dim();
        let mut batch = Batch {
            inputs: Array2::zeros((samples * n, d)),
            next_inputs: Array2::zeros((samples * n, d)),
            actions: Vec::with_capacity(samples * n),
            agent_rewards: Vec::with_capacity(samples * n),
            rewards: Vec::with_capacity(samples),
            not_done: Vec::with_capacity(samples),
            states: Array2::zeros((samples, l.state_len)),
            next_states: Array2::zeros((samples, l.state_len)),
        };
        let scale = self.config.reward_scale;
        let mut m = 0;
        for ep in episodes {
            for t in 0..ep.len() {
                for i in 0..n {
                    let row = m * n + i;
                    l.write_agent_input(
                        i,
                        &ep.observations[t][i],
                        batch.inputs.row_mut(row).as_slice_mut().unwrap(),
                    );
                    l.write_agent_input(
                        i,
                        &ep.observations[t + 1][i],
                        batch.next_inputs.row_mut(row).as_slice_mut().unwrap(),
                    );
                    batch.actions.push(ep.actions[t][i]);
                    batch.agent_rewards.push(scale * ep.agent_rewards[t][i] as f64);
                }
                batch.rewards.push(scale * ep.rewards[t] as f64);
                batch.not_done.push(if ep.terminated[t] { 0.0 } else { 1.0 });
                for (dst, &src) in batch.states.row_mut(m).iter_mut().zip(&ep.states[t]) {
                    *dst = src as f64;
                }
                for (dst, &src) in batch.next_states.row_mut(m).iter_mut().zip(&ep.states[t + 1]) {
                    *dst = src as f64;
                }
                m += 1;
            }
        }
        batch
    }

    fn loss_and_grads(&self, batch: &Batch) -> (f64, Vec<f64>, Option<Vec<f64>>) {
        let n = self.layout.n_agents;
        let rows = batch.actions.len();
        let samples = rows / n;
        let gamma = self.config.gamma;
        let (q_out, cache) = self.q.forward_batch(batch.inputs.view()).expect("input width");
        let q_next = self
            .q_target
            .predict_batch(batch.next_inputs.view())
            .expect("input width");
        let chosen: Vec<f64> = (0..rows).map(|r| q_out[[r, batch.actions[r]]]).collect();
        let next_max: Vec<f64> = (0..rows)
            .map(|r| {
                let valid = self.layout.action_sizes[r % n];
                let row = q_next.row(r);
                let s = row.as_slice().unwrap();
                s[masked_argmax(s, valid)]
            })
            .collect();

        let mut d_chosen = vec![0.0; rows];
        let mut mixer_grads = None;
        let loss = match self.config.algorithm {
            Algorithm::Iql => {
                let mut loss = 0.0;
                for r in 0..rows {
                    let y = batch.agent_rewards[r] + gamma * batch.not_done[r / n] * next_max[r];
                    let err = chosen[r] - y;
                    loss += err * err;
                    d_chosen[r] = 2.0 * err / samples as f64;
                }
                loss / samples as f64
            }
            Algorithm::Vdn => {
                let mut loss = 0.0;
                for m in 0..samples {
                    let q_tot: f64 = chosen[m * n..(m + 1) * n].iter().sum();
                    let next: f64 = next_max[m * n..(m + 1) * n].iter().sum();
                    let y = batch.rewards[m] + gamma * batch.not_done[m] * next;
                    let err = q_tot - y;
                    loss += err * err;
                    for i in 0..n {
                        d_chosen[m * n + i] = 2.0 * err / samples as f64;
                    }
                }
                loss / samples as f64
            }
            Algorithm::Qmix => {
                let mixer = self.mixer.as_ref().expect("qmix has a mixer");
                let target = self.mixer_target.as_ref().expect("qmix has a target mixer");
                let qs = Array2::from_shape_vec((samples, n), chosen.clone()).unwrap();
                let qs_next = Array2::from_shape_vec((samples, n), next_max.clone()).unwrap();
                let (q_tot, mcache) = mixer.forward_cached(qs.view(), batch.states.view());
                let next_tot = target.forward(qs_next.view(), batch.next_states.view());
                let mut loss = 0.0;
                let mut upstream = vec![0.0; samples];
                for m in 0..samples {
                    let y = batch.rewards[m] + gamma * batch.not_done[m] * next_tot[m];
                    let err = q_tot[m] - y;
                    loss += err * err;
                    upstream[m] = 2.0 * err / samples as f64;
                }
                let (g, d_qs) = mixer.backward(&mcache, &upstream);
                for (d, v) in d_chosen.iter_mut().zip(d_qs.iter()) {
                    *d = *v;
                }
                mixer_grads = Some(g);
                loss / samples as f64
            }
            other => unreachable!("{other} is not value-based"),
        };

        let mut upstream = Array2::zeros(q_out.raw_dim());
        for (r, mut row) in upstream.axis_iter_mut(Axis(0)).enumerate() {
            row[batch.actions[r]] = d_chosen[r];
        }
        let mut q_grads = vec![0.0; self.q.num_params()];
        self.q.backward(&cache, upstream.view(), &mut q_grads);
        (loss, q_grads, mixer_grads)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut nets = vec![
            ("q".to_string(), self.q.clone()),
            ("q_target".to_string(), self.q_target.clone()),
        ];
        let mut optimizers = vec![("q".to_string(), self.q_opt.clone())];
        if let (Some(m), Some(t), Some(o)) = (&self.mixer, &self.mixer_target, &self.mixer_opt) {
            for (prefix, mix) in [("mixer", m), ("mixer_target", t)] {
                let names = ["w1", "b1", "w2", "v"];
                for (name, net) in names.iter().zip(mix.hypernets()) {
                    nets.push((format!("{prefix}.{name}"), net.clone()));
                }
            }
            optimizers.push(("mixer".to_string(), o.clone()));
        }
        Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            config: self.config.clone(),
            layout: self.layout.clone(),
            seed: self.seed,
            episodes: self.episodes,
            env_steps: self.env_steps,
            updates: self.updates,
            nets,
            optimizers,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, MarlError> {
        let spec = EnvSpec {
            n_agents: ck.layout.n_agents,
            obs_lengths: ck.layout.obs_lengths.clone(),
            action_sizes: ck.layout.action_sizes.clone(),
            state_length: ck.layout.state_len,
            episode_limit: 0,
        };
        let mut t = ValueTrainer::new(ck.config.clone(), &spec, ck.seed)?;
        let missing = |what: &str| MarlError::Config(format!("checkpoint lacks {what}"));
        t.q = ck.net("q").ok_or_else(|| missing("q"))?.clone();
        t.q_target = ck.net("q_target").ok_or_else(|| missing("q_target"))?.clone();
        t.q_opt = ck.optimizer("q").ok_or_else(|| missing("q optimizer"))?.clone();
        if let Some(mixer) = t.mixer.as_mut() {
            for (prefix, target) in [("mixer", false), ("mixer_target", true)] {
                let mut flat = Vec::new();
                for name in ["w1", "b1", "w2", "v"] {
                    let key = format!("{prefix}.{name}");
                    flat.extend_from_slice(ck.net(&key).ok_or_else(|| missing(&key))?.params());
                }
                if target {
                    t.mixer_target.as_mut().unwrap().set_flat_params(&flat);
                } else {
                    mixer.set_flat_params(&flat);
                }
            }
            t.mixer_opt = Some(ck.optimizer("mixer").ok_or_else(|| missing("mixer optimizer"))?.clone());
        }
        t.episodes = ck.episodes;
        t.env_steps = ck.env_steps;
        t.updates = ck.updates;
        let period = t.config.target_update_episodes;
        t.last_sync_episode = ck.episodes / period * period;
        Ok(t)
    }
}
