use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    clip_grad_norm, entropy, masked_softmax, AgentLayout, Algorithm, Checkpoint, Episode,
    MarlError, PolicyKind, PolicySnapshot, TrainerConfig, CHECKPOINT_FORMAT,
};
use crate::env::EnvSpec;
use crate::nn::{Adam, DenseNet};

/// Gradient of `-mean(log π(a)·A) - coef·mean(H)` with respect to the
/// logits, plus the objective value and the mean entropy.
fn actor_objective(
    layout: &AgentLayout,
    logits: &Array2<f64>,
    actions: &[usize],
    advantages: &[f64],
    coef: f64,
) -> (Array2<f64>, f64, f64) {
    let n = layout.n_agents;
    let rows = actions.len();
    let m = rows as f64;
    let mut d = Array2::zeros(logits.raw_dim());
    let (mut loss, mut mean_h) = (0.0, 0.0);
    for r in 0..rows {
        let valid = layout.action_sizes[r % n];
        let p = masked_softmax(logits.row(r).as_slice().unwrap(), valid);
        let h = entropy(&p[..valid]);
        let (a, adv) = (actions[r], advantages[r]);
        loss += (-(p[a].ln() * adv) - coef * h) / m;
        mean_h += h / m;
        for j in 0..valid {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let d_logp = onehot - p[j];
            let d_ent = -p[j] * (p[j].ln() + h);
            d[[r, j]] = (-(adv * d_logp) - coef * d_ent) / m;
        }
    }
    (d, loss, mean_h)
}

/// An episode tagged with the actor version that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub policy_version: u64,
    pub episode: Episode,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct A2cStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// IA2C and MAA2C: a shared softmax actor over agent observations and a
/// shared critic over the agent observation (IA2C) or the global state
/// (MAA2C), both with the agent one-hot appended.
#[derive(Debug, Clone)]
pub struct ActorCriticTrainer {
    config: TrainerConfig,
    layout: AgentLayout,
    seed: u64,
    actor: DenseNet,
    critic: DenseNet,
    actor_opt: Adam,
    critic_opt: Adam,
    version: u64,
    episodes: u64,
    env_steps: u64,
}

impl ActorCriticTrainer {
    pub fn new(config: TrainerConfig, spec: &EnvSpec, seed: u64) -> Result<Self, MarlError> {
        if config.algorithm.is_value_based() {
            return Err(MarlError::AlgorithmMismatch(config.algorithm));
        }
        config.validate()?;
        let layout = AgentLayout::from_spec(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_dim;
        let actor = DenseNet::new(&[layout.agent_input_dim(), h, h, layout.max_actions], &mut rng);
        let critic_in = match config.algorithm {
            Algorithm::Maa2c => layout.state_input_dim(),
            _ => layout.agent_input_dim(),
        };
        let critic = DenseNet::new(&[critic_in, h, h, 1], &mut rng);
        Ok(ActorCriticTrainer {
            actor_opt: Adam::new(actor.num_params()),
            critic_opt: Adam::new(critic.num_params()),
            actor,
            critic,
            layout,
            seed,
            config,
            version: 0,
            episodes: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn critic(&self) -> &DenseNet {
        &self.critic
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            kind: PolicyKind::Softmax,
            layout: self.layout.clone(),
            net: self.actor.clone(),
            version: self.version,
        }
    }

    pub fn params_finite(&self) -> bool {
        self.actor.all_finite() && self.critic.all_finite()
    }

    /// Action probabilities for one agent observation.
    pub fn policy(&self, agent: usize, obs: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.agent_input_dim()];
        self.layout.write_agent_input(agent, obs, &mut x);
        let logits = self.actor.forward(&x).expect("input width");
        masked_softmax(&logits, self.layout.action_sizes[agent])
    }

    fn critic_row(&self, agent: usize, ep: &Episode, t: usize, out: &mut [f64]) {
        match self.config.algorithm {
            Algorithm::Maa2c => self.layout.write_state_input(agent, &ep.states[t], out),
            _ => self.layout.write_agent_input(agent, &ep.observations[t][agent], out),
        }
    }

    pub fn actor_mut(&mut self) -> &mut DenseNet {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut DenseNet {
        &mut self.critic
    }

    /// One actor and one critic Adam step on fresh on-policy trajectories.
    pub fn a2c_update(&mut self, trajectories: &[Trajectory]) -> Result<A2cStats, MarlError> {
        let (stats, mut a_grads, mut c_grads) = self.a2c_gradients(trajectories)?;
        clip_grad_norm(&mut [&mut a_grads], self.config.grad_clip);
        clip_grad_norm(&mut [&mut c_grads], self.config.grad_clip);
        self.actor_opt.update(self.actor.params_mut(), &a_grads, self.config.lr);
        self.critic_opt.update(self.critic.params_mut(), &c_grads, self.config.lr);
        self.version += 1;
        self.episodes += trajectories.len() as u64;
        self.env_steps += trajectories.iter().map(|t| t.episode.len() as u64).sum::<u64>();
        Ok(stats)
    }

    /// Losses and unclipped actor and critic gradients; the advantages are
    /// treated as constants in the actor gradient.
    pub fn a2c_gradients(
        &self,
        trajectories: &[Trajectory],
    ) -> Result<(A2cStats, Vec<f64>, Vec<f64>), MarlError> {
        if let Some(stale) = trajectories.iter().find(|t| t.policy_version != self.version) {
            return Err(MarlError::StalePolicy {
                expected: self.version,
                got: stale.policy_version,
            });
        }
        let l = &self.layout;
        let n = l.n_agents;
        let gamma = self.config.gamma;
        let scale = self.config.reward_scale;
        let rows: usize = trajectories.iter().map(|t| t.episode.len() * n).sum();
        if rows == 0 {
            return Ok((
                A2cStats::default(),
                vec![0.0; self.actor.num_params()],
                vec![0.0; self.critic.num_params()],
            ));
        }
        let mut actor_in = Array2::zeros((rows, l.agent_input_dim()));
        let mut critic_in = Array2::zeros((rows, self.critic.input_dim()));
        let mut actions = Vec::with_capacity(rows);
        let mut returns = vec![0.0; rows];

        let mut r0 = 0;
        for traj in trajectories {
            let ep = &traj.episode;
            let len = ep.len();
            // Bootstrap from the critic when the last step did not terminate.
            let mut tail = vec![0.0; n];
            if len > 0 && !ep.terminated[len - 1] {
                let mut x = vec![0.0; self.critic.input_dim()];
                for (i, v) in tail.iter_mut().enumerate() {
                    self.critic_row(i, ep, len, &mut x);
                    *v = self.critic.forward(&x).expect("input width")[0];
                }
            }
            for t in 0..len {
                for i in 0..n {
                    let row = r0 + t * n + i;
                    l.write_agent_input(i, &ep.observations[t][i], actor_in.row_mut(row).as_slice_mut().unwrap());
                    self.critic_row(i, ep, t, critic_in.row_mut(row).as_slice_mut().unwrap());
                    actions.push(ep.actions[t][i]);
                }
            }
            let mut running = tail;
            for t in (0..len).rev() {
                for (i, acc) in running.iter_mut().enumerate() {
                    *acc = scale * ep.agent_rewards[t][i] as f64 + gamma * *acc;
                    returns[r0 + t * n + i] = *acc;
                }
            }
            r0 += len * n;
        }

        let (values, c_cache) = self.critic.forward_batch(critic_in.view()).expect("input width");
        let (logits, a_cache) = self.actor.forward_batch(actor_in.view()).expect("input width");
        let m = rows as f64;
        let mut d_values = Array2::zeros((rows, 1));
        let mut advantages = vec![0.0; rows];
        let mut stats = A2cStats::default();
        for r in 0..rows {
            let adv = returns[r] - values[[r, 0]];
            advantages[r] = adv;
            stats.value_loss += adv * adv / m;
            d_values[[r, 0]] = -2.0 * adv / m;
        }
        let (d_logits, policy_loss, mean_entropy) =
            actor_objective(l, &logits, &actions, &advantages, self.config.entropy_coef);
        stats.policy_loss = policy_loss;
        stats.entropy = mean_entropy;

        let mut a_grads = vec![0.0; self.actor.num_params()];
        self.actor.backward(&a_cache, d_logits.view(), &mut a_grads);
        let mut c_grads = vec![0.0; self.critic.num_params()];
        self.critic.backward(&c_cache, d_values.view(), &mut c_grads);
        Ok((stats, a_grads, c_grads))
    }

    /// Parameter gradients of the actor objective without applying them;
    /// exposed for gradient checks.
    pub fn policy_gradient(&self, traj: &Trajectory, advantages: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let n = l.n_agents;
        let ep = &traj.episode;
        let rows = ep.len() * n;
        let mut x = Array2::zeros((rows, l.agent_input_dim()));
        for t in 0..ep.len() {
            for i in 0..n {
                l.write_agent_input(i, &ep.observations[t][i], x.row_mut(t * n + i).as_slice_mut().unwrap());
            }
        }
        let (logits, cache) = self.actor.forward_batch(x.view()).expect("input width");
        let actions: Vec<usize> = (0..rows).map(|r| ep.actions[r / n][r % n]).collect();
        let (d, _, _) = actor_objective(l, &logits, &actions, advantages, self.config.entropy_coef);
        let mut g = vec![0.0; self.actor.num_params()];
        self.actor.backward(&cache, d.view(), &mut g);
        g
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            config: self.config.clone(),
            layout: self.layout.clone(),
            seed: self.seed,
            episodes: self.episodes,
            env_steps: self.env_steps,
            updates: self.version,
            nets: vec![
                ("actor".into(), self.actor.clone()),
                ("critic".into(), self.critic.clone()),
            ],
            optimizers: vec![
                ("actor".into(), self.actor_opt.clone()),
                ("critic".into(), self.critic_opt.clone()),
            ],
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
        let mut t = ActorCriticTrainer::new(ck.config.clone(), &spec, ck.seed)?;
        let missing = |what: &str| MarlError::Config(format!("checkpoint lacks {what}"));
        t.actor = ck.net("actor").ok_or_else(|| missing("actor"))?.clone();
        t.critic = ck.net("critic").ok_or_else(|| missing("critic"))?.clone();
        t.actor_opt = ck.optimizer("actor").ok_or_else(|| missing("actor optimizer"))?.clone();
        t.critic_opt = ck.optimizer("critic").ok_or_else(|| missing("critic optimizer"))?.clone();
        t.version = ck.updates;
        t.episodes = ck.episodes;
        t.env_steps = ck.env_steps;
        Ok(t)
    }
}
