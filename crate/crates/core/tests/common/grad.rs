//! Central finite-difference gradient checks.
//!
//! A coordinate is skipped when the two perturbed evaluations see different
//! piecewise-linear patterns (ReLU signs, `|w|` signs), since the difference
//! quotient then straddles a kink. Skips are counted and reported.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsc_lab::env::{EnvSpec, GlobalState, Observation};
use tsc_lab::marl::{
    ActorCriticTrainer, Algorithm, Episode, EpisodeRecorder, MixingNet, TrainerConfig, Trajectory,
    ValueTrainer,
};
use tsc_lab::nn::DenseNet;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so that two near-zero values
/// compare by absolute difference.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub struct FdStats {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl FdStats {
    pub fn merge(&mut self, o: FdStats) {
        self.max_rel = self.max_rel.max(o.max_rel);
        self.checked += o.checked;
        self.skipped += o.skipped;
    }

    pub fn ok(&self) -> bool {
        self.max_rel < TOLERANCE && self.checked > 0 && self.skipped * 20 <= self.checked
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// `eval(k, delta)` evaluates the loss with coordinate `k` shifted by
/// `delta` (and restored afterwards), returning it with the kink pattern.
pub fn fd_compare<P: PartialEq>(
    analytic: &[f64],
    coords: &[usize],
    mut eval: impl FnMut(usize, f64) -> (f64, P),
) -> FdStats {
    let mut s = FdStats::default();
    for &k in coords {
        let (plus, pp) = eval(k, STEP);
        let (minus, pm) = eval(k, -STEP);
        if pp != pm {
            s.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * STEP);
        s.max_rel = s.max_rel.max(rel_err(analytic[k], numeric));
        s.checked += 1;
    }
    s
}

pub fn sample_coords(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= k {
        (0..n).collect()
    } else {
        index::sample(rng, n, k).into_vec()
    }
}

/// Straight-line forward pass recording the sign of every hidden
/// pre-activation.
pub fn relu_pattern(net: &DenseNet, x: &[f64], out: &mut Vec<bool>) -> Vec<f64> {
    let sizes = net.sizes();
    let p = net.params();
    let mut a = x.to_vec();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (i, o) = (sizes[l], sizes[l + 1]);
        let (w, b) = (&p[off..off + i * o], &p[off + i * o..off + i * o + o]);
        off += i * o + o;
        let last = l + 2 == sizes.len();
        a = (0..o)
            .map(|j| {
                let z = b[j] + (0..i).map(|r| a[r] * w[r * o + j]).sum::<f64>();
                if last {
                    z
                } else {
                    out.push(z > 0.0);
                    z.max(0.0)
                }
            })
            .collect();
    }
    a
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// `L = Σ U ⊙ f(X)` for a random batch: checks parameter and input gradients.
pub fn check_dense(sizes: &[usize], seed: u64, param_samples: usize) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DenseNet::new(sizes, &mut rng);
    let batch = 3;
    let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random::<f64>());
    let u = random_matrix(batch, *sizes.last().unwrap(), &mut rng);
    let (_, cache) = net.forward_batch(x.view()).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    let dx = net.backward(&cache, u.view(), &mut grads);

    let loss = |net: &DenseNet, x: &Array2<f64>| {
        let mut pattern = Vec::new();
        let mut l = 0.0;
        for r in 0..batch {
            let y = relu_pattern(net, x.row(r).as_slice().unwrap(), &mut pattern);
            l += y.iter().zip(u.row(r)).map(|(a, b)| a * b).sum::<f64>();
        }
        (l, pattern)
    };
    let coords = sample_coords(net.num_params(), param_samples, &mut rng);
    let mut stats = fd_compare(&grads, &coords, |k, d| {
        net.params_mut()[k] += d;
        let out = loss(&net, &x);
        net.params_mut()[k] -= d;
        out
    });
    let flat_dx: Vec<f64> = dx.iter().copied().collect();
    let mut xm = x.clone();
    let all: Vec<usize> = (0..flat_dx.len()).collect();
    stats.merge(fd_compare(&flat_dx, &all, |k, d| {
        let (r, c) = (k / sizes[0], k % sizes[0]);
        xm[[r, c]] += d;
        let out = loss(&net, &xm);
        xm[[r, c]] -= d;
        out
    }));
    stats
}

fn mixer_pattern(mixer: &MixingNet, states: &Array2<f64>) -> Vec<bool> {
    let mut p = Vec::new();
    for r in 0..states.nrows() {
        let s = states.row(r).to_vec();
        for (k, net) in mixer.hypernets().into_iter().enumerate() {
            let y = relu_pattern(net, &s, &mut p);
            if k == 0 || k == 2 {
                p.extend(y.iter().map(|&w| w >= 0.0));
            }
        }
    }
    p
}

/// `L = Σ u · Q_tot` through the mixing network: parameter and per-agent Q
/// gradients.
pub fn check_mixer(n: usize, state_dim: usize, embed: usize, hidden: usize, seed: u64, param_samples: usize) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mixer = MixingNet::new(n, state_dim, embed, hidden, &mut rng);
    let batch = 3;
    let qs = random_matrix(batch, n, &mut rng) * 3.0;
    let states = Array2::from_shape_fn((batch, state_dim), |_| rng.random::<f64>());
    let u: Vec<f64> = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, cache) = mixer.forward_cached(qs.view(), states.view());
    let (grads, dqs) = mixer.backward(&cache, &u);
    let loss = |m: &MixingNet, qs: &Array2<f64>| {
        let out = m.forward(qs.view(), states.view());
        (out.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>(), mixer_pattern(m, &states))
    };
    let mut flat = mixer.flat_params();
    let coords = sample_coords(flat.len(), param_samples, &mut rng);
    let mut stats = fd_compare(&grads, &coords, |k, d| {
        flat[k] += d;
        mixer.set_flat_params(&flat);
        let out = loss(&mixer, &qs);
        flat[k] -= d;
        mixer.set_flat_params(&flat);
        out
    });
    let flat_dq: Vec<f64> = dqs.iter().copied().collect();
    let mut qm = qs.clone();
    let all: Vec<usize> = (0..flat_dq.len()).collect();
    stats.merge(fd_compare(&flat_dq, &all, |k, d| {
        qm[[k / n, k % n]] += d;
        let out = loss(&mixer, &qm);
        qm[[k / n, k % n]] -= d;
        out
    }));
    stats
}

pub fn random_episode(spec: &EnvSpec, len: usize, rng: &mut ChaCha8Rng) -> Episode {
    let obs = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..spec.n_agents)
            .map(|i| (0..spec.obs_lengths[i]).map(|_| rng.random::<f64>()).collect())
            .collect()
    };
    let state = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..spec.state_length).map(|_| rng.random::<f64>()).collect() };
    let first: Vec<Observation> = obs(rng)
        .into_iter()
        .enumerate()
        .map(|(agent, vector)| Observation { agent, vector })
        .collect();
    let mut rec = EpisodeRecorder::start(&first, &GlobalState { vector: state(rng) });
    for t in 0..len {
        let actions = (0..spec.n_agents).map(|i| rng.random_range(0..spec.action_sizes[i])).collect();
        let agent_rewards: Vec<f64> = (0..spec.n_agents).map(|_| -rng.random_range(0.0..2.0)).collect();
        let r = agent_rewards.iter().sum();
        rec.push_raw(actions, r, agent_rewards, obs(rng), state(rng), t + 1 == len);
    }
    rec.finish()
}

fn q_inputs(t: &ValueTrainer, episodes: &[Arc<Episode>]) -> Vec<Vec<f64>> {
    let l = t.layout();
    let mut rows = Vec::new();
    for ep in episodes {
        for step in &ep.observations[..ep.len()] {
            for (i, o) in step.iter().enumerate() {
                let o: Vec<f64> = o.iter().map(|&x| x as f64).collect();
                let mut x = vec![0.0; l.agent_input_dim()];
                l.write_agent_input(i, &o, &mut x);
                rows.push(x);
            }
        }
    }
    rows
}

fn states_of(episodes: &[Arc<Episode>]) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = episodes
        .iter()
        .flat_map(|ep| ep.states[..ep.len()].iter().map(|s| s.iter().map(|&x| x as f64).collect()))
        .collect();
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(r, c)| rows[r][c])
}

/// TD-loss gradients of a value trainer against finite differences of the
/// same loss, for the agent network and (QMIX) the mixer.
pub fn check_td_loss(alg: Algorithm, spec: &EnvSpec, seed: u64, param_samples: usize) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = TrainerConfig::new(alg);
    cfg.hidden_dim = 16;
    cfg.mixer_embed = 8;
    cfg.hypernet_hidden = 16;
    let mut t = ValueTrainer::new(cfg, spec, seed).unwrap();
    // Move the online nets away from the targets so the TD error is not trivial.
    for p in t.q_net_mut().params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    let episodes: Vec<Arc<Episode>> = (0..2).map(|_| Arc::new(random_episode(spec, 3, &mut rng))).collect();
    let (_, q_grads, mixer_grads) = t.loss_gradients(&episodes);
    let inputs = q_inputs(&t, &episodes);
    let states = states_of(&episodes);
    let pattern = |t: &ValueTrainer| {
        let mut p = Vec::new();
        for x in &inputs {
            relu_pattern(t.q_net(), x, &mut p);
        }
        if let Some(m) = t.mixer() {
            p.extend(mixer_pattern(m, &states));
        }
        p
    };
    let coords = sample_coords(t.q_net().num_params(), param_samples, &mut rng);
    let mut stats = fd_compare(&q_grads, &coords, |k, d| {
        t.q_net_mut().params_mut()[k] += d;
        let out = (t.loss_gradients(&episodes).0, pattern(&t));
        t.q_net_mut().params_mut()[k] -= d;
        out
    });
    if let Some(mg) = mixer_grads {
        let mut flat = t.mixer().unwrap().flat_params();
        let coords = sample_coords(flat.len(), param_samples, &mut rng);
        stats.merge(fd_compare(&mg, &coords, |k, d| {
            flat[k] += d;
            t.mixer_mut().unwrap().set_flat_params(&flat);
            let out = (t.loss_gradients(&episodes).0, pattern(&t));
            flat[k] -= d;
            t.mixer_mut().unwrap().set_flat_params(&flat);
            out
        }));
    }
    stats
}

/// Actor gradient against the policy loss and critic gradient against the
/// value loss, on terminated episodes so no bootstrap target moves.
pub fn check_a2c(alg: Algorithm, spec: &EnvSpec, seed: u64, param_samples: usize) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = TrainerConfig::new(alg);
    cfg.hidden_dim = 16;
    let mut t = ActorCriticTrainer::new(cfg, spec, seed).unwrap();
    let trajs: Vec<Trajectory> = (0..2)
        .map(|_| Trajectory {
            policy_version: 0,
            episode: random_episode(spec, 4, &mut rng),
        })
        .collect();
    let (_, a_grads, c_grads) = t.a2c_gradients(&trajs).unwrap();
    let l = t.layout().clone();
    let mut actor_in = Vec::new();
    let mut critic_in = Vec::new();
    for tr in &trajs {
        let ep = &tr.episode;
        for s in 0..ep.len() {
            for i in 0..spec.n_agents {
                let mut x = vec![0.0; l.agent_input_dim()];
                let o: Vec<f64> = ep.observations[s][i].iter().map(|&v| v as f64).collect();
                l.write_agent_input(i, &o, &mut x);
                actor_in.push(x.clone());
                if alg == Algorithm::Maa2c {
                    let st: Vec<f64> = ep.states[s].iter().map(|&v| v as f64).collect();
                    let mut y = vec![0.0; l.state_input_dim()];
                    l.write_state_input(i, &st, &mut y);
                    critic_in.push(y);
                } else {
                    critic_in.push(x);
                }
            }
        }
    }
    let pattern = |net: &DenseNet, rows: &[Vec<f64>]| {
        let mut p = Vec::new();
        for x in rows {
            relu_pattern(net, x, &mut p);
        }
        p
    };
    let coords = sample_coords(t.actor().num_params(), param_samples, &mut rng);
    let mut stats = fd_compare(&a_grads, &coords, |k, d| {
        t.actor_mut().params_mut()[k] += d;
        let out = (t.a2c_gradients(&trajs).unwrap().0.policy_loss, pattern(t.actor(), &actor_in));
        t.actor_mut().params_mut()[k] -= d;
        out
    });
    let coords = sample_coords(t.critic().num_params(), param_samples, &mut rng);
    stats.merge(fd_compare(&c_grads, &coords, |k, d| {
        t.critic_mut().params_mut()[k] += d;
        let out = (t.a2c_gradients(&trajs).unwrap().0.value_loss, pattern(t.critic(), &critic_in));
        t.critic_mut().params_mut()[k] -= d;
        out
    }));
    stats
}

/// 2×2 two-phase grid layout.
pub fn grid_spec() -> EnvSpec {
    EnvSpec {
        n_agents: 4,
        obs_lengths: vec![14; 4],
        action_sizes: vec![2; 4],
        state_length: 80,
        episode_limit: 72,
    }
}

/// Signals of different widths: exercises padding and action masking.
pub fn mixed_spec() -> EnvSpec {
    EnvSpec {
        n_agents: 3,
        obs_lengths: vec![14, 10, 16],
        action_sizes: vec![2, 4, 3],
        state_length: 40,
        episode_limit: 72,
    }
}

/// Every network shape the trainers build for `spec` with hidden width `h`,
/// mixer embedding `e` and hypernetwork width `hh`.
pub fn architectures(spec: &EnvSpec, h: usize, e: usize, hh: usize) -> Vec<(&'static str, Vec<usize>)> {
    let n = spec.n_agents;
    let obs_in = spec.obs_lengths.iter().max().unwrap() + n;
    let acts = *spec.action_sizes.iter().max().unwrap();
    let s = spec.state_length;
    vec![
        ("q_net_and_actor", vec![obs_in, h, h, acts]),
        ("critic_ia2c", vec![obs_in, h, h, 1]),
        ("critic_maa2c", vec![s + n, h, h, 1]),
        ("hyper_w1", vec![s, hh, n * e]),
        ("hyper_b1", vec![s, e]),
        ("hyper_w2", vec![s, hh, e]),
        ("hyper_v", vec![s, e, 1]),
    ]
}
