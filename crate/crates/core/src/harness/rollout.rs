use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::EpisodeMetrics;
use crate::baselines::Controller;
use crate::env::{EnvError, Observation, StepInfo, TrafficSignalEnv};
use crate::marl::{Episode, EpisodeRecorder, Explore, PolicySnapshot};

/// Chooses joint actions during a rollout.
#[derive(Debug, Clone)]
pub enum Driver {
    /// A frozen network policy; sees observations only.
    Policy {
        snapshot: Arc<PolicySnapshot>,
        explore: Explore,
        rng: ChaCha8Rng,
    },
    /// A rule-based controller; reads loop-detector totals from the env.
    Controller(Controller),
}

impl Driver {
    fn begin_episode(&mut self) {
        if let Driver::Controller(c) = self {
            c.reset();
        }
    }

    fn act(&mut self, env: &TrafficSignalEnv, observations: &[Observation]) -> Vec<usize> {
        match self {
            Driver::Policy {
                snapshot,
                explore,
                rng,
            } => snapshot.act(observations, *explore, rng),
            Driver::Controller(c) => c.act_on(env),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Recorded transitions, when requested.
    pub episode: Option<Episode>,
    pub metrics: EpisodeMetrics,
    pub rewards: Vec<f64>,
    pub infos: Vec<StepInfo>,
}

/// Plays one full episode. `seed` restarts the env's seed sequence;
/// `None` continues it.
pub fn run_episode(
    env: &mut TrafficSignalEnv,
    driver: &mut Driver,
    seed: Option<u64>,
    record: bool,
) -> Result<Rollout, EnvError> {
    let (mut obs, state) = match seed {
        Some(s) => env.reset_with_seed(s),
        None => env.reset(),
    };
    driver.begin_episode();
    let mut recorder = record.then(|| EpisodeRecorder::start(&obs, &state));
    let mut rewards = Vec::with_capacity(env.config().episode_limit);
    let mut infos = Vec::with_capacity(env.config().episode_limit);
    loop {
        let actions = driver.act(env, &obs);
        let result = env.step(&actions)?;
        if let Some(r) = recorder.as_mut() {
            r.push(&actions, &result);
        }
        rewards.push(result.reward);
        infos.push(result.info);
        let done = result.terminated;
        obs = result.observations;
        if done {
            break;
        }
    }
    let metrics = EpisodeMetrics::from_steps(&rewards, &infos, env);
    Ok(Rollout {
        episode: recorder.map(EpisodeRecorder::finish),
        metrics,
        rewards,
        infos,
    })
}

/// Runs one episode per environment concurrently; results come back in
/// environment order regardless of thread scheduling.
pub fn run_parallel(
    envs: &mut [TrafficSignalEnv],
    drivers: &mut [Driver],
    seeds: &[Option<u64>],
    record: bool,
) -> Result<Vec<Rollout>, EnvError> {
    assert_eq!(envs.len(), drivers.len());
    assert_eq!(envs.len(), seeds.len());
    if envs.len() == 1 {
        return Ok(vec![run_episode(&mut envs[0], &mut drivers[0], seeds[0], record)?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = envs
            .iter_mut()
            .zip(drivers.iter_mut())
            .zip(seeds)
            .map(|((env, driver), &seed)| scope.spawn(move || run_episode(env, driver, seed, record)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rollout thread panicked"))
            .collect()
    })
}
