//! One episode of the multi-agent environment under random actions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsc_lab::env::{EnvConfig, TrafficSignalEnv};
use tsc_lab::mesosim::{generate_trips, TripSpec};
use tsc_lab::netgraph::{generate_grid, GridSpec};

fn main() -> anyhow::Result<()> {
    let net = Arc::new(generate_grid(&GridSpec::new(2, 2))?);
    let flows = generate_trips(&net, &TripSpec::uniform(400.0));
    let mut env = TrafficSignalEnv::new(EnvConfig::new(net, flows).with_seed(3))?;
    let spec = env.spec();
    println!(
        "{} agents, obs {:?}, actions {:?}, state {}, limit {}",
        spec.n_agents, spec.obs_lengths, spec.action_sizes, spec.state_length, spec.episode_limit
    );

    let (obs, state) = env.reset();
    println!("first observation of agent 0: {:?}", obs[0].vector);
    println!("state length {}", state.vector.len());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ret = 0.0;
    loop {
        let actions: Vec<usize> = (0..spec.n_agents).map(|i| rng.random_range(0..spec.action_sizes[i])).collect();
        let r = env.step(&actions)?;
        ret += r.reward;
        if env.steps() % 12 == 0 {
            println!("step {:>2} reward {:>6.1} queue {:>3}", env.steps(), r.reward, r.info.queue_sum);
        }
        if r.terminated {
            break;
        }
    }
    println!("return {ret:.1}");
    Ok(())
}
