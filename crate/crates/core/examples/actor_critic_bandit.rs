//! IA2C on a one-step, two-armed bandit. Arm 0 pays 1, arm 1 pays 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsc_lab::env::{EnvSpec, GlobalState, Observation};
use tsc_lab::marl::{ActorCriticTrainer, Algorithm, EpisodeRecorder, Explore, TrainerConfig, Trajectory};

fn main() -> anyhow::Result<()> {
    let spec = EnvSpec {
        n_agents: 1,
        obs_lengths: vec![1],
        action_sizes: vec![2],
        state_length: 1,
        episode_limit: 1,
    };
    let mut trainer = ActorCriticTrainer::new(TrainerConfig::new(Algorithm::Ia2c), &spec, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs = vec![Observation { agent: 0, vector: vec![1.0] }];
    let state = GlobalState { vector: vec![1.0] };

    for update in 0..=500 {
        let snap = trainer.snapshot();
        let trajs: Vec<Trajectory> = (0..8)
            .map(|_| {
                let a = snap.act(&obs, Explore::Sample, &mut rng)[0];
                let r = if a == 0 { 1.0 } else { 0.0 };
                let mut rec = EpisodeRecorder::start(&obs, &state);
                rec.push_raw(vec![a], r, vec![r], vec![vec![1.0]], vec![1.0], true);
                Trajectory { policy_version: snap.version, episode: rec.finish() }
            })
            .collect();
        let stats = trainer.a2c_update(&trajs)?;
        if update % 100 == 0 {
            let p = trainer.policy(0, &[1.0]);
            println!(
                "update {update:>3} pi(best) {:.3} entropy {:.3} value loss {:.4}",
                p[0], stats.entropy, stats.value_loss
            );
        }
    }
    Ok(())
}
