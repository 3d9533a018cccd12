//! A short IQL training run on the 2x2 desk scenario, next to FixedTime.
//! A few hundred episodes only show the pipeline. Beating FixedTime takes
//! the full 2000-episode `presets/desk_2x2_iql.json` run.

use std::collections::BTreeMap;

use tsc_lab::baselines::ControllerSpec;
use tsc_lab::harness::{evaluate, train, EvalAgent, RunConfig, Scenario, EVAL_SEED_OFFSET};
use tsc_lab::marl::{Algorithm, EpsilonSchedule, TrainerConfig};
use tsc_lab::mesosim::TripSpec;

fn main() -> anyhow::Result<()> {
    let mut trips = TripSpec::uniform(200.0);
    trips.rate_by_prefix = BTreeMap::from([("W".into(), 700.0), ("E".into(), 700.0)]);
    let out = std::env::temp_dir().join("tsclab_train_iql");
    let mut cfg = RunConfig::new(Scenario::grid(2, 2, trips));
    let mut t = TrainerConfig::new(Algorithm::Iql);
    t.reward_scale = 0.01;
    // Anneal over 100 episodes instead of the default 50k steps.
    t.epsilon = EpsilonSchedule { anneal_steps: 72 * 100, ..EpsilonSchedule::default() };
    cfg.trainer = Some(t);
    cfg.total_env_steps = 72 * 200;
    cfg.eval_interval = 50;
    cfg.eval_episodes = 5;
    cfg.updates_per_batch = 8;
    cfg.seed = 1;
    cfg.output_dir = out.clone();

    let summary = train(&cfg)?;
    println!("{} episodes, {} env steps", summary.episodes, summary.env_steps);
    for (ep, report) in &summary.evaluations {
        println!("after {ep:>3} episodes: greedy mean queue {:.2}", report.summary.mean_queue);
    }

    let env = cfg.scenario.env_config(cfg.seed)?;
    let fixed = evaluate(&env, &EvalAgent::Controller(ControllerSpec::fixed_time()), 5, cfg.seed + EVAL_SEED_OFFSET, 1)?;
    println!("fixed time reference:  mean queue {:.2}", fixed.summary.mean_queue);
    println!("artifacts in {}", out.display());
    Ok(())
}
