use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    run_parallel, Driver, EvalReport, HarnessError, Rollout, RunConfig, EPISODE_COLUMNS,
    EVAL_COLUMNS,
};
use crate::baselines::ControllerSpec;
use crate::env::{EnvConfig, TrafficSignalEnv};
use crate::marl::{Checkpoint, Explore, PolicySnapshot, Trainer, Trajectory};

/// Offset between the training seed and the seed of evaluation episodes.
pub const EVAL_SEED_OFFSET: u64 = 1_000_000;

/// What plays the evaluation episodes.
#[derive(Debug, Clone)]
pub enum EvalAgent {
    /// Greedy network policy.
    Policy(Arc<PolicySnapshot>),
    Controller(ControllerSpec),
}

fn exploration_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5851_F42D_4C95_7F2D)
}

/// Plays `episodes` evaluation episodes. Episode `j` resets with seed
/// `seed + j`, so the report does not depend on `parallel`.
pub fn evaluate(
    env_config: &EnvConfig,
    agent: &EvalAgent,
    episodes: usize,
    seed: u64,
    parallel: usize,
) -> Result<EvalReport, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::Config("evaluation needs at least one episode".into()));
    }
    let k = parallel.clamp(1, episodes);
    let mut envs = (0..k)
        .map(|_| TrafficSignalEnv::new(env_config.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let n = envs[0].n_agents();
    let interval = env_config.action_interval as f64;
    let mut metrics = Vec::with_capacity(episodes);
    let mut j = 0;
    while j < episodes {
        let batch = k.min(episodes - j);
        let mut drivers: Vec<Driver> = (j..j + batch)
            .map(|e| {
                let s = seed.wrapping_add(e as u64);
                match agent {
                    EvalAgent::Policy(p) => Driver::Policy {
                        snapshot: p.clone(),
                        explore: Explore::Greedy,
                        rng: exploration_rng(s),
                    },
                    EvalAgent::Controller(spec) => Driver::Controller(spec.build(n, interval, s)),
                }
            })
            .collect();
        let seeds: Vec<Option<u64>> = (j..j + batch).map(|e| Some(seed.wrapping_add(e as u64))).collect();
        let rollouts = run_parallel(&mut envs[..batch], &mut drivers, &seeds, false)?;
        metrics.extend(rollouts.iter().map(|r| r.metrics));
        j += batch;
    }
    Ok(EvalReport::new(metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub episodes: u64,
    pub env_steps: u64,
    pub evaluations: Vec<(u64, EvalReport)>,
    pub final_checkpoint: PathBuf,
}

struct Artifacts {
    dir: PathBuf,
    metrics: csv::Writer<File>,
    eval: csv::Writer<File>,
    steps: Option<csv::Writer<File>>,
    log: BufWriter<File>,
}

fn create(path: &Path) -> Result<File, HarnessError> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

impl Artifacts {
    fn open(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| HarnessError::io(&dir, e))?;
        let mut metrics = csv::Writer::from_writer(create(&dir.join("metrics.csv"))?);
        metrics.write_record(EPISODE_COLUMNS)?;
        metrics.flush().map_err(|e| HarnessError::io(&dir, e))?;
        let mut eval = csv::Writer::from_writer(create(&dir.join("eval.csv"))?);
        eval.write_record(EVAL_COLUMNS)?;
        eval.flush().map_err(|e| HarnessError::io(&dir, e))?;
        let steps = if cfg.log_steps {
            let mut w = csv::Writer::from_writer(create(&dir.join("steps.csv"))?);
            w.write_record(["episode", "step", "reward", "queue_sum", "mean_delay", "mean_occupancy"])?;
            Some(w)
        } else {
            None
        };
        let log = BufWriter::new(create(&dir.join("train_log.jsonl"))?);
        Ok(Artifacts {
            dir,
            metrics,
            eval,
            steps,
            log,
        })
    }

    fn episode_row(
        &mut self,
        episode: u64,
        env_steps: u64,
        rollout: &Rollout,
        epsilon: Option<f64>,
        loss: Option<f64>,
    ) -> Result<(), HarnessError> {
        let mut row = vec![episode.to_string(), env_steps.to_string()];
        row.extend(rollout.metrics.csv_fields());
        row.push(epsilon.map_or(String::new(), |e| e.to_string()));
        row.push(loss.map_or(String::new(), |l| l.to_string()));
        self.metrics.write_record(&row)?;
        if let Some(w) = self.steps.as_mut() {
            for (t, (r, info)) in rollout.rewards.iter().zip(&rollout.infos).enumerate() {
                w.write_record([
                    episode.to_string(),
                    (t + 1).to_string(),
                    r.to_string(),
                    info.queue_sum.to_string(),
                    info.mean_delay.to_string(),
                    info.mean_occupancy.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    fn eval_row(&mut self, episode: u64, env_steps: u64, report: &EvalReport) -> Result<(), HarnessError> {
        let mut row = vec![episode.to_string(), env_steps.to_string()];
        row.extend(report.summary.csv_fields());
        self.eval.write_record(&row)?;
        self.flush()
    }

    fn checkpoint(&self, name: &str, ck: &Checkpoint) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join("checkpoints").join(name);
        fs::write(&path, ck.to_json()).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }

    fn flush(&mut self) -> Result<(), HarnessError> {
        let dir = self.dir.clone();
        let io = |e| HarnessError::io(&dir, e);
        self.metrics.flush().map_err(io)?;
        self.eval.flush().map_err(io)?;
        if let Some(w) = self.steps.as_mut() {
            w.flush().map_err(io)?;
        }
        self.log.flush().map_err(io)
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a RunConfig,
    seed: u64,
    crate_version: &'static str,
    env_spec: crate::env::EnvSpec,
}

/// Trains the configured algorithm, writing `metrics.csv`, `eval.csv`,
/// `train_log.jsonl`, `run.json` and checkpoints under `output_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary, HarnessError> {
    cfg.validate()?;
    let tcfg = cfg
        .trainer
        .clone()
        .ok_or_else(|| HarnessError::Config("train needs a \"trainer\" section".into()))?;
    let k = cfg.parallel_envs;
    let mut envs = (0..k)
        .map(|i| {
            let c = cfg.scenario.env_config(cfg.seed.wrapping_add(i as u64))?;
            Ok(TrafficSignalEnv::new(c)?)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let eval_config = cfg.scenario.env_config(cfg.seed)?;
    let spec = envs[0].spec();
    let episode_len = spec.episode_limit as u64;
    let mut trainer = Trainer::new(tcfg, &spec, cfg.seed)?;

    let mut out = Artifacts::open(cfg)?;
    write_json(
        &cfg.output_dir.join("run.json"),
        &RunRecord {
            config: cfg,
            seed: cfg.seed,
            crate_version: env!("CARGO_PKG_VERSION"),
            env_spec: spec.clone(),
        },
    )?;
    out.checkpoint("initial.json", &trainer.checkpoint())?;

    let mut rngs: Vec<ChaCha8Rng> = (0..k)
        .map(|i| exploration_rng(cfg.seed.wrapping_add(i as u64)))
        .collect();
    let mut episodes = 0u64;
    let mut env_steps = 0u64;
    let mut evaluations = Vec::new();
    let mut next_eval = cfg.eval_interval;
    let total_episodes = cfg.total_env_steps.div_ceil(episode_len);

    while episodes < total_episodes {
        let batch = (k as u64).min(total_episodes - episodes) as usize;
        let snapshot = Arc::new(trainer.snapshot());
        let explore = trainer.training_explore();
        let epsilon = match explore {
            Explore::Epsilon(e) => Some(e),
            _ => None,
        };
        let mut drivers: Vec<Driver> = rngs[..batch]
            .iter()
            .map(|rng| Driver::Policy {
                snapshot: snapshot.clone(),
                explore,
                rng: rng.clone(),
            })
            .collect();
        let seeds = vec![None; batch];
        let rollouts = run_parallel(&mut envs[..batch], &mut drivers, &seeds, true)?;
        for (slot, d) in drivers.into_iter().enumerate() {
            if let Driver::Policy { rng, .. } = d {
                rngs[slot] = rng;
            }
        }

        let mut loss = None;
        let mut rows = Vec::with_capacity(batch);
        let mut returns = 0.0;
        match &mut trainer {
            Trainer::Value(t) => {
                for r in &rollouts {
                    t.observe_episode(r.episode.clone().expect("recorded"));
                }
                for _ in 0..cfg.updates_per_batch {
                    if let Ok(l) = t.td_update() {
                        loss = Some(l);
                    }
                }
            }
            Trainer::ActorCritic(t) => {
                let trajs: Vec<Trajectory> = rollouts
                    .iter()
                    .map(|r| Trajectory {
                        policy_version: snapshot.version,
                        episode: r.episode.clone().expect("recorded"),
                    })
                    .collect();
                let stats = t.a2c_update(&trajs)?;
                loss = Some(stats.policy_loss + stats.value_loss);
            }
        }
        for r in &rollouts {
            episodes += 1;
            env_steps += r.metrics.steps as u64;
            returns += r.metrics.episode_return;
            rows.push((episodes, env_steps));
        }
        for ((ep, steps), r) in rows.into_iter().zip(&rollouts) {
            out.episode_row(ep, steps, r, epsilon, loss)?;
        }
        let line = serde_json::json!({
            "episode": episodes,
            "env_steps": env_steps,
            "loss": loss,
            "epsilon": epsilon,
            "mean_return": returns / rollouts.len() as f64,
        });
        writeln!(out.log, "{line}").map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
        if !trainer.params_finite() {
            return Err(HarnessError::Config(format!(
                "parameters diverged to non-finite values at episode {episodes}"
            )));
        }

        if episodes >= next_eval {
            while next_eval <= episodes {
                next_eval += cfg.eval_interval;
            }
            let agent = EvalAgent::Policy(Arc::new(trainer.snapshot()));
            let report = evaluate(
                &eval_config,
                &agent,
                cfg.eval_episodes,
                cfg.seed.wrapping_add(EVAL_SEED_OFFSET),
                k,
            )?;
            out.eval_row(episodes, env_steps, &report)?;
            out.checkpoint(&format!("ep{episodes:07}.json"), &trainer.checkpoint())?;
            log::info!(
                "episode {episodes}: eval queue {:.2}, return {:.1}",
                report.summary.mean_queue,
                report.summary.mean_return
            );
            evaluations.push((episodes, report));
        }
        out.flush()?;
    }
    let final_checkpoint = out.checkpoint("final.json", &trainer.checkpoint())?;
    out.flush()?;
    Ok(TrainSummary {
        episodes,
        env_steps,
        evaluations,
        final_checkpoint,
    })
}

fn write_report(
    cfg: &RunConfig,
    dir: &Path,
    report: &EvalReport,
    extra: serde_json::Value,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut w = csv::Writer::from_writer(create(&dir.join("eval_episodes.csv"))?);
    let mut header = vec!["eval_episode"];
    header.extend_from_slice(&EPISODE_COLUMNS[2..11]);
    w.write_record(&header)?;
    for (i, m) in report.episodes.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(m.csv_fields());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(dir, e))?;
    let mut e = csv::Writer::from_writer(create(&dir.join("eval.csv"))?);
    e.write_record(EVAL_COLUMNS)?;
    let mut row = vec!["0".to_string(), "0".to_string()];
    row.extend(report.summary.csv_fields());
    e.write_record(&row)?;
    e.flush().map_err(|e| HarnessError::io(dir, e))?;
    write_json(
        &dir.join("run.json"),
        &serde_json::json!({
            "config": cfg,
            "seed": cfg.seed,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "summary": report.summary,
            "extra": extra,
        }),
    )
}

/// Evaluates the configured rule-based controller and writes its report.
pub fn run_baseline(cfg: &RunConfig) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let spec = cfg
        .controller
        .clone()
        .ok_or_else(|| HarnessError::Config("run-baseline needs a \"controller\" section".into()))?;
    let env_config = cfg.scenario.env_config(cfg.seed)?;
    let report = evaluate(
        &env_config,
        &EvalAgent::Controller(spec),
        cfg.eval_episodes,
        cfg.seed,
        cfg.parallel_envs,
    )?;
    write_report(cfg, &cfg.output_dir, &report, serde_json::Value::Null)?;
    Ok(report)
}

/// Greedy evaluation of a saved checkpoint on the configured scenario;
/// the report goes to `output_dir/evaluations/<checkpoint name>/`.
pub fn evaluate_checkpoint(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let text = fs::read_to_string(checkpoint).map_err(|e| HarnessError::io(checkpoint, e))?;
    let ck = Checkpoint::from_json(&text).map_err(|source| HarnessError::Json {
        path: checkpoint.to_path_buf(),
        source,
    })?;
    let env_config = cfg.scenario.env_config(cfg.seed)?;
    let spec = TrafficSignalEnv::new(env_config.clone())?.spec();
    if spec.obs_lengths != ck.layout.obs_lengths || spec.action_sizes != ck.layout.action_sizes {
        return Err(HarnessError::Config(
            "checkpoint was trained on a scenario with a different layout".into(),
        ));
    }
    let snapshot = crate::marl::snapshot_from_checkpoint(&ck)?;
    let report = evaluate(
        &env_config,
        &EvalAgent::Policy(Arc::new(snapshot)),
        cfg.eval_episodes,
        cfg.seed.wrapping_add(EVAL_SEED_OFFSET),
        cfg.parallel_envs,
    )?;
    let stem = checkpoint
        .file_stem()
        .map_or("checkpoint".into(), |s| s.to_string_lossy().into_owned());
    let dir = cfg.output_dir.join("evaluations").join(stem);
    write_report(cfg, &dir, &report, serde_json::json!({ "checkpoint": checkpoint }))?;
    Ok(report)
}
