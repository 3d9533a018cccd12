use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baselines::ControllerSpec;
use crate::env::{ActionMode, EnvConfig};
use crate::marl::TrainerConfig;
use crate::mesosim::{generate_trips, FlowSpec, TripSpec};
use crate::netgraph::{generate_grid, GridSpec, RoadNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSource {
    Grid(GridSpec),
    /// Network JSON; relative paths resolve against the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowSource {
    Trips(TripSpec),
    File { path: PathBuf },
    List { flows: Vec<FlowSpec> },
}

/// Environment settings of a scenario; everything but network and flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvOptions {
    pub action_mode: ActionMode,
    pub episode_limit: usize,
    pub action_interval: u64,
    pub yellow_duration: u64,
    pub visibility: Option<f64>,
    pub saturation_flow: f64,
    pub local_reward: bool,
}

impl Default for EnvOptions {
    fn default() -> Self {
        EnvOptions {
            action_mode: ActionMode::RoundRobin,
            episode_limit: 72,
            action_interval: 5,
            yellow_duration: 5,
            visibility: None,
            saturation_flow: 0.5,
            local_reward: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkSource,
    pub flows: FlowSource,
    #[serde(default)]
    pub env: EnvOptions,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl Scenario {
    pub fn grid(rows: usize, cols: usize, trips: TripSpec) -> Self {
        Scenario {
            network: NetworkSource::Grid(GridSpec::new(rows, cols)),
            flows: FlowSource::Trips(trips),
            env: EnvOptions::default(),
        }
    }

    pub fn load_network(&self) -> Result<Arc<RoadNetwork>, HarnessError> {
        let net = match &self.network {
            NetworkSource::Grid(spec) => generate_grid(spec)?,
            NetworkSource::File { path } => read_json(path)?,
        };
        Ok(Arc::new(net))
    }

    pub fn load_flows(&self, net: &RoadNetwork) -> Result<Vec<FlowSpec>, HarnessError> {
        Ok(match &self.flows {
            FlowSource::Trips(spec) => generate_trips(net, spec),
            FlowSource::File { path } => read_json(path)?,
            FlowSource::List { flows } => flows.clone(),
        })
    }

    /// Environment configuration seeded with `seed`.
    pub fn env_config(&self, seed: u64) -> Result<EnvConfig, HarnessError> {
        let network = self.load_network()?;
        let flows = self.load_flows(&network)?;
        let o = &self.env;
        let cfg = EnvConfig {
            network,
            flows,
            action_mode: o.action_mode,
            episode_limit: o.episode_limit,
            action_interval: o.action_interval,
            yellow_duration: o.yellow_duration,
            visibility: o.visibility,
            saturation_flow: o.saturation_flow,
            local_reward: o.local_reward,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let NetworkSource::File { path } = &mut self.network {
            fix(path);
        }
        if let FlowSource::File { path } = &mut self.flows {
            fix(path);
        }
    }
}

fn default_total_steps() -> u64 {
    4_320_000
}
fn default_eval_interval() -> u64 {
    200
}
fn default_eval_episodes() -> usize {
    10
}
fn default_parallel() -> usize {
    4
}
fn default_updates() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// One experiment: a scenario plus either a trainer or a fixed controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub trainer: Option<TrainerConfig>,
    #[serde(default)]
    pub controller: Option<ControllerSpec>,
    /// Training budget in decision steps summed over all environments.
    #[serde(default = "default_total_steps")]
    pub total_env_steps: u64,
    /// Global training episodes between evaluations.
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_parallel")]
    pub parallel_envs: usize,
    /// Trainer updates after each batch of parallel episodes.
    #[serde(default = "default_updates")]
    pub updates_per_batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Also write one CSV row per decision step.
    #[serde(default)]
    pub log_steps: bool,
}

impl RunConfig {
    pub fn new(scenario: Scenario) -> Self {
        RunConfig {
            name: String::new(),
            scenario,
            trainer: None,
            controller: None,
            total_env_steps: default_total_steps(),
            eval_interval: default_eval_interval(),
            eval_episodes: default_eval_episodes(),
            parallel_envs: default_parallel(),
            updates_per_batch: default_updates(),
            seed: 0,
            output_dir: default_output(),
            log_steps: false,
        }
    }

    /// Reads a config file; scenario file paths are made relative to it.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.scenario.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes relative scenario file paths relative to `base`.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        self.scenario.resolve_paths(base);
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|source| HarnessError::Json {
            path: PathBuf::from("<inline>"),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.eval_interval < 1 {
            return bad("eval_interval must be at least 1");
        }
        if self.parallel_envs < 1 {
            return bad("parallel_envs must be at least 1");
        }
        if self.eval_episodes < 1 {
            return bad("eval_episodes must be at least 1");
        }
        if let Some(t) = &self.trainer {
            t.validate()?;
        }
        if let Some(c) = &self.controller {
            if let Some(mode) = c.required_mode() {
                if mode != self.scenario.env.action_mode {
                    return Err(HarnessError::Config(format!(
                        "controller {} needs action_mode {:?}, scenario uses {:?}",
                        c.name(),
                        mode,
                        self.scenario.env.action_mode
                    )));
                }
            }
        }
        Ok(())
    }
}
