//! Experiment orchestration: scenario loading, seeded parallel rollouts,
//! training and evaluation loops, and CSV/JSON artifacts.
//!
//! Episodes are counted globally: with four parallel environments each
//! batch adds four episodes, and evaluation runs whenever the global count
//! reaches a multiple of `eval_interval`.

mod config;
mod metrics;
mod plot;
mod rollout;
mod run;

use std::path::PathBuf;

pub use config::{EnvOptions, FlowSource, NetworkSource, RunConfig, Scenario};
pub use metrics::{EpisodeMetrics, EvalReport, EvalSummary, EPISODE_COLUMNS, EVAL_COLUMNS};
pub use plot::{plot_csv, svg_line_chart, Series};
pub use rollout::{run_episode, run_parallel, Driver, Rollout};
pub use run::{evaluate, evaluate_checkpoint, run_baseline, train, EvalAgent, TrainSummary, EVAL_SEED_OFFSET};

use crate::env::EnvError;
use crate::marl::MarlError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Marl(#[from] MarlError),
    #[error(transparent)]
    Net(#[from] crate::netgraph::NetError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
