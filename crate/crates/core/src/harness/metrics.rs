use serde::{Deserialize, Serialize};

use crate::env::{StepInfo, TrafficSignalEnv};

/// Per-episode traffic metrics.
///
/// Queue, delay, speed and occupancy are averaged over decision steps.
/// Travel time averages completed trips; wait time averages the final
/// halted-seconds count of every vehicle admitted during the episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EpisodeMetrics {
    pub steps: usize,
    pub episode_return: f64,
    pub mean_queue: f64,
    pub mean_delay: f64,
    pub mean_speed: f64,
    pub mean_occupancy: f64,
    pub mean_travel_time: Option<f64>,
    pub mean_wait_time: f64,
    pub completed: u64,
    pub dropped: u64,
}

impl EpisodeMetrics {
    /// Summarizes an episode from its step infos and the final simulator state.
    pub fn from_steps(rewards: &[f64], infos: &[StepInfo], env: &TrafficSignalEnv) -> Self {
        let n = infos.len().max(1) as f64;
        let avg = |f: fn(&StepInfo) -> f64| infos.iter().map(f).sum::<f64>() / n;
        let st = env.simulator().state();
        let travel = &st.completed_travel_times;
        let active_wait: u64 = st.vehicles.values().map(|v| v.wait_ticks).sum();
        let seen = st.completed + st.vehicles.len() as u64;
        EpisodeMetrics {
            steps: infos.len(),
            episode_return: rewards.iter().sum(),
            mean_queue: avg(|i| i.queue_sum as f64),
            mean_delay: avg(|i| i.mean_delay),
            mean_speed: avg(|i| i.mean_speed),
            mean_occupancy: avg(|i| i.mean_occupancy),
            mean_travel_time: (!travel.is_empty())
                .then(|| travel.iter().sum::<f64>() / travel.len() as f64),
            mean_wait_time: if seen == 0 {
                0.0
            } else {
                (st.completed_wait_ticks + active_wait) as f64 / seen as f64
            },
            completed: st.completed,
            dropped: st.dropped,
        }
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.episode_return.to_string(),
            self.mean_queue.to_string(),
            self.mean_delay.to_string(),
            self.mean_speed.to_string(),
            self.mean_occupancy.to_string(),
            self.mean_travel_time.map_or(String::new(), |t| t.to_string()),
            self.mean_wait_time.to_string(),
            self.completed.to_string(),
            self.dropped.to_string(),
        ]
    }
}

/// Columns of `metrics.csv`, one row per training episode.
pub const EPISODE_COLUMNS: [&str; 13] = [
    "episode",
    "env_steps",
    "return",
    "mean_queue",
    "mean_delay",
    "mean_speed",
    "mean_occupancy",
    "mean_travel_time",
    "mean_wait_time",
    "completed",
    "dropped",
    "epsilon",
    "loss",
];

/// Columns of `eval.csv`, one row per evaluation.
pub const EVAL_COLUMNS: [&str; 12] = [
    "episode",
    "env_steps",
    "episodes",
    "mean_return",
    "mean_queue",
    "mean_delay",
    "mean_speed",
    "mean_occupancy",
    "mean_travel_time",
    "mean_wait_time",
    "mean_completed",
    "mean_dropped",
];

/// Means of the per-episode values of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_queue: f64,
    pub mean_delay: f64,
    pub mean_speed: f64,
    pub mean_occupancy: f64,
    /// Mean over episodes that completed at least one trip.
    pub mean_travel_time: Option<f64>,
    pub mean_wait_time: f64,
    pub mean_completed: f64,
    pub mean_dropped: f64,
}

impl EvalSummary {
    pub fn of(episodes: &[EpisodeMetrics]) -> Self {
        let n = episodes.len().max(1) as f64;
        let avg = |f: &dyn Fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        let travel: Vec<f64> = episodes.iter().filter_map(|e| e.mean_travel_time).collect();
        EvalSummary {
            episodes: episodes.len(),
            mean_return: avg(&|e| e.episode_return),
            mean_queue: avg(&|e| e.mean_queue),
            mean_delay: avg(&|e| e.mean_delay),
            mean_speed: avg(&|e| e.mean_speed),
            mean_occupancy: avg(&|e| e.mean_occupancy),
            mean_travel_time: (!travel.is_empty())
                .then(|| travel.iter().sum::<f64>() / travel.len() as f64),
            mean_wait_time: avg(&|e| e.mean_wait_time),
            mean_completed: avg(&|e| e.completed as f64),
            mean_dropped: avg(&|e| e.dropped as f64),
        }
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.episodes.to_string(),
            self.mean_return.to_string(),
            self.mean_queue.to_string(),
            self.mean_delay.to_string(),
            self.mean_speed.to_string(),
            self.mean_occupancy.to_string(),
            self.mean_travel_time.map_or(String::new(), |t| t.to_string()),
            self.mean_wait_time.to_string(),
            self.mean_completed.to_string(),
            self.mean_dropped.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub summary: EvalSummary,
}

impl EvalReport {
    pub fn new(episodes: Vec<EpisodeMetrics>) -> Self {
        let summary = EvalSummary::of(&episodes);
        EvalReport { episodes, summary }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_aggregates_to_constant() {
        let m = EpisodeMetrics {
            steps: 72,
            episode_return: -40.0,
            mean_queue: 12.5,
            mean_delay: 0.25,
            mean_speed: 0.75,
            mean_occupancy: 0.1,
            mean_travel_time: Some(61.0),
            mean_wait_time: 9.0,
            completed: 30,
            dropped: 2,
        };
        let s = EvalSummary::of(&[m; 7]);
        assert_eq!(s.mean_queue, 12.5);
        assert_eq!(s.mean_delay, 0.25);
        assert_eq!(s.mean_speed, 0.75);
        assert_eq!(s.mean_travel_time, Some(61.0));
        assert_eq!(s.mean_return, -40.0);
        assert_eq!(s.mean_completed, 30.0);
    }

    #[test]
    fn travel_time_skips_episodes_without_trips() {
        let a = EpisodeMetrics {
            mean_travel_time: Some(40.0),
            ..Default::default()
        };
        let b = EpisodeMetrics::default();
        assert_eq!(EvalSummary::of(&[a, b]).mean_travel_time, Some(40.0));
    }
}
