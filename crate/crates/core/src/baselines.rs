//! Rule-based signal controllers: fixed-time, greedy, max-pressure,
//! self-organizing (SOTL) and uniform random.
//!
//! Controllers read full-lane queue counts split by movement, the way loop
//! detectors on each turning lane would report them. Every decision is a
//! pure function of a [`SignalView`] and the per-signal [`SignalTimer`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{action_space_size, ActionMode, TrafficSignalEnv};
use crate::mesosim::SimState;
use crate::netgraph::RoadNetwork;

/// What a controller sees of one signal at a decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalView {
    pub current_phase: usize,
    pub action_size: usize,
    /// Queued vehicles waiting to use each green phase's movements.
    pub phase_demand: Vec<f64>,
    /// Per phase: sum over permitted movements of upstream minus downstream queue.
    pub phase_pressure: Vec<f64>,
    /// Queued vehicles whose movement the current green does not serve.
    pub red_demand: f64,
}

/// Queued vehicles per movement, keyed by movement position.
pub fn movement_queues(net: &RoadNetwork, state: &SimState) -> Vec<f64> {
    let mut q = vec![0.0; net.movements().len()];
    for (lane, ls) in state.lanes.iter().enumerate() {
        for vid in &ls.queued {
            if let Some(next) = state.vehicles[vid].next_lane() {
                if let Some(m) = net.movement_between(lane, next) {
                    q[m] += 1.0;
                }
            }
        }
    }
    q
}

pub fn signal_views(env: &TrafficSignalEnv) -> Vec<SignalView> {
    let net = env.network();
    let state = env.simulator().state();
    let mq = movement_queues(net, state);
    let lane_q: Vec<f64> = state.lanes.iter().map(|l| l.queued.len() as f64).collect();
    (0..net.num_signals())
        .map(|s| {
            let current = state.signals[s].committed_green();
            let phases = net.num_phases(s);
            let phase_demand: Vec<f64> = (0..phases)
                .map(|p| net.phase_movements(s, p).iter().map(|&m| mq[m]).sum())
                .collect();
            let phase_pressure = (0..phases)
                .map(|p| {
                    net.phase_movements(s, p)
                        .iter()
                        .map(|&m| mq[m] - lane_q[net.movement_ends(m).1])
                        .sum()
                })
                .collect();
            let served = net.phase_movements(s, current);
            let red_demand = net
                .incoming(s)
                .iter()
                .flat_map(|&l| net.movements_from(l).iter().copied())
                .filter(|m| !served.contains(m))
                .map(|m| mq[m])
                .sum();
            SignalView {
                current_phase: current,
                action_size: action_space_size(env.config().action_mode, phases),
                phase_demand,
                phase_pressure,
                red_demand,
            }
        })
        .collect()
}

/// Per-signal timing state shared by the rule-based controllers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignalTimer {
    /// Seconds the current green has been shown.
    pub green_elapsed: f64,
    /// Accumulated red-approach demand, vehicle·seconds.
    pub sotl_counter: f64,
}

impl SignalTimer {
    /// Books one decision interval: a switch restarts the green clock (the
    /// interval itself is spent in yellow), a keep extends it.
    fn book(&mut self, switched: bool, interval: f64) {
        if switched {
            self.green_elapsed = 0.0;
        } else {
            self.green_elapsed += interval;
        }
    }
}

const KEEP: usize = 0;
const ADVANCE: usize = 1;

/// Round-robin fixed cycle: advance once the green has run `fixed_green`.
pub fn fixed_time(timer: &mut SignalTimer, fixed_green: f64, interval: f64) -> usize {
    let advance = timer.green_elapsed >= fixed_green;
    timer.book(advance, interval);
    if advance {
        ADVANCE
    } else {
        KEEP
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Free-select: the phase with the most queued demand.
pub fn greedy(phase_demand: &[f64]) -> usize {
    argmax_lowest(phase_demand)
}

/// Free-select: the phase with the largest pressure, holding the current
/// green until it has run `min_green`.
pub fn max_pressure(timer: &mut SignalTimer, view: &SignalView, min_green: f64, interval: f64) -> usize {
    let best = argmax_lowest(&view.phase_pressure);
    let target = if best != view.current_phase && timer.green_elapsed < min_green {
        view.current_phase
    } else {
        best
    };
    timer.book(target != view.current_phase, interval);
    target
}

/// Round-robin self-organizing rule: integrate red-approach demand and
/// advance once it reaches `theta` and the green has run `min_green`.
pub fn sotl(
    timer: &mut SignalTimer,
    view: &SignalView,
    theta: f64,
    min_green: f64,
    interval: f64,
) -> usize {
    timer.sotl_counter += view.red_demand * interval;
    let advance = timer.green_elapsed >= min_green && timer.sotl_counter >= theta;
    if advance {
        timer.sotl_counter = 0.0;
    }
    timer.book(advance, interval);
    if advance {
        ADVANCE
    } else {
        KEEP
    }
}

/// Controller choice as it appears in run configs, e.g.
/// `{"kind":"max_pressure","min_green":5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    FixedTime {
        #[serde(default = "default_fixed_green")]
        fixed_green: f64,
    },
    Greedy,
    MaxPressure {
        #[serde(default = "default_mp_min_green")]
        min_green: f64,
    },
    Sotl {
        #[serde(default = "default_theta")]
        theta: f64,
        #[serde(default = "default_sotl_min_green")]
        min_green: f64,
    },
    Random,
}

fn default_fixed_green() -> f64 {
    25.0
}
fn default_mp_min_green() -> f64 {
    5.0
}
fn default_theta() -> f64 {
    30.0
}
fn default_sotl_min_green() -> f64 {
    10.0
}

impl ControllerSpec {
    pub fn fixed_time() -> Self {
        ControllerSpec::FixedTime {
            fixed_green: default_fixed_green(),
        }
    }

    pub fn max_pressure() -> Self {
        ControllerSpec::MaxPressure {
            min_green: default_mp_min_green(),
        }
    }

    pub fn sotl() -> Self {
        ControllerSpec::Sotl {
            theta: default_theta(),
            min_green: default_sotl_min_green(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::FixedTime { .. } => "fixed_time",
            ControllerSpec::Greedy => "greedy",
            ControllerSpec::MaxPressure { .. } => "max_pressure",
            ControllerSpec::Sotl { .. } => "sotl",
            ControllerSpec::Random => "random",
        }
    }

    /// The action mode this controller's outputs are expressed in, if fixed.
    pub fn required_mode(&self) -> Option<ActionMode> {
        match self {
            ControllerSpec::FixedTime { .. } | ControllerSpec::Sotl { .. } => {
                Some(ActionMode::RoundRobin)
            }
            ControllerSpec::Greedy | ControllerSpec::MaxPressure { .. } => {
                Some(ActionMode::FreeSelect)
            }
            ControllerSpec::Random => None,
        }
    }

    pub fn build(&self, n_signals: usize, interval: f64, seed: u64) -> Controller {
        Controller {
            spec: self.clone(),
            interval,
            timers: vec![SignalTimer::default(); n_signals],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// A controller instance owned by one rollout.
#[derive(Debug, Clone)]
pub struct Controller {
    spec: ControllerSpec,
    interval: f64,
    timers: Vec<SignalTimer>,
    rng: ChaCha8Rng,
}

impl Controller {
    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    pub fn timers(&self) -> &[SignalTimer] {
        &self.timers
    }

    /// Clears timers at the start of an episode.
    pub fn reset(&mut self) {
        self.timers.iter_mut().for_each(|t| *t = SignalTimer::default());
    }

    pub fn act(&mut self, views: &[SignalView]) -> Vec<usize> {
        let interval = self.interval;
        views
            .iter()
            .zip(self.timers.iter_mut())
            .map(|(view, timer)| match self.spec {
                ControllerSpec::FixedTime { fixed_green } => fixed_time(timer, fixed_green, interval),
                ControllerSpec::Greedy => greedy(&view.phase_demand),
                ControllerSpec::MaxPressure { min_green } => {
                    max_pressure(timer, view, min_green, interval)
                }
                ControllerSpec::Sotl { theta, min_green } => {
                    sotl(timer, view, theta, min_green, interval)
                }
                ControllerSpec::Random => self.rng.random_range(0..view.action_size),
            })
            .collect()
    }

    pub fn act_on(&mut self, env: &TrafficSignalEnv) -> Vec<usize> {
        let views = signal_views(env);
        self.act(&views)
    }
}
