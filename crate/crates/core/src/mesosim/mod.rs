//! Point-queue mesoscopic traffic simulator with a one-second tick.
//!
//! Vehicles run at the lane speed limit until they reach the back of the
//! lane's queue, where they stop at jam spacing. Queues discharge through
//! green movements at the saturation flow, one vehicle per unit of
//! accumulated credit, as long as the receiving lane has room. Exit lanes
//! have no signal: a vehicle reaching their end leaves the network.

mod trips;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::netgraph::{analytics_route, NetError, PhaseKind, RoadNetwork};

pub use trips::{generate_trips, TripSpec};

pub type VehicleId = u64;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SimError {
    #[error("signal {0} does not exist")]
    UnknownSignal(usize),
    #[error("signal {signal} has no green phase {phase} (it has {count})")]
    UnknownPhase {
        signal: usize,
        phase: usize,
        count: usize,
    },
    #[error("flow {index}: {source}")]
    Flow { index: usize, source: NetError },
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("invalid route: {0}")]
    InvalidRoute(String),
}

/// Poisson demand between an entry lane and an exit lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub origin: String,
    pub destination: String,
    /// Vehicles per hour.
    pub rate: f64,
    /// Seconds, inclusive.
    pub start: f64,
    /// Seconds, exclusive.
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Vehicles per second per movement.
    pub saturation_flow: f64,
    /// Seconds of yellow before a pending green is promoted.
    pub yellow_duration: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            saturation_flow: 0.5,
            yellow_duration: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleMode {
    Running,
    Queued,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    /// Lane positions in the network.
    pub route: Arc<[usize]>,
    pub leg: usize,
    /// Meters from the start of the current lane.
    pub position: f64,
    pub mode: VehicleMode,
    pub spawn_tick: u64,
    pub wait_ticks: u64,
    pub queue_join_tick: Option<u64>,
}

impl Vehicle {
    pub fn lane(&self) -> usize {
        self.route[self.leg]
    }

    pub fn next_lane(&self) -> Option<usize> {
        self.route.get(self.leg + 1).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LaneState {
    /// Front is closest to the stop line.
    pub running: VecDeque<VehicleId>,
    /// Front is at the stop line.
    pub queued: VecDeque<VehicleId>,
}

impl LaneState {
    pub fn occupancy(&self) -> usize {
        self.running.len() + self.queued.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalState {
    /// Index of the active green, or of the green the active yellow ends.
    pub active_phase: usize,
    pub kind: PhaseKind,
    pub phase_elapsed: u64,
    pub pending_green: Option<usize>,
}

impl SignalState {
    /// The green this signal is showing or heading to.
    pub fn committed_green(&self) -> usize {
        self.pending_green.unwrap_or(self.active_phase)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub clock: u64,
    pub lanes: Vec<LaneState>,
    pub vehicles: BTreeMap<VehicleId, Vehicle>,
    pub signals: Vec<SignalState>,
    /// Fractional discharge allowance per movement.
    pub credits: Vec<f64>,
    /// Cumulative discharges per movement.
    pub discharged: Vec<u64>,
    pub spawned: u64,
    pub completed: u64,
    pub dropped: u64,
    pub completed_travel_times: Vec<f64>,
    pub completed_wait_ticks: u64,
    next_id: VehicleId,
}

impl SimState {
    pub fn new(net: &RoadNetwork) -> Self {
        SimState {
            clock: 0,
            lanes: vec![LaneState::default(); net.num_lanes()],
            vehicles: BTreeMap::new(),
            signals: vec![
                SignalState {
                    active_phase: 0,
                    kind: PhaseKind::Green,
                    phase_elapsed: 0,
                    pending_green: None,
                };
                net.num_signals()
            ],
            credits: vec![0.0; net.movements().len()],
            discharged: vec![0; net.movements().len()],
            spawned: 0,
            completed: 0,
            dropped: 0,
            completed_travel_times: Vec::new(),
            completed_wait_ticks: 0,
            next_id: 0,
        }
    }

    /// Vehicles that reached the network, admitted or not.
    pub fn arrivals(&self) -> u64 {
        self.spawned + self.dropped
    }

    pub fn active(&self) -> usize {
        self.vehicles.len()
    }
}

/// Per-lane counts seen within some distance of the stop line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneMetrics {
    pub n: usize,
    /// Mean speed over the speed limit; 1.0 when nothing is visible.
    pub s: f64,
    pub q: usize,
}

#[derive(Debug, Clone)]
struct CompiledFlow {
    spec: FlowSpec,
    origin: usize,
    route: Arc<[usize]>,
    poisson: Option<Poisson<f64>>,
}

/// A network, its demand, the simulation state and the demand RNG.
#[derive(Debug, Clone)]
pub struct Simulator {
    net: Arc<RoadNetwork>,
    flows: Vec<CompiledFlow>,
    params: SimParams,
    state: SimState,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(
        net: Arc<RoadNetwork>,
        flows: &[FlowSpec],
        params: SimParams,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !(params.saturation_flow > 0.0) {
            return Err(SimError::InvalidFlow("saturation_flow must be positive".into()));
        }
        let mut compiled = Vec::with_capacity(flows.len());
        for (index, f) in flows.iter().enumerate() {
            if !(f.rate >= 0.0) || !(f.start < f.end) {
                return Err(SimError::InvalidFlow(format!(
                    "flow {index}: need rate >= 0 and start < end"
                )));
            }
            let ids = crate::netgraph::shortest_route(&net, &f.origin, &f.destination)
                .map_err(|source| SimError::Flow { index, source })?;
            let route: Arc<[usize]> = ids.iter().map(|id| net.lane_idx(id).unwrap()).collect();
            let poisson = (f.rate > 0.0).then(|| Poisson::new(f.rate / 3600.0).unwrap());
            compiled.push(CompiledFlow {
                spec: f.clone(),
                origin: route[0],
                route,
                poisson,
            });
        }
        let state = SimState::new(&net);
        Ok(Simulator {
            net,
            flows: compiled,
            params,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.net
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowSpec> {
        self.flows.iter().map(|f| &f.spec)
    }

    /// Empties the network and reseeds the demand generator.
    pub fn reset(&mut self, seed: u64) {
        self.state = SimState::new(&self.net);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Draws this second's arrivals for every active flow.
    pub fn spawn(&mut self) {
        let clock = self.state.clock as f64;
        for fi in 0..self.flows.len() {
            let flow = &self.flows[fi];
            if clock < flow.spec.start || clock >= flow.spec.end {
                continue;
            }
            let Some(poisson) = flow.poisson else {
                continue;
            };
            let count = poisson.sample(&mut self.rng) as u64;
            let (origin, route) = (flow.origin, flow.route.clone());
            for _ in 0..count {
                if self.state.lanes[origin].occupancy() < self.net.lane(origin).capacity {
                    self.admit(route.clone(), 0.0, VehicleMode::Running);
                } else {
                    self.state.dropped += 1;
                }
            }
        }
    }

    fn admit(&mut self, route: Arc<[usize]>, position: f64, mode: VehicleMode) -> VehicleId {
        let st = &mut self.state;
        let id = st.next_id;
        st.next_id += 1;
        let lane = route[0];
        match mode {
            VehicleMode::Running => st.lanes[lane].running.push_back(id),
            VehicleMode::Queued => st.lanes[lane].queued.push_back(id),
        }
        st.vehicles.insert(
            id,
            Vehicle {
                id,
                route,
                leg: 0,
                position,
                mode,
                spawn_tick: st.clock,
                wait_ticks: 0,
                queue_join_tick: (mode == VehicleMode::Queued).then_some(st.clock),
            },
        );
        st.spawned += 1;
        id
    }

    /// Places a vehicle on the first lane of `route`, either running at the
    /// lane start or at the back of the queue. Counts as a spawn.
    pub fn insert_vehicle(&mut self, route: &[usize], queued: bool) -> Result<VehicleId, SimError> {
        if route.is_empty() {
            return Err(SimError::InvalidRoute("empty route".into()));
        }
        for w in route.windows(2) {
            if self.net.movement_between(w[0], w[1]).is_none() {
                return Err(SimError::InvalidRoute(format!(
                    "no movement from lane {} to lane {}",
                    w[0], w[1]
                )));
            }
        }
        if !self.net.is_exit(*route.last().unwrap()) {
            return Err(SimError::InvalidRoute("route must end on an exit lane".into()));
        }
        let lane = route[0];
        if self.state.lanes[lane].occupancy() >= self.net.lane(lane).capacity {
            return Err(SimError::InvalidRoute(format!("lane {lane} is full")));
        }
        let (pos, mode) = if queued && !self.net.is_exit(lane) {
            let k = self.state.lanes[lane].queued.len() as f64;
            (self.net.lane(lane).length - k * self.net.vehicle_spacing(), VehicleMode::Queued)
        } else {
            (0.0, VehicleMode::Running)
        };
        Ok(self.admit(route.iter().copied().collect(), pos, mode))
    }

    /// Requests a switch to `target` green. Switching away from the active
    /// green starts its yellow; a request during yellow only replaces the
    /// pending green.
    pub fn set_phase(&mut self, signal: usize, target: usize) -> Result<(), SimError> {
        if signal >= self.net.num_signals() {
            return Err(SimError::UnknownSignal(signal));
        }
        let count = self.net.num_phases(signal);
        if target >= count {
            return Err(SimError::UnknownPhase {
                signal,
                phase: target,
                count,
            });
        }
        let sig = &mut self.state.signals[signal];
        match sig.kind {
            PhaseKind::Green if sig.active_phase == target => {}
            PhaseKind::Green => {
                sig.kind = PhaseKind::Yellow;
                sig.pending_green = Some(target);
                sig.phase_elapsed = 0;
            }
            PhaseKind::Yellow => sig.pending_green = Some(target),
        }
        Ok(())
    }

    /// Advances the simulation by one second.
    pub fn tick(&mut self) {
        let net = &*self.net;
        let spacing = net.vehicle_spacing();
        let st = &mut self.state;
        let end_clock = st.clock + 1;

        // 1. free-flow advance, joining the back of the queue or leaving the network
        for lane in 0..net.num_lanes() {
            let info = net.lane(lane);
            let exit = net.is_exit(lane);
            let ls = &mut st.lanes[lane];
            while let Some(&vid) = ls.running.front() {
                let v = st.vehicles.get_mut(&vid).unwrap();
                let target = v.position + info.speed_limit;
                if exit {
                    if target >= info.length {
                        ls.running.pop_front();
                        let v = st.vehicles.remove(&vid).unwrap();
                        st.completed += 1;
                        st.completed_travel_times
                            .push((end_clock - v.spawn_tick) as f64);
                        st.completed_wait_ticks += v.wait_ticks;
                        continue;
                    }
                    break;
                }
                let back = info.length - ls.queued.len() as f64 * spacing;
                if target >= back {
                    ls.running.pop_front();
                    v.position = back.max(0.0);
                    v.mode = VehicleMode::Queued;
                    v.queue_join_tick = Some(end_clock);
                    ls.queued.push_back(vid);
                } else {
                    break;
                }
            }
            for vid in &ls.running {
                let v = st.vehicles.get_mut(vid).unwrap();
                v.position = (v.position + info.speed_limit).min(info.length);
            }
        }

        // 2. saturation-flow discharge through green movements
        let mut green = vec![false; net.movements().len()];
        for (s, sig) in st.signals.iter().enumerate() {
            if sig.kind == PhaseKind::Green {
                for &m in net.phase_movements(s, sig.active_phase) {
                    green[m] = true;
                }
            }
        }
        // Credit builds only while a green movement has a queue to serve.
        for (m, credit) in st.credits.iter_mut().enumerate() {
            let (from, _) = net.movement_ends(m);
            if !green[m] {
                *credit = 0.0;
            } else if !st.lanes[from].queued.is_empty() {
                *credit += self.params.saturation_flow;
            }
        }
        for s in 0..net.num_signals() {
            if st.signals[s].kind != PhaseKind::Green {
                continue;
            }
            for &lane in net.incoming(s) {
                loop {
                    let Some(&vid) = st.lanes[lane].queued.front() else {
                        break;
                    };
                    let v = &st.vehicles[&vid];
                    let next = v.next_lane().expect("queued vehicles are never on their last leg");
                    let m = net
                        .movement_between(lane, next)
                        .expect("routes follow movements");
                    if !green[m]
                        || st.credits[m] < 1.0
                        || st.lanes[next].occupancy() >= net.lane(next).capacity
                    {
                        break;
                    }
                    st.lanes[lane].queued.pop_front();
                    st.credits[m] -= 1.0;
                    st.discharged[m] += 1;
                    let v = st.vehicles.get_mut(&vid).unwrap();
                    v.leg += 1;
                    v.position = 0.0;
                    v.mode = VehicleMode::Running;
                    st.lanes[next].running.push_back(vid);
                }
                let length = net.lane(lane).length;
                for (k, vid) in st.lanes[lane].queued.iter().enumerate() {
                    st.vehicles.get_mut(vid).unwrap().position = length - k as f64 * spacing;
                }
            }
        }
        for credit in st.credits.iter_mut() {
            *credit = credit.min(1.0);
        }

        // 3. stopped vehicles accumulate waiting time
        for ls in &st.lanes {
            for vid in &ls.queued {
                st.vehicles.get_mut(vid).unwrap().wait_ticks += 1;
            }
        }

        // 4. clock and signal timers
        st.clock = end_clock;
        for sig in st.signals.iter_mut() {
            sig.phase_elapsed += 1;
            if sig.kind == PhaseKind::Yellow && sig.phase_elapsed >= self.params.yellow_duration {
                sig.active_phase = sig.pending_green.take().expect("yellow has a pending green");
                sig.kind = PhaseKind::Green;
                sig.phase_elapsed = 0;
            }
        }
    }

    /// Counts on `lane` within `visibility` meters of its stop line.
    pub fn lane_metrics(&self, lane: usize, visibility: f64) -> LaneMetrics {
        lane_metrics(&self.net, &self.state, lane, visibility)
    }
}

/// Counts on `lane` within `visibility` meters of its stop line. Running
/// vehicles move at the speed limit, queued ones are stopped.
pub fn lane_metrics(net: &RoadNetwork, state: &SimState, lane: usize, visibility: f64) -> LaneMetrics {
    let info = net.lane(lane);
    let ls = &state.lanes[lane];
    let spacing = net.vehicle_spacing();
    let q = if visibility.is_infinite() {
        ls.queued.len()
    } else {
        ls.queued.len().min((visibility / spacing).floor() as usize + 1)
    };
    let running = ls
        .running
        .iter()
        .take_while(|vid| info.length - state.vehicles[vid].position <= visibility)
        .count();
    let n = q + running;
    let s = if n == 0 { 1.0 } else { running as f64 / n as f64 };
    LaneMetrics { n, s, q }
}

// Route lookup shared with trip generation.
pub(crate) fn route_exists(net: &RoadNetwork, origin: usize, destination: usize) -> bool {
    analytics_route(net, origin, destination).is_some()
}
