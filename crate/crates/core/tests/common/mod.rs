#![allow(dead_code)]

pub mod grad;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsc_lab::env::{ActionMode, EnvConfig, TrafficSignalEnv};
use tsc_lab::mesosim::{generate_trips, SimParams, SimState, Simulator, TripSpec, VehicleMode};
use tsc_lab::netgraph::{generate_grid, GridSpec, PhaseKind, RoadNetwork};

pub fn grid_net(rows: usize, cols: usize) -> Arc<RoadNetwork> {
    Arc::new(generate_grid(&GridSpec::new(rows, cols)).unwrap())
}

/// 200 veh/h on every entry, 700 veh/h on west and east entries.
pub fn asymmetric_trips() -> TripSpec {
    let mut t = TripSpec::uniform(200.0);
    t.rate_by_prefix = BTreeMap::from([("E".to_string(), 700.0), ("W".to_string(), 700.0)]);
    t
}

pub fn grid_env(rows: usize, cols: usize, rate: f64, mode: ActionMode, seed: u64) -> TrafficSignalEnv {
    let net = grid_net(rows, cols);
    let flows = generate_trips(&net, &TripSpec::uniform(rate));
    TrafficSignalEnv::new(EnvConfig::new(net, flows).with_mode(mode).with_seed(seed)).unwrap()
}

/// Occupancy, capacity and conservation checks on a single state.
pub fn check_state(net: &RoadNetwork, st: &SimState) -> Result<(), String> {
    if st.spawned != st.active() as u64 + st.completed {
        return Err(format!(
            "conservation: spawned {} != active {} + completed {}",
            st.spawned,
            st.active(),
            st.completed
        ));
    }
    let mut listed = 0;
    for (l, ls) in st.lanes.iter().enumerate() {
        let cap = net.lane(l).capacity;
        if ls.occupancy() > cap {
            return Err(format!("lane {} holds {} > capacity {cap}", net.lane(l).id, ls.occupancy()));
        }
        listed += ls.occupancy();
        for vid in ls.running.iter().chain(&ls.queued) {
            let v = &st.vehicles[vid];
            if v.lane() != l {
                return Err(format!("vehicle {vid} listed on lane {l} but routed on {}", v.lane()));
            }
            if !(0.0..=net.lane(l).length).contains(&v.position) {
                return Err(format!("vehicle {vid} at position {}", v.position));
            }
        }
    }
    if listed != st.active() {
        return Err(format!("{listed} vehicles on lanes, {} active", st.active()));
    }
    Ok(())
}

/// Tick-by-tick audit of discharges against the signal state in force
/// during each tick.
pub struct Audit {
    net: Arc<RoadNetwork>,
    saturation_flow: f64,
    green_ticks: Vec<u64>,
    moves: Vec<u64>,
    in_effect: Vec<Vec<(PhaseKind, usize)>>,
}

impl Audit {
    pub fn new(net: Arc<RoadNetwork>, saturation_flow: f64) -> Self {
        let m = net.movements().len();
        let s = net.num_signals();
        Audit {
            net,
            saturation_flow,
            green_ticks: vec![0; m],
            moves: vec![0; m],
            in_effect: vec![Vec::new(); s],
        }
    }

    /// `prev` is the state the tick started from, `cur` the state after it.
    pub fn tick(&mut self, prev: &SimState, cur: &SimState) -> Result<(), String> {
        let net = &*self.net;
        check_state(net, cur)?;
        let mut green = vec![false; net.movements().len()];
        for (s, sig) in prev.signals.iter().enumerate() {
            self.in_effect[s].push((sig.kind, sig.active_phase));
            if sig.kind == PhaseKind::Green {
                for &m in net.phase_movements(s, sig.active_phase) {
                    green[m] = true;
                }
            }
        }
        for (m, g) in green.iter().enumerate() {
            self.green_ticks[m] += *g as u64;
        }
        for (vid, before) in &prev.vehicles {
            match cur.vehicles.get(vid) {
                None => {
                    if before.leg + 1 != before.route.len() {
                        return Err(format!("vehicle {vid} vanished before its last lane"));
                    }
                }
                Some(after) => {
                    if after.wait_ticks < before.wait_ticks {
                        return Err(format!("vehicle {vid} wait decreased"));
                    }
                    if after.leg == before.leg {
                        continue;
                    }
                    if after.leg != before.leg + 1 {
                        return Err(format!("vehicle {vid} jumped from leg {} to {}", before.leg, after.leg));
                    }
                    let m = net
                        .movement_between(before.lane(), after.lane())
                        .ok_or_else(|| format!("vehicle {vid} crossed without a movement"))?;
                    if !green[m] {
                        return Err(format!(
                            "movement {} discharged under yellow or red",
                            net.movements()[m].id
                        ));
                    }
                    self.moves[m] += 1;
                }
            }
        }
        Ok(())
    }

    /// Throughput bound and yellow length between distinct greens.
    pub fn finish(&self, yellow: u64) -> Result<(), String> {
        for (m, (&d, &g)) in self.moves.iter().zip(&self.green_ticks).enumerate() {
            if d as f64 > self.saturation_flow * g as f64 + 1.0 {
                return Err(format!(
                    "movement {} discharged {d} in {g} green seconds",
                    self.net.movements()[m].id
                ));
            }
        }
        // A yellow run ends the green it is labelled with and must last exactly
        // `yellow` seconds before a different phase takes over. A green may be
        // in force for zero seconds when it is left again at once.
        for (s, trace) in self.in_effect.iter().enumerate() {
            let mut runs: Vec<((PhaseKind, usize), u64)> = Vec::new();
            for &k in trace {
                match runs.last_mut() {
                    Some((last, n)) if *last == k => *n += 1,
                    _ => runs.push((k, 1)),
                }
            }
            for w in runs.windows(2) {
                let (((kind, phase), len), ((_, next), _)) = (w[0], w[1]);
                if kind == PhaseKind::Yellow && (len != yellow || next == phase) {
                    return Err(format!("signal {s}: {len} s of yellow ending green {phase}, then {next}"));
                }
                if kind == PhaseKind::Green && w[1].0 .0 == PhaseKind::Green {
                    return Err(format!("signal {s}: green {phase} became green {next} without yellow"));
                }
            }
        }
        Ok(())
    }

    pub fn discharges(&self) -> u64 {
        self.moves.iter().sum()
    }
}

/// Result of [`random_sim_rollout`].
pub struct SimRollout {
    /// Hash of every post-tick state, for bit-level trace comparison.
    pub digests: Vec<u64>,
    pub last: SimState,
    pub audit: Audit,
}

fn digest(st: &SimState) -> u64 {
    use std::hash::{Hash, Hasher};
    // Debug output of f64 round-trips exactly and the vehicle map is ordered.
    let mut h = std::collections::hash_map::DefaultHasher::new();
    format!("{st:?}").hash(&mut h);
    h.finish()
}

/// Drives a simulator the way the environment does: random phase requests
/// every `interval` ticks, then spawn and tick.
pub fn random_sim_rollout(net: Arc<RoadNetwork>, rate: f64, seed: u64, steps: usize) -> Result<SimRollout, String> {
    let flows = generate_trips(&net, &TripSpec::uniform(rate));
    let params = SimParams::default();
    let mut sim = Simulator::new(net.clone(), &flows, params, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let mut audit = Audit::new(net.clone(), params.saturation_flow);
    let mut digests = Vec::with_capacity(steps * 5);
    for _ in 0..steps {
        for s in 0..net.num_signals() {
            let target = rng.random_range(0..net.num_phases(s));
            sim.set_phase(s, target).unwrap();
        }
        for _ in 0..5 {
            sim.spawn();
            check_state(&net, sim.state())?;
            let prev = sim.state().clone();
            sim.tick();
            audit.tick(&prev, sim.state())?;
            digests.push(digest(sim.state()));
        }
    }
    audit.finish(params.yellow_duration)?;
    Ok(SimRollout {
        digests,
        last: sim.state().clone(),
        audit,
    })
}

/// Independent recount of halted vehicles from the raw simulator state.
pub fn halted(st: &SimState) -> usize {
    st.vehicles.values().filter(|v| v.mode == VehicleMode::Queued).count()
}

/// Random-action environment rollout across episode boundaries, checking
/// the observation contract at every step.
pub fn check_env_contract(env: &mut TrafficSignalEnv, steps: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = env.network().clone();
    let mode = env.config().action_mode;
    let expected_state = 3 * net.num_lanes() + (0..net.num_signals()).map(|s| net.num_phases(s)).sum::<usize>();
    let check_vectors = |obs: &[tsc_lab::env::Observation], state: &[f64]| -> Result<(), String> {
        for (i, o) in obs.iter().enumerate() {
            let want = 3 * net.incoming(i).len() + net.num_phases(i);
            if o.vector.len() != want {
                return Err(format!("agent {i}: observation length {} != {want}", o.vector.len()));
            }
            if let Some(x) = o.vector.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(format!("agent {i}: observation entry {x} outside [0,1]"));
            }
        }
        if state.len() != expected_state {
            return Err(format!("state length {} != {expected_state}", state.len()));
        }
        if let Some(x) = state.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(format!("state entry {x} outside [0,1]"));
        }
        Ok(())
    };
    let phase_of = |o: &tsc_lab::env::Observation, p: usize| {
        let tail = &o.vector[o.vector.len() - p..];
        tail.iter().position(|&x| x == 1.0).unwrap()
    };

    let (obs, state) = env.reset_with_seed(seed);
    check_vectors(&obs, &state.vector)?;
    let mut greens: Vec<usize> = (0..obs.len()).map(|i| phase_of(&obs[i], net.num_phases(i))).collect();
    for _ in 0..steps {
        let actions: Vec<usize> = (0..env.n_agents())
            .map(|i| rng.random_range(0..env.action_size(i)))
            .collect();
        let r = env.step(&actions).map_err(|e| e.to_string())?;
        check_vectors(&r.observations, &r.state.vector)?;
        let recount = halted(env.simulator().state());
        if r.reward != -(recount as f64) || r.info.queue_sum != recount as u64 {
            return Err(format!("reward {} but {recount} halted vehicles", r.reward));
        }
        for i in 0..obs.len() {
            let p = net.num_phases(i);
            let g = phase_of(&r.observations[i], p);
            if mode == ActionMode::RoundRobin && g != greens[i] && g != (greens[i] + 1) % p {
                return Err(format!("agent {i}: green {} followed by {g}", greens[i]));
            }
            greens[i] = g;
        }
        if r.terminated {
            let (obs, state) = env.reset();
            check_vectors(&obs, &state.vector)?;
            greens = (0..obs.len()).map(|i| phase_of(&obs[i], net.num_phases(i))).collect();
        }
    }
    Ok(())
}

/// Probability of the rewarded arm after `updates` IA2C updates on a
/// one-step, two-armed bandit, 8 episodes per update.
pub fn bandit_pi_best(updates: usize, seed: u64) -> f64 {
    use tsc_lab::env::{EnvSpec, GlobalState, Observation};
    use tsc_lab::marl::{ActorCriticTrainer, Algorithm, EpisodeRecorder, Explore, TrainerConfig, Trajectory};
    let spec = EnvSpec {
        n_agents: 1,
        obs_lengths: vec![1],
        action_sizes: vec![2],
        state_length: 1,
        episode_limit: 1,
    };
    let mut t = ActorCriticTrainer::new(TrainerConfig::new(Algorithm::Ia2c), &spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = vec![Observation { agent: 0, vector: vec![1.0] }];
    let state = GlobalState { vector: vec![1.0] };
    for _ in 0..updates {
        let snap = t.snapshot();
        let trajs: Vec<Trajectory> = (0..8)
            .map(|_| {
                let a = snap.act(&obs, Explore::Sample, &mut rng)[0];
                let r = if a == 0 { 1.0 } else { 0.0 };
                let mut rec = EpisodeRecorder::start(&obs, &state);
                rec.push_raw(vec![a], r, vec![r], vec![vec![1.0]], vec![1.0], true);
                Trajectory { policy_version: snap.version, episode: rec.finish() }
            })
            .collect();
        t.a2c_update(&trajs).unwrap();
    }
    t.policy(0, &[1.0])[0]
}
