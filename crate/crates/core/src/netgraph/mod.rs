//! Road network model: lanes, movements, signalized intersections and their
//! green phases, plus the grid generator, the JSON network format and graph
//! analytics used by graph-aware controllers.
//!
//! A [`RoadNetwork`] is immutable once built. Every list it exposes is sorted
//! by id so that observation layouts and matrices are reproducible.

mod analytics;
mod document;
mod grid;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use analytics::{adjacency_matrix, degree_centrality, shortest_route};
pub(crate) use analytics::route_indices as analytics_route;
pub use document::NetworkDocument;
pub use grid::{generate_grid, GridSpec, PhaseScheme};

/// Jam spacing of a queued vehicle, in meters.
pub const DEFAULT_VEHICLE_SPACING: f64 = 7.5;

/// Default detection range of a signal, in meters.
pub const DEFAULT_VISIBILITY: f64 = 50.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("routing error: {0}")]
    Routing(String),
    #[error("centrality undefined: {0}")]
    Undefined(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: String,
    /// Meters.
    pub length: f64,
    /// Meters per second.
    pub speed_limit: f64,
    /// Maximum number of vehicles stored on the lane.
    pub capacity: usize,
    #[serde(default)]
    pub upstream_intersection: Option<String>,
    #[serde(default)]
    pub downstream_intersection: Option<String>,
}

impl Lane {
    pub fn with_spacing(
        id: impl Into<String>,
        length: f64,
        speed_limit: f64,
        spacing: f64,
        upstream: Option<String>,
        downstream: Option<String>,
    ) -> Self {
        Lane {
            id: id.into(),
            length,
            speed_limit,
            capacity: (length / spacing).floor() as usize,
            upstream_intersection: upstream,
            downstream_intersection: downstream,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Through,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub id: String,
    pub from_lane: String,
    pub to_lane: String,
    pub turn: Turn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Green,
    Yellow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub index: usize,
    /// Movement ids, sorted.
    pub permitted: Vec<String>,
    pub kind: PhaseKind,
}

impl Phase {
    /// The yellow phase that must follow this green.
    pub fn yellow(&self) -> Phase {
        Phase {
            kind: PhaseKind::Yellow,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSignal {
    pub id: String,
    pub incoming_lanes: Vec<String>,
    pub outgoing_lanes: Vec<String>,
    pub green_phases: Vec<Phase>,
    #[serde(default = "default_visibility")]
    pub visibility: f64,
}

fn default_visibility() -> f64 {
    DEFAULT_VISIBILITY
}

/// Validated, index-resolved road network.
///
/// Lanes, movements and signals are addressed both by string id and by their
/// position in the id-sorted lists; the simulator works on positions.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    lanes: Vec<Lane>,
    movements: Vec<Movement>,
    signals: Vec<TrafficSignal>,
    vehicle_spacing: f64,

    lane_index: HashMap<String, usize>,
    movement_index: HashMap<String, usize>,
    signal_index: HashMap<String, usize>,
    lane_upstream: Vec<Option<usize>>,
    lane_downstream: Vec<Option<usize>>,
    movements_from: Vec<Vec<usize>>,
    movement_ends: Vec<(usize, usize)>,
    movement_signal: Vec<usize>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
    phase_movements: Vec<Vec<Vec<usize>>>,
    entry_lanes: Vec<usize>,
    exit_lanes: Vec<usize>,
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.lanes == other.lanes
            && self.movements == other.movements
            && self.signals == other.signals
            && self.vehicle_spacing == other.vehicle_spacing
    }
}

impl RoadNetwork {
    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn movements(&self) -> &[Movement] {
        &self.movements
    }

    pub fn signals(&self) -> &[TrafficSignal] {
        &self.signals
    }

    pub fn vehicle_spacing(&self) -> f64 {
        self.vehicle_spacing
    }

    pub fn lane(&self, idx: usize) -> &Lane {
        &self.lanes[idx]
    }

    pub fn lane_idx(&self, id: &str) -> Option<usize> {
        self.lane_index.get(id).copied()
    }

    pub fn movement_idx(&self, id: &str) -> Option<usize> {
        self.movement_index.get(id).copied()
    }

    pub fn signal_idx(&self, id: &str) -> Option<usize> {
        self.signal_index.get(id).copied()
    }

    pub fn num_lanes(&self) -> usize {
        self.lanes.len()
    }

    pub fn num_signals(&self) -> usize {
        self.signals.len()
    }

    /// Signal positions at the two ends of a lane.
    pub fn lane_ends(&self, lane: usize) -> (Option<usize>, Option<usize>) {
        (self.lane_upstream[lane], self.lane_downstream[lane])
    }

    /// Movements leaving `lane`, ordered by movement id.
    pub fn movements_from(&self, lane: usize) -> &[usize] {
        &self.movements_from[lane]
    }

    /// `(from_lane, to_lane)` positions of a movement.
    pub fn movement_ends(&self, movement: usize) -> (usize, usize) {
        self.movement_ends[movement]
    }

    pub fn movement_signal(&self, movement: usize) -> usize {
        self.movement_signal[movement]
    }

    /// The movement joining two lanes, if any.
    pub fn movement_between(&self, from: usize, to: usize) -> Option<usize> {
        self.movements_from[from]
            .iter()
            .copied()
            .find(|&m| self.movement_ends[m].1 == to)
    }

    /// Incoming lane positions of a signal, in observation order.
    pub fn incoming(&self, signal: usize) -> &[usize] {
        &self.incoming[signal]
    }

    pub fn outgoing(&self, signal: usize) -> &[usize] {
        &self.outgoing[signal]
    }

    pub fn num_phases(&self, signal: usize) -> usize {
        self.phase_movements[signal].len()
    }

    /// Movement positions permitted by a green phase.
    pub fn phase_movements(&self, signal: usize, phase: usize) -> &[usize] {
        &self.phase_movements[signal][phase]
    }

    pub fn entry_lanes(&self) -> &[usize] {
        &self.entry_lanes
    }

    pub fn exit_lanes(&self) -> &[usize] {
        &self.exit_lanes
    }

    pub fn is_exit(&self, lane: usize) -> bool {
        self.lane_downstream[lane].is_none()
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            lanes: self.lanes.clone(),
            movements: self.movements.clone(),
            signals: self.signals.clone(),
            vehicle_spacing: self.vehicle_spacing,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let doc: NetworkDocument =
            serde_json::from_str(text).map_err(|e| NetError::Parse(e.to_string()))?;
        parse_network(doc)
    }

    /// Builds the network from already-sorted, already-validated parts.
    fn assemble(
        lanes: Vec<Lane>,
        movements: Vec<Movement>,
        signals: Vec<TrafficSignal>,
        vehicle_spacing: f64,
    ) -> Self {
        let lane_index: HashMap<_, _> = lanes
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.clone(), i))
            .collect();
        let movement_index: HashMap<_, _> = movements
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), i))
            .collect();
        let signal_index: HashMap<_, _> = signals
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        let sig = |id: &Option<String>| id.as_ref().map(|s| signal_index[s]);
        let lane_upstream: Vec<_> = lanes.iter().map(|l| sig(&l.upstream_intersection)).collect();
        let lane_downstream: Vec<_> = lanes
            .iter()
            .map(|l| sig(&l.downstream_intersection))
            .collect();

        let mut movements_from = vec![Vec::new(); lanes.len()];
        let mut movement_ends = Vec::with_capacity(movements.len());
        let mut movement_signal = Vec::with_capacity(movements.len());
        for (mi, m) in movements.iter().enumerate() {
            let from = lane_index[&m.from_lane];
            let to = lane_index[&m.to_lane];
            movements_from[from].push(mi);
            movement_ends.push((from, to));
            movement_signal.push(lane_downstream[from].expect("validated movement"));
        }

        let incoming = signals
            .iter()
            .map(|s| s.incoming_lanes.iter().map(|l| lane_index[l]).collect())
            .collect();
        let outgoing = signals
            .iter()
            .map(|s| s.outgoing_lanes.iter().map(|l| lane_index[l]).collect())
            .collect();
        let phase_movements = signals
            .iter()
            .map(|s| {
                s.green_phases
                    .iter()
                    .map(|p| p.permitted.iter().map(|m| movement_index[m]).collect())
                    .collect()
            })
            .collect();
        let entry_lanes = (0..lanes.len())
            .filter(|&i| lane_upstream[i].is_none())
            .collect();
        let exit_lanes = (0..lanes.len())
            .filter(|&i| lane_downstream[i].is_none())
            .collect();

        RoadNetwork {
            lanes,
            movements,
            signals,
            vehicle_spacing,
            lane_index,
            movement_index,
            signal_index,
            lane_upstream,
            lane_downstream,
            movements_from,
            movement_ends,
            movement_signal,
            incoming,
            outgoing,
            phase_movements,
            entry_lanes,
            exit_lanes,
        }
    }
}

impl Serialize for RoadNetwork {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RoadNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = NetworkDocument::deserialize(deserializer)?;
        parse_network(doc).map_err(serde::de::Error::custom)
    }
}

/// Validates a network document and resolves it into a [`RoadNetwork`].
///
/// Lists are normalized to id order, so a document whose entries are shuffled
/// parses to the same network.
pub fn parse_network(doc: NetworkDocument) -> Result<RoadNetwork, NetError> {
    let NetworkDocument {
        mut lanes,
        mut movements,
        mut signals,
        vehicle_spacing,
    } = doc;
    let err = |msg: String| Err(NetError::Parse(msg));

    if !(vehicle_spacing > 0.0) {
        return err(format!("vehicle_spacing must be positive, got {vehicle_spacing}"));
    }
    lanes.sort_by(|a, b| a.id.cmp(&b.id));
    movements.sort_by(|a, b| a.id.cmp(&b.id));
    signals.sort_by(|a, b| a.id.cmp(&b.id));

    let mut lane_ids = BTreeSet::new();
    for l in &lanes {
        if !lane_ids.insert(l.id.as_str()) {
            return err(format!("duplicate lane id \"{}\"", l.id));
        }
        if !(l.length > 0.0) || !(l.speed_limit > 0.0) {
            return err(format!("lane \"{}\" needs positive length and speed_limit", l.id));
        }
        if l.capacity < 1 || (l.capacity - 1) as f64 * vehicle_spacing > l.length {
            return err(format!(
                "lane \"{}\" capacity {} does not fit a {} m lane",
                l.id, l.capacity, l.length
            ));
        }
    }
    let signal_ids: BTreeSet<&str> = signals.iter().map(|s| s.id.as_str()).collect();
    if signal_ids.len() != signals.len() {
        return err("duplicate signal id".into());
    }
    let lane_by_id: HashMap<&str, &Lane> = lanes.iter().map(|l| (l.id.as_str(), l)).collect();
    for l in &lanes {
        for end in [&l.upstream_intersection, &l.downstream_intersection]
            .into_iter()
            .flatten()
        {
            if !signal_ids.contains(end.as_str()) {
                return err(format!(
                    "lane \"{}\" references unknown intersection \"{end}\"",
                    l.id
                ));
            }
        }
    }

    let mut movement_ids = BTreeSet::new();
    for m in &movements {
        if !movement_ids.insert(m.id.as_str()) {
            return err(format!("duplicate movement id \"{}\"", m.id));
        }
        let from = match lane_by_id.get(m.from_lane.as_str()) {
            Some(l) => l,
            None => {
                return err(format!(
                    "movement \"{}\" references missing lane \"{}\"",
                    m.id, m.from_lane
                ))
            }
        };
        let to = match lane_by_id.get(m.to_lane.as_str()) {
            Some(l) => l,
            None => {
                return err(format!(
                    "movement \"{}\" references missing lane \"{}\"",
                    m.id, m.to_lane
                ))
            }
        };
        if from.downstream_intersection.is_none()
            || from.downstream_intersection != to.upstream_intersection
        {
            return err(format!(
                "movement \"{}\" does not cross a single intersection ({} -> {})",
                m.id, m.from_lane, m.to_lane
            ));
        }
    }
    let movement_by_id: HashMap<&str, &Movement> =
        movements.iter().map(|m| (m.id.as_str(), m)).collect();

    for s in &mut signals {
        s.incoming_lanes.sort();
        s.outgoing_lanes.sort();
        if s.incoming_lanes.is_empty() {
            return err(format!("signal \"{}\" has no incoming lanes", s.id));
        }
        if !(s.visibility > 0.0) {
            return err(format!("signal \"{}\" needs positive visibility", s.id));
        }
        for lid in &s.incoming_lanes {
            match lane_by_id.get(lid.as_str()) {
                None => return err(format!("signal \"{}\" references missing lane \"{lid}\"", s.id)),
                Some(l) if l.downstream_intersection.as_deref() != Some(s.id.as_str()) => {
                    return err(format!(
                        "lane \"{lid}\" listed as incoming to \"{}\" but ends elsewhere",
                        s.id
                    ))
                }
                _ => {}
            }
        }
        for lid in &s.outgoing_lanes {
            match lane_by_id.get(lid.as_str()) {
                None => return err(format!("signal \"{}\" references missing lane \"{lid}\"", s.id)),
                Some(l) if l.upstream_intersection.as_deref() != Some(s.id.as_str()) => {
                    return err(format!(
                        "lane \"{lid}\" listed as outgoing from \"{}\" but starts elsewhere",
                        s.id
                    ))
                }
                _ => {}
            }
        }
        let expected_in = lanes
            .iter()
            .filter(|l| l.downstream_intersection.as_deref() == Some(s.id.as_str()))
            .count();
        if expected_in != s.incoming_lanes.len() {
            return err(format!("signal \"{}\" does not list all of its incoming lanes", s.id));
        }
        if s.green_phases.len() < 2 {
            return err(format!("signal \"{}\" needs at least two green phases", s.id));
        }
        s.green_phases.sort_by_key(|p| p.index);
        let n_phases = s.green_phases.len();
        for (k, p) in s.green_phases.iter_mut().enumerate() {
            if p.index != k {
                return err(format!(
                    "signal \"{}\" phase indices are not dense 0..{n_phases}",
                    s.id
                ));
            }
            if p.kind != PhaseKind::Green {
                return err(format!("signal \"{}\" phase {k} must be a green phase", s.id));
            }
            p.permitted.sort();
            p.permitted.dedup();
            for mid in &p.permitted {
                let m = match movement_by_id.get(mid.as_str()) {
                    Some(m) => m,
                    None => {
                        return err(format!(
                            "signal \"{}\" phase {k} permits unknown movement \"{mid}\"",
                            s.id
                        ))
                    }
                };
                if lane_by_id[m.from_lane.as_str()].downstream_intersection.as_deref()
                    != Some(s.id.as_str())
                {
                    return err(format!(
                        "signal \"{}\" phase {k} permits movement \"{mid}\" of another intersection",
                        s.id
                    ));
                }
            }
        }
    }

    Ok(RoadNetwork::assemble(lanes, movements, signals, vehicle_spacing))
}
