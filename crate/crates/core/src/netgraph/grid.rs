use serde::{Deserialize, Serialize};

use super::{
    parse_network, Lane, Movement, NetError, NetworkDocument, Phase, PhaseKind, RoadNetwork,
    TrafficSignal, Turn, DEFAULT_VEHICLE_SPACING, DEFAULT_VISIBILITY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseScheme {
    /// NS through vs EW through; right turns allowed in both.
    #[default]
    TwoPhase,
    /// NS through+right, NS left, EW through+right, EW left.
    FourPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub edge_length: f64,
    pub speed_limit: f64,
    pub phase_scheme: PhaseScheme,
    pub vehicle_spacing: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 2,
            cols: 2,
            edge_length: 200.0,
            speed_limit: 13.89,
            phase_scheme: PhaseScheme::TwoPhase,
            vehicle_spacing: DEFAULT_VEHICLE_SPACING,
        }
    }
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Self {
        GridSpec {
            rows,
            cols,
            ..Default::default()
        }
    }

    pub fn with_scheme(mut self, scheme: PhaseScheme) -> Self {
        self.phase_scheme = scheme;
        self
    }
}

// Sides in clockwise order.
const SIDES: [char; 4] = ['N', 'E', 'S', 'W'];

fn intersection_id(r: usize, c: usize) -> String {
    format!("I{r:02}_{c:02}")
}

/// Node on side `side` of intersection (r, c): a neighbouring intersection
/// or a boundary terminal.
fn neighbour(spec: &GridSpec, r: usize, c: usize, side: usize) -> (String, bool) {
    match SIDES[side] {
        'N' if r > 0 => (intersection_id(r - 1, c), true),
        'N' => (format!("N{c:02}"), false),
        'S' if r + 1 < spec.rows => (intersection_id(r + 1, c), true),
        'S' => (format!("S{c:02}"), false),
        'W' if c > 0 => (intersection_id(r, c - 1), true),
        'W' => (format!("W{r:02}"), false),
        'E' if c + 1 < spec.cols => (intersection_id(r, c + 1), true),
        'E' => (format!("E{r:02}"), false),
        _ => unreachable!(),
    }
}

fn lane_id(from: &str, to: &str) -> String {
    format!("{from}-{to}")
}

/// Generates a `rows × cols` lattice of four-way signalized intersections.
///
/// Each edge carries one lane per direction and every boundary approach gets
/// an entry lane and an exit lane. Row 0 is the northern edge.
pub fn generate_grid(spec: &GridSpec) -> Result<RoadNetwork, NetError> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(NetError::Config(format!(
            "grid dimensions must be positive, got {}x{}",
            spec.rows, spec.cols
        )));
    }
    if !(spec.vehicle_spacing > 0.0) || !(spec.edge_length >= 2.0 * spec.vehicle_spacing) {
        return Err(NetError::Config(format!(
            "edge_length {} must be at least twice the vehicle spacing {}",
            spec.edge_length, spec.vehicle_spacing
        )));
    }
    if !(spec.speed_limit > 0.0) {
        return Err(NetError::Config("speed_limit must be positive".into()));
    }

    let mut lanes = Vec::new();
    let mut movements = Vec::new();
    let mut signals = Vec::new();
    let mk_lane = |from: &str, to: &str, up: Option<String>, down: Option<String>| {
        Lane::with_spacing(
            lane_id(from, to),
            spec.edge_length,
            spec.speed_limit,
            spec.vehicle_spacing,
            up,
            down,
        )
    };

    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let here = intersection_id(r, c);
            let nodes: Vec<(String, bool)> = (0..4).map(|s| neighbour(spec, r, c, s)).collect();

            // Incoming lanes from every side. Internal lanes are emitted once,
            // by their downstream intersection; boundary exits are emitted here.
            for (node, internal) in &nodes {
                let up = internal.then(|| node.clone());
                lanes.push(mk_lane(node, &here, up, Some(here.clone())));
                if !internal {
                    lanes.push(mk_lane(&here, node, Some(here.clone()), None));
                }
            }

            // (side, turn, movement id) for every movement at this node.
            let mut local = Vec::new();
            for from_side in 0..4 {
                let turns = [
                    (Turn::Through, (from_side + 2) % 4),
                    (Turn::Right, (from_side + 3) % 4),
                    (Turn::Left, (from_side + 1) % 4),
                ];
                for (turn, to_side) in turns {
                    if turn == Turn::Left && spec.phase_scheme == PhaseScheme::TwoPhase {
                        continue;
                    }
                    let from_lane = lane_id(&nodes[from_side].0, &here);
                    let to_lane = lane_id(&here, &nodes[to_side].0);
                    let id = format!("{here}:{}>{}", nodes[from_side].0, nodes[to_side].0);
                    local.push((from_side, turn, id.clone()));
                    movements.push(Movement {
                        id,
                        from_lane,
                        to_lane,
                        turn,
                    });
                }
            }

            let ns = |s: usize| SIDES[s] == 'N' || SIDES[s] == 'S';
            let pick = |f: &dyn Fn(usize, Turn) -> bool| -> Vec<String> {
                let mut v: Vec<String> = local
                    .iter()
                    .filter(|(s, t, _)| f(*s, *t))
                    .map(|(_, _, id)| id.clone())
                    .collect();
                v.sort();
                v
            };
            let permitted: Vec<Vec<String>> = match spec.phase_scheme {
                PhaseScheme::TwoPhase => vec![
                    pick(&|s, t| t == Turn::Right || (ns(s) && t == Turn::Through)),
                    pick(&|s, t| t == Turn::Right || (!ns(s) && t == Turn::Through)),
                ],
                PhaseScheme::FourPhase => vec![
                    pick(&|s, t| ns(s) && t != Turn::Left),
                    pick(&|s, t| ns(s) && t == Turn::Left),
                    pick(&|s, t| !ns(s) && t != Turn::Left),
                    pick(&|s, t| !ns(s) && t == Turn::Left),
                ],
            };
            let mut incoming: Vec<String> = nodes.iter().map(|(n, _)| lane_id(n, &here)).collect();
            let mut outgoing: Vec<String> = nodes.iter().map(|(n, _)| lane_id(&here, n)).collect();
            incoming.sort();
            outgoing.sort();
            signals.push(TrafficSignal {
                id: here,
                incoming_lanes: incoming,
                outgoing_lanes: outgoing,
                green_phases: permitted
                    .into_iter()
                    .enumerate()
                    .map(|(index, permitted)| Phase {
                        index,
                        permitted,
                        kind: PhaseKind::Green,
                    })
                    .collect(),
                visibility: DEFAULT_VISIBILITY,
            });
        }
    }

    parse_network(NetworkDocument {
        lanes,
        movements,
        signals,
        vehicle_spacing: spec.vehicle_spacing,
    })
    .map_err(|e| NetError::Config(format!("generated grid failed validation: {e}")))
}
