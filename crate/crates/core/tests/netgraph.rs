use proptest::prelude::*;
use tsc_lab::netgraph::{
    adjacency_matrix, degree_centrality, generate_grid, parse_network, shortest_route, GridSpec,
    Lane, Movement, NetError, NetworkDocument, Phase, PhaseKind, PhaseScheme, RoadNetwork,
    TrafficSignal, Turn,
};

fn grid(rows: usize, cols: usize) -> RoadNetwork {
    generate_grid(&GridSpec::new(rows, cols)).unwrap()
}

fn lane(id: &str, up: Option<&str>, down: Option<&str>) -> Lane {
    Lane::with_spacing(id, 100.0, 10.0, 7.5, up.map(String::from), down.map(String::from))
}

fn movement(from: &str, to: &str) -> Movement {
    Movement {
        id: format!("{from}>{to}"),
        from_lane: from.into(),
        to_lane: to.into(),
        turn: Turn::Through,
    }
}

fn green(index: usize, permitted: &[&str]) -> Phase {
    Phase {
        index,
        permitted: permitted.iter().map(|s| s.to_string()).collect(),
        kind: PhaseKind::Green,
    }
}

/// Signals A - B - C in a line, with one entry and one exit at each end and
/// a lane each way between neighbours.
fn arterial() -> NetworkDocument {
    let lanes = vec![
        lane("in_w", None, Some("A")),
        lane("out_w", Some("A"), None),
        lane("in_e", None, Some("C")),
        lane("out_e", Some("C"), None),
        lane("ab", Some("A"), Some("B")),
        lane("ba", Some("B"), Some("A")),
        lane("bc", Some("B"), Some("C")),
        lane("cb", Some("C"), Some("B")),
    ];
    let movements = vec![
        movement("in_w", "ab"),
        movement("ab", "bc"),
        movement("bc", "out_e"),
        movement("in_e", "cb"),
        movement("cb", "ba"),
        movement("ba", "out_w"),
    ];
    let signal = |id: &str, incoming: &[&str], outgoing: &[&str], p0: &str, p1: &str| TrafficSignal {
        id: id.into(),
        incoming_lanes: incoming.iter().map(|s| s.to_string()).collect(),
        outgoing_lanes: outgoing.iter().map(|s| s.to_string()).collect(),
        green_phases: vec![green(0, &[p0]), green(1, &[p1])],
        visibility: 50.0,
    };
    NetworkDocument {
        lanes,
        movements,
        signals: vec![
            signal("A", &["in_w", "ba"], &["ab", "out_w"], "in_w>ab", "ba>out_w"),
            signal("B", &["ab", "cb"], &["ba", "bc"], "ab>bc", "cb>ba"),
            signal("C", &["bc", "in_e"], &["cb", "out_e"], "bc>out_e", "in_e>cb"),
        ],
        vehicle_spacing: 7.5,
    }
}

#[test]
fn grid_signal_counts() {
    assert_eq!(grid(2, 2).num_signals(), 4);
    assert_eq!(grid(3, 3).num_signals(), 9);
    let one = grid(1, 1);
    assert_eq!(one.num_signals(), 1);
    assert_eq!(one.entry_lanes().len(), 4);
    assert_eq!(one.exit_lanes().len(), 4);
    assert_eq!(one.num_lanes(), 8);
    assert_eq!(adjacency_matrix(&one), vec![vec![0]]);
}

#[test]
fn single_signal_centrality_is_undefined() {
    assert!(matches!(degree_centrality(&grid(1, 1)), Err(NetError::Undefined(_))));
}

#[test]
fn zero_sized_grid_is_a_config_error() {
    assert!(matches!(generate_grid(&GridSpec::new(0, 3)), Err(NetError::Config(_))));
    let short = GridSpec {
        edge_length: 10.0,
        ..GridSpec::new(2, 2)
    };
    assert!(matches!(generate_grid(&short), Err(NetError::Config(_))));
}

#[test]
fn missing_lane_is_named() {
    let mut doc = arterial();
    doc.movements.push(movement("in_w", "x"));
    let err = parse_network(doc).unwrap_err();
    assert!(matches!(err, NetError::Parse(_)));
    assert!(err.to_string().contains("\"x\""), "{err}");
}

#[test]
fn unknown_permitted_movement_is_named() {
    let mut doc = arterial();
    doc.signals[1].green_phases[0].permitted.push("ghost".into());
    let err = parse_network(doc).unwrap_err();
    assert!(err.to_string().contains("ghost"), "{err}");
}

#[test]
fn sparse_phase_indices_are_rejected() {
    let mut doc = arterial();
    doc.signals[2].green_phases[1].index = 5;
    let err = parse_network(doc).unwrap_err();
    assert!(matches!(err, NetError::Parse(_)), "{err}");
    assert!(err.to_string().contains('C'), "{err}");
}

#[test]
fn single_green_phase_is_rejected() {
    let mut doc = arterial();
    doc.signals[0].green_phases.truncate(1);
    assert!(parse_network(doc).is_err());
}

#[test]
fn arterial_adjacency() {
    let net = parse_network(arterial()).unwrap();
    assert_eq!(net.num_signals(), 3);
    assert_eq!(
        adjacency_matrix(&net),
        vec![vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]
    );
    let c = degree_centrality(&net).unwrap();
    assert_eq!(c, vec![0.5, 1.0, 0.5]);
}

#[test]
fn triangle_centrality_is_one() {
    let pairs = [("A", "B"), ("B", "C"), ("C", "A")];
    let mut lanes = vec![lane("in", None, Some("A")), lane("out", Some("A"), None)];
    for (a, b) in pairs {
        lanes.push(lane(&format!("{a}{b}"), Some(a), Some(b)));
    }
    let movements = vec![
        movement("in", "AB"),
        movement("AB", "BC"),
        movement("BC", "CA"),
        movement("CA", "out"),
    ];
    let signal = |id: &str, incoming: Vec<&str>, outgoing: Vec<&str>, m: &str| TrafficSignal {
        id: id.into(),
        incoming_lanes: incoming.into_iter().map(String::from).collect(),
        outgoing_lanes: outgoing.into_iter().map(String::from).collect(),
        green_phases: vec![green(0, &[m]), green(1, &[])],
        visibility: 50.0,
    };
    let net = parse_network(NetworkDocument {
        lanes,
        movements,
        signals: vec![
            signal("A", vec!["CA", "in"], vec!["AB", "out"], "CA>out"),
            signal("B", vec!["AB"], vec!["BC"], "AB>BC"),
            signal("C", vec!["BC"], vec!["CA"], "BC>CA"),
        ],
        vehicle_spacing: 7.5,
    })
    .unwrap();
    assert_eq!(degree_centrality(&net).unwrap(), vec![1.0; 3]);
}

/// Lattice degree of cell (r, c), counted by hand.
fn lattice_degree(rows: usize, cols: usize, r: usize, c: usize) -> usize {
    (r > 0) as usize + (r + 1 < rows) as usize + (c > 0) as usize + (c + 1 < cols) as usize
}

#[test]
fn two_by_two_and_three_by_three_degrees() {
    for row in adjacency_matrix(&grid(2, 2)) {
        assert_eq!(row.iter().map(|&v| v as usize).sum::<usize>(), 2);
    }
    assert_eq!(degree_centrality(&grid(2, 2)).unwrap(), vec![2.0 / 3.0; 4]);

    let net = grid(3, 3);
    let adj = adjacency_matrix(&net);
    let c = degree_centrality(&net).unwrap();
    for r in 0..3 {
        for col in 0..3 {
            let i = r * 3 + col;
            let deg = lattice_degree(3, 3, r, col);
            assert_eq!(adj[i].iter().map(|&v| v as usize).sum::<usize>(), deg);
            assert_eq!(c[i], deg as f64 / 8.0);
        }
    }
    assert_eq!(c[4], 0.5);
}

#[test]
fn two_by_two_corner_to_corner_route() {
    let net = grid(2, 2);
    let route = shortest_route(&net, "W00-I00_00", "I01_01-S01").unwrap();
    assert_eq!(
        route,
        vec!["W00-I00_00", "I00_00-I00_01", "I00_01-I01_01", "I01_01-S01"]
    );
}

#[test]
fn direct_route_and_routing_errors() {
    let net = grid(1, 1);
    let r = shortest_route(&net, "W00-I00_00", "I00_00-E00").unwrap();
    assert_eq!(r.len(), 2);
    assert!(matches!(
        shortest_route(&net, "W00-I00_00", "nowhere"),
        Err(NetError::Routing(_))
    ));
    // With only through and right turns, the left exit has no movement from the west.
    assert!(matches!(
        shortest_route(&net, "W00-I00_00", "I00_00-N00"),
        Err(NetError::Routing(_))
    ));
}

fn scheme() -> impl Strategy<Value = PhaseScheme> {
    prop_oneof![Just(PhaseScheme::TwoPhase), Just(PhaseScheme::FourPhase)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn json_round_trip(rows in 1usize..=3, cols in 1usize..=3, scheme in scheme()) {
        let net = generate_grid(&GridSpec::new(rows, cols).with_scheme(scheme)).unwrap();
        let back = RoadNetwork::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(&back, &net);
        let reparsed = parse_network(net.to_document()).unwrap();
        prop_assert_eq!(&reparsed, &net);
    }

    #[test]
    fn adjacency_structure(rows in 1usize..=5, cols in 1usize..=5) {
        let net = grid(rows, cols);
        prop_assert_eq!(net.num_signals(), rows * cols);
        let adj = adjacency_matrix(&net);
        let mut total = 0usize;
        for i in 0..adj.len() {
            prop_assert_eq!(adj[i][i], 0);
            for j in 0..adj.len() {
                prop_assert_eq!(adj[i][j], adj[j][i]);
                total += adj[i][j] as usize;
            }
        }
        prop_assert_eq!(total, 2 * (rows * (cols - 1) + cols * (rows - 1)));
    }

    #[test]
    fn centrality_respects_grid_symmetry(rows in 2usize..=5, cols in 2usize..=5) {
        let c = degree_centrality(&grid(rows, cols)).unwrap();
        for r in 0..rows {
            for col in 0..cols {
                let v = c[r * cols + col];
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, c[(rows - 1 - r) * cols + col]);
                prop_assert_eq!(v, c[r * cols + (cols - 1 - col)]);
            }
        }
    }

    #[test]
    fn routes_follow_movements(rows in 1usize..=3, cols in 1usize..=3, scheme in scheme()) {
        let net = generate_grid(&GridSpec::new(rows, cols).with_scheme(scheme)).unwrap();
        for &o in net.entry_lanes() {
            for &d in net.exit_lanes() {
                let (oid, did) = (&net.lane(o).id, &net.lane(d).id);
                let Ok(route) = shortest_route(&net, oid, did) else { continue };
                prop_assert_eq!(&route[0], oid);
                prop_assert_eq!(route.last().unwrap(), did);
                for w in route.windows(2) {
                    let (a, b) = (net.lane_idx(&w[0]).unwrap(), net.lane_idx(&w[1]).unwrap());
                    prop_assert!(net.movement_between(a, b).is_some(), "{} -> {}", w[0], w[1]);
                }
            }
        }
    }
}
