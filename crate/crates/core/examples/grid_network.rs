//! Builds a 3x3 grid and prints its basic graph analytics.

use tsc_lab::netgraph::{adjacency_matrix, degree_centrality, generate_grid, shortest_route, GridSpec, RoadNetwork};

fn main() -> anyhow::Result<()> {
    let net = generate_grid(&GridSpec::new(3, 3))?;
    println!("{} signals, {} lanes, {} movements", net.num_signals(), net.num_lanes(), net.movements().len());

    let adj = adjacency_matrix(&net);
    for row in &adj {
        println!("{}", row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "));
    }
    for (s, c) in net.signals().iter().zip(degree_centrality(&net)?) {
        println!("{:>8} centrality {c:.3}", s.id);
    }

    // Across the grid from the west edge to the east edge.
    let lane_id = |ls: &[usize], prefix: &str, at_start: bool| {
        ls.iter()
            .map(|&l| net.lane(l).id.clone())
            .find(|id| {
                let end = if at_start { id.split('-').next() } else { id.split('-').nth(1) };
                end.is_some_and(|e| e.starts_with(prefix))
            })
            .unwrap()
    };
    let entry = &lane_id(net.entry_lanes(), "W", true);
    let exit = &lane_id(net.exit_lanes(), "E", false);
    println!("route {entry} -> {exit}: {:?}", shortest_route(&net, entry, exit)?);

    // The JSON document round-trips.
    let back = RoadNetwork::from_json(&net.to_json())?;
    assert_eq!(back.num_lanes(), net.num_lanes());
    Ok(())
}
