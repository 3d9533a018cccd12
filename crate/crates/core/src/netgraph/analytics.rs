use std::collections::VecDeque;

use super::{NetError, RoadNetwork};

/// Symmetric 0/1 signal adjacency: `1` when a lane joins the two
/// intersections in either direction.
pub fn adjacency_matrix(net: &RoadNetwork) -> Vec<Vec<u8>> {
    let n = net.num_signals();
    let mut adj = vec![vec![0u8; n]; n];
    for lane in 0..net.num_lanes() {
        if let (Some(a), Some(b)) = net.lane_ends(lane) {
            if a != b {
                adj[a][b] = 1;
                adj[b][a] = 1;
            }
        }
    }
    adj
}

/// Normalized degree: neighbour count over `n - 1`.
pub fn degree_centrality(net: &RoadNetwork) -> Result<Vec<f64>, NetError> {
    let n = net.num_signals();
    if n < 2 {
        return Err(NetError::Undefined(format!(
            "degree centrality needs at least 2 signals, network has {n}"
        )));
    }
    Ok(adjacency_matrix(net)
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).sum::<f64>() / (n - 1) as f64)
        .collect())
}

/// Minimal-hop lane sequence from an entry lane to an exit lane, following
/// declared movements. Ties go to the lowest lane id at each hop.
pub fn shortest_route(
    net: &RoadNetwork,
    origin: &str,
    destination: &str,
) -> Result<Vec<String>, NetError> {
    let o = net
        .lane_idx(origin)
        .ok_or_else(|| NetError::Routing(format!("unknown origin lane \"{origin}\"")))?;
    let d = net
        .lane_idx(destination)
        .ok_or_else(|| NetError::Routing(format!("unknown destination lane \"{destination}\"")))?;
    if net.lane_ends(o).0.is_some() {
        return Err(NetError::Routing(format!("\"{origin}\" is not an entry lane")));
    }
    if !net.is_exit(d) {
        return Err(NetError::Routing(format!("\"{destination}\" is not an exit lane")));
    }
    let route = route_indices(net, o, d).ok_or_else(|| {
        NetError::Routing(format!("\"{destination}\" is unreachable from \"{origin}\""))
    })?;
    Ok(route.into_iter().map(|l| net.lane(l).id.clone()).collect())
}

/// Breadth-first search over lane positions.
pub(crate) fn route_indices(net: &RoadNetwork, origin: usize, destination: usize) -> Option<Vec<usize>> {
    let mut parent: Vec<Option<usize>> = vec![None; net.num_lanes()];
    let mut seen = vec![false; net.num_lanes()];
    let mut queue = VecDeque::from([origin]);
    seen[origin] = true;
    let mut next = Vec::new();
    while let Some(lane) = queue.pop_front() {
        if lane == destination {
            let mut route = vec![lane];
            let mut cur = lane;
            while let Some(p) = parent[cur] {
                route.push(p);
                cur = p;
            }
            route.reverse();
            return Some(route);
        }
        next.clear();
        next.extend(net.movements_from(lane).iter().map(|&m| net.movement_ends(m).1));
        next.sort_unstable();
        for &to in &next {
            if !seen[to] {
                seen[to] = true;
                parent[to] = Some(lane);
                queue.push_back(to);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{generate_grid, GridSpec};

    #[test]
    fn single_signal_adjacency_is_zero() {
        let net = generate_grid(&GridSpec::new(1, 1)).unwrap();
        assert_eq!(adjacency_matrix(&net), vec![vec![0]]);
        assert!(matches!(degree_centrality(&net), Err(NetError::Undefined(_))));
    }

    #[test]
    fn direct_route_is_two_lanes() {
        let net = generate_grid(&GridSpec::new(1, 1)).unwrap();
        let r = shortest_route(&net, "W00-I00_00", "I00_00-E00").unwrap();
        assert_eq!(r, vec!["W00-I00_00", "I00_00-E00"]);
    }

    #[test]
    fn unreachable_destination_errors() {
        // Two-phase grids have no left turns: north entry cannot reach the
        // east exit of a lone intersection.
        let net = generate_grid(&GridSpec::new(1, 1)).unwrap();
        assert!(matches!(
            shortest_route(&net, "N00-I00_00", "I00_00-E00"),
            Err(NetError::Routing(_))
        ));
        assert!(shortest_route(&net, "N00-I00_00", "nope").is_err());
    }
}
