use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{route_exists, FlowSpec};
use crate::netgraph::RoadNetwork;

/// Synthetic demand: a per-entry-lane rate split evenly over every exit
/// lane reachable from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripSpec {
    /// Vehicles per hour entering through each entry lane.
    pub rate: f64,
    /// Rate overrides keyed by entry lane id prefix; the longest match wins.
    pub rate_by_prefix: BTreeMap<String, f64>,
    pub start: f64,
    pub end: f64,
    /// Skip destinations whose route is longer than this many lanes.
    pub max_route_lanes: Option<usize>,
}

impl Default for TripSpec {
    fn default() -> Self {
        TripSpec {
            rate: 300.0,
            rate_by_prefix: BTreeMap::new(),
            start: 0.0,
            end: 1.0e9,
            max_route_lanes: None,
        }
    }
}

impl TripSpec {
    pub fn uniform(rate: f64) -> Self {
        TripSpec {
            rate,
            ..Default::default()
        }
    }

    fn rate_for(&self, lane_id: &str) -> f64 {
        self.rate_by_prefix
            .iter()
            .filter(|(p, _)| lane_id.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, &r)| r)
            .unwrap_or(self.rate)
    }
}

/// Builds flows for every entry lane. U-turns (an exit leaving the
/// intersection the entry feeds, with no movement between them) are skipped.
pub fn generate_trips(net: &RoadNetwork, spec: &TripSpec) -> Vec<FlowSpec> {
    let mut flows = Vec::new();
    for &entry in net.entry_lanes() {
        let entry_lane = net.lane(entry);
        let rate = spec.rate_for(&entry_lane.id);
        if rate <= 0.0 {
            continue;
        }
        let (_, entry_down) = net.lane_ends(entry);
        let dests: Vec<usize> = net
            .exit_lanes()
            .iter()
            .copied()
            .filter(|&exit| exit != entry)
            .filter(|&exit| {
                let (exit_up, _) = net.lane_ends(exit);
                !(exit_up == entry_down && net.movement_between(entry, exit).is_none())
            })
            .filter(|&exit| match spec.max_route_lanes {
                Some(max) => crate::netgraph::analytics_route(net, entry, exit)
                    .is_some_and(|r| r.len() <= max),
                None => route_exists(net, entry, exit),
            })
            .collect();
        if dests.is_empty() {
            continue;
        }
        let share = rate / dests.len() as f64;
        for exit in dests {
            flows.push(FlowSpec {
                origin: entry_lane.id.clone(),
                destination: net.lane(exit).id.clone(),
                rate: share,
                start: spec.start,
                end: spec.end,
            });
        }
    }
    flows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{generate_grid, GridSpec};

    #[test]
    fn rates_sum_per_entry() {
        let net = generate_grid(&GridSpec::new(2, 2)).unwrap();
        let flows = generate_trips(&net, &TripSpec::uniform(600.0));
        for &e in net.entry_lanes() {
            let id = &net.lane(e).id;
            let total: f64 = flows.iter().filter(|f| &f.origin == id).map(|f| f.rate).sum();
            assert!((total - 600.0).abs() < 1e-9, "{id}: {total}");
        }
    }

    #[test]
    fn prefix_overrides_pick_longest() {
        let mut spec = TripSpec::uniform(100.0);
        spec.rate_by_prefix.insert("W".into(), 700.0);
        spec.rate_by_prefix.insert("W01".into(), 0.0);
        assert_eq!(spec.rate_for("W00-I00_00"), 700.0);
        assert_eq!(spec.rate_for("W01-I01_00"), 0.0);
        assert_eq!(spec.rate_for("N00-I00_00"), 100.0);
    }

    #[test]
    fn no_u_turn_destinations() {
        let net = generate_grid(&GridSpec::new(2, 2)).unwrap();
        let flows = generate_trips(&net, &TripSpec::uniform(100.0));
        assert!(!flows
            .iter()
            .any(|f| f.origin == "W00-I00_00" && f.destination == "I00_00-W00"));
    }
}
