use serde::{Deserialize, Serialize};

use super::{Lane, Movement, TrafficSignal, DEFAULT_VEHICLE_SPACING};

/// On-disk network format: `{"lanes":[…],"movements":[…],"signals":[…]}`.
///
/// `vehicle_spacing` is optional and defaults to 7.5 m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub lanes: Vec<Lane>,
    pub movements: Vec<Movement>,
    pub signals: Vec<TrafficSignal>,
    #[serde(default = "default_spacing")]
    pub vehicle_spacing: f64,
}

fn default_spacing() -> f64 {
    DEFAULT_VEHICLE_SPACING
}
