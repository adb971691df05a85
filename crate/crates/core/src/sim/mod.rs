//! Mixed-traffic corridor simulation running either technique on the same
//! arrival streams.

mod arrivals;
mod config;
pub mod following;
mod metrics;
pub mod trace;
mod world;

use serde::{Deserialize, Serialize};

pub use config::{
    ArrivalKind, LightConfig, ModeWeights, NetworkConfig, RouteConfig, SegmentConfig, SimConfig,
    VehicleParams,
};
pub use metrics::{CycleRecord, LegSummary, MetricsReport};
pub use world::{TrajectorySample, Vehicle, VehicleSpec, World, REARM_SPEED, STOP_SPEED};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    /// Token-coordinated speed optimization.
    Csof,
    /// Each vehicle optimizes alone, without tokens or queue knowledge.
    Ncso,
}

impl Technique {
    pub const ALL: [Technique; 2] = [Technique::Csof, Technique::Ncso];

    pub fn label(self) -> &'static str {
        match self {
            Technique::Csof => "CSOF",
            Technique::Ncso => "NCSO",
        }
    }
}

/// Runs one full simulation and returns its metrics.
pub fn run(config: &SimConfig, technique: Technique) -> Result<MetricsReport> {
    let mut world = World::new(config.clone(), technique)?;
    world.run_to_end();
    Ok(world.report())
}
