//! Benchmark fixtures shared by the criterion targets.

use csof_core::bargain::{buyer_seller_cf, CharacteristicFunction};
use csof_core::signal::{Indication, Phase};
use csof_core::{SignalState, SimConfig};

/// A red light with `queue` vehicles waiting, default timing.
pub fn red_signal(remaining: f64, queue: usize) -> SignalState {
    SignalState {
        phase: Phase::GreenEastWest,
        indication: Indication::Red { remaining },
        green_duration: 24.0,
        red_duration: 36.0,
        departure_rate: 0.333,
        queue_length: queue,
    }
}

pub fn green_signal(elapsed: f64, queue: usize) -> SignalState {
    SignalState {
        indication: Indication::Green {
            remaining: 24.0 - elapsed,
            elapsed,
        },
        ..red_signal(0.0, queue)
    }
}

/// One seller and `buyers` buyers with valuations 4, 5, 6, ...
pub fn market(buyers: usize) -> CharacteristicFunction {
    let valuations: Vec<f64> = (0..buyers).map(|i| 4.0 + i as f64).collect();
    buyer_seller_cf(3.0, &valuations).expect("valid market")
}

/// The default corridor shortened to `duration` seconds.
pub fn corridor(volume: f64, duration: f64) -> SimConfig {
    SimConfig {
        volume,
        duration,
        ..SimConfig::default()
    }
}
