use super::Technique;

/// Sums over completed approach legs (one leg = one segment ending at a
/// stop line, counted when the vehicle crosses it).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LegSummary {
    pub legs: u64,
    /// Seconds spent below the stop threshold.
    pub idle: f64,
    pub stops: u64,
    /// Joules.
    pub energy: f64,
}

impl LegSummary {
    pub fn record(&mut self, idle: f64, stops: u32, energy: f64) {
        self.legs += 1;
        self.idle += idle;
        self.stops += u64::from(stops);
        self.energy += energy;
    }

    pub fn merge(&mut self, other: &LegSummary) {
        self.legs += other.legs;
        self.idle += other.idle;
        self.stops += other.stops;
        self.energy += other.energy;
    }

    fn mean(&self, sum: f64) -> f64 {
        if self.legs == 0 {
            0.0
        } else {
            sum / self.legs as f64
        }
    }

    /// Seconds per vehicle.
    pub fn mean_idle(&self) -> f64 {
        self.mean(self.idle)
    }

    /// Stops per vehicle.
    pub fn mean_stops(&self) -> f64 {
        self.mean(self.stops as f64)
    }

    /// Joules per vehicle.
    pub fn mean_energy(&self) -> f64 {
        self.mean(self.energy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub technique: Technique,
    pub seed: u64,
    /// Indexed by light.
    pub intersections: Vec<LegSummary>,
    pub total: LegSummary,
    pub spawned: u64,
    pub completed: u64,
    pub in_network: u64,
}

/// Per-approach counts for one green window and the red before it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CycleRecord {
    pub segment: usize,
    pub cycle: i64,
    /// Vehicles whose free-flow arrival at the stop line fell in the red
    /// preceding this green.
    pub arrivals_during_red: u32,
    pub departures_during_green: u32,
    /// Vehicles waiting when this green ended.
    pub queue_at_green_end: u32,
}
