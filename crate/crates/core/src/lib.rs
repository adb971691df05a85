//! Cooperative speed optimization for autonomous vehicles approaching
//! signalized intersections.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: fixed-cycle two-phase light timing and queue arithmetic.
//! - [`token`]: green-window time-token allocation and conflict detection.
//! - [`planner`]: per-vehicle speed commands from signal state and token windows.
//! - [`game`]: two-player conflict games, multi-phase tournaments, credit ledger
//!   and small normal-form analysis.
//! - [`bargain`]: characteristic functions, marginal contributions and the core.
//! - [`energy`]: per-step electric vehicle energy accounting.
//! - [`sim`]: the discrete-time corridor simulator tying everything together.

pub mod bargain;
pub mod energy;
mod error;
pub mod game;
pub mod planner;
pub mod signal;
pub mod sim;
pub mod token;

pub use error::{Error, Result};

pub use bargain::{Allocation, CharacteristicFunction};
pub use energy::{EnergyLedger, EnergyParams};
pub use game::{CreditLedger, Mode, NormalFormGame2x2};
pub use planner::{KinematicState, Plan, Window};
pub use signal::{Approach, Indication, Phase, SignalConfig, SignalState};
pub use sim::{MetricsReport, SimConfig, Technique, World};
pub use token::{TimeToken, TokenTable, Vin};
