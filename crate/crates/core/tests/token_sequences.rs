//! Randomized allocate / conflict / resolve rounds on one approach.

use csof_core::game::resolve_conflict;
use csof_core::signal::{Indication, Phase};
use csof_core::token::detect_conflicts;
use csof_core::{CreditLedger, Mode, SignalState, TokenTable, Vin};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MU: f64 = 0.333;
const GREEN: f64 = 24.0;
const CAPACITY: u32 = 8;

fn random_signal(rng: &mut ChaCha8Rng) -> SignalState {
    let queue = rng.random_range(0..6usize);
    let indication = if rng.random_bool(0.5) {
        let elapsed = rng.random_range(0.0..GREEN);
        Indication::Green {
            remaining: GREEN - elapsed,
            elapsed,
        }
    } else {
        Indication::Red {
            remaining: rng.random_range(0.1..36.0),
        }
    };
    SignalState {
        phase: Phase::GreenEastWest,
        indication,
        green_duration: GREEN,
        red_duration: 36.0,
        departure_rate: MU,
        queue_length: queue,
    }
}

/// Lowest slot an approaching vehicle may hold.
fn first_offered(s: &SignalState) -> u32 {
    let q = s.queue_length as u32;
    match s.indication {
        Indication::Green { elapsed, .. } => (elapsed * MU).floor() as u32 + 1 + q,
        Indication::Red { .. } => q + 1,
    }
}

struct Round {
    table: TokenTable,
    signal: SignalState,
    conflicts: usize,
}

fn play_round(seed: u64) -> Round {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut games = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut light = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a);
    let signal = random_signal(&mut rng);
    let mut table = TokenTable::new(MU, CAPACITY, 0);
    let mut ledger = CreditLedger::new();
    let mut modes = Vec::new();
    let mut conflicts = 0;
    let horizon = match signal.indication {
        Indication::Green { remaining, .. } => remaining,
        Indication::Red { remaining } => remaining + GREEN,
    };
    for _batch in 0..rng.random_range(1..4) {
        for _ in 0..rng.random_range(1..8) {
            let vin = Vin(modes.len() as u64);
            modes.push(Mode::ALL[rng.random_range(0..3)]);
            ledger.set(vin, rng.random_range(-3..4));
            table.allocate(vin, rng.random_range(0.0..horizon + 5.0), &signal);
        }
        let groups = detect_conflicts(&table.requests());
        for (tau, group) in groups {
            conflicts += 1;
            let t = resolve_conflict(
                &group,
                |v| modes[v.0 as usize],
                &mut ledger,
                &mut games,
                &mut light,
            )
            .unwrap();
            table.settle(tau, t.holder);
            for loser in t.losers {
                let lo = rng.random_range(0.0..horizon);
                table.reassign(loser, tau, (lo, lo + rng.random_range(0.0..20.0)), &signal);
            }
        }
        table.settle_uncontested();
    }
    Round {
        table,
        signal,
        conflicts,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn resolved_rounds_keep_token_invariants(seed in any::<u64>()) {
        let Round { table, signal, .. } = play_round(seed);
        // One owner per slot and one slot per owner.
        prop_assert!(table.is_consistent());
        prop_assert!(table.pending_claims().is_empty());
        let holdings = table.holdings();
        let mut owners: Vec<Vin> = holdings.iter().map(|h| h.0).collect();
        owners.sort();
        owners.dedup();
        prop_assert_eq!(owners.len(), holdings.len());
        // Queue slots are never handed to approaching vehicles.
        let first = first_offered(&signal);
        for &(_, tau) in &holdings {
            prop_assert!(tau >= first && tau > signal.queue_length as u32);
            prop_assert!(tau <= CAPACITY);
        }
        // Granted windows tile: consecutive, equal width, disjoint.
        let mut windows: Vec<(f64, f64)> = holdings
            .iter()
            .map(|&(_, tau)| table.window_from_now(tau, &signal))
            .collect();
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in windows.windows(2) {
            prop_assert!(w[0].1 <= w[1].0 + 1e-9);
        }
        for tau in 1..CAPACITY {
            let (a, b) = table.window_from_now(tau, &signal);
            let (next, _) = table.window_from_now(tau + 1, &signal);
            prop_assert!((next - b).abs() < 1e-9);
            prop_assert!((b - a - 1.0 / MU).abs() < 1e-9);
        }
    }
}

#[test]
fn rounds_exercise_conflicts() {
    let conflicts: usize = (0..500).map(|s| play_round(s).conflicts).sum();
    assert!(conflicts > 100, "only {conflicts} conflicts");
}
