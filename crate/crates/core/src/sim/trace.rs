//! Trace lines.
//!
//! Token events: `t,approach,event,vin,tau`.
//! Conflicts: `t,conflict,token,winner,losers,tier`, losers joined by `;`.

use std::fmt::Write as _;

use crate::game::Tournament;
use crate::signal::Approach;
use crate::token::Vin;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenEvent {
    Claim,
    Grant,
    Reassign,
    Deny,
    Release,
    Expire,
    Permit,
    Cross,
}

impl TokenEvent {
    pub fn label(self) -> &'static str {
        match self {
            TokenEvent::Claim => "claim",
            TokenEvent::Grant => "grant",
            TokenEvent::Reassign => "reassign",
            TokenEvent::Deny => "deny",
            TokenEvent::Release => "release",
            TokenEvent::Expire => "expire",
            TokenEvent::Permit => "permit",
            TokenEvent::Cross => "cross",
        }
    }
}

pub fn approach_label(light: usize, approach: Approach) -> String {
    format!("L{}-{}", light + 1, approach.label())
}

pub fn token_line(t: f64, approach: &str, event: TokenEvent, vin: Vin, tau: u32) -> String {
    format!("{t:.1},{approach},{},{vin},{tau}", event.label())
}

pub fn conflict_line(t: f64, tau: u32, tournament: &Tournament) -> String {
    let mut losers = String::new();
    for (i, v) in tournament.losers.iter().enumerate() {
        if i > 0 {
            losers.push(';');
        }
        let _ = write!(losers, "{v}");
    }
    let tiers: Vec<&str> = tournament.games.iter().map(|g| g.tier.label()).collect();
    format!(
        "{t:.1},conflict,{tau},{},{losers},{}",
        tournament.holder,
        tiers.join(";")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{PairOutcome, Tier};

    #[test]
    fn line_formats() {
        let a = approach_label(0, Approach::East);
        assert_eq!(
            token_line(12.34, &a, TokenEvent::Grant, Vin(7), 3),
            "12.3,L1-east,grant,7,3"
        );
        let t = Tournament {
            holder: Vin(2),
            losers: vec![Vin(1), Vin(3)],
            games: vec![
                PairOutcome {
                    winner: Vin(2),
                    loser: Vin(1),
                    tier: Tier::Mode,
                },
                PairOutcome {
                    winner: Vin(2),
                    loser: Vin(3),
                    tier: Tier::Random,
                },
            ],
        };
        assert_eq!(
            conflict_line(5.0, 4, &t),
            "5.0,conflict,4,2,1;3,mode;random"
        );
    }
}
