use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::config::ArrivalKind;

/// Arrival instants of one route.
#[derive(Debug, Clone)]
pub(crate) struct ArrivalStream {
    kind: ArrivalKind,
    rate: f64,
    next: f64,
}

impl ArrivalStream {
    /// `rate` in vehicles per second; zero never fires.
    pub(crate) fn new<R: Rng + ?Sized>(kind: ArrivalKind, rate: f64, rng: &mut R) -> Self {
        let mut s = ArrivalStream {
            kind,
            rate,
            next: f64::INFINITY,
        };
        if rate > 0.0 {
            s.next = match kind {
                ArrivalKind::Deterministic => 0.0,
                ArrivalKind::Poisson => s.gap(rng),
            };
        }
        s
    }

    fn gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ArrivalKind::Deterministic => 1.0 / self.rate,
            ArrivalKind::Poisson => Exp::new(self.rate)
                .map(|e| e.sample(rng))
                .unwrap_or(f64::INFINITY),
        }
    }

    /// Pops the next arrival if it happens at or before `t`.
    pub(crate) fn pop_due<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Option<f64> {
        if self.next <= t + 1e-9 {
            let at = self.next;
            self.next += self.gap(rng);
            Some(at)
        } else {
            None
        }
    }
}
