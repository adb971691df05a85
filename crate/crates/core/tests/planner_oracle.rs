use csof_core::planner::{plan, plan_to_window, Coordination, Objective};
use csof_core::signal::{Indication, Phase};
use csof_core::{KinematicState, SignalState, Window};
use proptest::prelude::*;

const DT: f64 = 0.1;

/// Arrival times reachable at constant speed intersected with the window,
/// or `None` when the intersection is empty. Boundary-grazing cases are
/// reported separately so the caller can skip them.
fn arrival_overlap(d: f64, v_min: f64, v_max: f64, w: Window) -> Result<Option<(f64, f64)>, ()> {
    let earliest = d / v_max;
    let latest = if v_min > 0.0 {
        d / v_min
    } else {
        f64::INFINITY
    };
    let lo = earliest.max(w.lo);
    let hi = latest.min(w.hi);
    if (hi - lo).abs() < 1e-7 {
        return Err(());
    }
    Ok((lo < hi).then_some((lo, hi)))
}

fn arrival(d: f64, v: f64) -> f64 {
    if v > 0.0 {
        d / v
    } else {
        f64::INFINITY
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn window_plans_match_interval_oracle(
        d in 1.0f64..800.0,
        v_min in 0.0f64..5.0,
        span in 1.0f64..25.0,
        speed_frac in 0.0f64..1.0,
        lo in 0.0f64..120.0,
        width in 0.5f64..30.0,
    ) {
        let v_max = v_min + span;
        let k = KinematicState::new(speed_frac * v_max, d, v_min, v_max).unwrap();
        let w = Window::new(lo, lo + width);
        let Ok(oracle) = arrival_overlap(d, v_min, v_max, w) else {
            return Ok(());
        };
        for objective in [Objective::MinSpeed, Objective::MaxSpeed, Objective::Hold] {
            let got = plan_to_window(&k, w, objective);
            prop_assert_eq!(got.is_some(), oracle.is_some(), "{:?} {:?}", objective, oracle);
            if let Some(v) = got {
                prop_assert!(v >= v_min - 1e-9 && v <= v_max + 1e-9);
                let t = arrival(d, v);
                prop_assert!(t >= w.lo - DT && t <= w.hi + DT, "arrives at {} outside {}", t, w);
            }
        }
    }

    #[test]
    fn dispatcher_speeds_are_bounded(
        d in 0.0f64..800.0,
        speed_frac in 0.0f64..1.0,
        green in any::<bool>(),
        remaining_frac in 0.01f64..1.0,
        queue_clear in 0.0f64..20.0,
        coordination in 0usize..4,
        token_lo in 0.0f64..60.0,
    ) {
        let (v_min, v_max) = (10.0 / 3.6, 60.0 / 3.6);
        let k = KinematicState::new(speed_frac * v_max, d, v_min, v_max).unwrap();
        let indication = if green {
            Indication::Green { remaining: 24.0 * remaining_frac, elapsed: 24.0 * (1.0 - remaining_frac) }
        } else {
            Indication::Red { remaining: 36.0 * remaining_frac }
        };
        let signal = SignalState {
            phase: Phase::GreenEastWest,
            indication,
            green_duration: 24.0,
            red_duration: 36.0,
            departure_rate: 0.333,
            queue_length: 0,
        };
        let coordination = match coordination {
            0 => Coordination::Independent,
            1 => Coordination::Denied,
            2 => Coordination::Cooperative { token: None },
            _ => Coordination::Cooperative { token: Some(Window::new(token_lo, token_lo + 3.003)) },
        };
        let p = plan(&k, &signal, coordination, queue_clear);
        prop_assert!(p.speed >= v_min - 1e-9 && p.speed <= v_max + 1e-9);
        if let (true, Some(w)) = (p.feasible, p.window) {
            let t = arrival(d, p.speed);
            prop_assert!(t >= w.lo - DT && t <= w.hi + DT);
        }
    }
}

#[test]
fn empty_band_is_infeasible() {
    // 100 m in at most 2 s needs 50 m/s.
    let k = KinematicState::new(10.0, 100.0, 2.0, 16.0).unwrap();
    assert_eq!(
        plan_to_window(&k, Window::new(0.0, 2.0), Objective::MaxSpeed),
        None
    );
    // Arriving no earlier than 60 s needs under 1.67 m/s.
    assert_eq!(
        plan_to_window(&k, Window::new(60.0, 70.0), Objective::MinSpeed),
        None
    );
    assert_eq!(
        plan_to_window(&k, Window::new(10.0, 20.0), Objective::MinSpeed),
        Some(5.0)
    );
}
