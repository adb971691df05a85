//! Longitudinal safety rules shared by both techniques.
//!
//! All gaps are bumper-to-bumper in metres. Speeds returned are caps; the
//! engine takes the minimum of the controller output and every cap.

use super::config::VehicleParams;

/// Keeps at least `time_gap` seconds behind a moving leader.
pub fn time_gap_cap(gap: f64, time_gap: f64) -> f64 {
    (gap / time_gap).max(0.0)
}

/// Largest speed that still stops `min_gap` short of a stationary obstacle
/// `gap` metres ahead, both under `brake_decel` and within one step.
pub fn stopping_cap(gap: f64, p: &VehicleParams, dt: f64) -> f64 {
    let room = gap - p.min_gap;
    if room <= 0.0 {
        return 0.0;
    }
    (2.0 * p.brake_decel * room).sqrt().min(room / dt)
}

/// Cap imposed by a leader. While `reacting` the follower has not yet
/// responded to the leader's braking, so only the no-contact cap holds.
pub fn follow_cap(gap: f64, lead_moving: bool, reacting: bool, p: &VehicleParams, dt: f64) -> f64 {
    let hard = stopping_cap(gap, p, dt);
    if reacting || !lead_moving {
        hard
    } else {
        hard.min(time_gap_cap(gap, p.time_gap))
    }
}

/// One controller step from `speed` towards `command` at the comfort rate,
/// landing exactly on `command` once it is within one step.
pub fn controller(speed: f64, command: f64, p: &VehicleParams, dt: f64) -> f64 {
    let step = p.comfort_accel * dt;
    let diff = command - speed;
    if diff.abs() <= step {
        command
    } else {
        speed + step.copysign(diff)
    }
}

/// Distance from the stop line at which an approaching vehicle must know
/// whether it may cross.
pub fn decision_distance(speed: f64, p: &VehicleParams, dt: f64) -> f64 {
    speed * speed / (2.0 * p.comfort_accel) + speed * dt + p.min_gap + 2.0
}

/// Time to cover `distance` from `speed`, accelerating at the comfort rate
/// up to `v_max`.
pub fn time_to_reach(distance: f64, speed: f64, v_max: f64, p: &VehicleParams) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    let a = p.comfort_accel;
    let v = speed.min(v_max);
    let ramp = (v_max * v_max - v * v) / (2.0 * a);
    if distance <= ramp {
        (-v + (v * v + 2.0 * a * distance).sqrt()) / a
    } else {
        (v_max - v) / a + (distance - ramp) / v_max
    }
}
