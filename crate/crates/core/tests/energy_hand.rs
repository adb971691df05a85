use csof_core::energy::{
    accel_energy, device_energy, device_step, loss, potential, Device, StepEnergy,
};
use csof_core::{EnergyLedger, EnergyParams};

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Five parameter points spanning small cars to vans.
fn points() -> Vec<EnergyParams> {
    let table = [
        (0.9, 1500.0, 9.81, 0.01, 1.2, 2.3, 0.28, 80_000.0),
        (0.85, 1200.0, 9.81, 0.012, 1.225, 2.0, 0.30, 60_000.0),
        (1.0, 2000.0, 9.80665, 0.015, 1.18, 2.6, 0.33, 150_000.0),
        (0.75, 900.0, 9.81, 0.008, 1.3, 1.8, 0.25, 40_000.0),
        (0.95, 3500.0, 9.81, 0.02, 1.2, 3.4, 0.38, 120_000.0),
    ];
    table
        .iter()
        .enumerate()
        .map(
            |(
                i,
                &(
                    efficiency,
                    mass,
                    gravity,
                    rolling_friction,
                    air_density,
                    frontal_area,
                    drag_coefficient,
                    motor_power,
                ),
            )| {
                EnergyParams {
                    efficiency,
                    mass,
                    gravity,
                    rolling_friction,
                    air_density,
                    frontal_area,
                    drag_coefficient,
                    motor_power,
                    devices: (0..=i)
                        .map(|j| Device {
                            power: 150.0 * (j as f64 + 1.0),
                            duration: 30.0 + 45.0 * j as f64,
                        })
                        .collect(),
                }
            },
        )
        .collect()
}

#[test]
fn resistive_loss_matches_hand_evaluation() {
    let speeds = [0.0, 3.0, 8.5, 13.9, 16.7];
    for (p, v) in points().iter().zip(speeds) {
        let dt = 0.1;
        let rolling = p.rolling_friction * p.mass * p.gravity * v;
        let drag = 0.5 * p.air_density * p.frontal_area * p.drag_coefficient * v * v * v;
        let hand = (rolling + drag) / p.efficiency * dt;
        assert!(rel(loss(p, v, dt), hand) <= 1e-9, "v={v}");
    }
    // Default car at 10 m/s for one second: (1471.5 + 386.4) / 0.9.
    let p = EnergyParams::default();
    assert!(rel(loss(&p, 10.0, 1.0), (1471.5 + 386.4) / 0.9) <= 1e-9);
}

#[test]
fn device_energy_matches_hand_evaluation() {
    for p in points() {
        let hand: f64 = p.devices.iter().map(|d| d.power * d.duration).sum();
        assert!(rel(device_energy(&p), hand) <= 1e-9);
        // Stepping through the trip draws the same total.
        let steps: f64 = (0..3000)
            .map(|i| device_step(&p, i as f64 * 0.1, 0.1))
            .sum();
        assert!(rel(steps, hand) <= 1e-9, "{steps} vs {hand}");
    }
    let one = EnergyParams {
        devices: vec![Device {
            power: 100.0,
            duration: 60.0,
        }],
        ..EnergyParams::default()
    };
    assert_eq!(device_energy(&one), 6000.0);
    assert_eq!(device_energy(&EnergyParams::default()), 0.0);
}

#[test]
fn grade_and_speed_change_are_antisymmetric() {
    for p in points() {
        for u in [0.01, 0.5, 2.0, 17.3] {
            let up = potential(&p, u);
            assert!(rel(up, p.mass * p.gravity * u / p.efficiency) <= 1e-9);
            assert!(rel(-potential(&p, -u), up) <= 1e-9);
        }
        for (v, dv, d) in [(5.0, 2.0, 10.0), (10.0, 0.3, 1.4), (1.0, 7.5, 40.0)] {
            let up = accel_energy(&p, v, v + dv, d);
            let down = accel_energy(&p, v + dv, v, d);
            assert!(up > 0.0 && down < 0.0);
            assert!(rel(-down, up) <= 1e-9);
        }
    }
    let p = EnergyParams::default();
    assert!((potential(&p, 2.0) - 32_700.0).abs() <= 1.0);
    assert!((accel_energy(&p, 5.0, 7.0, 10.0) - 444_444.4).abs() <= 1.0);
    assert_eq!(accel_energy(&p, 5.0, 5.0, 10.0), 0.0);
}

#[test]
fn ledger_total_is_component_sum() {
    let p = &points()[2];
    let mut ledger = EnergyLedger::new();
    let speeds = [0.0, 0.25, 0.5, 0.5, 0.4, 0.2, 1.0];
    let mut sum = 0.0;
    for (i, w) in speeds.windows(2).enumerate() {
        let rise = if i % 2 == 0 { 0.1 } else { -0.05 };
        let e = StepEnergy::compute(p, w[0], w[1], w[1] * 0.1, rise, i as f64 * 0.1, 0.1, 0.125);
        assert!(e.loss >= 0.0 && e.downhill <= 0.0 && e.decel <= 0.0 && e.uphill >= 0.0);
        assert!(e.uphill == 0.0 || e.downhill == 0.0);
        assert!(e.accel == 0.0 || e.decel == 0.0);
        sum += e.uphill + e.downhill + e.loss + e.accel + e.decel + e.devices;
        ledger.record(&e);
    }
    assert!(rel(ledger.total, sum) <= 1e-12);
    let c = ledger.components;
    assert!(
        rel(
            c.uphill + c.downhill + c.loss + c.accel + c.decel + c.devices,
            ledger.total
        ) <= 1e-12
    );
}
