//! Experiment runners. Cells run in parallel and are collected in input
//! order, so results do not depend on thread scheduling.

use std::fs;

use csof_core::bargain::{enumerate_core, Allocation};
use csof_core::sim::{LegSummary, TrajectorySample};
use csof_core::{CharacteristicFunction, MetricsReport, SimConfig, Technique, World};
use rayon::prelude::*;

use crate::cf;
use crate::error::{CliError, Result};
use crate::spec::ExperimentSpec;

pub struct Run {
    pub config: SimConfig,
    pub report: MetricsReport,
    /// Empty unless tracing was requested.
    pub trace: Vec<String>,
}

fn run_one(config: SimConfig, technique: Technique, trace: bool) -> Result<Run> {
    let mut world = World::new(config.clone(), technique)?;
    if trace {
        world.enable_trace();
    }
    world.run_to_end();
    Ok(Run {
        config,
        report: world.report(),
        trace: world.trace_lines().to_vec(),
    })
}

pub fn run_cells(cells: Vec<(SimConfig, Technique)>, trace: bool) -> Result<Vec<Run>> {
    cells
        .into_par_iter()
        .map(|(config, technique)| run_one(config, technique, trace))
        .collect()
}

/// Means over seeds of per-seed means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub seeds: usize,
    pub idle: f64,
    pub stops: f64,
    pub energy: f64,
}

impl Aggregate {
    pub fn of<'a>(summaries: impl IntoIterator<Item = &'a LegSummary>) -> Aggregate {
        let mut a = Aggregate {
            seeds: 0,
            idle: 0.0,
            stops: 0.0,
            energy: 0.0,
        };
        for s in summaries {
            a.seeds += 1;
            a.idle += s.mean_idle();
            a.stops += s.mean_stops();
            a.energy += s.mean_energy();
        }
        if a.seeds > 0 {
            let n = a.seeds as f64;
            a.idle /= n;
            a.stops /= n;
            a.energy /= n;
        }
        a
    }
}

/// Percentage by which CSOF undercuts NCSO; 0 when NCSO is 0.
pub fn reduction(csof: f64, ncso: f64) -> f64 {
    if ncso == 0.0 {
        0.0
    } else {
        (ncso - csof) / ncso * 100.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeRow {
    pub volume: f64,
    pub technique: Technique,
    /// `SI1`, `SI2`, ... or `total`.
    pub intersection: String,
    pub metrics: Aggregate,
    /// Shared by the CSOF and NCSO rows of one volume and intersection.
    pub idle_reduction: f64,
}

pub fn intersection_label(light: Option<usize>) -> String {
    match light {
        Some(i) => format!("SI{}", i + 1),
        None => "total".to_string(),
    }
}

pub struct VolumeSweep {
    pub rows: Vec<VolumeRow>,
    /// Volume-major, then technique, then seed.
    pub runs: Vec<Run>,
}

pub fn volume_sweep(spec: &ExperimentSpec, volumes: &[f64]) -> Result<VolumeSweep> {
    let activation = spec.sim.activation_distance;
    let mut cells = Vec::new();
    for &volume in volumes {
        for technique in Technique::ALL {
            for &seed in &spec.seeds {
                cells.push((spec.cell(volume, activation, seed), technique));
            }
        }
    }
    for (config, _) in &cells {
        config.validate()?;
    }
    let runs = run_cells(cells, spec.trace)?;

    let lights = spec.sim.network.lights.len();
    let per_volume = Technique::ALL.len() * spec.seeds.len();
    let mut rows = Vec::new();
    for (vi, &volume) in volumes.iter().enumerate() {
        let block = &runs[vi * per_volume..(vi + 1) * per_volume];
        let pick = |technique: Technique, light: Option<usize>| {
            Aggregate::of(
                block
                    .iter()
                    .filter(|r| r.report.technique == technique)
                    .map(|r| match light {
                        Some(i) => &r.report.intersections[i],
                        None => &r.report.total,
                    }),
            )
        };
        for light in (0..lights).map(Some).chain([None]) {
            let csof = pick(Technique::Csof, light);
            let ncso = pick(Technique::Ncso, light);
            let cut = reduction(csof.idle, ncso.idle);
            for (technique, metrics) in [(Technique::Csof, csof), (Technique::Ncso, ncso)] {
                rows.push(VolumeRow {
                    volume,
                    technique,
                    intersection: intersection_label(light),
                    metrics,
                    idle_reduction: cut,
                });
            }
        }
    }
    Ok(VolumeSweep { rows, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRow {
    pub activation: f64,
    pub metrics: Aggregate,
}

/// CSOF only, at the configured volume.
pub fn activation_sweep(spec: &ExperimentSpec) -> Result<(Vec<ActivationRow>, Vec<Run>)> {
    let mut cells = Vec::new();
    for &activation in &spec.activations {
        for &seed in &spec.seeds {
            cells.push((
                spec.cell(spec.sim.volume, activation, seed),
                Technique::Csof,
            ));
        }
    }
    for (config, _) in &cells {
        config.validate()?;
    }
    let runs = run_cells(cells, spec.trace)?;
    let rows = spec
        .activations
        .iter()
        .zip(runs.chunks(spec.seeds.len()))
        .map(|(&activation, block)| ActivationRow {
            activation,
            metrics: Aggregate::of(block.iter().map(|r| &r.report.total)),
        })
        .collect();
    Ok((rows, runs))
}

pub struct Trajectories {
    pub technique: Technique,
    pub samples: Vec<TrajectorySample>,
    pub tracked: usize,
}

/// Follows the first vehicles activated on the chosen approach under both
/// techniques, stopping once all of them have crossed its stop line.
pub fn trajectories(spec: &ExperimentSpec) -> Result<Vec<Trajectories>> {
    let t = &spec.trajectory;
    let segment = spec
        .sim
        .network
        .segments
        .iter()
        .position(|s| s.light == t.light && s.approach == t.approach)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "no segment ends at light {} on the {:?} approach",
                t.light, t.approach
            ))
        })?;
    let config = SimConfig {
        seed: spec.seeds[0],
        ..spec.sim.clone()
    };
    Technique::ALL
        .par_iter()
        .map(|&technique| {
            let mut world = World::new(config.clone(), technique)?;
            world.track(segment, t.vehicles);
            let steps = config.steps();
            while world.steps_taken() < steps {
                world.step();
                let done = world.tracked().len() == t.vehicles
                    && world
                        .tracked()
                        .iter()
                        .all(|&vin| world.vehicle(vin).is_none_or(|v| v.segment != segment));
                if done {
                    break;
                }
            }
            Ok(Trajectories {
                technique,
                samples: world.trajectories().to_vec(),
                tracked: world.tracked().len(),
            })
        })
        .collect()
}

/// Population variance of the sampled speeds of each vehicle, averaged.
pub fn mean_speed_variance(samples: &[TrajectorySample]) -> f64 {
    let mut vins: Vec<_> = samples.iter().map(|s| s.vin).collect();
    vins.sort_unstable();
    vins.dedup();
    if vins.is_empty() {
        return 0.0;
    }
    let total: f64 = vins
        .iter()
        .map(|&vin| {
            let speeds: Vec<f64> = samples
                .iter()
                .filter(|s| s.vin == vin)
                .map(|s| s.speed)
                .collect();
            let n = speeds.len() as f64;
            let mean = speeds.iter().sum::<f64>() / n;
            speeds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .sum();
    total / vins.len() as f64
}

pub struct Bargain {
    pub cf: CharacteristicFunction,
    pub marginal: Vec<f64>,
    pub core: Vec<Allocation>,
}

pub fn bargain(spec: &ExperimentSpec) -> Result<Bargain> {
    let path = spec
        .cf
        .as_ref()
        .ok_or_else(|| CliError::Usage("bargain mode needs --cf PATH".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let f = cf::parse(&text, path)?;
    let marginal = (0..f.players())
        .map(|i| f.marginal_contribution(i))
        .collect::<csof_core::Result<Vec<_>>>()?;
    let core = enumerate_core(&f, spec.granularity)?;
    Ok(Bargain {
        cf: f,
        marginal,
        core,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_guards_zero() {
        assert_eq!(reduction(1.0, 0.0), 0.0);
        assert_eq!(reduction(1.0, 4.0), 75.0);
        assert_eq!(reduction(5.0, 4.0), -25.0);
    }

    #[test]
    fn aggregate_is_mean_of_means() {
        let mut a = LegSummary::default();
        a.record(2.0, 1, 10.0);
        let mut b = LegSummary::default();
        for _ in 0..3 {
            b.record(6.0, 0, 0.0);
        }
        let m = Aggregate::of([&a, &b]);
        assert_eq!(m.seeds, 2);
        assert_eq!(m.idle, 4.0);
        assert_eq!(m.stops, 0.5);
        assert_eq!(m.energy, 5.0);
    }

    #[test]
    fn speed_variance_per_vehicle() {
        let s = |vin: u64, speed| TrajectorySample {
            t: 0.0,
            vin: csof_core::Vin(vin),
            speed,
            distance: 0.0,
        };
        let samples = [s(1, 1.0), s(1, 3.0), s(2, 5.0), s(2, 5.0)];
        assert_eq!(mean_speed_variance(&samples), 0.5);
        assert_eq!(mean_speed_variance(&[]), 0.0);
    }
}
