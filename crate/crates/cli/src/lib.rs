//! Command-line experiments over `csof-core`: single runs, volume and
//! V2I-range sweeps, trajectory dumps and coalition bargaining.

pub mod args;
pub mod cf;
mod error;
pub mod experiment;
pub mod output;
pub mod spec;

use std::path::PathBuf;

pub use args::{Cli, Mode};
pub use error::{CliError, Result};
pub use spec::ExperimentSpec;

use experiment::mean_speed_variance;
use output::*;

/// What a command printed and which files it wrote.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub fn execute(spec: &ExperimentSpec) -> Result<Outcome> {
    let out = &spec.out;
    let mut files = Vec::new();
    let summary = match spec.mode {
        Mode::Single => {
            let sweep = experiment::volume_sweep(spec, &[spec.sim.volume])?;
            let path = out.join("metrics.csv");
            write_csv(&path, &METRICS_HEADER, &metrics_rows(&sweep.runs))?;
            files.push(path);
            if spec.trace {
                files.extend(write_traces(&out.join("traces"), &sweep.runs)?);
            }
            volume_tables(&sweep.rows)
        }
        Mode::VolumeSweep => {
            let sweep = experiment::volume_sweep(spec, &spec.volumes)?;
            let path = out.join("volume_sweep.csv");
            write_csv(&path, &VOLUME_SWEEP_HEADER, &volume_sweep_rows(&sweep.rows))?;
            files.push(path);
            if spec.trace {
                files.extend(write_traces(&out.join("traces"), &sweep.runs)?);
            }
            volume_tables(&sweep.rows)
        }
        Mode::ActivationSweep => {
            let (rows, runs) = experiment::activation_sweep(spec)?;
            let path = out.join("activation_sweep.csv");
            write_csv(&path, &ACTIVATION_SWEEP_HEADER, &activation_rows(&rows))?;
            files.push(path);
            if spec.trace {
                files.extend(write_traces(&out.join("traces"), &runs)?);
            }
            activation_table(&rows)
        }
        Mode::Trajectories => {
            let sets = experiment::trajectories(spec)?;
            let path = out.join("trajectories.csv");
            write_csv(&path, &TRAJECTORY_HEADER, &trajectory_rows(&sets))?;
            files.push(path);
            sets.iter()
                .map(|s| {
                    format!(
                        "{}: {} vehicles, mean per-vehicle speed variance {:.3} m2/s2\n",
                        s.technique.label(),
                        s.tracked,
                        mean_speed_variance(&s.samples)
                    )
                })
                .collect()
        }
        Mode::Bargain => {
            let b = experiment::bargain(spec)?;
            let path = out.join("core.csv");
            let header = core_header(b.cf.players());
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(&path, &header, &core_rows(&b.core))?;
            files.push(path);
            bargain_text(&b, spec.granularity)
        }
    };
    Ok(Outcome { summary, files })
}
