//! Experiment description: the config file merged with command-line flags.

use std::path::{Path, PathBuf};

use csof_core::{Approach, SimConfig};
use serde::Deserialize;

use crate::args::{parse_list, Cli, Mode};
use crate::error::{CliError, Result};

pub const DEFAULT_REPLICATIONS: u32 = 10;
pub const DEFAULT_OUT: &str = "results";

/// Layout of the TOML config file. `[sim]` mirrors `SimConfig`, with
/// `[sim.signal]`, `[sim.energy]`, `[sim.vehicle]`, `[sim.modes]` and
/// `[sim.network]` as nested tables.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub sim: SimConfig,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Option<Mode>,
    pub volumes: Option<Vec<f64>>,
    pub activations: Option<Vec<f64>>,
    pub replications: Option<u32>,
    /// Explicit seeds; ignored when `--seed` or `--replications` is given.
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub trace: bool,
    pub trajectory: TrajectorySpec,
    pub bargain: BargainSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub light: usize,
    pub approach: Approach,
    pub vehicles: usize,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            light: 0,
            approach: Approach::North,
            vehicles: 6,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BargainSection {
    pub input: Option<PathBuf>,
    pub granularity: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub sim: SimConfig,
    pub volumes: Vec<f64>,
    pub activations: Vec<f64>,
    /// One replication per seed.
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub trace: bool,
    pub trajectory: TrajectorySpec,
    pub cf: Option<PathBuf>,
    pub granularity: f64,
}

pub fn default_volumes() -> Vec<f64> {
    (1..=6).map(|k| 300.0 * k as f64).collect()
}

pub fn default_activations() -> Vec<f64> {
    (3..=8).map(|k| 100.0 * k as f64).collect()
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl ExperimentSpec {
    pub fn resolve(cli: &Cli) -> Result<ExperimentSpec> {
        let file = match &cli.config {
            Some(p) => load_config(p)?,
            None => ConfigFile::default(),
        };
        let ConfigFile { sim, experiment: e } = file;
        let mode = cli.mode.or(e.mode).unwrap_or(Mode::Single);

        let volumes = match &cli.volumes {
            Some(s) => parse_list("volumes", s).map_err(CliError::Usage)?,
            None => e.volumes.unwrap_or_else(default_volumes),
        };
        let activations = match &cli.activations {
            Some(s) => parse_list("activations", s).map_err(CliError::Usage)?,
            None => e.activations.unwrap_or_else(default_activations),
        };
        let seeds = match (&e.seeds, cli.seed.is_some() || cli.replications.is_some()) {
            (Some(seeds), false) => seeds.clone(),
            _ => {
                let base = cli.seed.unwrap_or(sim.seed);
                let k = cli
                    .replications
                    .or(e.replications)
                    .unwrap_or(DEFAULT_REPLICATIONS);
                (0..u64::from(k)).map(|i| base + i).collect()
            }
        };
        let mut trajectory = e.trajectory;
        if let Some(n) = cli.vehicles {
            trajectory.vehicles = n;
        }
        let spec = ExperimentSpec {
            mode,
            sim,
            volumes,
            activations,
            seeds,
            out: cli
                .out
                .clone()
                .or(e.out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            trace: cli.trace || e.trace,
            trajectory,
            cf: cli.cf.clone().or(e.bargain.input),
            granularity: cli.granularity.or(e.bargain.granularity).unwrap_or(1.0),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.seeds.is_empty() {
            return usage("replications must be at least 1");
        }
        if self.volumes.is_empty() || self.activations.is_empty() {
            return usage("sweep lists must not be empty");
        }
        if self.volumes.iter().any(|v| *v < 0.0) {
            return usage("volumes must be >= 0");
        }
        if self.activations.iter().any(|a| *a <= 0.0) {
            return usage("activation distances must be positive");
        }
        if !(self.granularity.is_finite() && self.granularity > 0.0) {
            return usage("granularity must be positive");
        }
        if self.trajectory.vehicles == 0 {
            return usage("trajectories need at least one vehicle");
        }
        if self.mode == Mode::Bargain && self.cf.is_none() {
            return usage("bargain mode needs --cf PATH");
        }
        if self.mode != Mode::Bargain {
            self.sim.validate()?;
        }
        Ok(())
    }

    /// Simulation config of one sweep cell.
    pub fn cell(&self, volume: f64, activation: f64, seed: u64) -> SimConfig {
        SimConfig {
            volume,
            activation_distance: activation,
            seed,
            ..self.sim.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn resolve(args: &[&str]) -> Result<ExperimentSpec> {
        let mut all = vec!["csof"];
        all.extend_from_slice(args);
        ExperimentSpec::resolve(&Cli::parse_from(all))
    }

    #[test]
    fn defaults() {
        let s = resolve(&[]).unwrap();
        assert_eq!(s.mode, Mode::Single);
        assert_eq!(s.volumes, default_volumes());
        assert_eq!(
            s.activations,
            vec![300.0, 400.0, 500.0, 600.0, 700.0, 800.0]
        );
        assert_eq!(s.seeds, (1..=10).collect::<Vec<u64>>());
        assert_eq!(s.granularity, 1.0);
    }

    #[test]
    fn flags_pick_seeds() {
        let s = resolve(&["--seed", "5", "--replications", "3"]).unwrap();
        assert_eq!(s.seeds, vec![5, 6, 7]);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        for args in [
            &["--replications", "0"][..],
            &["--granularity", "0"],
            &["--volumes", "a"],
            &["--mode", "bargain"],
            &["--vehicles", "0"],
        ] {
            assert!(matches!(resolve(args), Err(CliError::Usage(_))), "{args:?}");
        }
    }

    #[test]
    fn config_file_sets_sim_and_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "[sim]\nduration = 60.0\nvolume = 450.0\n[sim.signal]\ngreen = 30.0\n\
             [experiment]\nmode = \"volume_sweep\"\nseeds = [4, 9]\nvolumes = [100.0]\n",
        )
        .unwrap();
        let s = resolve(&["--config", path.to_str().unwrap()]).unwrap();
        assert_eq!(s.mode, Mode::VolumeSweep);
        assert_eq!(s.seeds, vec![4, 9]);
        assert_eq!(s.volumes, vec![100.0]);
        assert_eq!(s.sim.duration, 60.0);
        assert_eq!(s.sim.signal.green, 30.0);
        assert_eq!(s.sim.signal.red, 36.0);

        std::fs::write(&path, "[sim]\nduraton = 1.0\n").unwrap();
        let err = resolve(&["--config", path.to_str().unwrap()]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn missing_config_is_io() {
        let err = resolve(&["--config", "/nonexistent/c.toml"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
