use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    /// Both techniques at the configured volume, one metrics row per seed.
    Single,
    /// Every volume x technique x seed, averaged per volume.
    VolumeSweep,
    /// CSOF at every activation distance, averaged over seeds.
    ActivationSweep,
    /// Speed traces of the first vehicles on one approach.
    Trajectories,
    /// Marginal contributions and core of a characteristic function file.
    Bargain,
}

/// Experiment harness for the cooperative speed optimization simulator.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "csof", version)]
pub struct Cli {
    /// TOML file with `[sim]` and `[experiment]` tables.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub mode: Option<Mode>,

    /// First seed; replications use consecutive seeds from here.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    #[arg(long, value_name = "K")]
    pub replications: Option<u32>,

    /// Comma list (`300,900`) or inclusive range (`300..1800:300`), veh/h.
    #[arg(long, value_name = "LIST")]
    pub volumes: Option<String>,

    /// Comma list or inclusive range of V2I ranges, metres.
    #[arg(long, value_name = "LIST")]
    pub activations: Option<String>,

    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Also write token and conflict events of every single run.
    #[arg(long)]
    pub trace: bool,

    /// Characteristic function file for bargaining.
    #[arg(long, value_name = "PATH")]
    pub cf: Option<PathBuf>,

    /// Lattice step of core allocations.
    #[arg(long, value_name = "G")]
    pub granularity: Option<f64>,

    /// Vehicles traced in trajectories mode.
    #[arg(long, value_name = "N")]
    pub vehicles: Option<usize>,
}

/// Parses `a,b,c` or `lo..hi:step` (inclusive).
pub fn parse_list(name: &str, text: &str) -> Result<Vec<f64>, String> {
    let bad = |what: &str| format!("--{name} `{text}`: {what}");
    let number = |s: &str| -> Result<f64, String> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| bad(&format!("`{}` is not a number", s.trim())))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad("values must be finite"))
        }
    };
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = rest
            .split_once(':')
            .ok_or_else(|| bad("a range needs a step, as in 300..1800:300"))?;
        let (lo, hi, step) = (number(lo)?, number(hi)?, number(step)?);
        if step <= 0.0 || hi < lo {
            return Err(bad("need lo <= hi and a positive step"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| lo + step * k as f64).collect());
    }
    let values = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(number)
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(bad("list is empty"));
    }
    Ok(values)
}
