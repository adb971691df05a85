//! CSV files and console tables. Column sets are fixed per file; floats
//! are written with six decimals so reruns compare byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use csof_core::bargain::Allocation;
use csof_core::Technique;

use crate::error::{CliError, Result};
use crate::experiment::{reduction, ActivationRow, Bargain, Run, Trajectories, VolumeRow};

pub const VOLUME_SWEEP_HEADER: [&str; 8] = [
    "volume_veh_h",
    "technique",
    "intersection",
    "seeds",
    "mean_idle_s",
    "mean_stops",
    "mean_energy_j",
    "idle_reduction_pct",
];

pub const METRICS_HEADER: [&str; 8] = [
    "seed",
    "technique",
    "intersection",
    "vehicles",
    "mean_idle_s",
    "mean_stops",
    "mean_energy_j",
    "completed",
];

pub const ACTIVATION_SWEEP_HEADER: [&str; 4] =
    ["activation_m", "seeds", "mean_idle_s", "mean_stops"];

pub const TRAJECTORY_HEADER: [&str; 5] = ["technique", "vin", "t_s", "speed_mps", "distance_m"];

pub fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Renders in memory first so that a failed write names the file.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv encoding: {e}")))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn volume_sweep_rows(rows: &[VolumeRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.volume.to_string(),
                r.technique.label().to_string(),
                r.intersection.clone(),
                r.metrics.seeds.to_string(),
                f6(r.metrics.idle),
                f6(r.metrics.stops),
                f6(r.metrics.energy),
                f6(r.idle_reduction),
            ]
        })
        .collect()
}

/// One row per run and intersection, plus a `total` row.
pub fn metrics_rows(runs: &[Run]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for run in runs {
        let r = &run.report;
        let labelled = r
            .intersections
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("SI{}", i + 1), s))
            .chain([("total".to_string(), &r.total)]);
        for (label, s) in labelled {
            out.push(vec![
                r.seed.to_string(),
                r.technique.label().to_string(),
                label,
                s.legs.to_string(),
                f6(s.mean_idle()),
                f6(s.mean_stops()),
                f6(s.mean_energy()),
                r.completed.to_string(),
            ]);
        }
    }
    out
}

pub fn activation_rows(rows: &[ActivationRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.activation.to_string(),
                r.metrics.seeds.to_string(),
                f6(r.metrics.idle),
                f6(r.metrics.stops),
            ]
        })
        .collect()
}

pub fn trajectory_rows(sets: &[Trajectories]) -> Vec<Vec<String>> {
    sets.iter()
        .flat_map(|set| {
            set.samples.iter().map(move |s| {
                vec![
                    set.technique.label().to_string(),
                    s.vin.to_string(),
                    f6(s.t),
                    f6(s.speed),
                    f6(s.distance),
                ]
            })
        })
        .collect()
}

pub fn core_header(players: usize) -> Vec<String> {
    (1..=players).map(|i| format!("player_{i}")).collect()
}

pub fn core_rows(core: &[Allocation]) -> Vec<Vec<String>> {
    core.iter()
        .map(|x| x.shares.iter().map(|&v| f6(v)).collect())
        .collect()
}

/// Writes each run's token and conflict events to its own file.
pub fn write_traces(dir: &Path, runs: &[Run]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for run in runs {
        let c = &run.config;
        let name = format!(
            "trace_{}_v{}_a{}_s{}.log",
            run.report.technique.label().to_lowercase(),
            c.volume,
            c.activation_distance,
            c.seed
        );
        let path = dir.join(name);
        let mut text = run.trace.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Idling, stops and energy tables with CSOF, NCSO and the reduction.
pub fn volume_tables(rows: &[VolumeRow]) -> String {
    type Column = (&'static str, fn(&VolumeRow) -> f64);
    let metrics: [Column; 3] = [
        ("Average idling time (s/veh)", |r| r.metrics.idle),
        ("Average number of stops (per veh)", |r| r.metrics.stops),
        ("Average energy (J/veh)", |r| r.metrics.energy),
    ];
    let mut s = String::new();
    for (title, get) in metrics {
        let _ = writeln!(s, "{title}");
        let _ = writeln!(
            s,
            "{:>8}  {:<12} {:>14} {:>14} {:>12}",
            "volume", "intersection", "CSOF", "NCSO", "reduction %"
        );
        for pair in rows.chunks(2) {
            let (c, n) = match pair {
                [a, b] if a.technique == Technique::Csof => (a, b),
                [a, b] => (b, a),
                _ => continue,
            };
            let _ = writeln!(
                s,
                "{:>8}  {:<12} {:>14.3} {:>14.3} {:>12.1}",
                c.volume,
                c.intersection,
                get(c),
                get(n),
                reduction(get(c), get(n))
            );
        }
        s.push('\n');
    }
    s
}

pub fn activation_table(rows: &[ActivationRow]) -> String {
    let mut s = String::from("CSOF by V2I range\n");
    let _ = writeln!(
        s,
        "{:>12} {:>14} {:>12}",
        "activation_m", "idle s/veh", "stops/veh"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>12} {:>14.3} {:>12.3}",
            r.activation, r.metrics.idle, r.metrics.stops
        );
    }
    s
}

pub fn bargain_text(b: &Bargain, granularity: f64) -> String {
    let mut s = String::new();
    let mc: Vec<String> = b.marginal.iter().map(|v| format!("{v}")).collect();
    let _ = writeln!(s, "players: {}", b.cf.players());
    let _ = writeln!(s, "grand coalition value: {}", b.cf.value(b.cf.grand()));
    let _ = writeln!(s, "marginal contributions: ({})", mc.join(", "));
    if b.core.is_empty() {
        let _ = writeln!(s, "core empty at granularity {granularity}");
    } else {
        let _ = writeln!(
            s,
            "core allocations at granularity {granularity}: {}",
            b.core.len()
        );
        for x in &b.core {
            let parts: Vec<String> = x.shares.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "  ({})", parts.join(", "));
        }
    }
    s
}
