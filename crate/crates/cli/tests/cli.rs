use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csof_cli::output::{
    ACTIVATION_SWEEP_HEADER, METRICS_HEADER, TRAJECTORY_HEADER, VOLUME_SWEEP_HEADER,
};

fn csof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csof"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// A ten-minute corridor keeps each run well under a second.
fn short_config(dir: &Path) -> String {
    let path = dir.join("short.toml");
    fs::write(&path, "[sim]\nduration = 600.0\nvolume = 900.0\n").unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().collect::<Result<Vec<_>, _>>().unwrap();
    (header, rows)
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn volume_sweep_has_two_rows_per_intersection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = csof(&[
        "--config",
        &cfg,
        "--mode",
        "volume_sweep",
        "--volumes",
        "600",
        "--replications",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    ok(&out);
    let (header, rows) = read_csv(&out_dir.join("volume_sweep.csv"));
    assert_eq!(header, VOLUME_SWEEP_HEADER);
    assert_eq!(rows.len(), 8);
    for (pair, label) in rows.chunks(2).zip(["SI1", "SI2", "SI3", "total"]) {
        assert_eq!((&pair[0][1], &pair[1][1]), ("CSOF", "NCSO"));
        assert!(pair
            .iter()
            .all(|r| &r[0] == "600" && &r[2] == label && &r[3] == "1"));
        // Reduction is shared by both rows and matches the idle columns.
        assert_eq!(pair[0][7], pair[1][7]);
        let (c, n): (f64, f64) = (pair[0][4].parse().unwrap(), pair[1][4].parse().unwrap());
        let cut: f64 = pair[0][7].parse().unwrap();
        let expect = if n == 0.0 { 0.0 } else { (n - c) / n * 100.0 };
        assert!((cut - expect).abs() < 1e-3, "{cut} vs {expect}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    for title in ["idling", "stops", "energy"] {
        assert!(stdout.contains(title), "{stdout}");
    }
}

#[test]
fn activation_sweep_has_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out_dir = dir.path().join("out");
    ok(&csof(&[
        "--config",
        &cfg,
        "--mode",
        "activation_sweep",
        "--replications",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let (header, rows) = read_csv(&out_dir.join("activation_sweep.csv"));
    assert_eq!(header, ACTIVATION_SWEEP_HEADER);
    let ranges: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(ranges, ["300", "400", "500", "600", "700", "800"]);
}

#[test]
fn single_mode_round_trips_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        ok(&csof(&[
            "--config",
            &cfg,
            "--seed",
            "3",
            "--replications",
            "2",
            "--trace",
            "--out",
            out_dir.to_str().unwrap(),
        ]));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    let bytes = |d: &Path| fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));

    let (header, rows) = read_csv(&a.join("metrics.csv"));
    assert_eq!(header, METRICS_HEADER);
    // 2 seeds x 2 techniques x (3 intersections + total).
    assert_eq!(rows.len(), 16);
    for r in &rows {
        assert!(["3", "4"].contains(&&r[0]));
        for col in 3..8 {
            let v: f64 = r[col].parse().unwrap();
            assert!(v.is_finite());
        }
        assert!(r[4].parse::<f64>().unwrap() >= 0.0, "negative idling");
    }
    let traces: Vec<_> = fs::read_dir(a.join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 4);
    let csof_trace = fs::read_to_string(a.join("traces/trace_csof_v900_a500_s3.log")).unwrap();
    assert!(
        csof_trace.lines().any(|l| l.contains(",grant,")),
        "no grants traced"
    );
}

#[test]
fn trajectories_cover_both_techniques() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out_dir = dir.path().join("out");
    ok(&csof(&[
        "--config",
        &cfg,
        "--mode",
        "trajectories",
        "--vehicles",
        "3",
        "--seed",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let (header, rows) = read_csv(&out_dir.join("trajectories.csv"));
    assert_eq!(header, TRAJECTORY_HEADER);
    for technique in ["CSOF", "NCSO"] {
        let mut vins: Vec<&str> = rows
            .iter()
            .filter(|r| &r[0] == technique)
            .map(|r| r.get(1).unwrap())
            .collect();
        vins.sort_unstable();
        vins.dedup();
        assert_eq!(vins.len(), 3, "{technique}");
    }
    for r in &rows {
        let d: f64 = r[4].parse().unwrap();
        assert!(
            (0.0..=500.0 + 1e-6).contains(&d),
            "distance {d} outside V2I range"
        );
    }
}

#[test]
fn credit_market_core_has_four_points() {
    let dir = tempfile::tempdir().unwrap();
    let cf = configs().join("credit_market.cf");
    let out = csof(&[
        "--mode",
        "bargain",
        "--cf",
        cf.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("marginal contributions: (5, 0, 3)"),
        "{stdout}"
    );
    let (header, rows) = read_csv(&dir.path().join("core.csv"));
    assert_eq!(header, ["player_1", "player_2", "player_3"]);
    let points: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(
        points,
        vec![
            vec![2.0, 0.0, 3.0],
            vec![3.0, 0.0, 2.0],
            vec![4.0, 0.0, 1.0],
            vec![5.0, 0.0, 0.0]
        ]
    );
}

#[test]
fn majority_game_reports_empty_core() {
    let dir = tempfile::tempdir().unwrap();
    let cf = dir.path().join("majority.cf");
    fs::write(&cf, "1,2:1\n1,3:1\n2,3:1\n1,2,3:1\n").unwrap();
    let out = csof(&[
        "--mode",
        "bargain",
        "--cf",
        cf.to_str().unwrap(),
        "--granularity",
        "0.25",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("core empty"));
    let (_, rows) = read_csv(&dir.path().join("core.csv"));
    assert!(rows.is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cf = configs().join("credit_market.cf");
    let cf = cf.to_str().unwrap();
    let code = |args: &[&str]| csof(args).status.code().unwrap();

    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["--mode", "nonsense"]), 1);
    assert_eq!(
        code(&["--mode", "bargain", "--cf", cf, "--granularity", "0"]),
        1
    );
    assert_eq!(code(&["--volumes", "1..x:2"]), 1);

    let bad = dir.path().join("bad.cf");
    fs::write(&bad, "1,2:3\n1;2:4\n").unwrap();
    let out = csof(&["--mode", "bargain", "--cf", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cf:2:"));

    let bad_sim = dir.path().join("bad.toml");
    fs::write(&bad_sim, "[sim]\nactivation_distance = 2000.0\n").unwrap();
    assert_eq!(code(&["--config", bad_sim.to_str().unwrap()]), 1);

    assert_eq!(code(&["--config", "/definitely/missing.toml"]), 2);
    assert_eq!(
        code(&["--mode", "bargain", "--cf", "/definitely/missing.cf"]),
        2
    );
    // Output directory below a regular file cannot be created.
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out_dir = blocker.join("out");
    assert_eq!(
        code(&[
            "--mode",
            "bargain",
            "--cf",
            cf,
            "--out",
            out_dir.to_str().unwrap()
        ]),
        2
    );
}

#[test]
fn shipped_corridor_config_parses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("corridor.toml");
    let out = csof(&[
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "bargain",
        "--cf",
        configs().join("credit_market.cf").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    ok(&out);
    let spec = csof_cli::ExperimentSpec::resolve(&csof_cli::Cli {
        config: Some(cfg),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(spec.mode, csof_cli::Mode::VolumeSweep);
    assert_eq!(spec.seeds.len(), 10);
    assert_eq!(spec.sim.network.lights.len(), 3);
    assert_eq!(spec.sim.duration, 10_800.0);
}
