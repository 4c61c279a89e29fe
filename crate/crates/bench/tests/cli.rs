use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fdi_bench::ScenarioConfig;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdi-bench")).args(args).output().expect("binary runs")
}

/// Writes `cfg` (with absolute input paths) into `dir`.
fn write_config(cfg: &ScenarioConfig, dir: &Path) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, cfg.to_toml()).unwrap();
    p
}

fn desk() -> ScenarioConfig {
    ScenarioConfig::load(config_path("desk-14.toml")).unwrap()
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["desk-14.toml", "paper-118.toml"] {
        let cfg = ScenarioConfig::load(config_path(name)).unwrap();
        assert_eq!(ScenarioConfig::parse(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn the_118_bus_config_carries_the_reference_settings() {
    let cfg = ScenarioConfig::load(config_path("paper-118.toml")).unwrap();
    assert_eq!(cfg.timeline.sample_rate_hz, 30.0);
    assert_eq!(cfg.timeline.dispatch_interval_samples, 9000);
    assert_eq!(cfg.noise.magnitude_std_fraction, 1e-4);
    assert_eq!(cfg.attacker.tau, 0.10);
    assert_eq!(cfg.attacker.target_branch, 54);
    assert_eq!(cfg.loads.segment_length, 18000);
    assert_eq!(cfg.loads.rank, 10);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(bench(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    let text = fs::read_to_string(config_path("desk-14.toml")).unwrap() + "\nsurprise = 1\n";
    let p = dir.path().join("extra.toml");
    fs::write(&p, text).unwrap();
    let out = bench(&["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));

    let mut cfg = desk();
    cfg.attacker.tau = 1.5;
    let p = write_config(&cfg, dir.path());
    assert_eq!(bench(&["attack", "--config", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn solver_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk();
    // Scale every load far beyond generation capacity.
    let text = fs::read_to_string(&cfg.case_path).unwrap();
    let mut out = String::new();
    let mut in_bus = false;
    for line in text.lines() {
        if line.starts_with('[') {
            in_bus = line == "[bus]";
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if in_bus && f.len() >= 4 && !line.starts_with('#') {
            let load: f64 = f[2].parse().unwrap();
            out += &format!("{} {} {} {}\n", f[0], f[1], load * 20.0, f[3]);
        } else {
            out += line;
            out.push('\n');
        }
    }
    let case = dir.path().join("heavy.txt");
    fs::write(&case, out).unwrap();
    cfg.case_path = case;
    let p = write_config(&cfg, dir.path());
    let o = dir.path().join("out");
    let res = bench(&["simulate", "--config", p.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn detector_failures_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk();
    // A flat, noiseless scenario leaves only rounding error to calibrate against.
    for p in [&mut cfg.loads.high, &mut cfg.loads.low] {
        p.daily_amplitude = 0.0;
        p.half_daily_amplitude = 0.0;
        p.walk_std = 0.0;
        p.noise_std = 0.0;
    }
    cfg.noise.magnitude_std_fraction = 0.0;
    cfg.noise.angle_std_fraction = 0.0;
    cfg.detector.filter = fdi_bench::config::FilterChoice::FspFitted;
    let p = write_config(&cfg, dir.path());
    let o = dir.path().join("out");
    let res = bench(&["detect", "--config", p.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("desk-14.toml");
    let run = |sub: &str, seed: &str| {
        let o = dir.path().join(sub);
        let res = bench(&["run", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", o.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        o
    };
    let (a, b, c) = (run("a", "7"), run("b", "7"), run("c", "8"));
    let (fa, fb, fc) = (csv_files(&a), csv_files(&b), csv_files(&c));
    assert!(fa.len() >= 5);
    assert_eq!(fa, fb);
    let stream = |f: &[(String, Vec<u8>)]| f.iter().find(|(n, _)| n == "stream.csv").unwrap().1.clone();
    assert_ne!(stream(&fa), stream(&fc));

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    for f in manifest["outputs"].as_array().unwrap() {
        let name = f["file"].as_str().unwrap();
        let bytes = fs::read(a.join(name)).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }

    // Plot bundles from the finished run.
    let res = bench(&["plot-data", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rmse = fs::read_to_string(a.join("plots/rmse_vs_rank.csv")).unwrap();
    let values: Vec<f64> = rmse.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
    assert!(a.join("plots/residues_sudden.csv").is_file());
    assert!(a.join("plots/measurement_traces.csv").is_file());
    assert!(a.join("plots/load_profiles.csv").is_file());
}

#[test]
fn the_sudden_desk_attack_is_flagged_at_injection() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("run");
    let cfg = config_path("desk-14.toml");
    let res = bench(&["run", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert!(res.status.success());
    let det: serde_json::Value = serde_json::from_slice(&fs::read(o.join("detection.json")).unwrap()).unwrap();
    assert_eq!(det["injection_sample"], 900);
    assert_eq!(det["report"]["first_alarm_sample"], 900);
    let attack: serde_json::Value = serde_json::from_slice(&fs::read(o.join("attack_summary.json")).unwrap()).unwrap();
    assert!(attack["target_flow_fraction"].as_f64().unwrap() > 1.0);
    assert!(attack["zero_injection_mismatch"].as_f64().unwrap() < 1e-8);
}
