mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use harmonic_crystal::dynamics::{FieldState, HalfMethod, HalfSpace};
use harmonic_crystal::experiments::{
    convergence_study, dispersion_rows, gaussianity_study, sample_ensemble, ExperimentConfig, RunManifest,
};
use harmonic_crystal::fields::HalfSampler;
use harmonic_crystal::CrystalError;
use serde_json::json;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn crystal(args: &[&str], out: &Path) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crystal"));
    cmd.args(args).arg("--out").arg(out);
    if !args.contains(&"--workers") {
        cmd.args(["--workers", "2"]);
    }
    cmd.output().unwrap().status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.display().to_string()
}

fn chain(mass: f64) -> serde_json::Value {
    json!({"family": "nearest-neighbor", "d": 1, "n": 1, "gamma": [1.0], "mass": [mass]})
}

#[test]
fn validate_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d3 = configs().join("nn_d3_massless.json");
    let d1 = configs().join("nn_d1_massless.json");
    assert_eq!(crystal(&["validate", "--config", d3.to_str().unwrap()], tmp.path()), 0);
    assert_eq!(crystal(&["validate", "--config", d1.to_str().unwrap()], tmp.path()), 1);

    let broken = tmp.path().join("broken.json");
    std::fs::write(&broken, "{\"kernel\": {").unwrap();
    assert_eq!(crystal(&["validate", "--config", broken.to_str().unwrap()], tmp.path()), 2);
    let unknown = write_config(tmp.path(), "unknown.json", &json!({"kernel": chain(1.0), "box": [8], "colour": 1}));
    assert_eq!(crystal(&["validate", "--config", &unknown], tmp.path()), 2);
    assert_eq!(crystal(&["validate"], tmp.path()), 2);
    assert_eq!(crystal(&["frobnicate"], tmp.path()), 2);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("validate/conditions.json")).unwrap()).unwrap();
    let e6 = report["conditions"].as_array().unwrap().iter().find(|c| c["name"] == "E6").unwrap();
    assert_eq!(e6["status"], "violated");
}

#[test]
fn dispersion_values() {
    let rows = dispersion_rows(&common::nn(1, &[1.0], &[0.0]), 9).unwrap();
    let at_pi = rows.iter().find(|r| (r.theta[0] - std::f64::consts::PI).abs() < 1e-12).unwrap();
    assert!((at_pi.omega - 2.0).abs() < 1e-12);

    let rows = dispersion_rows(&common::nn(1, &[1.0], &[1.0]), 9).unwrap();
    let at_zero = rows.iter().find(|r| r.theta[0] == 0.0).unwrap();
    assert!((at_zero.omega - 1.0).abs() < 1e-12);
    assert_eq!(at_zero.group_velocity, 0.0);

    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &json!({"kernel": chain(1.0), "box": [8], "grid": {"dispersion": 9}}));
    assert_eq!(crystal(&["dispersion", "--config", &cfg], tmp.path()), 0);
    let csv = std::fs::read_to_string(tmp.path().join("dispersion/dispersion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
}

fn benchmark() -> ExperimentConfig {
    ExperimentConfig::from_file(&configs().join("benchmark_d1.json")).unwrap()
}

#[test]
fn converge_at_time_zero_reports_the_initial_gap() {
    let mut cfg = benchmark();
    cfg.times = vec![0.0];
    cfg.stationarity = None;
    cfg.uniform_bound = None;
    let r = convergence_study(&cfg).unwrap();
    assert!(r.relative[0] > 0.1, "{:?}", r.relative);
}

#[test]
fn converge_probes_on_the_wall_have_zero_error() {
    let mut cfg = benchmark();
    cfg.probes = vec![
        harmonic_crystal::lattice::LatticePoint(vec![0]),
        harmonic_crystal::lattice::LatticePoint(vec![0]),
    ];
    cfg.stationarity = None;
    cfg.uniform_bound = None;
    let r = convergence_study(&cfg).unwrap();
    assert!(r.errors.iter().all(|e| e.max_abs == 0.0 && e.reference_scale == 0.0));
}

#[test]
fn converge_rejects_times_beyond_the_horizon() {
    let mut cfg = benchmark();
    cfg.times = vec![10.0, 1000.0];
    assert!(matches!(convergence_study(&cfg), Err(CrystalError::GuardViolation { .. })));
}

#[test]
fn gaussian_noise_is_normal_at_every_time() {
    let mut cfg = ExperimentConfig::from_file(&configs().join("gaussianity_d1.json")).unwrap();
    cfg.noise = harmonic_crystal::fields::NoiseLaw::Gaussian;
    cfg.samples = 4000;
    let (report, _) = gaussianity_study(&cfg).unwrap();
    // The law is Gaussian at every t; the KS part also compares with the
    // limit variance, which is only reached at late times.
    for e in &report.entries {
        assert!(e.report.skewness_z.abs() <= 4.0 && e.report.kurtosis_z.abs() <= 4.0, "{e:?}");
    }
    let last = report.entries.last().unwrap();
    assert_eq!(last.report.verdict, harmonic_crystal::covariance::Verdict::Pass, "{last:?}");
    assert!(report.passed);
}

fn small_sample_config(dir: &Path) -> String {
    write_config(
        dir,
        "sample.json",
        &json!({
            "kernel": chain(0.5),
            "box": [64],
            "covariance": {"kind": "triangular", "n0": 2},
            "times": [0, 10],
            "probes": [[3], [5]],
            "samples": 1200,
            "seed": 99
        }),
    )
}

fn payloads(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest = RunManifest::read(dir).unwrap();
    manifest
        .artifacts
        .iter()
        .map(|a| (a.path.clone(), std::fs::read(dir.join(&a.path)).unwrap()))
        .collect()
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sample_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(crystal(&["sample", "--config", &cfg], &a), 0);
    assert_eq!(crystal(&["sample", "--config", &cfg, "--workers", "1"], &b), 0);
    let (pa, pb) = (payloads(&a.join("sample")), payloads(&b.join("sample")));
    assert!(!pa.is_empty());
    assert_eq!(pa, pb);
    assert!(RunManifest::read(&a.join("sample")).unwrap().verify(&a.join("sample")).unwrap().is_empty());

    let c = tmp.path().join("c");
    assert_eq!(crystal(&["sample", "--config", &cfg, "--seed", "100"], &c), 0);
    assert_ne!(payloads(&c.join("sample")), pa);
}

#[test]
fn interrupted_ensemble_resumes_to_the_same_result() {
    let cfg = ExperimentConfig::from_json_str(
        &json!({"kernel": chain(0.5), "box": [64], "covariance": {"kind": "triangular", "n0": 2}}).to_string(),
    )
    .unwrap();
    let kernel = cfg.kernel().unwrap();
    let hs = HalfSpace::new(&kernel, cfg.half_box().unwrap()).unwrap();
    let sampler = HalfSampler::new(&cfg.covariance_spec(&kernel).unwrap(), &hs.half, cfg.noise).unwrap();
    let probes = vec![harmonic_crystal::lattice::LatticePoint(vec![4])];
    let times = [0.0, 7.0];
    let samples = 9 * 500 + 17;

    let direct = sample_ensemble(&hs, &sampler, &probes, &times, 5, samples, None, |_, _| Ok(())).unwrap();

    let mut saved = None;
    let interrupted = sample_ensemble(&hs, &sampler, &probes, &times, 5, samples, None, |done, accs| {
        saved = Some((done, accs.to_vec()));
        Err(CrystalError::InvalidParameter("interrupted".into()))
    });
    assert!(interrupted.is_err());
    let resumed = sample_ensemble(&hs, &sampler, &probes, &times, 5, samples, saved, |_, _| Ok(())).unwrap();
    assert_eq!(resumed, direct);
    assert_eq!(resumed[0].count(), samples);
}

#[test]
fn resumed_cli_run_matches_fresh_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sample_config(tmp.path());
    let fresh = tmp.path().join("fresh");
    assert_eq!(crystal(&["sample", "--config", &cfg], &fresh), 0);
    // a second invocation picks up the finished checkpoints
    let again = fresh.clone();
    assert_eq!(crystal(&["sample", "--config", &cfg], &again), 0);
    let other = tmp.path().join("other");
    assert_eq!(crystal(&["sample", "--config", &cfg], &other), 0);
    assert_eq!(payloads(&again.join("sample")), payloads(&other.join("sample")));
}

#[test]
fn evolve_snapshots_obey_the_group_property_and_the_wall() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = configs().join("evolve_d1.json");
    assert_eq!(crystal(&["evolve", "--config", cfg_path.to_str().unwrap()], tmp.path()), 0);
    let dir = tmp.path().join("evolve/snapshots");
    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    let hs = HalfSpace::new(&cfg.kernel().unwrap(), cfg.half_box().unwrap()).unwrap();
    let mut times = cfg.times.clone();
    times.sort_by(f64::total_cmp);
    let snaps: Vec<FieldState> = (0..times.len())
        .map(|i| FieldState::read_snapshot(&dir.join(format!("t{i:03}.bin"))).unwrap())
        .collect();
    for s in &snaps {
        assert_eq!(s.boundary_max(), 0.0);
    }
    for i in 1..snaps.len() {
        let resumed = hs.evolve(&snaps[i - 1], times[i] - times[i - 1], HalfMethod::OddExtension).unwrap();
        assert!(resumed.max_abs_diff(&snaps[i]) <= 1e-9);
    }
}

#[test]
fn report_flags_tampered_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("nn_d3_massless.json");
    assert_eq!(crystal(&["validate", "--config", cfg.to_str().unwrap()], tmp.path()), 0);
    assert_eq!(crystal(&["report"], tmp.path()), 0);
    let run = tmp.path().join("validate");
    let resolved = ExperimentConfig::from_file(&run.join("resolved_config.json")).unwrap();
    assert_eq!(resolved, ExperimentConfig::from_file(&cfg).unwrap().resolved().unwrap());

    let target = run.join("conditions.txt");
    let mut text = std::fs::read_to_string(&target).unwrap();
    text.push('\n');
    std::fs::write(&target, text).unwrap();
    assert_eq!(RunManifest::read(&run).unwrap().verify(&run).unwrap(), vec!["conditions.txt".to_string()]);
    assert_eq!(crystal(&["report"], tmp.path()), 1);
}
