//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line with
//! the measured quantities and its wall-clock time.

mod common;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{lbox, nn, random_state};
use harmonic_crystal::covariance::{limit_symbol_at, nn_limit_symbol, DecompositionOracle, DecompositionTables, LimitCovariance, Verdict};
use harmonic_crystal::dynamics::{energy, evolve_full, propagator_at, timestep_oracle, Flavor, HalfMethod, HalfSpace};
use harmonic_crystal::experiments::{convergence_study, decay_study, gaussianity_study, ConvergenceReport, ExperimentConfig};
use harmonic_crystal::fields::{sample_rng, CovarianceSpec, EnsembleAccumulator, FieldSampler, NoiseLaw, Recipe};
use harmonic_crystal::lattice::{LatticePoint, TorusGrid};
use harmonic_crystal::spectral::{build_spectral_table, InteractionKernel, SlopeMethod, SpectralPoint};
use harmonic_crystal::CMat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_file(&configs().join(name)).unwrap()
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn dispersion_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for (d, n) in [(1, 128), (2, 64), (3, 32)] {
        let (gamma, mass) = (1.3, 0.5);
        let k = nn(d, &[gamma], &[mass]);
        let table = build_spectral_table(&k, &TorusGrid::uniform(d, n, false).unwrap(), SlopeMethod::Auto).unwrap();
        for p in table.points() {
            let closed = (2.0 * gamma * p.theta.iter().map(|t| 1.0 - t.cos()).sum::<f64>() + mass * mass).sqrt();
            worst = worst.max((p.bands[0].omega - closed).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |omega - closed form| = {worst:.2e}"))
}

/// d = 2 kernel with `n` components coupled on site and along axis 0.
fn coupled_kernel(n: usize) -> InteractionKernel {
    let mut onsite = vec![vec![0.0; n]; n];
    let mut axis0 = vec![vec![0.0; n]; n];
    let mut axis1 = vec![vec![0.0; n]; n];
    for k in 0..n {
        onsite[k][k] = 4.0 + 0.5 + 0.3 * k as f64;
        axis0[k][k] = -1.0;
        axis1[k][k] = -1.0;
        if k + 1 < n {
            onsite[k][k + 1] = 0.2;
            onsite[k + 1][k] = 0.2;
            axis0[k][k + 1] = -0.1;
            axis0[k + 1][k] = -0.1;
        }
    }
    let text = json!({"d": 2, "n": n, "entries": [
        {"z": [0, 0], "matrix": onsite},
        {"z": [1, 0], "matrix": axis0},
        {"z": [-1, 0], "matrix": axis0},
        {"z": [0, 1], "matrix": axis1},
        {"z": [0, -1], "matrix": axis1},
    ]});
    InteractionKernel::from_json_str(&text.to_string()).unwrap()
}

fn propagator_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let k = coupled_kernel(n);
        for _ in 0..100 {
            let theta = vec![rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
            let t = rng.random_range(0.0..50.0);
            let s = k.symbol(&theta);
            let mut a = CMat::zeros(2 * n, 2 * n);
            a.view_mut((0, n), (n, n)).copy_from(&CMat::identity(n, n));
            a.view_mut((n, 0), (n, n)).copy_from(&(-&s));
            let oracle = (a * Complex64::from(t)).exp();
            let p = SpectralPoint::from_symbol(theta, s).unwrap();
            worst = worst.max((propagator_at(&p, t) - oracle).camax());
        }
    }
    outcome(worst <= 1e-10, format!("max entry error vs exp(A t) = {worst:.2e} (300 points)"))
}

fn dynamics_invariants() -> Outcome {
    let k = nn(1, &[1.0], &[0.5]);
    let hs = HalfSpace::new(&k, lbox(&[256])).unwrap();
    let y0 = random_state(&hs.half, 1, Flavor::Half, 31);
    let (mut wall, mut methods, mut group, mut reversal) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for t in [0.5, 5.0, 20.0, 50.0] {
        let a = hs.evolve(&y0, t, HalfMethod::OddExtension).unwrap();
        let b = hs.evolve(&y0, t, HalfMethod::Image).unwrap();
        wall = wall.max(a.boundary_max()).max(b.boundary_max());
        methods = methods.max(a.max_abs_diff(&b));
        let twice = hs.evolve(&a, 7.5, HalfMethod::OddExtension).unwrap();
        group = group.max(twice.max_abs_diff(&hs.evolve(&y0, t + 7.5, HalfMethod::OddExtension).unwrap()));
        reversal = reversal.max(hs.evolve(&a, -t, HalfMethod::OddExtension).unwrap().max_abs_diff(&y0));
    }

    let b = lbox(&[256]);
    let table = build_spectral_table(&k, &TorusGrid::for_box(&b), SlopeMethod::Auto).unwrap();
    let x0 = random_state(&b, 1, Flavor::Full, 32);
    let e0 = energy(&x0, &k);
    let mut drift = 0.0f64;
    for t in [1.0, 10.0, 100.0] {
        let x = evolve_full(&x0, &table, t).unwrap();
        drift = drift.max(((energy(&x, &k) - e0) / e0).abs());
        group = group.max(evolve_full(&x, &table, 3.0).unwrap().max_abs_diff(&evolve_full(&x0, &table, t + 3.0).unwrap()));
        reversal = reversal.max(evolve_full(&x, &table, -t).unwrap().max_abs_diff(&x0));
    }
    let verlet = timestep_oracle(&x0, &k, 5.0, 1e-3).unwrap().max_abs_diff(&evolve_full(&x0, &table, 5.0).unwrap());

    let passed = wall <= 1e-12 && methods <= 1e-10 && drift <= 1e-10 && group <= 1e-9 && reversal <= 1e-9 && verlet <= 1e-5;
    outcome(
        passed,
        format!(
            "wall {wall:.1e}, image vs odd {methods:.1e}, energy drift {drift:.1e}, group {group:.1e}, reversal {reversal:.1e}, verlet {verlet:.1e}"
        ),
    )
}

/// Largest `|estimate - q0| / stderr` over every probe pair and channel.
fn sampler_z(recipe: Recipe, noise: NoiseLaw, seed: u64) -> f64 {
    let spec = CovarianceSpec::triangular(2, 1).unwrap().with_recipe(recipe).unwrap();
    let sampler = FieldSampler::new(&spec, &lbox(&[64]), noise).unwrap();
    let probes: Vec<LatticePoint> = (20..26).map(|z| LatticePoint(vec![z])).collect();
    let mut acc = EnsembleAccumulator::new(probes.clone(), 1);
    for i in 0..10_000 {
        acc.accumulate(&sampler.sample(&mut sample_rng(seed, i)).unwrap()).unwrap();
    }
    let mut worst = 0.0f64;
    for (p, zp) in probes.iter().enumerate() {
        for (q, zq) in probes.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if i == j { spec.position(&zp.sub(zq).0).unwrap()[(0, 0)] } else { 0.0 };
                    let (a, b) = (acc.slot(p, i, 0), acc.slot(q, j, 0));
                    let z = (acc.second_moment(a, b) - expect) / acc.second_moment_stderr(a, b).unwrap();
                    worst = worst.max(z.abs());
                }
            }
        }
    }
    worst
}

fn sampler_fidelity() -> Outcome {
    let ma = sampler_z(Recipe::MovingAverage, NoiseLaw::Rademacher, 41);
    let spectral = sampler_z(Recipe::Spectral, NoiseLaw::Gaussian, 42);
    let spec = CovarianceSpec::triangular(2, 1).unwrap().with_recipe(Recipe::Spectral).unwrap();
    let sampler = FieldSampler::new(&spec, &lbox(&[64]), NoiseLaw::Gaussian).unwrap();
    let reproducible = sampler.sample(&mut sample_rng(5, 9)).unwrap() == sampler.sample(&mut sample_rng(5, 9)).unwrap();
    outcome(
        ma <= 4.0 && spectral <= 4.0 && reproducible,
        format!("max |z| moving-average {ma:.2}, spectral {spectral:.2}, reproducible {reproducible}"),
    )
}

fn covariance_convergence(r: &ConvergenceReport) -> Outcome {
    let e = &r.relative;
    let monotone = e.windows(2).all(|w| w[1] <= 1.2 * w[0]);
    let last = *e.last().unwrap();
    outcome(
        monotone && last <= 0.05 && r.refinement_change <= 0.01,
        format!(
            "relative errors {:?} at t = {:?}, refinement change {:.2e}",
            e.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            r.times,
            r.refinement_change
        ),
    )
}

fn limit_two_paths() -> Outcome {
    let grid = TorusGrid::uniform(1, 256, true).unwrap();
    let single = nn(1, &[1.0], &[0.5]);
    let pair = nn(1, &[1.0, 2.0], &[0.5, 0.8]);
    let cases = [
        (single.clone(), CovarianceSpec::triangular(2, 1).unwrap()),
        (single.clone(), CovarianceSpec::gibbs(0.7, &single).unwrap()),
        (pair.clone(), CovarianceSpec::gibbs(1.3, &pair).unwrap()),
    ];
    let mut worst = 0.0f64;
    for (k, spec) in &cases {
        let table = build_spectral_table(k, &grid, SlopeMethod::Auto).unwrap();
        for p in table.points() {
            let q0 = spec.symbol(&p.theta).unwrap();
            let (plus, minus) = limit_symbol_at(p, &q0).unwrap();
            let closed = nn_limit_symbol(k, &q0, &p.theta).unwrap();
            worst = worst.max((plus + minus - closed).camax());
        }
    }
    outcome(worst <= 1e-10, format!("max entry difference {worst:.2e}"))
}

fn stationarity(r: &ConvergenceReport) -> Outcome {
    let s = r.stationarity.as_ref().expect("benchmark config has a stationarity block");
    let worst = s.relative.iter().cloned().fold(0.0, f64::max);
    outcome(worst <= 0.02, format!("relative errors {:?} at t = {:?}", s.relative, s.times))
}

fn gaussianity() -> Outcome {
    let (report, _) = gaussianity_study(&load("gaussianity_d1.json")).unwrap();
    let at = |t: f64| report.entries.iter().find(|e| e.t == t).unwrap().report.clone();
    let (early, late) = (at(0.0), at(100.0));
    let late_ok = late.skewness_z.abs() <= 4.0 && late.kurtosis_z.abs() <= 4.0 && late.ks_p_value >= 0.01;
    outcome(
        early.verdict == Verdict::Fail && late.verdict == Verdict::Pass && late_ok,
        format!(
            "t = 0: kurtosis z {:.1}, {:?}; t = 100: skew z {:.2}, kurtosis z {:.2}, KS p {:.3}, {:?}",
            early.kurtosis_z, early.verdict, late.skewness_z, late.kurtosis_z, late.ks_p_value, late.verdict
        ),
    )
}

fn decay() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, d) in [("decay_d1.json", 1.0), ("decay_d2.json", 2.0)] {
        let cfg = load(name);
        let hs = HalfSpace::new(&cfg.kernel().unwrap(), cfg.half_box().unwrap()).unwrap();
        let r = decay_study(&hs, &cfg.test_functions, &cfg.times, 0.15, 1e-6).unwrap();
        for s in &r.series {
            let cone = s.outside_cone.iter().cloned().fold(0.0, f64::max);
            passed &= (s.fit.slope + d / 2.0).abs() <= 0.15 && cone <= 1e-6;
            parts.push(format!("d = {d}: slope {:.3}, outside-cone mass {cone:.1e}", s.fit.slope));
        }
    }
    outcome(passed, parts.join("; "))
}

fn decomposition() -> Outcome {
    let k = nn(1, &[1.0], &[0.5]);
    let spec = CovarianceSpec::triangular(2, 1).unwrap();
    let oracle = DecompositionOracle::new(&k, &spec, &lbox(&[512])).unwrap();
    let limit = LimitCovariance::new(&k, &spec, &TorusGrid::uniform(1, 4096, true).unwrap()).unwrap();
    let probes: Vec<LatticePoint> = (-2..=2).map(|z| LatticePoint(vec![z])).collect();
    let mut defect = 0.0f64;
    let mut plus_gap = Vec::new();
    let mut rest = Vec::new();
    for t in [0.0, 25.0, 50.0, 100.0] {
        let r = oracle.at(&probes, t).unwrap();
        defect = defect.max(r.sum_defect());
        let mut gap = 0.0f64;
        for (a, za) in probes.iter().enumerate() {
            for (b, zb) in probes.iter().enumerate() {
                let q = limit.position_plus(&za.sub(zb).0).unwrap();
                gap = gap.max((&r.plus[a * probes.len() + b] - q).norm());
            }
        }
        plus_gap.push(gap);
        rest.push(DecompositionTables::max_norm(&r.rest));
    }
    let trend = plus_gap.windows(2).all(|w| w[1] < w[0]);
    let ratio = rest[3] / rest[0];
    outcome(
        defect <= 1e-10 && trend && ratio <= 0.1,
        format!(
            "sum defect {defect:.1e}, |R+ - q+| {:?}, |Rr| {:?} (final/initial {ratio:.3})",
            plus_gap.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(),
            rest.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn uniform_bound(r: &ConvergenceReport) -> Outcome {
    let u = r.uniform_bound.as_ref().expect("benchmark config has a uniform-bound block");
    let w0 = u.weighted_norm[0];
    let within = u.weighted_norm.iter().all(|&w| w <= 2.0 * w0);
    outcome(
        u.no_growth && within,
        format!(
            "slope {:.2e} +- {:.1e}, weighted norm {:.3} -> max {:.3}",
            u.fit.slope,
            u.fit.slope_stderr,
            w0,
            u.weighted_norm.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed().as_secs_f64())
}

#[test]
fn acceptance_criteria() {
    // criteria 5, 7 and 11 share one run of the benchmark configuration
    let start = Instant::now();
    let report = convergence_study(&load("benchmark_d1.json")).unwrap();
    let bench_secs = start.elapsed().as_secs_f64();
    let results: Vec<(&str, Outcome, f64)> = vec![
        ("dispersion exactness", timed(dispersion_exactness)),
        ("propagator exactness", timed(propagator_exactness)),
        ("dynamics invariants", timed(dynamics_invariants)),
        ("sampler fidelity", timed(sampler_fidelity)),
        ("covariance convergence", (covariance_convergence(&report), bench_secs)),
        ("limit formula two paths", timed(limit_two_paths)),
        ("stationarity", (stationarity(&report), bench_secs)),
        ("gaussianity", timed(gaussianity)),
        ("decay exponents", timed(decay)),
        ("decomposition oracle", timed(decomposition)),
        ("uniform bound", (uniform_bound(&report), bench_secs)),
    ]
    .into_iter()
    .map(|(name, (o, secs))| (name, o, secs))
    .collect();

    for (i, (name, o, secs)) in results.iter().enumerate() {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} {:>2}. {name:<24} {:>7.2} s  {}", i + 1, secs, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.1.passed).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
