mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use common::{lbox, nn, random_band, random_state};
use harmonic_crystal::covariance::{limit_symbol_at, nn_limit_symbol, CovariancePropagator};
use harmonic_crystal::dynamics::{energy, evolve_full, pairing_half, propagator_at, restrict_half, Flavor, HalfMethod, HalfSpace};
use harmonic_crystal::experiments::RunManifest;
use harmonic_crystal::fields::{sample_rng, CovarianceSpec, FieldSampler, NoiseLaw, Recipe};
use harmonic_crystal::lattice::{LatticePoint, TorusGrid};
use harmonic_crystal::spectral::{build_spectral_table, SlopeMethod, SpectralPoint, SpectralTable};
use harmonic_crystal::CMat;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn table(k: &harmonic_crystal::spectral::InteractionKernel, ext: &[usize]) -> SpectralTable {
    build_spectral_table(k, &TorusGrid::for_box(&lbox(ext)), SlopeMethod::Auto).unwrap()
}

fn random_psd(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = CMat::from_fn(dim, dim, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    &b * b.adjoint()
}

fn theta_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI..PI, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bands_reassemble_the_symbol(
        d in 1usize..4,
        gamma in prop::collection::vec(0.1f64..3.0, 1..4),
        mass_seed in any::<u64>(),
        theta in theta_strategy(3),
    ) {
        let n = gamma.len();
        let mut rng = ChaCha8Rng::seed_from_u64(mass_seed);
        let mass: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let k = nn(d, &gamma, &mass);
        let theta = &theta[..d];
        let s = k.symbol(theta);
        let p = SpectralPoint::from_symbol(theta.to_vec(), s.clone()).unwrap();
        let om = p.omega_matrix();
        prop_assert!((&om * &om - &s).norm() <= 1e-10 * (1.0 + s.norm()));
        let total = p.bands.iter().fold(CMat::zeros(n, n), |a, b| a + &b.projection);
        prop_assert!((total - CMat::identity(n, n)).norm() <= 1e-10);
        for (i, a) in p.bands.iter().enumerate() {
            for (j, b) in p.bands.iter().enumerate() {
                let prod = &a.projection * &b.projection;
                let expect = if i == j { a.projection.clone() } else { CMat::zeros(n, n) };
                prop_assert!((prod - expect).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn symbol_is_hermitian_and_reflects_to_its_conjugate(
        seed in any::<u64>(),
        theta in theta_strategy(2),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: f64 = rng.random_range(-0.5..0.5);
        let b: f64 = rng.random_range(-0.5..0.5);
        let text = json!({"d": 2, "n": 2, "entries": [
            {"z": [0, 0], "matrix": [[4.0, 0.3], [0.3, 5.0]]},
            {"z": [1, 0], "matrix": [[-1.0, a], [b, -0.5]]},
            {"z": [-1, 0], "matrix": [[-1.0, b], [a, -0.5]]},
            {"z": [0, 1], "matrix": [[-0.7, 0.0], [0.2, -1.0]]},
            {"z": [0, -1], "matrix": [[-0.7, 0.2], [0.0, -1.0]]},
        ]});
        let k = harmonic_crystal::spectral::InteractionKernel::from_json_str(&text.to_string()).unwrap();
        let s = k.symbol(&theta);
        let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
        let r = k.symbol(&neg);
        prop_assert!((&r - s.conjugate()).norm() <= 1e-12);
        prop_assert!((&r - s.transpose()).norm() <= 1e-12);
    }

    #[test]
    fn nn_bands_match_the_closed_form(
        d in 1usize..4,
        gamma in 0.1f64..3.0,
        mass in 0.0f64..2.0,
        theta in theta_strategy(3),
    ) {
        let theta = &theta[..d];
        let k = nn(d, &[gamma], &[mass]);
        let p = SpectralPoint::from_symbol(theta.to_vec(), k.symbol(theta)).unwrap();
        let closed = (2.0 * gamma * theta.iter().map(|t| 1.0 - t.cos()).sum::<f64>() + mass * mass).sqrt();
        prop_assert!((p.bands[0].omega - closed).abs() <= 1e-12);
    }

    #[test]
    fn finite_difference_slope_has_the_sign_of_sin(
        half in 4usize..20,
        gamma in prop::collection::vec(0.2f64..2.0, 1..3),
        mass in 0.1f64..1.5,
    ) {
        let masses = vec![mass; gamma.len()];
        let k = nn(1, &gamma, &masses);
        let grid = TorusGrid::uniform(1, 2 * half, true).unwrap();
        let t = build_spectral_table(&k, &grid, SlopeMethod::FiniteDifference).unwrap();
        for p in t.points() {
            let s = p.theta[0].sin();
            if s.abs() > 1e-6 {
                for b in &p.bands {
                    prop_assert_eq!(b.slope_sign as f64, s.signum());
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn half_evolution_invariants(seed in any::<u64>(), t1 in -20.0f64..20.0, t2 in -20.0f64..20.0, mass in 0.0f64..1.0) {
        let hs = HalfSpace::new(&nn(1, &[1.0], &[mass]), lbox(&[128])).unwrap();
        let y0 = random_state(&hs.half, 1, Flavor::Half, seed);
        let a = hs.evolve(&y0, t1, HalfMethod::OddExtension).unwrap();
        let b = hs.evolve(&y0, t1, HalfMethod::Image).unwrap();
        prop_assert_eq!(a.boundary_max(), 0.0);
        prop_assert_eq!(b.boundary_max(), 0.0);
        prop_assert!(a.max_abs_diff(&b) <= 1e-10);

        let ab = hs.evolve(&a, t2, HalfMethod::OddExtension).unwrap();
        let direct = hs.evolve(&y0, t1 + t2, HalfMethod::OddExtension).unwrap();
        prop_assert!(ab.max_abs_diff(&direct) <= 1e-9);
        let back = hs.evolve(&a, -t1, HalfMethod::OddExtension).unwrap();
        prop_assert!(back.max_abs_diff(&y0) <= 1e-9);
    }

    #[test]
    fn full_evolution_invariants(seed in any::<u64>(), t1 in -50.0f64..50.0, t2 in -50.0f64..50.0, mass in 0.0f64..1.0) {
        let k = nn(2, &[1.0], &[mass]);
        let tab = table(&k, &[16, 12]);
        let x0 = random_state(&lbox(&[16, 12]), 1, Flavor::Full, seed);
        let x1 = evolve_full(&x0, &tab, t1).unwrap();
        let e0 = energy(&x0, &k);
        prop_assert!(((energy(&x1, &k) - e0) / e0).abs() <= 1e-10);
        let x12 = evolve_full(&x1, &tab, t2).unwrap();
        prop_assert!(x12.max_abs_diff(&evolve_full(&x0, &tab, t1 + t2).unwrap()) <= 1e-9);
        prop_assert!(evolve_full(&x1, &tab, -t1).unwrap().max_abs_diff(&x0) <= 1e-9);
    }

    #[test]
    fn adjoint_is_dual_to_the_evolution(seed in any::<u64>(), t in 0.0f64..30.0, lo in 1i64..10, width in 1i64..10) {
        let hs = HalfSpace::new(&nn(1, &[1.0], &[0.5]), lbox(&[128])).unwrap();
        let y0 = random_state(&hs.half, 1, Flavor::Half, seed);
        let psi = random_band(&hs.half, 1, lo, lo + width, seed ^ 0x5a5a);
        let yt = hs.evolve(&y0, t, HalfMethod::OddExtension).unwrap();
        let phi = restrict_half(&hs.adjoint(&psi, t).unwrap(), &hs.half).unwrap();
        let scale = (y0.norm_sq() * psi.norm_sq()).sqrt();
        prop_assert!((pairing_half(&yt, &psi) - pairing_half(&y0, &phi)).abs() <= 1e-9 * scale);
    }

    #[test]
    fn spectral_samples_are_real(seed in any::<u64>(), temperature in 0.1f64..3.0, mass in 0.2f64..1.5) {
        let k = nn(1, &[1.0, 0.5], &[mass, mass]);
        let spec = CovarianceSpec::gibbs(temperature, &k).unwrap().with_recipe(Recipe::Spectral).unwrap();
        let sampler = FieldSampler::new(&spec, &lbox(&[32]), NoiseLaw::Gaussian).unwrap();
        // the sampler errors out when the imaginary part exceeds 1e-12
        let x = sampler.sample(&mut sample_rng(seed, 0)).unwrap();
        prop_assert!(x.u.iter().chain(&x.v).all(|v| v.is_finite()));
    }

    #[test]
    fn triangular_spec_vanishes_beyond_its_range(n0 in 1usize..6, d in 1usize..4, z in prop::collection::vec(-8i64..8, 3)) {
        let spec = CovarianceSpec::triangular(n0, d).unwrap();
        let z = &z[..d];
        let q = spec.position(z).unwrap();
        let inside = z.iter().all(|c| c.unsigned_abs() < n0 as u64);
        let expect: f64 = z.iter().map(|c| (n0 as f64 - c.abs() as f64).max(0.0)).product();
        prop_assert_eq!(q[(0, 0)], expect);
        prop_assert_eq!(q[(1, 1)], expect);
        prop_assert_eq!(q[(0, 1)], 0.0);
        prop_assert_eq!(inside, expect > 0.0);
    }

    #[test]
    fn limit_symbol_paths_agree(
        gamma in prop::collection::vec(0.3f64..2.0, 1..3),
        mass in 0.2f64..1.5,
        half in 4usize..32,
        seed in any::<u64>(),
    ) {
        let n = gamma.len();
        let k = nn(1, &gamma, &vec![mass; n]);
        let mut q0 = random_psd(2 * n, seed);
        if n == 2 {
            // diagonal kernel: the spec must not couple the two components
            for (r, c) in [(0, 1), (0, 3), (2, 1), (2, 3)] {
                q0[(r, c)] = Complex64::from(0.0);
                q0[(c, r)] = Complex64::from(0.0);
            }
        }
        let grid = TorusGrid::uniform(1, 2 * half, true).unwrap();
        let tab = build_spectral_table(&k, &grid, SlopeMethod::Auto).unwrap();
        for p in tab.points() {
            let (plus, minus) = limit_symbol_at(p, &q0).unwrap();
            let closed = nn_limit_symbol(&k, &q0, &p.theta).unwrap();
            prop_assert!((plus + minus - closed).norm() <= 1e-10 * (1.0 + q0.norm()));
        }
    }

    #[test]
    fn propagated_covariance_oscillates_at_band_frequencies(
        gamma1 in 0.3f64..2.0,
        gamma2 in 0.3f64..2.0,
        mass in 0.2f64..1.0,
        theta in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        let k = nn(1, &[gamma1, gamma2], &[mass, mass * 1.3]);
        let p = SpectralPoint::from_symbol(vec![theta], k.symbol(&[theta])).unwrap();
        let q0 = random_psd(4, seed);
        let w: Vec<f64> = p.bands.iter().map(|b| b.omega).collect();
        let mut freqs = Vec::new();
        for (i, a) in w.iter().enumerate() {
            for b in &w[i..] {
                freqs.push(a + b);
                if (a - b).abs() > 1e-9 {
                    freqs.push((a - b).abs());
                }
            }
        }
        let times: Vec<f64> = (0..400).map(|i| 0.37 * i as f64).collect();
        let cols = 1 + 2 * freqs.len();
        let design = DMatrix::from_fn(times.len(), cols, |r, c| match c {
            0 => 1.0,
            c if c % 2 == 1 => (freqs[c / 2] * times[r]).cos(),
            c => (freqs[c / 2 - 1] * times[r]).sin(),
        });
        let svd = design.clone().svd(true, true);
        let series: Vec<CMat> = times
            .iter()
            .map(|&t| {
                let g = propagator_at(&p, t);
                &g * &q0 * g.adjoint()
            })
            .collect();
        for r in 0..4 {
            for c in 0..4 {
                for part in [0, 1] {
                    let y = nalgebra::DVector::from_fn(times.len(), |i, _| {
                        let z = series[i][(r, c)];
                        if part == 0 { z.re } else { z.im }
                    });
                    let fit = svd.solve(&y, 1e-12).unwrap();
                    let resid = (&design * fit - &y).norm();
                    prop_assert!(resid <= 0.05 * (1e-12 + y.norm()), "entry ({r},{c}) residual {resid}");
                }
            }
        }
    }

    #[test]
    fn propagated_covariance_is_exchange_symmetric(t in 0.0f64..20.0, n0 in 1usize..4) {
        let hs = HalfSpace::new(&nn(1, &[1.0], &[0.5]), lbox(&[128])).unwrap();
        let spec = CovarianceSpec::triangular(n0, 1).unwrap();
        let prop = CovariancePropagator::factored(&hs, &spec).unwrap();
        let probes: Vec<LatticePoint> = (2..7).map(|z| LatticePoint(vec![z])).collect();
        let q = prop.propagate(&probes, t).unwrap();
        prop_assert!(q.exchange_asymmetry() <= 1e-12);
    }
}

fn crystal(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_crystal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let m = RunManifest::read(dir).unwrap();
    m.artifacts
        .iter()
        .map(|a| (a.path.clone(), std::fs::read(dir.join(&a.path)).unwrap()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cli_runs_are_deterministic_and_verifiable(seed in any::<u64>(), mass in 0.1f64..1.0, t in 1.0f64..10.0) {
        let tmp = tempfile::TempDir::new().unwrap();
        let cfg = json!({
            "kernel": {"family": "nearest-neighbor", "d": 1, "n": 1, "gamma": [1.0], "mass": [mass]},
            "box": [64],
            "covariance": {"kind": "triangular", "n0": 2},
            "times": [0.0, t],
            "seed": seed,
        });
        let path = tmp.path().join("c.json");
        std::fs::write(&path, cfg.to_string()).unwrap();
        let path = path.to_str().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        prop_assert_eq!(crystal(&["evolve", "--config", path, "--workers", "1"], &a), 0);
        prop_assert_eq!(crystal(&["evolve", "--config", path, "--workers", "3"], &b), 0);
        prop_assert_eq!(artifact_bytes(&a.join("evolve")), artifact_bytes(&b.join("evolve")));
        let m = RunManifest::read(&a.join("evolve")).unwrap();
        prop_assert!(m.verify(&a.join("evolve")).unwrap().is_empty());
    }

    #[test]
    fn bad_configs_exit_with_two(mass in -5.0f64..-0.01, extra in 0usize..3, junk in "[a-z]{1,8}") {
        let tmp = tempfile::TempDir::new().unwrap();
        let write = |name: &str, v: serde_json::Value| {
            let p = tmp.path().join(name);
            std::fs::write(&p, v.to_string()).unwrap();
            p.display().to_string()
        };
        let kernel = json!({"family": "nearest-neighbor", "d": 1, "n": 1, "gamma": [1.0], "mass": [0.5]});
        let negative = write("neg.json", json!({
            "kernel": {"family": "nearest-neighbor", "d": 1, "n": 1, "gamma": [1.0], "mass": [mass]},
            "box": [16],
        }));
        let mut extents = vec![16usize; extra];
        extents.push(0);
        let tiny = write("tiny.json", json!({"kernel": kernel, "box": extents}));
        let unknown = write("unknown.json", json!({"kernel": kernel, "box": [16], format!("x{junk}"): 1}));
        for cfg in [&negative, &tiny, &unknown] {
            prop_assert_eq!(crystal(&["dispersion", "--config", cfg], tmp.path()), 2);
        }
        prop_assert_eq!(crystal(&[format!("zz{junk}").as_str()], tmp.path()), 2);
    }
}
