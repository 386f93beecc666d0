use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{normality_test, LimitCovariance, NormalityReport, Verdict};
use crate::dynamics::{pairing_half, restrict_half, FieldState, HalfSpace, TestFunction};
use crate::error::{invalid, Result};
use crate::experiments::{fmt_f64, ExperimentConfig, RunContext, CHUNK};
use crate::fields::{sample_rng, HalfSampler};
use crate::lattice::{LatticePoint, TorusGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityEntry {
    pub test_function: usize,
    pub t: f64,
    pub report: NormalityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub samples: u64,
    pub noise: crate::fields::NoiseLaw,
    pub test_functions: Vec<TestFunction>,
    /// `Q_inf(Psi, Psi)` per test function.
    pub limit_variance: Vec<f64>,
    pub entries: Vec<NormalityEntry>,
    /// Every test function is Gaussian (or degenerate) at the last time.
    pub passed: bool,
}

/// `sum_{z, z'} Psi(z) . Q_inf(z, z') Psi(z')` over the support of `Psi`.
fn quadratic_form(lim: &LimitCovariance, psi: &FieldState) -> Result<f64> {
    let n = psi.n;
    let support: Vec<(LatticePoint, DVector<f64>)> = (0..psi.sites())
        .filter_map(|s| {
            let x = DVector::from_iterator(
                2 * n,
                (0..n).map(|k| psi.u[s * n + k]).chain((0..n).map(|k| psi.v[s * n + k])),
            );
            (x.iter().any(|&c| c != 0.0)).then(|| (LatticePoint(psi.lbox.half_coords(s)), x))
        })
        .collect();
    let mut total = 0.0;
    for (z, a) in &support {
        for (zp, b) in &support {
            total += a.dot(&(lim.halfspace(z, zp)? * b));
        }
    }
    Ok(total)
}

/// Samples `<Y(t), Psi>_+ = <Y0, Phi_t>_+` for every test function and time,
/// reusing each initial sample across all observables.
pub fn gaussianity_samples(
    sampler: &HalfSampler,
    phis: &[FieldState],
    seed: u64,
    samples: u64,
) -> Result<Vec<Vec<f64>>> {
    let chunks: Vec<Vec<Vec<f64>>> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            (c * CHUNK..((c + 1) * CHUNK).min(samples))
                .map(|m| {
                    let y0 = sampler.sample(&mut sample_rng(seed, m))?;
                    Ok(phis.iter().map(|phi| pairing_half(&y0, phi)).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn gaussianity_study(config: &ExperimentConfig) -> Result<(GaussianityReport, Vec<Vec<f64>>)> {
    if config.test_functions.is_empty() || config.times.is_empty() {
        return invalid("gaussianity needs test functions and times");
    }
    let kernel = config.kernel()?;
    let spec = config.covariance_spec(&kernel)?;
    let hs = HalfSpace::new(&kernel, config.half_box()?)?;
    let lim = LimitCovariance::new(&kernel, &spec, &TorusGrid::uniform(config.d(), config.limit_points(), true)?)?;
    let sampler = HalfSampler::new(&spec, &hs.half, config.noise)?;
    let mut phis = Vec::new();
    let mut limit_variance = Vec::new();
    for tf in &config.test_functions {
        let psi = tf.build(&hs.half, hs.n())?;
        limit_variance.push(quadratic_form(&lim, &psi)?);
        for &t in &config.times {
            hs.check_guard(t, tf.reach())?;
            phis.push(restrict_half(&hs.adjoint(&psi, t)?, &hs.half)?);
        }
    }
    let rows = gaussianity_samples(&sampler, &phis, config.seed, config.samples)?;
    let nt = config.times.len();
    let mut entries = Vec::new();
    for (j, &var) in limit_variance.iter().enumerate() {
        for (i, &t) in config.times.iter().enumerate() {
            let column: Vec<f64> = rows.iter().map(|r| r[j * nt + i]).collect();
            entries.push(NormalityEntry {
                test_function: j,
                t,
                report: normality_test(&column, var)?,
            });
        }
    }
    let t_last = config.times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let passed = entries
        .iter()
        .filter(|e| e.t == t_last)
        .all(|e| e.report.verdict != Verdict::Fail);
    Ok((
        GaussianityReport {
            samples: config.samples,
            noise: config.noise,
            test_functions: config.test_functions.clone(),
            limit_variance,
            entries,
            passed,
        },
        rows,
    ))
}

pub fn run_gaussianity(config: &ExperimentConfig, ctx: &mut RunContext) -> Result<GaussianityReport> {
    let (report, rows) = gaussianity_study(config)?;
    let mut csv = String::from("sample");
    for j in 0..config.test_functions.len() {
        for i in 0..config.times.len() {
            csv.push_str(&format!(",psi{j}_t{i}"));
        }
    }
    csv.push('\n');
    for (m, r) in rows.iter().enumerate() {
        csv.push_str(&m.to_string());
        for x in r {
            csv.push(',');
            csv.push_str(&fmt_f64(*x));
        }
        csv.push('\n');
    }
    ctx.write("observables.csv", csv.as_bytes())?;
    ctx.write_json("gaussianity.json", &report)?;
    Ok(report)
}
