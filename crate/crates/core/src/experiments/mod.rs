//! Configuration-driven studies. Each study is a pure computation returning a
//! serialisable report; the `run_*` functions add artifact output.

mod config;
mod converge;
mod decay;
mod dispersion;
mod evolve;
mod gaussianity;
mod manifest;
mod report;
mod sample;

pub use config::{
    ExperimentConfig, GridConfig, KernelSource, StationarityConfig, StudyTolerances, UniformBoundConfig,
};
pub use converge::{
    convergence_study, run_converge, stationarity_study, uniform_bound_study, ConvergenceReport,
    StationarityReport, UniformBoundReport,
};
pub use decay::{decay_study, run_decay, DecayReport, DecaySeries};
pub use dispersion::{dispersion_csv, dispersion_rows, run_dispersion, DispersionRow};
pub use evolve::{evolve_study, run_evolve, EvolveReport};
pub use gaussianity::{gaussianity_study, run_gaussianity, GaussianityReport, NormalityEntry};
pub use manifest::{find_runs, sha256_hex, ArtifactRecord, RunContext, RunManifest, MANIFEST_NAME};
pub use report::{run_report, AggregateReport, RunSummary};
pub use sample::{run_sample, sample_ensemble, SampleReport, CHUNK};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::{validate_conditions, ConditionReport};
use crate::lattice::TorusGrid;

/// Least-squares line with the standard error of its slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return invalid("a line fit needs at least three points");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("a line fit needs distinct abscissae");
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr: (rss / (n - 2.0) / sxx).sqrt(),
    })
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn validate(config: &ExperimentConfig) -> Result<ConditionReport> {
    let kernel = config.kernel()?;
    let grid = TorusGrid::uniform(config.d(), config.validation_points(), true)?;
    validate_conditions(&kernel, &grid, &config.tolerances.conditions)
}

/// Writes the condition report; `passed` is false when a condition is violated.
pub fn run_validate(config: &ExperimentConfig, ctx: &mut RunContext) -> Result<ConditionReport> {
    let report = validate(config)?;
    ctx.write_json("conditions.json", &report)?;
    ctx.write("conditions.txt", report.summary().as_bytes())?;
    Ok(report)
}
