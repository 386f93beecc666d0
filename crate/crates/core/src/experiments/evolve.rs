use serde::{Deserialize, Serialize};

use crate::dynamics::{FieldState, HalfMethod, HalfSpace};
use crate::error::{invalid, Result};
use crate::experiments::{ExperimentConfig, RunContext};
use crate::fields::{sample_rng, HalfSampler};

const GROUP_TOL: f64 = 1e-9;
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    pub times: Vec<f64>,
    pub boundary_max: Vec<f64>,
    /// `max |U(t_i - t_{i-1}) Y(t_{i-1}) - U(t_i) Y0|`, relative to `1 + max |Y|`;
    /// the first entry is 0.
    pub group_defect: Vec<f64>,
    pub passed: bool,
}

/// Evolves sample 0 of the configured ensemble through the time schedule.
/// Calls `snapshot` with each state as it is produced.
pub fn evolve_study(
    config: &ExperimentConfig,
    mut snapshot: impl FnMut(usize, f64, &FieldState) -> Result<()>,
) -> Result<EvolveReport> {
    if config.times.is_empty() {
        return invalid("evolve needs a time schedule");
    }
    let kernel = config.kernel()?;
    let hs = HalfSpace::new(&kernel, config.half_box()?)?;
    let spec = config.covariance_spec(&kernel)?;
    let y0 = HalfSampler::new(&spec, &hs.half, config.noise)?.sample(&mut sample_rng(config.seed, 0))?;
    let mut times = config.times.clone();
    times.sort_by(f64::total_cmp);
    let mut report = EvolveReport {
        times: times.clone(),
        boundary_max: Vec::new(),
        group_defect: Vec::new(),
        passed: true,
    };
    let mut prev: Option<(f64, FieldState)> = None;
    for (i, &t) in times.iter().enumerate() {
        let y = hs.evolve(&y0, t, HalfMethod::OddExtension)?;
        let defect = match &prev {
            Some((tp, yp)) => {
                let resumed = hs.evolve(yp, t - tp, HalfMethod::OddExtension)?;
                resumed.max_abs_diff(&y) / (1.0 + y.max_abs())
            }
            None => 0.0,
        };
        report.boundary_max.push(y.boundary_max());
        report.group_defect.push(defect);
        snapshot(i, t, &y)?;
        prev = Some((t, y));
    }
    report.passed = report.boundary_max.iter().all(|&b| b <= BOUNDARY_TOL)
        && report.group_defect.iter().all(|&g| g <= GROUP_TOL);
    Ok(report)
}

pub fn run_evolve(config: &ExperimentConfig, ctx: &mut RunContext) -> Result<EvolveReport> {
    std::fs::create_dir_all(ctx.path("snapshots"))?;
    let mut written = Vec::new();
    let report = evolve_study(config, |i, t, y| {
        let name = format!("snapshots/t{i:03}.bin");
        y.write_snapshot(&ctx.path(&name), Some(t))?;
        written.push((name, y.slice_csv()));
        Ok(())
    })?;
    for (name, csv) in written {
        ctx.record(&name)?;
        ctx.record(&format!("{name}.json"))?;
        ctx.write(&name.replace(".bin", "_slice.csv"), csv.as_bytes())?;
    }
    ctx.write_json("evolve.json", &report)?;
    Ok(report)
}
