use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovariancePropagator, ErrorSummary, LimitCovariance};
use crate::dynamics::HalfSpace;
use crate::error::{invalid, Result};
use crate::experiments::{fit_line, ExperimentConfig, LineFit, RunContext};
use crate::fields::CovarianceSpec;
use crate::lattice::{LatticeBox, LatticePoint, TorusGrid};
use crate::spectral::InteractionKernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub errors: Vec<ErrorSummary>,
    /// Relative errors in schedule order.
    pub relative: Vec<f64>,
    pub monotone: bool,
    pub final_within_tolerance: bool,
    /// Relative change of `Q_inf` on the probes under `N -> 2N`.
    pub refinement_change: f64,
    pub limit_grid: Vec<usize>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<StationarityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_bound: Option<UniformBoundReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub r#box: Vec<usize>,
    pub times: Vec<f64>,
    pub relative: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBoundReport {
    pub times: Vec<f64>,
    /// `max_z ||Q_t(z, z)||_F` over `1 <= z1 <= L1 / 2`.
    pub max_diagonal: Vec<f64>,
    /// `E ||Y(t)||^2_{alpha,+}` restricted to the same sites.
    pub weighted_norm: Vec<f64>,
    pub alpha: f64,
    pub fit: LineFit,
    /// Fitted change over the schedule relative to the mean level.
    pub relative_trend: f64,
    pub no_growth: bool,
    pub norm_within_bound: bool,
    pub passed: bool,
}

fn limit(kernel: &InteractionKernel, spec: &CovarianceSpec, d: usize, points: usize) -> Result<LimitCovariance> {
    LimitCovariance::new(kernel, spec, &TorusGrid::uniform(d, points, true)?)
}

/// `Q_t` from exact propagation against `Q_inf` on the probes, plus a grid
/// refinement check of `Q_inf` itself.
pub fn convergence_study(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    if config.times.is_empty() || config.probes.is_empty() {
        return invalid("converge needs times and probes");
    }
    let kernel = config.kernel()?;
    let spec = config.covariance_spec(&kernel)?;
    let hs = HalfSpace::new(&kernel, config.half_box()?)?;
    let reach = config.probes.iter().map(|p| p.sup_norm()).max().unwrap_or(0) as f64;
    for &t in &config.times {
        hs.check_guard(t, reach)?;
    }
    let points = config.limit_points();
    let q_inf = limit(&kernel, &spec, config.d(), points)?.halfspace_field(&config.probes)?;
    let q_fine = limit(&kernel, &spec, config.d(), 2 * points)?.halfspace_field(&config.probes)?;
    let refinement_change = q_fine.error_against(&q_inf)?.relative;

    let prop = CovariancePropagator::factored(&hs, &spec)?;
    let mut errors = Vec::new();
    for &t in &config.times {
        errors.push(prop.propagate(&config.probes, t)?.error_against(&q_inf)?);
    }
    let relative: Vec<f64> = errors.iter().map(|e| e.relative).collect();
    let tol = &config.tolerances;
    let monotone = relative.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol.monotone_slack));
    let final_within_tolerance = relative.last().is_some_and(|&e| e <= tol.convergence);
    let mut report = ConvergenceReport {
        times: config.times.clone(),
        errors,
        relative,
        monotone,
        final_within_tolerance,
        refinement_change,
        limit_grid: vec![points; config.d()],
        passed: monotone && final_within_tolerance && refinement_change <= tol.refinement,
        stationarity: None,
        uniform_bound: None,
    };
    if let Some(s) = &config.stationarity {
        let st = stationarity_study(&kernel, &spec, points, &LatticeBox::new(s.r#box.clone())?, &s.times, &s.probes, tol.stationarity)?;
        report.passed &= st.passed;
        report.stationarity = Some(st);
    }
    if let Some(u) = &config.uniform_bound {
        let ub = uniform_bound_study(&hs, &spec, &u.times, u.alpha, tol.norm_growth)?;
        report.passed &= ub.passed;
        report.uniform_bound = Some(ub);
    }
    Ok(report)
}

/// Starts from the dense `Q_inf` on a small slab and propagates it exactly.
pub fn stationarity_study(
    kernel: &InteractionKernel,
    spec: &CovarianceSpec,
    points: usize,
    half: &LatticeBox,
    times: &[f64],
    probes: &[LatticePoint],
    tolerance: f64,
) -> Result<StationarityReport> {
    let lim = limit(kernel, spec, half.dim(), points)?;
    let hs = HalfSpace::new(kernel, half.clone())?;
    let reach = probes.iter().map(|p| p.sup_norm()).max().unwrap_or(0) as f64;
    for &t in times {
        hs.check_guard(t, reach)?;
    }
    let q_inf = lim.halfspace_field(probes)?;
    let prop = CovariancePropagator::dense(&hs, lim.dense_halfspace(half)?)?;
    let relative = times
        .iter()
        .map(|&t| Ok(prop.propagate(probes, t)?.error_against(&q_inf)?.relative))
        .collect::<Result<Vec<f64>>>()?;
    Ok(StationarityReport {
        r#box: half.extents.clone(),
        times: times.to_vec(),
        passed: relative.iter().all(|&e| e <= tolerance),
        relative,
    })
}

/// Diagonal blocks `Q_t(z, z)` over the inner half of the slab.
pub fn uniform_bound_study(
    hs: &HalfSpace,
    spec: &CovarianceSpec,
    times: &[f64],
    alpha: f64,
    growth: f64,
) -> Result<UniformBoundReport> {
    let half = &hs.half;
    let l1 = half.extents[0] as i64;
    let probes: Vec<LatticePoint> = (0..half.sites())
        .map(|s| LatticePoint(half.half_coords(s)))
        .filter(|z| z.0[0] >= 1 && z.0[0] <= l1 / 2)
        .collect();
    let weights: Vec<f64> = probes
        .iter()
        .map(|z| (1.0 + z.norm_sq() as f64).powf(alpha))
        .collect();
    let prop = CovariancePropagator::factored(hs, spec)?;
    let mut max_diagonal = Vec::new();
    let mut weighted_norm = Vec::new();
    for &t in times {
        let diag: Vec<DMatrix<f64>> = prop.diagonal(&probes, t)?;
        max_diagonal.push(diag.iter().map(|m| m.norm()).fold(0.0, f64::max));
        weighted_norm.push(diag.iter().zip(&weights).map(|(m, w)| w * m.trace()).sum());
    }
    let fit = fit_line(times, &max_diagonal)?;
    let mean = max_diagonal.iter().sum::<f64>() / max_diagonal.len() as f64;
    let span = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - times.iter().cloned().fold(f64::INFINITY, f64::min);
    let relative_trend = fit.slope * span / mean;
    // Growth is a positive slope that is both significant and visible.
    let no_growth = fit.slope <= 2.0 * fit.slope_stderr || relative_trend <= 0.05;
    let w0 = weighted_norm[0];
    let norm_within_bound = weighted_norm.iter().all(|&w| w <= growth * w0 && w >= w0 / growth);
    Ok(UniformBoundReport {
        times: times.to_vec(),
        max_diagonal,
        weighted_norm,
        alpha,
        fit,
        relative_trend,
        no_growth,
        norm_within_bound,
        passed: no_growth && norm_within_bound,
    })
}

pub fn run_converge(config: &ExperimentConfig, ctx: &mut RunContext) -> Result<ConvergenceReport> {
    let report = convergence_study(config)?;
    let kernel = config.kernel()?;
    let spec = config.covariance_spec(&kernel)?;
    let hs = HalfSpace::new(&kernel, config.half_box()?)?;
    let q_inf = limit(&kernel, &spec, config.d(), config.limit_points())?.halfspace_field(&config.probes)?;
    ctx.write("q_limit.csv", q_inf.to_csv().as_bytes())?;
    let prop = CovariancePropagator::factored(&hs, &spec)?;
    let mut table = String::from("t,relative,max_abs,uu,uv,vu,vv\n");
    for (i, (&t, e)) in config.times.iter().zip(&report.errors).enumerate() {
        let q = prop.propagate(&config.probes, t)?;
        ctx.write(&format!("q_t{i:03}.csv"), q.to_csv().as_bytes())?;
        let b = e.per_block;
        table.push_str(&format!(
            "{t},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            e.relative, e.max_abs, b[0][0], b[0][1], b[1][0], b[1][1]
        ));
    }
    ctx.write("errors.csv", table.as_bytes())?;
    ctx.write_json("converge.json", &report)?;
    Ok(report)
}
