use serde::{Deserialize, Serialize};

use crate::dynamics::{FieldState, HalfSpace, TestFunction};
use crate::error::{invalid, Result};
use crate::experiments::{fit_line, fmt_f64, ExperimentConfig, LineFit, RunContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub test_function: TestFunction,
    pub times: Vec<f64>,
    /// `sup_z |Phi(z, t)|` with `|.|` the Euclidean norm of the `2n`-vector.
    pub sup: Vec<f64>,
    /// Fraction of `sum |Phi|^2` further than `v t` from the support of
    /// `Psi` and of its mirror image.
    pub outside_cone: Vec<f64>,
    pub fit: LineFit,
    pub expected_slope: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub cone_speed: f64,
    pub series: Vec<DecaySeries>,
    pub passed: bool,
}

/// Per-axis `[lo, hi]` bounds of the support, on the doubled box with signed
/// coordinates.
fn support_bounds(psi: &FieldState) -> Vec<(i64, i64)> {
    let d = psi.dim();
    let n = psi.n;
    let mut b = vec![(i64::MAX, i64::MIN); d];
    for s in 0..psi.sites() {
        let nonzero = (0..n).any(|k| psi.u[s * n + k] != 0.0 || psi.v[s * n + k] != 0.0);
        if nonzero {
            for (axis, c) in psi.lbox.half_coords(s).into_iter().enumerate() {
                b[axis] = (b[axis].0.min(c), b[axis].1.max(c));
            }
        }
    }
    b
}

fn distance_to(bounds: &[(i64, i64)], z: &[i64]) -> f64 {
    bounds
        .iter()
        .zip(z)
        .map(|(&(lo, hi), &c)| {
            let e = if c < lo { lo - c } else if c > hi { c - hi } else { 0 };
            (e * e) as f64
        })
        .sum::<f64>()
        .sqrt()
}

fn phi_norms(phi: &FieldState) -> Vec<f64> {
    let n = phi.n;
    (0..phi.sites())
        .map(|s| (0..n).map(|k| phi.u[s * n + k].powi(2) + phi.v[s * n + k].powi(2)).sum())
        .collect()
}

/// Sup-norm decay of the adjoint evolution `Phi = U'_+(t) Psi` and the mass
/// it leaves outside the light cone of speed `hs.group_velocity`.
pub fn decay_study(
    hs: &HalfSpace,
    test_functions: &[TestFunction],
    times: &[f64],
    slope_tolerance: f64,
    cone_tolerance: f64,
) -> Result<DecayReport> {
    if test_functions.is_empty() || times.len() < 3 {
        return invalid("decay needs test functions and at least three times");
    }
    if times.iter().any(|&t| t <= 0.0) {
        return invalid("decay times must be positive");
    }
    let d = hs.half.dim();
    let v = hs.group_velocity;
    let expected_slope = -(d as f64) / 2.0;
    let mut series = Vec::new();
    for tf in test_functions {
        for &t in times {
            hs.check_guard(t, tf.reach())?;
        }
        let psi = tf.build(&hs.half, hs.n())?;
        let bounds = support_bounds(&psi);
        let mirror: Vec<(i64, i64)> = bounds
            .iter()
            .enumerate()
            .map(|(axis, &(lo, hi))| if axis == 0 { (-hi, -lo) } else { (lo, hi) })
            .collect();
        let mut sup = Vec::new();
        let mut outside_cone = Vec::new();
        for &t in times {
            let phi = hs.adjoint(&psi, t)?;
            let norms = phi_norms(&phi);
            sup.push(norms.iter().cloned().fold(0.0, f64::max).sqrt());
            let mut total = 0.0;
            let mut outside = 0.0;
            for (s, m) in norms.iter().enumerate() {
                let z = phi.lbox.signed_coords(s);
                total += m;
                if distance_to(&bounds, &z).min(distance_to(&mirror, &z)) > v * t {
                    outside += m;
                }
            }
            outside_cone.push(if total > 0.0 { outside / total } else { 0.0 });
        }
        let logt: Vec<f64> = times.iter().map(|t| t.ln()).collect();
        let logs: Vec<f64> = sup.iter().map(|s| s.ln()).collect();
        let fit = fit_line(&logt, &logs)?;
        let passed = (fit.slope - expected_slope).abs() <= slope_tolerance
            && outside_cone.iter().all(|&m| m <= cone_tolerance);
        series.push(DecaySeries {
            test_function: tf.clone(),
            times: times.to_vec(),
            sup,
            outside_cone,
            fit,
            expected_slope,
            passed,
        });
    }
    Ok(DecayReport {
        cone_speed: v,
        passed: series.iter().all(|s| s.passed),
        series,
    })
}

pub fn run_decay(config: &ExperimentConfig, ctx: &mut RunContext) -> Result<DecayReport> {
    let hs = HalfSpace::new(&config.kernel()?, config.half_box()?)?;
    let tol = &config.tolerances;
    let report = decay_study(&hs, &config.test_functions, &config.times, tol.decay_slope, tol.cone_mass)?;
    let mut csv = String::from("test_function,t,sup,outside_cone\n");
    for (i, s) in report.series.iter().enumerate() {
        for ((t, sup), m) in s.times.iter().zip(&s.sup).zip(&s.outside_cone) {
            csv.push_str(&format!("{i},{t},{},{}\n", fmt_f64(*sup), fmt_f64(*m)));
        }
    }
    ctx.write("decay.csv", csv.as_bytes())?;
    ctx.write_json("decay.json", &report)?;
    Ok(report)
}
