use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::experiments::{fmt_f64, ExperimentConfig, RunContext};
use crate::spectral::{InteractionKernel, SpectralPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    /// Axis the path runs along; the other coordinates are 0.
    pub axis: usize,
    pub theta: Vec<f64>,
    pub band: usize,
    pub multiplicity: usize,
    pub omega: f64,
    /// `d omega / d theta_1`.
    pub group_velocity: f64,
    /// `d omega / d theta_axis`.
    pub path_slope: f64,
}

/// Bands along `theta_axis in [0, pi]` for every axis, `points` samples per
/// path. Slopes come from the Hellmann-Feynman formula and are 0 at acoustic
/// points.
pub fn dispersion_rows(kernel: &InteractionKernel, points: usize) -> Result<Vec<DispersionRow>> {
    if points < 2 {
        return invalid("dispersion paths need at least two points");
    }
    let d = kernel.dim();
    let mut rows = Vec::new();
    for axis in 0..d {
        for j in 0..points {
            let mut theta = vec![0.0; d];
            theta[axis] = PI * j as f64 / (points - 1) as f64;
            let p = SpectralPoint::from_symbol(theta.clone(), kernel.symbol(&theta))?;
            let d_normal = kernel.symbol_derivative(&theta, 0);
            let d_path = kernel.symbol_derivative(&theta, axis);
            for (band, b) in p.bands.iter().enumerate() {
                let slope = |dv: &crate::CMat| {
                    if b.omega < 1e-9 {
                        0.0
                    } else {
                        (&b.projection * dv).trace().re / (b.multiplicity as f64 * 2.0 * b.omega)
                    }
                };
                rows.push(DispersionRow {
                    axis,
                    theta: theta.clone(),
                    band,
                    multiplicity: b.multiplicity,
                    omega: b.omega,
                    group_velocity: slope(&d_normal),
                    path_slope: slope(&d_path),
                });
            }
        }
    }
    Ok(rows)
}

pub fn dispersion_csv(rows: &[DispersionRow]) -> String {
    let d = rows.first().map_or(0, |r| r.theta.len());
    let mut s = String::from("axis");
    for i in 0..d {
        s.push_str(&format!(",theta_{i}"));
    }
    s.push_str(",band,multiplicity,omega,d_omega_d_theta_1,d_omega_d_path\n");
    for r in rows {
        s.push_str(&r.axis.to_string());
        for t in &r.theta {
            s.push(',');
            s.push_str(&fmt_f64(*t));
        }
        s.push_str(&format!(
            ",{},{},{},{},{}\n",
            r.band,
            r.multiplicity,
            fmt_f64(r.omega),
            fmt_f64(r.group_velocity),
            fmt_f64(r.path_slope)
        ));
    }
    s
}

pub fn run_dispersion(config: &ExperimentConfig, ctx: &mut RunContext) -> Result<Vec<DispersionRow>> {
    let rows = dispersion_rows(&config.kernel()?, config.dispersion_points())?;
    ctx.write("dispersion.csv", dispersion_csv(&rows).as_bytes())?;
    Ok(rows)
}
