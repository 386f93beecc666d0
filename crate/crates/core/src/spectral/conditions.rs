use nalgebra::linalg::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::TorusGrid;
use crate::spectral::InteractionKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionStatus {
    VerifiedExact,
    VerifiedSampled,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub status: ConditionStatus,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Threshold for `det V^` and band frequencies near the zero set.
    pub eps0: f64,
    /// Threshold for `|det Hess omega|`.
    pub eps_hess: f64,
    /// Variance threshold for constant band sums and differences.
    pub eps_const: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps0: 1e-9,
            eps_hess: 1e-6,
            eps_const: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalScan {
    pub grid_points: usize,
    /// Nodes with `det V^(theta) < eps0`.
    pub near_zero_set: usize,
    /// Nodes where some band has `|det Hess| < eps_hess`.
    pub degenerate_hessian: usize,
    /// Nodes where two distinct bands come within `1e-6`.
    pub near_crossing: usize,
    pub examples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub d: usize,
    pub n: usize,
    pub grid: TorusGrid,
    pub conditions: Vec<ConditionEntry>,
    pub critical: CriticalScan,
    /// `int ||V^{-1}||` estimates on the refinement ladder `N, 2N, 4N`.
    pub e6_estimates: Vec<f64>,
}

impl ConditionReport {
    pub fn status(&self, name: &str) -> Option<ConditionStatus> {
        self.conditions
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.status)
    }

    pub fn any_violated(&self) -> bool {
        self.conditions
            .iter()
            .any(|c| c.status == ConditionStatus::Violated)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "d = {}, n = {}, grid {:?} (offset = {})\n",
            self.d, self.n, self.grid.points, self.grid.offset
        );
        for c in &self.conditions {
            s.push_str(&format!("{:<4} {:<17} {}\n", c.name, status_label(c.status), c.detail));
        }
        s.push_str(&format!(
            "critical scan: {} nodes, {} near det V = 0, {} with flat Hessian, {} near crossings\n",
            self.critical.grid_points,
            self.critical.near_zero_set,
            self.critical.degenerate_hessian,
            self.critical.near_crossing
        ));
        s
    }
}

fn status_label(s: ConditionStatus) -> &'static str {
    match s {
        ConditionStatus::VerifiedExact => "verified-exact",
        ConditionStatus::VerifiedSampled => "verified-sampled",
        ConditionStatus::Violated => "violated",
        ConditionStatus::NotApplicable => "not-applicable",
    }
}

fn entry(name: &str, status: ConditionStatus, detail: impl Into<String>) -> ConditionEntry {
    ConditionEntry {
        name: name.into(),
        status,
        detail: detail.into(),
        witness_theta: None,
        value: None,
    }
}

fn eigenvalues(kernel: &InteractionKernel, theta: &[f64]) -> Vec<f64> {
    let mut l: Vec<f64> = SymmetricEigen::new(kernel.symbol(theta))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    l.sort_by(f64::total_cmp);
    l
}

fn omegas(kernel: &InteractionKernel, theta: &[f64]) -> Vec<f64> {
    eigenvalues(kernel, theta)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

const HESS_STEP: f64 = 1e-3;

/// Finite-difference Hessian determinants of every sorted band label.
fn hessian_dets(kernel: &InteractionKernel, theta: &[f64]) -> Vec<f64> {
    let d = theta.len();
    let h = HESS_STEP;
    let at = |shift: &[(usize, f64)]| {
        let mut t = theta.to_vec();
        for &(i, s) in shift {
            t[i] += s;
        }
        omegas(kernel, &t)
    };
    let w0 = omegas(kernel, theta);
    let n = w0.len();
    let mut hess = vec![nalgebra::DMatrix::<f64>::zeros(d, d); n];
    for i in 0..d {
        let p = at(&[(i, h)]);
        let m = at(&[(i, -h)]);
        for k in 0..n {
            hess[k][(i, i)] = (p[k] - 2.0 * w0[k] + m[k]) / (h * h);
        }
        for j in i + 1..d {
            let pp = at(&[(i, h), (j, h)]);
            let pm = at(&[(i, h), (j, -h)]);
            let mp = at(&[(i, -h), (j, h)]);
            let mm = at(&[(i, -h), (j, -h)]);
            for k in 0..n {
                let v = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h);
                hess[k][(i, j)] = v;
                hess[k][(j, i)] = v;
            }
        }
    }
    hess.into_iter().map(|m| m.determinant()).collect()
}

struct PointScan {
    min_eig: f64,
    det: f64,
    omegas: Vec<f64>,
    hess: Vec<f64>,
    regular: bool,
    crossing: bool,
}

/// Checks E0-E6 on `grid`. E0-E2 are decided exactly from the support table;
/// the spectral conditions are sampled.
pub fn validate_conditions(
    kernel: &InteractionKernel,
    grid: &TorusGrid,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let flags = kernel.flags();
    let mut conditions = vec![
        entry(
            "E0",
            if flags.even_in_normal_axis {
                ConditionStatus::VerifiedExact
            } else {
                ConditionStatus::Violated
            },
            "V(z) = V(z~) on the support table",
        ),
        entry(
            "E1",
            ConditionStatus::VerifiedExact,
            format!("finite support, radius {}", kernel.radius()),
        ),
        entry(
            "E2",
            if flags.symmetric {
                ConditionStatus::VerifiedExact
            } else {
                ConditionStatus::Violated
            },
            "V_lk(-z) = V_kl(z) on the support table",
        ),
    ];

    let scans: Vec<PointScan> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let theta = grid.theta(k);
            let lambda = eigenvalues(kernel, &theta);
            let w: Vec<f64> = lambda.iter().map(|l| l.max(0.0).sqrt()).collect();
            let det: f64 = lambda.iter().product();
            let crossing = w.windows(2).any(|p| p[1] - p[0] < 1e-6 && p[1] - p[0] > 1e-8);
            let regular = w[0] > 1e-6 && !crossing;
            let hess = if regular {
                hessian_dets(kernel, &theta)
            } else {
                Vec::new()
            };
            PointScan {
                min_eig: lambda[0],
                det,
                omegas: w,
                hess,
                regular,
                crossing,
            }
        })
        .collect();

    // E3
    let (arg_min, min_eig) = scans
        .iter()
        .enumerate()
        .map(|(k, s)| (k, s.min_eig))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let mut e3 = if min_eig < -1e-12 {
        entry(
            "E3",
            ConditionStatus::Violated,
            format!("negative eigenvalue {min_eig:e}"),
        )
    } else {
        entry(
            "E3",
            ConditionStatus::VerifiedSampled,
            format!("min eigenvalue {min_eig:e} on {} nodes", grid.len()),
        )
    };
    e3.witness_theta = Some(grid.theta(arg_min));
    e3.value = Some(min_eig);
    let e3_ok = e3.status != ConditionStatus::Violated;
    conditions.push(e3);

    let n = kernel.components();
    let regular: Vec<&PointScan> = scans.iter().filter(|s| s.regular).collect();

    // E4
    let mut flat_nodes = 0usize;
    let e4 = if !e3_ok {
        entry("E4", ConditionStatus::NotApplicable, "requires E3")
    } else if regular.is_empty() {
        entry("E4", ConditionStatus::NotApplicable, "no regular grid nodes")
    } else {
        let mut worst = Vec::with_capacity(n);
        for k in 0..n {
            let flat = regular
                .iter()
                .filter(|s| s.hess[k].abs() < tol.eps_hess)
                .count();
            worst.push(flat as f64 / regular.len() as f64);
        }
        flat_nodes = regular
            .iter()
            .filter(|s| s.hess.iter().any(|h| h.abs() < tol.eps_hess))
            .count();
        let fraction = worst.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut e = if fraction >= 1.0 {
            entry(
                "E4",
                ConditionStatus::Violated,
                "Hessian determinant vanishes on every sampled regular node",
            )
        } else {
            entry(
                "E4",
                ConditionStatus::VerifiedSampled,
                format!("near-degenerate Hessian fraction {fraction:.4}"),
            )
        };
        e.value = Some(fraction);
        e
    };
    conditions.push(e4);

    // E5: distinct band labels only
    let e5 = if !e3_ok {
        entry("E5", ConditionStatus::NotApplicable, "requires E3")
    } else if n == 1 {
        entry("E5", ConditionStatus::NotApplicable, "single band, no band pairs")
    } else if regular.is_empty() {
        entry("E5", ConditionStatus::NotApplicable, "no regular grid nodes")
    } else {
        let mut violation = None;
        'outer: for a in 0..n {
            for b in a + 1..n {
                let same = regular
                    .iter()
                    .all(|s| (s.omegas[a] - s.omegas[b]).abs() < 1e-8);
                if same {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let vals: Vec<f64> = regular
                        .iter()
                        .map(|s| s.omegas[a] + sign * s.omegas[b])
                        .collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let var =
                        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                    if var < tol.eps_const && mean.abs() > tol.eps_const.sqrt() {
                        violation = Some((a, b, sign, mean));
                        break 'outer;
                    }
                }
            }
        }
        match violation {
            Some((a, b, sign, mean)) => {
                let mut e = entry(
                    "E5",
                    ConditionStatus::Violated,
                    format!(
                        "omega_{a} {} omega_{b} is constant {mean:.6}",
                        if sign > 0.0 { "+" } else { "-" }
                    ),
                );
                e.value = Some(mean);
                e
            }
            None => entry(
                "E5",
                ConditionStatus::VerifiedSampled,
                "no constant band sum or difference",
            ),
        }
    };
    conditions.push(e5);

    // E6
    let mut e6_estimates = Vec::new();
    let e6 = if !e3_ok {
        entry("E6", ConditionStatus::NotApplicable, "requires E3")
    } else {
        let base = TorusGrid::new(grid.points.clone(), true)?;
        for factor in [1, 2, 4] {
            e6_estimates.push(inverse_norm_integral(kernel, &base.refined(factor)));
        }
        let (e1, e2, e4) = (e6_estimates[0], e6_estimates[1], e6_estimates[2]);
        let d1 = e2 - e1;
        let d2 = e4 - e2;
        let growing = !e4.is_finite() || e4 > 2.0 * e1;
        let stalled = d1 > 1e-10 * e1.abs() && d2 > 0.75 * d1;
        let mut e = if growing || stalled {
            entry(
                "E6",
                ConditionStatus::Violated,
                format!("integral of ||V^-1|| diverges under refinement: {e1:.4e}, {e2:.4e}, {e4:.4e}"),
            )
        } else {
            entry(
                "E6",
                ConditionStatus::VerifiedSampled,
                format!("integral of ||V^-1|| ~ {e4:.6e}"),
            )
        };
        e.value = Some(e4);
        e
    };
    conditions.push(e6);

    let mut examples = Vec::new();
    let mut near_zero = 0;
    for (k, s) in scans.iter().enumerate() {
        if s.det < tol.eps0 {
            near_zero += 1;
            if examples.len() < 8 {
                examples.push(grid.theta(k));
            }
        }
    }
    let critical = CriticalScan {
        grid_points: grid.len(),
        near_zero_set: near_zero,
        degenerate_hessian: flat_nodes,
        near_crossing: scans.iter().filter(|s| s.crossing).count(),
        examples,
    };
    Ok(ConditionReport {
        d: kernel.dim(),
        n,
        grid: grid.clone(),
        conditions,
        critical,
        e6_estimates,
    })
}

/// Offset-grid trapezoidal estimate of the normalised integral of
/// `||V^(theta)^{-1}||` (spectral norm).
fn inverse_norm_integral(kernel: &InteractionKernel, grid: &TorusGrid) -> f64 {
    let sum: f64 = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let l = eigenvalues(kernel, &grid.theta(k))[0];
            if l <= 0.0 {
                f64::INFINITY
            } else {
                1.0 / l
            }
        })
        .sum();
    sum * grid.weight()
}
