use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CrystalError, Result};
use crate::lattice::TorusGrid;
use crate::spectral::InteractionKernel;
use crate::CMat;

/// Frequencies below this are treated as acoustic (on the zero set of the symbol).
pub const ACOUSTIC_EPS: f64 = 1e-9;
/// Eigenvalues of the symbol down to this are clamped to zero.
const CLAMP_EPS: f64 = 1e-12;
/// Slopes smaller than this count as stationary.
const SLOPE_EPS: f64 = 1e-9;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeMethod {
    /// `sign(sin theta_1)` for nearest-neighbour kernels, finite differences otherwise.
    Auto,
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct Band {
    pub omega: f64,
    pub multiplicity: usize,
    pub projection: CMat,
    /// `sign(d omega / d theta_1)` in `{-1, 0, 1}`.
    pub slope_sign: i8,
}

#[derive(Debug, Clone)]
pub struct SpectralPoint {
    pub theta: Vec<f64>,
    pub symbol: CMat,
    pub bands: Vec<Band>,
}

impl SpectralPoint {
    /// Spectral decomposition of a Hermitian non-negative symbol.
    pub fn from_symbol(theta: Vec<f64>, symbol: CMat) -> Result<Self> {
        let n = symbol.nrows();
        let eig = SymmetricEigen::new(symbol.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        if lambda[0] < -CLAMP_EPS {
            return Err(CrystalError::NegativeSymbol {
                theta,
                eigenvalue: lambda[0],
            });
        }
        let omega: Vec<f64> = lambda.iter().map(|l| l.max(0.0).sqrt()).collect();
        let tol = 1e-8 * (1.0 + omega[n - 1]);
        let mut bands: Vec<Band> = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && omega[end] - omega[end - 1] <= tol {
                end += 1;
            }
            let mut proj = CMat::zeros(n, n);
            for &i in &order[start..end] {
                let v = eig.eigenvectors.column(i);
                proj += &v * v.adjoint();
            }
            let mean = omega[start..end].iter().sum::<f64>() / (end - start) as f64;
            bands.push(Band {
                omega: mean,
                multiplicity: end - start,
                projection: proj,
                slope_sign: 0,
            });
            start = end;
        }
        Ok(Self {
            theta,
            symbol,
            bands,
        })
    }

    pub fn dim(&self) -> usize {
        self.symbol.nrows()
    }

    /// `sum_sigma f(omega_sigma) Pi_sigma`.
    pub fn matrix_function(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        for b in &self.bands {
            out += &b.projection * Complex64::from(f(b.omega));
        }
        out
    }

    /// Like [`Self::matrix_function`] for functions singular at `omega = 0`;
    /// fails at acoustic points.
    pub fn matrix_function_positive(&self, f: impl Fn(f64) -> f64) -> Result<CMat> {
        if let Some(b) = self.bands.iter().find(|b| b.omega < ACOUSTIC_EPS) {
            return Err(CrystalError::AcousticPoint {
                theta: self.theta.clone(),
                omega: b.omega,
            });
        }
        Ok(self.matrix_function(f))
    }

    pub fn omega_matrix(&self) -> CMat {
        self.matrix_function(|w| w)
    }

    /// `sin(Omega t) Omega^{-1}` via `t sinc(omega t)`, finite at acoustic points.
    pub fn sin_over_omega(&self, t: f64) -> CMat {
        self.matrix_function(|w| t * sinc(w * t))
    }

    pub fn min_omega(&self) -> f64 {
        self.bands[0].omega
    }

    pub fn max_omega(&self) -> f64 {
        self.bands[self.bands.len() - 1].omega
    }
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Spectral data of a kernel on every node of a torus grid.
#[derive(Debug, Clone)]
pub struct SpectralTable {
    grid: TorusGrid,
    n: usize,
    points: Vec<SpectralPoint>,
}

impl SpectralTable {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &SpectralPoint {
        &self.points[k]
    }

    pub fn points(&self) -> &[SpectralPoint] {
        &self.points
    }

    pub fn max_omega(&self) -> f64 {
        self.points
            .iter()
            .map(SpectralPoint::max_omega)
            .fold(0.0, f64::max)
    }

    pub fn min_omega(&self) -> f64 {
        self.points
            .iter()
            .map(SpectralPoint::min_omega)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn build_spectral_table(
    kernel: &InteractionKernel,
    grid: &TorusGrid,
    slopes: SlopeMethod,
) -> Result<SpectralTable> {
    if grid.dim() != kernel.dim() {
        return Err(CrystalError::InvalidParameter(format!(
            "grid is {}-dimensional, kernel is {}-dimensional",
            grid.dim(),
            kernel.dim()
        )));
    }
    let analytic = slopes == SlopeMethod::Auto && kernel.is_nearest_neighbor();
    let points = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let theta = grid.theta(k);
            let mut p = SpectralPoint::from_symbol(theta.clone(), kernel.symbol(&theta))?;
            if analytic {
                let s = theta[0].sin();
                let sign = if s.abs() < SLOPE_EPS { 0 } else { s.signum() as i8 };
                for b in &mut p.bands {
                    b.slope_sign = sign;
                }
            } else {
                fill_slopes_fd(kernel, &mut p);
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralTable {
        grid: grid.clone(),
        n: kernel.components(),
        points,
    })
}

fn sorted_omegas(kernel: &InteractionKernel, theta: &[f64]) -> Vec<f64> {
    let eig = SymmetricEigen::new(kernel.symbol(theta));
    let mut w: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    w.sort_by(f64::total_cmp);
    w
}

fn fill_slopes_fd(kernel: &InteractionKernel, p: &mut SpectralPoint) {
    let mut plus = p.theta.clone();
    let mut minus = p.theta.clone();
    plus[0] += FD_STEP;
    minus[0] -= FD_STEP;
    let wp = sorted_omegas(kernel, &plus);
    let wm = sorted_omegas(kernel, &minus);
    let mut start = 0;
    for b in &mut p.bands {
        let end = start + b.multiplicity;
        let slope = (start..end).map(|i| wp[i] - wm[i]).sum::<f64>()
            / (2.0 * FD_STEP * b.multiplicity as f64);
        b.slope_sign = if slope.abs() < SLOPE_EPS {
            0
        } else {
            slope.signum() as i8
        };
        start = end;
    }
}

/// Upper bound on the group velocity `max_sigma sup_theta |grad omega_sigma|`.
///
/// Exact for nearest-neighbour kernels (`sqrt(max gamma)`); otherwise the
/// maximum of the Hellmann-Feynman gradient over `grid`, padded by 5%.
pub fn group_velocity_bound(kernel: &InteractionKernel, grid: &TorusGrid) -> Result<f64> {
    if let crate::spectral::KernelFamily::NearestNeighbor { gamma, .. } = kernel.family() {
        return Ok(gamma.iter().fold(0.0f64, |a, &g| a.max(g)).sqrt());
    }
    let d = kernel.dim();
    let best = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let theta = grid.theta(k);
            let p = SpectralPoint::from_symbol(theta.clone(), kernel.symbol(&theta))?;
            let derivs: Vec<CMat> = (0..d).map(|i| kernel.symbol_derivative(&theta, i)).collect();
            let mut best = 0.0f64;
            for b in p.bands.iter().filter(|b| b.omega > 1e-6) {
                let g2: f64 = derivs
                    .iter()
                    .map(|dv| {
                        let dl = (&b.projection * dv).trace().re / b.multiplicity as f64;
                        (dl / (2.0 * b.omega)).powi(2)
                    })
                    .sum();
                best = best.max(g2.sqrt());
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(best * 1.05)
}
