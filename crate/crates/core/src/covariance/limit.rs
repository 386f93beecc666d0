use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::covariance::{CovarianceField, Provenance};
use crate::error::{invalid, CrystalError, Result};
use crate::fft::LatticeFft;
use crate::fields::CovarianceSpec;
use crate::lattice::{LatticeBox, LatticePoint, TorusGrid};
use crate::spectral::{build_spectral_table, InteractionKernel, SlopeMethod, SpectralPoint, SpectralTable};
use crate::CMat;

const REAL_TOL: f64 = 1e-9;

/// `C(theta) = [[0, Omega^{-1}], [-Omega, 0]]`; fails at acoustic points.
pub fn c_matrix(p: &SpectralPoint) -> Result<CMat> {
    let n = p.dim();
    let inv = p.matrix_function_positive(|w| 1.0 / w)?;
    let om = p.omega_matrix();
    let mut c = CMat::zeros(2 * n, 2 * n);
    c.view_mut((0, n), (n, n)).copy_from(&inv);
    c.view_mut((n, 0), (n, n)).copy_from(&(-om));
    Ok(c)
}

fn block_diag(p: &CMat) -> CMat {
    let n = p.nrows();
    let mut out = CMat::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(p);
    out.view_mut((n, n), (n, n)).copy_from(p);
    out
}

/// `(q^+, q^-)` at one node:
/// `q^+ = 1/4 sum P (q0 + C q0 C*) P` and
/// `q^- = i/4 sum sign(d omega / d theta_1) P (C q0 - q0 C*) P`
/// with `P = diag(Pi_sigma, Pi_sigma)`.
pub fn limit_symbol_at(p: &SpectralPoint, q0: &CMat) -> Result<(CMat, CMat)> {
    let c = c_matrix(p)?;
    let cq = &c * q0;
    let even = q0 + &cq * c.adjoint();
    let odd = &cq - q0 * c.adjoint();
    let dim = q0.nrows();
    let mut plus = CMat::zeros(dim, dim);
    let mut minus = CMat::zeros(dim, dim);
    for b in &p.bands {
        let pp = block_diag(&b.projection);
        plus += &pp * &even * &pp;
        if b.slope_sign != 0 {
            minus += (&pp * &odd * &pp) * Complex64::from(b.slope_sign as f64);
        }
    }
    Ok((plus * Complex64::from(0.25), minus * Complex64::new(0.0, 0.25)))
}

/// Closed-form limit symbol for nearest-neighbour kernels, built entrywise
/// from the diagonal dispersion `omega_k(theta) = V^_kk(theta)^{1/2}`.
/// Entries coupling components of different frequency vanish.
pub fn nn_limit_symbol(kernel: &InteractionKernel, q0: &CMat, theta: &[f64]) -> Result<CMat> {
    if !kernel.is_nearest_neighbor() {
        return invalid("closed-form limit symbol needs a nearest-neighbour kernel");
    }
    let n = kernel.components();
    let v = kernel.symbol(theta);
    let omega: Vec<f64> = (0..n).map(|k| v[(k, k)].re.max(0.0).sqrt()).collect();
    if let Some(&w) = omega.iter().find(|&&w| w < crate::spectral::ACOUSTIC_EPS) {
        return Err(CrystalError::AcousticPoint {
            theta: theta.to_vec(),
            omega: w,
        });
    }
    let tol = 1e-8 * (1.0 + omega.iter().cloned().fold(0.0, f64::max));
    let s = {
        let x = theta[0].sin();
        if x.abs() < 1e-15 {
            0.0
        } else {
            x.signum()
        }
    };
    let i = Complex64::i();
    let mut out = CMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        for l in 0..n {
            if (omega[k] - omega[l]).abs() > tol {
                continue;
            }
            let w = omega[k];
            let a = q0[(k, l)];
            let b = q0[(n + k, n + l)];
            let c = q0[(k, n + l)];
            let cp = q0[(n + k, l)];
            let m00 = (a * w * w + b - i * s * w * (c - cp)) / (w * w);
            let m11 = m00 * w * w;
            let m01 = (c - cp) + i * (s / w) * (a * w * w + b);
            out[(k, l)] = m00 * 0.25;
            out[(n + k, n + l)] = m11 * 0.25;
            out[(k, n + l)] = m01 * 0.25;
            out[(n + k, l)] = -m01 * 0.25;
        }
    }
    Ok(out)
}

/// Limit covariance symbols on an offset torus grid together with the
/// position-space tables `q^+(z)`, `q^-(z)` for `z` in `[-N/2, N/2)^d`.
#[derive(Debug, Clone)]
pub struct LimitCovariance {
    grid: TorusGrid,
    n: usize,
    plus: Vec<CMat>,
    minus: Vec<CMat>,
    table_box: LatticeBox,
    pos_plus: Vec<DMatrix<f64>>,
    pos_minus: Vec<DMatrix<f64>>,
    max_imag: f64,
}

impl LimitCovariance {
    pub fn new(kernel: &InteractionKernel, spec: &CovarianceSpec, grid: &TorusGrid) -> Result<Self> {
        if !grid.offset {
            return invalid("limit symbols need an offset grid to avoid acoustic points");
        }
        let table = build_spectral_table(kernel, grid, SlopeMethod::Auto)?;
        Self::from_table(spec, &table)
    }

    pub fn from_table(spec: &CovarianceSpec, table: &SpectralTable) -> Result<Self> {
        let grid = table.grid().clone();
        if spec.d != grid.dim() || spec.n != table.components() {
            return invalid("covariance spec and spectral table disagree on d or n");
        }
        let pairs: Vec<(CMat, CMat)> = table
            .points()
            .par_iter()
            .map(|p| limit_symbol_at(p, &spec.symbol(&p.theta)?))
            .collect::<Result<_>>()?;
        let (plus, minus): (Vec<CMat>, Vec<CMat>) = pairs.into_iter().unzip();
        let table_box = LatticeBox::new(grid.points.clone())?;
        let (pos_plus, im1) = to_position(&grid, &table_box, &plus);
        let (pos_minus, im2) = to_position(&grid, &table_box, &minus);
        let max_imag = im1.max(im2);
        let scale = pos_plus.iter().map(|m| m.abs().max()).fold(0.0, f64::max);
        if max_imag > REAL_TOL * (1.0 + scale) {
            return Err(CrystalError::Format(format!(
                "limit covariance has imaginary part {max_imag:e}"
            )));
        }
        Ok(Self {
            grid,
            n: spec.n,
            plus,
            minus,
            table_box,
            pos_plus,
            pos_minus,
            max_imag,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn max_imag(&self) -> f64 {
        self.max_imag
    }

    pub fn symbol_plus(&self, k: usize) -> &CMat {
        &self.plus[k]
    }

    pub fn symbol_minus(&self, k: usize) -> &CMat {
        &self.minus[k]
    }

    pub fn symbol(&self, k: usize) -> CMat {
        &self.plus[k] + &self.minus[k]
    }

    fn slot(&self, w: &[i64]) -> Result<usize> {
        if w.len() != self.grid.dim()
            || w.iter()
                .zip(&self.grid.points)
                .any(|(&c, &p)| c < -(p as i64) / 2 || c >= p as i64 / 2)
        {
            return Err(CrystalError::OutOfBox { point: w.to_vec() });
        }
        Ok(self.table_box.index(w))
    }

    pub fn position_plus(&self, w: &[i64]) -> Result<&DMatrix<f64>> {
        Ok(&self.pos_plus[self.slot(w)?])
    }

    pub fn position_minus(&self, w: &[i64]) -> Result<&DMatrix<f64>> {
        Ok(&self.pos_minus[self.slot(w)?])
    }

    /// `q_inf(w) = q^+(w) + q^-(w)`.
    pub fn position(&self, w: &[i64]) -> Result<DMatrix<f64>> {
        let s = self.slot(w)?;
        Ok(&self.pos_plus[s] + &self.pos_minus[s])
    }

    /// `Q_inf(z, z') = q(z - z') - q(z - z'~) - q(z~ - z') + q(z~ - z'~)`.
    pub fn halfspace(&self, z: &LatticePoint, zp: &LatticePoint) -> Result<DMatrix<f64>> {
        let (zr, zpr) = (z.reflect(), zp.reflect());
        Ok(self.position(&z.sub(zp).0)? - self.position(&z.sub(&zpr).0)?
            - self.position(&zr.sub(zp).0)?
            + self.position(&zr.sub(&zpr).0)?)
    }

    pub fn halfspace_field(&self, probes: &[LatticePoint]) -> Result<CovarianceField> {
        let blocks = probes
            .iter()
            .flat_map(|a| probes.iter().map(move |b| (a, b)))
            .map(|(a, b)| self.halfspace(a, b))
            .collect::<Result<Vec<_>>>()?;
        CovarianceField::new(
            probes.to_vec(),
            self.n,
            blocks,
            Provenance::LimitTheoretical {
                grid_points: self.grid.points.clone(),
            },
        )
    }

    /// `Q_inf` over every site of a half-space slab as one dense matrix with
    /// index `site * 2n + i n + k`. Transverse differences are folded
    /// periodically.
    pub fn dense_halfspace(&self, half: &LatticeBox) -> Result<DMatrix<f64>> {
        let sites = half.sites();
        if sites > super::DENSE_LIMIT {
            return Err(CrystalError::SizeLimit {
                size: sites,
                limit: super::DENSE_LIMIT,
            });
        }
        let n2 = 2 * self.n;
        let fold = |mut w: Vec<i64>| {
            for axis in 1..w.len() {
                let l = half.extents[axis] as i64;
                w[axis] = w[axis].rem_euclid(l);
                if w[axis] >= (l + 1) / 2 {
                    w[axis] -= l;
                }
            }
            w
        };
        let rows: Vec<Vec<DMatrix<f64>>> = (0..sites)
            .into_par_iter()
            .map(|a| {
                let z = LatticePoint(half.coords(a));
                let zr = z.reflect();
                (0..sites)
                    .map(|b| {
                        let zp = LatticePoint(half.coords(b));
                        let zpr = zp.reflect();
                        Ok(self.position(&fold(z.sub(&zp).0))?
                            - self.position(&fold(z.sub(&zpr).0))?
                            - self.position(&fold(zr.sub(&zp).0))?
                            + self.position(&fold(zr.sub(&zpr).0))?)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(sites * n2, sites * n2);
        for (a, row) in rows.iter().enumerate() {
            for (b, m) in row.iter().enumerate() {
                out.view_mut((a * n2, b * n2), (n2, n2)).copy_from(m);
            }
        }
        Ok(out)
    }
}

/// `q(z) = N^{-d} sum_k q^(theta_k) e^{-i z.theta_k}` on an offset grid, via
/// the unshifted transform and the phase `e^{-i pi sum_i z_i / N_i}`.
fn to_position(grid: &TorusGrid, lbox: &LatticeBox, hat: &[CMat]) -> (Vec<DMatrix<f64>>, f64) {
    let dim = hat[0].nrows();
    let fft = LatticeFft::new(&grid.points);
    let shift = if grid.offset { 0.5 } else { 0.0 };
    let phases: Vec<Complex64> = (0..lbox.sites())
        .map(|s| {
            let z = lbox.signed_coords(s);
            let x: f64 = z
                .iter()
                .zip(&grid.points)
                .map(|(&c, &p)| 2.0 * std::f64::consts::PI * shift * c as f64 / p as f64)
                .sum();
            Complex64::from_polar(1.0, -x)
        })
        .collect();
    let entries: Vec<Vec<Complex64>> = (0..dim * dim)
        .into_par_iter()
        .map(|e| {
            let (r, c) = (e / dim, e % dim);
            let mut buf: Vec<Complex64> = hat.iter().map(|m| m[(r, c)]).collect();
            fft.to_lattice(&mut buf);
            buf.iter().zip(&phases).map(|(a, b)| a * b).collect()
        })
        .collect();
    let mut imag = 0.0f64;
    let mut out = vec![DMatrix::zeros(dim, dim); lbox.sites()];
    for (e, buf) in entries.iter().enumerate() {
        let (r, c) = (e / dim, e % dim);
        for (s, z) in buf.iter().enumerate() {
            out[s][(r, c)] = z.re;
            imag = imag.max(z.im.abs());
        }
    }
    (out, imag)
}
