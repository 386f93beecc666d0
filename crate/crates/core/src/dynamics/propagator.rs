use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CrystalError, Result};
use crate::fft::LatticeFft;
use crate::lattice::LatticeBox;
use crate::spectral::{SpectralPoint, SpectralTable};
use crate::CMat;

/// `G^_t(theta) = [[cos Omega t, sin(Omega t) Omega^{-1}], [-Omega sin Omega t, cos Omega t]]`.
pub fn propagator_at(p: &SpectralPoint, t: f64) -> CMat {
    let n = p.dim();
    let c = p.matrix_function(|w| (w * t).cos());
    let s = p.sin_over_omega(t);
    let ms = p.matrix_function(|w| -w * (w * t).sin());
    let mut g = CMat::zeros(2 * n, 2 * n);
    g.view_mut((0, 0), (n, n)).copy_from(&c);
    g.view_mut((0, n), (n, n)).copy_from(&s);
    g.view_mut((n, 0), (n, n)).copy_from(&ms);
    g.view_mut((n, n), (n, n)).copy_from(&c);
    g
}

/// Propagator symbol on every node of a spectral table.
#[derive(Debug, Clone)]
pub struct PropagatorSymbol {
    pub t: f64,
    pub n: usize,
    pub blocks: Vec<CMat>,
}

pub fn propagator_hat(table: &SpectralTable, t: f64) -> PropagatorSymbol {
    PropagatorSymbol {
        t,
        n: table.components(),
        blocks: table
            .points()
            .par_iter()
            .map(|p| propagator_at(p, t))
            .collect(),
    }
}

pub(crate) fn check_grid(table: &SpectralTable, lbox: &LatticeBox) -> Result<()> {
    let g = table.grid();
    if g.offset || g.points != lbox.extents {
        return Err(CrystalError::GridMismatch {
            expected: lbox.extents.clone(),
            found: g.points.clone(),
            offset: g.offset,
        });
    }
    Ok(())
}

/// Forward transform of `2n` site-major real channels (`u` then `v`).
pub(crate) fn channels_to_torus(
    fft: &LatticeFft,
    n: usize,
    u: &[f64],
    v: &[f64],
) -> Vec<Vec<Complex64>> {
    (0..2 * n)
        .into_par_iter()
        .map(|c| {
            let (src, k) = if c < n { (u, c) } else { (v, c - n) };
            let mut buf: Vec<Complex64> = src
                .iter()
                .skip(k)
                .step_by(n)
                .map(|&x| Complex64::new(x, 0.0))
                .collect();
            fft.to_torus(&mut buf);
            buf
        })
        .collect()
}

/// Inverse of [`channels_to_torus`]; returns `(u, v, max |imag|)`.
pub(crate) fn channels_to_lattice(
    fft: &LatticeFft,
    n: usize,
    mut hat: Vec<Vec<Complex64>>,
) -> (Vec<f64>, Vec<f64>, f64) {
    hat.par_iter_mut().for_each(|b| fft.to_lattice(b));
    let sites = hat[0].len();
    let mut u = vec![0.0; sites * n];
    let mut v = vec![0.0; sites * n];
    let mut imag = 0.0f64;
    for (c, buf) in hat.iter().enumerate() {
        let (dst, k) = if c < n { (&mut u, c) } else { (&mut v, c - n) };
        for (s, z) in buf.iter().enumerate() {
            dst[s * n + k] = z.re;
            imag = imag.max(z.im.abs());
        }
    }
    (u, v, imag)
}

/// Multiplies the stacked `2n`-vector at every torus node by `m(node)`.
pub(crate) fn apply_pointwise(
    hat: &mut [Vec<Complex64>],
    m: impl Fn(usize) -> CMat + Sync,
) {
    let len = hat[0].len();
    let ch = hat.len();
    let results: Vec<Vec<Complex64>> = (0..len)
        .into_par_iter()
        .map(|k| {
            let g = m(k);
            (0..ch)
                .map(|r| (0..ch).map(|c| g[(r, c)] * hat[c][k]).sum())
                .collect()
        })
        .collect();
    for (k, col) in results.into_iter().enumerate() {
        for (c, x) in col.into_iter().enumerate() {
            hat[c][k] = x;
        }
    }
}

/// Position-space Green function `G_t(z)` on a periodic box, one real
/// `2n x 2n` matrix per site.
pub fn green_function(table: &SpectralTable, t: f64, lbox: &LatticeBox) -> Result<Vec<DMatrix<f64>>> {
    check_grid(table, lbox)?;
    let n2 = 2 * table.components();
    let sym = propagator_hat(table, t);
    let fft = LatticeFft::new(&lbox.extents);
    let entries: Vec<Vec<Complex64>> = (0..n2 * n2)
        .into_par_iter()
        .map(|e| {
            let (r, c) = (e / n2, e % n2);
            let mut buf: Vec<Complex64> = sym.blocks.iter().map(|g| g[(r, c)]).collect();
            fft.to_lattice(&mut buf);
            buf
        })
        .collect();
    let mut imag = 0.0f64;
    let mut out = vec![DMatrix::zeros(n2, n2); lbox.sites()];
    for (e, buf) in entries.iter().enumerate() {
        let (r, c) = (e / n2, e % n2);
        for (s, z) in buf.iter().enumerate() {
            out[s][(r, c)] = z.re;
            imag = imag.max(z.im.abs());
        }
    }
    if imag > 1e-10 {
        return Err(CrystalError::Format(format!(
            "Green function has imaginary part {imag:e}"
        )));
    }
    Ok(out)
}
