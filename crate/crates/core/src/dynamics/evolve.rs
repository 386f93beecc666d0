use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::propagator::{
    apply_pointwise, channels_to_lattice, channels_to_torus, check_grid, green_function,
    propagator_at,
};
use crate::dynamics::{FieldState, Flavor};
use crate::error::{invalid, CrystalError, Result};
use crate::fft::LatticeFft;
use crate::lattice::{LatticeBox, TorusGrid};
use crate::spectral::{build_spectral_table, group_velocity_bound, InteractionKernel, SlopeMethod, SpectralTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HalfMethod {
    Image,
    OddExtension,
}

const IMAG_TOL: f64 = 1e-9;

fn spectral_apply(
    x: &FieldState,
    table: &SpectralTable,
    symbol: impl Fn(usize) -> crate::CMat + Sync,
) -> Result<FieldState> {
    check_grid(table, &x.lbox)?;
    let fft = LatticeFft::new(&x.lbox.extents);
    let mut hat = channels_to_torus(&fft, x.n, &x.u, &x.v);
    apply_pointwise(&mut hat, symbol);
    let (u, v, imag) = channels_to_lattice(&fft, x.n, hat);
    let scale = 1.0 + x.max_abs();
    if imag > IMAG_TOL * scale {
        return Err(CrystalError::Format(format!(
            "evolved field has imaginary part {imag:e}"
        )));
    }
    FieldState::new(x.lbox.clone(), x.n, u, v, x.flavor)
}

/// Applies precomputed per-node `2n x 2n` symbols (or their adjoints) to a
/// field on a periodic box.
pub fn apply_symbols(x: &FieldState, blocks: &[crate::CMat], adjoint: bool) -> Result<FieldState> {
    if blocks.len() != x.sites() {
        return Err(CrystalError::GridMismatch {
            expected: x.lbox.extents.clone(),
            found: vec![blocks.len()],
            offset: false,
        });
    }
    let fft = LatticeFft::new(&x.lbox.extents);
    let mut hat = channels_to_torus(&fft, x.n, &x.u, &x.v);
    if adjoint {
        apply_pointwise(&mut hat, |k| blocks[k].adjoint());
    } else {
        apply_pointwise(&mut hat, |k| blocks[k].clone());
    }
    let (u, v, imag) = channels_to_lattice(&fft, x.n, hat);
    if imag > IMAG_TOL * (1.0 + x.max_abs()) {
        return Err(CrystalError::Format(format!(
            "evolved field has imaginary part {imag:e}"
        )));
    }
    FieldState::new(x.lbox.clone(), x.n, u, v, x.flavor)
}

/// Exact evolution on the periodic box: `X^(theta, t) = G^_t(theta) X^_0(theta)`.
pub fn evolve_full(x0: &FieldState, table: &SpectralTable, t: f64) -> Result<FieldState> {
    if t == 0.0 {
        return Ok(x0.clone());
    }
    spectral_apply(x0, table, |k| propagator_at(table.point(k), t))
}

/// Odd extension of a half-space state onto the doubled box: axis-0 index
/// `k >= L1` stands for `z1 = k - 2 L1` and carries `-Y(-z1)`.
pub fn odd_extension(y: &FieldState) -> Result<FieldState> {
    let bmax = y.boundary_max();
    if bmax != 0.0 {
        return Err(CrystalError::BoundaryViolation { max: bmax });
    }
    let half = &y.lbox;
    let doubled = half.doubled();
    let l1 = half.extents[0] as i64;
    let mut x = FieldState::zeros(doubled.clone(), y.n, Flavor::Full);
    let n = y.n;
    for s in 0..half.sites() {
        let z = half.coords(s);
        if z[0] == 0 {
            continue;
        }
        let a = doubled.index(&z);
        let mut r = z.clone();
        r[0] = 2 * l1 - z[0];
        let b = doubled.index(&r);
        for k in 0..n {
            x.u[a * n + k] = y.u[s * n + k];
            x.v[a * n + k] = y.v[s * n + k];
            x.u[b * n + k] = -y.u[s * n + k];
            x.v[b * n + k] = -y.v[s * n + k];
        }
    }
    Ok(x)
}

/// Restricts a doubled-box field to the slab `z1 = 0..L1-1`, taking the odd
/// part so the wall layer is exactly zero.
pub fn restrict_half(x: &FieldState, half: &LatticeBox) -> Result<FieldState> {
    if x.lbox != half.doubled() {
        return invalid("field does not live on the doubled box");
    }
    let l2 = x.lbox.extents[0] as i64;
    let n = x.n;
    let mut y = FieldState::zeros(half.clone(), n, Flavor::Half);
    for s in 0..half.sites() {
        let z = half.coords(s);
        let a = x.lbox.index(&z);
        let mut r = z.clone();
        r[0] = (l2 - z[0]) % l2;
        let b = x.lbox.index(&r);
        for k in 0..n {
            y.u[s * n + k] = 0.5 * (x.u[a * n + k] - x.u[b * n + k]);
            y.v[s * n + k] = 0.5 * (x.v[a * n + k] - x.v[b * n + k]);
        }
    }
    Ok(y)
}

/// Half-space evolution. `table` lives on the doubled box of `y0`.
pub fn evolve_half(
    y0: &FieldState,
    table: &SpectralTable,
    t: f64,
    method: HalfMethod,
) -> Result<FieldState> {
    let half = y0.lbox.clone();
    check_grid(table, &half.doubled())?;
    match method {
        HalfMethod::OddExtension => {
            let x0 = odd_extension(y0)?;
            let xt = evolve_full(&x0, table, t)?;
            restrict_half(&xt, &half)
        }
        HalfMethod::Image => evolve_half_image(y0, table, t),
    }
}

/// `Y(z, t) = sum_{z'} [G_t(z - z') - G_t(z - z'~)] Y0(z')` by direct summation
/// with the Green function of the doubled box.
fn evolve_half_image(y0: &FieldState, table: &SpectralTable, t: f64) -> Result<FieldState> {
    let bmax = y0.boundary_max();
    if bmax != 0.0 {
        return Err(CrystalError::BoundaryViolation { max: bmax });
    }
    let half = &y0.lbox;
    let doubled = half.doubled();
    let g = green_function(table, t, &doubled)?;
    // Enforce the evenness G(z) = G(z~) exactly.
    let g: Vec<DMatrix<f64>> = (0..doubled.sites())
        .map(|s| {
            let mut r = doubled.coords(s);
            r[0] = -r[0];
            (&g[s] + &g[doubled.index(&r)]) * 0.5
        })
        .collect();
    let n = y0.n;
    let sources: Vec<(Vec<i64>, DVector<f64>)> = (0..half.sites())
        .filter_map(|s| {
            let z = half.coords(s);
            let x = DVector::from_iterator(
                2 * n,
                (0..n).map(|k| y0.u[s * n + k]).chain((0..n).map(|k| y0.v[s * n + k])),
            );
            (z[0] > 0 && x.iter().any(|&c| c != 0.0)).then_some((z, x))
        })
        .collect();
    let values: Vec<DVector<f64>> = (0..half.sites())
        .into_par_iter()
        .map(|s| {
            let z = half.coords(s);
            let mut acc = DVector::zeros(2 * n);
            if z[0] == 0 {
                return acc;
            }
            for (zp, x) in &sources {
                let d1: Vec<i64> = z.iter().zip(zp).map(|(a, b)| a - b).collect();
                let mut d2 = d1.clone();
                d2[0] = z[0] + zp[0];
                let m = &g[doubled.index(&d1)] - &g[doubled.index(&d2)];
                acc += m * x;
            }
            acc
        })
        .collect();
    let mut y = FieldState::zeros(half.clone(), n, Flavor::Half);
    for (s, val) in values.iter().enumerate() {
        for k in 0..n {
            y.u[s * n + k] = val[k];
            y.v[s * n + k] = val[n + k];
        }
    }
    Ok(y)
}

/// Adjoint evolution `Phi = U'_+(t) Psi`: the odd extension `Psi_*` is
/// multiplied by `G^_t(theta)^*`. Returns `Phi` on the doubled box.
pub fn adjoint_evolve(psi: &FieldState, table: &SpectralTable, t: f64) -> Result<FieldState> {
    let bmax = psi.boundary_max();
    if bmax != 0.0 {
        return Err(CrystalError::SupportViolation(format!(
            "test function is nonzero on the wall layer (max {bmax:e})"
        )));
    }
    check_grid(table, &psi.lbox.doubled())?;
    let star = odd_extension(psi)?;
    if t == 0.0 {
        return Ok(star);
    }
    spectral_apply(&star, table, |k| propagator_at(table.point(k), t).adjoint())
}

/// `<Y, Psi>_+ = sum_{z1 >= 1} Y(z) . Psi(z)` for two states on the same slab.
pub fn pairing_half(a: &FieldState, b: &FieldState) -> f64 {
    let w = a.sites() / a.lbox.extents[0] * a.n;
    a.u[w..]
        .iter()
        .zip(&b.u[w..])
        .chain(a.v[w..].iter().zip(&b.v[w..]))
        .map(|(x, y)| x * y)
        .sum()
}

/// A half-space slab with the spectral table of its doubled box.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub kernel: InteractionKernel,
    pub half: LatticeBox,
    pub doubled: LatticeBox,
    pub table: SpectralTable,
    pub group_velocity: f64,
}

impl HalfSpace {
    pub fn new(kernel: &InteractionKernel, half: LatticeBox) -> Result<Self> {
        if half.dim() != kernel.dim() {
            return invalid("box and kernel dimensions differ");
        }
        let doubled = half.doubled();
        let grid = TorusGrid::for_box(&doubled);
        let table = build_spectral_table(kernel, &grid, SlopeMethod::Auto)?;
        let group_velocity = group_velocity_bound(kernel, &grid)?;
        Ok(Self {
            kernel: kernel.clone(),
            half,
            doubled,
            table,
            group_velocity,
        })
    }

    pub fn n(&self) -> usize {
        self.kernel.components()
    }

    /// Largest time for which `L1 > 2 (v t + reach)`.
    pub fn horizon(&self, reach: f64) -> f64 {
        ((self.half.extents[0] as f64 / 2.0 - reach) / self.group_velocity).max(0.0)
    }

    pub fn check_guard(&self, t: f64, reach: f64) -> Result<()> {
        let required = 2.0 * (self.group_velocity * t.abs() + reach);
        if (self.half.extents[0] as f64) <= required {
            return Err(CrystalError::GuardViolation {
                extent: self.half.extents[0],
                required,
                time: t,
            });
        }
        Ok(())
    }

    pub fn evolve(&self, y0: &FieldState, t: f64, method: HalfMethod) -> Result<FieldState> {
        if let Err(e) = self.check_guard(t, self.kernel.radius() as f64) {
            log::warn!("{e}");
        }
        evolve_half(y0, &self.table, t, method)
    }

    pub fn adjoint(&self, psi: &FieldState, t: f64) -> Result<FieldState> {
        adjoint_evolve(psi, &self.table, t)
    }

    pub fn propagator(&self, t: f64) -> crate::dynamics::PropagatorSymbol {
        crate::dynamics::propagator_hat(&self.table, t)
    }

    /// [`Self::adjoint`] with a precomputed propagator symbol.
    pub fn adjoint_with(&self, psi: &FieldState, sym: &crate::dynamics::PropagatorSymbol) -> Result<FieldState> {
        let bmax = psi.boundary_max();
        if bmax != 0.0 {
            return Err(CrystalError::SupportViolation(format!(
                "test function is nonzero on the wall layer (max {bmax:e})"
            )));
        }
        let star = odd_extension(psi)?;
        apply_symbols(&star, &sym.blocks, true)
    }
}
