use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::{CovarianceField, Provenance, DENSE_LIMIT};
use crate::dynamics::{apply_pointwise, channels_to_lattice, channels_to_torus};
use crate::dynamics::{FieldState, Flavor, HalfSpace, PropagatorSymbol};
use crate::error::{invalid, CrystalError, Result};
use crate::fft::LatticeFft;
use crate::fields::CovarianceSpec;
use crate::lattice::{LatticePoint, TorusGrid};
use crate::CMat;

enum Initial {
    /// `Q0(y, y') = zeta(y1) zeta(y1') q0(y - y')`; the symbol lives on the doubled box.
    Factored {
        zeta: Vec<f64>,
        symbol: Vec<CMat>,
        fft: LatticeFft,
    },
    /// Index `site * 2n + i n + k` over the half-space slab.
    Dense(DMatrix<f64>),
}

/// Exact propagation `Q_t(z, z') = <Q0, Phi_z(t) (x) Phi_z'(t)>_+` where
/// `Phi_z` is the adjoint evolution of a unit vector at `z`.
pub struct CovariancePropagator<'a> {
    hs: &'a HalfSpace,
    init: Initial,
}

impl<'a> CovariancePropagator<'a> {
    pub fn factored(hs: &'a HalfSpace, spec: &CovarianceSpec) -> Result<Self> {
        if spec.d != hs.half.dim() || spec.n != hs.n() {
            return invalid("covariance spec does not match the half-space");
        }
        let grid = TorusGrid::for_box(&hs.doubled);
        let symbol = (0..grid.len())
            .into_par_iter()
            .map(|k| spec.symbol(&grid.theta(k)))
            .collect::<Result<Vec<_>>>()?;
        let zeta = (0..hs.doubled.sites())
            .map(|s| {
                let z1 = hs.doubled.coords(s)[0];
                if z1 < hs.half.extents[0] as i64 {
                    spec.cutoff.zeta(z1)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            hs,
            init: Initial::Factored {
                zeta,
                symbol,
                fft: LatticeFft::new(&hs.doubled.extents),
            },
        })
    }

    pub fn dense(hs: &'a HalfSpace, q0: DMatrix<f64>) -> Result<Self> {
        let sites = hs.half.sites();
        if sites > DENSE_LIMIT {
            return Err(CrystalError::SizeLimit {
                size: sites,
                limit: DENSE_LIMIT,
            });
        }
        let w = sites * 2 * hs.n();
        if q0.nrows() != w || q0.ncols() != w {
            return invalid(format!("dense covariance must be {w} x {w}"));
        }
        Ok(Self {
            hs,
            init: Initial::Dense(q0),
        })
    }

    /// `Phi` restricted to the slab for every component `(i, k)` of a probe;
    /// probes on the wall give zero columns.
    fn adjoint_columns(&self, z: &LatticePoint, sym: &PropagatorSymbol) -> Result<Vec<FieldState>> {
        let half = &self.hs.half;
        let n = self.hs.n();
        let site = half
            .index_checked(&z.0)
            .ok_or_else(|| CrystalError::OutOfBox { point: z.0.clone() })?;
        let keep = half.sites() * n;
        (0..2 * n)
            .map(|a| {
                if z.0[0] == 0 {
                    return Ok(FieldState::zeros(half.clone(), n, Flavor::Half));
                }
                let mut psi = FieldState::zeros(half.clone(), n, Flavor::Half);
                psi.set(a / n, site, a % n, 1.0);
                let phi = self.hs.adjoint_with(&psi, sym)?;
                FieldState::new(
                    half.clone(),
                    n,
                    phi.u[..keep].to_vec(),
                    phi.v[..keep].to_vec(),
                    Flavor::Half,
                )
            })
            .collect()
    }

    /// `W = Q0 Phi` on the slab.
    fn apply_initial(&self, phi: &FieldState) -> FieldState {
        let half = &self.hs.half;
        let n = phi.n;
        match &self.init {
            Initial::Factored { zeta, symbol, fft } => {
                let doubled = &self.hs.doubled;
                let mut u = vec![0.0; doubled.sites() * n];
                let mut v = vec![0.0; doubled.sites() * n];
                for s in 0..half.sites() {
                    let w = zeta[s];
                    for k in 0..n {
                        u[s * n + k] = w * phi.u[s * n + k];
                        v[s * n + k] = w * phi.v[s * n + k];
                    }
                }
                let mut hat = channels_to_torus(fft, n, &u, &v);
                apply_pointwise(&mut hat, |k| symbol[k].clone());
                let (mut u, mut v, _) = channels_to_lattice(fft, n, hat);
                u.truncate(half.sites() * n);
                v.truncate(half.sites() * n);
                for s in 0..half.sites() {
                    let w = zeta[s];
                    for k in 0..n {
                        u[s * n + k] *= w;
                        v[s * n + k] *= w;
                    }
                }
                FieldState {
                    lbox: half.clone(),
                    n,
                    u,
                    v,
                    flavor: Flavor::Half,
                }
            }
            Initial::Dense(q) => {
                let x = nalgebra::DVector::from_iterator(
                    half.sites() * 2 * n,
                    (0..half.sites()).flat_map(|s| {
                        (0..n)
                            .map(move |k| phi.u[s * n + k])
                            .chain((0..n).map(move |k| phi.v[s * n + k]))
                    }),
                );
                let y = q * x;
                let mut out = FieldState::zeros(half.clone(), n, Flavor::Half);
                for s in 0..half.sites() {
                    for k in 0..n {
                        out.u[s * n + k] = y[s * 2 * n + k];
                        out.v[s * n + k] = y[s * 2 * n + n + k];
                    }
                }
                out
            }
        }
    }

    /// Full covariance field over the probes at time `t`.
    pub fn propagate(&self, probes: &[LatticePoint], t: f64) -> Result<CovarianceField> {
        let sym = self.hs.propagator(t);
        let n2 = 2 * self.hs.n();
        let cols: Vec<(Vec<FieldState>, Vec<FieldState>)> = probes
            .par_iter()
            .map(|z| {
                let phi = self.adjoint_columns(z, &sym)?;
                let w = phi.iter().map(|p| self.apply_initial(p)).collect();
                Ok((phi, w))
            })
            .collect::<Result<_>>()?;
        let p = probes.len();
        let blocks: Vec<DMatrix<f64>> = (0..p * p)
            .into_par_iter()
            .map(|pq| {
                let (phi, _) = &cols[pq / p];
                let (_, w) = &cols[pq % p];
                DMatrix::from_fn(n2, n2, |a, b| phi[a].dot(&w[b]))
            })
            .collect();
        CovarianceField::new(probes.to_vec(), self.hs.n(), blocks, Provenance::PropagatedExact { t })
    }

    /// Only the diagonal blocks `Q_t(z, z)`.
    pub fn diagonal(&self, probes: &[LatticePoint], t: f64) -> Result<Vec<DMatrix<f64>>> {
        let sym = self.hs.propagator(t);
        let n2 = 2 * self.hs.n();
        probes
            .par_iter()
            .map(|z| {
                let phi = self.adjoint_columns(z, &sym)?;
                let w: Vec<FieldState> = phi.iter().map(|p| self.apply_initial(p)).collect();
                Ok(DMatrix::from_fn(n2, n2, |a, b| phi[a].dot(&w[b])))
            })
            .collect()
    }
}
