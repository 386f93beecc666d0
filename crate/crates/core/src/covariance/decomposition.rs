use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::DENSE_LIMIT;
use crate::dynamics::green_function;
use crate::error::{invalid, CrystalError, Result};
use crate::fields::CovarianceSpec;
use crate::lattice::{offsets_within, LatticeBox, LatticePoint, TorusGrid};
use crate::spectral::{build_spectral_table, InteractionKernel, SlopeMethod, SpectralTable};

/// `R^a_t(z, z')` at one time over a probe set, for the parts of
/// `Q_* = Q^+ + Q^- + Q^r`. `total` is propagated from `Q_*` directly.
#[derive(Debug, Clone)]
pub struct DecompositionTables {
    pub t: f64,
    pub probes: Vec<LatticePoint>,
    pub total: Vec<DMatrix<f64>>,
    pub plus: Vec<DMatrix<f64>>,
    pub minus: Vec<DMatrix<f64>>,
    pub rest: Vec<DMatrix<f64>>,
}

impl DecompositionTables {
    /// `max |R_t - (R^+ + R^- + R^r)|`.
    pub fn sum_defect(&self) -> f64 {
        self.total
            .iter()
            .zip(&self.plus)
            .zip(&self.minus)
            .zip(&self.rest)
            .map(|(((t, p), m), r)| (t - p - m - r).abs().max())
            .fold(0.0, f64::max)
    }

    pub fn max_norm(part: &[DMatrix<f64>]) -> f64 {
        part.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }
}

/// Brute-force full-space propagation of the split initial covariance on a
/// small periodic box. Lattice points use signed coordinates in
/// `[-L/2, L/2)`.
pub struct DecompositionOracle {
    spec: CovarianceSpec,
    lbox: LatticeBox,
    table: SpectralTable,
    offsets: Vec<(Vec<i64>, DMatrix<f64>)>,
}

impl DecompositionOracle {
    pub fn new(kernel: &InteractionKernel, spec: &CovarianceSpec, lbox: &LatticeBox) -> Result<Self> {
        if lbox.sites() > DENSE_LIMIT {
            return Err(CrystalError::SizeLimit {
                size: lbox.sites(),
                limit: DENSE_LIMIT,
            });
        }
        if spec.d != lbox.dim() || spec.n != kernel.components() {
            return invalid("covariance spec does not match the kernel and box");
        }
        let range = spec
            .range()
            .ok_or_else(|| CrystalError::InvalidParameter("decomposition needs a finite-range covariance".into()))?;
        let offsets = offsets_within(lbox.dim(), range as i64 - 1)
            .into_iter()
            .map(|w| {
                let q = spec.position(&w)?;
                Ok((w, q))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|(_, q)| q.iter().any(|&x| x != 0.0))
            .collect();
        let table = build_spectral_table(kernel, &TorusGrid::for_box(lbox), SlopeMethod::Auto)?;
        Ok(Self {
            spec: spec.clone(),
            lbox: lbox.clone(),
            table,
            offsets,
        })
    }

    pub fn lbox(&self) -> &LatticeBox {
        &self.lbox
    }

    pub fn at(&self, probes: &[LatticePoint], t: f64) -> Result<DecompositionTables> {
        let g = green_function(&self.table, t, &self.lbox)?;
        let lbox = &self.lbox;
        let n2 = 2 * self.spec.n;
        let cutoff = self.spec.cutoff;
        let fold = |z: &[i64]| lbox.signed_coords(lbox.index(z));
        let pairs: Vec<(usize, usize)> = (0..probes.len())
            .flat_map(|a| (0..probes.len()).map(move |b| (a, b)))
            .collect();
        let parts: Vec<[DMatrix<f64>; 4]> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let (z, zp) = (&probes[a].0, &probes[b].0);
                let mut acc: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(n2, n2));
                for s in 0..lbox.sites() {
                    let y = lbox.signed_coords(s);
                    let gl = &g[lbox.index(&diff(z, &y))];
                    for (w, q) in &self.offsets {
                        let yp = fold(&y.iter().zip(w).map(|(a, b)| a - b).collect::<Vec<_>>());
                        let gr = &g[lbox.index(&diff(zp, &yp))];
                        let m = gl * q * gr.transpose();
                        let star = cutoff.zeta(y[0]) * cutoff.zeta(yp[0]);
                        let sgn = match yp[0].signum() {
                            1 => 1.0,
                            -1 => -1.0,
                            _ => 0.0,
                        };
                        let plus = 0.5;
                        let minus = 0.5 * sgn;
                        acc[0] += &m * star;
                        acc[1] += &m * plus;
                        acc[2] += &m * minus;
                        acc[3] += &m * (star - plus - minus);
                    }
                }
                acc
            })
            .collect();
        let mut out = DecompositionTables {
            t,
            probes: probes.to_vec(),
            total: Vec::new(),
            plus: Vec::new(),
            minus: Vec::new(),
            rest: Vec::new(),
        };
        for [a, b, c, d] in parts {
            out.total.push(a);
            out.plus.push(b);
            out.minus.push(c);
            out.rest.push(d);
        }
        Ok(out)
    }
}

fn diff(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
