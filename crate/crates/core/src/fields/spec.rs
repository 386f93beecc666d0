use std::collections::BTreeMap;

use nalgebra::linalg::SymmetricEigen;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CrystalError, Result};
use crate::spectral::{InteractionKernel, SpectralPoint, ACOUSTIC_EPS};
use crate::CMat;

/// Half-space cutoff `zeta`: 0 for `s <= 0`, `s / (a + 1)` on `0 < s <= a`, 1 beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub a: usize,
}

impl Default for Cutoff {
    fn default() -> Self {
        Self { a: 0 }
    }
}

impl Cutoff {
    pub fn zeta(&self, s: i64) -> f64 {
        if s <= 0 {
            0.0
        } else if s as usize <= self.a {
            s as f64 / (self.a as f64 + 1.0)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// Box filter of side `N0` per axis driven by i.i.d. noise.
    MovingAverage,
    /// `X^ = q^_0^{1/2} xi^`.
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    /// `q^{00} = q^{11} = prod_i (N0 - |z_i|)_+`, cross blocks zero (`n = 1`).
    Triangular { n0: usize },
    /// `q^^{00} = T V^^{-1}`, `q^^{11} = T`, cross blocks zero.
    Gibbs { temperature: f64, kernel: InteractionKernel },
    /// Finitely supported `2n x 2n` table `q_0(z)`.
    Table { entries: BTreeMap<Vec<i64>, DMatrix<f64>> },
}

/// Translation-invariant initial covariance with its half-space cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub d: usize,
    pub n: usize,
    pub model: CovarianceModel,
    pub recipe: Recipe,
    pub cutoff: Cutoff,
}

impl CovarianceSpec {
    pub fn triangular(n0: usize, d: usize) -> Result<Self> {
        if n0 == 0 || d == 0 {
            return invalid("N0 and d must be at least 1");
        }
        Ok(Self {
            d,
            n: 1,
            model: CovarianceModel::Triangular { n0 },
            recipe: Recipe::MovingAverage,
            cutoff: Cutoff::default(),
        })
    }

    /// Gibbs covariance at temperature `T`; the symbol must stay away from
    /// its zero set (all masses positive for nearest-neighbour crystals).
    pub fn gibbs(temperature: f64, kernel: &InteractionKernel) -> Result<Self> {
        if !(temperature >= 0.0) {
            return invalid(format!("temperature must be non-negative, got {temperature}"));
        }
        let min = min_symbol_eigenvalue(kernel, 64);
        if min < 1e3 * ACOUSTIC_EPS {
            return invalid(format!(
                "Gibbs covariance needs a non-singular symbol, min eigenvalue {min:e}"
            ));
        }
        Ok(Self {
            d: kernel.dim(),
            n: kernel.components(),
            model: CovarianceModel::Gibbs {
                temperature,
                kernel: kernel.clone(),
            },
            recipe: Recipe::Spectral,
            cutoff: Cutoff::default(),
        })
    }

    pub fn table(
        d: usize,
        n: usize,
        entries: impl IntoIterator<Item = (Vec<i64>, DMatrix<f64>)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (z, m) in entries {
            if z.len() != d || m.nrows() != 2 * n || m.ncols() != 2 * n {
                return invalid(format!("table entry at {z:?} has the wrong shape"));
            }
            map.insert(z, m);
        }
        for (z, m) in &map {
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            let ok = map
                .get(&neg)
                .is_some_and(|mn| (mn.transpose() - m).abs().max() <= 1e-14 * (1.0 + m.abs().max()));
            if !ok {
                return invalid(format!("table violates q(z) = q(-z)^T at {z:?}"));
            }
        }
        let spec = Self {
            d,
            n,
            model: CovarianceModel::Table { entries: map },
            recipe: Recipe::Spectral,
            cutoff: Cutoff::default(),
        };
        spec.check_diagonal_psd(32)?;
        Ok(spec)
    }

    pub fn with_cutoff(mut self, a: usize) -> Self {
        self.cutoff = Cutoff { a };
        self
    }

    pub fn with_recipe(mut self, recipe: Recipe) -> Result<Self> {
        if recipe == Recipe::MovingAverage && !matches!(self.model, CovarianceModel::Triangular { .. }) {
            return invalid("moving-average synthesis is only defined for the triangular model");
        }
        self.recipe = recipe;
        Ok(self)
    }

    /// Sup-norm dependence range: `q_0(z) = 0` once `|z|_inf >= range`.
    /// `None` for the Gibbs model.
    pub fn range(&self) -> Option<usize> {
        match &self.model {
            CovarianceModel::Triangular { n0 } => Some(*n0),
            CovarianceModel::Gibbs { .. } => None,
            CovarianceModel::Table { entries } => Some(
                entries
                    .keys()
                    .map(|z| z.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0))
                    .max()
                    .unwrap_or(0)
                    + 1,
            ),
        }
    }

    pub fn is_finite_range(&self) -> bool {
        self.range().is_some()
    }

    /// Position-space block matrix `q_0(z)` (`2n x 2n`) for finite-range models.
    pub fn position(&self, z: &[i64]) -> Result<DMatrix<f64>> {
        let n2 = 2 * self.n;
        match &self.model {
            CovarianceModel::Triangular { n0 } => {
                let f: f64 = z
                    .iter()
                    .map(|&c| (*n0 as i64 - c.abs()).max(0) as f64)
                    .product();
                Ok(DMatrix::identity(n2, n2) * f)
            }
            CovarianceModel::Table { entries } => Ok(entries
                .get(z)
                .cloned()
                .unwrap_or_else(|| DMatrix::zeros(n2, n2))),
            CovarianceModel::Gibbs { .. } => invalid(
                "the Gibbs covariance has no finite position table; tabulate its symbol instead",
            ),
        }
    }

    /// `q^_0(theta) = sum_z q_0(z) e^{i z.theta}` as a `2n x 2n` matrix.
    pub fn symbol(&self, theta: &[f64]) -> Result<CMat> {
        let n = self.n;
        match &self.model {
            CovarianceModel::Triangular { n0 } => {
                let f: f64 = theta.iter().map(|&t| triangle_hat(*n0, t)).product();
                Ok(CMat::identity(2, 2) * Complex64::from(f))
            }
            CovarianceModel::Gibbs { temperature, kernel } => {
                let p = SpectralPoint::from_symbol(theta.to_vec(), kernel.symbol(theta))?;
                let inv = p.matrix_function_positive(|w| 1.0 / (w * w))?;
                let mut q = CMat::zeros(2 * n, 2 * n);
                q.view_mut((0, 0), (n, n))
                    .copy_from(&(inv * Complex64::from(*temperature)));
                for k in 0..n {
                    q[(n + k, n + k)] = Complex64::from(*temperature);
                }
                Ok(q)
            }
            CovarianceModel::Table { entries } => {
                let mut q = CMat::zeros(2 * n, 2 * n);
                for (z, m) in entries {
                    let phase: f64 = z.iter().zip(theta).map(|(&c, t)| c as f64 * t).sum();
                    let e = Complex64::from_polar(1.0, phase);
                    q += m.map(|x| e * x);
                }
                Ok(q)
            }
        }
    }

    /// Eigenvalue scan of the diagonal blocks `q^^{ii}` on an `m^d` grid.
    pub fn check_diagonal_psd(&self, m: usize) -> Result<()> {
        let grid = crate::lattice::TorusGrid::uniform(self.d, m, true)?;
        let n = self.n;
        for k in 0..grid.len() {
            let theta = grid.theta(k);
            let q = self.symbol(&theta)?;
            for i in 0..2 {
                let block = q.view((i * n, i * n), (n, n)).into_owned();
                let min = SymmetricEigen::new(block)
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |a, &b| a.min(b));
                if min < -1e-10 {
                    return Err(CrystalError::InvalidParameter(format!(
                        "block q^{i}{i} is not non-negative at theta = {theta:?} (eigenvalue {min:e})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `sum_{|z| < N0} (N0 - |z|) e^{i z theta} = (1 - cos N0 theta) / (1 - cos theta)`.
pub fn triangle_hat(n0: usize, theta: f64) -> f64 {
    let n0f = n0 as f64;
    let denom = 1.0 - theta.cos();
    if denom.abs() < 1e-6 {
        let mut s = n0f;
        for z in 1..n0 {
            s += 2.0 * (n0f - z as f64) * (z as f64 * theta).cos();
        }
        s
    } else {
        (1.0 - (n0f * theta).cos()) / denom
    }
}

fn min_symbol_eigenvalue(kernel: &InteractionKernel, m: usize) -> f64 {
    let m = if kernel.dim() > 2 { 16 } else { m };
    let grid = crate::lattice::TorusGrid::uniform(kernel.dim(), m, false).expect("even grid");
    (0..grid.len())
        .map(|k| {
            SymmetricEigen::new(kernel.symbol(&grid.theta(k)))
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b))
        })
        .fold(f64::INFINITY, f64::min)
}

/// JSON form: `{"kind": "triangular" | "gibbs" | "custom-table", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpecFile {
    Triangular {
        n0: usize,
        #[serde(default)]
        recipe: Option<Recipe>,
        #[serde(default)]
        cutoff: Option<usize>,
    },
    Gibbs {
        temperature: f64,
        #[serde(default)]
        cutoff: Option<usize>,
    },
    CustomTable {
        entries: Vec<TableEntry>,
        #[serde(default)]
        cutoff: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub z: Vec<i64>,
    pub matrix: Vec<Vec<f64>>,
}

impl SpecFile {
    pub fn build(&self, kernel: &InteractionKernel) -> Result<CovarianceSpec> {
        let d = kernel.dim();
        let n = kernel.components();
        match self {
            SpecFile::Triangular { n0, recipe, cutoff } => {
                if n != 1 {
                    return invalid("the triangular covariance is scalar (n = 1)");
                }
                CovarianceSpec::triangular(*n0, d)?
                    .with_recipe(recipe.unwrap_or(Recipe::MovingAverage))
                    .map(|s| s.with_cutoff(cutoff.unwrap_or(0)))
            }
            SpecFile::Gibbs { temperature, cutoff } => {
                Ok(CovarianceSpec::gibbs(*temperature, kernel)?.with_cutoff(cutoff.unwrap_or(0)))
            }
            SpecFile::CustomTable { entries, cutoff } => {
                let n2 = 2 * n;
                let mut table = Vec::new();
                for e in entries {
                    if e.matrix.len() != n2 || e.matrix.iter().any(|r| r.len() != n2) {
                        return Err(CrystalError::Format(format!(
                            "table matrix at {:?} is not {n2}x{n2}",
                            e.z
                        )));
                    }
                    table.push((e.z.clone(), DMatrix::from_fn(n2, n2, |r, c| e.matrix[r][c])));
                }
                Ok(CovarianceSpec::table(d, n, table)?.with_cutoff(cutoff.unwrap_or(0)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn triangular_values() {
        let s = CovarianceSpec::triangular(2, 1).unwrap();
        assert_eq!(s.position(&[0]).unwrap()[(0, 0)], 2.0);
        assert_eq!(s.position(&[1]).unwrap()[(1, 1)], 1.0);
        assert_eq!(s.position(&[2]).unwrap()[(0, 0)], 0.0);
        assert_eq!(s.position(&[0]).unwrap()[(0, 1)], 0.0);
        assert!(triangle_hat(2, PI).abs() < 1e-15);
        let s3 = CovarianceSpec::triangular(3, 2).unwrap();
        assert_eq!(s3.position(&[0, 0]).unwrap()[(0, 0)], 9.0);
        assert_eq!(s3.position(&[1, 3]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn triangle_hat_matches_direct_sum() {
        for n0 in 1..5 {
            for &t in &[0.0, 1e-7, 0.3, 2.0, PI] {
                let direct: f64 = (-(n0 as i64) + 1..n0 as i64)
                    .map(|z| (n0 as i64 - z.abs()) as f64 * (z as f64 * t).cos())
                    .sum();
                assert!((triangle_hat(n0, t) - direct).abs() < 1e-9, "{n0} {t}");
            }
        }
    }

    #[test]
    fn gibbs_values() {
        let k = InteractionKernel::nearest_neighbor(1, 1, &[1.0], &[1.0]).unwrap();
        let s = CovarianceSpec::gibbs(2.0, &k).unwrap();
        let q = s.symbol(&[PI]).unwrap();
        assert!((q[(0, 0)].re - 2.0 / 5.0).abs() < 1e-14);
        assert!((q[(1, 1)].re - 2.0).abs() < 1e-14);
        let q0 = CovarianceSpec::gibbs(0.0, &k).unwrap().symbol(&[0.4]).unwrap();
        assert_eq!(q0.norm(), 0.0);
        let massless = InteractionKernel::nearest_neighbor(1, 1, &[1.0], &[0.0]).unwrap();
        assert!(CovarianceSpec::gibbs(1.0, &massless).is_err());
    }

    #[test]
    fn cutoff_profile() {
        let c = Cutoff { a: 0 };
        assert_eq!((c.zeta(0), c.zeta(1), c.zeta(5)), (0.0, 1.0, 1.0));
        let c = Cutoff { a: 3 };
        assert_eq!((c.zeta(-1), c.zeta(2), c.zeta(4)), (0.0, 0.5, 1.0));
    }

    #[test]
    fn asymmetric_table_is_rejected() {
        let m = DMatrix::from_element(2, 2, 1.0);
        assert!(CovarianceSpec::table(1, 1, vec![(vec![1], m)]).is_err());
    }
}
