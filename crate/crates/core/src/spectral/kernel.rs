use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CrystalError, Result};
use crate::lattice::LatticeBox;
use crate::CMat;

/// Finitely supported interaction matrix `V(z)`, `n x n` real per offset.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionKernel {
    d: usize,
    n: usize,
    radius: i64,
    entries: BTreeMap<Vec<i64>, DMatrix<f64>>,
    family: KernelFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    NearestNeighbor { gamma: Vec<f64>, mass: Vec<f64> },
    General,
}

/// Structural conditions that can be decided exactly from the support table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelFlags {
    /// `V(z) = V(z~)`.
    pub even_in_normal_axis: bool,
    /// Finite support, hence exponential decay.
    pub finite_support: bool,
    /// `V_lk(-z) = V_kl(z)`.
    pub symmetric: bool,
}

impl InteractionKernel {
    /// Nearest-neighbour crystal: diagonal, `-gamma_k` on the `2d` unit
    /// offsets and `2 d gamma_k + m_k^2` at the origin so the symbol is
    /// `2 gamma_k sum_i (1 - cos theta_i) + m_k^2`.
    pub fn nearest_neighbor(d: usize, n: usize, gamma: &[f64], mass: &[f64]) -> Result<Self> {
        if d == 0 || n == 0 {
            return invalid("dimension and component count must be at least 1");
        }
        if gamma.len() != n || mass.len() != n {
            return invalid(format!(
                "expected {n} couplings and masses, got {} and {}",
                gamma.len(),
                mass.len()
            ));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return invalid(format!("coupling gamma must be positive, got {g}"));
        }
        if let Some(m) = mass.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return invalid(format!("mass must be non-negative, got {m}"));
        }
        let mut entries = BTreeMap::new();
        let center = DMatrix::from_fn(n, n, |k, l| {
            if k == l {
                2.0 * d as f64 * gamma[k] + mass[k] * mass[k]
            } else {
                0.0
            }
        });
        entries.insert(vec![0; d], center);
        let hop = DMatrix::from_fn(n, n, |k, l| if k == l { -gamma[k] } else { 0.0 });
        for axis in 0..d {
            for sign in [-1, 1] {
                let mut z = vec![0; d];
                z[axis] = sign;
                entries.insert(z, hop.clone());
            }
        }
        Ok(Self {
            d,
            n,
            radius: 1,
            entries,
            family: KernelFamily::NearestNeighbor {
                gamma: gamma.to_vec(),
                mass: mass.to_vec(),
            },
        })
    }

    /// General kernel from an explicit support table. Entries must be `n x n`
    /// and offsets `d`-dimensional; zero matrices are dropped.
    pub fn from_entries(
        d: usize,
        n: usize,
        entries: impl IntoIterator<Item = (Vec<i64>, DMatrix<f64>)>,
    ) -> Result<Self> {
        if d == 0 || n == 0 {
            return invalid("dimension and component count must be at least 1");
        }
        let mut table = BTreeMap::new();
        for (z, m) in entries {
            if z.len() != d {
                return invalid(format!("offset {z:?} is not {d}-dimensional"));
            }
            if m.nrows() != n || m.ncols() != n {
                return invalid(format!("matrix at {z:?} is not {n}x{n}"));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return invalid(format!("matrix at {z:?} has non-finite entries"));
            }
            if m.iter().all(|&x| x == 0.0) {
                continue;
            }
            if table.insert(z.clone(), m).is_some() {
                return invalid(format!("duplicate offset {z:?}"));
            }
        }
        let radius = table
            .keys()
            .map(|z: &Vec<i64>| z.iter().map(|c| c.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        Ok(Self {
            d,
            n,
            radius,
            entries: table,
            family: KernelFamily::General,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        matches!(self.family, KernelFamily::NearestNeighbor { .. })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<i64>, &DMatrix<f64>)> {
        self.entries.iter()
    }

    pub fn get(&self, z: &[i64]) -> Option<&DMatrix<f64>> {
        self.entries.get(z)
    }

    pub fn flags(&self) -> KernelFlags {
        let even = self.entries.iter().all(|(z, m)| {
            let mut r = z.clone();
            r[0] = -r[0];
            self.entries.get(&r).is_some_and(|mr| mr == m)
        });
        let symmetric = self.entries.iter().all(|(z, m)| {
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            self.entries
                .get(&neg)
                .is_some_and(|mn| mn.transpose() == *m)
        });
        KernelFlags {
            even_in_normal_axis: even,
            finite_support: true,
            symmetric,
        }
    }

    /// `V^(theta) = sum_z V(z) e^{i z.theta}`.
    pub fn symbol(&self, theta: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for (z, m) in &self.entries {
            let phase: f64 = z.iter().zip(theta).map(|(&c, t)| c as f64 * t).sum();
            let e = Complex64::new(phase.cos(), phase.sin());
            for k in 0..self.n {
                for l in 0..self.n {
                    out[(k, l)] += e * m[(k, l)];
                }
            }
        }
        out
    }

    /// Exact partial derivative of the symbol along one axis.
    pub fn symbol_derivative(&self, theta: &[f64], axis: usize) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for (z, m) in &self.entries {
            if z[axis] == 0 {
                continue;
            }
            let phase: f64 = z.iter().zip(theta).map(|(&c, t)| c as f64 * t).sum();
            let e = Complex64::new(0.0, z[axis] as f64) * Complex64::new(phase.cos(), phase.sin());
            for k in 0..self.n {
                for l in 0..self.n {
                    out[(k, l)] += e * m[(k, l)];
                }
            }
        }
        out
    }

    /// Periodic convolution `(V u)(z) = sum_w V(w) u(z - w)` of an `n`-vector
    /// field stored site-major.
    pub fn apply(&self, lbox: &LatticeBox, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; u.len()];
        for site in 0..lbox.sites() {
            let z = lbox.coords(site);
            let acc = &mut out[site * n..(site + 1) * n];
            for (w, m) in &self.entries {
                let src: Vec<i64> = z.iter().zip(w).map(|(a, b)| a - b).collect();
                let j = lbox.index(&src);
                let us = &u[j * n..(j + 1) * n];
                for k in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += m[(k, l)] * us[l];
                    }
                    acc[k] += s;
                }
            }
        }
        out
    }

    /// Gershgorin bound on the largest eigenvalue of the symbol.
    pub fn symbol_bound(&self) -> f64 {
        (0..self.n)
            .map(|k| {
                self.entries
                    .values()
                    .map(|m| (0..self.n).map(|l| m[(k, l)].abs()).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_file(&self) -> KernelFile {
        match &self.family {
            KernelFamily::NearestNeighbor { gamma, mass } => KernelFile {
                family: Some("nearest-neighbor".into()),
                d: self.d,
                n: self.n,
                gamma: Some(gamma.clone()),
                mass: Some(mass.clone()),
                entries: None,
            },
            KernelFamily::General => KernelFile {
                family: None,
                d: self.d,
                n: self.n,
                gamma: None,
                mass: None,
                entries: Some(
                    self.entries
                        .iter()
                        .map(|(z, m)| KernelFileEntry {
                            z: z.clone(),
                            matrix: (0..self.n)
                                .map(|k| (0..self.n).map(|l| m[(k, l)]).collect())
                                .collect(),
                        })
                        .collect(),
                ),
            },
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: KernelFile = serde_json::from_str(s)?;
        file.build()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

/// On-disk kernel definition: either an explicit `{d, n, entries}` table or
/// a named family (`"nearest-neighbor"` with `gamma` and `mass`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub d: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<KernelFileEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFileEntry {
    pub z: Vec<i64>,
    pub matrix: Vec<Vec<f64>>,
}

impl KernelFile {
    pub fn nearest_neighbor(d: usize, n: usize, gamma: Vec<f64>, mass: Vec<f64>) -> Self {
        Self {
            family: Some("nearest-neighbor".into()),
            d,
            n,
            gamma: Some(gamma),
            mass: Some(mass),
            entries: None,
        }
    }

    pub fn build(&self) -> Result<InteractionKernel> {
        match self.family.as_deref() {
            Some("nearest-neighbor") | Some("nn") => {
                let (Some(gamma), Some(mass)) = (&self.gamma, &self.mass) else {
                    return Err(CrystalError::Format(
                        "nearest-neighbor kernel needs gamma and mass arrays".into(),
                    ));
                };
                InteractionKernel::nearest_neighbor(self.d, self.n, gamma, mass)
            }
            Some(other) => Err(CrystalError::Format(format!("unknown kernel family {other:?}"))),
            None => {
                let Some(entries) = &self.entries else {
                    return Err(CrystalError::Format(
                        "kernel file needs either a family or an entries table".into(),
                    ));
                };
                let n = self.n;
                let mut table = Vec::with_capacity(entries.len());
                for e in entries {
                    if e.matrix.len() != n || e.matrix.iter().any(|r| r.len() != n) {
                        return Err(CrystalError::Format(format!(
                            "matrix at {:?} is not {n}x{n}",
                            e.z
                        )));
                    }
                    table.push((e.z.clone(), DMatrix::from_fn(n, n, |k, l| e.matrix[k][l])));
                }
                InteractionKernel::from_entries(self.d, n, table)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nn_tables_match_the_stencil() {
        let k = InteractionKernel::nearest_neighbor(1, 1, &[1.0], &[0.0]).unwrap();
        assert_eq!(k.get(&[0]).unwrap()[(0, 0)], 2.0);
        assert_eq!(k.get(&[1]).unwrap()[(0, 0)], -1.0);
        assert_eq!(k.get(&[-1]).unwrap()[(0, 0)], -1.0);
        assert!(k.get(&[2]).is_none());

        let k = InteractionKernel::nearest_neighbor(2, 1, &[1.0], &[0.0]).unwrap();
        assert_eq!(k.get(&[0, 0]).unwrap()[(0, 0)], 4.0);
        for z in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert_eq!(k.get(&z).unwrap()[(0, 0)], -1.0);
        }
        assert!(k.get(&[1, 1]).is_none());

        let k = InteractionKernel::nearest_neighbor(1, 2, &[1.0, 2.0], &[0.0, 1.0]).unwrap();
        let c = k.get(&[0]).unwrap();
        assert_eq!((c[(0, 0)], c[(1, 1)], c[(0, 1)]), (2.0, 5.0, 0.0));
        assert_eq!(k.get(&[1]).unwrap()[(1, 1)], -2.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(InteractionKernel::nearest_neighbor(1, 1, &[0.0], &[0.0]).is_err());
        assert!(InteractionKernel::nearest_neighbor(1, 1, &[1.0], &[-0.1]).is_err());
        assert!(InteractionKernel::nearest_neighbor(1, 2, &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn symbol_values() {
        let k = InteractionKernel::nearest_neighbor(1, 1, &[1.0], &[0.0]).unwrap();
        assert!((k.symbol(&[std::f64::consts::PI])[(0, 0)].re - 4.0).abs() < 1e-14);
        assert!(k.symbol(&[0.0])[(0, 0)].norm() < 1e-14);
        let k = InteractionKernel::nearest_neighbor(1, 1, &[1.0], &[0.5]).unwrap();
        assert!((k.symbol(&[0.0])[(0, 0)].re - 0.25).abs() < 1e-14);
    }

    #[test]
    fn flags_detect_asymmetry() {
        let k = InteractionKernel::nearest_neighbor(2, 1, &[1.0], &[0.3]).unwrap();
        let f = k.flags();
        assert!(f.even_in_normal_axis && f.symmetric);
        let m = DMatrix::from_element(1, 1, 1.0);
        let k = InteractionKernel::from_entries(1, 1, vec![(vec![1], m)]).unwrap();
        let f = k.flags();
        assert!(!f.even_in_normal_axis && !f.symmetric);
    }

    #[test]
    fn json_round_trip() {
        let k = InteractionKernel::nearest_neighbor(2, 2, &[1.0, 0.5], &[0.2, 0.0]).unwrap();
        assert_eq!(InteractionKernel::from_json_str(&k.to_json().unwrap()).unwrap(), k);
        let g = InteractionKernel::from_entries(
            1,
            1,
            vec![
                (vec![0], DMatrix::from_element(1, 1, 3.0)),
                (vec![1], DMatrix::from_element(1, 1, -1.5)),
                (vec![-1], DMatrix::from_element(1, 1, -1.5)),
            ],
        )
        .unwrap();
        assert_eq!(InteractionKernel::from_json_str(&g.to_json().unwrap()).unwrap(), g);
        let doc = r#"{"d":1,"n":1,"entries":[{"z":[0],"matrix":[[2.0]]}]}"#;
        assert_eq!(InteractionKernel::from_json_str(doc).unwrap().radius(), 0);
    }
}
