use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CrystalError, Result};
use crate::fields::EnsembleAccumulator;
use crate::lattice::LatticePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Empirical { samples: u64 },
    PropagatedExact { t: f64 },
    LimitTheoretical { grid_points: Vec<usize> },
}

/// `2n x 2n` blocks `Q(z, z')` over a probe set. Row and column index
/// `i n + k` addresses component `k` of `Y^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceField {
    pub probes: Vec<LatticePoint>,
    pub n: usize,
    pub blocks: Vec<DMatrix<f64>>,
    pub stderr: Option<Vec<DMatrix<f64>>>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// `max_pairs ||dQ||_F / max_pairs ||Q_ref||_F`.
    pub relative: f64,
    pub max_abs: f64,
    pub reference_scale: f64,
    /// Per `(i, j)` block: max over pairs of `||dQ^{ij}||_F`.
    pub per_block: [[f64; 2]; 2],
}

impl CovarianceField {
    pub fn new(
        probes: Vec<LatticePoint>,
        n: usize,
        blocks: Vec<DMatrix<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let p = probes.len();
        if blocks.len() != p * p || blocks.iter().any(|b| b.nrows() != 2 * n || b.ncols() != 2 * n) {
            return invalid("covariance blocks do not match the probe set");
        }
        Ok(Self {
            probes,
            n,
            blocks,
            stderr: None,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn block(&self, p: usize, q: usize) -> &DMatrix<f64> {
        &self.blocks[p * self.len() + q]
    }

    /// Block `Q^{ij}(z_p, z_q)` as an `n x n` matrix.
    pub fn sub_block(&self, p: usize, q: usize, i: usize, j: usize) -> DMatrix<f64> {
        self.block(p, q)
            .view((i * self.n, j * self.n), (self.n, self.n))
            .into_owned()
    }

    /// Largest violation of `Q(z, z') = Q(z', z)^T`.
    pub fn exchange_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for p in 0..self.len() {
            for q in 0..self.len() {
                worst = worst.max((self.block(p, q) - self.block(q, p).transpose()).abs().max());
            }
        }
        worst
    }

    pub fn error_against(&self, reference: &Self) -> Result<ErrorSummary> {
        if self.probes != reference.probes || self.n != reference.n {
            return invalid("covariance fields are over different probes");
        }
        let n = self.n;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        let mut max_abs = 0.0f64;
        let mut per_block = [[0.0f64; 2]; 2];
        for (a, b) in self.blocks.iter().zip(&reference.blocks) {
            let diff = a - b;
            num = num.max(diff.norm());
            den = den.max(b.norm());
            max_abs = max_abs.max(diff.abs().max());
            for (i, row) in per_block.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    let f = diff.view((i * n, j * n), (n, n)).norm();
                    *cell = cell.max(f);
                }
            }
        }
        Ok(ErrorSummary {
            relative: if den > 0.0 { num / den } else { num },
            max_abs,
            reference_scale: den,
            per_block,
        })
    }

    /// Largest `|self - other| / stderr` over all entries with positive stderr.
    pub fn max_z_score(&self, exact: &Self) -> Result<f64> {
        let se = self
            .stderr
            .as_ref()
            .ok_or_else(|| CrystalError::InvalidParameter("field carries no standard errors".into()))?;
        let mut worst = 0.0f64;
        for ((a, b), s) in self.blocks.iter().zip(&exact.blocks).zip(se) {
            for ((x, y), e) in a.iter().zip(b.iter()).zip(s.iter()) {
                if *e > 0.0 {
                    worst = worst.max((x - y).abs() / e);
                } else if (x - y).abs() > 1e-12 {
                    worst = f64::INFINITY;
                }
            }
        }
        Ok(worst)
    }

    /// One row per probe pair and entry: `z,z',i,j,k,l,value,stderr`.
    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut s = String::from("z,zp,i,j,k,l,value,stderr\n");
        let fmt = |p: &LatticePoint| {
            p.0.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        for p in 0..self.len() {
            for q in 0..self.len() {
                let b = self.block(p, q);
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..n {
                            for l in 0..n {
                                let (r, c) = (i * n + k, j * n + l);
                                let se = self
                                    .stderr
                                    .as_ref()
                                    .map(|s| format!("{:.17e}", s[p * self.len() + q][(r, c)]))
                                    .unwrap_or_default();
                                s.push_str(&format!(
                                    "{},{},{i},{j},{k},{l},{:.17e},{se}\n",
                                    fmt(&self.probes[p]),
                                    fmt(&self.probes[q]),
                                    b[(r, c)]
                                ));
                            }
                        }
                    }
                }
            }
        }
        s
    }

    pub fn summary_json(&self, reference: Option<&Self>) -> Result<serde_json::Value> {
        let max_norm = self.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max);
        let mut v = serde_json::json!({
            "provenance": self.provenance,
            "probes": self.probes,
            "n": self.n,
            "max_block_norm": max_norm,
            "exchange_asymmetry": self.exchange_asymmetry(),
        });
        if let Some(r) = reference {
            v["error"] = serde_json::to_value(self.error_against(r)?)?;
        }
        Ok(v)
    }
}

/// Raw second-moment estimate with per-entry standard errors.
pub fn empirical_covariance(acc: &EnsembleAccumulator) -> Result<CovarianceField> {
    if acc.count() < 2 {
        return Err(CrystalError::InsufficientSamples {
            count: acc.count(),
            required: 2,
        });
    }
    let n = acc.components();
    let p = acc.probes().len();
    let mut blocks = Vec::with_capacity(p * p);
    let mut errs = Vec::with_capacity(p * p);
    for a in 0..p {
        for b in 0..p {
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            let mut e = DMatrix::zeros(2 * n, 2 * n);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..n {
                        for l in 0..n {
                            let (x, y) = (acc.slot(a, i, k), acc.slot(b, j, l));
                            m[(i * n + k, j * n + l)] = acc.second_moment(x, y);
                            e[(i * n + k, j * n + l)] =
                                acc.second_moment_stderr(x, y).unwrap_or(0.0);
                        }
                    }
                }
            }
            blocks.push(m);
            errs.push(e);
        }
    }
    let mut f = CovarianceField::new(
        acc.probes().to_vec(),
        n,
        blocks,
        Provenance::Empirical {
            samples: acc.count(),
        },
    )?;
    f.stderr = Some(errs);
    Ok(f)
}
