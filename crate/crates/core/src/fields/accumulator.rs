use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::FieldState;
use crate::error::{invalid, CrystalError, Result};
use crate::lattice::LatticePoint;

/// Running first and second moments of `Y^i_k(z)` over a probe set.
///
/// Entry `(p, i, k)` of the probe vector is stored at `(2 p + i) n + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    probes: Vec<LatticePoint>,
    n: usize,
    count: u64,
    sum: Vec<f64>,
    prod: Vec<f64>,
    prod_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    probes: Vec<LatticePoint>,
    n: usize,
    count: u64,
    width: usize,
}

impl EnsembleAccumulator {
    pub fn new(probes: Vec<LatticePoint>, n: usize) -> Self {
        let w = probes.len() * 2 * n;
        Self {
            probes,
            n,
            count: 0,
            sum: vec![0.0; w],
            prod: vec![0.0; w * w],
            prod_sq: vec![0.0; w * w],
        }
    }

    pub fn probes(&self) -> &[LatticePoint] {
        &self.probes
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn width(&self) -> usize {
        self.sum.len()
    }

    pub fn slot(&self, p: usize, i: usize, k: usize) -> usize {
        (2 * p + i) * self.n + k
    }

    /// Probe vector of a state; fails on probes outside its box.
    pub fn extract(&self, y: &FieldState) -> Result<Vec<f64>> {
        if y.n != self.n {
            return invalid("component count differs from the accumulator");
        }
        let mut x = vec![0.0; self.width()];
        for (p, z) in self.probes.iter().enumerate() {
            let site = y
                .lbox
                .index_checked(&z.0)
                .ok_or_else(|| CrystalError::OutOfBox { point: z.0.clone() })?;
            for i in 0..2 {
                for k in 0..self.n {
                    x[self.slot(p, i, k)] = y.get(i, site, k);
                }
            }
        }
        Ok(x)
    }

    pub fn accumulate(&mut self, y: &FieldState) -> Result<()> {
        let x = self.extract(y)?;
        self.push(&x);
        Ok(())
    }

    pub fn push(&mut self, x: &[f64]) {
        let w = self.width();
        assert_eq!(x.len(), w, "probe vector width");
        for a in 0..w {
            self.sum[a] += x[a];
            let row = a * w;
            for b in 0..w {
                let p = x[a] * x[b];
                self.prod[row + b] += p;
                self.prod_sq[row + b] += p * p;
            }
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.probes != other.probes || self.n != other.n {
            return invalid("cannot merge accumulators over different probes");
        }
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.prod.iter_mut().zip(&other.prod) {
            *a += b;
        }
        for (a, b) in self.prod_sq.iter_mut().zip(&other.prod_sq) {
            *a += b;
        }
        Ok(())
    }

    pub fn mean(&self, a: usize) -> f64 {
        self.sum[a] / self.count as f64
    }

    /// Raw second moment `E[x_a x_b]` (the mean is zero by assumption).
    pub fn second_moment(&self, a: usize, b: usize) -> f64 {
        self.prod[a * self.width() + b] / self.count as f64
    }

    /// Standard error of [`Self::second_moment`] from the sample variance of
    /// the products.
    pub fn second_moment_stderr(&self, a: usize, b: usize) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let m = self.count as f64;
        let idx = a * self.width() + b;
        let mean = self.prod[idx] / m;
        let var = (self.prod_sq[idx] / m - mean * mean).max(0.0) * m / (m - 1.0);
        Some((var / m).sqrt())
    }

    /// Binary checkpoint: one JSON header line, then `sum`, `prod` and
    /// `prod_sq` as little-endian doubles.
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: "HCACC1".into(),
            probes: self.probes.clone(),
            n: self.n,
            count: self.count,
            width: self.width(),
        };
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for x in self.sum.iter().chain(&self.prod).chain(&self.prod_sq) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(&line)?;
        if header.format != "HCACC1" || header.width != header.probes.len() * 2 * header.n {
            return Err(CrystalError::Format("not an accumulator checkpoint".into()));
        }
        let w = header.width;
        let mut read = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            let mut b = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let sum = read(w)?;
        let prod = read(w * w)?;
        let prod_sq = read(w * w)?;
        Ok(Self {
            probes: header.probes,
            n: header.n,
            count: header.count,
            sum,
            prod,
            prod_sq,
        })
    }
}
