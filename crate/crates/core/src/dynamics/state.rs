use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CrystalError, Result};
use crate::lattice::LatticeBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// Periodic box standing in for `Z^d`.
    Full,
    /// Slab `z1 = 0..L1-1` of the half-space; the layer `z1 = 0` is the wall.
    Half,
}

/// Displacement `u` and velocity `v`, each an `n`-vector per site, stored
/// site-major (`u[site * n + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub lbox: LatticeBox,
    pub n: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub flavor: Flavor,
}

const MAGIC: &[u8; 4] = b"HCFS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSidecar {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub n: usize,
    pub extents: Vec<usize>,
    pub flavor: Flavor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    pub payload_bytes: u64,
}

impl FieldState {
    pub fn zeros(lbox: LatticeBox, n: usize, flavor: Flavor) -> Self {
        let len = lbox.sites() * n;
        Self {
            lbox,
            n,
            u: vec![0.0; len],
            v: vec![0.0; len],
            flavor,
        }
    }

    pub fn new(lbox: LatticeBox, n: usize, u: Vec<f64>, v: Vec<f64>, flavor: Flavor) -> Result<Self> {
        let len = lbox.sites() * n;
        if u.len() != len || v.len() != len {
            return invalid(format!(
                "field length mismatch: expected {len}, got u = {}, v = {}",
                u.len(),
                v.len()
            ));
        }
        Ok(Self {
            lbox,
            n,
            u,
            v,
            flavor,
        })
    }

    pub fn dim(&self) -> usize {
        self.lbox.dim()
    }

    pub fn sites(&self) -> usize {
        self.lbox.sites()
    }

    /// Component `k` of `Y^i` at a site: `i = 0` displacement, `i = 1` velocity.
    pub fn get(&self, i: usize, site: usize, k: usize) -> f64 {
        let src = if i == 0 { &self.u } else { &self.v };
        src[site * self.n + k]
    }

    pub fn set(&mut self, i: usize, site: usize, k: usize, value: f64) {
        let dst = if i == 0 { &mut self.u } else { &mut self.v };
        dst[site * self.n + k] = value;
    }

    /// Largest absolute value on the wall layer `z1 = 0`.
    pub fn boundary_max(&self) -> f64 {
        let per_layer = self.sites() / self.lbox.extents[0];
        let w = per_layer * self.n;
        self.u[..w]
            .iter()
            .chain(&self.v[..w])
            .fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn norm_sq(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|x| x * x).sum()
    }

    /// Real pairing `sum_z u.u' + v.v'` over the whole box.
    pub fn dot(&self, other: &Self) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Half-space copy with `z1 = 0` cleared.
    pub fn into_half(mut self) -> Self {
        let w = self.sites() / self.lbox.extents[0] * self.n;
        self.u[..w].iter_mut().for_each(|x| *x = 0.0);
        self.v[..w].iter_mut().for_each(|x| *x = 0.0);
        self.flavor = Flavor::Half;
        self
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    /// Binary snapshot: magic, version, `d`, `n`, flavor, extents, then `u`
    /// and `v` as little-endian doubles. A JSON sidecar sits next to it.
    pub fn write_snapshot(&self, path: &Path, time: Option<f64>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&[match self.flavor {
            Flavor::Full => 0u8,
            Flavor::Half => 1u8,
        }])?;
        for &e in &self.lbox.extents {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for x in self.u.iter().chain(&self.v) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = SnapshotSidecar {
            format: "HCFS".into(),
            version: VERSION,
            d: self.dim(),
            n: self.n,
            extents: self.lbox.extents.clone(),
            flavor: self.flavor,
            time,
            payload_bytes: (self.u.len() * 2 * 8) as u64,
        };
        std::fs::write(
            Self::sidecar_path(path),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CrystalError::Format("not a field snapshot".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CrystalError::Format(format!("unsupported snapshot version {version}")));
        }
        let d = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let mut flavor = [0u8; 1];
        r.read_exact(&mut flavor)?;
        let flavor = match flavor[0] {
            0 => Flavor::Full,
            1 => Flavor::Half,
            f => return Err(CrystalError::Format(format!("unknown flavor tag {f}"))),
        };
        let mut extents = Vec::with_capacity(d);
        for _ in 0..d {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            extents.push(u64::from_le_bytes(b) as usize);
        }
        let lbox = LatticeBox::new(extents)?;
        let len = lbox.sites() * n;
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            let mut b = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let u = read_vec(len)?;
        let v = read_vec(len)?;
        Self::new(lbox, n, u, v, flavor)
    }

    /// CSV of the line through the transverse origin along axis 0:
    /// `z1,k,u,v` with full-precision scientific notation.
    pub fn slice_csv(&self) -> String {
        let mut s = String::from("z1,k,u,v\n");
        let d = self.dim();
        for z1 in 0..self.lbox.extents[0] {
            let mut z = vec![0i64; d];
            z[0] = z1 as i64;
            let site = self.lbox.index(&z);
            let label = match self.flavor {
                Flavor::Half => z1 as i64,
                Flavor::Full => self.lbox.signed_coords(site)[0],
            };
            for k in 0..self.n {
                s.push_str(&format!(
                    "{label},{k},{:.17e},{:.17e}\n",
                    self.get(0, site, k),
                    self.get(1, site, k)
                ));
            }
        }
        s
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let lbox = LatticeBox::new(vec![4, 3]).unwrap();
        let mut s = FieldState::zeros(lbox, 2, Flavor::Half);
        for (i, x) in s.u.iter_mut().enumerate() {
            *x = i as f64 * 0.25 - 1.0;
        }
        s.v[5] = std::f64::consts::PI;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("state.bin");
        s.write_snapshot(&p, Some(1.5)).unwrap();
        assert_eq!(FieldState::read_snapshot(&p).unwrap(), s);
        let side: SnapshotSidecar =
            serde_json::from_str(&std::fs::read_to_string(FieldState::sidecar_path(&p)).unwrap())
                .unwrap();
        assert_eq!(side.time, Some(1.5));
        assert_eq!(side.extents, vec![4, 3]);
    }

    #[test]
    fn boundary_layer_is_first_block() {
        let lbox = LatticeBox::new(vec![3, 2]).unwrap();
        let mut s = FieldState::zeros(lbox.clone(), 1, Flavor::Full);
        s.u[lbox.index(&[1, 1])] = 2.0;
        assert_eq!(s.boundary_max(), 0.0);
        s.v[lbox.index(&[0, 1])] = -3.0;
        assert_eq!(s.boundary_max(), 3.0);
        assert_eq!(s.into_half().boundary_max(), 0.0);
    }
}
