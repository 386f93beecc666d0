use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex64;
use rand::Rng;

use crate::dynamics::{apply_pointwise, channels_to_lattice, channels_to_torus};
use crate::dynamics::{FieldState, Flavor};
use crate::error::{invalid, CrystalError, Result};
use crate::fft::LatticeFft;
use crate::fields::{CovarianceModel, CovarianceSpec, Cutoff, NoiseLaw, Recipe};
use crate::lattice::{LatticeBox, TorusGrid};
use crate::CMat;

/// Draws full-space fields with covariance `q_0` on a periodic box.
pub struct FieldSampler {
    spec: CovarianceSpec,
    lbox: LatticeBox,
    noise: NoiseLaw,
    fft: Option<LatticeFft>,
    roots: Vec<CMat>,
}

/// Hermitian PSD square root; tiny negative eigenvalues are clamped.
pub fn psd_sqrt(q: &CMat) -> Result<CMat> {
    let eig = SymmetricEigen::new(q.clone());
    let scale = 1.0 + eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut out = CMat::zeros(q.nrows(), q.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -1e-10 * scale {
            return invalid(format!("covariance symbol is not PSD (eigenvalue {l:e})"));
        }
        let v = eig.eigenvectors.column(i);
        out += (&v * v.adjoint()) * Complex64::from(l.max(0.0).sqrt());
    }
    Ok(out)
}

impl FieldSampler {
    pub fn new(spec: &CovarianceSpec, lbox: &LatticeBox, noise: NoiseLaw) -> Result<Self> {
        if lbox.dim() != spec.d {
            return invalid("box and covariance dimensions differ");
        }
        if let Some(range) = spec.range() {
            for (axis, &e) in lbox.extents.iter().enumerate() {
                if e < 2 * range {
                    return Err(CrystalError::Aliasing {
                        axis,
                        extent: e,
                        range,
                    });
                }
            }
        }
        let (fft, roots) = match spec.recipe {
            Recipe::MovingAverage => {
                if !matches!(spec.model, CovarianceModel::Triangular { .. }) {
                    return invalid("moving-average synthesis needs the triangular model");
                }
                (None, Vec::new())
            }
            Recipe::Spectral => {
                let grid = TorusGrid::for_box(lbox);
                let roots = (0..grid.len())
                    .map(|k| psd_sqrt(&spec.symbol(&grid.theta(k))?))
                    .collect::<Result<Vec<_>>>()?;
                (Some(LatticeFft::new(&lbox.extents)), roots)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            lbox: lbox.clone(),
            noise,
            fft,
            roots,
        })
    }

    pub fn lbox(&self) -> &LatticeBox {
        &self.lbox
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<FieldState> {
        let n = self.spec.n;
        let len = self.lbox.sites() * n;
        let mut u = vec![0.0; len];
        let mut v = vec![0.0; len];
        self.noise.fill(rng, &mut u);
        self.noise.fill(rng, &mut v);
        match self.spec.recipe {
            Recipe::MovingAverage => {
                let CovarianceModel::Triangular { n0 } = self.spec.model else {
                    unreachable!()
                };
                box_filter(&self.lbox, n0, &mut u);
                box_filter(&self.lbox, n0, &mut v);
                FieldState::new(self.lbox.clone(), n, u, v, Flavor::Full)
            }
            Recipe::Spectral => {
                let fft = self.fft.as_ref().expect("spectral sampler has an FFT plan");
                let mut hat = channels_to_torus(fft, n, &u, &v);
                apply_pointwise(&mut hat, |k| self.roots[k].clone());
                let (u, v, imag) = channels_to_lattice(fft, n, hat);
                let scale = 1.0 + u.iter().chain(&v).fold(0.0f64, |a, b| a.max(b.abs()));
                if imag > 1e-12 * scale {
                    return Err(CrystalError::Format(format!(
                        "sampled field has imaginary part {imag:e}"
                    )));
                }
                FieldState::new(self.lbox.clone(), n, u, v, Flavor::Full)
            }
        }
    }
}

/// `X(z) = sum_{w in {0..N0-1}^d} xi(z - w)`, one axis at a time with wrap.
fn box_filter(lbox: &LatticeBox, n0: usize, data: &mut [f64]) {
    let d = lbox.dim();
    let mut line = Vec::new();
    for axis in 0..d {
        let len = lbox.extents[axis];
        let stride: usize = lbox.extents[axis + 1..].iter().product();
        let block = len * stride;
        for chunk in data.chunks_exact_mut(block) {
            for s in 0..stride {
                line.clear();
                line.extend((0..len).map(|k| chunk[k * stride + s]));
                for k in 0..len {
                    let mut acc = 0.0;
                    for w in 0..n0 {
                        acc += line[(k + len - w % len) % len];
                    }
                    chunk[k * stride + s] = acc;
                }
            }
        }
    }
}

/// `Y_0(z) = zeta(z1) X(z)` with raw axis-0 coordinates; the wall layer is zero.
pub fn cutoff_halfspace(x: &FieldState, cutoff: Cutoff) -> FieldState {
    let mut y = x.clone();
    let n = x.n;
    for s in 0..x.sites() {
        let z1 = x.lbox.coords(s)[0];
        let w = cutoff.zeta(z1);
        if w != 1.0 {
            for k in 0..n {
                y.u[s * n + k] *= w;
                y.v[s * n + k] *= w;
            }
        }
    }
    y.flavor = Flavor::Half;
    y
}

/// Keeps the first `l1` layers along axis 0.
pub fn crop_axis0(x: &FieldState, l1: usize) -> Result<FieldState> {
    if l1 > x.lbox.extents[0] {
        return invalid("crop extent exceeds the box");
    }
    let mut extents = x.lbox.extents.clone();
    extents[0] = l1;
    let lbox = LatticeBox::new(extents)?;
    let keep = lbox.sites() * x.n;
    FieldState::new(
        lbox,
        x.n,
        x.u[..keep].to_vec(),
        x.v[..keep].to_vec(),
        x.flavor,
    )
}

/// Initial half-space states `Y_0 = zeta X` on a slab. The field is drawn
/// on a box padded along axis 0 so the periodic wrap does not correlate the
/// far wall with the near one.
pub struct HalfSampler {
    inner: FieldSampler,
    half: LatticeBox,
    cutoff: Cutoff,
}

impl HalfSampler {
    pub fn new(spec: &CovarianceSpec, half: &LatticeBox, noise: NoiseLaw) -> Result<Self> {
        let pad = spec.range().unwrap_or(half.extents[0]);
        let mut extents = half.extents.clone();
        extents[0] += pad;
        let inner = FieldSampler::new(spec, &LatticeBox::new(extents)?, noise)?;
        Ok(Self {
            inner,
            half: half.clone(),
            cutoff: spec.cutoff,
        })
    }

    pub fn half(&self) -> &LatticeBox {
        &self.half
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<FieldState> {
        let x = self.inner.sample(rng)?;
        Ok(cutoff_halfspace(&crop_axis0(&x, self.half.extents[0])?, self.cutoff))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sample_rng;

    #[test]
    fn box_filter_matches_direct_sum() {
        let lbox = LatticeBox::new(vec![5, 4]).unwrap();
        let data: Vec<f64> = (0..lbox.sites()).map(|i| (i as f64).sin()).collect();
        let mut out = data.clone();
        box_filter(&lbox, 2, &mut out);
        for s in 0..lbox.sites() {
            let z = lbox.coords(s);
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    acc += data[lbox.index(&[z[0] - a, z[1] - b])];
                }
            }
            assert!((acc - out[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn cutoff_clears_wall_and_keeps_bulk() {
        let spec = CovarianceSpec::triangular(2, 1).unwrap();
        let s = HalfSampler::new(&spec, &LatticeBox::new(vec![16]).unwrap(), NoiseLaw::Gaussian).unwrap();
        let y = s.sample(&mut sample_rng(3, 0)).unwrap();
        assert_eq!(y.boundary_max(), 0.0);
        assert_eq!(y.flavor, Flavor::Half);
        assert_eq!(y.lbox.extents, vec![16]);
    }

    #[test]
    fn aliasing_is_rejected() {
        let spec = CovarianceSpec::triangular(3, 1).unwrap();
        assert!(matches!(
            FieldSampler::new(&spec, &LatticeBox::new(vec![5]).unwrap(), NoiseLaw::Gaussian),
            Err(CrystalError::Aliasing { .. })
        ));
    }

    #[test]
    fn same_seed_same_field() {
        let spec = CovarianceSpec::triangular(2, 2).unwrap();
        for recipe in [Recipe::MovingAverage, Recipe::Spectral] {
            let spec = spec.clone().with_recipe(recipe).unwrap();
            let s = FieldSampler::new(&spec, &LatticeBox::cube(2, 8).unwrap(), NoiseLaw::Gaussian).unwrap();
            let a = s.sample(&mut sample_rng(5, 1)).unwrap();
            let b = s.sample(&mut sample_rng(5, 1)).unwrap();
            let c = s.sample(&mut sample_rng(5, 2)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }
}
