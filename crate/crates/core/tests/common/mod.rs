#![allow(dead_code)]

use harmonic_crystal::dynamics::{FieldState, Flavor};
use harmonic_crystal::lattice::LatticeBox;
use harmonic_crystal::spectral::InteractionKernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn nn(d: usize, gamma: &[f64], mass: &[f64]) -> InteractionKernel {
    InteractionKernel::nearest_neighbor(d, gamma.len(), gamma, mass).unwrap()
}

pub fn lbox(extents: &[usize]) -> LatticeBox {
    LatticeBox::new(extents.to_vec()).unwrap()
}

/// Uniform entries in `[-1, 1]`; half-space states get a zero wall layer.
pub fn random_state(b: &LatticeBox, n: usize, flavor: Flavor, seed: u64) -> FieldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = b.sites() * n;
    let u = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = FieldState::new(b.clone(), n, u, v, flavor).unwrap();
    match flavor {
        Flavor::Half => x.into_half(),
        Flavor::Full => x,
    }
}

/// Random state supported in `lo <= z1 < hi` of a slab.
pub fn random_band(b: &LatticeBox, n: usize, lo: i64, hi: i64, seed: u64) -> FieldState {
    let mut x = random_state(b, n, Flavor::Half, seed);
    for s in 0..b.sites() {
        let z1 = b.coords(s)[0];
        if z1 < lo || z1 >= hi {
            for k in 0..n {
                x.set(0, s, k, 0.0);
                x.set(1, s, k, 0.0);
            }
        }
    }
    x
}
