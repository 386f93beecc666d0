//! Multi-dimensional FFT on row-major buffers.
//!
//! Sign convention: the lattice-to-torus transform is
//! `f^(theta) = sum_z f(z) e^{+i z.theta}` and its inverse carries
//! `e^{-i z.theta}` with the `1/N` normalisation.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct LatticeFft {
    shape: Vec<usize>,
    to_torus: Vec<Arc<dyn Fft<f64>>>,
    to_lattice: Vec<Arc<dyn Fft<f64>>>,
}

impl LatticeFft {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        // rustfft's "inverse" carries e^{+i...}, matching the torus convention.
        let to_torus = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let to_lattice = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        Self {
            shape: shape.to_vec(),
            to_torus,
            to_lattice,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_torus(&self, data: &mut [Complex64]) {
        self.run(data, &self.to_torus);
    }

    pub fn to_lattice(&self, data: &mut [Complex64]) {
        self.run(data, &self.to_lattice);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len(), "buffer does not match FFT shape");
        let d = self.shape.len();
        for axis in 0..d {
            let n = self.shape[axis];
            if n == 1 {
                continue;
            }
            let stride: usize = self.shape[axis + 1..].iter().product();
            let plan = &plans[axis];
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            if stride == 1 {
                for line in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(line, &mut scratch);
                }
                continue;
            }
            let block = n * stride;
            let mut line = vec![Complex64::default(); n];
            for chunk in data.chunks_exact_mut(block) {
                for s in 0..stride {
                    for k in 0..n {
                        line[k] = chunk[k * stride + s];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..n {
                        chunk[k * stride + s] = line[k];
                    }
                }
            }
        }
    }
}
