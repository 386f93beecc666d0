use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Site noise, standardised to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    Gaussian,
    Rademacher,
    Uniform,
}

impl NoiseLaw {
    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            NoiseLaw::Gaussian => StandardNormal.sample(rng),
            NoiseLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseLaw::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    pub fn fill(&self, rng: &mut impl Rng, out: &mut [f64]) {
        for x in out {
            *x = self.draw(rng);
        }
    }

    /// Excess kurtosis of one draw.
    pub fn excess_kurtosis(&self) -> f64 {
        match self {
            NoiseLaw::Gaussian => 0.0,
            NoiseLaw::Rademacher => -2.0,
            NoiseLaw::Uniform => -1.2,
        }
    }
}

/// Generator for sample `index` of the ensemble seeded by `master`. Streams
/// are independent of the order in which samples are produced.
pub fn sample_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}
