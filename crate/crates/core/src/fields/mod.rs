mod accumulator;
mod noise;
mod sampler;
mod spec;

pub use accumulator::EnsembleAccumulator;
pub use noise::{sample_rng, NoiseLaw};
pub use sampler::{crop_axis0, cutoff_halfspace, psd_sqrt, FieldSampler, HalfSampler};
pub use spec::{
    triangle_hat, CovarianceModel, CovarianceSpec, Cutoff, Recipe, SpecFile, TableEntry,
};
