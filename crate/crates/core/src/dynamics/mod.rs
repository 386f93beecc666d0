mod energy;
mod evolve;
mod probe;
mod propagator;
mod state;
mod verlet;

pub use energy::{energy, weighted_norm};
pub use evolve::{
    adjoint_evolve, apply_symbols, evolve_full, evolve_half, odd_extension, pairing_half, restrict_half, HalfMethod,
    HalfSpace,
};
pub use probe::TestFunction;
pub use propagator::{green_function, propagator_at, propagator_hat, PropagatorSymbol};
pub use state::{FieldState, Flavor, SnapshotSidecar};
pub use verlet::timestep_oracle;
pub(crate) use propagator::{apply_pointwise, channels_to_lattice, channels_to_torus};
