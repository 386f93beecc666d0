mod conditions;
mod kernel;
mod table;

pub use conditions::{validate_conditions, ConditionEntry, CriticalScan, ConditionReport, ConditionStatus, Tolerances};
pub use kernel::{InteractionKernel, KernelFamily, KernelFile, KernelFileEntry, KernelFlags};
pub use table::{
    build_spectral_table, group_velocity_bound, sinc, Band, SlopeMethod, SpectralPoint,
    SpectralTable, ACOUSTIC_EPS,
};
