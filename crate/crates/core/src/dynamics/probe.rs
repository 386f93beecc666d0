use serde::{Deserialize, Serialize};

use crate::dynamics::{FieldState, Flavor};
use crate::error::{invalid, CrystalError, Result};
use crate::lattice::LatticeBox;

/// Test functions `Psi` on the half-space slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// Unit vector at one site.
    Site {
        at: Vec<i64>,
        #[serde(default)]
        channel: usize,
        #[serde(default)]
        component: usize,
    },
    /// `exp(-|z - c|^2 / 2 w^2) cos(k.(z - c))` truncated to `|z - c|_inf <= radius`.
    /// Its spectrum is concentrated near `+-k`, which keeps it away from
    /// degenerate points of the dispersion.
    WavePacket {
        center: Vec<i64>,
        wavevector: Vec<f64>,
        width: f64,
        radius: usize,
        #[serde(default)]
        channel: usize,
        #[serde(default)]
        component: usize,
    },
}

impl TestFunction {
    pub fn channel_component(&self) -> (usize, usize) {
        match self {
            TestFunction::Site { channel, component, .. }
            | TestFunction::WavePacket { channel, component, .. } => (*channel, *component),
        }
    }

    /// Sup-norm distance from the support to its furthest point.
    pub fn reach(&self) -> f64 {
        match self {
            TestFunction::Site { at, .. } => at.iter().map(|c| c.abs()).max().unwrap_or(0) as f64,
            TestFunction::WavePacket { center, radius, .. } => {
                center.iter().map(|c| c.abs()).max().unwrap_or(0) as f64 + *radius as f64
            }
        }
    }

    pub fn build(&self, half: &LatticeBox, n: usize) -> Result<FieldState> {
        let (channel, component) = self.channel_component();
        if channel > 1 || component >= n {
            return invalid("test function channel must be 0 or 1 and component below n");
        }
        let mut psi = FieldState::zeros(half.clone(), n, Flavor::Half);
        let mut put = |z: &[i64], value: f64| -> Result<()> {
            if z.first().is_some_and(|&z1| z1 <= 0) {
                return Err(CrystalError::SupportViolation(format!(
                    "test function reaches the wall at {z:?}"
                )));
            }
            if z[0] >= half.extents[0] as i64 {
                return Err(CrystalError::SupportViolation(format!("{z:?} lies outside the box")));
            }
            // Transverse axes are periodic.
            let s = half.index(z);
            psi.set(channel, s, component, value);
            Ok(())
        };
        match self {
            TestFunction::Site { at, .. } => {
                if at.len() != half.dim() {
                    return invalid("test function dimension differs from the box");
                }
                put(at, 1.0)?;
            }
            TestFunction::WavePacket {
                center,
                wavevector,
                width,
                radius,
                ..
            } => {
                if center.len() != half.dim() || wavevector.len() != half.dim() || *width <= 0.0 {
                    return invalid("wave packet needs matching dimensions and a positive width");
                }
                let r = *radius as i64;
                for w in crate::lattice::offsets_within(half.dim(), r) {
                    let z: Vec<i64> = center.iter().zip(&w).map(|(c, o)| c + o).collect();
                    let r2: f64 = w.iter().map(|&o| (o * o) as f64).sum();
                    let phase: f64 = w.iter().zip(wavevector).map(|(&o, k)| o as f64 * k).sum();
                    put(&z, (-r2 / (2.0 * width * width)).exp() * phase.cos())?;
                }
            }
        }
        Ok(psi)
    }
}
