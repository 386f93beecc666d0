use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::TestFunction;
use crate::error::{invalid, CrystalError, Result};
use crate::fields::{CovarianceSpec, NoiseLaw, SpecFile};
use crate::lattice::{LatticeBox, LatticePoint};
use crate::spectral::{InteractionKernel, KernelFile, Tolerances};

/// Kernel given inline or as a path to a kernel file (relative paths are
/// resolved against the config file's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSource {
    File { file: PathBuf },
    Inline(KernelFile),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis for condition validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<usize>,
    /// Points per axis of the offset grid for limit symbols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    /// Samples per axis path in dispersion tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyTolerances {
    pub conditions: Tolerances,
    /// Final relative error of `Q_t` against `Q_inf`.
    pub convergence: f64,
    /// Allowed growth between consecutive errors.
    pub monotone_slack: f64,
    /// Allowed change of `Q_inf` under `N -> 2N`.
    pub refinement: f64,
    pub stationarity: f64,
    pub decay_slope: f64,
    pub cone_mass: f64,
    /// Empirical vs exact covariance, in standard errors.
    pub z_score: f64,
    /// Weighted norm bound relative to its initial value.
    pub norm_growth: f64,
}

impl Default for StudyTolerances {
    fn default() -> Self {
        Self {
            conditions: Tolerances::default(),
            convergence: 0.05,
            monotone_slack: 0.2,
            refinement: 0.01,
            stationarity: 0.02,
            decay_slope: 0.15,
            cone_mass: 1e-6,
            z_score: 4.0,
            norm_growth: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarityConfig {
    pub r#box: Vec<usize>,
    pub times: Vec<f64>,
    pub probes: Vec<LatticePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformBoundConfig {
    pub times: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSource,
    /// Half-space slab extents; axis 0 is the normal direction.
    pub r#box: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<SpecFile>,
    /// Cutoff parameter `a`; overrides the one in `covariance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub probes: Vec<LatticePoint>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise: NoiseLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub test_functions: Vec<TestFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<StationarityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_bound: Option<UniformBoundConfig>,
    #[serde(default)]
    pub tolerances: StudyTolerances,
}

fn default_samples() -> u64 {
    10_000
}

fn default_noise() -> NoiseLaw {
    NoiseLaw::Gaussian
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        if let KernelSource::File { file } = &cfg.kernel {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.kernel = KernelSource::File { file: base.join(file) };
            }
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.r#box.is_empty() || self.r#box.iter().any(|&e| e == 0) {
            return invalid("box extents must be positive");
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return invalid("times must be finite and non-negative");
        }
        let d = self.r#box.len();
        if self.probes.iter().any(|p| p.dim() != d) {
            return invalid("probe dimension differs from the box");
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<InteractionKernel> {
        let k = match &self.kernel {
            KernelSource::Inline(f) => f.build()?,
            KernelSource::File { file } => InteractionKernel::from_json_file(file)?,
        };
        if k.dim() != self.r#box.len() {
            return invalid("kernel and box dimensions differ");
        }
        Ok(k)
    }

    pub fn half_box(&self) -> Result<LatticeBox> {
        LatticeBox::new(self.r#box.clone())
    }

    pub fn covariance_spec(&self, kernel: &InteractionKernel) -> Result<CovarianceSpec> {
        let file = self
            .covariance
            .as_ref()
            .ok_or_else(|| CrystalError::InvalidParameter("config has no covariance section".into()))?;
        let spec = file.build(kernel)?;
        Ok(match self.cutoff {
            Some(a) => spec.with_cutoff(a),
            None => spec,
        })
    }

    pub fn d(&self) -> usize {
        self.r#box.len()
    }

    pub fn validation_points(&self) -> usize {
        self.grid.validation.unwrap_or(match self.d() {
            1 => 256,
            2 => 64,
            _ => 12,
        })
    }

    pub fn limit_points(&self) -> usize {
        self.grid.limit.unwrap_or(match self.d() {
            1 => 8192,
            2 => 256,
            _ => 32,
        })
    }

    pub fn dispersion_points(&self) -> usize {
        self.grid.dispersion.unwrap_or(256)
    }

    /// Config with the kernel inlined and every defaulted grid size written
    /// out, as stored beside run outputs.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        out.kernel = KernelSource::Inline(self.kernel()?.to_file());
        out.grid = GridConfig {
            validation: Some(self.validation_points()),
            limit: Some(self.limit_points()),
            dispersion: Some(self.dispersion_points()),
        };
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
