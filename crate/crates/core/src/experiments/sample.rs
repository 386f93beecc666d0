use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{empirical_covariance, CovariancePropagator};
use crate::dynamics::{apply_symbols, odd_extension, restrict_half, HalfSpace, PropagatorSymbol};
use crate::error::{invalid, Result};
use crate::experiments::{ExperimentConfig, RunContext};
use crate::fields::{sample_rng, EnsembleAccumulator, HalfSampler};
use crate::lattice::LatticePoint;

/// Samples per work unit. Units are merged in index order, so results do not
/// depend on the worker count.
pub const CHUNK: u64 = 500;
/// Work units between checkpoints.
const BATCH: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Progress {
    seed: u64,
    samples: u64,
    chunk: u64,
    chunks_done: u64,
    times: Vec<f64>,
    probes: Vec<LatticePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub samples: u64,
    pub times: Vec<f64>,
    /// Largest `|empirical - exact| / stderr` at each time.
    pub max_z_score: Vec<f64>,
    pub passed: bool,
}

/// Probe moments of `Y(t)` over samples `0..samples` for every time. Starts
/// from `state` (the merge of the first `chunks_done` units) and calls
/// `checkpoint` after every batch.
#[allow(clippy::too_many_arguments)]
pub fn sample_ensemble(
    hs: &HalfSpace,
    sampler: &HalfSampler,
    probes: &[LatticePoint],
    times: &[f64],
    seed: u64,
    samples: u64,
    mut state: Option<(u64, Vec<EnsembleAccumulator>)>,
    mut checkpoint: impl FnMut(u64, &[EnsembleAccumulator]) -> Result<()>,
) -> Result<Vec<EnsembleAccumulator>> {
    let n = hs.n();
    let symbols: Vec<PropagatorSymbol> = times.iter().map(|&t| hs.propagator(t)).collect();
    let (mut done, mut accs) = state
        .take()
        .unwrap_or_else(|| (0, times.iter().map(|_| EnsembleAccumulator::new(probes.to_vec(), n)).collect()));
    let chunks = samples.div_ceil(CHUNK);
    while done < chunks {
        let end = (done + BATCH).min(chunks);
        let parts: Vec<Vec<EnsembleAccumulator>> = (done..end)
            .into_par_iter()
            .map(|c| {
                let mut local: Vec<EnsembleAccumulator> =
                    times.iter().map(|_| EnsembleAccumulator::new(probes.to_vec(), n)).collect();
                for m in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                    let y0 = sampler.sample(&mut sample_rng(seed, m))?;
                    let star = odd_extension(&y0)?;
                    for (acc, sym) in local.iter_mut().zip(&symbols) {
                        let y = restrict_half(&apply_symbols(&star, &sym.blocks, false)?, &hs.half)?;
                        acc.accumulate(&y)?;
                    }
                }
                Ok(local)
            })
            .collect::<Result<_>>()?;
        for part in parts {
            for (acc, p) in accs.iter_mut().zip(&part) {
                acc.merge(p)?;
            }
        }
        done = end;
        checkpoint(done, &accs)?;
    }
    Ok(accs)
}

fn load_progress(dir: &Path, expect: &Progress) -> Result<Option<(u64, Vec<EnsembleAccumulator>)>> {
    let path = dir.join("progress.json");
    if !path.is_file() {
        return Ok(None);
    }
    let found: Progress = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let same = Progress {
        chunks_done: found.chunks_done,
        ..expect.clone()
    };
    if found != same {
        log::warn!("ignoring checkpoints from a different configuration in {}", dir.display());
        return Ok(None);
    }
    let accs = (0..expect.times.len())
        .map(|i| EnsembleAccumulator::read_checkpoint(&dir.join(format!("t{i:03}.ckpt"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some((found.chunks_done, accs)))
}

/// Generates (or resumes) the ensemble and compares the empirical covariance
/// with exact propagation at every time.
pub fn run_sample(config: &ExperimentConfig, ctx: &mut RunContext) -> Result<SampleReport> {
    if config.times.is_empty() || config.probes.is_empty() {
        return invalid("sample needs times and probes");
    }
    let kernel = config.kernel()?;
    let hs = HalfSpace::new(&kernel, config.half_box()?)?;
    let spec = config.covariance_spec(&kernel)?;
    let sampler = HalfSampler::new(&spec, &hs.half, config.noise)?;
    let ckpt_dir = ctx.path("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let expect = Progress {
        seed: config.seed,
        samples: config.samples,
        chunk: CHUNK,
        chunks_done: 0,
        times: config.times.clone(),
        probes: config.probes.clone(),
    };
    let state = load_progress(&ckpt_dir, &expect)?;
    if let Some((done, _)) = &state {
        log::info!("resuming after {} of {} samples", (done * CHUNK).min(config.samples), config.samples);
    }
    let accs = sample_ensemble(
        &hs,
        &sampler,
        &config.probes,
        &config.times,
        config.seed,
        config.samples,
        state,
        |done, accs| {
            for (i, acc) in accs.iter().enumerate() {
                acc.write_checkpoint(&ckpt_dir.join(format!("t{i:03}.ckpt")))?;
            }
            let p = Progress {
                chunks_done: done,
                ..expect.clone()
            };
            std::fs::write(ckpt_dir.join("progress.json"), serde_json::to_string_pretty(&p)?)?;
            Ok(())
        },
    )?;
    let prop = CovariancePropagator::factored(&hs, &spec)?;
    let mut max_z = Vec::new();
    for (i, (acc, &t)) in accs.iter().zip(&config.times).enumerate() {
        let emp = empirical_covariance(acc)?;
        let exact = prop.propagate(&config.probes, t)?;
        max_z.push(emp.max_z_score(&exact)?);
        ctx.write(&format!("covariance_t{i:03}.csv"), emp.to_csv().as_bytes())?;
        ctx.record(&format!("checkpoints/t{i:03}.ckpt"))?;
    }
    let report = SampleReport {
        samples: config.samples,
        times: config.times.clone(),
        passed: max_z.iter().all(|&z| z <= config.tolerances.z_score),
        max_z_score: max_z,
    };
    ctx.write_json("sample.json", &report)?;
    Ok(report)
}
