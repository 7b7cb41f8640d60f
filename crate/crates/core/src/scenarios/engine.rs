use rayon::prelude::*;
use serde::Serialize;

use crate::correlator::{CorrelationAccumulator, IntensityMoments};
use crate::error::{Error, Result};
use crate::grid::IntensityGrid;
use crate::optics::Arm;
use crate::rng::frame_seed;
use crate::source::{beam_split, SplitterSpec, ThermalSource};

/// Frames per work unit. Fixed so the partition never depends on the pool size.
const CHUNK: u64 = 128;

/// Which frames to simulate and on how many threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Execution {
    pub frames: u64,
    pub master_seed: u64,
    pub workers: usize,
    /// Index of the first frame; disjoint ranges give independent batches.
    pub first_frame: u64,
}

impl Default for Execution {
    fn default() -> Self {
        Self {
            frames: 20_000,
            master_seed: 1,
            workers: 1,
            first_frame: 0,
        }
    }
}

impl Execution {
    pub fn with_frames(self, frames: u64) -> Self {
        Self { frames, ..self }
    }

    pub fn batch(self, index: u64, frames: u64) -> Self {
        Self {
            frames,
            first_frame: self.first_frame + index * frames,
            ..self
        }
    }
}

/// Per-shard estimator state.
#[derive(Clone, Debug, Default)]
pub(crate) struct Tally {
    pub corr: Vec<CorrelationAccumulator>,
    pub moments: Vec<IntensityMoments>,
    /// Unordered scalar samples (sorted after the merge).
    pub samples: Vec<f64>,
}

impl Tally {
    fn merge(&mut self, other: Tally) -> Result<()> {
        for (a, b) in self.corr.iter_mut().zip(&other.corr) {
            a.merge(b)?;
        }
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b)?;
        }
        self.samples.extend(other.samples);
        Ok(())
    }
}

/// Runs `step` on every frame seed of `exec` and merges the shard tallies.
///
/// All sums are exact, so the result does not depend on the worker count.
pub(crate) fn run_frames<I, F>(exec: &Execution, init: I, step: F) -> Result<Tally>
where
    I: Fn() -> Tally + Sync,
    F: Fn(&mut Tally, u64) -> Result<()> + Sync,
{
    if exec.frames < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            have: exec.frames,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exec.workers.max(1))
        .build()
        .map_err(|e| Error::WorkerPool(e.to_string()))?;
    let start = exec.first_frame;
    let end = start + exec.frames;
    let chunks = exec.frames.div_ceil(CHUNK);
    let out = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut t = init();
                let lo = start + c * CHUNK;
                for f in lo..(lo + CHUNK).min(end) {
                    step(&mut t, frame_seed(exec.master_seed, f))?;
                }
                Ok(t)
            })
            .try_reduce_with(|mut a, b| {
                a.merge(b)?;
                Ok(a)
            })
    });
    let mut t = out.expect("at least one chunk")?;
    t.samples.sort_by(f64::total_cmp);
    Ok(t)
}

/// Source, splitter and the two arms of one setup.
pub(crate) struct Bench {
    pub source: ThermalSource,
    pub splitter: SplitterSpec,
    pub object: Arm,
    pub references: Vec<Arm>,
}

/// Detector intensities of one frame.
pub(crate) struct Frame {
    pub i1: Vec<f64>,
    pub i2: Vec<Vec<f64>>,
}

impl Bench {
    pub fn frame(&self, seed: u64) -> Result<Frame> {
        let a = self.source.draw_illuminated(seed);
        let (b1, b2) = beam_split(&a, &self.splitter);
        let i1 = intensity(self.object.propagate(&b1)?.into_values());
        let i2 = self
            .references
            .iter()
            .map(|r| Ok(intensity(r.propagate(&b2)?.into_values())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Frame { i1, i2 })
    }
}

pub(crate) fn intensity(v: Vec<crate::grid::Complex64>) -> Vec<f64> {
    v.iter().map(|z| z.norm_sqr()).collect()
}

pub(crate) fn binned(
    lattice: &crate::grid::Lattice,
    values: Vec<f64>,
    factor: usize,
) -> Result<Vec<f64>> {
    if factor == 1 {
        return Ok(values);
    }
    Ok(IntensityGrid::new(lattice.clone(), values)?
        .binned(factor)?
        .values()
        .to_vec())
}
