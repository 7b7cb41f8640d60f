use serde::Serialize;

use super::accumulator::{CorrelationMode, CorrelationReport};
use super::exact::ExactSums;
use crate::error::{Error, Result};
use crate::grid::{IntensityGrid, Lattice, Profile};

/// Translational (1D) or azimuthal (2D) average of g₂ against separation.
///
/// Each bin is Σ⟨I₁I₂⟩ / Σ⟨I₁⟩⟨I₂⟩ over the lags whose rounded |Δ|/pitch equals
/// the bin index, so bins are one pitch wide.
pub fn radial_autocorrelation(report: &CorrelationReport) -> Result<Profile> {
    let CorrelationMode::Lagged { max_lag, .. } = report.mode else {
        return Err(Error::ModeMismatch("radial profile needs a lagged report".into()));
    };
    let lat = &report.lattice;
    let pitch = lat.pitch()[0];
    let bins = if lat.rank() == 2 {
        max_lag[0].min(max_lag[1])
    } else {
        max_lag[0]
    };
    let mut num = vec![0.0; bins];
    let mut den = vec![0.0; bins];
    for k in 0..lat.len() {
        let (x, y) = lat.position(k);
        let r = ((x * x + y * y).sqrt() / pitch).round() as usize;
        if r < bins {
            num[r] += report.mean_i1i2[k];
            den[r] += report.background[k];
        }
    }
    let positions = (0..bins).map(|r| r as f64 * pitch).collect();
    let values = num
        .iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
        .collect();
    Ok(Profile::new(positions, values))
}

/// V = max G / max ⟨I₁I₂⟩.
pub fn visibility(report: &CorrelationReport) -> Result<f64> {
    let m = report.mean_i1i2.iter().copied().fold(0.0, f64::max);
    if m.is_nan() || m <= 0.0 {
        return Err(Error::ZeroCorrelation);
    }
    let g = report.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(g / m)
}

/// Visibility and its standard error at the G peak.
pub fn visibility_with_error(report: &CorrelationReport) -> Result<(f64, f64)> {
    let v = visibility(report)?;
    let m = report.mean_i1i2.iter().copied().fold(0.0, f64::max);
    let k = argmax(&report.g);
    Ok((v, report.std_error[k] / m))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SnrEstimate {
    /// Site of the G peak in the report domain.
    pub site: usize,
    pub g: f64,
    /// ΔG = √(3⟨I₁I₂⟩² + 8G⟨I₁⟩⟨I₂⟩), single shot.
    pub delta_g: f64,
    pub single_shot: f64,
    pub frames: u64,
    /// √N · single-shot SNR.
    pub snr: f64,
}

/// Single-shot noise of the G estimator at one domain site.
pub fn delta_g(report: &CorrelationReport, site: usize) -> f64 {
    let m12 = report.mean_i1i2[site];
    let g = report.g[site];
    let bg = report.background[site];
    (3.0 * m12 * m12 + 8.0 * g * bg).max(0.0).sqrt()
}

/// SNR at the G peak from the Gaussian-statistics noise formula.
pub fn snr_estimate(report: &CorrelationReport, frames: u64) -> SnrEstimate {
    let site = argmax(&report.g);
    let g = report.g[site];
    let dg = delta_g(report, site);
    let single = if dg > 0.0 { g / dg } else { 0.0 };
    SnrEstimate {
        site,
        g,
        delta_g: dg,
        single_shot: single,
        frames,
        snr: (frames as f64).sqrt() * single,
    }
}

/// Exact per-site first and second intensity moments.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityMoments {
    lattice: Lattice,
    n_frames: u64,
    s1: ExactSums,
    s2: ExactSums,
}

impl IntensityMoments {
    pub fn new(lattice: Lattice, scale: f64) -> Self {
        let n = lattice.len();
        Self {
            lattice,
            n_frames: 0,
            s1: ExactSums::new(n, scale),
            s2: ExactSums::new(n, scale * scale),
        }
    }

    pub fn accumulate(&mut self, i: &IntensityGrid) -> Result<()> {
        self.lattice.check_matches(i.lattice(), "intensity moments")?;
        self.accumulate_values(i.values())
    }

    pub(crate) fn accumulate_values(&mut self, v: &[f64]) -> Result<()> {
        for (k, x) in v.iter().enumerate() {
            self.s1.add(k, *x)?;
            self.s2.add(k, x * x)?;
        }
        self.n_frames += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &IntensityMoments) -> Result<()> {
        self.lattice.check_matches(&other.lattice, "intensity moments")?;
        self.s1.merge(&other.s1)?;
        self.s2.merge(&other.s2)?;
        self.n_frames += other.n_frames;
        Ok(())
    }

    pub fn n_frames(&self) -> u64 {
        self.n_frames
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// (mean, standard error of the mean) per site.
    pub fn finalize(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n_frames;
        if n < 2 {
            return Err(Error::TooFewFrames { needed: 2, have: n });
        }
        let nf = n as f64;
        let mut mean = Vec::with_capacity(self.lattice.len());
        let mut se = Vec::with_capacity(self.lattice.len());
        for k in 0..self.lattice.len() {
            let m = self.s1.value(k) / nf;
            let v = self.s2.value(k) / nf - m * m;
            mean.push(m);
            se.push((v.max(0.0) / (nf - 1.0)).sqrt());
        }
        Ok((mean, se))
    }
}
