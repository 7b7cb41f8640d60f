//! Pseudo-thermal speckle synthesis, diaphragm and beam splitter.
//!
//! A realization is i.i.d. circular Gaussian noise shaped by a Gaussian amplitude
//! envelope in the source plane, carried to the object near field by a centered
//! unitary DFT. The near field is then statistically homogeneous with speckle size
//! Δx_n ≈ λz/(π·envelope_std) and a flat mean intensity.

use crate::correlator::{fit_gaussian_peak, PeakFit};
use crate::error::{invalid, require_positive, Error, Result};
use crate::grid::{centered_transform, dft_centered, Complex64, FieldGrid, Lattice, Profile};
use crate::oracles::WindowedHomogeneous;
use crate::rng::FrameRng;

/// Amplitudes below this fraction of the envelope peak draw no noise.
const ENVELOPE_CUTOFF: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SourceConfig {
    /// Object near-field lattice.
    pub lattice: Lattice,
    pub wavelength: f64,
    /// Distance z from the scatterer to the object plane; sets the source-plane scale.
    pub source_distance: f64,
    /// Std of the Gaussian amplitude envelope in the source plane (the D₀ analogue).
    pub envelope_std: f64,
    /// Hard diaphragm diameter D at the object plane.
    pub diaphragm_diameter: f64,
    /// Ensemble-mean intensity inside the diaphragm.
    pub mean_intensity: f64,
    /// Optional Gaussian intensity apodization (std) at the object plane.
    pub object_envelope_std: Option<f64>,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("wavelength", self.wavelength)?;
        require_positive("source_distance", self.source_distance)?;
        require_positive("envelope_std", self.envelope_std)?;
        require_positive("diaphragm_diameter", self.diaphragm_diameter)?;
        require_positive("mean_intensity", self.mean_intensity)?;
        if let Some(s) = self.object_envelope_std {
            require_positive("object_envelope_std", s)?;
        }
        let extent = (0..self.lattice.rank())
            .map(|a| self.lattice.extent(a))
            .fold(f64::INFINITY, f64::min);
        if self.diaphragm_diameter > extent * (1.0 + 1e-12) {
            return Err(invalid(
                "diaphragm_diameter",
                format!(
                    "{} m exceeds the grid extent {} m",
                    self.diaphragm_diameter, extent
                ),
            ));
        }
        Ok(())
    }

    /// Source-plane pitch λz/(N·pitch) along `axis`.
    pub fn source_pitch(&self, axis: usize) -> f64 {
        self.wavelength * self.source_distance / self.lattice.extent(axis)
    }

    /// Diaphragm times the optional apodization, per site.
    pub fn illumination_window(&self) -> Vec<f64> {
        let r2max = (self.diaphragm_diameter / 2.0).powi(2) * (1.0 + 1e-12);
        (0..self.lattice.len())
            .map(|i| {
                let (x, y) = self.lattice.position(i);
                let r2 = x * x + y * y;
                if r2 > r2max {
                    return 0.0;
                }
                match self.object_envelope_std {
                    Some(s) => (-r2 / (4.0 * s * s)).exp(),
                    None => 1.0,
                }
            })
            .collect()
    }
}

/// Speckle generator with the envelope precomputed.
#[derive(Clone, Debug)]
pub struct ThermalSource {
    cfg: SourceConfig,
    /// Scaled amplitude per pre-transform site (zero outside the support).
    amplitude: Vec<f64>,
    support: Vec<usize>,
    window: Vec<f64>,
}

impl ThermalSource {
    pub fn new(cfg: SourceConfig) -> Result<Self> {
        cfg.validate()?;
        let lat = &cfg.lattice;
        let sx = cfg.source_pitch(0);
        let sy = if lat.rank() == 2 { cfg.source_pitch(1) } else { 0.0 };
        let s2 = cfg.envelope_std * cfg.envelope_std;
        let mut amplitude: Vec<f64> = (0..lat.len())
            .map(|i| {
                let (ix, iy) = lat.coords(i);
                let u = (ix as f64 - lat.center(0) as f64) * sx;
                let v = (iy as f64 - lat.center(1) as f64) * sy;
                let e = (-(u * u + v * v) / (2.0 * s2)).exp();
                if e >= ENVELOPE_CUTOFF {
                    e
                } else {
                    0.0
                }
            })
            .collect();
        let power: f64 = amplitude.iter().map(|e| e * e).sum();
        let scale = (cfg.mean_intensity * lat.len() as f64 / power).sqrt();
        for e in &mut amplitude {
            *e *= scale;
        }
        let support = (0..lat.len()).filter(|&i| amplitude[i] > 0.0).collect();
        let window = cfg.illumination_window();
        Ok(Self {
            cfg,
            amplitude,
            support,
            window,
        })
    }

    pub fn config(&self) -> &SourceConfig {
        &self.cfg
    }

    pub fn lattice(&self) -> &Lattice {
        &self.cfg.lattice
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Unbounded near field of one frame (before the diaphragm).
    pub fn draw(&self, frame_seed: u64) -> FieldGrid {
        let mut rng = FrameRng::new(frame_seed);
        let mut values = vec![Complex64::default(); self.amplitude.len()];
        for &k in &self.support {
            values[k] = rng.complex_gaussian() * self.amplitude[k];
        }
        centered_transform(&mut values, &self.cfg.lattice, false);
        FieldGrid::from_parts(self.cfg.lattice.clone(), values)
    }

    /// Near field of one frame behind the diaphragm (and apodization).
    pub fn draw_illuminated(&self, frame_seed: u64) -> FieldGrid {
        let f = self.draw(frame_seed);
        let lat = f.lattice().clone();
        let values = f
            .into_values()
            .into_iter()
            .zip(&self.window)
            .map(|(v, w)| v * *w)
            .collect();
        FieldGrid::from_parts(lat, values)
    }

    /// Exact lag kernel γ(Δ) = ⟨a*(x) a(x + Δ)⟩ of the unbounded near field.
    pub fn kernel(&self) -> Vec<Complex64> {
        let mut k: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|a| Complex64::new(a * a, 0.0))
            .collect();
        centered_transform(&mut k, &self.cfg.lattice, false);
        let s = 1.0 / (self.amplitude.len() as f64).sqrt();
        k.iter().map(|z| z * s).collect()
    }

    /// Exact Γ_n of the illuminated near field (diaphragm included).
    pub fn near_field_coherence(&self) -> WindowedHomogeneous {
        WindowedHomogeneous::new(self.cfg.lattice.clone(), self.kernel())
            .expect("kernel sized to lattice")
            .windowed(&self.window)
    }
}

/// One near-field realization: deterministic in (cfg, frame_seed).
pub fn draw_thermal_field(cfg: &SourceConfig, frame_seed: u64) -> Result<FieldGrid> {
    Ok(ThermalSource::new(cfg.clone())?.draw(frame_seed))
}

/// Zeroes the field outside |x| ≤ D/2 (a disc in 2D).
pub fn apply_diaphragm(field: &FieldGrid, diameter: f64) -> Result<FieldGrid> {
    require_positive("diaphragm_diameter", diameter)?;
    let lat = field.lattice();
    let r2max = (diameter / 2.0).powi(2) * (1.0 + 1e-12);
    let values = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (x, y) = lat.position(i);
            if x * x + y * y <= r2max {
                *v
            } else {
                Complex64::default()
            }
        })
        .collect();
    Ok(FieldGrid::from_parts(lat.clone(), values))
}

/// Classical beam splitter; the vacuum port carries no field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitterSpec {
    pub t: Complex64,
    pub r: Complex64,
}

impl Default for SplitterSpec {
    fn default() -> Self {
        Self::from_powers(0.5, 0.5).expect("balanced splitter is valid")
    }
}

impl SplitterSpec {
    pub fn new(t: Complex64, r: Complex64) -> Result<Self> {
        let s = Self { t, r };
        s.validate()?;
        Ok(s)
    }

    /// t = √|t|², r = i·√|r|².
    pub fn from_powers(t2: f64, r2: f64) -> Result<Self> {
        if !(t2.is_finite() && r2.is_finite() && t2 >= 0.0 && r2 >= 0.0) {
            return Err(invalid("splitter", "powers must be finite and >= 0"));
        }
        Self::new(Complex64::new(t2.sqrt(), 0.0), Complex64::new(0.0, r2.sqrt()))
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.t.norm_sqr() + self.r.norm_sqr();
        if total.is_finite() && total <= 1.0 + 1e-12 {
            Ok(())
        } else {
            Err(invalid("splitter", format!("|t|² + |r|² = {total} exceeds 1")))
        }
    }
}

/// (t·field, r·field).
pub fn beam_split(field: &FieldGrid, bs: &SplitterSpec) -> (FieldGrid, FieldGrid) {
    (field.scaled(bs.t), field.scaled(bs.r))
}

/// Intensity-correlation profile 1 + |k(Δ)|²/|k(0)|² along x from a centered lag kernel.
fn kernel_profile(lattice: &Lattice, kernel: &[Complex64], max_lag: usize, pitch: f64) -> Profile {
    let c = lattice.center_index();
    let k0 = kernel[c].norm_sqr();
    let positions = (0..=max_lag).map(|d| d as f64 * pitch).collect();
    let values = (0..=max_lag)
        .map(|d| 1.0 + kernel[c + d].norm_sqr() / k0)
        .collect();
    Profile::new(positions, values)
}

pub(crate) fn lag_window(lattice: &Lattice, target: f64, pitch: f64) -> Result<usize> {
    let want = (6.0 * target / pitch).ceil() as usize + 4;
    let max = lattice.dim(0) / 2 - 1;
    if want > max {
        return Err(Error::Calibration(format!(
            "target {target} m is too large for a grid of extent {} m",
            lattice.extent(0)
        )));
    }
    Ok(want.max(8))
}

/// Fitted near-field coherence length (2σ) of a source config, from its exact kernel.
pub fn near_field_fit(cfg: &SourceConfig, max_lag: usize) -> Result<PeakFit> {
    let src = ThermalSource::new(cfg.clone())?;
    let p = cfg.lattice.pitch()[0];
    fit_gaussian_peak(&kernel_profile(&cfg.lattice, &src.kernel(), max_lag, p))
}

/// envelope_std whose near-field coherence length (fit oracle) equals `target`.
pub fn calibrate_envelope_std(
    lattice: &Lattice,
    wavelength: f64,
    source_distance: f64,
    target: f64,
) -> Result<f64> {
    require_positive("target coherence length", target)?;
    let pitch = lattice.pitch()[0];
    let max_lag = lag_window(lattice, target, pitch)?;
    let mut cfg = SourceConfig {
        lattice: lattice.clone(),
        wavelength,
        source_distance,
        envelope_std: wavelength * source_distance / (std::f64::consts::PI * target),
        diaphragm_diameter: lattice.extent(0).min(lattice.extent(lattice.rank() - 1)),
        mean_intensity: 1.0,
        object_envelope_std: None,
    };
    for _ in 0..60 {
        let fit = near_field_fit(&cfg, max_lag)?;
        let ratio = fit.coherence_length / target;
        if (ratio - 1.0).abs() < 1e-10 {
            return Ok(cfg.envelope_std);
        }
        cfg.envelope_std *= ratio;
    }
    Err(Error::Calibration(format!(
        "envelope calibration for {target} m did not converge"
    )))
}

/// Fitted far-field coherence length of a uniformly illuminated diaphragm (VCZ form).
pub fn far_field_fit(
    lattice: &Lattice,
    wavelength: f64,
    focal: f64,
    diameter: f64,
    object_envelope_std: Option<f64>,
    max_lag: usize,
) -> Result<PeakFit> {
    let cfg = SourceConfig {
        lattice: lattice.clone(),
        wavelength,
        source_distance: 1.0,
        envelope_std: 1.0,
        diaphragm_diameter: diameter,
        mean_intensity: 1.0,
        object_envelope_std,
    };
    cfg.validate()?;
    let w = cfg.illumination_window();
    let intensity: Vec<Complex64> = w.iter().map(|a| Complex64::new(a * a, 0.0)).collect();
    let spec = dft_centered(&FieldGrid::from_parts(lattice.clone(), intensity));
    let far_pitch = wavelength * focal / lattice.extent(0);
    fit_gaussian_peak(&kernel_profile(lattice, spec.values(), max_lag, far_pitch))
}

/// Diaphragm diameter whose far-field coherence length (fit oracle) is closest to `target`.
///
/// The illuminated support changes in whole sites, so the result is the best
/// achievable diameter rather than an exact root.
pub fn calibrate_diaphragm(
    lattice: &Lattice,
    wavelength: f64,
    focal: f64,
    target: f64,
    object_envelope_std: Option<f64>,
) -> Result<f64> {
    require_positive("target coherence length", target)?;
    require_positive("wavelength", wavelength)?;
    require_positive("focal", focal)?;
    let far_pitch = wavelength * focal / lattice.extent(0);
    let max_lag = lag_window(lattice, target, far_pitch)?;
    let extent = (0..lattice.rank())
        .map(|a| lattice.extent(a))
        .fold(f64::INFINITY, f64::min);
    let cl = |d: f64| {
        far_field_fit(lattice, wavelength, focal, d, object_envelope_std, max_lag)
            .map(|f| f.coherence_length)
    };
    // coherence length decreases as the diaphragm grows; bracket around λF/target
    let guess = wavelength * focal / target;
    let mut lo = (0.5 * guess).min(extent);
    let mut hi = (2.0 * guess).min(extent);
    if !matches!(cl(hi), Ok(c) if c <= target) {
        return Err(Error::Calibration(format!(
            "target {target} m is below the finest far-field coherence the grid supports"
        )));
    }
    if !matches!(cl(lo), Ok(c) if c >= target) {
        return Err(Error::Calibration(format!(
            "no diaphragm between {lo} m and {hi} m reaches {target} m"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cl(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (clo, chi) = (cl(lo)?, cl(hi)?);
    Ok(if (clo - target).abs() < (chi - target).abs() {
        lo
    } else {
        hi
    })
}
