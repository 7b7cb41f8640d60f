//! Deterministic reference predictions for the Monte-Carlo estimators.

mod coherence;

pub use coherence::{Coherence, Propagated, WindowedHomogeneous};

use serde::Serialize;

use crate::correlator::SiteBox;
use crate::error::{invalid, require_positive, Error, Result};
use crate::grid::{centered_transform, focal_plane_lattice, Complex64, Lattice, Profile};
use crate::objects::TransmissionMask;
use crate::optics::RelayMap;

/// Proportionality constant κ in Δx = κ·λz/D.
pub const VCZ_KAPPA: f64 = 1.0;

/// Zero-padding factor of the Fraunhofer reference transform.
pub const FRAUNHOFER_PADDING: usize = 8;

/// Non-negative values on a lattice, scaled to unit peak.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleProfile {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    /// Unnormalized maximum; `values[k] * peak` is the raw prediction.
    pub peak: f64,
}

impl OracleProfile {
    pub fn from_raw(lattice: Lattice, raw: Vec<f64>) -> Result<Self> {
        let peak = raw.iter().copied().fold(0.0, f64::max);
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::ZeroCorrelation);
        }
        let values = raw.iter().map(|v| v.max(0.0) / peak).collect();
        Ok(Self {
            lattice,
            values,
            peak,
        })
    }

    pub fn raw(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.peak).collect()
    }

    /// Row `iy` as a profile along x (the only row on a line).
    pub fn row(&self, iy: usize) -> Profile {
        let nx = self.lattice.dim(0);
        Profile::new(
            self.lattice.axis(0).positions,
            self.values[iy * nx..(iy + 1) * nx].to_vec(),
        )
    }
}

/// |T̃(2πx/λF)|² along x at zero vertical frequency, from a zero-padded transform.
pub fn fraunhofer_pattern(mask: &TransmissionMask, wavelength: f64, focal: f64) -> Result<OracleProfile> {
    require_positive("wavelength", wavelength)?;
    require_positive("focal", focal)?;
    let lat = mask.lattice();
    let nx = lat.dim(0);
    let n = nx * FRAUNHOFER_PADDING;
    let padded_lat = Lattice::line(n, lat.pitch()[0])?;
    let mut v = vec![Complex64::default(); n];
    let off = n / 2 - nx / 2;
    for (k, t) in mask.values().iter().enumerate() {
        v[off + k % nx] += t;
    }
    centered_transform(&mut v, &padded_lat, false);
    let out = focal_plane_lattice(&padded_lat, wavelength, focal)?;
    OracleProfile::from_raw(out, v.iter().map(|z| z.norm_sqr()).collect())
}

/// κ·λ·z/D.
pub fn vcz_coherence_length(wavelength: f64, distance: f64, aperture: f64) -> Result<f64> {
    require_positive("wavelength", wavelength)?;
    require_positive("distance", distance)?;
    require_positive("aperture", aperture)?;
    Ok(VCZ_KAPPA * wavelength * distance / aperture)
}

fn mask_spectrum(mask: &TransmissionMask) -> Vec<Complex64> {
    let mut t = mask.values().to_vec();
    centered_transform(&mut t, mask.lattice(), false);
    t
}

/// Object-arm detector response: c₁(x₁) = Σ_ξ K(x₁, ξ)·f(ξ) with f the incident far field,
/// returned as conj(K(x₁, ·)).
fn object_kernel_row(lat: &Lattice, spectrum: &[Complex64], i1: (usize, usize)) -> Vec<Complex64> {
    let s = 1.0 / (lat.len() as f64).sqrt();
    let (nx, ny) = (lat.dim(0), lat.dim(1));
    let (cx, cy) = (lat.center(0), lat.center(1));
    (0..lat.len())
        .map(|k| {
            let (jx, jy) = lat.coords(k);
            let ax = (i1.0 + cx + nx - jx) % nx;
            let ay = (i1.1 + cy + ny - jy) % ny;
            spectrum[ay * nx + ax].conj() * s
        })
        .collect()
}

fn far_site(far: &Lattice, x1: (f64, f64)) -> Result<(usize, usize)> {
    let ix = far.nearest(0, x1.0);
    let iy = if far.rank() == 2 { far.nearest(1, x1.1) } else { Some(0) };
    ix.zip(iy)
        .ok_or_else(|| invalid("x1", "fixed pixel lies off the focal-plane grid"))
}

fn check_far(mask: &TransmissionMask, gamma_f: &dyn Coherence, wavelength: f64, focal: f64) -> Result<Lattice> {
    let far = focal_plane_lattice(mask.lattice(), wavelength, focal)?;
    far.check_matches(gamma_f.lattice(), "far-field coherence axis")?;
    Ok(far)
}

/// G(x₁, x₂) ∝ |Σ_ξ T̃((x₁ − ξ)·2π/λF)*·Γ_f(ξ, x₂)|² for unit splitter coefficients.
///
/// `gamma_f` is the far-field coherence of the beam incident on the object.
pub fn predicted_ghost_diffraction(
    mask: &TransmissionMask,
    gamma_f: &dyn Coherence,
    wavelength: f64,
    focal: f64,
    x1: (f64, f64),
) -> Result<OracleProfile> {
    let far = check_far(mask, gamma_f, wavelength, focal)?;
    let i1 = far_site(&far, x1)?;
    let v = object_kernel_row(&far, &mask_spectrum(mask), i1);
    let w = gamma_f.contract(&v);
    OracleProfile::from_raw(far, w.iter().map(|z| z.norm_sqr()).collect())
}

/// Exact ⟨I⟩ of a beam with coherence `gamma`.
pub fn mean_intensity(gamma: &dyn Coherence) -> Vec<f64> {
    gamma.diagonal().iter().map(|z| z.re.max(0.0)).collect()
}

/// Exact ⟨I₁⟩ on the object-arm detector (mask then lens), unit splitter coefficients.
///
/// `gamma_n` is the near-field coherence of the beam incident on the mask.
pub fn object_arm_mean_intensity(
    mask: &TransmissionMask,
    gamma_n: &WindowedHomogeneous,
    wavelength: f64,
    focal: f64,
) -> Result<Vec<f64>> {
    let lat = mask.lattice();
    lat.check_matches(gamma_n.lattice(), "near-field coherence axis")?;
    let far = focal_plane_lattice(lat, wavelength, focal)?;
    let masked = |w: &[Complex64]| -> Vec<Complex64> {
        w.iter().zip(mask.values()).map(|(a, t)| a * t).collect()
    };
    let near = gamma_n
        .clone()
        .with_windows(masked(gamma_n.left()), masked(gamma_n.right()));
    Ok(mean_intensity(&Propagated::new(near, far)?))
}

/// Σ_{x₁ ∈ region, x₁ + Δ on the grid} G(x₁, x₁ + Δ) over the lag lattice of a
/// lagged correlation, unit splitter coefficients.
pub fn predicted_spatial_average(
    mask: &TransmissionMask,
    gamma_f: &dyn Coherence,
    wavelength: f64,
    focal: f64,
    region: SiteBox,
    max_lag: [usize; 2],
) -> Result<OracleProfile> {
    let far = check_far(mask, gamma_f, wavelength, focal)?;
    let spectrum = mask_spectrum(mask);
    let ly = if far.rank() == 2 { max_lag[1] } else { 0 };
    let mut shape = vec![2 * max_lag[0]];
    let mut pitch = vec![far.pitch()[0]];
    if far.rank() == 2 {
        shape.push(2 * ly);
        pitch.push(far.pitch()[1]);
    }
    let lags = Lattice::new(&shape, &pitch)?;
    let mut acc = vec![0.0; lags.len()];
    for iy in region.lo[1]..region.hi[1] {
        for ix in region.lo[0]..region.hi[0] {
            let v = object_kernel_row(&far, &spectrum, (ix, iy));
            let w = gamma_f.contract(&v);
            for (k, a) in acc.iter_mut().enumerate() {
                let (lx, lyy) = lags.coords(k);
                let jx = ix as i64 + lx as i64 - max_lag[0] as i64;
                let jy = iy as i64 + lyy as i64 - ly as i64;
                if jx >= 0 && jy >= 0 && (jx as usize) < far.dim(0) && (jy as usize) < far.dim(1) {
                    *a += w[far.index(jx as usize, jy as usize)].norm_sqr();
                }
            }
        }
    }
    OracleProfile::from_raw(lags, acc)
}

/// Bucket ghost image m²·Σ_x′ |T(x′)|²·|Γ_n(x′, −m·x₂)|², unit splitter coefficients.
pub fn predicted_ghost_image_bucket(
    mask: &TransmissionMask,
    gamma_n: &WindowedHomogeneous,
    magnification: f64,
) -> Result<OracleProfile> {
    let lat = mask.lattice();
    lat.check_matches(gamma_n.lattice(), "near-field coherence axis")?;
    let relay = RelayMap::new(lat, magnification)?;
    let h = gamma_n.bucket_weights(&mask.intensity());
    let m2 = magnification * magnification;
    let raw = (0..lat.len())
        .map(|i| relay.source(i).map_or(0.0, |s| m2 * h[s]))
        .collect();
    OracleProfile::from_raw(lat.clone(), raw)
}

/// Coherence-to-object size ratio; the ghost-image visibility scales with it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VisibilityEstimate {
    pub ratio: f64,
    /// Always true: the ratio sets the order of magnitude only.
    pub proportionality_only: bool,
    /// ratio < 1; at or above 1 the scaling no longer applies.
    pub within_regime: bool,
}

pub fn visibility_ratio_estimate(coherence_area: f64, object_area: f64) -> Result<VisibilityEstimate> {
    require_positive("coherence_area", coherence_area)?;
    require_positive("object_area", object_area)?;
    let ratio = coherence_area / object_area;
    Ok(VisibilityEstimate {
        ratio,
        proportionality_only: true,
        within_regime: ratio < 1.0,
    })
}
