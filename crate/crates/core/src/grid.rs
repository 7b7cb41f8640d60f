//! Uniform lattices, sampled fields and centered unitary DFTs.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

pub use rustfft::num_complex::Complex64;

use crate::error::{invalid, require_positive, Error, Result};

/// Uniform 1D or 2D lattice. Sites are stored with x varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    rank: usize,
    dims: [usize; 2],
    pitch: [f64; 2],
}

impl Lattice {
    pub fn new(shape: &[usize], pitch: &[f64]) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 || shape.len() != pitch.len() {
            return Err(Error::InvalidLattice(format!(
                "rank must be 1 or 2 with one pitch per axis, got shape {shape:?} pitch {pitch:?}"
            )));
        }
        for &n in shape {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidLattice(format!(
                    "extents must be even and >= 2, got {shape:?}"
                )));
            }
        }
        for &p in pitch {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidLattice(format!(
                    "pitch must be finite and > 0, got {pitch:?}"
                )));
            }
        }
        let mut dims = [1, 1];
        let mut pitches = [1.0, 1.0];
        dims[..shape.len()].copy_from_slice(shape);
        pitches[..pitch.len()].copy_from_slice(pitch);
        Ok(Self {
            rank: shape.len(),
            dims,
            pitch: pitches,
        })
    }

    pub fn line(n: usize, pitch: f64) -> Result<Self> {
        Self::new(&[n], &[pitch])
    }

    pub fn square(n: usize, pitch: f64) -> Result<Self> {
        Self::new(&[n, n], &[pitch, pitch])
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn shape(&self) -> &[usize] {
        &self.dims[..self.rank]
    }

    pub fn pitch(&self) -> &[f64] {
        &self.pitch[..self.rank]
    }

    /// Extent along `axis`, 1 for the unused axis of a line.
    pub fn dim(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn center(&self, axis: usize) -> usize {
        if axis < self.rank {
            self.dims[axis] / 2
        } else {
            0
        }
    }

    pub fn center_index(&self) -> usize {
        self.index(self.center(0), self.center(1))
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.dims[0] + ix
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.dims[0], index / self.dims[0])
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if axis < self.rank {
            (i as f64 - self.center(axis) as f64) * self.pitch[axis]
        } else {
            0.0
        }
    }

    /// Physical (x, y) of a site; y is 0 on a line.
    pub fn position(&self, index: usize) -> (f64, f64) {
        let (ix, iy) = self.coords(index);
        (self.coordinate(0, ix), self.coordinate(1, iy))
    }

    /// Nearest site index along `axis` for a physical coordinate, if on the grid.
    pub fn nearest(&self, axis: usize, x: f64) -> Option<usize> {
        let k = (x / self.pitch[axis]).round() + self.center(axis) as f64;
        if k >= 0.0 && k < self.dims[axis] as f64 {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.dims[axis] as f64 * self.pitch[axis]
    }

    /// Length (1D) or area (2D) of one site.
    pub fn site_measure(&self) -> f64 {
        self.pitch().iter().product()
    }

    pub fn axis(&self, axis: usize) -> Axis {
        Axis {
            positions: (0..self.dims[axis])
                .map(|i| self.coordinate(axis, i))
                .collect(),
            pitch: self.pitch[axis],
            center_index: self.center(axis),
        }
    }

    pub fn with_pitch(&self, pitch: &[f64]) -> Result<Self> {
        Self::new(self.shape(), pitch)
    }

    /// Angular-frequency lattice of the centered DFT: pitch 2π/(N·pitch).
    pub fn reciprocal(&self) -> Self {
        let mut out = self.clone();
        for a in 0..self.rank {
            out.pitch[a] = 2.0 * std::f64::consts::PI / self.extent(a);
        }
        out
    }

    /// Same shape and pitches equal to 1e-9 relative.
    pub fn matches(&self, other: &Lattice) -> bool {
        self.shape() == other.shape()
            && self
                .pitch()
                .iter()
                .zip(other.pitch())
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()))
    }

    pub(crate) fn check_matches(&self, other: &Lattice, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch(format!(
                "{what}: {:?}@{:?} vs {:?}@{:?}",
                self.shape(),
                self.pitch(),
                other.shape(),
                other.pitch()
            )))
        }
    }
}

/// Per-site physical coordinates along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub positions: Vec<f64>,
    pub pitch: f64,
    pub center_index: usize,
}

/// Complex field samples on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    lattice: Lattice,
    values: Vec<Complex64>,
}

impl FieldGrid {
    pub fn new(lattice: Lattice, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch(format!(
                "{} values for {} sites",
                values.len(),
                lattice.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid("field", "values must be finite"));
        }
        Ok(Self { lattice, values })
    }

    pub fn zeros(lattice: Lattice) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); lattice.len()];
        Self { lattice, values }
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let values = (0..lattice.len())
            .map(|i| {
                let (x, y) = lattice.position(i);
                f(x, y)
            })
            .collect();
        Self::new(lattice, values)
    }

    pub(crate) fn from_parts(lattice: Lattice, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(lattice.len(), values.len());
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Σ|value|² · site measure.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.lattice.site_measure()
    }

    pub fn intensity(&self) -> IntensityGrid {
        IntensityGrid {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> FieldGrid {
        FieldGrid {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Non-negative intensity samples on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityGrid {
    lattice: Lattice,
    values: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch(format!(
                "{} values for {} sites",
                values.len(),
                lattice.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("intensity", "values must be finite and >= 0"));
        }
        Ok(Self { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sums `factor`×`factor` blocks of sites (detector pixel binning).
    pub fn binned(&self, factor: usize) -> Result<IntensityGrid> {
        if factor == 1 {
            return Ok(self.clone());
        }
        let lat = &self.lattice;
        let mut shape = Vec::new();
        let mut pitch = Vec::new();
        for a in 0..lat.rank() {
            if factor == 0 || !lat.dim(a).is_multiple_of(2 * factor) {
                return Err(invalid(
                    "pixel_binning",
                    format!("factor {factor} must divide half the extent {}", lat.dim(a)),
                ));
            }
            shape.push(lat.dim(a) / factor);
            pitch.push(lat.pitch()[a] * factor as f64);
        }
        let out_lat = Lattice::new(&shape, &pitch)?;
        let fy = if lat.rank() == 2 { factor } else { 1 };
        let mut values = vec![0.0; out_lat.len()];
        for (i, v) in self.values.iter().enumerate() {
            let (ix, iy) = lat.coords(i);
            values[out_lat.index(ix / factor, iy / fy)] += v;
        }
        IntensityGrid::new(out_lat, values)
    }
}

/// A sampled curve: values at increasing positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(positions: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(positions.len(), values.len());
        Self { positions, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear interpolation; clamps outside the sampled range.
    pub fn at(&self, x: f64) -> f64 {
        let p = &self.positions;
        let n = p.len();
        if n == 0 {
            return 0.0;
        }
        if x <= p[0] {
            return self.values[0];
        }
        if x >= p[n - 1] {
            return self.values[n - 1];
        }
        let k = p.partition_point(|&q| q <= x);
        let (x0, x1) = (p[k - 1], p[k]);
        let t = (x - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// In-place centered unitary DFT of one line: fftshift ∘ fft ∘ ifftshift / √N.
fn transform_line(
    line: &mut [Complex64],
    fft: &dyn Fft<f64>,
    tmp: &mut Vec<Complex64>,
    scratch: &mut [Complex64],
) {
    let n = line.len();
    let c = n / 2;
    tmp.clear();
    tmp.extend_from_slice(&line[c..]);
    tmp.extend_from_slice(&line[..c]);
    fft.process_with_scratch(tmp, scratch);
    let norm = 1.0 / (n as f64).sqrt();
    for (j, out) in line.iter_mut().enumerate() {
        *out = tmp[(j + c) % n] * norm;
    }
}

/// Centered unitary DFT along every axis of `values`, in place.
pub(crate) fn centered_transform(values: &mut [Complex64], lattice: &Lattice, inverse: bool) {
    let nx = lattice.dim(0);
    let ny = lattice.dim(1);
    let fx = plan(nx, inverse);
    let mut tmp = Vec::with_capacity(nx.max(ny));
    let mut scratch = vec![Complex64::default(); fx.get_inplace_scratch_len()];
    for row in values.chunks_exact_mut(nx) {
        transform_line(row, fx.as_ref(), &mut tmp, &mut scratch);
    }
    if lattice.rank() == 2 {
        let fy = plan(ny, inverse);
        let mut col = vec![Complex64::default(); ny];
        scratch.resize(fy.get_inplace_scratch_len(), Complex64::default());
        for ix in 0..nx {
            for (iy, c) in col.iter_mut().enumerate() {
                *c = values[iy * nx + ix];
            }
            transform_line(&mut col, fy.as_ref(), &mut tmp, &mut scratch);
            for (iy, c) in col.iter().enumerate() {
                values[iy * nx + ix] = *c;
            }
        }
    }
}

/// Unitary centered DFT; the output lattice is in angular-frequency units.
pub fn dft_centered(field: &FieldGrid) -> FieldGrid {
    let mut values = field.values.clone();
    centered_transform(&mut values, &field.lattice, false);
    FieldGrid::from_parts(field.lattice.reciprocal(), values)
}

/// Inverse of [`dft_centered`].
pub fn idft_centered(field: &FieldGrid) -> FieldGrid {
    let mut values = field.values.clone();
    centered_transform(&mut values, &field.lattice, true);
    FieldGrid::from_parts(field.lattice.reciprocal(), values)
}

/// Back-focal-plane lattice of an f-f system: pitch λF/(N·pitch) per axis.
pub fn focal_plane_lattice(input: &Lattice, wavelength: f64, focal: f64) -> Result<Lattice> {
    require_positive("wavelength", wavelength)?;
    require_positive("focal", focal)?;
    let pitch: Vec<f64> = (0..input.rank())
        .map(|a| wavelength * focal / input.extent(a))
        .collect();
    input.with_pitch(&pitch)
}

/// Physical x axis of the focal plane for spectra of fields on `input`.
pub fn focal_plane_axis(input: &Lattice, wavelength: f64, focal: f64) -> Result<Axis> {
    Ok(focal_plane_lattice(input, wavelength, focal)?.axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lattice_rejects_odd_or_tiny_extents() {
        assert!(Lattice::line(7, 1.0).is_err());
        assert!(Lattice::line(0, 1.0).is_err());
        assert!(Lattice::line(8, 0.0).is_err());
        assert!(Lattice::new(&[4, 4], &[1.0]).is_err());
        assert!(Lattice::square(8, 1e-6).is_ok());
    }

    #[test]
    fn center_site_is_at_origin() {
        let lat = Lattice::new(&[8, 6], &[2.0, 3.0]).unwrap();
        assert_eq!(lat.position(lat.center_index()), (0.0, 0.0));
        assert_eq!(lat.coordinate(0, 0), -8.0);
        assert_eq!(lat.nearest(0, 1.1), Some(5));
        assert_eq!(lat.nearest(0, 100.0), None);
    }

    #[test]
    fn centered_delta_gives_flat_spectrum() {
        let lat = Lattice::line(16, 1.0).unwrap();
        let mut v = vec![c(0.0, 0.0); 16];
        v[8] = c(1.0, 0.0);
        let out = dft_centered(&FieldGrid::new(lat, v).unwrap());
        for z in out.values() {
            assert!((z.norm() - 0.25).abs() < 1e-15);
            assert!(z.im.abs() < 1e-15 && z.re > 0.0);
        }
    }

    #[test]
    fn matches_direct_centered_sum() {
        let n = 12;
        let lat = Lattice::line(n, 1.0).unwrap();
        let vals: Vec<Complex64> = (0..n)
            .map(|k| c((k as f64 * 0.7).sin(), (k as f64 * 1.3).cos()))
            .collect();
        let out = dft_centered(&FieldGrid::new(lat, vals.clone()).unwrap());
        let cc = (n / 2) as f64;
        for j in 0..n {
            let mut s = c(0.0, 0.0);
            for (k, v) in vals.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (j as f64 - cc) * (k as f64 - cc) / n as f64;
                s += v * Complex64::from_polar(1.0, ph);
            }
            s /= (n as f64).sqrt();
            assert!((s - out.values()[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_transform_is_separable() {
        let lat = Lattice::new(&[4, 6], &[1.0, 1.0]).unwrap();
        let f = FieldGrid::from_fn(lat.clone(), |x, y| c(x * 0.3 - y, y * y * 0.1)).unwrap();
        let out = dft_centered(&f);
        let (nx, ny) = (4usize, 6usize);
        for j in 0..lat.len() {
            let (jx, jy) = lat.coords(j);
            let mut s = c(0.0, 0.0);
            for k in 0..lat.len() {
                let (kx, ky) = lat.coords(k);
                let ph = -2.0
                    * std::f64::consts::PI
                    * ((jx as f64 - 2.0) * (kx as f64 - 2.0) / nx as f64
                        + (jy as f64 - 3.0) * (ky as f64 - 3.0) / ny as f64);
                s += f.values()[k] * Complex64::from_polar(1.0, ph);
            }
            s /= ((nx * ny) as f64).sqrt();
            assert!((s - out.values()[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_spectrum_width() {
        let n = 512;
        let s = 10.0;
        let lat = Lattice::line(n, 1.0).unwrap();
        let f = FieldGrid::from_fn(lat, |x, _| c((-x * x / (2.0 * s * s)).exp(), 0.0)).unwrap();
        let out = dft_centered(&f);
        let amp: Vec<f64> = out.values().iter().map(|v| v.norm()).collect();
        let expected = n as f64 / (2.0 * std::f64::consts::PI * s);
        let k = 20usize;
        let ratio = amp[n / 2 + k] / amp[n / 2];
        let sigma = (k as f64 * k as f64 / (-2.0 * ratio.ln())).sqrt();
        assert!((sigma - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn focal_axis_spacing() {
        let lat = Lattice::line(1000, 3e-6).unwrap();
        let ax = focal_plane_axis(&lat, 0.532e-6, 0.08).unwrap();
        assert!((ax.pitch - 14.1867e-6).abs() < 1e-9);
        assert_eq!(ax.positions[ax.center_index], 0.0);
        let lat2 = Lattice::line(2000, 3e-6).unwrap();
        let ax2 = focal_plane_axis(&lat2, 0.532e-6, 0.08).unwrap();
        assert!((ax2.pitch * 2.0 - ax.pitch).abs() < 1e-18);
        assert!(focal_plane_axis(&lat, 0.0, 0.08).is_err());
        assert!(focal_plane_axis(&lat, 0.5e-6, -1.0).is_err());
    }

    #[test]
    fn binning_sums_blocks() {
        let lat = Lattice::square(4, 1.0).unwrap();
        let g = IntensityGrid::new(lat, (0..16).map(|v| v as f64).collect()).unwrap();
        let b = g.binned(2).unwrap();
        assert_eq!(b.lattice().shape(), &[2, 2]);
        assert_eq!(b.values(), &[10.0, 18.0, 42.0, 50.0]);
        assert!(g.binned(3).is_err());
    }

    #[test]
    fn profile_interpolates() {
        let p = Profile::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]);
        assert_eq!(p.at(0.5), 1.0);
        assert_eq!(p.at(-1.0), 0.0);
        assert_eq!(p.at(1.5), 1.0);
    }

    fn field_strategy() -> impl Strategy<Value = FieldGrid> {
        (prop_oneof![Just(vec![8usize]), Just(vec![32]), Just(vec![6, 4]), Just(vec![8, 8])])
            .prop_flat_map(|shape| {
                let n: usize = shape.iter().product();
                (Just(shape), prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), n))
            })
            .prop_map(|(shape, vals)| {
                let pitch = vec![1e-6; shape.len()];
                let lat = Lattice::new(&shape, &pitch).unwrap();
                FieldGrid::new(lat, vals.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
            })
    }

    proptest! {
        #[test]
        fn parseval_and_inverse(f in field_strategy()) {
            let e: f64 = f.values().iter().map(|v| v.norm_sqr()).sum();
            let t = dft_centered(&f);
            let et: f64 = t.values().iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((e - et).abs() <= 1e-12 * e.max(1e-300));
            let back = idft_centered(&t);
            prop_assert!(back.lattice().matches(f.lattice()));
            let scale = f.values().iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert!((a - b).norm() <= 1e-12 * scale);
            }
        }

        #[test]
        fn focal_axis_linear(l in 1e-7f64..2e-6, fo in 1e-3f64..1.0, k in 0.1f64..10.0) {
            let lat = Lattice::line(64, 5e-6).unwrap();
            let a = focal_plane_axis(&lat, l, fo).unwrap().pitch;
            let b = focal_plane_axis(&lat, k * l, fo).unwrap().pitch;
            let d = focal_plane_axis(&lat, l, k * fo).unwrap().pitch;
            prop_assert!((b - k * a).abs() <= 1e-12 * b);
            prop_assert!((d - k * a).abs() <= 1e-12 * d);
        }
    }
}
