//! Complex transmission masks T(x).

use crate::error::{invalid, require_positive, Error, Result};
use crate::grid::{Complex64, Lattice};
use crate::pgm::Graymap;

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMask {
    lattice: Lattice,
    values: Vec<Complex64>,
}

/// Vertical extent of a slit object in 2D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlitHeight {
    Full,
    Finite(f64),
}

impl TransmissionMask {
    pub fn new(lattice: Lattice, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch(format!(
                "{} mask values for {} sites",
                values.len(),
                lattice.len()
            )));
        }
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()) || v.norm() > 1.0 + 1e-12)
        {
            return Err(invalid("mask", "|T| must be finite and <= 1"));
        }
        Ok(Self { lattice, values })
    }

    pub fn identity(lattice: Lattice) -> Self {
        let values = vec![Complex64::new(1.0, 0.0); lattice.len()];
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Length (1D) or area (2D) of the sites with |T| > 0.5.
    pub fn transmissive_measure(&self) -> f64 {
        self.values.iter().filter(|v| v.norm() > 0.5).count() as f64 * self.lattice.site_measure()
    }

    pub fn is_binary(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.im == 0.0 && (v.re == 0.0 || v.re == 1.0))
    }

    /// T·e^{iφ}.
    pub fn rotated(&self, phase: f64) -> Self {
        let r = Complex64::from_polar(1.0, phase);
        Self {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|v| v * r).collect(),
        }
    }

    /// |T|² per site.
    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

fn from_predicate(lattice: &Lattice, inside: impl Fn(f64, f64) -> bool) -> TransmissionMask {
    let values = (0..lattice.len())
        .map(|i| {
            let (x, y) = lattice.position(i);
            if inside(x, y) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        })
        .collect();
    TransmissionMask {
        lattice: lattice.clone(),
        values,
    }
}

fn height_ok(lattice: &Lattice, height: SlitHeight) -> Result<f64> {
    match height {
        SlitHeight::Full => Ok(f64::INFINITY),
        SlitHeight::Finite(h) => {
            require_positive("slit_height", h)?;
            Ok(if lattice.rank() == 2 { h / 2.0 } else { f64::INFINITY })
        }
    }
}

// tolerance for site-centre sampling of edges that fall on a site
const EDGE: f64 = 1e-9;

/// Needle of width w centred in an aperture of width W: T = 1 for w/2 < |x| ≤ W/2.
pub fn double_slit_mask(
    lattice: &Lattice,
    aperture_width: f64,
    needle_width: f64,
    height: SlitHeight,
) -> Result<TransmissionMask> {
    require_positive("aperture_width", aperture_width)?;
    require_positive("needle_width", needle_width)?;
    if needle_width >= aperture_width {
        return Err(invalid(
            "needle_width",
            format!("{needle_width} m must be below the aperture width {aperture_width} m"),
        ));
    }
    if aperture_width > lattice.extent(0) * (1.0 + 1e-12) {
        return Err(invalid("aperture_width", "exceeds the grid extent"));
    }
    let hy = height_ok(lattice, height)?;
    let (a, b) = (needle_width / 2.0, aperture_width / 2.0);
    let p = lattice.pitch()[0] * EDGE;
    Ok(from_predicate(lattice, |x, y| {
        x.abs() > a + p && x.abs() <= b + p && y.abs() <= hy + p
    }))
}

/// Single slit of width W: T = 1 for |x| ≤ W/2.
pub fn single_slit_mask(lattice: &Lattice, width: f64, height: SlitHeight) -> Result<TransmissionMask> {
    require_positive("slit_width", width)?;
    let hy = height_ok(lattice, height)?;
    let p = lattice.pitch()[0] * EDGE;
    Ok(from_predicate(lattice, |x, y| x.abs() <= width / 2.0 + p && y.abs() <= hy + p))
}

/// Graymap amplitudes (gray/maxval) resampled nearest-neighbour and centred.
///
/// Pixels are square with side `physical_width / image width`. A line lattice
/// samples the middle image row.
pub fn bitmap_mask(lattice: &Lattice, image: &[u8], physical_width: f64) -> Result<TransmissionMask> {
    require_positive("bitmap_width", physical_width)?;
    let g = Graymap::parse(image)?;
    let pix = physical_width / g.width as f64;
    let physical_height = pix * g.height as f64;
    if physical_width > lattice.extent(0) * (1.0 + 1e-12)
        || (lattice.rank() == 2 && physical_height > lattice.extent(1) * (1.0 + 1e-12))
    {
        return Err(invalid("bitmap_width", "image does not fit on the grid"));
    }
    let values = (0..lattice.len())
        .map(|i| {
            let (x, y) = lattice.position(i);
            let col = ((x + physical_width / 2.0) / pix + EDGE).floor();
            let row = if lattice.rank() == 2 {
                ((physical_height / 2.0 - y) / pix - EDGE).floor()
            } else {
                (g.height / 2) as f64
            };
            if col >= 0.0 && row >= 0.0 && (col as usize) < g.width && (row as usize) < g.height {
                Complex64::new(g.amplitude(col as usize, row as usize), 0.0)
            } else {
                Complex64::default()
            }
        })
        .collect();
    TransmissionMask::new(lattice.clone(), values)
}

/// Pure phase object T = exp(i·φ(x, y)).
pub fn phase_mask(lattice: &Lattice, phase: impl Fn(f64, f64) -> f64) -> Result<TransmissionMask> {
    let mut values = Vec::with_capacity(lattice.len());
    for i in 0..lattice.len() {
        let (x, y) = lattice.position(i);
        let p = phase(x, y);
        if !p.is_finite() {
            return Err(invalid("phase", format!("non-finite phase at x = {x}")));
        }
        values.push(Complex64::from_polar(1.0, p));
    }
    Ok(TransmissionMask {
        lattice: lattice.clone(),
        values,
    })
}

/// Binary 0/π grating of the given period along x.
pub fn phase_grating(lattice: &Lattice, period: f64, depth: f64) -> Result<TransmissionMask> {
    require_positive("grating_period", period)?;
    phase_mask(lattice, |x, _| {
        if (x / period).rem_euclid(1.0) < 0.5 {
            0.0
        } else {
            depth
        }
    })
}

/// A two-level "4" glyph, 12 × 16 pixels, ASCII graymap.
pub fn glyph_four() -> Vec<u8> {
    const ROWS: [&str; 16] = [
        "............",
        "........##..",
        ".......###..",
        "......####..",
        ".....##.##..",
        "....##..##..",
        "...##...##..",
        "..##....##..",
        ".##.....##..",
        ".##########.",
        ".##########.",
        "........##..",
        "........##..",
        "........##..",
        "........##..",
        "............",
    ];
    let mut s = String::from("P2\n12 16\n1\n");
    for row in ROWS {
        let line: Vec<&str> = row.chars().map(|c| if c == '#' { "1" } else { "0" }).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line() -> Lattice {
        Lattice::line(1024, 2e-6).unwrap()
    }

    #[test]
    fn double_slit_geometry() {
        let lat = line();
        let m = double_slit_mask(&lat, 690e-6, 160e-6, SlitHeight::Full).unwrap();
        assert!((m.transmissive_measure() - 530e-6).abs() <= 2.0 * 2e-6);
        let at = |x: f64| m.values()[lat.nearest(0, x).unwrap()].re;
        assert_eq!(at(0.0), 0.0);
        assert_eq!(at(212.5e-6), 1.0);
        assert_eq!(at(-212.5e-6), 1.0);
        assert_eq!(at(400e-6), 0.0);
        assert!(m.is_binary());
        for i in 1..1024 {
            assert_eq!(m.values()[i], m.values()[1024 - i]);
        }
        assert!(double_slit_mask(&lat, 100e-6, 100e-6, SlitHeight::Full).is_err());
        assert!(double_slit_mask(&lat, 1.0, 100e-6, SlitHeight::Full).is_err());
    }

    #[test]
    fn height_scales_area() {
        let lat = Lattice::square(128, 10e-6).unwrap();
        let a = double_slit_mask(&lat, 600e-6, 200e-6, SlitHeight::Finite(400e-6)).unwrap();
        let b = double_slit_mask(&lat, 600e-6, 200e-6, SlitHeight::Finite(200e-6)).unwrap();
        let ratio = a.transmissive_measure() / b.transmissive_measure();
        assert!((ratio - 41.0 / 21.0).abs() < 1e-12, "{ratio}");
        assert!((a.transmissive_measure() - 40.0 * 41.0 * 1e-10).abs() < 1e-16);
    }

    #[test]
    fn bitmap_extremes_and_count() {
        let lat = Lattice::square(64, 10e-6).unwrap();
        let white = b"P2 4 4 7 7 7 7 7 7 7 7 7 7 7 7 7 7 7 7 7";
        let m = bitmap_mask(&lat, white, 40e-6).unwrap();
        assert!((m.transmissive_measure() - 16.0 * 1e-10).abs() < 1e-18);
        let black = b"P2 4 4 7 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0";
        assert_eq!(bitmap_mask(&lat, black, 40e-6).unwrap().transmissive_measure(), 0.0);
        let four = glyph_four();
        let g = Graymap::parse(&four).unwrap();
        let whites = g.pixels.iter().filter(|&&p| p == 1).count();
        let m = bitmap_mask(&lat, &four, 120e-6).unwrap();
        assert!((m.transmissive_measure() - whites as f64 * 1e-10).abs() < 1e-18);
        assert!(bitmap_mask(&lat, &four, 1.0).is_err());
        assert!(bitmap_mask(&lat, b"P2 1 1", 1e-5).is_err());
    }

    #[test]
    fn bitmap_orientation() {
        // top-left white pixel lands at negative x, positive y
        let lat = Lattice::square(8, 1e-6).unwrap();
        let m = bitmap_mask(&lat, b"P2 2 2 1 1 0 0 0", 2e-6).unwrap();
        let lit: Vec<(f64, f64)> = (0..lat.len())
            .filter(|&i| m.values()[i].re > 0.5)
            .map(|i| lat.position(i))
            .collect();
        assert_eq!(lit, vec![(-1e-6, 0.0)]);
    }

    #[test]
    fn phase_masks() {
        let lat = line();
        let z = phase_mask(&lat, |_, _| 0.0).unwrap();
        assert_eq!(z, TransmissionMask::identity(lat.clone()));
        let g = phase_grating(&lat, 40e-6, std::f64::consts::PI).unwrap();
        assert!(g.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
        assert!(phase_mask(&lat, |x, _| 1.0 / x).is_err() || lat.position(512).0 == 0.0);
        assert!(phase_mask(&lat, |_, _| f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn binary_iff_idempotent(w in 20e-6f64..800e-6, frac in 0.05f64..0.95) {
            let lat = line();
            let m = double_slit_mask(&lat, w, w * frac, SlitHeight::Full).unwrap();
            let sq: Vec<Complex64> = m.values().iter().map(|v| v * v).collect();
            prop_assert_eq!(sq.as_slice(), m.values());
            let half = TransmissionMask::new(lat, m.values().iter().map(|v| v * 0.5).collect()).unwrap();
            prop_assert!(!half.is_binary() || half.transmissive_measure() == 0.0);
        }
    }
}
