//! Arm propagators: object transmission, f-f lens, imaging relay.
//!
//! Both arms use the forward transform; the conjugate kernel of the classical
//! correlation disappears inside |·|² of G.

use crate::error::{require_positive, Error, Result};
use crate::grid::{centered_transform, focal_plane_lattice, Complex64, FieldGrid, Lattice};
use crate::objects::TransmissionMask;

/// What an arm does to its beam.
#[derive(Clone, Debug, PartialEq)]
pub enum ArmKind {
    /// Mask followed by an f-f lens onto the detector.
    Object(TransmissionMask),
    /// f-f lens only.
    DiffractionReference,
    /// Ideal inverting relay with magnification m.
    ImageReference { magnification: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSpec {
    pub kind: ArmKind,
    pub wavelength: f64,
    pub focal: f64,
}

impl ArmSpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("wavelength", self.wavelength)?;
        require_positive("focal", self.focal)?;
        if let ArmKind::ImageReference { magnification } = self.kind {
            require_positive("magnification", magnification)?;
        }
        Ok(())
    }
}

/// An arm prepared for one input lattice.
#[derive(Clone, Debug)]
pub struct Arm {
    spec: ArmSpec,
    input: Lattice,
    output: Lattice,
    relay: Option<RelayMap>,
}

impl Arm {
    pub fn new(spec: ArmSpec, input: &Lattice) -> Result<Self> {
        spec.validate()?;
        let (output, relay) = match &spec.kind {
            ArmKind::Object(mask) => {
                input.check_matches(mask.lattice(), "mask")?;
                (focal_plane_lattice(input, spec.wavelength, spec.focal)?, None)
            }
            ArmKind::DiffractionReference => {
                (focal_plane_lattice(input, spec.wavelength, spec.focal)?, None)
            }
            ArmKind::ImageReference { magnification } => {
                (input.clone(), Some(RelayMap::new(input, *magnification)?))
            }
        };
        Ok(Self {
            spec,
            input: input.clone(),
            output,
            relay,
        })
    }

    pub fn spec(&self) -> &ArmSpec {
        &self.spec
    }

    pub fn input_lattice(&self) -> &Lattice {
        &self.input
    }

    /// Detector-plane lattice.
    pub fn output_lattice(&self) -> &Lattice {
        &self.output
    }

    pub fn propagate(&self, field: &FieldGrid) -> Result<FieldGrid> {
        self.input.check_matches(field.lattice(), "arm input")?;
        let mut v = field.values().to_vec();
        match &self.spec.kind {
            ArmKind::Object(mask) => {
                for (a, t) in v.iter_mut().zip(mask.values()) {
                    *a *= t;
                }
                centered_transform(&mut v, &self.input, false);
            }
            ArmKind::DiffractionReference => centered_transform(&mut v, &self.input, false),
            ArmKind::ImageReference { .. } => {
                let relay = self.relay.as_ref().expect("relay prepared for image arms");
                v = relay.apply(&v)?;
            }
        }
        Ok(FieldGrid::from_parts(self.output.clone(), v))
    }
}

pub fn apply_mask(field: &FieldGrid, mask: &TransmissionMask) -> Result<FieldGrid> {
    field.lattice().check_matches(mask.lattice(), "mask")?;
    let v = field
        .values()
        .iter()
        .zip(mask.values())
        .map(|(a, t)| a * t)
        .collect();
    Ok(FieldGrid::from_parts(field.lattice().clone(), v))
}

/// f-f lens: unitary centered DFT relabelled onto the focal-plane lattice.
pub fn to_focal_plane(field: &FieldGrid, wavelength: f64, focal: f64) -> Result<FieldGrid> {
    let out = focal_plane_lattice(field.lattice(), wavelength, focal)?;
    let mut v = field.values().to_vec();
    centered_transform(&mut v, field.lattice(), false);
    Ok(FieldGrid::from_parts(out, v))
}

/// out(x) = m·in(−m·x).
pub fn image_relay(field: &FieldGrid, magnification: f64) -> Result<FieldGrid> {
    let map = RelayMap::new(field.lattice(), magnification)?;
    Ok(FieldGrid::from_parts(field.lattice().clone(), map.apply(field.values())?))
}

/// Nearest-neighbour source site of every relay output site.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayMap {
    lattice: Lattice,
    magnification: f64,
    source: Vec<Option<usize>>,
    /// Input sites that reach no output site.
    lost: Vec<usize>,
}

impl RelayMap {
    /// m = 1 is an exact (periodic) site reflection about the centre.
    pub fn new(lattice: &Lattice, magnification: f64) -> Result<Self> {
        require_positive("magnification", magnification)?;
        let m = magnification;
        let mut source = Vec::with_capacity(lattice.len());
        let mut hit = vec![false; lattice.len()];
        for i in 0..lattice.len() {
            let (ix, iy) = lattice.coords(i);
            let s = if m == 1.0 {
                let sx = (2 * lattice.center(0) + lattice.dim(0) - ix) % lattice.dim(0);
                let sy = if lattice.rank() == 2 {
                    (2 * lattice.center(1) + lattice.dim(1) - iy) % lattice.dim(1)
                } else {
                    0
                };
                Some(lattice.index(sx, sy))
            } else {
                let (x, y) = lattice.position(i);
                let sx = lattice.nearest(0, -m * x);
                let sy = if lattice.rank() == 2 {
                    lattice.nearest(1, -m * y)
                } else {
                    Some(0)
                };
                sx.zip(sy).map(|(a, b)| lattice.index(a, b))
            };
            if let Some(k) = s {
                hit[k] = true;
            }
            source.push(s);
        }
        // with m > 1 the output undersamples the input; only sites beyond the
        // mapped footprint count as lost
        let half: Vec<f64> = (0..lattice.rank())
            .map(|a| (lattice.dim(a) / 2) as f64 * lattice.pitch()[a] * m)
            .collect();
        let lost = (0..lattice.len())
            .filter(|&k| {
                if hit[k] || m >= 1.0 {
                    return false;
                }
                let (x, y) = lattice.position(k);
                x.abs() > half[0] || (lattice.rank() == 2 && y.abs() > half[1])
            })
            .collect();
        Ok(Self {
            lattice: lattice.clone(),
            magnification: m,
            source,
            lost,
        })
    }

    pub fn magnification(&self) -> f64 {
        self.magnification
    }

    /// Input site sampled by output site `i`.
    pub fn source(&self, i: usize) -> Option<usize> {
        self.source[i]
    }

    pub fn apply(&self, input: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.lost.iter().any(|&k| input[k] != Complex64::default()) {
            return Err(Error::RelayOutOfBounds(self.magnification));
        }
        let m = self.magnification;
        Ok(self
            .source
            .iter()
            .map(|s| s.map_or(Complex64::default(), |k| input[k] * m))
            .collect())
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
}
