//! End-to-end experiments: configuration, execution and scored reports.
//!
//! Every scenario draws its frames through [`engine`], compares the Monte-Carlo
//! estimates against the exact predictions of [`crate::oracles`] and returns a
//! [`ScenarioReport`] whose metrics each carry a tolerance.

mod engine;
pub mod metrics;
mod runs;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{invalid, require_positive, Result};
use crate::grid::{Lattice, Profile};
use crate::objects::{
    bitmap_mask, double_slit_mask, glyph_four, phase_grating, single_slit_mask, SlitHeight,
    TransmissionMask,
};
use crate::source::SplitterSpec;

pub use engine::Execution;
pub use runs::{
    run_characterization, run_coherence_sweep, run_ghost_diffraction, run_ghost_image,
    run_ghost_pair, run_snr_study, run_visibility_sweep,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    GhostDiffraction,
    GhostImage,
    /// Ghost diffraction and bucket ghost image from one frame set.
    GhostPair,
    CoherenceSweep,
    VisibilitySweep,
    Characterization,
    Snr,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::GhostDiffraction,
        Scenario::GhostImage,
        Scenario::GhostPair,
        Scenario::CoherenceSweep,
        Scenario::VisibilitySweep,
        Scenario::Characterization,
        Scenario::Snr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::GhostDiffraction => "ghost_diffraction",
            Scenario::GhostImage => "ghost_image",
            Scenario::GhostPair => "ghost_pair",
            Scenario::CoherenceSweep => "coherence_sweep",
            Scenario::VisibilitySweep => "visibility_sweep",
            Scenario::Characterization => "characterization",
            Scenario::Snr => "snr",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Near-field speckle size, given directly or as a calibration target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpeckleSize {
    /// Source-plane envelope std (m).
    EnvelopeStd(f64),
    /// Fitted near-field coherence length Δx_n (m).
    CoherenceLength(f64),
}

/// Diaphragm, given directly or through the far-field coherence length it produces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Diaphragm {
    Diameter(f64),
    /// Fitted far-field coherence length Δx_f (m).
    CoherenceLength(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectSpec {
    None,
    /// Needle of width `needle` inside an aperture of width `aperture`.
    DoubleSlit {
        aperture: f64,
        needle: f64,
        height: SlitHeight,
    },
    SingleSlit {
        width: f64,
        height: SlitHeight,
    },
    /// Built-in "4" glyph scaled to `width`.
    Glyph { width: f64 },
    /// Graymap bytes (P2/P5); `label` is echoed in reports.
    Bitmap {
        label: String,
        image: Vec<u8>,
        width: f64,
    },
    PhaseGrating { period: f64, depth: f64 },
}

impl ObjectSpec {
    pub fn mask(&self, lattice: &Lattice) -> Result<TransmissionMask> {
        match self {
            ObjectSpec::None => Ok(TransmissionMask::identity(lattice.clone())),
            ObjectSpec::DoubleSlit {
                aperture,
                needle,
                height,
            } => double_slit_mask(lattice, *aperture, *needle, *height),
            ObjectSpec::SingleSlit { width, height } => single_slit_mask(lattice, *width, *height),
            ObjectSpec::Glyph { width } => bitmap_mask(lattice, &glyph_four(), *width),
            ObjectSpec::Bitmap { image, width, .. } => bitmap_mask(lattice, image, *width),
            ObjectSpec::PhaseGrating { period, depth } => phase_grating(lattice, *period, *depth),
        }
    }

    /// The same object with its aperture width replaced (sweeps).
    fn resized(&self, width: f64, schedule: SizeSchedule) -> Result<ObjectSpec> {
        match self {
            ObjectSpec::DoubleSlit {
                aperture,
                needle,
                height,
            } => Ok(ObjectSpec::DoubleSlit {
                aperture: width,
                needle: *needle,
                height: scaled_height(*height, width / aperture, schedule),
            }),
            ObjectSpec::SingleSlit {
                width: w0,
                height,
            } => Ok(ObjectSpec::SingleSlit {
                width,
                height: scaled_height(*height, width / w0, schedule),
            }),
            ObjectSpec::Glyph { .. } => Ok(ObjectSpec::Glyph { width }),
            ObjectSpec::Bitmap { label, image, .. } => Ok(ObjectSpec::Bitmap {
                label: label.clone(),
                image: image.clone(),
                width,
            }),
            _ => Err(invalid("object", "size sweeps need a slit or bitmap object")),
        }
    }

    fn echo(&self, out: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        let height = |h: &SlitHeight| match h {
            SlitHeight::Full => "full".to_string(),
            SlitHeight::Finite(v) => format!("{v}"),
        };
        match self {
            ObjectSpec::None => put("object", "none".into()),
            ObjectSpec::DoubleSlit {
                aperture,
                needle,
                height: h,
            } => {
                put("object", "double_slit".into());
                put("object_width", format!("{aperture}"));
                put("needle", format!("{needle}"));
                put("object_height", height(h));
            }
            ObjectSpec::SingleSlit { width, height: h } => {
                put("object", "single_slit".into());
                put("object_width", format!("{width}"));
                put("object_height", height(h));
            }
            ObjectSpec::Glyph { width } => {
                put("object", "glyph".into());
                put("object_width", format!("{width}"));
            }
            ObjectSpec::Bitmap { label, width, .. } => {
                put("object", "bitmap".into());
                put("bitmap", label.clone());
                put("object_width", format!("{width}"));
            }
            ObjectSpec::PhaseGrating { period, depth } => {
                put("object", "phase_grating".into());
                put("grating_period", format!("{period}"));
                put("grating_depth", format!("{depth}"));
            }
        }
    }
}

fn scaled_height(h: SlitHeight, factor: f64, schedule: SizeSchedule) -> SlitHeight {
    match (h, schedule) {
        (SlitHeight::Finite(v), SizeSchedule::FixedAspect) => SlitHeight::Finite(v * factor),
        _ => h,
    }
}

/// How the second object dimension follows the swept width (2D only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeSchedule {
    /// Height fixed, so the area grows linearly with the width.
    WidthOnly,
    /// Height scaled with the width, so the area grows quadratically.
    FixedAspect,
}

/// Everything a scenario needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Object near-field lattice.
    pub lattice: Lattice,
    pub wavelength: f64,
    pub focal: f64,
    pub source_distance: f64,
    pub speckle: SpeckleSize,
    pub diaphragm: Diaphragm,
    pub mean_intensity: f64,
    pub object_envelope_std: Option<f64>,
    pub splitter: SplitterSpec,
    /// Image-reference magnification m.
    pub magnification: f64,
    pub object: ObjectSpec,
    /// Ghost-diffraction detector position x₁ (m); default: maximum of ⟨I₁⟩.
    pub fixed_pixel: Option<(f64, f64)>,
    /// Also estimate the spatially averaged correlation (1D).
    pub spatial_average: bool,
    /// Far-field detector binning factor (characterization).
    pub pixel_binning: usize,
    /// Rows |y₂| ≤ this are averaged into 2D ghost-image sections.
    pub section_half_height: f64,
    /// Δx_n / L_obj values of the coherence sweep.
    pub ratios: Vec<f64>,
    /// Aperture widths of the visibility sweep.
    pub sizes: Vec<f64>,
    pub schedule: SizeSchedule,
    /// Diaphragm diameters of the far-field scaling check.
    pub diameters: Vec<f64>,
    pub execution: Execution,
}

impl ScenarioConfig {
    /// 1D setup: λ = 0.532 µm, F = 80 mm, Δx_n = 34 µm, Δx_f = 12 µm,
    /// needle 160 µm in a 690 µm aperture.
    pub fn standard_1d(scenario: Scenario) -> Self {
        Self {
            scenario,
            lattice: Lattice::line(4096, 4e-6).expect("valid lattice"),
            wavelength: 0.532e-6,
            focal: 0.08,
            source_distance: 0.6,
            speckle: SpeckleSize::CoherenceLength(34e-6),
            diaphragm: Diaphragm::CoherenceLength(12e-6),
            mean_intensity: 1.0,
            object_envelope_std: None,
            splitter: SplitterSpec::default(),
            magnification: 1.2,
            object: ObjectSpec::DoubleSlit {
                aperture: 690e-6,
                needle: 160e-6,
                height: SlitHeight::Full,
            },
            fixed_pixel: None,
            spatial_average: false,
            pixel_binning: 1,
            section_half_height: 0.5e-3,
            ratios: vec![0.06, 0.3, 0.6, 1.2, 2.0],
            sizes: vec![400e-6, 550e-6, 690e-6, 850e-6, 1000e-6],
            schedule: SizeSchedule::WidthOnly,
            diameters: vec![1.5e-3, 3e-3, 6e-3],
            execution: Execution::default(),
        }
    }

    /// 2D setup on 256² sites of 12 µm with a 3 mm diaphragm and 1.5 mm tall slits.
    pub fn standard_2d(scenario: Scenario) -> Self {
        Self {
            lattice: Lattice::square(256, 12e-6).expect("valid lattice"),
            diaphragm: Diaphragm::Diameter(3e-3),
            object: ObjectSpec::DoubleSlit {
                aperture: 690e-6,
                needle: 160e-6,
                height: SlitHeight::Finite(1.5e-3),
            },
            ..Self::standard_1d(scenario)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("focal", self.focal),
            ("source_distance", self.source_distance),
            ("mean_intensity", self.mean_intensity),
            ("magnification", self.magnification),
            ("section_half_height", self.section_half_height),
        ] {
            require_positive(name, v)?;
        }
        match self.speckle {
            SpeckleSize::EnvelopeStd(v) => require_positive("envelope_std", v)?,
            SpeckleSize::CoherenceLength(v) => require_positive("speckle_size", v)?,
        }
        match self.diaphragm {
            Diaphragm::Diameter(v) => require_positive("diaphragm", v)?,
            Diaphragm::CoherenceLength(v) => require_positive("far_speckle_size", v)?,
        }
        if let Some(s) = self.object_envelope_std {
            require_positive("object_envelope_std", s)?;
        }
        self.splitter.validate()?;
        if self.pixel_binning == 0 {
            return Err(invalid("pixel_binning", "must be >= 1"));
        }
        if self.spatial_average && self.lattice.rank() != 1 {
            return Err(invalid("spatial_average", "only available on 1D grids"));
        }
        for (name, list) in [
            ("ratios", &self.ratios),
            ("sizes", &self.sizes),
            ("diameters", &self.diameters),
        ] {
            for v in list {
                require_positive(name, *v)?;
            }
        }
        match self.scenario {
            Scenario::CoherenceSweep if self.ratios.len() < 3 => {
                Err(invalid("ratios", "the coherence sweep needs at least 3 ratios"))
            }
            Scenario::VisibilitySweep if self.sizes.len() < 4 => {
                Err(invalid("sizes", "the visibility sweep needs at least 4 sizes"))
            }
            _ => Ok(()),
        }
    }

    /// Flat key/value echo of every setting except the worker count.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("scenario", self.scenario.name().into());
        put("dim", self.lattice.rank().to_string());
        put("sites", self.lattice.dim(0).to_string());
        put("pitch", format!("{}", self.lattice.pitch()[0]));
        put("wavelength", format!("{}", self.wavelength));
        put("focal", format!("{}", self.focal));
        put("source_distance", format!("{}", self.source_distance));
        match self.speckle {
            SpeckleSize::EnvelopeStd(v) => put("envelope_std", format!("{v}")),
            SpeckleSize::CoherenceLength(v) => put("speckle_size", format!("{v}")),
        }
        match self.diaphragm {
            Diaphragm::Diameter(v) => put("diaphragm", format!("{v}")),
            Diaphragm::CoherenceLength(v) => put("far_speckle_size", format!("{v}")),
        }
        put("mean_intensity", format!("{}", self.mean_intensity));
        if let Some(s) = self.object_envelope_std {
            put("object_envelope_std", format!("{s}"));
        }
        put("splitter_t2", format!("{}", self.splitter.t.norm_sqr()));
        put("splitter_r2", format!("{}", self.splitter.r.norm_sqr()));
        put("magnification", format!("{}", self.magnification));
        if let Some((x, y)) = self.fixed_pixel {
            put("fixed_pixel_x", format!("{x}"));
            put("fixed_pixel_y", format!("{y}"));
        }
        put("spatial_average", self.spatial_average.to_string());
        put("pixel_binning", self.pixel_binning.to_string());
        put("section_half_height", format!("{}", self.section_half_height));
        put("ratios", list(&self.ratios));
        put("sizes", list(&self.sizes));
        put(
            "schedule",
            match self.schedule {
                SizeSchedule::WidthOnly => "width_only",
                SizeSchedule::FixedAspect => "fixed_aspect",
            }
            .into(),
        );
        put("diameters", list(&self.diameters));
        put("frames", self.execution.frames.to_string());
        put("seed", self.execution.master_seed.to_string());
        put("first_frame", self.execution.first_frame.to_string());
        self.object.echo(&mut m);
        m
    }
}

/// Acceptance rule of one metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    /// |value/target − 1| ≤ rel.
    Relative { target: f64, rel: f64 },
    /// |value − target| ≤ abs.
    Absolute { target: f64, abs: f64 },
    /// Reported only.
    Report,
}

impl Tolerance {
    pub fn accepts(&self, v: f64) -> bool {
        match *self {
            Tolerance::AtMost { limit } => v <= limit,
            Tolerance::AtLeast { limit } => v >= limit,
            Tolerance::Relative { target, rel } => (v / target - 1.0).abs() <= rel,
            Tolerance::Absolute { target, abs } => (v - target).abs() <= abs,
            Tolerance::Report => true,
        }
    }
}

/// Where a metric's expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// A value or trend measured in the reference experiment.
    Experiment,
    /// An exact prediction computed from the configuration.
    Oracle,
    /// A law that holds for every configuration.
    Invariant,
    /// Informational.
    Diagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: Tolerance,
    pub basis: Basis,
    pub passed: bool,
}

/// Signed per-site values on a 2D lattice (covariances may be negative).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub config: BTreeMap<String, String>,
    pub metrics: Vec<Metric>,
    #[serde(skip)]
    pub profiles: BTreeMap<String, Profile>,
    #[serde(skip)]
    pub maps: BTreeMap<String, ScalarMap>,
}

impl ScenarioReport {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            scenario: cfg.scenario,
            config: cfg.echo(),
            metrics: Vec::new(),
            profiles: BTreeMap::new(),
            maps: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, tolerance: Tolerance, basis: Basis) {
        let passed = value.is_finite() && tolerance.accepts(value);
        self.metrics.push(Metric {
            name: name.into(),
            value,
            tolerance,
            basis,
            passed: passed || (tolerance == Tolerance::Report),
        });
    }

    pub fn report(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, value, Tolerance::Report, Basis::Diagnostic);
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.metric(name).map(|m| m.value)
    }

    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.metrics
            .iter()
            .filter(|m| !m.passed)
            .map(|m| m.name.clone())
            .collect()
    }
}

/// Runs the configured scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::GhostDiffraction => run_ghost_diffraction(cfg),
        Scenario::GhostImage => run_ghost_image(cfg),
        Scenario::GhostPair => run_ghost_pair(cfg),
        Scenario::CoherenceSweep => run_coherence_sweep(cfg, &cfg.ratios),
        Scenario::VisibilitySweep => run_visibility_sweep(cfg, &cfg.sizes),
        Scenario::Characterization => run_characterization(cfg),
        Scenario::Snr => run_snr_study(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slit() -> ObjectSpec {
        ObjectSpec::DoubleSlit {
            aperture: 690e-6,
            needle: 160e-6,
            height: SlitHeight::Finite(1.5e-3),
        }
    }

    #[test]
    fn width_only_keeps_height() {
        match slit().resized(1380e-6, SizeSchedule::WidthOnly).unwrap() {
            ObjectSpec::DoubleSlit { aperture, height, .. } => {
                assert_eq!(aperture, 1380e-6);
                assert_eq!(height, SlitHeight::Finite(1.5e-3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixed_aspect_scales_height() {
        match slit().resized(1380e-6, SizeSchedule::FixedAspect).unwrap() {
            ObjectSpec::DoubleSlit { height: SlitHeight::Finite(h), .. } => {
                assert!((h - 3e-3).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phase_objects_cannot_be_resized() {
        let g = ObjectSpec::PhaseGrating {
            period: 100e-6,
            depth: 1.0,
        };
        assert!(g.resized(1e-3, SizeSchedule::WidthOnly).is_err());
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::parse(s.name()), Some(s));
        }
        assert_eq!(Scenario::parse("nope"), None);
    }

    #[test]
    fn tolerance_rules() {
        assert!(Tolerance::Relative { target: 2.0, rel: 0.25 }.accepts(2.4));
        assert!(!Tolerance::Relative { target: 2.0, rel: 0.25 }.accepts(2.6));
        assert!(Tolerance::AtMost { limit: 0.1 }.accepts(0.1));
        assert!(!Tolerance::AtLeast { limit: 0.5 }.accepts(0.49));
        assert!(Tolerance::Absolute { target: 1.0, abs: 0.01 }.accepts(0.995));
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let mut c = ScenarioConfig::standard_1d(Scenario::CoherenceSweep);
        c.ratios = vec![0.1, 1.0];
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::standard_2d(Scenario::GhostImage);
        c.spatial_average = true;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::standard_1d(Scenario::GhostImage);
        c.pixel_binning = 0;
        assert!(c.validate().is_err());
        assert!(ScenarioConfig::standard_1d(Scenario::GhostImage).validate().is_ok());
    }
}
