//! Line-based `key = value` experiment files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ghostlab::grid::Lattice;
use ghostlab::objects::SlitHeight;
use ghostlab::scenarios::{
    Diaphragm, ObjectSpec, Scenario, ScenarioConfig, SizeSchedule, SpeckleSize,
};
use ghostlab::source::SplitterSpec;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: `{key}`: bad unit in `{value}` (use um, mm or m)")]
    BadUnit {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{}: {reason}", location(*.line, key))]
    Invalid {
        line: Option<usize>,
        key: String,
        reason: String,
    },
    #[error("cannot read `{path}`: {reason}")]
    Io { path: String, reason: String },
}

fn location(line: Option<usize>, key: &str) -> String {
    match line {
        Some(l) => format!("line {l}: `{key}`"),
        None => format!("`{key}`"),
    }
}

/// Kind of value a key takes.
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Length,
    LengthList,
    Number,
    NumberList,
    Integer,
    Word,
}

const KEYS: &[(&str, Kind)] = &[
    ("scenario", Kind::Word),
    ("dim", Kind::Integer),
    ("sites", Kind::Integer),
    ("pitch", Kind::Length),
    ("wavelength", Kind::Length),
    ("focal", Kind::Length),
    ("source_distance", Kind::Length),
    ("speckle_size", Kind::Length),
    ("envelope_std", Kind::Length),
    ("far_speckle_size", Kind::Length),
    ("diaphragm", Kind::Length),
    ("mean_intensity", Kind::Number),
    ("object_envelope_std", Kind::Length),
    ("splitter_t2", Kind::Number),
    ("splitter_r2", Kind::Number),
    ("magnification", Kind::Number),
    ("object", Kind::Word),
    ("object_width", Kind::Length),
    ("needle", Kind::Length),
    ("object_height", Kind::Word),
    ("bitmap", Kind::Word),
    ("grating_period", Kind::Length),
    ("grating_depth", Kind::Number),
    ("fixed_pixel_x", Kind::Length),
    ("fixed_pixel_y", Kind::Length),
    ("spatial_average", Kind::Word),
    ("pixel_binning", Kind::Integer),
    ("section_half_height", Kind::Length),
    ("ratios", Kind::NumberList),
    ("sizes", Kind::LengthList),
    ("schedule", Kind::Word),
    ("diameters", Kind::LengthList),
    ("frames", Kind::Integer),
    ("seed", Kind::Integer),
    ("first_frame", Kind::Integer),
    ("workers", Kind::Integer),
    ("out", Kind::Word),
];

/// A validated experiment: the scenario plus run-time settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn workers(&self) -> usize {
        self.scenario.execution.workers
    }
}

/// Raw entries with their line numbers.
#[derive(Clone, Debug, Default)]
pub struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut e = Entries::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: k.to_string(),
                });
            }
            if e.map.contains_key(k) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: k.to_string(),
                });
            }
            e.map.insert(k.to_string(), (line, v.to_string()));
        }
        Ok(e)
    }

    /// Sets `key = value` as if it were written on line 0 (command-line overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(ConfigError::UnknownKey {
                line: 0,
                key: key.to_string(),
            });
        }
        self.map.insert(key.to_string(), (0, value.to_string()));
        Ok(())
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l).filter(|l| *l > 0)
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn kind(key: &str) -> Kind {
        KEYS.iter().find(|(k, _)| *k == key).map(|(_, t)| *t).expect("known key")
    }

    fn length(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        debug_assert!(Self::kind(key) == Kind::Length);
        self.raw(key)
            .map(|(line, v)| parse_length(v).map_err(|e| e.at(line, key, v)))
            .transpose()
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        debug_assert!(Self::kind(key) == Kind::Number);
        self.raw(key)
            .map(|(line, v)| parse_number(v).map_err(|e| e.at(line, key, v)))
            .transpose()
    }

    fn integer(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        debug_assert!(Self::kind(key) == Kind::Integer);
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<u64>().map_err(|_| ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    reason: format!("`{v}` is not a non-negative integer"),
                })
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let kind = Self::kind(key);
        self.raw(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|item| {
                        let item = item.trim();
                        let r = if kind == Kind::LengthList {
                            parse_length(item)
                        } else {
                            parse_number(item)
                        };
                        r.map_err(|e| e.at(line, key, item))
                    })
                    .collect()
            })
            .transpose()
    }

    fn word(&self, key: &str) -> Option<(usize, &str)> {
        self.raw(key)
    }

    fn bad(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            line: self.line(key).unwrap_or(0),
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

enum ValueError {
    Unit,
    Number,
}

impl ValueError {
    fn at(self, line: usize, key: &str, value: &str) -> ConfigError {
        match self {
            ValueError::Unit => ConfigError::BadUnit {
                line,
                key: key.to_string(),
                value: value.to_string(),
            },
            ValueError::Number => ConfigError::BadValue {
                line,
                key: key.to_string(),
                reason: format!("`{value}` is not a number"),
            },
        }
    }
}

/// `0.532um`, `80mm`, `0.6m` or a bare number of meters.
fn parse_length(v: &str) -> Result<f64, ValueError> {
    let v = v.trim();
    let split = v
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(v.len());
    let (num, unit) = v.split_at(split);
    let divisor = match unit.trim() {
        "" | "m" => 1.0,
        "mm" => 1e3,
        "um" | "µm" => 1e6,
        _ => return Err(ValueError::Unit),
    };
    let x: f64 = num.trim().parse().map_err(|_| {
        if num.trim().chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E') {
            ValueError::Unit
        } else {
            ValueError::Number
        }
    })?;
    Ok(x / divisor)
}

fn parse_number(v: &str) -> Result<f64, ValueError> {
    v.trim().parse::<f64>().map_err(|_| {
        if v.trim().chars().last().is_some_and(|c| c.is_ascii_alphabetic()) {
            ValueError::Unit
        } else {
            ValueError::Number
        }
    })
}

/// Parses and validates an experiment file. Relative `bitmap` paths resolve
/// against `base`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    build(&Entries::parse(text)?, Path::new("."))
}

pub fn parse_config_file(path: &Path) -> Result<(Entries, PathBuf), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((Entries::parse(&text)?, base))
}

/// Builds the validated config from raw entries.
pub fn build(e: &Entries, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let (sline, sname) = e.word("scenario").ok_or(ConfigError::Missing("scenario"))?;
    let scenario = Scenario::parse(sname).ok_or_else(|| ConfigError::BadValue {
        line: sline,
        key: "scenario".into(),
        reason: format!(
            "unknown scenario `{sname}` (expected one of {})",
            Scenario::ALL.map(|s| s.name()).join(", ")
        ),
    })?;
    let frames = e.integer("frames")?.ok_or(ConfigError::Missing("frames"))?;
    if frames < 1 {
        return Err(e.bad("frames", "must be >= 1"));
    }
    let dim = e.integer("dim")?.unwrap_or(1);
    let mut c = match dim {
        1 => ScenarioConfig::standard_1d(scenario),
        2 => ScenarioConfig::standard_2d(scenario),
        _ => return Err(e.bad("dim", "must be 1 or 2")),
    };
    let sites = e.integer("sites")?.map(|v| v as usize).unwrap_or(c.lattice.dim(0));
    let pitch = e.length("pitch")?.unwrap_or(c.lattice.pitch()[0]);
    let lattice = if dim == 1 {
        Lattice::line(sites, pitch)
    } else {
        Lattice::square(sites, pitch)
    };
    c.lattice = lattice.map_err(|err| invalid(e, &["sites", "pitch"], err))?;

    if let Some(v) = e.length("wavelength")? {
        c.wavelength = v;
    }
    if let Some(v) = e.length("focal")? {
        c.focal = v;
    }
    if let Some(v) = e.length("source_distance")? {
        c.source_distance = v;
    }
    match (e.length("speckle_size")?, e.length("envelope_std")?) {
        (Some(_), Some(_)) => {
            return Err(e.bad("envelope_std", "give either speckle_size or envelope_std"))
        }
        (Some(v), None) => c.speckle = SpeckleSize::CoherenceLength(v),
        (None, Some(v)) => c.speckle = SpeckleSize::EnvelopeStd(v),
        (None, None) => {}
    }
    match (e.length("far_speckle_size")?, e.length("diaphragm")?) {
        (Some(_), Some(_)) => {
            return Err(e.bad("diaphragm", "give either far_speckle_size or diaphragm"))
        }
        (Some(v), None) => c.diaphragm = Diaphragm::CoherenceLength(v),
        (None, Some(v)) => c.diaphragm = Diaphragm::Diameter(v),
        (None, None) => {}
    }
    if let Some(v) = e.number("mean_intensity")? {
        c.mean_intensity = v;
    }
    c.object_envelope_std = e.length("object_envelope_std")?;
    let t2 = e.number("splitter_t2")?.unwrap_or(c.splitter.t.norm_sqr());
    let r2 = e.number("splitter_r2")?.unwrap_or(c.splitter.r.norm_sqr());
    c.splitter = SplitterSpec::from_powers(t2, r2)
        .map_err(|err| invalid(e, &["splitter_r2", "splitter_t2"], err))?;
    if let Some(v) = e.number("magnification")? {
        c.magnification = v;
    }
    c.object = object(e, base, &c.object)?;
    match (e.length("fixed_pixel_x")?, e.length("fixed_pixel_y")?) {
        (None, None) => {}
        (x, y) => c.fixed_pixel = Some((x.unwrap_or(0.0), y.unwrap_or(0.0))),
    }
    if let Some((line, v)) = e.word("spatial_average") {
        c.spatial_average = match v {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            _ => {
                return Err(ConfigError::BadValue {
                    line,
                    key: "spatial_average".into(),
                    reason: format!("`{v}` is not a boolean"),
                })
            }
        };
    }
    if let Some(v) = e.integer("pixel_binning")? {
        c.pixel_binning = v as usize;
    }
    if let Some(v) = e.length("section_half_height")? {
        c.section_half_height = v;
    }
    if let Some(v) = e.list("ratios")? {
        c.ratios = v;
    }
    if let Some(v) = e.list("sizes")? {
        c.sizes = v;
    }
    if let Some((line, v)) = e.word("schedule") {
        c.schedule = match v {
            "width_only" => SizeSchedule::WidthOnly,
            "fixed_aspect" => SizeSchedule::FixedAspect,
            _ => {
                return Err(ConfigError::BadValue {
                    line,
                    key: "schedule".into(),
                    reason: format!("`{v}` (expected width_only or fixed_aspect)"),
                })
            }
        };
    }
    if let Some(v) = e.list("diameters")? {
        c.diameters = v;
    }
    c.execution.frames = frames;
    if let Some(v) = e.integer("seed")? {
        c.execution.master_seed = v;
    }
    if let Some(v) = e.integer("first_frame")? {
        c.execution.first_frame = v;
    }
    if let Some(v) = e.integer("workers")? {
        if v == 0 {
            return Err(e.bad("workers", "must be >= 1"));
        }
        c.execution.workers = v as usize;
    }
    c.validate().map_err(|err| invalid(e, &[], err))?;
    Ok(ExperimentConfig {
        scenario: c,
        out: e.word("out").map(|(_, v)| PathBuf::from(v)),
    })
}

fn object(e: &Entries, base: &Path, default: &ObjectSpec) -> Result<ObjectSpec, ConfigError> {
    let height = match e.word("object_height") {
        None => None,
        Some((_, "full")) => Some(SlitHeight::Full),
        Some((line, v)) => Some(SlitHeight::Finite(
            parse_length(v).map_err(|err| err.at(line, "object_height", v))?,
        )),
    };
    let width = e.length("object_width")?;
    let Some((line, kind)) = e.word("object") else {
        // default object with per-key overrides
        return Ok(match default {
            ObjectSpec::DoubleSlit {
                aperture,
                needle,
                height: h,
            } => ObjectSpec::DoubleSlit {
                aperture: width.unwrap_or(*aperture),
                needle: e.length("needle")?.unwrap_or(*needle),
                height: height.unwrap_or(*h),
            },
            other => other.clone(),
        });
    };
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| e.bad(key, "required by this object"));
    let need_width = || width.ok_or_else(|| ConfigError::Invalid {
        line: Some(line),
        key: "object_width".into(),
        reason: format!("required for object `{kind}`"),
    });
    Ok(match kind {
        "none" => ObjectSpec::None,
        "double_slit" => ObjectSpec::DoubleSlit {
            aperture: need_width()?,
            needle: e.length("needle")?.ok_or_else(|| ConfigError::Invalid {
                line: Some(line),
                key: "needle".into(),
                reason: "required for object `double_slit`".into(),
            })?,
            height: height.unwrap_or(SlitHeight::Full),
        },
        "single_slit" => ObjectSpec::SingleSlit {
            width: need_width()?,
            height: height.unwrap_or(SlitHeight::Full),
        },
        "glyph" => ObjectSpec::Glyph {
            width: need_width()?,
        },
        "bitmap" => {
            let (bline, label) = e.word("bitmap").ok_or_else(|| ConfigError::Invalid {
                line: Some(line),
                key: "bitmap".into(),
                reason: "required for object `bitmap`".into(),
            })?;
            let path = base.join(label);
            let image = std::fs::read(&path).map_err(|err| ConfigError::BadValue {
                line: bline,
                key: "bitmap".into(),
                reason: format!("cannot read `{}`: {err}", path.display()),
            })?;
            ObjectSpec::Bitmap {
                label: label.to_string(),
                image,
                width: need_width()?,
            }
        }
        "phase_grating" => ObjectSpec::PhaseGrating {
            period: need(e.length("grating_period")?, "grating_period")?,
            depth: e.number("grating_depth")?.unwrap_or(std::f64::consts::PI),
        },
        _ => {
            return Err(ConfigError::BadValue {
                line,
                key: "object".into(),
                reason: format!(
                    "unknown object `{kind}` (expected none, double_slit, single_slit, glyph, bitmap or phase_grating)"
                ),
            })
        }
    })
}

/// Maps a library validation error onto the offending key and its line.
fn invalid(e: &Entries, candidates: &[&str], err: ghostlab::Error) -> ConfigError {
    let named = match &err {
        ghostlab::Error::InvalidParameter { name, .. } => Some(*name),
        _ => None,
    };
    let key = named
        .map(|n| match n {
            "splitter" => "splitter_r2",
            "speckle_size" | "envelope_std" | "diaphragm" | "far_speckle_size" => n,
            other => other,
        })
        .filter(|k| e.map.contains_key(*k))
        .or_else(|| candidates.iter().copied().find(|k| e.map.contains_key(*k)))
        .or(named)
        .or(candidates.first().copied())
        .unwrap_or("config");
    ConfigError::Invalid {
        line: e.line(key),
        key: key.to_string(),
        reason: err.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "scenario = ghost_diffraction\nframes = 100\n";

    #[test]
    fn wavelength_in_micrometres() {
        let c = parse_config(&format!("{MINIMAL}wavelength = 0.532um\n")).unwrap();
        assert!((c.scenario.wavelength - 5.32e-7).abs() < 1e-20);
    }

    #[test]
    fn units_normalize_to_metres() {
        assert!((parse_length("80mm").ok().unwrap() - 0.08).abs() < 1e-15);
        assert!((parse_length("0.6m").ok().unwrap() - 0.6).abs() < 1e-15);
        assert!((parse_length("1.5e-3").ok().unwrap() - 1.5e-3).abs() < 1e-18);
        assert!((parse_length("3 mm").ok().unwrap() - 3e-3).abs() < 1e-18);
        assert!(matches!(parse_length("5nm"), Err(ValueError::Unit)));
        assert!(matches!(parse_length("abc"), Err(ValueError::Unit)));
    }

    #[test]
    fn missing_frames_is_named() {
        let err = parse_config("scenario = ghost_image\n").unwrap_err();
        assert_eq!(err, ConfigError::Missing("frames"));
        assert!(err.to_string().contains("frames"));
    }

    #[test]
    fn splitter_powers_must_not_exceed_one() {
        let err = parse_config(&format!("{MINIMAL}splitter_t2 = 0.5\nsplitter_r2 = 0.6\n")).unwrap_err();
        match err {
            ConfigError::Invalid { line, key, .. } => {
                assert_eq!(line, Some(4));
                assert_eq!(key, "splitter_r2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config(&format!("{MINIMAL}# comment\n\nlambda = 1um\n")).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 5,
                key: "lambda".into()
            }
        );
    }

    #[test]
    fn bad_unit_reports_line() {
        let err = parse_config(&format!("focal = 80cm\n{MINIMAL}")).unwrap_err();
        assert!(matches!(err, ConfigError::BadUnit { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn out_of_range_values() {
        let err = parse_config(&format!("{MINIMAL}wavelength = -1um\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: Some(3), .. }), "{err:?}");
        let err = parse_config("scenario = ghost_image\nframes = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }), "{err:?}");
        let err = parse_config(&format!("{MINIMAL}dim = 3\n")).unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn unknown_scenario_and_object() {
        assert!(matches!(
            parse_config("scenario = hologram\nframes = 1\n"),
            Err(ConfigError::BadValue { line: 1, .. })
        ));
        assert!(matches!(
            parse_config(&format!("{MINIMAL}object = lens\n")),
            Err(ConfigError::BadValue { line: 3, .. })
        ));
    }

    #[test]
    fn comments_and_duplicates() {
        let c = parse_config("scenario = snr # trailing\nframes = 40 # n\n").unwrap();
        assert_eq!(c.scenario.execution.frames, 40);
        assert!(matches!(
            parse_config(&format!("{MINIMAL}frames = 3\n")),
            Err(ConfigError::Duplicate { line: 3, .. })
        ));
    }

    #[test]
    fn full_object_spec() {
        let c = parse_config(&format!(
            "{MINIMAL}dim = 2\nsites = 128\npitch = 12um\nobject = glyph\nobject_width = 1mm\nsizes = 400um, 0.5mm\nratios = 0.1, 1\n"
        ))
        .unwrap();
        assert_eq!(c.scenario.lattice.rank(), 2);
        assert_eq!(c.scenario.object, ObjectSpec::Glyph { width: 1e-3 });
        assert_eq!(c.scenario.sizes, vec![400e-6, 0.5e-3]);
        assert_eq!(c.scenario.ratios, vec![0.1, 1.0]);
        let err = parse_config(&format!("{MINIMAL}object = single_slit\n")).unwrap_err();
        assert!(err.to_string().contains("object_width"), "{err}");
    }

    #[test]
    fn speckle_given_two_ways_is_rejected() {
        let err = parse_config(&format!("{MINIMAL}speckle_size = 34um\nenvelope_std = 1mm\n")).unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 4, .. }), "{err:?}");
    }
}
