//! Writes a scenario report to disk: CSV profiles, 16-bit PGM maps and a JSON summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ghostlab::grid::Profile;
use ghostlab::pgm::Graymap;
use ghostlab::scenarios::{Metric, ScalarMap, ScenarioReport};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    scenario: &'a str,
    seed: u64,
    passed: bool,
    failures: Vec<String>,
    config: &'a std::collections::BTreeMap<String, String>,
    metrics: &'a [Metric],
    files: Vec<String>,
}

#[derive(Serialize)]
struct MapSidecar {
    width: usize,
    height: usize,
    pitch_x: f64,
    pitch_y: f64,
    min: f64,
    max: f64,
    maxval: u16,
}

/// Writes every artifact of `report` into `dir` and returns the files written.
pub fn write_outputs(report: &ScenarioReport, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    for (name, p) in &report.profiles {
        let path = dir.join(format!("profile_{name}.csv"));
        write_profile(&path, p)?;
        files.push(path);
    }
    for (name, g) in &report.maps {
        let path = dir.join(format!("map_{name}.pgm"));
        let side = dir.join(format!("map_{name}.json"));
        write_map(&path, &side, g)?;
        files.push(path);
        files.push(side);
    }
    let summary = Summary {
        version: VERSION,
        scenario: report.scenario.name(),
        seed,
        passed: report.passed(),
        failures: report.failures(),
        config: &report.config,
        metrics: &report.metrics,
        files: files
            .iter()
            .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(files)
}

pub fn write_profile(path: &Path, p: &Profile) -> Result<()> {
    let mut out = String::from("position_m,value\n");
    for (x, v) in p.positions.iter().zip(&p.values) {
        out.push_str(&format!("{},{}\n", sig17(*x), sig17(*v)));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Seventeen significant digits, enough to round-trip any f64.
fn sig17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "nan".into()
    }
}

/// 16-bit P5 graymap, linearly scaled from [min, max]; top row is the largest y.
pub fn write_map(path: &Path, sidecar: &Path, g: &ScalarMap) -> Result<()> {
    let lat = &g.lattice;
    let (w, h) = (lat.dim(0), lat.dim(1));
    let v = &g.values;
    let finite = v.iter().copied().filter(|x| x.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut pixels = Vec::with_capacity(w * h);
    for row in (0..h).rev() {
        for col in 0..w {
            let x = v[lat.index(col, row)];
            let level = if span > 0.0 && x.is_finite() {
                ((x - min) / span * 65535.0).round()
            } else {
                0.0
            };
            pixels.push(level as u16);
        }
    }
    let gm = Graymap {
        width: w,
        height: h,
        maxval: u16::MAX,
        pixels,
    };
    let mut f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    f.write_all(&gm.to_p5())?;
    let pitch = lat.pitch();
    let meta = MapSidecar {
        width: w,
        height: h,
        pitch_x: pitch[0],
        pitch_y: pitch.get(1).copied().unwrap_or(pitch[0]),
        min,
        max,
        maxval: u16::MAX,
    };
    fs::write(sidecar, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", sidecar.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ghostlab::grid::Lattice;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-7, 6.02214076e23] {
            let s = sig17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn map_is_scaled_to_full_range() {
        let dir = tempfile::tempdir().unwrap();
        let lat = Lattice::square(4, 1e-6).unwrap();
        let values: Vec<f64> = (0..16).map(|k| k as f64 - 3.0).collect();
        let g = ScalarMap { lattice: lat, values };
        let (p, s) = (dir.path().join("m.pgm"), dir.path().join("m.json"));
        write_map(&p, &s, &g).unwrap();
        let gm = Graymap::parse(&fs::read(&p).unwrap()).unwrap();
        assert_eq!((gm.width, gm.height, gm.maxval), (4, 4, 65535));
        // top-left pixel is the highest row, first column: value 12
        assert_eq!(gm.pixels[0], (12.0f64 / 15.0 * 65535.0).round() as u16);
        assert_eq!(gm.pixels[3], 65535);
        assert_eq!(gm.pixels[12], 0);
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
        assert_eq!(meta["min"], -3.0);
        assert_eq!(meta["max"], 12.0);
    }
}
