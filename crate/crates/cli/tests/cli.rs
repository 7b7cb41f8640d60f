use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ghostlab");

fn ghostlab(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("GHOSTLAB_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.cfg");
    fs::write(&path, body).unwrap();
    path
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const SMALL_IMAGE: &str = "\
# quick ghost image
scenario = ghost_image
sites = 1024
pitch = 4um
far_speckle_size = 40um
object_width = 300um
needle = 60um
frames = 600
seed = 7
";

#[test]
fn run_writes_profiles_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_IMAGE);
    let out = tmp.path().join("out");
    let o = ghostlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 1, "{}", String::from_utf8_lossy(&o.stderr));

    let s = summary(&out);
    assert_eq!(s["scenario"], "ghost_image");
    assert_eq!(s["seed"], 7);
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(s["config"]["frames"], "600");
    assert_eq!(s["passed"].as_bool().unwrap(), code == 0);
    let metrics = s["metrics"].as_array().unwrap();
    assert!(!metrics.is_empty());
    for m in metrics {
        assert!(m["tolerance"]["kind"].is_string(), "{m}");
        assert!(m["basis"].is_string(), "{m}");
        assert!(m["passed"].is_boolean(), "{m}");
    }

    let csv = fs::read_to_string(out.join("profile_image_G.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("position_m,value"));
    let row = lines.next().unwrap();
    let (x, v) = row.split_once(',').unwrap();
    for field in [x, v] {
        let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
        field.parse::<f64>().unwrap();
    }
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_IMAGE);
    let mut runs = Vec::new();
    for w in ["1", "4", "8"] {
        let out = tmp.path().join(format!("w{w}"));
        let o = ghostlab(
            &["run", cfg.to_str().unwrap(), "--workers", w, "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(o.status.code().unwrap() <= 1);
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        let bytes: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into(), fs::read(p).unwrap()))
            .collect();
        runs.push(bytes);
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn output_dir_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_IMAGE);
    let env_out = tmp.path().join("from_env");
    let o = ghostlab(&["run", cfg.to_str().unwrap()], &[("GHOSTLAB_OUT", &env_out)]);
    assert!(o.status.code().unwrap() <= 1);
    assert!(env_out.join("summary.json").is_file());
}

#[test]
fn missing_frames_exits_with_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "scenario = ghost_image\n");
    let o = ghostlab(&["validate", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frames"));
}

#[test]
fn invalid_splitter_names_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scenario = ghost_image\nframes = 10\nsplitter_t2 = 0.7\nsplitter_r2 = 0.7\n",
    );
    let o = ghostlab(&["validate", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn validate_echoes_units_in_metres() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "scenario = ghost_diffraction\nframes = 10\nfocal = 80mm\n");
    let o = ghostlab(&["validate", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l == "focal = 0.08"), "{text}");
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_IMAGE);
    let out = tmp.path().join("sweep");
    let o = ghostlab(
        &[
            "sweep",
            cfg.to_str().unwrap(),
            "--key",
            "object_width",
            "--values",
            "250um,350um",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    for v in ["250um", "350um"] {
        let s = summary(&out.join(format!("object_width_{v}")));
        assert_eq!(s["scenario"], "ghost_image");
    }
    let a = summary(&out.join("object_width_250um"));
    let b = summary(&out.join("object_width_350um"));
    assert_ne!(a["config"]["object_width"], b["config"]["object_width"]);
}

#[test]
fn two_dimensional_run_writes_maps() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scenario = ghost_image\ndim = 2\nsites = 64\npitch = 24um\nspeckle_size = 80um\ndiaphragm = 1mm\nobject_width = 400um\nneedle = 80um\nobject_height = 600um\nframes = 200\n",
    );
    let out = tmp.path().join("out");
    let o = ghostlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(out.join("map_image_G.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n64 64\n65535\n"));
    assert_eq!(pgm.len(), b"P5\n64 64\n65535\n".len() + 64 * 64 * 2);
    let side: Value =
        serde_json::from_str(&fs::read_to_string(out.join("map_image_G.json")).unwrap()).unwrap();
    assert!(side["min"].as_f64().unwrap() <= side["max"].as_f64().unwrap());
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let o = ghostlab(&["validate", path.to_str().unwrap()], &[]);
            assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
            n += 1;
        }
    }
    assert!(n >= 5);
}
