//! End-to-end scenario runs at reduced size.

use ghostlab::scenarios::{
    run, Diaphragm, ObjectSpec, Scenario, ScenarioConfig, SpeckleSize,
};
use ghostlab::Error;

fn small(scenario: Scenario, frames: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::standard_1d(scenario);
    c.execution = c.execution.with_frames(frames);
    c
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn zero_frames_is_an_error() {
    let c = small(Scenario::GhostImage, 0);
    assert!(matches!(run(&c), Err(Error::TooFewFrames { .. })));
}

#[test]
fn reports_are_identical_for_any_worker_count() {
    let mut reports = Vec::new();
    for workers in [1, 4, 8] {
        let mut c = small(Scenario::GhostPair, 1500);
        c.execution.workers = workers;
        reports.push(run(&c).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
    assert!(!reports[0].config.contains_key("workers"));
}

#[test]
fn disjoint_seeds_give_different_estimates() {
    let a = run(&small(Scenario::GhostImage, 1000)).unwrap();
    let mut c = small(Scenario::GhostImage, 1000);
    c.execution.master_seed = 2;
    let b = run(&c).unwrap();
    assert_ne!(a.profiles["image_G"], b.profiles["image_G"]);
}

#[test]
fn coherent_illumination_washes_out_ghost_fringes() {
    let mut c = small(Scenario::GhostDiffraction, 4000);
    // near speckle about twice the object length
    c.speckle = SpeckleSize::CoherenceLength(1.2e-3);
    let r = run(&c).unwrap();
    let contrast = r.value("diffraction.fringe_contrast").unwrap();
    assert!(contrast < 0.05, "{contrast}");
}

#[test]
fn ghost_image_edge_tracks_near_speckle() {
    let r = run(&small(Scenario::GhostImage, 10_000)).unwrap();
    let m = r.metric("image.edge_width").unwrap();
    assert!(m.passed, "{m:?}");
    assert!(r.metric("image.nrmse").unwrap().passed);
}

#[test]
fn statistical_error_falls_as_inverse_root_frames() {
    let se = |frames| {
        let r = run(&small(Scenario::GhostImage, frames)).unwrap();
        rms(&r.profiles["image_std_error"].values)
    };
    let ratio = se(2_000) / se(8_000);
    assert!((ratio / 2.0 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn glyph_four_is_imaged() {
    let mut c = ScenarioConfig::standard_2d(Scenario::GhostImage);
    c.lattice = ghostlab::grid::Lattice::square(128, 12e-6).unwrap();
    c.diaphragm = Diaphragm::Diameter(1.2e-3);
    c.object = ObjectSpec::Glyph { width: 1e-3 };
    c.execution = c.execution.with_frames(30_000);
    let r = run(&c).unwrap();
    let nrmse = r.value("image.nrmse").unwrap();
    assert!(nrmse <= 0.10, "{nrmse}");
    assert!(r.maps.contains_key("image_G"));
}
