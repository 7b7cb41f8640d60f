use super::engine::{binned, run_frames, Bench, Execution, Tally};
use super::metrics::{
    boxcar, central_minima_spacing, edge_width, fringe_contrast, fringe_period, fringe_period_fit, ks_critical_1pct,
    ks_exponential, non_increasing, normalized_rms, smoothing_sites, spearman, strictly_decreasing,
    support,
};
use super::{
    Basis, Diaphragm, ObjectSpec, ScalarMap, ScenarioConfig, ScenarioReport, SpeckleSize, Tolerance,
};
use crate::correlator::{
    argmax, fit_gaussian_peak, radial_autocorrelation, snr_estimate, visibility_with_error,
    CorrelationAccumulator, CorrelationMode, CorrelationReport, IntensityMoments, SiteBox,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{focal_plane_lattice, IntensityGrid, Lattice, Profile};
use crate::objects::TransmissionMask;
use crate::optics::{Arm, ArmKind, ArmSpec};
use crate::oracles::{
    fraunhofer_pattern, mean_intensity, object_arm_mean_intensity, predicted_ghost_diffraction,
    predicted_ghost_image_bucket, predicted_spatial_average, vcz_coherence_length,
    visibility_ratio_estimate, Propagated, WindowedHomogeneous,
};
use crate::source::{
    calibrate_diaphragm, calibrate_envelope_std, far_field_fit, lag_window, near_field_fit,
    SourceConfig, ThermalSource,
};

/// Source, coherence and object resolved from a config.
struct Setup {
    source: ThermalSource,
    near: WindowedHomogeneous,
    mask: TransmissionMask,
    far: Lattice,
    near_length: f64,
    far_length: f64,
}

fn envelope_std(cfg: &ScenarioConfig, speckle: SpeckleSize) -> Result<f64> {
    match speckle {
        SpeckleSize::EnvelopeStd(v) => Ok(v),
        SpeckleSize::CoherenceLength(t) => {
            calibrate_envelope_std(&cfg.lattice, cfg.wavelength, cfg.source_distance, t)
        }
    }
}

fn diameter(cfg: &ScenarioConfig) -> Result<f64> {
    match cfg.diaphragm {
        Diaphragm::Diameter(d) => Ok(d),
        Diaphragm::CoherenceLength(t) => calibrate_diaphragm(
            &cfg.lattice,
            cfg.wavelength,
            cfg.focal,
            t,
            cfg.object_envelope_std,
        ),
    }
}

fn far_pitch(cfg: &ScenarioConfig) -> f64 {
    cfg.wavelength * cfg.focal / cfg.lattice.extent(0)
}

fn setup(cfg: &ScenarioConfig, object: &ObjectSpec, speckle: SpeckleSize, d: f64) -> Result<Setup> {
    let std = envelope_std(cfg, speckle)?;
    let scfg = SourceConfig {
        lattice: cfg.lattice.clone(),
        wavelength: cfg.wavelength,
        source_distance: cfg.source_distance,
        envelope_std: std,
        diaphragm_diameter: d,
        mean_intensity: cfg.mean_intensity,
        object_envelope_std: cfg.object_envelope_std,
    };
    let near_length = match speckle {
        SpeckleSize::CoherenceLength(t) => t,
        SpeckleSize::EnvelopeStd(e) => {
            let guess = cfg.wavelength * cfg.source_distance / (std::f64::consts::PI * e);
            let lags = lag_window(&cfg.lattice, guess, cfg.lattice.pitch()[0])?;
            near_field_fit(&scfg, lags)?.coherence_length
        }
    };
    let far_length = match cfg.diaphragm {
        Diaphragm::CoherenceLength(t) => t,
        Diaphragm::Diameter(d) => {
            let guess = cfg.wavelength * cfg.focal / d;
            let lags = lag_window(&cfg.lattice, guess, far_pitch(cfg))?;
            far_field_fit(
                &cfg.lattice,
                cfg.wavelength,
                cfg.focal,
                d,
                cfg.object_envelope_std,
                lags,
            )?
            .coherence_length
        }
    };
    let source = ThermalSource::new(scfg)?;
    let near = source.near_field_coherence();
    Ok(Setup {
        near,
        mask: object.mask(&cfg.lattice)?,
        far: focal_plane_lattice(&cfg.lattice, cfg.wavelength, cfg.focal)?,
        source,
        near_length,
        far_length,
    })
}

fn bench(cfg: &ScenarioConfig, s: &Setup, references: &[ArmKind]) -> Result<Bench> {
    let arm = |kind: ArmKind| {
        Arm::new(
            ArmSpec {
                kind,
                wavelength: cfg.wavelength,
                focal: cfg.focal,
            },
            &cfg.lattice,
        )
    };
    Ok(Bench {
        source: s.source.clone(),
        splitter: cfg.splitter,
        object: arm(ArmKind::Object(s.mask.clone()))?,
        references: references
            .iter()
            .cloned()
            .map(arm)
            .collect::<Result<Vec<_>>>()?,
    })
}

fn powers(cfg: &ScenarioConfig) -> (f64, f64) {
    (cfg.splitter.t.norm_sqr(), cfg.splitter.r.norm_sqr())
}

/// Row `iy` of a map on `lat` as a profile along x.
fn row(lat: &Lattice, v: &[f64], iy: usize) -> Profile {
    let nx = lat.dim(0);
    Profile::new(lat.axis(0).positions, v[iy * nx..(iy + 1) * nx].to_vec())
}

/// Rows with |y| ≤ half averaged (root-mean-square for standard errors).
fn band(lat: &Lattice, v: &[f64], half: f64, errors: bool) -> Profile {
    if lat.rank() == 1 {
        return row(lat, v, 0);
    }
    let nx = lat.dim(0);
    let rows: Vec<usize> = (0..lat.dim(1))
        .filter(|&iy| lat.coordinate(1, iy).abs() <= half + 1e-12)
        .collect();
    let n = rows.len().max(1) as f64;
    let values = (0..nx)
        .map(|ix| {
            let s: f64 = rows
                .iter()
                .map(|&iy| {
                    let x = v[iy * nx + ix];
                    if errors {
                        x * x
                    } else {
                        x
                    }
                })
                .sum();
            if errors {
                s.sqrt() / n
            } else {
                s / n
            }
        })
        .collect();
    Profile::new(lat.axis(0).positions, values)
}

fn smooth(p: &Profile, width: usize) -> Profile {
    Profile::new(p.positions.clone(), boxcar(&p.values, width))
}

fn scaled(v: &[f64], k: f64) -> Vec<f64> {
    v.iter().map(|x| x * k).collect()
}

fn map(lat: &Lattice, v: &[f64]) -> Result<ScalarMap> {
    if v.len() != lat.len() {
        return Err(Error::LatticeMismatch(format!("{} values for {} sites", v.len(), lat.len())));
    }
    Ok(ScalarMap {
        lattice: lat.clone(),
        values: v.to_vec(),
    })
}

/// Object length along x (1D) or the square root of its area (2D).
fn object_length(mask: &TransmissionMask) -> f64 {
    let m = mask.transmissive_measure();
    if mask.lattice().rank() == 2 {
        m.sqrt()
    } else {
        m
    }
}

// ---------------------------------------------------------------- diffraction

struct Diffraction {
    site: usize,
    x1: (f64, f64),
    row: usize,
    /// Exact ⟨I₁⟩ on the object-arm detector.
    mean_i1: Vec<f64>,
    /// Exact ⟨I₂⟩ on the diffraction reference.
    mean_i2: Vec<f64>,
    /// Exact G(x₁, ·).
    oracle: Vec<f64>,
    /// Unit-peak Fraunhofer pattern centred on x₁.
    fraunhofer: Profile,
    period: Option<f64>,
}

fn plan_diffraction(cfg: &ScenarioConfig, s: &Setup) -> Result<Diffraction> {
    let (t2, r2) = powers(cfg);
    let mean_i1 = scaled(
        &object_arm_mean_intensity(&s.mask, &s.near, cfg.wavelength, cfg.focal)?,
        t2,
    );
    let site = match cfg.fixed_pixel {
        Some((x, y)) => {
            let ix = s.far.nearest(0, x);
            let iy = if s.far.rank() == 2 { s.far.nearest(1, y) } else { Some(0) };
            let (ix, iy) = ix
                .zip(iy)
                .ok_or_else(|| invalid("fixed_pixel", "lies off the object-arm detector"))?;
            s.far.index(ix, iy)
        }
        None => argmax(&mean_i1),
    };
    let x1 = s.far.position(site);
    let gf = Propagated::new(s.near.clone(), s.far.clone())?;
    let oracle = predicted_ghost_diffraction(&s.mask, &gf, cfg.wavelength, cfg.focal, x1)?;
    let mean_i2 = scaled(&mean_intensity(&gf), r2);
    let fr = fraunhofer_pattern(&s.mask, cfg.wavelength, cfg.focal)?.row(0);
    let period = central_minima_spacing(&fr).ok();
    let fraunhofer = Profile::new(fr.positions.iter().map(|p| p + x1.0).collect(), fr.values);
    Ok(Diffraction {
        site,
        x1,
        row: s.far.coords(site).1,
        mean_i1,
        mean_i2,
        oracle: scaled(&oracle.raw(), t2 * r2),
        fraunhofer,
        period,
    })
}

/// Fringe contrast of a profile with errors, after smoothing over one far coherence length.
fn contrast(p: &Profile, se: &Profile, width: usize, center: f64, period: f64) -> f64 {
    fringe_contrast(&smooth(p, width), &smooth(se, width), center, period)
}

struct DirectIntensity<'a> {
    mean: &'a [f64],
    se: &'a [f64],
}

fn score_diffraction(
    s: &Setup,
    plan: &Diffraction,
    rep: &CorrelationReport,
    direct: Option<DirectIntensity<'_>>,
    out: &mut ScenarioReport,
) -> Result<()> {
    let far = &s.far;
    let g = row(far, &rep.g, plan.row);
    let se = row(far, &rep.std_error, plan.row);
    let oracle = row(far, &plan.oracle, plan.row);
    let width = smoothing_sites(s.far_length, far.pitch()[0]);
    let window = support(&oracle.values, 0.01);
    out.report("diffraction.x1", plan.x1.0);
    out.push(
        "diffraction.nrmse",
        normalized_rms(&g.values, &oracle.values, window),
        Tolerance::AtMost { limit: 0.07 },
        Basis::Experiment,
    );
    if let Some(p) = plan.period {
        out.report("diffraction.fraunhofer_period", p);
        let measured = fringe_period_fit(&g, &plan.fraunhofer, plan.x1.0, p).unwrap_or(f64::NAN);
        if let Ok(pm) = fringe_period(&smooth(&g, width), plan.x1.0, p) {
            out.report("diffraction.minima_period", pm);
        }
        out.push(
            "diffraction.fringe_period",
            measured,
            Tolerance::Relative { target: p, rel: 0.05 },
            Basis::Oracle,
        );
        if let Ok(po) = fringe_period_fit(&oracle, &plan.fraunhofer, plan.x1.0, p) {
            out.report("diffraction.oracle_period", po);
        }
        out.report("diffraction.fringe_contrast", contrast(&g, &se, width, plan.x1.0, p));
        let zero = Profile::new(oracle.positions.clone(), vec![0.0; oracle.len()]);
        out.report(
            "diffraction.oracle_contrast",
            contrast(&oracle, &zero, width, plan.x1.0, p),
        );
        if let Some(d) = &direct {
            let iy0 = if far.rank() == 2 { far.center(1) } else { 0 };
            let c = contrast(&row(far, d.mean, iy0), &row(far, d.se, iy0), width, 0.0, p);
            out.report("diffraction.direct_contrast", c);
        }
    }
    let (v, v_se) = visibility_with_error(rep)?;
    out.push(
        "diffraction.visibility",
        v,
        Tolerance::AtMost { limit: 0.5 + 3.0 * v_se },
        Basis::Invariant,
    );
    let snr = snr_estimate(rep, rep.n_frames);
    out.report("diffraction.snr", snr.snr);
    out.report("diffraction.single_shot_snr", snr.single_shot);

    let peak = oracle.max().max(f64::MIN_POSITIVE);
    let fr = Profile::new(
        g.positions.clone(),
        g.positions.iter().map(|x| plan.fraunhofer.at(*x) * peak).collect(),
    );
    out.profiles.insert("G".into(), g);
    out.profiles.insert("oracle".into(), oracle);
    out.profiles.insert("fraunhofer".into(), fr);
    out.profiles.insert("std_error".into(), se);
    out.profiles.insert("mean_I2".into(), row(far, &rep.mean_i2, plan.row));
    if let Some(d) = &direct {
        let iy0 = if far.rank() == 2 { far.center(1) } else { 0 };
        out.profiles.insert("mean_I1".into(), row(far, d.mean, iy0));
    }
    if far.rank() == 2 {
        out.maps.insert("G".into(), map(far, &rep.g)?);
        out.maps.insert("oracle".into(), map(far, &plan.oracle)?);
        if let Some(d) = &direct {
            out.maps.insert("mean_I1".into(), map(far, d.mean)?);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- image

struct Image {
    /// Exact bucket G on the reference lattice.
    oracle: Vec<f64>,
    region: SiteBox,
}

fn plan_image(cfg: &ScenarioConfig, s: &Setup) -> Result<Image> {
    let (t2, r2) = powers(cfg);
    let o = predicted_ghost_image_bucket(&s.mask, &s.near, cfg.magnification)?;
    Ok(Image {
        oracle: scaled(&o.raw(), t2 * r2),
        region: SiteBox::full(&s.far),
    })
}

/// (plateau, dip, dip SE) of a double-slit image: slit centres against the needle.
fn needle_levels(cfg: &ScenarioConfig, g: &Profile, se: &Profile) -> Option<(f64, f64, f64)> {
    let ObjectSpec::DoubleSlit {
        aperture, needle, ..
    } = cfg.object
    else {
        return None;
    };
    let xs = cfg.magnification * (aperture + needle) / 4.0;
    let plateau = 0.5 * (g.at(-xs) + g.at(xs));
    Some((plateau, g.at(0.0), se.at(0.0)))
}

fn score_image(
    cfg: &ScenarioConfig,
    s: &Setup,
    plan: &Image,
    rep: &CorrelationReport,
    out: &mut ScenarioReport,
) -> Result<()> {
    let lat = &cfg.lattice;
    let h = cfg.section_half_height;
    let g = band(lat, &rep.g, h, false);
    let se = band(lat, &rep.std_error, h, true);
    let oracle = band(lat, &plan.oracle, h, false);
    let window = support(&oracle.values, 0.01);
    out.push(
        "image.nrmse",
        normalized_rms(&g.values, &oracle.values, window),
        Tolerance::AtMost { limit: 0.10 },
        Basis::Experiment,
    );
    let (v, v_se) = visibility_with_error(rep)?;
    out.push(
        "image.visibility",
        v,
        Tolerance::AtMost { limit: 0.5 + 3.0 * v_se },
        Basis::Invariant,
    );
    let width = smoothing_sites(0.5 * s.near_length, lat.pitch()[0]);
    let sg = smooth(&g, width);
    let sse = smooth(&se, width);
    if let Some((plateau, dip, dip_se)) = needle_levels(cfg, &sg, &sse) {
        out.push(
            "image.needle_dip",
            dip / plateau,
            Tolerance::AtMost { limit: 0.2 },
            Basis::Experiment,
        );
        out.report(
            "image.needle_contrast",
            ((plateau - dip - 2.0 * dip_se).max(0.0) / (plateau + dip)).clamp(0.0, 1.0),
        );
        if let ObjectSpec::DoubleSlit { aperture, needle, .. } = cfg.object {
            let m = cfg.magnification;
            let inside = m * (aperture + needle) / 4.0;
            let outside = (m * (aperture / 2.0 + 4.0 * s.near_length))
                .min(lat.coordinate(0, lat.dim(0) - 1));
            let measured = edge_width(&sg, plateau, inside, outside).map_or(f64::NAN, |w| w / m);
            out.push(
                "image.edge_width",
                measured,
                Tolerance::Relative {
                    target: s.near_length,
                    rel: 0.5,
                },
                Basis::Oracle,
            );
            let op = oracle.at(inside);
            if let Some(w) = edge_width(&oracle, op, inside, outside) {
                out.report("image.oracle_edge_width", w / m);
            }
        }
    }
    out.profiles.insert("image_G".into(), g);
    out.profiles.insert("image_oracle".into(), oracle);
    out.profiles.insert("image_std_error".into(), se);
    out.profiles
        .insert("image_mean_I2".into(), band(lat, &rep.mean_i2, h, false));
    if lat.rank() == 2 {
        out.maps.insert("image_G".into(), map(lat, &rep.g)?);
        out.maps.insert("image_oracle".into(), map(lat, &plan.oracle)?);
    }
    Ok(())
}

// ---------------------------------------------------------------- runs

fn ghost(cfg: &ScenarioConfig, diffraction: bool, image: bool) -> Result<ScenarioReport> {
    let d = diameter(cfg)?;
    let s = setup(cfg, &cfg.object, cfg.speckle, d)?;
    let mut refs = Vec::new();
    if diffraction {
        refs.push(ArmKind::DiffractionReference);
    }
    if image {
        refs.push(ArmKind::ImageReference {
            magnification: cfg.magnification,
        });
    }
    let bench = bench(cfg, &s, &refs)?;
    let dplan = diffraction.then(|| plan_diffraction(cfg, &s)).transpose()?;
    let iplan = image.then(|| plan_image(cfg, &s)).transpose()?;
    let scale = cfg.mean_intensity;
    let mut corr = Vec::new();
    if let Some(p) = &dplan {
        corr.push(CorrelationAccumulator::new(
            CorrelationMode::FixedPixel { site: p.site },
            s.far.clone(),
            s.far.clone(),
            scale,
        )?);
    }
    if let Some(p) = &iplan {
        corr.push(CorrelationAccumulator::new(
            CorrelationMode::Bucket { region: p.region },
            s.far.clone(),
            cfg.lattice.clone(),
            scale,
        )?);
    }
    // spatial average around the object-arm centre
    let spatial = if diffraction && cfg.spatial_average {
        let half = 0.25 * cfg.wavelength * cfg.focal / s.near_length;
        let region = SiteBox::centered(&s.far, half, 0.0);
        let p = dplan.as_ref().and_then(|p| p.period).unwrap_or(s.far_length * 8.0);
        let lag = ((3.0 * p / s.far.pitch()[0]).ceil() as usize).min(s.far.dim(0) / 2 - 1);
        corr.push(CorrelationAccumulator::new(
            CorrelationMode::Lagged {
                region,
                max_lag: [lag, 0],
            },
            s.far.clone(),
            s.far.clone(),
            scale,
        )?);
        Some((region, lag))
    } else {
        None
    };
    let init = || Tally {
        corr: corr.clone(),
        moments: if diffraction {
            vec![IntensityMoments::new(s.far.clone(), scale)]
        } else {
            Vec::new()
        },
        samples: Vec::new(),
    };
    let tally = run_frames(&cfg.execution, init, |t, seed| {
        let f = bench.frame(seed)?;
        let mut k = 0;
        if diffraction {
            t.corr[k].accumulate_values(&f.i1, &f.i2[0])?;
            t.moments[0].accumulate_values(&f.i1)?;
            k += 1;
        }
        if image {
            t.corr[k].accumulate_values(&f.i1, &f.i2[usize::from(diffraction)])?;
            k += 1;
        }
        if spatial.is_some() {
            t.corr[k].accumulate_values(&f.i1, &f.i2[0])?;
        }
        Ok(())
    })?;
    let mut out = ScenarioReport::new(cfg);
    out.report("near_coherence_length", s.near_length);
    out.report("far_coherence_length", s.far_length);
    out.report("diaphragm", d);
    let mut k = 0;
    if let Some(p) = &dplan {
        let rep = tally.corr[k].finalize()?;
        let (mean, se) = tally.moments[0].finalize()?;
        let direct = DirectIntensity {
            mean: &mean,
            se: &se,
        };
        score_diffraction(&s, p, &rep, Some(direct), &mut out)?;
        let exact = Profile::new(
            s.far.axis(0).positions,
            row(&s.far, &p.mean_i1, if s.far.rank() == 2 { s.far.center(1) } else { 0 }).values,
        );
        out.profiles.insert("mean_I1_exact".into(), exact);
        k += 1;
    }
    if let Some(p) = &iplan {
        let rep = tally.corr[k].finalize()?;
        score_image(cfg, &s, p, &rep, &mut out)?;
        k += 1;
    }
    if let Some((region, lag)) = spatial {
        let rep = tally.corr[k].finalize()?;
        let (t2, r2) = powers(cfg);
        let gf = Propagated::new(s.near.clone(), s.far.clone())?;
        let o = predicted_spatial_average(
            &s.mask,
            &gf,
            cfg.wavelength,
            cfg.focal,
            region,
            [lag, 0],
        )?;
        let oracle = scaled(&o.raw(), t2 * r2);
        let window = support(&oracle, 0.01);
        out.push(
            "spatial_average.nrmse",
            normalized_rms(&rep.g, &oracle, window),
            Tolerance::AtMost { limit: 0.07 },
            Basis::Oracle,
        );
        let pos = rep.lattice.axis(0).positions;
        out.profiles
            .insert("spatial_average_G".into(), Profile::new(pos.clone(), rep.g));
        out.profiles
            .insert("spatial_average_oracle".into(), Profile::new(pos, oracle));
    }
    Ok(out)
}

/// Fixed-pixel ghost diffraction against the exact prediction and the Fraunhofer pattern.
pub fn run_ghost_diffraction(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    ghost(cfg, true, false)
}

/// Bucket ghost image through the imaging reference.
pub fn run_ghost_image(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    ghost(cfg, false, true)
}

/// Ghost diffraction and ghost image from one frame set.
pub fn run_ghost_pair(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    ghost(cfg, true, true)
}

/// Fringe contrast in G, in ⟨I₁⟩ and needle contrast of the ghost image against
/// Δx_n / L_obj.
pub fn run_coherence_sweep(cfg: &ScenarioConfig, ratios: &[f64]) -> Result<ScenarioReport> {
    if ratios.len() < 3 {
        return Err(invalid("ratios", "the coherence sweep needs at least 3 ratios"));
    }
    let mut ratios = ratios.to_vec();
    ratios.sort_by(f64::total_cmp);
    let d = diameter(cfg)?;
    let length = object_length(&cfg.object.mask(&cfg.lattice)?);
    let mut out = ScenarioReport::new(cfg);
    out.report("object_length", length);
    let (mut ghost_c, mut direct_c) = (Vec::new(), Vec::new());
    for (i, ratio) in ratios.iter().enumerate() {
        let s = setup(
            cfg,
            &cfg.object,
            SpeckleSize::CoherenceLength(ratio * length),
            d,
        )?;
        let plan = plan_diffraction(cfg, &s)?;
        let iplan = plan_image(cfg, &s)?;
        let period = plan
            .period
            .ok_or_else(|| invalid("object", "the coherence sweep needs a fringe-forming object"))?;
        let bench = bench(
            cfg,
            &s,
            &[
                ArmKind::DiffractionReference,
                ArmKind::ImageReference {
                    magnification: cfg.magnification,
                },
            ],
        )?;
        let scale = cfg.mean_intensity;
        let corr = vec![
            CorrelationAccumulator::new(
                CorrelationMode::FixedPixel { site: plan.site },
                s.far.clone(),
                s.far.clone(),
                scale,
            )?,
            CorrelationAccumulator::new(
                CorrelationMode::Bucket { region: iplan.region },
                s.far.clone(),
                cfg.lattice.clone(),
                scale,
            )?,
        ];
        let moments = vec![IntensityMoments::new(s.far.clone(), scale)];
        let tally = run_frames(
            &cfg.execution,
            || Tally {
                corr: corr.clone(),
                moments: moments.clone(),
                samples: Vec::new(),
            },
            |t, seed| {
                let f = bench.frame(seed)?;
                t.corr[0].accumulate_values(&f.i1, &f.i2[0])?;
                t.corr[1].accumulate_values(&f.i1, &f.i2[1])?;
                t.moments[0].accumulate_values(&f.i1)
            },
        )?;
        let gd = tally.corr[0].finalize()?;
        let gi = tally.corr[1].finalize()?;
        let (mean, se) = tally.moments[0].finalize()?;
        let far = &s.far;
        let width = smoothing_sites(s.far_length, far.pitch()[0]);
        let iy0 = if far.rank() == 2 { far.center(1) } else { 0 };
        let cg = contrast(
            &row(far, &gd.g, plan.row),
            &row(far, &gd.std_error, plan.row),
            width,
            plan.x1.0,
            period,
        );
        let cd = contrast(&row(far, &mean, iy0), &row(far, &se, iy0), width, 0.0, period);
        let h = cfg.section_half_height;
        let iw = smoothing_sites(0.5 * s.near_length, cfg.lattice.pitch()[0]);
        let ig = smooth(&band(&cfg.lattice, &gi.g, h, false), iw);
        let ise = smooth(&band(&cfg.lattice, &gi.std_error, h, true), iw);
        let ci = needle_levels(cfg, &ig, &ise).map_or(f64::NAN, |(p, dip, dse)| {
            ((p - dip - 2.0 * dse).max(0.0) / (p + dip)).clamp(0.0, 1.0)
        });
        let key = format!("ratio_{ratio}");
        let zero = vec![0.0; far.dim(0)];
        let zp = Profile::new(far.axis(0).positions, zero);
        let exact_g = contrast(&row(far, &plan.oracle, plan.row), &zp, width, plan.x1.0, period);
        let exact_d = contrast(&row(far, &plan.mean_i1, iy0), &zp, width, 0.0, period);
        out.report(format!("{key}.ghost_contrast_exact"), exact_g);
        out.report(format!("{key}.direct_contrast_exact"), exact_d);
        out.report(format!("{key}.ghost_contrast"), cg);
        out.report(format!("{key}.direct_contrast"), cd);
        out.report(format!("{key}.image_contrast"), ci);
        out.report(format!("{key}.speckle_size"), s.near_length);
        if i == 0 || i == ratios.len() - 1 {
            out.profiles
                .insert(format!("{key}_G"), row(far, &gd.g, plan.row));
            out.profiles.insert(format!("{key}_mean_I1"), row(far, &mean, iy0));
        }
        ghost_c.push(cg);
        direct_c.push(cd);
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let rising: Vec<f64> = direct_c.iter().map(|v| -v).collect();
    out.push(
        "ghost_contrast_non_increasing",
        flag(non_increasing(&ghost_c)),
        Tolerance::AtLeast { limit: 1.0 },
        Basis::Experiment,
    );
    out.push(
        "direct_contrast_non_decreasing",
        flag(non_increasing(&rising)),
        Tolerance::AtLeast { limit: 1.0 },
        Basis::Experiment,
    );
    let last = ratios.len() - 1;
    out.push(
        "incoherent.ghost_contrast",
        ghost_c[0],
        Tolerance::AtLeast { limit: 0.5 },
        Basis::Experiment,
    );
    out.push(
        "incoherent.direct_contrast",
        direct_c[0],
        Tolerance::AtMost { limit: 0.05 },
        Basis::Experiment,
    );
    out.push(
        "coherent.ghost_contrast",
        ghost_c[last],
        Tolerance::AtMost { limit: 0.05 },
        Basis::Experiment,
    );
    out.push(
        "coherent.direct_contrast",
        direct_c[last],
        Tolerance::AtLeast { limit: 0.5 },
        Basis::Experiment,
    );
    Ok(out)
}

/// Ghost-image and ghost-diffraction visibility against the aperture width at fixed
/// speckle sizes; every size reuses the same frame seeds.
pub fn run_visibility_sweep(cfg: &ScenarioConfig, sizes: &[f64]) -> Result<ScenarioReport> {
    if sizes.len() < 4 {
        return Err(invalid("sizes", "the visibility sweep needs at least 4 sizes"));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_by(f64::total_cmp);
    let d = diameter(cfg)?;
    let std = envelope_std(cfg, cfg.speckle)?;
    let mut out = ScenarioReport::new(cfg);
    let (mut vi, mut vd, mut excess) = (Vec::new(), Vec::new(), f64::NEG_INFINITY);
    for size in &sizes {
        let object = cfg.object.resized(*size, cfg.schedule)?;
        let mut s = setup(cfg, &object, SpeckleSize::EnvelopeStd(std), d)?;
        if let SpeckleSize::CoherenceLength(t) = cfg.speckle {
            s.near_length = t;
        }
        let plan = plan_diffraction(cfg, &s)?;
        let iplan = plan_image(cfg, &s)?;
        let bench = bench(
            cfg,
            &s,
            &[
                ArmKind::DiffractionReference,
                ArmKind::ImageReference {
                    magnification: cfg.magnification,
                },
            ],
        )?;
        let scale = cfg.mean_intensity;
        let corr = vec![
            CorrelationAccumulator::new(
                CorrelationMode::FixedPixel { site: plan.site },
                s.far.clone(),
                s.far.clone(),
                scale,
            )?,
            CorrelationAccumulator::new(
                CorrelationMode::Bucket { region: iplan.region },
                s.far.clone(),
                cfg.lattice.clone(),
                scale,
            )?,
        ];
        let tally = run_frames(
            &cfg.execution,
            || Tally {
                corr: corr.clone(),
                ..Tally::default()
            },
            |t, seed| {
                let f = bench.frame(seed)?;
                t.corr[0].accumulate_values(&f.i1, &f.i2[0])?;
                t.corr[1].accumulate_values(&f.i1, &f.i2[1])
            },
        )?;
        let (v_d, se_d) = visibility_with_error(&tally.corr[0].finalize()?)?;
        let (v_i, se_i) = visibility_with_error(&tally.corr[1].finalize()?)?;
        let key = format!("size_{size}");
        out.report(format!("{key}.v_image"), v_i);
        out.report(format!("{key}.v_image_se"), se_i);
        out.report(format!("{key}.v_diffraction"), v_d);
        out.report(format!("{key}.v_diffraction_se"), se_d);
        let coh = if cfg.lattice.rank() == 2 {
            std::f64::consts::FRAC_PI_4 * s.near_length * s.near_length
        } else {
            s.near_length
        };
        let est = visibility_ratio_estimate(coh, s.mask.transmissive_measure())?;
        out.report(format!("{key}.coherence_to_object"), est.ratio);
        excess = excess.max(v_i - 0.5 - 3.0 * se_i).max(v_d - 0.5 - 3.0 * se_d);
        vi.push(v_i);
        vd.push(v_d);
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let neg: Vec<f64> = vd.iter().map(|v| -v).collect();
    out.push(
        "v_image_strictly_decreasing",
        flag(strictly_decreasing(&vi)),
        Tolerance::AtLeast { limit: 1.0 },
        Basis::Experiment,
    );
    out.push(
        "v_diffraction_strictly_increasing",
        flag(strictly_decreasing(&neg)),
        Tolerance::AtLeast { limit: 1.0 },
        Basis::Experiment,
    );
    let inv: Vec<f64> = sizes.iter().map(|s| 1.0 / s).collect();
    out.push(
        "v_image_rank_correlation",
        spearman(&vi, &inv),
        Tolerance::AtLeast { limit: 1.0 - 1e-12 },
        Basis::Experiment,
    );
    out.push(
        "visibility_excess",
        excess,
        Tolerance::AtMost { limit: 0.0 },
        Basis::Invariant,
    );
    out.profiles
        .insert("v_image".into(), Profile::new(sizes.clone(), vi));
    out.profiles
        .insert("v_diffraction".into(), Profile::new(sizes, vd));
    Ok(out)
}

/// Near- and far-field intensity autocorrelations, thermal statistics, the auto/cross
/// identity and the far-field scaling with the diaphragm.
pub fn run_characterization(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let d = diameter(cfg)?;
    let s = setup(cfg, &ObjectSpec::None, cfg.speckle, d)?;
    let lat = &cfg.lattice;
    let far = &s.far;
    let rank2 = lat.rank() == 2;
    let lag = |l: usize| if rank2 { [l, l] } else { [l, 0] };
    let near_lag = lag_window(lat, s.near_length, lat.pitch()[0])?;
    let near_region = SiteBox::centered(lat, d / 4.0, d / 4.0);
    let binning = cfg.pixel_binning;
    let far_det = IntensityGrid::new(far.clone(), vec![0.0; far.len()])?
        .binned(binning)?
        .lattice()
        .clone();
    let far_lag = lag_window(&far_det, s.far_length, far_det.pitch()[0])?;
    let far_half = 0.25 * cfg.wavelength * cfg.focal / s.near_length;
    let far_region = SiteBox::centered(&far_det, far_half, far_half);
    let (t2, r2) = powers(cfg);
    let i0 = cfg.mean_intensity;
    let near_mode = CorrelationMode::Lagged {
        region: near_region,
        max_lag: lag(near_lag),
    };
    let corr = vec![
        CorrelationAccumulator::new(near_mode.clone(), lat.clone(), lat.clone(), i0 * t2)?,
        CorrelationAccumulator::new(near_mode, lat.clone(), lat.clone(), i0 * t2.max(r2))?,
        CorrelationAccumulator::new(
            CorrelationMode::Lagged {
                region: far_region,
                max_lag: lag(far_lag),
            },
            far_det.clone(),
            far_det.clone(),
            i0 * r2,
        )?,
    ];
    let bench = bench(cfg, &s, &[ArmKind::DiffractionReference])?;
    let center = lat.center_index();
    let tally = run_frames(
        &cfg.execution,
        || Tally {
            corr: corr.clone(),
            ..Tally::default()
        },
        |t, seed| {
            let a = s.source.draw_illuminated(seed);
            let (b1, b2) = crate::source::beam_split(&a, &cfg.splitter);
            let i1: Vec<f64> = b1.values().iter().map(|z| z.norm_sqr()).collect();
            let i2: Vec<f64> = b2.values().iter().map(|z| z.norm_sqr()).collect();
            t.corr[0].accumulate_values(&i1, &i1)?;
            t.corr[1].accumulate_values(&i1, &i2)?;
            let f2 = bench.references[0].propagate(&b2)?;
            let det = binned(far, f2.values().iter().map(|z| z.norm_sqr()).collect(), binning)?;
            t.corr[2].accumulate_values(&det, &det)?;
            t.samples.push(i1[center]);
            Ok(())
        },
    )?;
    let mut out = ScenarioReport::new(cfg);
    out.report("diaphragm", d);
    let auto = tally.corr[0].finalize()?;
    let cross = tally.corr[1].finalize()?;
    let far_rep = tally.corr[2].finalize()?;

    let max_rel = auto
        .g2
        .iter()
        .zip(&cross.g2)
        .map(|(a, b)| {
            let den = a.abs().max(b.abs());
            if den > 0.0 {
                (a - b).abs() / den
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    out.push(
        "auto_cross_max_rel_diff",
        max_rel,
        Tolerance::AtMost { limit: 1e-12 },
        Basis::Invariant,
    );

    for (name, rep, target) in [
        ("near", &auto, s.near_length),
        ("far", &far_rep, s.far_length),
    ] {
        let profile = radial_autocorrelation(rep)?;
        let c = rep.lattice.center_index();
        let peak = rep.g2[c];
        let peak_se = rep.std_error[c] / rep.background[c];
        out.push(
            format!("{name}.g2_peak"),
            peak,
            Tolerance::AtMost { limit: 2.0 + 3.0 * peak_se },
            Basis::Invariant,
        );
        match fit_gaussian_peak(&profile) {
            Ok(fit) => {
                out.push(
                    format!("{name}.baseline"),
                    fit.baseline,
                    Tolerance::Absolute { target: 1.0, abs: 0.01 },
                    Basis::Invariant,
                );
                out.push(
                    format!("{name}.coherence_length"),
                    fit.coherence_length,
                    Tolerance::Relative { target, rel: 0.1 },
                    Basis::Oracle,
                );
                out.report(format!("{name}.degeneracy"), fit.degeneracy);
            }
            Err(Error::NoPeak) => out.push(
                format!("{name}.coherence_length"),
                f64::NAN,
                Tolerance::Relative { target, rel: 0.1 },
                Basis::Oracle,
            ),
            Err(e) => return Err(e),
        }
        out.profiles.insert(format!("{name}_g2"), profile);
    }

    // thermal single-site statistics: exponential with the exact mean
    let mean = t2 * mean_intensity(&s.near)[center];
    let ks = ks_exponential(&tally.samples, mean);
    out.push(
        "ks_statistic",
        ks,
        Tolerance::AtMost {
            limit: ks_critical_1pct(tally.samples.len()),
        },
        Basis::Invariant,
    );

    let fp = far_pitch(cfg);
    let extent = (0..lat.rank()).map(|a| lat.extent(a)).fold(f64::INFINITY, f64::min);
    for dd in &cfg.diameters {
        if *dd > extent {
            continue;
        }
        let target = vcz_coherence_length(cfg.wavelength, cfg.focal, *dd)?;
        let lags = lag_window(lat, target, fp)?;
        let fit = far_field_fit(lat, cfg.wavelength, cfg.focal, *dd, cfg.object_envelope_std, lags)?;
        let key = format!("vcz.D_{}mm", dd * 1e3);
        out.push(
            format!("{key}.coherence_length"),
            fit.coherence_length,
            Tolerance::Relative { target, rel: 0.1 },
            Basis::Experiment,
        );
        out.report(format!("{key}.ratio"), fit.coherence_length / target);
    }
    Ok(out)
}

/// Noise of the fixed-pixel G against the single-shot formula over independent
/// batches of N and 4N frames.
pub fn run_snr_study(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    const BATCHES: u64 = 20;
    let n = (cfg.execution.frames / BATCHES).max(2);
    let d = diameter(cfg)?;
    let s = setup(cfg, &cfg.object, cfg.speckle, d)?;
    let plan = plan_diffraction(cfg, &s)?;
    let bench = bench(cfg, &s, &[ArmKind::DiffractionReference])?;
    let acc = CorrelationAccumulator::new(
        CorrelationMode::FixedPixel { site: plan.site },
        s.far.clone(),
        s.far.clone(),
        cfg.mean_intensity,
    )?;
    let batch = |exec: Execution| -> Result<Vec<f64>> {
        let t = run_frames(
            &exec,
            || Tally {
                corr: vec![acc.clone()],
                ..Tally::default()
            },
            |t, seed| {
                let f = bench.frame(seed)?;
                t.corr[0].accumulate_values(&f.i1, &f.i2[0])
            },
        )?;
        Ok(t.corr[0].finalize()?.mean_i1i2)
    };
    let m1 = plan.mean_i1[plan.site];
    let gmax = plan.oracle.iter().copied().fold(0.0, f64::max);
    let sites: Vec<usize> = (0..plan.oracle.len())
        .filter(|&k| plan.oracle[k] >= 0.5 * gmax)
        .collect();
    let exact_m12: Vec<f64> = sites
        .iter()
        .map(|&k| m1 * plan.mean_i2[k] + plan.oracle[k])
        .collect();
    // per-batch G with the exact means subtracted; std over batches per site
    let spread = |frames: u64, base: u64| -> Result<Vec<f64>> {
        let start = Execution {
            first_frame: cfg.execution.first_frame + base,
            ..cfg.execution
        };
        let mut rows = Vec::new();
        for b in 0..BATCHES {
            let m12 = batch(start.batch(b, frames))?;
            rows.push(
                sites
                    .iter()
                    .map(|&k| m12[k] - m1 * plan.mean_i2[k])
                    .collect::<Vec<f64>>(),
            );
        }
        let nb = BATCHES as f64;
        Ok((0..sites.len())
            .map(|j| {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / nb;
                let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (nb - 1.0);
                var.sqrt()
            })
            .collect())
    };
    let std_n = spread(n, 0)?;
    let std_4n = spread(4 * n, BATCHES * n)?;
    let single: Vec<f64> = sites
        .iter()
        .zip(&exact_m12)
        .map(|(&k, m12)| {
            (3.0 * m12 * m12 + 8.0 * plan.oracle[k] * m1 * plan.mean_i2[k]).sqrt()
        })
        .collect();
    let pooled = |std: &[f64], frames: u64, dg: &dyn Fn(usize) -> f64| {
        let r2: f64 = std
            .iter()
            .enumerate()
            .map(|(j, s)| (s / (dg(j) / (frames as f64).sqrt())).powi(2))
            .sum();
        (r2 / std.len() as f64).sqrt()
    };
    let full = |j: usize| single[j];
    let simple = |j: usize| 3f64.sqrt() * exact_m12[j];
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let mut out = ScenarioReport::new(cfg);
    out.report("batch_frames", n as f64);
    out.report("sites", sites.len() as f64);
    out.push(
        "noise_ratio_n",
        pooled(&std_n, n, &full),
        Tolerance::Relative { target: 1.0, rel: 0.25 },
        Basis::Oracle,
    );
    out.push(
        "noise_ratio_4n",
        pooled(&std_4n, 4 * n, &full),
        Tolerance::Relative { target: 1.0, rel: 0.25 },
        Basis::Oracle,
    );
    out.report("noise_ratio_sqrt3_n", pooled(&std_n, n, &simple));
    out.report("noise_ratio_sqrt3_4n", pooled(&std_4n, 4 * n, &simple));
    out.push(
        "snr_gain",
        rms(&std_n) / rms(&std_4n),
        Tolerance::Relative { target: 2.0, rel: 0.25 },
        Basis::Invariant,
    );
    let k = argmax(&plan.oracle);
    let j = sites.iter().position(|&s| s == k).unwrap_or(0);
    out.report("single_shot_snr", plan.oracle[k] / single[j]);
    Ok(out)
}
