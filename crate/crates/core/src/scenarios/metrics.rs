//! Profile measurements shared by the scenarios.

use crate::error::{Error, Result};
use crate::grid::Profile;

/// Centred moving average over `width` sites (odd), shrinking at the ends.
pub fn boxcar(values: &[f64], width: usize) -> Vec<f64> {
    let h = width / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Boxcar width in sites for a physical length.
pub fn smoothing_sites(length: f64, pitch: f64) -> usize {
    let k = (length / pitch).round().max(1.0) as usize;
    k | 1
}

/// Smallest index range holding every value ≥ `fraction` of the maximum.
pub fn support(values: &[f64], fraction: f64) -> std::ops::Range<usize> {
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let thr = fraction * peak;
    let lo = values.iter().position(|v| *v >= thr).unwrap_or(0);
    let hi = values.iter().rposition(|v| *v >= thr).map_or(0, |k| k + 1);
    lo..hi
}

/// RMS of (estimate − oracle) over `range`, relative to the oracle peak there.
pub fn normalized_rms(estimate: &[f64], oracle: &[f64], range: std::ops::Range<usize>) -> f64 {
    let peak = oracle[range.clone()].iter().copied().fold(0.0, f64::max);
    let n = range.len() as f64;
    let ss: f64 = range.map(|k| (estimate[k] - oracle[k]).powi(2)).sum();
    (ss / n).sqrt() / peak
}

/// Distance between the first local minima on either side of the central maximum.
pub fn central_minima_spacing(profile: &Profile) -> Result<f64> {
    let v = &profile.values;
    let c = crate::correlator::argmax(v);
    let right = (c + 1..v.len().saturating_sub(1)).find(|&k| v[k] <= v[k - 1] && v[k] < v[k + 1]);
    let left = (1..c).rev().find(|&k| v[k] <= v[k + 1] && v[k] < v[k - 1]);
    match (left, right) {
        (Some(l), Some(r)) => Ok(refine_min(profile, r) - refine_min(profile, l)),
        _ => Err(Error::NoPeak),
    }
}

/// Parabolic refinement of a sampled minimum.
fn refine_min(p: &Profile, k: usize) -> f64 {
    let v = &p.values;
    if k == 0 || k + 1 >= v.len() {
        return p.positions[k];
    }
    let den = v[k - 1] - 2.0 * v[k] + v[k + 1];
    let off = if den > 0.0 {
        (0.5 * (v[k - 1] - v[k + 1]) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let step = p.positions[k + 1] - p.positions[k];
    p.positions[k] + off * step
}

fn argmin_in(p: &Profile, lo: f64, hi: f64) -> Option<usize> {
    (0..p.len())
        .filter(|&k| p.positions[k] >= lo && p.positions[k] <= hi)
        .min_by(|&a, &b| p.values[a].total_cmp(&p.values[b]))
}

/// Fringe period from the two minima nearest `center`, searched within
/// [0.25, 0.75] of the expected period on each side.
pub fn fringe_period(smoothed: &Profile, center: f64, expected: f64) -> Result<f64> {
    let l = argmin_in(smoothed, center - 0.75 * expected, center - 0.25 * expected);
    let r = argmin_in(smoothed, center + 0.25 * expected, center + 0.75 * expected);
    match (l, r) {
        (Some(l), Some(r)) => Ok(refine_min(smoothed, r) - refine_min(smoothed, l)),
        _ => Err(Error::NoPeak),
    }
}

/// Fringe period from the dilation that best maps `template` (period `period`,
/// centred on `center`) onto `profile` over |x − center| ≤ 1.5·period.
///
/// For each scale s the offset and gain are solved by linear least squares; s is
/// found by golden-section search on [0.8, 1.25]. Returns s·period.
pub fn fringe_period_fit(profile: &Profile, template: &Profile, center: f64, period: f64) -> Result<f64> {
    let idx: Vec<usize> = (0..profile.len())
        .filter(|&k| (profile.positions[k] - center).abs() <= 1.5 * period)
        .collect();
    if idx.len() < 5 {
        return Err(Error::ProfileTooShort(idx.len()));
    }
    let residual = |s: f64| {
        let t: Vec<f64> = idx
            .iter()
            .map(|&k| template.at(center + (profile.positions[k] - center) / s))
            .collect();
        let y: Vec<f64> = idx.iter().map(|&k| profile.values[k]).collect();
        let n = t.len() as f64;
        let (mt, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
        let sty: f64 = t.iter().zip(&y).map(|(a, b)| (a - mt) * (b - my)).sum();
        let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        if stt > 0.0 {
            syy - sty * sty / stt
        } else {
            syy
        }
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.8, 1.25);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (residual(c), residual(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = residual(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = residual(d);
        }
    }
    Ok(0.5 * (a + b) * period)
}

/// Fringe contrast of a smoothed profile with standard errors `se` (smoothed alike).
///
/// Samples the centre, the two expected minima at ±P/2 and the side maxima at ±P.
/// Each contrast is (max − min − SE)/(max + min), floored at 0; the result is the
/// smaller of the centre and side contrasts, so a lone peak without side fringes
/// scores 0.
pub fn fringe_contrast(smoothed: &Profile, se: &Profile, center: f64, period: f64) -> f64 {
    let pair = |p: &Profile, d: f64| 0.5 * (p.at(center - d) + p.at(center + d));
    let a0 = smoothed.at(center);
    let m = pair(smoothed, 0.5 * period);
    let s = pair(smoothed, period);
    let se_a = se.at(center);
    let se_m = pair(se, 0.5 * period) / 2f64.sqrt();
    let se_s = pair(se, period) / 2f64.sqrt();
    let c = |hi: f64, se_hi: f64| {
        let den = hi + m;
        if den <= 0.0 {
            return 0.0;
        }
        let diff = hi - m - (se_hi * se_hi + se_m * se_m).sqrt();
        (diff.max(0.0) / den).clamp(0.0, 1.0)
    };
    c(a0, se_a).min(c(s, se_s))
}

/// Outer 10–90 % edge width of a plateau profile.
///
/// `plateau` is the reference level; the edge is the last crossing of 90 % and the
/// first following crossing of 10 % walking outward from `inside` toward `outside`.
pub fn edge_width(p: &Profile, plateau: f64, inside: f64, outside: f64) -> Option<f64> {
    let dir = (outside - inside).signum();
    let mut idx: Vec<usize> = (0..p.len())
        .filter(|&k| {
            let x = p.positions[k];
            (x - inside) * dir >= 0.0 && (outside - x) * dir >= 0.0
        })
        .collect();
    if dir < 0.0 {
        idx.reverse();
    }
    let cross = |level: f64, from: usize| -> Option<f64> {
        for w in idx[from..].windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ya, yb) = (p.values[a], p.values[b]);
            if ya >= level && yb < level {
                let t = (ya - level) / (ya - yb);
                return Some(p.positions[a] + t * (p.positions[b] - p.positions[a]));
            }
        }
        None
    };
    let hi_level = 0.9 * plateau;
    // last crossing of 90 % before the profile falls under 10 %
    let x10 = cross(0.1 * plateau, 0)?;
    let before: Vec<usize> = idx
        .iter()
        .copied()
        .take_while(|&k| (x10 - p.positions[k]) * dir > 0.0)
        .collect();
    let mut x90 = None;
    for w in before.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ya, yb) = (p.values[a], p.values[b]);
        if ya >= hi_level && yb < hi_level {
            let t = (ya - hi_level) / (ya - yb);
            x90 = Some(p.positions[a] + t * (p.positions[b] - p.positions[a]));
        }
    }
    Some((x10 - x90?).abs())
}

/// Kolmogorov-Smirnov statistic of sorted samples against exp(−I/mean)/mean.
pub fn ks_exponential(sorted: &[f64], mean: f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x / mean).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1 % critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn fringes(contrast: f64, period: f64) -> Profile {
        let x: Vec<f64> = (-400..=400).map(|k| k as f64 * 1e-6).collect();
        let y = x
            .iter()
            .map(|v| 1.0 + contrast * (2.0 * PI * v / period).cos())
            .collect();
        Profile::new(x, y)
    }

    #[test]
    fn contrast_of_cosine_fringes() {
        let p = fringes(0.6, 100e-6);
        let se = Profile::new(p.positions.clone(), vec![0.0; p.len()]);
        assert!((fringe_contrast(&p, &se, 0.0, 100e-6) - 0.6).abs() < 1e-9);
        let noisy = Profile::new(p.positions.clone(), vec![0.05; p.len()]);
        let c = fringe_contrast(&p, &noisy, 0.0, 100e-6);
        let centre = (1.2 - (0.05f64.powi(2) * 1.5).sqrt()) / 2.0;
        assert!((c - centre).abs() < 1e-9, "{c}");
        let flat = fringes(0.0, 100e-6);
        assert_eq!(fringe_contrast(&flat, &noisy, 0.0, 100e-6), 0.0);
    }

    #[test]
    fn lone_peak_has_no_contrast() {
        let x: Vec<f64> = (-400..=400).map(|k| k as f64 * 1e-6).collect();
        let y = x.iter().map(|v| (-v * v / (2.0 * 10e-6f64.powi(2))).exp()).collect();
        let p = Profile::new(x.clone(), y);
        let se = Profile::new(x, vec![1e-4; 801]);
        assert_eq!(fringe_contrast(&p, &se, 0.0, 100e-6), 0.0);
    }

    #[test]
    fn period_from_minima() {
        let p = fringes(0.8, 97e-6);
        let t = fringe_period(&p, 0.0, 100e-6).unwrap();
        assert!((t - 97e-6).abs() < 0.1e-6);
        let peaked = Profile::new(
            p.positions.clone(),
            p.positions
                .iter()
                .zip(&p.values)
                .map(|(x, v)| v * (-x * x / (2.0 * 400e-6f64.powi(2))).exp())
                .collect(),
        );
        assert!((central_minima_spacing(&peaked).unwrap() - 97e-6).abs() < 0.5e-6);
    }

    #[test]
    fn period_from_dilation_fit() {
        let template = fringes(1.0, 100e-6);
        let p = fringes(0.5, 104e-6);
        let shifted = Profile::new(p.positions.clone(), p.values.iter().map(|v| 3.0 * v + 0.2).collect());
        let t = fringe_period_fit(&shifted, &template, 0.0, 100e-6).unwrap();
        assert!((t - 104e-6).abs() < 0.01e-6, "{t}");
    }

    #[test]
    fn erf_edge_width() {
        // 10-90 % width of an erf edge is 2.563 σ
        let sigma = 10e-6;
        let x: Vec<f64> = (0..600).map(|k| k as f64 * 1e-6).collect();
        let y = x
            .iter()
            .map(|v| {
                let s = (v - 300e-6) / sigma;
                0.5 * erfc(s / 2f64.sqrt())
            })
            .collect();
        let p = Profile::new(x, y);
        let w = edge_width(&p, 1.0, 100e-6, 599e-6).unwrap();
        assert!((w / sigma - 2.563).abs() < 0.01, "{}", w / sigma);
    }

    fn erfc(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26
        let t = 1.0 / (1.0 + 0.3275911 * x.abs());
        let y = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        let e = y * (-x * x).exp();
        if x >= 0.0 {
            e
        } else {
            2.0 - e
        }
    }

    #[test]
    fn ks_detects_wrong_mean() {
        let n = 4000;
        let s: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        assert!(ks_exponential(&s, 1.0) < ks_critical_1pct(n));
        assert!(ks_exponential(&s, 1.3) > ks_critical_1pct(n));
    }

    #[test]
    fn rank_correlation() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
        assert!(non_increasing(&[3.0, 3.0, 1.0]));
    }

    #[test]
    fn support_and_rms() {
        let v = [0.0, 0.2, 1.0, 0.5, 0.0];
        assert_eq!(support(&v, 0.1), 1..4);
        let e = [0.0, 0.2, 1.1, 0.5, 0.0];
        let r = normalized_rms(&e, &v, 1..4);
        assert!((r - (0.01f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn boxcar_preserves_constants(c in -5.0f64..5.0, n in 1usize..50, w in 0usize..9) {
            let out = boxcar(&vec![c; n], 2 * w + 1);
            prop_assert!(out.iter().all(|v| (v - c).abs() < 1e-12));
        }
    }
}
