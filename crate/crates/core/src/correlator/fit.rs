use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Profile;

/// Gaussian fit baseline + A·exp(−Δ²/2σ²) of a correlation peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeakFit {
    pub sigma: f64,
    pub baseline: f64,
    /// baseline + A.
    pub peak_height: f64,
    /// 2σ.
    pub coherence_length: f64,
    /// baseline / A.
    pub degeneracy: f64,
}

/// Fits a peak centred at separation 0.
///
/// The baseline is the mean of the outer quarter of the points; a line through
/// log(g − baseline) against Δ² over the upper half of the peak seeds a damped
/// Gauss-Newton least-squares refinement of all three parameters on the full profile.
pub fn fit_gaussian_peak(profile: &Profile) -> Result<PeakFit> {
    let n = profile.len();
    if n < 5 {
        return Err(Error::ProfileTooShort(n));
    }
    let x = &profile.positions;
    let y = &profile.values;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NoPeak);
    }
    let outer = &y[(3 * n) / 4..];
    let b0 = outer.iter().sum::<f64>() / outer.len() as f64;
    let sd = (outer.iter().map(|v| (v - b0).powi(2)).sum::<f64>() / outer.len() as f64).sqrt();
    let a0 = y[0] - b0;
    if !(a0 > 4.0 * sd && a0 > 1e-12 * b0.abs().max(1e-300)) {
        return Err(Error::NoPeak);
    }

    // linearized seed
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (xi, yi) in x.iter().zip(y) {
        let v = yi - b0;
        if v < 0.5 * a0 {
            break;
        }
        pts.push((xi * xi, v.ln()));
    }
    if pts.len() < 2 {
        pts = x
            .iter()
            .zip(y)
            .take(3)
            .filter(|(_, yi)| **yi - b0 > 0.0)
            .map(|(xi, yi)| (xi * xi, (yi - b0).ln()))
            .collect();
    }
    if pts.len() < 2 {
        return Err(Error::NoPeak);
    }
    let slope = line_slope(&pts);
    if slope.is_nan() || slope >= 0.0 {
        return Err(Error::NoPeak);
    }
    let sigma0 = (-0.5 / slope).sqrt();

    let (b, a, sigma) = refine(x, y, [b0, a0, sigma0]);
    if !(sigma > 0.0 && a > 0.0 && b > 0.0 && sigma.is_finite()) {
        return Err(Error::NoPeak);
    }
    Ok(PeakFit {
        sigma,
        baseline: b,
        peak_height: b + a,
        coherence_length: 2.0 * sigma,
        degeneracy: b / a,
    })
}

fn line_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn residual(x: &[f64], y: &[f64], p: [f64; 3]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(xi, yi)| {
            let m = p[0] + p[1] * (-xi * xi / (2.0 * p[2] * p[2])).exp();
            (yi - m).powi(2)
        })
        .sum()
}

/// Levenberg-Marquardt on (baseline, A, σ).
fn refine(x: &[f64], y: &[f64], mut p: [f64; 3]) -> (f64, f64, f64) {
    let mut lambda = 1e-3;
    let mut r0 = residual(x, y, p);
    for _ in 0..200 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (xi, yi) in x.iter().zip(y) {
            let e = (-xi * xi / (2.0 * p[2] * p[2])).exp();
            let j = [1.0, e, p[1] * e * xi * xi / p[2].powi(3)];
            let r = yi - (p[0] + p[1] * e);
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for c in 0..3 {
                    jtj[a][c] += j[a] * j[c];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(d) = solve3(m, jtr) else { break };
            let q = [p[0] + d[0], p[1] + d[1], (p[2] + d[2]).abs()];
            let r1 = residual(x, y, q);
            if r1 <= r0 {
                let rel = (r0 - r1) / r0.max(1e-300);
                p = q;
                r0 = r1;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p[0], p[1], p[2])
}

fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..3 {
                m[r][c] -= f * m[col][c];
            }
            v[r] -= f * v[col];
        }
    }
    let mut out = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| m[r][c] * out[c]).sum();
        out[r] = (v[r] - s) / m[r][r];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synth(b: f64, a: f64, sigma: f64, pitch: f64, n: usize) -> Profile {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * pitch).collect();
        let y = x
            .iter()
            .map(|v| b + a * (-v * v / (2.0 * sigma * sigma)).exp())
            .collect();
        Profile::new(x, y)
    }

    #[test]
    fn degeneracy_and_length() {
        let f = fit_gaussian_peak(&synth(1.0, 0.588, 18e-6, 2e-6, 60)).unwrap();
        assert!((f.degeneracy - 1.0 / 0.588).abs() < 1e-6);
        assert!((f.coherence_length - 36e-6).abs() < 1e-12);
        assert!((f.peak_height - 1.588).abs() < 1e-9);
    }

    #[test]
    fn flat_profile_has_no_peak() {
        let p = Profile::new((0..20).map(|i| i as f64).collect(), vec![1.0; 20]);
        assert_eq!(fit_gaussian_peak(&p), Err(Error::NoPeak));
        let p = Profile::new(vec![0.0, 1.0], vec![2.0, 1.0]);
        assert_eq!(fit_gaussian_peak(&p), Err(Error::ProfileTooShort(2)));
    }

    #[test]
    fn narrow_peak_uses_first_points() {
        let f = fit_gaussian_peak(&synth(1.0, 1.0, 0.7, 1.0, 12)).unwrap();
        assert!((f.sigma - 0.7).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn recovers_noiseless_parameters(
            b in 0.2f64..5.0, a in 0.05f64..3.0, sigma in 1.5f64..20.0
        ) {
            let n = (8.0 * sigma) as usize + 10;
            let f = fit_gaussian_peak(&synth(b, a, sigma, 1.0, n)).unwrap();
            prop_assert!((f.sigma / sigma - 1.0).abs() < 1e-3);
            prop_assert!((f.baseline / b - 1.0).abs() < 1e-3);
            prop_assert!(((f.peak_height - f.baseline) / a - 1.0).abs() < 1e-3);
        }
    }
}
