use serde::Serialize;

use super::exact::ExactSums;
use crate::error::{invalid, Error, Result};
use crate::grid::{IntensityGrid, Lattice};

/// Half-open box of sites [lo, hi) on a lattice (y bounds are [0, 1) on a line).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SiteBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl SiteBox {
    pub fn full(lattice: &Lattice) -> Self {
        Self {
            lo: [0, 0],
            hi: [lattice.dim(0), lattice.dim(1)],
        }
    }

    /// Sites with |x| ≤ half_x (and |y| ≤ half_y in 2D), clipped to the lattice.
    pub fn centered(lattice: &Lattice, half_x: f64, half_y: f64) -> Self {
        let mut lo = [0, 0];
        let mut hi = [lattice.dim(0), lattice.dim(1)];
        for (a, half) in [half_x, half_y].into_iter().enumerate().take(lattice.rank()) {
            let c = lattice.center(a) as i64;
            let k = (half / lattice.pitch()[a] + 1e-9).floor() as i64;
            lo[a] = (c - k).max(0) as usize;
            hi[a] = ((c + k + 1) as usize).min(lattice.dim(a));
        }
        Self { lo, hi }
    }

    pub fn count(&self) -> usize {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        ix >= self.lo[0] && ix < self.hi[0] && iy >= self.lo[1] && iy < self.hi[1]
    }

    fn validate(&self, lattice: &Lattice) -> Result<()> {
        if self.lo[0] < self.hi[0]
            && self.lo[1] < self.hi[1]
            && self.hi[0] <= lattice.dim(0)
            && self.hi[1] <= lattice.dim(1)
        {
            Ok(())
        } else {
            Err(invalid("region", format!("{self:?} is empty or off the lattice")))
        }
    }
}

/// How the object-arm intensity enters the correlation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CorrelationMode {
    /// I₁ read at one detector site (ghost diffraction).
    FixedPixel { site: usize },
    /// I₁ summed over a region (bucket detector, ghost imaging).
    Bucket { region: SiteBox },
    /// Σ_x I₁(x)·I₂(x + Δ) over x in `region`, for lags −L ≤ Δ < L per axis.
    /// With I₁ and I₂ from the same beam this is the intensity autocorrelation.
    Lagged { region: SiteBox, max_lag: [usize; 2] },
}

#[derive(Clone, Debug, PartialEq)]
enum Sums {
    Pointwise {
        x: ExactSums,
        xx: ExactSums,
        y: ExactSums,
        yy: ExactSums,
        xy: ExactSums,
        xxy: ExactSums,
        xyy: ExactSums,
        xxyy: ExactSums,
    },
    Lagged {
        m1: ExactSums,
        m2: ExactSums,
        c: ExactSums,
        cc: ExactSums,
    },
}

/// Mergeable running sums for one correlation mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationAccumulator {
    mode: CorrelationMode,
    lattice1: Lattice,
    lattice2: Lattice,
    n_frames: u64,
    sums: Sums,
    /// Lag lattice (Lagged mode) or the I₂ lattice.
    domain: Lattice,
}

impl CorrelationAccumulator {
    /// `scale` is the typical single-site intensity; it fixes the exact-sum grids.
    pub fn new(mode: CorrelationMode, lattice1: Lattice, lattice2: Lattice, scale: f64) -> Result<Self> {
        crate::error::require_positive("scale", scale)?;
        let n2 = lattice2.len();
        let (sums, domain) = match &mode {
            CorrelationMode::FixedPixel { site } => {
                if *site >= lattice1.len() {
                    return Err(invalid("x1", "fixed pixel lies off the object-arm lattice"));
                }
                (pointwise(n2, scale, scale), lattice2.clone())
            }
            CorrelationMode::Bucket { region } => {
                region.validate(&lattice1)?;
                let sx = scale * region.count() as f64;
                (pointwise(n2, sx, scale), lattice2.clone())
            }
            CorrelationMode::Lagged { region, max_lag } => {
                lattice1.check_matches(&lattice2, "lagged correlation needs one lattice")?;
                region.validate(&lattice1)?;
                let mut shape = vec![2 * max_lag[0]];
                let mut pitch = vec![lattice2.pitch()[0]];
                if lattice2.rank() == 2 {
                    shape.push(2 * max_lag[1]);
                    pitch.push(lattice2.pitch()[1]);
                } else if max_lag[1] != 0 {
                    return Err(invalid("max_lag", "a line has no y lags"));
                }
                if max_lag[0] == 0 || (lattice2.rank() == 2 && max_lag[1] == 0) {
                    return Err(invalid("max_lag", "must be >= 1 on every axis"));
                }
                let domain = Lattice::new(&shape, &pitch)?;
                let pairs = region.count() as f64;
                let cmag = scale * scale * pairs;
                let sums = Sums::Lagged {
                    m1: ExactSums::new(lattice1.len(), scale),
                    m2: ExactSums::new(n2, scale),
                    c: ExactSums::new(domain.len(), cmag),
                    cc: ExactSums::new(domain.len(), cmag * cmag),
                };
                (sums, domain)
            }
        };
        Ok(Self {
            mode,
            lattice1,
            lattice2,
            n_frames: 0,
            sums,
            domain,
        })
    }

    pub fn mode(&self) -> &CorrelationMode {
        &self.mode
    }

    pub fn n_frames(&self) -> u64 {
        self.n_frames
    }

    pub fn lattice2(&self) -> &Lattice {
        &self.lattice2
    }

    /// Adds one frame.
    pub fn accumulate(&mut self, i1: &IntensityGrid, i2: &IntensityGrid) -> Result<()> {
        self.lattice1.check_matches(i1.lattice(), "object-arm intensity")?;
        self.lattice2.check_matches(i2.lattice(), "reference-arm intensity")?;
        self.accumulate_values(i1.values(), i2.values())
    }

    pub(crate) fn accumulate_values(&mut self, i1: &[f64], i2: &[f64]) -> Result<()> {
        let x = match &self.mode {
            CorrelationMode::FixedPixel { site } => Some(i1[*site]),
            CorrelationMode::Bucket { region } => {
                let nx = self.lattice1.dim(0);
                let mut x = 0.0;
                for iy in region.lo[1]..region.hi[1] {
                    x += i1[iy * nx + region.lo[0]..iy * nx + region.hi[0]]
                        .iter()
                        .sum::<f64>();
                }
                Some(x)
            }
            CorrelationMode::Lagged { .. } => None,
        };
        match x {
            Some(x) => self.add_pointwise(x, i2)?,
            None => self.add_lagged(i1, i2)?,
        }
        self.n_frames += 1;
        Ok(())
    }

    fn add_lagged(&mut self, i1: &[f64], i2: &[f64]) -> Result<()> {
        let (CorrelationMode::Lagged { region, max_lag }, Sums::Lagged { m1, m2, c, cc }) =
            (&self.mode, &mut self.sums)
        else {
            unreachable!("sums layout follows the mode")
        };
        for (k, v) in i1.iter().enumerate() {
            m1.add(k, *v)?;
        }
        for (k, v) in i2.iter().enumerate() {
            m2.add(k, *v)?;
        }
        let lags = lag_products(&self.lattice1, region, *max_lag, &self.domain, i1, i2);
        for (k, v) in lags.into_iter().enumerate() {
            c.add(k, v)?;
            cc.add(k, v * v)?;
        }
        Ok(())
    }

    fn add_pointwise(&mut self, x: f64, i2: &[f64]) -> Result<()> {
        let Sums::Pointwise {
            x: sx,
            xx: sxx,
            y,
            yy,
            xy,
            xxy,
            xyy,
            xxyy,
        } = &mut self.sums
        else {
            unreachable!()
        };
        sx.add(0, x)?;
        sxx.add(0, x * x)?;
        for (k, &v) in i2.iter().enumerate() {
            let p = x * v;
            y.add(k, v)?;
            yy.add(k, v * v)?;
            xy.add(k, p)?;
            xxy.add(k, p * x)?;
            xyy.add(k, p * v)?;
            xxyy.add(k, p * p)?;
        }
        Ok(())
    }

    /// Field-wise addition; associative and commutative to the last bit.
    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        if self.mode != other.mode
            || !self.lattice1.matches(&other.lattice1)
            || !self.lattice2.matches(&other.lattice2)
        {
            return Err(Error::ModeMismatch(format!(
                "{:?} vs {:?}",
                self.mode, other.mode
            )));
        }
        match (&mut self.sums, &other.sums) {
            (
                Sums::Pointwise {
                    x,
                    xx,
                    y,
                    yy,
                    xy,
                    xxy,
                    xyy,
                    xxyy,
                },
                Sums::Pointwise {
                    x: x2,
                    xx: xx_2,
                    y: y2,
                    yy: yy2,
                    xy: xy2,
                    xxy: xxy2,
                    xyy: xyy2,
                    xxyy: xxyy2,
                },
            ) => {
                x.merge(x2)?;
                xx.merge(xx_2)?;
                y.merge(y2)?;
                yy.merge(yy2)?;
                xy.merge(xy2)?;
                xxy.merge(xxy2)?;
                xyy.merge(xyy2)?;
                xxyy.merge(xxyy2)?;
            }
            (
                Sums::Lagged { m1, m2, c, cc },
                Sums::Lagged {
                    m1: a,
                    m2: b,
                    c: d,
                    cc: e,
                },
            ) => {
                m1.merge(a)?;
                m2.merge(b)?;
                c.merge(d)?;
                cc.merge(e)?;
            }
            _ => return Err(Error::ModeMismatch("sum layouts differ".into())),
        }
        self.n_frames += other.n_frames;
        Ok(())
    }

    /// Sample means, G, g₂ and per-site standard errors.
    pub fn finalize(&self) -> Result<CorrelationReport> {
        let n = self.n_frames;
        if n < 2 {
            return Err(Error::TooFewFrames { needed: 2, have: n });
        }
        let nf = n as f64;
        match &self.sums {
            Sums::Pointwise {
                x,
                xx,
                y,
                yy,
                xy,
                xxy,
                xyy,
                xxyy,
            } => {
                let mx = x.value(0) / nf;
                let mxx = xx.value(0) / nf;
                let len = self.lattice2.len();
                let mut rep = CorrelationReport::empty(self, vec![mx], len);
                for k in 0..len {
                    let my = y.value(k) / nf;
                    let myy = yy.value(k) / nf;
                    let mxy = xy.value(k) / nf;
                    let mxxy = xxy.value(k) / nf;
                    let mxyy = xyy.value(k) / nf;
                    let mxxyy = xxyy.value(k) / nf;
                    let bg = mx * my;
                    // delta method on G = m_xy − m_x·m_y
                    let v_xy = mxxyy - mxy * mxy;
                    let v_x = mxx - mx * mx;
                    let v_y = myy - my * my;
                    let c_xy_x = mxxy - mxy * mx;
                    let c_xy_y = mxyy - mxy * my;
                    let c_x_y = mxy - mx * my;
                    let var = v_xy + my * my * v_x + mx * mx * v_y - 2.0 * my * c_xy_x
                        - 2.0 * mx * c_xy_y
                        + 2.0 * mx * my * c_x_y;
                    rep.mean_i2.push(my);
                    rep.push(mxy, bg, (var.max(0.0) / (nf - 1.0)).sqrt());
                }
                Ok(rep)
            }
            Sums::Lagged { m1, m2, c, cc } => {
                let (CorrelationMode::Lagged { region, max_lag }, lat) = (&self.mode, &self.lattice1)
                else {
                    unreachable!()
                };
                let mean1: Vec<f64> = m1.values().iter().map(|v| v / nf).collect();
                let mean2: Vec<f64> = m2.values().iter().map(|v| v / nf).collect();
                let bg = lag_products(lat, region, *max_lag, &self.domain, &mean1, &mean2);
                let mut rep = CorrelationReport::empty(self, mean1, self.domain.len());
                rep.mean_i2 = mean2;
                for (k, b) in bg.into_iter().enumerate() {
                    let mc = c.value(k) / nf;
                    let var = cc.value(k) / nf - mc * mc;
                    rep.push(mc, b, (var.max(0.0) / (nf - 1.0)).sqrt());
                }
                Ok(rep)
            }
        }
    }
}

fn pointwise(len: usize, sx: f64, sy: f64) -> Sums {
    Sums::Pointwise {
        x: ExactSums::new(1, sx),
        xx: ExactSums::new(1, sx * sx),
        y: ExactSums::new(len, sy),
        yy: ExactSums::new(len, sy * sy),
        xy: ExactSums::new(len, sx * sy),
        xxy: ExactSums::new(len, sx * sx * sy),
        xyy: ExactSums::new(len, sx * sy * sy),
        xxyy: ExactSums::new(len, sx * sx * sy * sy),
    }
}

/// Σ_{x ∈ region, x + Δ on the lattice} a(x)·b(x + Δ) for every lag of `domain`.
fn lag_products(
    lat: &Lattice,
    region: &SiteBox,
    max_lag: [usize; 2],
    domain: &Lattice,
    a: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let nx = lat.dim(0) as i64;
    let ny = lat.dim(1) as i64;
    let ly = if lat.rank() == 2 { max_lag[1] as i64 } else { 0 };
    let lx = max_lag[0] as i64;
    let mut out = vec![0.0; domain.len()];
    for dy in -ly..ly.max(1) {
        let y0 = (region.lo[1] as i64).max(-dy);
        let y1 = (region.hi[1] as i64).min(ny - dy);
        for dx in -lx..lx {
            let x0 = (region.lo[0] as i64).max(-dx);
            let x1 = (region.hi[0] as i64).min(nx - dx);
            let mut s = 0.0;
            if x0 < x1 {
                for iy in y0..y1 {
                    let ra = (iy * nx) as usize;
                    let rb = ((iy + dy) * nx) as usize;
                    let sa = &a[ra + x0 as usize..ra + x1 as usize];
                    let sb = &b[(rb as i64 + x0 + dx) as usize..(rb as i64 + x1 + dx) as usize];
                    s += dot(sa, sb);
                }
            }
            let k = domain.index((dx + lx) as usize, (dy + ly) as usize);
            out[k] = s;
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent partial sums let the loop vectorize; order is fixed
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Finalized correlation estimates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub mode: CorrelationMode,
    pub n_frames: u64,
    /// Domain of `g`, `g2`, `std_error`: the I₂ lattice, or the lag lattice
    /// (centre site = zero lag) in Lagged mode.
    #[serde(skip)]
    pub lattice: Lattice,
    /// ⟨I₁⟩: one value (fixed pixel / bucket) or the whole I₁ grid (lagged).
    pub mean_i1: Vec<f64>,
    /// ⟨I₂⟩ on the I₂ lattice.
    pub mean_i2: Vec<f64>,
    pub mean_i1i2: Vec<f64>,
    /// ⟨I₁⟩⟨I₂⟩ paired like `mean_i1i2`.
    pub background: Vec<f64>,
    /// G = ⟨I₁I₂⟩ − ⟨I₁⟩⟨I₂⟩.
    pub g: Vec<f64>,
    /// ⟨I₁I₂⟩ / ⟨I₁⟩⟨I₂⟩ (0 where the background vanishes).
    pub g2: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl CorrelationReport {
    fn empty(acc: &CorrelationAccumulator, mean_i1: Vec<f64>, len: usize) -> Self {
        Self {
            mode: acc.mode.clone(),
            n_frames: acc.n_frames,
            lattice: acc.domain.clone(),
            mean_i1,
            mean_i2: Vec::with_capacity(len),
            mean_i1i2: Vec::with_capacity(len),
            background: Vec::with_capacity(len),
            g: Vec::with_capacity(len),
            g2: Vec::with_capacity(len),
            std_error: Vec::with_capacity(len),
        }
    }

    fn push(&mut self, m12: f64, bg: f64, se: f64) {
        self.mean_i1i2.push(m12);
        self.background.push(bg);
        self.g.push(m12 - bg);
        self.g2.push(if bg > 0.0 { (m12 / bg).max(0.0) } else { 0.0 });
        self.std_error.push(se);
    }
}
