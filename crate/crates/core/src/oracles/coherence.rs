use crate::error::Result;
use crate::grid::{centered_transform, Complex64, Lattice};

/// Sampled two-point field correlation Γ(x, x′) = ⟨a*(x) a(x′)⟩ on a lattice.
pub trait Coherence: Send + Sync {
    fn lattice(&self) -> &Lattice;

    /// w(x′) = Σ_x v(x) Γ(x, x′).
    fn contract(&self, v: &[Complex64]) -> Vec<Complex64>;

    /// Γ(x, x) for every site.
    fn diagonal(&self) -> Vec<Complex64>;

    /// Γ(x, x′) for one source site `x`, as a function of x′.
    fn row(&self, x: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::default(); self.lattice().len()];
        v[x] = Complex64::new(1.0, 0.0);
        self.contract(&v)
    }
}

/// Circular convolution with a lag kernel stored in centered order
/// (kernel[c + Δ] = k(Δ), periodic in Δ).
#[derive(Clone, Debug)]
pub(crate) struct CircularKernel {
    lattice: Lattice,
    spectrum: Vec<Complex64>,
}

impl CircularKernel {
    pub(crate) fn new(lattice: &Lattice, kernel: &[Complex64]) -> Self {
        let mut spectrum = kernel.to_vec();
        centered_transform(&mut spectrum, lattice, false);
        let s = (lattice.len() as f64).sqrt();
        for z in &mut spectrum {
            *z *= s;
        }
        Self {
            lattice: lattice.clone(),
            spectrum,
        }
    }

    /// (u ⊛ k)(x) = Σ_a u(a) k(x − a).
    pub(crate) fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut w = u.to_vec();
        centered_transform(&mut w, &self.lattice, false);
        for (a, b) in w.iter_mut().zip(&self.spectrum) {
            *a *= b;
        }
        centered_transform(&mut w, &self.lattice, true);
        w
    }
}

/// Lag of `index` from the lattice center along each axis, in sites.
pub(crate) fn site_lag(lattice: &Lattice, index: usize) -> (i64, i64) {
    let (ix, iy) = lattice.coords(index);
    (
        ix as i64 - lattice.center(0) as i64,
        iy as i64 - lattice.center(1) as i64,
    )
}

/// Γ(x, x′) = conj(L(x))·R(x′)·γ(x′ − x) with a periodic lag kernel γ.
///
/// Covers statistically homogeneous speckle restricted by amplitude windows
/// (diaphragm, beam-splitter coefficients, object transmission).
#[derive(Clone, Debug)]
pub struct WindowedHomogeneous {
    lattice: Lattice,
    kernel: Vec<Complex64>,
    left: Vec<Complex64>,
    right: Vec<Complex64>,
    conv: CircularKernel,
}

impl WindowedHomogeneous {
    /// `kernel` is indexed by centered lag: kernel[c + Δ] = γ(Δ).
    pub fn new(lattice: Lattice, kernel: Vec<Complex64>) -> Result<Self> {
        if kernel.len() != lattice.len() {
            return Err(crate::error::Error::LatticeMismatch(format!(
                "kernel of {} values for {} sites",
                kernel.len(),
                lattice.len()
            )));
        }
        let one = vec![Complex64::new(1.0, 0.0); lattice.len()];
        let conv = CircularKernel::new(&lattice, &kernel);
        Ok(Self {
            lattice,
            kernel,
            left: one.clone(),
            right: one,
            conv,
        })
    }

    /// Fully incoherent limit: γ(Δ) = δ_{Δ,0}.
    pub fn delta(lattice: Lattice) -> Self {
        let mut k = vec![Complex64::default(); lattice.len()];
        k[lattice.center_index()] = Complex64::new(1.0, 0.0);
        Self::new(lattice, k).expect("kernel sized to lattice")
    }

    /// Fully coherent limit: γ(Δ) = 1.
    pub fn flat(lattice: Lattice) -> Self {
        let k = vec![Complex64::new(1.0, 0.0); lattice.len()];
        Self::new(lattice, k).expect("kernel sized to lattice")
    }

    /// Gaussian coherence whose intensity correlation |γ|² has 2σ = `coherence_length`.
    pub fn gaussian(lattice: Lattice, coherence_length: f64) -> Result<Self> {
        crate::error::require_positive("coherence_length", coherence_length)?;
        let sigma = coherence_length / 2.0;
        let k = (0..lattice.len())
            .map(|i| {
                let (dx, dy) = site_lag(&lattice, i);
                let rx = dx as f64 * lattice.pitch()[0];
                let ry = if lattice.rank() == 2 {
                    dy as f64 * lattice.pitch()[1]
                } else {
                    0.0
                };
                Complex64::new((-(rx * rx + ry * ry) / (4.0 * sigma * sigma)).exp(), 0.0)
            })
            .collect();
        Self::new(lattice, k)
    }

    /// Multiplies both windows: Γ → conj(w(x))·w(x′)·Γ.
    pub fn windowed(mut self, w: &[f64]) -> Self {
        for ((l, r), &a) in self.left.iter_mut().zip(self.right.iter_mut()).zip(w) {
            *l *= a;
            *r *= a;
        }
        self
    }

    /// Replaces the windows with independent left/right amplitudes.
    pub fn with_windows(mut self, left: Vec<Complex64>, right: Vec<Complex64>) -> Self {
        debug_assert_eq!(left.len(), self.lattice.len());
        debug_assert_eq!(right.len(), self.lattice.len());
        self.left = left;
        self.right = right;
        self
    }

    pub fn kernel(&self) -> &[Complex64] {
        &self.kernel
    }

    pub fn left(&self) -> &[Complex64] {
        &self.left
    }

    pub fn right(&self) -> &[Complex64] {
        &self.right
    }

    /// Σ_x u(x)·|Γ(x, s)|² for every s.
    pub fn bucket_weights(&self, u: &[f64]) -> Vec<f64> {
        let k2: Vec<Complex64> = self
            .kernel
            .iter()
            .map(|z| Complex64::new(z.norm_sqr(), 0.0))
            .collect();
        let conv = CircularKernel::new(&self.lattice, &k2);
        let a: Vec<Complex64> = u
            .iter()
            .zip(&self.left)
            .map(|(w, l)| Complex64::new(w * l.norm_sqr(), 0.0))
            .collect();
        conv.apply(&a)
            .iter()
            .zip(&self.right)
            .map(|(z, r)| (z.re * r.norm_sqr()).max(0.0))
            .collect()
    }
}

impl Coherence for WindowedHomogeneous {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn contract(&self, v: &[Complex64]) -> Vec<Complex64> {
        let u: Vec<Complex64> = v.iter().zip(&self.left).map(|(a, l)| a * l.conj()).collect();
        let mut w = self.conv.apply(&u);
        for (a, r) in w.iter_mut().zip(&self.right) {
            *a *= r;
        }
        w
    }

    fn diagonal(&self) -> Vec<Complex64> {
        let g0 = self.kernel[self.lattice.center_index()];
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| l.conj() * r * g0)
            .collect()
    }
}

/// Far-field coherence of a near-field Γ behind an f-f lens:
/// Γ_f(ξ, x) = Σ U*(ξ, i) U(x, j) Γ_n(i, j) with the centered unitary DFT U.
#[derive(Clone, Debug)]
pub struct Propagated {
    near: WindowedHomogeneous,
    lattice: Lattice,
}

impl Propagated {
    /// `far` is the focal-plane lattice the spectrum is sampled on.
    pub fn new(near: WindowedHomogeneous, far: Lattice) -> Result<Self> {
        if near.lattice().shape() != far.shape() {
            return Err(crate::error::Error::LatticeMismatch(
                "far-field lattice must have the near-field shape".into(),
            ));
        }
        Ok(Self { near, lattice: far })
    }

    pub fn near(&self) -> &WindowedHomogeneous {
        &self.near
    }
}

impl Coherence for Propagated {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn contract(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut u = v.to_vec();
        centered_transform(&mut u, self.near.lattice(), true);
        let mut w = self.near.contract(&u);
        centered_transform(&mut w, self.near.lattice(), false);
        w
    }

    fn diagonal(&self) -> Vec<Complex64> {
        // Γ_f(x, x) = N^{-1/2} · U[γ·A](x), A(Δ) = Σ_i conj(L_i) R_{i+Δ} (circular).
        let lat = self.near.lattice();
        let n = lat.len() as f64;
        let refl: Vec<Complex64> = reflect(lat, self.near.left())
            .into_iter()
            .map(|z| z.conj())
            .collect();
        let conv = CircularKernel::new(lat, &refl);
        let a = conv.apply(self.near.right());
        // a[x] = Σ_i refl[c + x − i] R_i = Σ_i conj(L_{i − x + c}) R_i → A(Δ) at index c + Δ.
        let mut prod: Vec<Complex64> = a
            .iter()
            .zip(self.near.kernel())
            .map(|(a, g)| a * g)
            .collect();
        centered_transform(&mut prod, lat, false);
        let s = 1.0 / n.sqrt();
        prod.iter().map(|z| z * s).collect()
    }
}

/// out(c + Δ) = in(c − Δ), periodic.
fn reflect<T: Copy>(lattice: &Lattice, values: &[T]) -> Vec<T> {
    let (nx, ny) = (lattice.dim(0), lattice.dim(1));
    let (cx, cy) = (lattice.center(0), lattice.center(1));
    let mut out = values.to_vec();
    for iy in 0..ny {
        let sy = (2 * cy + ny - iy) % ny;
        let sy = if lattice.rank() == 2 { sy } else { iy };
        for ix in 0..nx {
            let sx = (2 * cx + nx - ix) % nx;
            out[iy * nx + ix] = values[sy * nx + sx];
        }
    }
    out
}
