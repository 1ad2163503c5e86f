//! Fourier transforms of projection images on polar grids.
//!
//! The contract of every evaluator is the direct sum
//! `s(k, phi) = delta^2 * sum_{u,v} s[u,v] exp(-i k (u delta cos phi + v delta sin phi))`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ProjectionImage;
use crate::nufft::Nufft2d;
use crate::quadrature::gauss_legendre_on;

/// Images with fewer pixels per side than this use the direct sum by default.
pub const DIRECT_BELOW_SIDE: usize = 32;

/// Default accuracy of the nonuniform FFT path, relative to `delta^2 sum |s|`.
pub const DEFAULT_NUFFT_TOLERANCE: f64 = 1e-12;

/// Gauss-Legendre radial nodes on `[0, cutoff]` times uniform angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub k_nodes: Vec<f64>,
    pub k_weights: Vec<f64>,
    pub angles: Vec<f64>,
    pub cutoff: f64,
}

impl PolarGrid {
    pub fn n_k(&self) -> usize {
        self.k_nodes.len()
    }

    pub fn n_phi(&self) -> usize {
        self.angles.len()
    }

    /// Half-plane angles are enough for real images when `N_phi` is even.
    fn computed_angles(&self) -> usize {
        if self.n_phi() % 2 == 0 {
            self.n_phi() / 2
        } else {
            self.n_phi()
        }
    }

    pub fn check_nyquist(&self, delta: f64) -> Result<()> {
        let nyquist = PI / delta;
        if self.cutoff > nyquist * (1.0 + 1e-12) {
            return Err(Error::AboveNyquist {
                cutoff: self.cutoff,
                nyquist,
                delta,
            });
        }
        Ok(())
    }
}

pub fn make_polar_grid(n_k: usize, n_phi: usize, cutoff: f64) -> Result<PolarGrid> {
    if n_k < 2 {
        return Err(Error::param("N_k must be at least 2"));
    }
    if n_phi < 4 {
        return Err(Error::param("N_phi must be at least 4"));
    }
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::param("cutoff must be positive"));
    }
    let (k_nodes, k_weights) = gauss_legendre_on(n_k, 0.0, cutoff);
    let angles = (0..n_phi)
        .map(|p| 2.0 * PI * p as f64 / n_phi as f64)
        .collect();
    Ok(PolarGrid {
        k_nodes,
        k_weights,
        angles,
        cutoff,
    })
}

/// Half the Nyquist frequency, the default radial cutoff.
pub fn default_cutoff(delta: f64) -> f64 {
    0.5 * PI / delta
}

/// Transform values on a polar grid, indexed `[i * N_phi + p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSpectrum {
    pub n_k: usize,
    pub n_phi: usize,
    pub values: Vec<Complex64>,
}

impl PolarSpectrum {
    pub fn get(&self, i: usize, p: usize) -> Complex64 {
        self.values[i * self.n_phi + p]
    }

    /// Per radial node: sum over angles of the real part, and of `|s|^2`.
    pub fn angular_sums(&self) -> (Vec<f64>, Vec<f64>) {
        self.values
            .chunks_exact(self.n_phi)
            .map(|row| {
                (
                    row.iter().map(|v| v.re).sum::<f64>(),
                    row.iter().map(|v| v.norm_sqr()).sum::<f64>(),
                )
            })
            .unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolarMethod {
    /// Exact separable double sum, `O(N_k N_phi M^2)`.
    Direct,
    /// Oversampled-FFT interpolation, accurate to the given relative tolerance.
    Nufft { tolerance: f64 },
    /// Slice-theorem shortcut: bin pixel centers onto each direction by
    /// nearest 1D bin, then a 1D DFT per angle. Phase error up to `k delta / 2`.
    RadonBinned,
}

impl PolarMethod {
    /// Direct sum for small images, nonuniform FFT otherwise.
    pub fn auto(side: usize) -> Self {
        if side < DIRECT_BELOW_SIDE {
            PolarMethod::Direct
        } else {
            PolarMethod::Nufft {
                tolerance: DEFAULT_NUFFT_TOLERANCE,
            }
        }
    }
}

/// A reusable evaluator for one image geometry and one polar grid.
#[derive(Debug, Clone)]
pub struct PolarPlan {
    grid: PolarGrid,
    half_width: usize,
    delta: f64,
    engine: Engine,
}

#[derive(Debug, Clone)]
enum Engine {
    Direct,
    Nufft(Box<Nufft2d>),
    Radon,
}

impl PolarPlan {
    pub fn new(grid: &PolarGrid, half_width: usize, delta: f64, method: PolarMethod) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::param("pixel width must be positive"));
        }
        grid.check_nyquist(delta)?;
        let engine = match method {
            PolarMethod::Direct => Engine::Direct,
            PolarMethod::RadonBinned => Engine::Radon,
            PolarMethod::Nufft { tolerance } => {
                let n_half = grid.computed_angles();
                let mut points = Vec::with_capacity(grid.n_k() * n_half);
                for &k in &grid.k_nodes {
                    for &phi in &grid.angles[..n_half] {
                        points.push([k * delta * phi.cos(), k * delta * phi.sin()]);
                    }
                }
                Engine::Nufft(Box::new(Nufft2d::new(half_width, &points, tolerance)))
            }
        };
        Ok(PolarPlan {
            grid: grid.clone(),
            half_width,
            delta,
            engine,
        })
    }

    /// Plan with [`PolarMethod::auto`].
    pub fn auto(grid: &PolarGrid, half_width: usize, delta: f64) -> Result<Self> {
        Self::new(grid, half_width, delta, PolarMethod::auto(2 * half_width + 1))
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn transform(&self, image: &ProjectionImage) -> PolarSpectrum {
        assert_eq!(image.half_width(), self.half_width, "image size differs from plan");
        assert_eq!(image.delta(), self.delta, "pixel width differs from plan");
        let n_k = self.grid.n_k();
        let n_phi = self.grid.n_phi();
        let n_half = self.grid.computed_angles();
        let mut values = vec![Complex64::new(0.0, 0.0); n_k * n_phi];
        let d2 = self.delta * self.delta;
        match &self.engine {
            Engine::Direct => {
                for (i, &k) in self.grid.k_nodes.iter().enumerate() {
                    for p in 0..n_half {
                        values[i * n_phi + p] = d2 * direct_node(image, k, self.grid.angles[p]);
                    }
                }
            }
            Engine::Nufft(plan) => {
                let raw = plan.eval(image.pixels());
                for i in 0..n_k {
                    for p in 0..n_half {
                        values[i * n_phi + p] = d2 * raw[i * n_half + p];
                    }
                }
            }
            Engine::Radon => {
                for p in 0..n_half {
                    let (offset, bins) = radon_bins(image, self.grid.angles[p]);
                    for (i, &k) in self.grid.k_nodes.iter().enumerate() {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (b, &s) in bins.iter().enumerate() {
                            if s != 0.0 {
                                let ph = -k * (b as f64 - offset) * self.delta;
                                acc += s * Complex64::new(ph.cos(), ph.sin());
                            }
                        }
                        values[i * n_phi + p] = d2 * acc;
                    }
                }
            }
        }
        if n_half < n_phi {
            // phi + pi is the conjugate for real images
            for i in 0..n_k {
                for p in 0..n_half {
                    values[i * n_phi + p + n_half] = values[i * n_phi + p].conj();
                }
            }
        }
        PolarSpectrum { n_k, n_phi, values }
    }
}

/// Polar transform with the default method for the image size.
pub fn polar_dft(image: &ProjectionImage, grid: &PolarGrid) -> Result<PolarSpectrum> {
    Ok(PolarPlan::auto(grid, image.half_width(), image.delta())?.transform(image))
}

/// Exact separable double sum at one node, without the `delta^2` factor.
fn direct_node(image: &ProjectionImage, k: f64, phi: f64) -> Complex64 {
    let m = image.half_width() as f64;
    let side = image.side();
    let (s, c) = phi.sin_cos();
    let kx = k * image.delta() * c;
    let ky = k * image.delta() * s;
    let ex: Vec<Complex64> = (0..side)
        .map(|u| {
            let ph = -kx * (u as f64 - m);
            Complex64::new(ph.cos(), ph.sin())
        })
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for (v, row) in image.pixels().chunks_exact(side).enumerate() {
        let mut inner = Complex64::new(0.0, 0.0);
        for (p, e) in row.iter().zip(&ex) {
            inner += e * *p;
        }
        let ph = -ky * (v as f64 - m);
        acc += inner * Complex64::new(ph.cos(), ph.sin());
    }
    acc
}

/// Nearest-bin projection of pixel centers onto direction `phi`.
/// Returns the index of bin zero and the bin sums.
fn radon_bins(image: &ProjectionImage, phi: f64) -> (f64, Vec<f64>) {
    let m = image.half_width() as i64;
    let side = image.side();
    let reach = ((2.0f64).sqrt() * m as f64).ceil() as i64 + 1;
    let mut bins = vec![0.0; (2 * reach + 1) as usize];
    let (s, c) = phi.sin_cos();
    for (vi, row) in image.pixels().chunks_exact(side).enumerate() {
        let v = vi as i64 - m;
        for (ui, &p) in row.iter().enumerate() {
            let u = ui as i64 - m;
            let b = (u as f64 * c + v as f64 * s).round() as i64;
            bins[(b + reach) as usize] += p;
        }
    }
    (reach as f64, bins)
}
