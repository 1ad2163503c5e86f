//! Two-dimensional type-2 nonuniform FFT for real coefficient grids.
//!
//! Evaluates `f(wx, wy) = sum_{u,v=-M..M} c[u,v] exp(-i (u wx + v wy))` at
//! arbitrary frequencies by deconvolving the coefficients, taking a 2x
//! oversampled FFT and interpolating with the "exponential of semicircle"
//! kernel `exp(beta (sqrt(1 - z^2) - 1))`. Kernel taps and positions are
//! precomputed per point set, so repeated evaluations only pay for one FFT
//! and the interpolation sums.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::quadrature::gauss_legendre_on;

const OVERSAMPLING: usize = 2;
const MAX_WIDTH: usize = 16;

/// Kernel width (taps per dimension) for a requested relative accuracy.
pub fn kernel_width(tolerance: f64) -> usize {
    let digits = (-tolerance.clamp(1e-16, 0.1).log10()).ceil() as usize;
    (digits + 1).clamp(2, MAX_WIDTH)
}

/// Smallest `n >= min` whose only prime factors are 2, 3 and 5.
pub fn next_smooth(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut r = n;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

#[derive(Clone)]
pub struct Nufft2d {
    half_width: usize,
    n_fft: usize,
    width: usize,
    deconv: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    starts: Vec<[u32; 2]>,
    taps: Vec<f64>,
}

impl std::fmt::Debug for Nufft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nufft2d")
            .field("half_width", &self.half_width)
            .field("n_fft", &self.n_fft)
            .field("width", &self.width)
            .field("points", &self.starts.len())
            .finish()
    }
}

impl Nufft2d {
    /// Plan evaluation of a `(2M+1)^2` coefficient grid at `points`
    /// (`(wx, wy)` pairs, any real values; the transform is 2pi-periodic).
    pub fn new(half_width: usize, points: &[[f64; 2]], tolerance: f64) -> Self {
        let side = 2 * half_width + 1;
        let width = kernel_width(tolerance);
        let n_fft = next_smooth((OVERSAMPLING * side).max(2 * width));
        let beta = 2.30 * width as f64;
        let half = width as f64 / 2.0;

        // Fourier transform of the kernel at integer frequencies, by quadrature
        // on its support [-alpha, alpha] in frequency-domain units.
        let alpha = PI * width as f64 / n_fft as f64;
        let (z, wq) = gauss_legendre_on(4 * width + 40, 0.0, 1.0);
        let kernel_z: Vec<f64> = z.iter().map(|&z| es_kernel(z, beta)).collect();
        let deconv = (0..side)
            .map(|i| {
                let u = i as f64 - half_width as f64;
                let ft: f64 = 2.0
                    * alpha
                    * z.iter()
                        .zip(&wq)
                        .zip(&kernel_z)
                        .map(|((z, w), k)| w * k * (u * alpha * z).cos())
                        .sum::<f64>();
                2.0 * PI / (n_fft as f64 * ft)
            })
            .collect();

        let scale = n_fft as f64 / (2.0 * PI);
        let mut starts = Vec::with_capacity(points.len());
        let mut taps = Vec::with_capacity(points.len() * 2 * width);
        for p in points {
            let mut start = [0u32; 2];
            for (d, &omega) in p.iter().enumerate() {
                let x = omega * scale;
                let j0 = (x - half).ceil();
                for a in 0..width {
                    let zz = (x - (j0 + a as f64)) / half;
                    taps.push(es_kernel(zz, beta));
                }
                start[d] = (j0 as i64).rem_euclid(n_fft as i64) as u32;
            }
            starts.push(start);
        }

        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Nufft2d {
            half_width,
            n_fft,
            width,
            deconv,
            fft,
            starts,
            taps,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fft_size(&self) -> usize {
        self.n_fft
    }

    /// Evaluate at every planned point. `coeffs` is row-major with `u` fastest.
    pub fn eval(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let m = self.half_width;
        let side = 2 * m + 1;
        assert_eq!(coeffs.len(), side * side, "coefficient grid size");
        let n = self.n_fft;
        let w = self.width;

        // Deconvolved coefficients, transposed: buf[x * n + y] holds (u, v)
        // at x = u mod n, y = v mod n.
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        let wrap = |i: usize| (i + n - m) % n;
        for (vi, row) in coeffs.chunks_exact(side).enumerate() {
            let y = wrap(vi);
            let dv = self.deconv[vi];
            for (ui, &c) in row.iter().enumerate() {
                buf[wrap(ui) * n + y] = Complex64::new(c * self.deconv[ui] * dv, 0.0);
            }
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        // transform along y for the rows that carry data
        for ui in 0..side {
            let x = wrap(ui);
            self.fft
                .process_with_scratch(&mut buf[x * n..(x + 1) * n], &mut scratch);
        }
        // transform along x: transpose, FFT rows, and keep the transposed
        // layout padded by `w` so tap windows never wrap.
        let mut tr = vec![Complex64::new(0.0, 0.0); n * n];
        for x in 0..n {
            for y in 0..n {
                tr[y * n + x] = buf[x * n + y];
            }
        }
        self.fft.process_with_scratch(&mut tr, &mut scratch);
        let np = n + w;
        let mut padded = vec![Complex64::new(0.0, 0.0); np * np];
        for x in 0..np {
            let dst = &mut padded[x * np..(x + 1) * np];
            for (y, d) in dst.iter_mut().enumerate() {
                *d = tr[(y % n) * n + (x % n)];
            }
        }

        self.starts
            .iter()
            .zip(self.taps.chunks_exact(2 * w))
            .map(|(start, taps)| {
                let (wx, wy) = taps.split_at(w);
                let (x0, y0) = (start[0] as usize, start[1] as usize);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, &tx) in wx.iter().enumerate() {
                    let row = &padded[(x0 + a) * np + y0..(x0 + a) * np + y0 + w];
                    let mut inner = Complex64::new(0.0, 0.0);
                    for (h, &ty) in row.iter().zip(wy) {
                        inner.re += h.re * ty;
                        inner.im += h.im * ty;
                    }
                    acc += inner * tx;
                }
                acc
            })
            .collect()
    }
}

fn es_kernel(z: f64, beta: f64) -> f64 {
    let s = 1.0 - z * z;
    if s <= 0.0 {
        0.0
    } else {
        (beta * (s.sqrt() - 1.0)).exp()
    }
}
