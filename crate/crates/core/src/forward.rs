//! Forward simulator: analytic projection of Gaussian-source models, exact
//! pixel integration and calibrated white noise.

use std::borrow::Cow;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{sample_uniform_rotation, PointSourceModel, Rotation};
use crate::rng::{Stream, StreamRng};

/// Orientations averaged when calibrating the noise level.
pub const DEFAULT_SNR_CALIBRATION: usize = 256;

/// A `(2M+1) x (2M+1)` projection, row-major with `u` (the x axis) fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    half_width: usize,
    delta: f64,
    pixels: Vec<f64>,
    /// Orientation used to simulate the image; never read by reconstruction.
    pub truth: Option<Rotation>,
}

impl ProjectionImage {
    pub fn zeros(half_width: usize, delta: f64) -> Self {
        let side = 2 * half_width + 1;
        ProjectionImage {
            half_width,
            delta,
            pixels: vec![0.0; side * side],
            truth: None,
        }
    }

    pub fn from_pixels(half_width: usize, delta: f64, pixels: Vec<f64>) -> Result<Self> {
        let side = 2 * half_width + 1;
        if pixels.len() != side * side {
            return Err(Error::param(format!(
                "{} pixels for a {side}x{side} image",
                pixels.len()
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::param("pixel width must be positive"));
        }
        Ok(ProjectionImage {
            half_width,
            delta,
            pixels,
            truth: None,
        })
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    /// Pixel at signed coordinates `u, v` in `-M..=M`.
    pub fn get(&self, u: i64, v: i64) -> f64 {
        self.pixels[self.index(u, v)]
    }

    pub fn set(&mut self, u: i64, v: i64, value: f64) {
        let i = self.index(u, v);
        self.pixels[i] = value;
    }

    fn index(&self, u: i64, v: i64) -> usize {
        let m = self.half_width as i64;
        assert!(u.abs() <= m && v.abs() <= m, "pixel ({u}, {v}) outside image");
        ((v + m) as usize) * self.side() + (u + m) as usize
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Mean squared pixel value.
    pub fn power(&self) -> f64 {
        self.pixels.iter().map(|p| p * p).sum::<f64>() / self.pixels.len() as f64
    }

    /// Half side of the field of view, `(M + 1/2) * delta`.
    pub fn fov_half(&self) -> f64 {
        (self.half_width as f64 + 0.5) * self.delta
    }
}

/// A 2D isotropic Gaussian mixture: the line integral of a model along `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMixture {
    pub centers: Vec<[f64; 2]>,
    pub amplitudes: Vec<f64>,
    pub sigma: f64,
}

impl ProjectedMixture {
    /// Density of the mixture at `(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * s2);
        self.centers
            .iter()
            .zip(&self.amplitudes)
            .map(|(c, a)| {
                let dx = x - c[0];
                let dy = y - c[1];
                a * norm * (-(dx * dx + dy * dy) / (2.0 * s2)).exp()
            })
            .sum()
    }
}

/// Rotate the model and integrate along `z`. A unit 3D Gaussian of width
/// sigma integrates to a unit 2D Gaussian of the same width centered at the
/// first two coordinates of `R x_n`.
pub fn project_model(model: &PointSourceModel, rot: &Rotation) -> ProjectedMixture {
    let centers = model
        .centers
        .iter()
        .map(|c| {
            let r = rot.apply(*c);
            [r[0], r[1]]
        })
        .collect();
    ProjectedMixture {
        centers,
        amplitudes: model.amplitudes.clone(),
        sigma: model.kernel_sigma,
    }
}

/// Mass of a unit 1D Gaussian (mean `mu`, width `sigma`) on `[lo, hi]`.
///
/// Picks the erf or erfc form so that neither tail suffers cancellation.
pub fn gaussian_interval_mass(lo: f64, hi: f64, mu: f64, sigma: f64) -> f64 {
    let s = std::f64::consts::SQRT_2 * sigma;
    let a = (lo - mu) / s;
    let b = (hi - mu) / s;
    if a >= 0.0 {
        0.5 * (libm::erfc(a) - libm::erfc(b))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b) - libm::erfc(-a))
    } else {
        0.5 * (libm::erf(b) - libm::erf(a))
    }
}

/// Exact pixel integrals of a projected mixture.
pub fn render_mixture(mix: &ProjectedMixture, half_width: usize, delta: f64) -> ProjectionImage {
    let mut img = ProjectionImage::zeros(half_width, delta);
    let side = img.side();
    let m = half_width as f64;
    let mut px = vec![0.0; side];
    let mut py = vec![0.0; side];
    for (c, amp) in mix.centers.iter().zip(&mix.amplitudes) {
        for i in 0..side {
            let lo = (i as f64 - m - 0.5) * delta;
            let hi = lo + delta;
            px[i] = gaussian_interval_mass(lo, hi, c[0], mix.sigma);
            py[i] = amp * gaussian_interval_mass(lo, hi, c[1], mix.sigma);
        }
        for (row, &wy) in img.pixels.chunks_exact_mut(side).zip(&py) {
            if wy == 0.0 {
                continue;
            }
            for (p, &wx) in row.iter_mut().zip(&px) {
                *p += wy * wx;
            }
        }
    }
    img
}

/// Noiseless discretized projection of `model` seen from `rot`.
pub fn render(
    model: &PointSourceModel,
    rot: &Rotation,
    half_width: usize,
    delta: f64,
) -> Result<ProjectionImage> {
    if half_width < 1 {
        return Err(Error::param("image half-width M must be at least 1"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("pixel width must be positive"));
    }
    let mut img = render_mixture(&project_model(model, rot), half_width, delta);
    img.truth = Some(*rot);
    Ok(img)
}

/// Noise standard deviation giving `target_snr` (clean power over noise
/// power), with the clean power averaged over `n_calibration` random
/// orientations. An infinite target gives zero.
pub fn sigma_for_snr(
    model: &PointSourceModel,
    half_width: usize,
    delta: f64,
    target_snr: f64,
    n_calibration: usize,
    seed: u64,
) -> Result<f64> {
    if !(target_snr > 0.0) {
        return Err(Error::param(format!("SNR must be positive, got {target_snr}")));
    }
    if target_snr.is_infinite() {
        return Ok(0.0);
    }
    let power = mean_clean_power(model, half_width, delta, n_calibration, seed)?;
    Ok((power / target_snr).sqrt())
}

/// Average clean-image power over random orientations.
pub fn mean_clean_power(
    model: &PointSourceModel,
    half_width: usize,
    delta: f64,
    n_calibration: usize,
    seed: u64,
) -> Result<f64> {
    if n_calibration == 0 {
        return Err(Error::param("need at least one calibration orientation"));
    }
    let powers = (0..n_calibration)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed, Stream::Calibration(i as u64));
            let rot = sample_uniform_rotation(&mut rng);
            render(model, &rot, half_width, delta).map(|img| img.power())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(powers.iter().sum::<f64>() / n_calibration as f64)
}

/// Recipe for a simulated stack. Image `l` is generated on demand from
/// rotation stream `l` and noise stream `l`, so any subset can be
/// regenerated independently and in any order.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub model: PointSourceModel,
    pub n_images: usize,
    pub half_width: usize,
    pub delta: f64,
    pub noise_sigma: f64,
    pub requested_snr: f64,
    pub seed: u64,
}

impl Simulation {
    /// Calibrates the noise level for `snr` (infinity for noiseless data).
    pub fn new(
        model: PointSourceModel,
        n_images: usize,
        half_width: usize,
        delta: f64,
        snr: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::with_calibration(
            model,
            n_images,
            half_width,
            delta,
            snr,
            DEFAULT_SNR_CALIBRATION,
            seed,
        )
    }

    pub fn with_calibration(
        model: PointSourceModel,
        n_images: usize,
        half_width: usize,
        delta: f64,
        snr: f64,
        n_calibration: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_images == 0 {
            return Err(Error::param("a stack needs at least one image"));
        }
        model.validate()?;
        let noise_sigma = sigma_for_snr(&model, half_width, delta, snr, n_calibration, seed)?;
        Ok(Simulation {
            model,
            n_images,
            half_width,
            delta,
            noise_sigma,
            requested_snr: snr,
            seed,
        })
    }

    /// Explicit noise level, bypassing SNR calibration.
    pub fn with_noise_sigma(
        model: PointSourceModel,
        n_images: usize,
        half_width: usize,
        delta: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_images == 0 {
            return Err(Error::param("a stack needs at least one image"));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::param("noise sigma must be non-negative"));
        }
        Ok(Simulation {
            model,
            n_images,
            half_width,
            delta,
            noise_sigma,
            requested_snr: f64::NAN,
            seed,
        })
    }

    pub fn rotation(&self, index: usize) -> Rotation {
        sample_uniform_rotation(&mut StreamRng::new(self.seed, Stream::Rotation(index as u64)))
    }

    pub fn clean_image(&self, index: usize) -> ProjectionImage {
        render(&self.model, &self.rotation(index), self.half_width, self.delta)
            .expect("geometry validated at construction")
    }

    pub fn image(&self, index: usize) -> ProjectionImage {
        let mut img = self.clean_image(index);
        if self.noise_sigma > 0.0 {
            let mut rng = StreamRng::new(self.seed, Stream::Noise(index as u64));
            for p in img.pixels.iter_mut() {
                *p += self.noise_sigma * rng.normal();
            }
        }
        img
    }

    pub fn generate(&self, range: Range<usize>) -> Vec<ProjectionImage> {
        range.into_par_iter().map(|i| self.image(i)).collect()
    }

    pub fn into_stack(self) -> ProjectionStack {
        let images = self.generate(0..self.n_images);
        ProjectionStack {
            images,
            noise_sigma: self.noise_sigma,
            requested_snr: self.requested_snr,
            seed: self.seed,
        }
    }
}

/// `L` projection images sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    pub images: Vec<ProjectionImage>,
    pub noise_sigma: f64,
    /// Power ratio; infinity for noiseless data, NaN when unknown.
    pub requested_snr: f64,
    pub seed: u64,
}

impl ProjectionStack {
    pub fn new(images: Vec<ProjectionImage>, noise_sigma: f64, seed: u64) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::param("a stack needs at least one image"))?;
        let (m, d) = (first.half_width, first.delta);
        if images.iter().any(|i| i.half_width != m || i.delta != d) {
            return Err(Error::param("stack images must share M and delta"));
        }
        Ok(ProjectionStack {
            images,
            noise_sigma,
            requested_snr: f64::NAN,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn half_width(&self) -> usize {
        self.images[0].half_width
    }

    pub fn delta(&self) -> f64 {
        self.images[0].delta
    }
}

/// Simulate `n_images` projections of `model` at uniformly random
/// orientations with noise calibrated to `snr`.
pub fn simulate_stack(
    model: &PointSourceModel,
    n_images: usize,
    half_width: usize,
    delta: f64,
    snr: f64,
    seed: u64,
) -> Result<ProjectionStack> {
    Ok(Simulation::new(model.clone(), n_images, half_width, delta, snr, seed)?.into_stack())
}

/// Anything that can hand out projection images in index ranges.
pub trait ImageSource: Sync {
    fn len(&self) -> usize;
    fn half_width(&self) -> usize;
    fn delta(&self) -> f64;
    fn noise_sigma(&self) -> f64;
    fn load(&self, range: Range<usize>) -> Result<Cow<'_, [ProjectionImage]>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ImageSource for ProjectionStack {
    fn len(&self) -> usize {
        self.images.len()
    }
    fn half_width(&self) -> usize {
        ProjectionStack::half_width(self)
    }
    fn delta(&self) -> f64 {
        ProjectionStack::delta(self)
    }
    fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }
    fn load(&self, range: Range<usize>) -> Result<Cow<'_, [ProjectionImage]>> {
        Ok(Cow::Borrowed(&self.images[range]))
    }
}

impl ImageSource for Simulation {
    fn len(&self) -> usize {
        self.n_images
    }
    fn half_width(&self) -> usize {
        self.half_width
    }
    fn delta(&self) -> f64 {
        self.delta
    }
    fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }
    fn load(&self, range: Range<usize>) -> Result<Cow<'_, [ProjectionImage]>> {
        Ok(Cow::Owned(self.generate(range)))
    }
}
