//! Rotation-invariant features.
//!
//! `B1(k)` and `B2(k)` are the angular averages of the projection spectra and
//! of their squared magnitudes; by the slice theorem they equal the spherical
//! averages of the 3D transform and of its power. Their sine transforms give
//! the mean feature `mu(t)` and the autocorrelation feature `C(t)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ImageSource;
use crate::model::{dist2, norm2, PointSourceModel};
use crate::polar::{PolarGrid, PolarMethod, PolarPlan};
use crate::quadrature::trapezoid;

/// Images per reduction chunk. Partial sums are combined in a fixed order so
/// the thread count never changes a result.
pub const REDUCTION_CHUNK: usize = 1024;

pub const DEFAULT_T_SAMPLES: usize = 256;

/// Box diameter, the default largest radius of the t-grid.
pub fn default_t_max() -> f64 {
    3f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BKind {
    B1,
    B2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Mean,
    Autocorrelation,
}

/// A radial curve on the Gauss-Legendre nodes of a polar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BCurve {
    pub kind: BKind,
    pub grid: PolarGrid,
    pub values: Vec<f64>,
    /// Standard error of each value over images, when estimated from data.
    pub std_error: Option<Vec<f64>>,
    pub n_images: usize,
    /// Noise power subtracted from every `B2` value.
    pub noise_bias: f64,
}

impl BCurve {
    pub fn k(&self) -> &[f64] {
        &self.grid.k_nodes
    }
}

/// A feature sampled on an ascending t-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCurve {
    pub kind: FeatureKind,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl FeatureCurve {
    /// Trapezoid integral over the t-grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.t, &self.values)
    }

    /// Copy rescaled so that its trapezoid integral equals `mass`.
    pub fn normalized_to(&self, mass: f64) -> FeatureCurve {
        let current = self.mass();
        let scale = if current != 0.0 { mass / current } else { 0.0 };
        FeatureCurve {
            kind: self.kind,
            t: self.t.clone(),
            values: self.values.iter().map(|v| v * scale).collect(),
        }
    }

    /// t values of the interior strict-left local maxima.
    pub fn local_maxima(&self) -> Vec<f64> {
        let v = &self.values;
        (1..v.len().saturating_sub(1))
            .filter(|&j| v[j] > v[j - 1] && v[j] >= v[j + 1])
            .map(|j| self.t[j])
            .collect()
    }
}

/// `n` equally spaced radii on `[0, t_max]`.
pub fn uniform_t_grid(t_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "t-grid needs at least two samples");
    (0..n).map(|j| t_max * j as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccumulateOptions {
    pub method: Option<PolarMethod>,
    /// Subtract the white-noise power from `B2`. `None` debiases when the
    /// source reports a positive noise level.
    pub debias: Option<bool>,
}

/// Expected `|s(k, phi)|^2` of pure white noise under the `delta^2`
/// transform normalization.
pub fn noise_power_bias(noise_sigma: f64, delta: f64, half_width: usize) -> f64 {
    let side = (2 * half_width + 1) as f64;
    noise_sigma * noise_sigma * delta.powi(4) * side * side
}

#[derive(Clone)]
struct Partial {
    s1: Vec<f64>,
    q1: Vec<f64>,
    s2: Vec<f64>,
    q2: Vec<f64>,
}

impl Partial {
    fn zeros(n: usize) -> Self {
        Partial {
            s1: vec![0.0; n],
            q1: vec![0.0; n],
            s2: vec![0.0; n],
            q2: vec![0.0; n],
        }
    }

    fn add(&mut self, other: &Partial) {
        for (a, b) in [
            (&mut self.s1, &other.s1),
            (&mut self.q1, &other.q1),
            (&mut self.s2, &other.s2),
            (&mut self.q2, &other.q2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn pairwise_sum(mut parts: Vec<Partial>) -> Option<Partial> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.add(&b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

/// Estimate `B1` and `B2` from every image of `source` in one pass.
pub fn accumulate(
    source: &dyn ImageSource,
    grid: &PolarGrid,
    opts: AccumulateOptions,
) -> Result<(BCurve, BCurve)> {
    let n_images = source.len();
    if n_images == 0 {
        return Err(Error::param("no images to accumulate"));
    }
    let m = source.half_width();
    let delta = source.delta();
    let method = opts.method.unwrap_or(PolarMethod::auto(2 * m + 1));
    let plan = PolarPlan::new(grid, m, delta, method)?;
    let debias = opts.debias.unwrap_or(source.noise_sigma() > 0.0);
    let bias = if debias {
        noise_power_bias(source.noise_sigma(), delta, m)
    } else {
        0.0
    };
    let n_k = grid.n_k();
    let inv_phi = 1.0 / grid.n_phi() as f64;

    let mut partials = Vec::with_capacity(n_images.div_ceil(REDUCTION_CHUNK));
    for start in (0..n_images).step_by(REDUCTION_CHUNK) {
        let end = (start + REDUCTION_CHUNK).min(n_images);
        let images = source.load(start..end)?;
        let per_image: Vec<(Vec<f64>, Vec<f64>)> = images
            .par_iter()
            .map(|img| {
                let (re, sq) = plan.transform(img).angular_sums();
                (
                    re.iter().map(|v| v * inv_phi).collect(),
                    sq.iter().map(|v| v * inv_phi - bias).collect(),
                )
            })
            .collect();
        let mut part = Partial::zeros(n_k);
        for (y1, y2) in &per_image {
            for i in 0..n_k {
                part.s1[i] += y1[i];
                part.q1[i] += y1[i] * y1[i];
                part.s2[i] += y2[i];
                part.q2[i] += y2[i] * y2[i];
            }
        }
        partials.push(part);
    }
    let total = pairwise_sum(partials).expect("at least one chunk");
    let l = n_images as f64;
    let finish = |s: &[f64], q: &[f64]| -> (Vec<f64>, Vec<f64>) {
        s.iter()
            .zip(q)
            .map(|(s, q)| {
                let mean = s / l;
                let se = if n_images > 1 {
                    ((q - l * mean * mean).max(0.0) / (l - 1.0) / l).sqrt()
                } else {
                    f64::NAN
                };
                (mean, se)
            })
            .unzip()
    };
    let (b1, se1) = finish(&total.s1, &total.q1);
    let (b2, se2) = finish(&total.s2, &total.q2);
    Ok((
        BCurve {
            kind: BKind::B1,
            grid: grid.clone(),
            values: b1,
            std_error: Some(se1),
            n_images,
            noise_bias: 0.0,
        },
        BCurve {
            kind: BKind::B2,
            grid: grid.clone(),
            values: b2,
            std_error: Some(se2),
            n_images,
            noise_bias: bias,
        },
    ))
}

/// `B1(k_i) = 1/(L N_phi) sum_l sum_p Re s_l(k_i, phi_p)`.
pub fn accumulate_b1(source: &dyn ImageSource, grid: &PolarGrid) -> Result<BCurve> {
    Ok(accumulate(source, grid, AccumulateOptions::default())?.0)
}

/// `B2(k_i) = 1/(L N_phi) sum_l sum_p |s_l(k_i, phi_p)|^2`, minus the noise
/// power when `debias` is set.
pub fn accumulate_b2(source: &dyn ImageSource, grid: &PolarGrid, debias: bool) -> Result<BCurve> {
    let opts = AccumulateOptions {
        debias: Some(debias),
        ..AccumulateOptions::default()
    };
    Ok(accumulate(source, grid, opts)?.1)
}

/// `value(t_j) = (2 t_j / pi) sum_i w_i k_i b_i sin(k_i t_j)`.
pub fn sine_transform(b: &BCurve, t: &[f64]) -> FeatureCurve {
    let kind = match b.kind {
        BKind::B1 => FeatureKind::Mean,
        BKind::B2 => FeatureKind::Autocorrelation,
    };
    FeatureCurve {
        kind,
        t: t.to_vec(),
        values: sine_transform_values(&b.grid.k_nodes, &b.grid.k_weights, &b.values, t),
    }
}

pub fn sine_transform_values(k: &[f64], w: &[f64], b: &[f64], t: &[f64]) -> Vec<f64> {
    let wkb: Vec<f64> = k.iter().zip(w).zip(b).map(|((k, w), b)| w * k * b).collect();
    t.iter()
        .map(|&tj| {
            let s: f64 = k.iter().zip(&wkb).map(|(k, c)| c * (k * tj).sin()).sum();
            2.0 * tj / PI * s
        })
        .collect()
}

/// Mass density on spheres of radius `t` of a unit 3D Gaussian of width `s`
/// centered at distance `r` from the origin (noncentral chi, 3 dof).
pub fn shell(t: f64, r: f64, s: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let s2 = s * s;
    if r * t < 1e-12 * s2 {
        // r -> 0: Maxwell density
        return (2.0 / PI).sqrt() * t * t / (s2 * s) * (-t * t / (2.0 * s2)).exp();
    }
    let d = t - r;
    t / (r * s * (2.0 * PI).sqrt()) * (-d * d / (2.0 * s2)).exp() * -(-2.0 * t * r / s2).exp_m1()
}

/// Closed-form `mu(t)` and `C(t)` of a Gaussian-source model.
pub fn analytic_features(model: &PointSourceModel, t: &[f64]) -> (FeatureCurve, FeatureCurve) {
    let s = model.kernel_sigma;
    let c = &model.centers;
    let a = &model.amplitudes;
    let radii: Vec<f64> = c.iter().map(|x| norm2(*x).sqrt()).collect();
    let mu = t
        .iter()
        .map(|&t| radii.iter().zip(a).map(|(r, a)| a * shell(t, *r, s)).sum())
        .collect();
    let s_pair = s * std::f64::consts::SQRT_2;
    let mut pairs = Vec::with_capacity(c.len() * c.len());
    for n in 0..c.len() {
        for m in 0..c.len() {
            pairs.push((a[n] * a[m], dist2(c[n], c[m]).sqrt()));
        }
    }
    let cc = t
        .iter()
        .map(|&t| pairs.iter().map(|(w, d)| w * shell(t, *d, s_pair)).sum())
        .collect();
    (
        FeatureCurve {
            kind: FeatureKind::Mean,
            t: t.to_vec(),
            values: mu,
        },
        FeatureCurve {
            kind: FeatureKind::Autocorrelation,
            t: t.to_vec(),
            values: cc,
        },
    )
}

/// Closed-form `B1(k)`: `sum_n a_n sinc(k r_n) exp(-s^2 k^2 / 2)`.
pub fn analytic_b1(model: &PointSourceModel, k: &[f64]) -> Vec<f64> {
    let s = model.kernel_sigma;
    k.iter()
        .map(|&k| {
            let env = (-0.5 * s * s * k * k).exp();
            model
                .centers
                .iter()
                .zip(&model.amplitudes)
                .map(|(c, a)| a * sinc(k * norm2(*c).sqrt()))
                .sum::<f64>()
                * env
        })
        .collect()
}

/// Closed-form `B2(k)`: `sum_{n,m} a_n a_m sinc(k d_nm) exp(-s^2 k^2)`.
pub fn analytic_b2(model: &PointSourceModel, k: &[f64]) -> Vec<f64> {
    let s = model.kernel_sigma;
    let c = &model.centers;
    let a = &model.amplitudes;
    k.iter()
        .map(|&k| {
            let mut acc = 0.0;
            for n in 0..c.len() {
                for m in 0..c.len() {
                    acc += a[n] * a[m] * sinc(k * dist2(c[n], c[m]).sqrt());
                }
            }
            acc * (-s * s * k * k).exp()
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `||est - truth|| / ||truth||` on a shared t-grid.
pub fn feature_error(est: &FeatureCurve, truth: &FeatureCurve) -> Result<f64> {
    check_same_grid(&est.t, &truth.t)?;
    let num: f64 = est
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = truth.values.iter().map(|b| b * b).sum();
    Ok((num / den).sqrt())
}

pub fn check_same_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples vs {} samples",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
            return Err(Error::GridMismatch(format!("sample {x} vs {y}")));
        }
    }
    Ok(())
}

/// Acquisition and transform settings recorded next to exported curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub n_images: usize,
    pub delta: f64,
    pub half_width: usize,
    pub n_k: usize,
    pub n_phi: usize,
    pub cutoff: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub debias: bool,
    pub t_max: f64,
    pub n_t: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ProjectionImage, ProjectionStack, Simulation};
    use crate::polar::make_polar_grid;

    fn flat_curve(kind: BKind, grid: &PolarGrid, values: Vec<f64>) -> BCurve {
        BCurve {
            kind,
            grid: grid.clone(),
            values,
            std_error: None,
            n_images: 1,
            noise_bias: 0.0,
        }
    }

    #[test]
    fn zero_stack_gives_zero_curves() {
        let stack = ProjectionStack::new(vec![ProjectionImage::zeros(5, 0.05); 3], 0.0, 0).unwrap();
        let g = make_polar_grid(6, 8, 30.0).unwrap();
        let (b1, b2) = accumulate(&stack, &g, AccumulateOptions::default()).unwrap();
        assert!(b1.values.iter().chain(&b2.values).all(|v| *v == 0.0));
        let mu = sine_transform(&b1, &uniform_t_grid(1.0, 10));
        assert!(mu.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sine_transform_is_linear() {
        let g = make_polar_grid(20, 8, 60.0).unwrap();
        let a: Vec<f64> = g.k_nodes.iter().map(|k| (0.1 * k).cos()).collect();
        let b: Vec<f64> = g.k_nodes.iter().map(|k| (-0.01 * k * k).exp()).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let t = uniform_t_grid(1.5, 40);
        let fa = sine_transform(&flat_curve(BKind::B1, &g, a), &t);
        let fb = sine_transform(&flat_curve(BKind::B1, &g, b), &t);
        let fab = sine_transform(&flat_curve(BKind::B1, &g, ab), &t);
        for j in 0..t.len() {
            assert!((2.0 * fa.values[j] - 0.5 * fb.values[j] - fab.values[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_transform_of_sinc_peaks_at_radius() {
        let r0 = 0.3;
        let g = make_polar_grid(400, 8, 400.0).unwrap();
        let b: Vec<f64> = g.k_nodes.iter().map(|k| sinc(k * r0)).collect();
        let t = uniform_t_grid(1.0, 101);
        let f = sine_transform(&flat_curve(BKind::B1, &g, b), &t);
        let jmax = (0..t.len())
            .max_by(|&a, &b| f.values[a].total_cmp(&f.values[b]))
            .unwrap();
        assert_eq!(jmax, 30);
    }

    #[test]
    fn shell_limits() {
        let s = 0.05;
        // continuity of the r -> 0 branch
        for t in [0.01, 0.05, 0.1, 0.2] {
            let a = shell(t, 0.0, s);
            let b = shell(t, 1e-9, s);
            assert!((a - b).abs() <= 1e-6 * a);
        }
        assert_eq!(shell(0.0, 0.3, s), 0.0);
        assert_eq!(shell(-1.0, 0.3, s), 0.0);
    }

    #[test]
    fn origin_source_mean_feature_has_unit_mass() {
        let m = PointSourceModel::new(vec![[0.0; 3]], 0.05).unwrap();
        let t = uniform_t_grid(1.0, 2001);
        let (mu, _) = analytic_features(&m, &t);
        assert!((mu.mass() - 1.0).abs() < 1e-6);
        for (t, v) in t.iter().zip(&mu.values) {
            assert!((v - shell(*t, 0.0, 0.05)).abs() < 1e-15);
        }
    }

    #[test]
    fn autocorrelation_counts_all_ordered_pairs() {
        let m = PointSourceModel::new(vec![[0.0, 0.0, 0.2], [0.0, 0.0, -0.2]], 0.01).unwrap();
        let t = uniform_t_grid(1.0, 4001);
        let (mu, c) = analytic_features(&m, &t);
        assert!((c.mass() - 4.0).abs() < 1e-6);
        assert!((mu.mass() - 2.0).abs() < 1e-6);
        let near = |x: f64| {
            let lo = t.iter().position(|&t| t >= x - 0.1).unwrap();
            let hi = t.iter().position(|&t| t >= x + 0.1).unwrap();
            crate::quadrature::trapezoid(&t[lo..=hi], &c.values[lo..=hi])
        };
        assert!((near(0.0) - 2.0).abs() < 1e-6);
        assert!((near(0.4) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn feature_error_definition() {
        let t = uniform_t_grid(1.0, 5);
        let truth = FeatureCurve {
            kind: FeatureKind::Mean,
            t: t.clone(),
            values: vec![0.0, 6.0, 0.0, 8.0, 0.0],
        };
        assert_eq!(feature_error(&truth, &truth).unwrap(), 0.0);
        let twice = FeatureCurve {
            values: truth.values.iter().map(|v| 2.0 * v).collect(),
            ..truth.clone()
        };
        assert!((feature_error(&twice, &truth).unwrap() - 1.0).abs() < 1e-15);
        let bumped = FeatureCurve {
            values: vec![1.0, 6.0, 0.0, 8.0, 0.0],
            ..truth.clone()
        };
        assert!((feature_error(&bumped, &truth).unwrap() - 0.1).abs() < 1e-15);
        let other = FeatureCurve {
            t: uniform_t_grid(2.0, 5),
            ..truth.clone()
        };
        assert!(matches!(feature_error(&other, &truth), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn single_source_b1_matches_gaussian_transform() {
        let m = PointSourceModel::new(vec![[0.0; 3]], 0.05).unwrap();
        let delta = 0.01;
        let sim = Simulation::new(m, 4, 40, delta, f64::INFINITY, 1).unwrap();
        let g = make_polar_grid(40, 32, 0.5 * PI / delta).unwrap();
        let b1 = accumulate_b1(&sim, &g).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (k, v) in g.k_nodes.iter().zip(&b1.values) {
            let expected = (-0.5 * 0.05f64.powi(2) * k * k).exp();
            num += (v / (delta * delta) - expected).powi(2);
            den += expected * expected;
        }
        assert!((num / den).sqrt() < 0.02);
    }

    #[test]
    fn accumulation_is_independent_of_chunking_threads() {
        let m = PointSourceModel::new(vec![[0.1, 0.0, 0.2], [-0.1, 0.1, 0.0]], 0.05).unwrap();
        let sim = Simulation::new(m, 40, 12, 0.03, 5.0, 9).unwrap();
        let g = make_polar_grid(10, 12, 40.0).unwrap();
        let a = accumulate(&sim, &g, AccumulateOptions::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| accumulate(&sim, &g, AccumulateOptions::default()).unwrap());
        assert_eq!(a.0.values, b.0.values);
        assert_eq!(a.1.values, b.1.values);
    }
}
