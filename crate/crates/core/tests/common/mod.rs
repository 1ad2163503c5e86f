//! Independent numerical oracles for the integration and acceptance tests.
//!
//! Nothing here calls the library's own quadrature, transforms or
//! projections; only plain data types cross the boundary.

#![allow(dead_code)]

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use uvtomo::forward::ProjectionImage;
use uvtomo::model::{sample_uniform_rotation, Rotation};
use uvtomo::rng::StreamRng;

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` on `[a, b]` to absolute `tol`.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        if whole.1 <= tol || depth > 40 {
            return whole.0;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, 0.5 * tol, left, depth + 1) + rec(f, m, b, 0.5 * tol, right, depth + 1)
    }
    let whole = gk15(f, a, b);
    rec(f, a, b, tol, whole, 0)
}

/// Nested adaptive integral over the rectangle `[ax, bx] x [ay, by]`.
pub fn integrate_2d(f: &dyn Fn(f64, f64) -> f64, ax: f64, bx: f64, ay: f64, by: f64, tol: f64) -> f64 {
    let inner_tol = tol / (4.0 * (bx - ax).abs().max(1e-300));
    integrate(
        &mut |x| integrate(&mut |y| f(x, y), ay, by, inner_tol),
        ax,
        bx,
        tol,
    )
}

/// Isotropic 3D normal density with mean `c` and width `s`.
pub fn gaussian3(x: [f64; 3], c: [f64; 3], s: f64) -> f64 {
    let d2 = (0..3).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>();
    (-d2 / (2.0 * s * s)).exp() / (2.0 * PI * s * s).powf(1.5)
}

/// Surface integral of `N(c, s^2 I)` over the sphere `|x| = t`, by nested
/// adaptive quadrature in `(cos theta, phi)` about the z axis. The center
/// is deliberately placed off-axis so the integrand has no symmetry.
pub fn sphere_integral(t: f64, c: [f64; 3], s: f64, rel_tol: f64) -> f64 {
    // split phi at the center's azimuth so the peak falls on a panel edge
    let phi0 = c[1].atan2(c[0]);
    let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let u0 = if r > 0.0 { c[2] / r } else { 0.0 };
    let f = |u: f64, phi: f64| {
        let st = (1.0 - u * u).max(0.0).sqrt();
        gaussian3([t * st * phi.cos(), t * st * phi.sin(), t * u], c, s) * t * t
    };
    let u_breaks = [-1.0, u0.clamp(-1.0, 1.0), 1.0];
    let phi_breaks = [phi0 - PI, phi0, phi0 + PI];
    let pass = |tol: f64| {
        let mut total = 0.0;
        for uw in u_breaks.windows(2) {
            for pw in phi_breaks.windows(2) {
                if uw[1] > uw[0] {
                    total += integrate_2d(&f, uw[0], uw[1], pw[0], pw[1], tol / 4.0);
                }
            }
        }
        total
    };
    // bootstrap an absolute tolerance from coarser passes
    let mut estimate = pass(f64::INFINITY);
    for rel in [1e-3, rel_tol] {
        estimate = pass((rel * estimate.abs()).max(1e-300));
    }
    estimate
}

/// Pixel `(u, v)` of a rendered mixture by 2D adaptive quadrature of the
/// projected Gaussians.
pub fn pixel_by_quadrature(
    centers: &[[f64; 3]],
    amplitudes: &[f64],
    sigma: f64,
    rot: &Rotation,
    delta: f64,
    u: i64,
    v: i64,
    tol: f64,
) -> f64 {
    let planar: Vec<[f64; 2]> = centers
        .iter()
        .map(|c| {
            let m = rot.matrix();
            [
                m[(0, 0)] * c[0] + m[(0, 1)] * c[1] + m[(0, 2)] * c[2],
                m[(1, 0)] * c[0] + m[(1, 1)] * c[1] + m[(1, 2)] * c[2],
            ]
        })
        .collect();
    let density = |x: f64, y: f64| {
        planar
            .iter()
            .zip(amplitudes)
            .map(|(p, a)| a * (-((x - p[0]).powi(2) + (y - p[1]).powi(2)) / (2.0 * sigma * sigma)).exp())
            .sum::<f64>()
            / (2.0 * PI * sigma * sigma)
    };
    let x0 = (u as f64 - 0.5) * delta;
    let y0 = (v as f64 - 0.5) * delta;
    integrate_2d(&density, x0, x0 + delta, y0, y0 + delta, tol)
}

/// `delta^2 sum_{u,v} I(u,v) exp(-i k delta (u cos phi + v sin phi))`.
pub fn ndft(image: &ProjectionImage, k: f64, phi: f64) -> Complex64 {
    let m = image.half_width() as i64;
    let d = image.delta();
    let mut acc = Complex64::new(0.0, 0.0);
    for v in -m..=m {
        for u in -m..=m {
            let ph = -k * d * (u as f64 * phi.cos() + v as f64 * phi.sin());
            acc += image.get(u, v) * Complex64::from_polar(1.0, ph);
        }
    }
    acc * d * d
}

/// Kolmogorov-Smirnov p-value of `samples` against `cdf` (asymptotic
/// distribution with the Stephens small-sample correction).
pub fn ks_p_value(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = mass}` by
/// enumerating every candidate support and solving its KKT system.
pub fn brute_force_simplex(v: &[f64], mass: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 16);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (mass - idx.iter().map(|&i| v[i]).sum::<f64>()) / idx.len() as f64;
        let mut x = vec![0.0; n];
        let mut feasible = true;
        for &i in &idx {
            x[i] = v[i] + shift;
            if x[i] < -1e-13 {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        x.iter_mut().for_each(|e| *e = e.max(0.0));
        let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    best.expect("some support is feasible").1
}

fn rmsd_under(q: &[[f64; 3]; 3], perm: &[usize], est: &[[f64; 3]], truth: &[[f64; 3]]) -> f64 {
    let mut ss = 0.0;
    for (i, t) in truth.iter().enumerate() {
        let e = est[perm[i]];
        for r in 0..3 {
            let qe = q[r][0] * e[0] + q[r][1] * e[1] + q[r][2] * e[2];
            ss += (qe - t[r]).powi(2);
        }
    }
    (ss / truth.len() as f64).sqrt()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn to_rows(r: &Rotation, reflect: bool) -> [[f64; 3]; 3] {
    let m = r.matrix();
    let s = if reflect { -1.0 } else { 1.0 };
    [
        [s * m[(0, 0)], s * m[(0, 1)], s * m[(0, 2)]],
        [s * m[(1, 0)], s * m[(1, 1)], s * m[(1, 2)]],
        [s * m[(2, 0)], s * m[(2, 1)], s * m[(2, 2)]],
    ]
}

/// Minimum RMSD over permutations and orthogonal maps. Every permutation
/// and sign keeps its best rotation from a random SO(3) sample, which is
/// then refined by shrinking random perturbations.
pub fn brute_force_rmsd(est: &[[f64; 3]], truth: &[[f64; 3]], rng: &mut StreamRng, samples: usize) -> f64 {
    let perms = permutations(truth.len());
    let rotations: Vec<Rotation> = (0..samples)
        .map(|i| if i == 0 { Rotation::identity() } else { sample_uniform_rotation(rng) })
        .collect();
    let mut overall = f64::INFINITY;
    for p in &perms {
        for reflect in [false, true] {
            let score = |r: &Rotation| rmsd_under(&to_rows(r, reflect), p, est, truth);
            let mut best = rotations
                .iter()
                .map(|r| (score(r), *r))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            let mut angle = 0.5;
            while angle > 1e-8 {
                let mut improved = false;
                for _ in 0..40 {
                    let axis = [rng.normal(), rng.normal(), rng.normal()];
                    let cand = Rotation::from_axis_angle(axis, angle * rng.uniform()).compose(&best.1);
                    let s = score(&cand);
                    if s < best.0 {
                        best = (s, cand);
                        improved = true;
                    }
                }
                if !improved {
                    angle *= 0.5;
                }
            }
            overall = overall.min(best.0);
        }
    }
    overall
}

/// Pure white-noise frames: a zero signal observed at noise level `sigma`.
pub struct NoiseOnly {
    pub n_images: usize,
    pub half_width: usize,
    pub delta: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl uvtomo::forward::ImageSource for NoiseOnly {
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
        self.sigma
    }
    fn load(
        &self,
        range: std::ops::Range<usize>,
    ) -> uvtomo::Result<std::borrow::Cow<'_, [ProjectionImage]>> {
        let n = (2 * self.half_width + 1).pow(2);
        range
            .map(|i| {
                let mut rng = StreamRng::new(self.seed, uvtomo::rng::Stream::Noise(i as u64));
                ProjectionImage::from_pixels(self.half_width, self.delta, (0..n).map(|_| self.sigma * rng.normal()).collect())
            })
            .collect::<uvtomo::Result<Vec<_>>>()
            .map(std::borrow::Cow::Owned)
    }
}
