mod common;

use std::time::{Duration, Instant};

use proptest::prelude::*;
use rustfft::num_complex::Complex64;
use uvtomo::forward::{render, ProjectionImage};
use uvtomo::model::{PointSourceModel, Rotation};
use uvtomo::polar::{default_cutoff, make_polar_grid, PolarMethod, PolarPlan, DEFAULT_NUFFT_TOLERANCE};
use uvtomo::rng::{Stream, StreamRng};

const FAST: PolarMethod = PolarMethod::Nufft {
    tolerance: DEFAULT_NUFFT_TOLERANCE,
};

fn random_image(half_width: usize, delta: f64, seed: u64) -> ProjectionImage {
    let mut rng = StreamRng::new(seed, Stream::Test(20));
    let n = (2 * half_width + 1).pow(2);
    ProjectionImage::from_pixels(half_width, delta, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

#[test]
fn nine_by_nine_against_direct_sum() {
    let img = random_image(4, 0.1, 1);
    let grid = make_polar_grid(8, 8, default_cutoff(0.1)).unwrap();
    let s = PolarPlan::new(&grid, 4, 0.1, FAST).unwrap().transform(&img);
    for (i, &k) in grid.k_nodes.iter().enumerate() {
        for (p, &phi) in grid.angles.iter().enumerate() {
            assert!((s.get(i, p) - common::ndft(&img, k, phi)).norm() < 1e-10);
        }
    }
}

#[test]
fn large_nufft_against_direct_sum() {
    let m = PointSourceModel::new(vec![[0.1, 0.2, 0.0], [-0.2, 0.0, 0.1]], 0.05).unwrap();
    let img = render(&m, &Rotation::from_axis_angle([1.0, 1.0, 0.0], 0.4), 60, 0.01).unwrap();
    let grid = make_polar_grid(24, 20, default_cutoff(0.01)).unwrap();
    let s = PolarPlan::new(&grid, 60, 0.01, FAST).unwrap().transform(&img);
    for (i, &k) in grid.k_nodes.iter().enumerate() {
        for (p, &phi) in grid.angles.iter().enumerate() {
            assert!((s.get(i, p) - common::ndft(&img, k, phi)).norm() < 1e-10);
        }
    }
}

#[test]
fn fast_path_throughput() {
    let m = PointSourceModel::new(vec![[0.1, 0.2, 0.0], [-0.2, 0.0, 0.1]], 0.05).unwrap();
    let img = render(&m, &Rotation::identity(), 100, 0.005).unwrap();
    let grid = make_polar_grid(400, 400, default_cutoff(0.005)).unwrap();
    let plan = PolarPlan::new(&grid, 100, 0.005, FAST).unwrap();
    let best = (0..3)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(plan.transform(&img));
            t.elapsed()
        })
        .min()
        .unwrap();
    println!("201x201 image on a 400x400 grid: {best:?}");
    assert!(best < Duration::from_millis(50), "{best:?}");
}

fn image_strategy() -> impl Strategy<Value = ProjectionImage> {
    (1usize..8, any::<u64>()).prop_map(|(m, seed)| random_image(m, 0.05, seed))
}

fn plan_for(img: &ProjectionImage, n_k: usize, n_phi: usize) -> PolarPlan {
    let grid = make_polar_grid(n_k, n_phi, default_cutoff(img.delta())).unwrap();
    PolarPlan::new(&grid, img.half_width(), img.delta(), FAST).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn antipodal_values_are_conjugate(img in image_strategy(), n_k in 2usize..10, half in 2usize..8) {
        let n_phi = 2 * half;
        let s = plan_for(&img, n_k, n_phi).transform(&img);
        for i in 0..n_k {
            for p in 0..half {
                prop_assert!((s.get(i, p + half) - s.get(i, p).conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_is_linear(seed in any::<u64>(), m in 1usize..8, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random_image(m, 0.05, seed);
        let y = random_image(m, 0.05, seed ^ 0x5555);
        let combo: Vec<f64> = x.pixels().iter().zip(y.pixels()).map(|(p, q)| a * p + b * q).collect();
        let z = ProjectionImage::from_pixels(m, 0.05, combo).unwrap();
        let plan = plan_for(&x, 6, 6);
        let (sx, sy, sz) = (plan.transform(&x), plan.transform(&y), plan.transform(&z));
        for j in 0..sz.values.len() {
            prop_assert!((sz.values[j] - (a * sx.values[j] + b * sy.values[j])).norm() < 1e-12);
        }
    }

    // a one-pixel shift in u inside a zero border
    #[test]
    fn shift_in_u_is_a_phase(seed in any::<u64>(), m in 2usize..8) {
        let mut rng = StreamRng::new(seed, Stream::Test(21));
        let mut a = ProjectionImage::zeros(m, 0.05);
        let mut b = ProjectionImage::zeros(m, 0.05);
        let mi = m as i64;
        for v in -mi..=mi {
            for u in -mi..mi {
                let val = rng.normal();
                a.set(u, v, val);
                b.set(u + 1, v, val);
            }
        }
        let plan = plan_for(&a, 7, 6);
        let (sa, sb) = (plan.transform(&a), plan.transform(&b));
        let grid = plan.grid();
        for (i, &k) in grid.k_nodes.iter().enumerate() {
            for (p, &phi) in grid.angles.iter().enumerate() {
                let phase = Complex64::from_polar(1.0, -k * 0.05 * phi.cos());
                prop_assert!((sb.get(i, p) - sa.get(i, p) * phase).norm() < 1e-10);
            }
        }
    }
}
