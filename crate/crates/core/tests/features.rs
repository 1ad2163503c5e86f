mod common;

use uvtomo::features::{
    accumulate, analytic_b1, analytic_b2, analytic_features, shell, uniform_t_grid, AccumulateOptions,
};
use uvtomo::forward::Simulation;
use uvtomo::model::{random_model_within, PointSourceModel};
use uvtomo::polar::{default_cutoff, make_polar_grid};
use uvtomo::rng::{Stream, StreamRng};

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn shell_matches_sphere_quadrature() {
    let (r, s) = (0.3, 0.05);
    // an off-axis center at radius r
    let c = [r * 0.48, -r * 0.6, r * (1.0 - 0.48f64.powi(2) - 0.36).sqrt()];
    let mut worst: f64 = 0.0;
    for j in 0..50 {
        let t = 0.05 + 0.5 * j as f64 / 49.0;
        let want = common::sphere_integral(t, c, s, 1e-10);
        worst = worst.max((shell(t, r, s) - want).abs() / want);
    }
    assert!(worst < 1e-6, "max relative error {worst}");
}

#[test]
fn analytic_peaks_sit_on_the_distances() {
    // radii and distances at least 3 sigma apart so the bumps stay resolved
    let sigma = 0.015;
    let model = PointSourceModel::new(vec![[0.1, 0.0, 0.0], [0.0, 0.25, 0.0], [0.0, 0.0, -0.4]], sigma).unwrap();
    let t = uniform_t_grid(3f64.sqrt(), 256);
    let step = t[1] - t[0];
    let (mu, c) = analytic_features(&model, &t);
    let (radial, pair) = uvtomo::model::radial_and_pairwise_distances(&model);
    let near = |peaks: &[f64], d: f64| peaks.iter().any(|p| (p - d).abs() <= step);
    let mu_peaks = mu.local_maxima();
    let c_peaks = c.local_maxima();
    for d in radial {
        assert!(near(&mu_peaks, d), "radius {d} vs peaks {mu_peaks:?}");
    }
    for d in pair {
        assert!(near(&c_peaks, d), "distance {d} vs peaks {c_peaks:?}");
    }
}

#[test]
fn b2_of_a_pair_matches_the_analytic_curve() {
    let model = PointSourceModel::new(vec![[0.15, 0.1, 0.0], [-0.1, -0.05, 0.2]], 0.05).unwrap();
    let delta: f64 = 0.01;
    let grid = make_polar_grid(60, 60, default_cutoff(delta)).unwrap();
    let sim = Simulation::new(model.clone(), 2000, 50, delta, f64::INFINITY, 5).unwrap();
    let (_, b2) = accumulate(&sim, &grid, AccumulateOptions::default()).unwrap();
    // the estimator carries a delta^2 per transform
    let scaled: Vec<f64> = b2.values.iter().map(|v| v / delta.powi(4)).collect();
    let err = rel_l2(&scaled, &analytic_b2(&model, b2.k()));
    assert!(err < 0.03, "B2 relative error {err}");
}

#[test]
fn more_images_reduce_b1_error() {
    let model = random_model_within(5, 0.2, 0.05, Some(0.3), &mut StreamRng::new(4, Stream::Model)).unwrap();
    let grid = make_polar_grid(40, 40, default_cutoff(0.02)).unwrap();
    let truth = analytic_b1(&model, &grid.k_nodes);
    let error = |l: usize| {
        let mut errs: Vec<f64> = (0..3)
            .map(|seed| {
                let sim = Simulation::new(model.clone(), l, 25, 0.02, f64::INFINITY, seed).unwrap();
                let (b1, _) = accumulate(&sim, &grid, AccumulateOptions::default()).unwrap();
                let scaled: Vec<f64> = b1.values.iter().map(|v| v / 0.02f64.powi(2)).collect();
                rel_l2(&scaled, &truth)
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[1]
    };
    let (e1, e2) = (error(100), error(1600));
    assert!(e2 < e1, "L=100: {e1}, L=1600: {e2}");
}

#[test]
fn debiased_noise_only_stack_is_centered() {
    let grid = make_polar_grid(16, 16, default_cutoff(0.05)).unwrap();
    let sim = common::NoiseOnly {
        n_images: 3000,
        half_width: 8,
        delta: 0.05,
        sigma: 0.7,
        seed: 21,
    };
    let (_, b2) = accumulate(&sim, &grid, AccumulateOptions::default()).unwrap();
    assert!(b2.noise_bias > 0.0);
    let se = b2.std_error.as_ref().unwrap();
    for (v, s) in b2.values.iter().zip(se) {
        assert!(v.abs() <= 3.0 * s, "{v} vs se {s}");
    }
}
