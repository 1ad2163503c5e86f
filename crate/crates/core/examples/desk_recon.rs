//! Desk-scale reconstruction trials from exact analytic features.
//!
//! `cargo run --example desk_recon -- [trials] [restarts] [kernel_sigma] [bin_width]`

use std::time::Instant;

use uvtomo::eval::EvalReport;
use uvtomo::features::{analytic_features, uniform_t_grid};
use uvtomo::model::{random_model_within, PointSourceModel};
use uvtomo::recon::{discretize_targets, extract_centers, solve, DistanceOperators, SolverOptions, VoxelGrid};
use uvtomo::rng::{Stream, StreamRng};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .map_or(default, |s| s.parse().unwrap_or_else(|_| panic!("bad argument {s}")))
}

fn main() {
    let trials: usize = arg(1, 20);
    let restarts: usize = arg(2, 10);
    let sigma: f64 = arg(3, 0.01);
    let grid = VoxelGrid::new(5, 0.1).unwrap();
    let dt: f64 = arg(4, grid.voxel_size / 2.0);
    let ops = DistanceOperators::new(grid, dt).unwrap();
    let t = uniform_t_grid(3f64.sqrt(), 256);

    let mut successes = 0;
    for trial in 0..trials {
        let start = Instant::now();
        let mut rng = StreamRng::new(trial as u64, Stream::Model);
        let raw = random_model_within(3, 0.2, sigma, Some(0.45), &mut rng).unwrap();
        let snapped = raw
            .centers
            .iter()
            .map(|c| grid.center(grid.nearest(*c).unwrap()))
            .collect();
        let model = PointSourceModel::new(snapped, sigma).unwrap();
        let (mu, c) = analytic_features(&model, &t);
        let targets = discretize_targets(&mu, &c, &ops, 3).unwrap();
        let opts = SolverOptions {
            restarts,
            seed: trial as u64,
            ..SolverOptions::default()
        };
        let sol = solve(&targets, &ops, &opts).unwrap();
        let centers = extract_centers(&sol.density, &grid, 3).unwrap();
        let report = EvalReport::new(&centers, &model.centers, grid.voxel_size, 1.0).unwrap();
        successes += report.success as usize;
        println!(
            "trial {trial:2}  rmsd {:.3}  objective {:.2e}  restart {}  {:.1}s",
            report.rmsd,
            sol.objective,
            sol.best_restart,
            start.elapsed().as_secs_f64()
        );
    }
    println!("rmsd < 1 voxel in {successes}/{trials}");
}
