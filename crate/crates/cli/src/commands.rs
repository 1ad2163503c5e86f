use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uvtomo::ablation::{median_errors, run_sweep, write_sweep_csv, SweepAxis};
use uvtomo::config::ExperimentConfig;
use uvtomo::eval::EvalReport;
use uvtomo::features::{
    accumulate, analytic_features, feature_error, sine_transform, uniform_t_grid, AccumulateOptions, FeatureCurve,
    FeatureKind, FeatureMetadata,
};
use uvtomo::forward::{ImageSource, Simulation};
use uvtomo::io::{read_curve_csv, read_json, write_curve_csv, write_density, write_frame_csv, write_json, write_stack, write_trace_csv, StackFile};
use uvtomo::model::{random_model_within, PointSourceModel};
use uvtomo::recon::{discretize_targets, extract_centers, solve, DistanceOperators, VoxelGrid};
use uvtomo::rng::{Stream, StreamRng};
use uvtomo::Error;

use crate::options::{AxisArg, Command, ConfigArgs, Preset};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_IO: u8 = 4;

pub const STACK_FILE: &str = "stack.uvts";
pub const MODEL_FILE: &str = "model.json";
pub const CENTERS_FILE: &str = "centers.json";

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::InvalidParameter(_) | Error::Infeasible { .. } | Error::AboveNyquist { .. } => EXIT_CONFIG,
            Error::Io { .. } | Error::Format { .. } | Error::Json { .. } => EXIT_IO,
            _ => EXIT_NUMERIC,
        };
        Failure { code, error }
    }
}

fn config_error(error: Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Estimated centers as written by `reconstruct`. Model files parse too.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentersFile {
    pub centers: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_restart: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restart_objectives: Vec<Option<f64>>,
}

pub fn resolve(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let base = match (&args.config, args.preset) {
        (Some(path), _) => read_json(path).map_err(config_error)?,
        (None, Some(Preset::Fig3)) => ExperimentConfig::fig3_preset(),
        (None, _) => ExperimentConfig::default(),
    };
    let cfg = args.overlay(base);
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn snapshot(cfg: &ExperimentConfig, stage: &str) -> CliResult<()> {
    Ok(write_json(&cfg.output_dir.join(format!("{stage}.config.json")), cfg)?)
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { cfg, model } => {
            let cfg = resolve(&cfg)?;
            simulate(&cfg, model.as_deref()).map(|_| ())
        }
        Command::Features {
            cfg,
            stack,
            analytic,
            estimates,
        } => {
            let cfg = resolve(&cfg)?;
            let stack = stack.unwrap_or_else(|| cfg.output_dir.join(STACK_FILE));
            match estimates {
                Some(dir) => {
                    let (mu, c) = read_features(&dir)?;
                    let model = load_model(analytic.as_deref().expect("clap enforces --analytic"))?;
                    compare_with_analytic(&cfg, &model, &mu, &c).map(|_| ())
                }
                None => {
                    let (mu, c) = features(&cfg, &stack)?;
                    if let Some(path) = analytic {
                        compare_with_analytic(&cfg, &load_model(&path)?, &mu, &c)?;
                    }
                    Ok(())
                }
            }
        }
        Command::Reconstruct {
            cfg,
            features: dir,
            stack,
            analytic,
            model,
        } => {
            let cfg = resolve(&cfg)?;
            let (mu, c) = if let Some(path) = analytic {
                let t = uniform_t_grid(cfg.t_max, cfg.n_t);
                analytic_features(&load_model(&path)?, &t)
            } else if let Some(stack) = stack {
                features(&cfg, &stack)?
            } else {
                read_features(dir.as_deref().unwrap_or(&cfg.output_dir))?
            };
            let truth = model.map(|p| load_model(&p)).transpose()?;
            reconstruct(&cfg, &mu, &c, truth.as_ref()).map(|_| ())
        }
        Command::Evaluate { cfg, centers, model } => {
            let cfg = resolve(&cfg)?;
            evaluate(&cfg, &centers, &model).map(|_| ())
        }
        Command::Ablate {
            cfg,
            axis,
            values,
            replicates,
        } => {
            let cfg = resolve(&cfg)?;
            ablate(&cfg, axis, &values, replicates)
        }
        Command::Pipeline { cfg } => {
            let cfg = resolve(&cfg)?;
            let model = simulate(&cfg, None)?;
            let (mu, c) = features(&cfg, &cfg.output_dir.join(STACK_FILE))?;
            compare_with_analytic(&cfg, &model, &mu, &c)?;
            reconstruct(&cfg, &mu, &c, Some(&model))?;
            evaluate(&cfg, &cfg.output_dir.join(CENTERS_FILE), &cfg.output_dir.join(MODEL_FILE))?;
            Ok(())
        }
        Command::ExportFrame { stack, index, out } => {
            let file = StackFile::open(&stack)?;
            if index >= file.len() {
                return Err(config_error(Error::InvalidParameter(format!(
                    "frame {index} out of range for a stack of {}",
                    file.len()
                ))));
            }
            let frame = file.load(index..index + 1)?;
            write_frame_csv(&out, &frame[0])?;
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> CliResult<PointSourceModel> {
    Ok(PointSourceModel::load(path)?)
}

fn simulate(cfg: &ExperimentConfig, model_path: Option<&Path>) -> CliResult<PointSourceModel> {
    let model = match model_path {
        Some(p) => load_model(p)?,
        None => random_model_within(
            cfg.k,
            cfg.min_separation(),
            cfg.kernel_sigma,
            cfg.max_radius,
            &mut StreamRng::new(cfg.seed, Stream::Model),
        )
        .map_err(config_error)?,
    };
    let sim = Simulation::new(
        model.clone(),
        cfg.n_images,
        cfg.half_width(),
        cfg.delta,
        cfg.snr_value(),
        cfg.seed,
    )?;
    log::info!(
        "simulating {} images of {}x{} px, noise sigma {:e}",
        sim.n_images,
        2 * sim.half_width + 1,
        2 * sim.half_width + 1,
        sim.noise_sigma
    );
    let out = &cfg.output_dir;
    write_stack(&out.join(STACK_FILE), &sim, cfg.seed)?;
    write_json(&out.join(MODEL_FILE), &model)?;
    snapshot(cfg, "simulate")?;

    let (clean, noise): (Vec<f64>, Vec<f64>) = (0..sim.n_images)
        .into_par_iter()
        .map(|i| {
            let c = sim.clean_image(i);
            let n = sim.image(i);
            let np = c.pixels().iter().zip(n.pixels()).map(|(a, b)| (b - a) * (b - a)).sum::<f64>()
                / c.pixels().len() as f64;
            (c.power(), np)
        })
        .unzip();
    let clean = clean.iter().sum::<f64>() / sim.n_images as f64;
    let noise = noise.iter().sum::<f64>() / sim.n_images as f64;
    println!("wrote {} images to {}", sim.n_images, out.join(STACK_FILE).display());
    println!("noise sigma: {:e}", sim.noise_sigma);
    if noise > 0.0 {
        println!(
            "empirical SNR: {:.6e} (log10 {:.4}), requested {:.6e}",
            clean / noise,
            (clean / noise).log10(),
            sim.requested_snr
        );
    } else {
        println!("empirical SNR: inf (noiseless)");
    }
    Ok(model)
}

fn features(cfg: &ExperimentConfig, stack: &Path) -> CliResult<(FeatureCurve, FeatureCurve)> {
    let source = StackFile::open(stack)?;
    let grid = cfg.polar_grid()?;
    grid.check_nyquist(source.delta())?;
    let (b1, b2) = accumulate(
        &source,
        &grid,
        AccumulateOptions {
            debias: cfg.debias,
            ..AccumulateOptions::default()
        },
    )?;
    let t = uniform_t_grid(cfg.t_max, cfg.n_t);
    let mu = sine_transform(&b1, &t);
    let c = sine_transform(&b2, &t);
    let out = &cfg.output_dir;
    write_curve_csv(&out.join("b1.csv"), "k", b1.k(), &b1.values)?;
    write_curve_csv(&out.join("b2.csv"), "k", b2.k(), &b2.values)?;
    write_curve_csv(&out.join("mu.csv"), "t", &mu.t, &mu.values)?;
    write_curve_csv(&out.join("c.csv"), "t", &c.t, &c.values)?;
    let h = source.header();
    write_json(
        &out.join("features.json"),
        &FeatureMetadata {
            n_images: h.n_images,
            delta: h.delta,
            half_width: h.half_width,
            n_k: grid.n_k(),
            n_phi: grid.n_phi(),
            cutoff: grid.cutoff,
            noise_sigma: h.noise_sigma,
            seed: h.seed,
            debias: b2.noise_bias > 0.0,
            t_max: cfg.t_max,
            n_t: cfg.n_t,
        },
    )?;
    snapshot(cfg, "features")?;
    println!("estimated features from {} images into {}", h.n_images, out.display());
    Ok((mu, c))
}

fn read_features(dir: &Path) -> CliResult<(FeatureCurve, FeatureCurve)> {
    let curve = |name: &str, kind| -> CliResult<FeatureCurve> {
        let (t, values) = read_curve_csv(&dir.join(name))?;
        Ok(FeatureCurve { kind, t, values })
    };
    Ok((curve("mu.csv", FeatureKind::Mean)?, curve("c.csv", FeatureKind::Autocorrelation)?))
}

/// Write the analytic curves on the config t-grid and print the relative
/// errors of the mass-normalized estimates.
fn compare_with_analytic(
    cfg: &ExperimentConfig,
    model: &PointSourceModel,
    mu: &FeatureCurve,
    c: &FeatureCurve,
) -> CliResult<(f64, f64)> {
    let t = uniform_t_grid(cfg.t_max, cfg.n_t);
    let (mu_true, c_true) = analytic_features(model, &t);
    let mu_err = feature_error(&mu.normalized_to(mu_true.mass()), &mu_true)?;
    let c_err = feature_error(&c.normalized_to(c_true.mass()), &c_true)?;
    let out = &cfg.output_dir;
    write_curve_csv(&out.join("mu_analytic.csv"), "t", &t, &mu_true.values)?;
    write_curve_csv(&out.join("c_analytic.csv"), "t", &t, &c_true.values)?;
    println!("mu relative error: {mu_err:.6}");
    println!("C relative error: {c_err:.6}");
    Ok((mu_err, c_err))
}

fn outside_grid(grid: &VoxelGrid, model: &PointSourceModel) -> Vec<[f64; 3]> {
    model
        .centers
        .iter()
        .filter(|c| grid.nearest(**c).is_none())
        .copied()
        .collect()
}

fn reconstruct(
    cfg: &ExperimentConfig,
    mu: &FeatureCurve,
    c: &FeatureCurve,
    truth: Option<&PointSourceModel>,
) -> CliResult<Vec<[f64; 3]>> {
    let grid = cfg.voxel_grid()?;
    if let Some(model) = truth {
        for p in outside_grid(&grid, model) {
            eprintln!(
                "warning: true center {p:?} falls outside the reconstruction grid (extent {})",
                grid.extent()
            );
        }
    }
    let ops = DistanceOperators::new(grid, cfg.bin_width()?)?;
    let mut targets = discretize_targets(mu, c, &ops, cfg.k)?;
    if let Some(eps) = cfg.support_mask {
        targets = targets.masked(eps);
    }
    let r_sum: f64 = targets.radial.iter().sum();
    assert!((r_sum - cfg.k as f64).abs() <= 1e-9 * cfg.k as f64, "radial targets must sum to K");
    println!("radial targets sum to {r_sum:.9} (K = {})", cfg.k);

    let sol = solve(&targets, &ops, &cfg.solver_options())?;
    let centers = extract_centers(&sol.density, &grid, cfg.k)?;
    let out = &cfg.output_dir;
    write_density(&out.join("density.uvtv"), &sol.density, &grid)?;
    write_trace_csv(&out.join("trace.csv"), &sol.trace)?;
    write_json(
        &out.join(CENTERS_FILE),
        &CentersFile {
            centers: centers.clone(),
            objective: Some(sol.objective),
            best_restart: Some(sol.best_restart),
            restart_objectives: sol.restart_objectives.clone(),
        },
    )?;
    snapshot(cfg, "reconstruct")?;
    println!(
        "objective {:.6e} from restart {} of {}",
        sol.objective,
        sol.best_restart,
        sol.restart_objectives.len()
    );
    Ok(centers)
}

fn evaluate(cfg: &ExperimentConfig, centers: &Path, model: &Path) -> CliResult<EvalReport> {
    let est: CentersFile = read_json(centers)?;
    let truth: CentersFile = read_json(model)?;
    let voxel = cfg.voxel_grid()?.voxel_size;
    let report = EvalReport::new(&est.centers, &truth.centers, voxel, cfg.threshold)?;
    write_json(&cfg.output_dir.join("evaluation.json"), &report)?;
    snapshot(cfg, "evaluate")?;
    println!(
        "rmsd {:.6} voxels (threshold {}): {}",
        report.rmsd,
        report.threshold,
        if report.success { "success" } else { "failure" }
    );
    Ok(report)
}

fn ablate(cfg: &ExperimentConfig, axis: AxisArg, values: &[f64], replicates: usize) -> CliResult<()> {
    let axis = match axis {
        AxisArg::L => SweepAxis::L,
        AxisArg::Delta => SweepAxis::Delta,
        AxisArg::Grid => SweepAxis::Grid,
        AxisArg::Snr => SweepAxis::Snr,
    };
    let rows = run_sweep(cfg, axis, values, replicates).map_err(|e| match e {
        Error::InvalidParameter(_) | Error::AboveNyquist { .. } => config_error(e),
        e => e.into(),
    })?;
    let path: PathBuf = cfg.output_dir.join(format!("ablation_{axis}.csv"));
    write_sweep_csv(&path, &rows)?;
    snapshot(cfg, &format!("ablation_{axis}"))?;
    println!("{axis:>12}  median mu err  median C err");
    for (v, mu, c) in median_errors(&rows) {
        println!("{v:>12}  {mu:>13.6}  {c:>12.6}");
    }
    println!("wrote {}", path.display());
    Ok(())
}
