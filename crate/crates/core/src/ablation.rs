//! Feature-quality sweeps over one acquisition parameter.
//!
//! The model is drawn once from the master seed and held fixed; each
//! replicate gets fresh rotations and noise from its own derived seed.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::features::{
    accumulate, analytic_features, feature_error, sine_transform, uniform_t_grid, AccumulateOptions,
};
use crate::forward::Simulation;
use crate::model::{random_model_within, PointSourceModel};
use crate::rng::{derive_seed, Stream, StreamRng};

pub const DEFAULT_REPLICATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Number of images.
    L,
    /// Pixel width at a fixed field of view.
    Delta,
    /// Polar grid size, `N_k = N_phi`.
    Grid,
    /// `log10` of the SNR power ratio; `inf` is noiseless.
    Snr,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "n_images" => Ok(SweepAxis::L),
            "delta" => Ok(SweepAxis::Delta),
            "grid" => Ok(SweepAxis::Grid),
            "snr" => Ok(SweepAxis::Snr),
            _ => Err(Error::param(format!(
                "unknown sweep axis {s:?} (expected L, delta, grid or snr)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::L => "L",
            SweepAxis::Delta => "delta",
            SweepAxis::Grid => "grid",
            SweepAxis::Snr => "snr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    pub mu_error: f64,
    pub c_error: f64,
}

/// The config of one sweep cell.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let whole = |v: f64, what: &str| {
        if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
            Ok(v as usize)
        } else {
            Err(Error::param(format!("{what} must be a positive integer, got {value}")))
        }
    };
    match axis {
        SweepAxis::L => cfg.n_images = whole(value, "L")?,
        SweepAxis::Grid => {
            let n = whole(value, "grid size")?;
            cfg.n_k = n;
            cfg.n_phi = n;
        }
        SweepAxis::Delta => {
            if !(value > 0.0) {
                return Err(Error::param(format!("delta must be positive, got {value}")));
            }
            let fov = (2 * base.half_width() + 1) as f64 * base.delta;
            let side = (fov / value).round().max(3.0) as usize;
            cfg.half_width = Some((side - 1) / 2);
            cfg.delta = value;
        }
        SweepAxis::Snr => {
            cfg.snr = if value == f64::INFINITY {
                None
            } else if value.is_finite() {
                Some(10f64.powf(value))
            } else {
                return Err(Error::param(format!("log10 SNR must be finite or inf, got {value}")));
            };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The fixed model of a sweep.
pub fn sweep_model(cfg: &ExperimentConfig) -> Result<PointSourceModel> {
    random_model_within(
        cfg.k,
        cfg.min_separation(),
        cfg.kernel_sigma,
        cfg.max_radius,
        &mut StreamRng::new(cfg.seed, Stream::Model),
    )
}

/// Relative errors of the mass-normalized estimated `mu` and `C` against the
/// analytic curves, for one simulated stack.
pub fn feature_errors(model: &PointSourceModel, cfg: &ExperimentConfig, seed: u64) -> Result<(f64, f64)> {
    let sim = Simulation::new(
        model.clone(),
        cfg.n_images,
        cfg.half_width(),
        cfg.delta,
        cfg.snr_value(),
        seed,
    )?;
    let grid = cfg.polar_grid()?;
    let (b1, b2) = accumulate(
        &sim,
        &grid,
        AccumulateOptions {
            debias: cfg.debias,
            ..AccumulateOptions::default()
        },
    )?;
    let t = uniform_t_grid(cfg.t_max, cfg.n_t);
    let (mu, c) = analytic_features(model, &t);
    let mu_est = sine_transform(&b1, &t).normalized_to(mu.mass());
    let c_est = sine_transform(&b2, &t).normalized_to(c.mass());
    Ok((feature_error(&mu_est, &mu)?, feature_error(&c_est, &c)?))
}

/// Every `(value, replicate)` cell in row-major order.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    replicates: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || replicates == 0 {
        return Err(Error::param("a sweep needs at least one value and one replicate"));
    }
    let model = sweep_model(base)?;
    let cells: Vec<(f64, ExperimentConfig, u64)> = values
        .iter()
        .map(|&v| apply_axis(base, axis, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|(v, c)| {
            (0..replicates as u64).map(move |r| (v, c.clone(), derive_seed(base.seed, Stream::Replicate(r))))
        })
        .collect();
    cells
        .par_iter()
        .map(|(v, cfg, seed)| {
            let (mu_error, c_error) = feature_errors(&model, cfg, *seed)?;
            log::info!("{axis}={v}  seed={seed}  mu={mu_error:.4}  C={c_error:.4}");
            Ok(SweepRow {
                axis_value: *v,
                seed: *seed,
                mu_error,
                c_error,
            })
        })
        .collect()
}

/// Per-value medians of `(mu_error, c_error)`, in first-seen value order.
pub fn median_errors(rows: &[SweepRow]) -> Vec<(f64, f64, f64)> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.iter().any(|v| v.to_bits() == r.axis_value.to_bits()) {
            values.push(r.axis_value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.axis_value.to_bits() == v.to_bits()).collect();
            (
                v,
                median(cell.iter().map(|r| r.mu_error).collect()),
                median(cell.iter().map(|r| r.c_error).collect()),
            )
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("axis_value,seed,mu_error,c_error\n");
    for r in rows {
        out.push_str(&format!("{:e},{},{:e},{:e}\n", r.axis_value, r.seed, r.mu_error, r.c_error));
    }
    crate::io::write_text(path, &out)
}
