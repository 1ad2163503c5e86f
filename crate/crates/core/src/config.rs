//! Flat experiment configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_THRESHOLD;
use crate::features::{default_t_max, DEFAULT_T_SAMPLES};
use crate::io::{read_json, write_json};
use crate::polar::{default_cutoff, make_polar_grid, PolarGrid};
use crate::recon::{SolverOptions, VoxelGrid};

/// Every key of a run. Lengths are in box units (the model lives in
/// `[-0.5, 0.5]^3`), frequencies in radians per box unit, and SNR is a
/// power ratio. Optional keys fall back to the documented derived default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of point sources.
    pub k: usize,
    /// Standard deviation of each Gaussian source.
    pub kernel_sigma: f64,
    /// Minimum center distance; default `4 * kernel_sigma`.
    pub min_separation: Option<f64>,
    /// Optional bound on center radii.
    pub max_radius: Option<f64>,

    /// Number of projection images `L`.
    pub n_images: usize,
    /// Image half-width `M`; default is the smallest with `(2M+1) delta >= sqrt(3)`.
    pub half_width: Option<usize>,
    /// Pixel width.
    pub delta: f64,
    /// Clean power over noise power; `null` means noiseless.
    pub snr: Option<f64>,

    pub n_k: usize,
    pub n_phi: usize,
    /// Radial frequency cutoff; default `pi / (2 delta)`.
    pub cutoff: Option<f64>,
    /// Samples of the t-grid.
    pub n_t: usize,
    pub t_max: f64,
    /// Subtract the noise power from `B2`; default on whenever the stack is noisy.
    pub debias: Option<bool>,

    /// Reconstruction grid half-width `M_r`.
    pub recon_half_width: usize,
    /// Voxel edge; default `0.5 / M_r`.
    pub voxel_size: Option<f64>,
    /// Distance-bin width; default half a voxel.
    pub bin_width: Option<f64>,
    /// Drop radial bins lighter than `eps * K / bins` before solving.
    pub support_mask: Option<f64>,
    pub max_iters: usize,
    pub step_size: f64,
    pub backtrack: f64,
    pub tolerance: f64,
    pub restarts: usize,

    /// RMSD success threshold in voxel units.
    pub threshold: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        ExperimentConfig {
            k: 3,
            kernel_sigma: 0.05,
            min_separation: None,
            max_radius: None,
            n_images: 2000,
            half_width: None,
            delta: 0.01,
            snr: None,
            n_k: 200,
            n_phi: 200,
            cutoff: None,
            n_t: DEFAULT_T_SAMPLES,
            t_max: default_t_max(),
            debias: None,
            recon_half_width: 5,
            voxel_size: None,
            bin_width: None,
            support_mask: None,
            max_iters: solver.max_iters,
            step_size: solver.step_size,
            backtrack: solver.backtrack,
            tolerance: solver.tolerance,
            restarts: solver.restarts,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Settings of the full-scale reconstruction experiment.
    pub fn fig3_preset() -> Self {
        ExperimentConfig {
            k: 5,
            n_images: 30_000,
            delta: 0.005,
            snr: Some(10f64.powf(-1.2)),
            n_k: 400,
            n_phi: 400,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation.unwrap_or(4.0 * self.kernel_sigma)
    }

    pub fn half_width(&self) -> usize {
        self.half_width.unwrap_or_else(|| auto_half_width(self.delta))
    }

    /// Noise target as a power ratio, infinity when noiseless.
    pub fn snr_value(&self) -> f64 {
        self.snr.unwrap_or(f64::INFINITY)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff.unwrap_or_else(|| default_cutoff(self.delta))
    }

    pub fn polar_grid(&self) -> Result<PolarGrid> {
        let g = make_polar_grid(self.n_k, self.n_phi, self.cutoff())?;
        g.check_nyquist(self.delta)?;
        Ok(g)
    }

    pub fn voxel_grid(&self) -> Result<VoxelGrid> {
        if self.recon_half_width == 0 {
            return Err(Error::param("recon_half_width must be at least 1"));
        }
        VoxelGrid::new(
            self.recon_half_width,
            self.voxel_size.unwrap_or(0.5 / self.recon_half_width as f64),
        )
    }

    pub fn bin_width(&self) -> Result<f64> {
        Ok(self.bin_width.unwrap_or(self.voxel_grid()?.voxel_size / 2.0))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.max_iters,
            step_size: self.step_size,
            backtrack: self.backtrack,
            tolerance: self.tolerance,
            restarts: self.restarts,
            seed: self.seed,
            ..SolverOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::param(msg.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.kernel_sigma > 0.0) {
            return bad("kernel_sigma must be positive");
        }
        if !(self.min_separation() >= 0.0) {
            return bad("min_separation must be non-negative");
        }
        if self.max_radius.is_some_and(|r| !(r > 0.0)) {
            return bad("max_radius must be positive");
        }
        if self.n_images == 0 {
            return bad("n_images must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if self.half_width() == 0 {
            return bad("half_width must be at least 1");
        }
        if self.snr.is_some_and(|s| !(s > 0.0)) {
            return bad("snr must be positive (omit it for noiseless data)");
        }
        if self.n_t < 2 || !(self.t_max > 0.0) {
            return bad("the t-grid needs n_t >= 2 and t_max > 0");
        }
        if self.support_mask.is_some_and(|e| !(e >= 0.0)) {
            return bad("support_mask must be non-negative");
        }
        if !(self.threshold > 0.0) {
            return bad("threshold must be positive");
        }
        self.polar_grid()?;
        if !(self.bin_width()? > 0.0) {
            return bad("bin_width must be positive");
        }
        self.solver_options().validate()
    }
}

/// Smallest `M` with `(2M+1) delta >= sqrt(3)`, so every projection of the
/// box fits in the field of view.
pub fn auto_half_width(delta: f64) -> usize {
    let side = (3f64.sqrt() / delta).ceil() as usize;
    side.saturating_sub(1).div_ceil(2).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.half_width(), 87);
        assert!((175.0 * c.delta) >= 3f64.sqrt());
        assert!(((2 * 86 + 1) as f64 * c.delta) < 3f64.sqrt());
        assert!((c.min_separation() - 0.2).abs() < 1e-15);
        assert!((c.voxel_grid().unwrap().voxel_size - 0.1).abs() < 1e-15);
        assert!((c.bin_width().unwrap() - 0.05).abs() < 1e-15);
        ExperimentConfig::fig3_preset().validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let c = ExperimentConfig {
            snr: Some(10f64.powf(-0.6)),
            half_width: Some(50),
            ..ExperimentConfig::fig3_preset()
        };
        c.save(&p).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap(), c);

        std::fs::write(&p, r#"{"k": 2, "kernal_sigma": 0.1}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Json { .. })));
        std::fs::write(&p, r#"{"k": 2}"#).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap().k, 2);
    }

    #[test]
    fn rejects_invalid() {
        let c = ExperimentConfig {
            cutoff: Some(1e6),
            ..ExperimentConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::AboveNyquist { .. })));
        let c = ExperimentConfig {
            snr: Some(0.0),
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
