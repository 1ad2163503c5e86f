use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use uvtomo::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "uvtomo", version, about = "Unknown-view tomography of point-source maps")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG also works.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a projection stack from a random or given model.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Use this model instead of drawing one from the seed.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Estimate B1, B2, mu and C from a stack.
    Features {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Stack to read; default `<output_dir>/stack.uvts`.
        #[arg(long)]
        stack: Option<PathBuf>,
        /// Also write the analytic curves of this model and report errors.
        #[arg(long)]
        analytic: Option<PathBuf>,
        /// Score existing `mu.csv`/`c.csv` in this directory instead of
        /// estimating (requires `--analytic`).
        #[arg(long, requires = "analytic")]
        estimates: Option<PathBuf>,
    },
    /// Solve for a voxel density and extract centers.
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory holding `mu.csv` and `c.csv`; default `<output_dir>`.
        #[arg(long, conflicts_with_all = ["stack", "analytic"])]
        features: Option<PathBuf>,
        /// Estimate features from this stack first.
        #[arg(long, conflicts_with = "analytic")]
        stack: Option<PathBuf>,
        /// Use exact features of this model.
        #[arg(long)]
        analytic: Option<PathBuf>,
        /// Ground-truth model, used to check the grid covers every center.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Align estimated centers to a reference model and score the RMSD.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// JSON with a `centers` array (a model file also works).
        #[arg(long)]
        centers: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Sweep one acquisition parameter and record feature errors.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values; for `snr` these are log10 ratios (`inf` is
        /// noiseless). Write `--values=-0.6,inf` when the list starts negative.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = uvtomo::ablation::DEFAULT_REPLICATES)]
        replicates: usize,
    },
    /// simulate, features, reconstruct and evaluate in one run.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Dump one frame of a stack as `u,v,value` CSV.
    ExportFrame {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    #[value(name = "L", alias = "l")]
    L,
    Delta,
    Grid,
    Snr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Defaults.
    Desk,
    /// Full-scale reconstruction settings.
    Fig3,
}

/// Config file plus per-key overrides. Precedence: flag, file, preset.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kernel_sigma: Option<f64>,
    #[arg(long)]
    pub min_separation: Option<f64>,
    #[arg(long)]
    pub max_radius: Option<f64>,

    /// Number of images L.
    #[arg(long, short = 'L')]
    pub n_images: Option<usize>,
    #[arg(long)]
    pub half_width: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Power ratio; `inf` for noiseless.
    #[arg(long, conflicts_with = "log10_snr")]
    pub snr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub log10_snr: Option<f64>,

    #[arg(long)]
    pub n_k: Option<usize>,
    #[arg(long)]
    pub n_phi: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub debias: Option<bool>,

    #[arg(long)]
    pub recon_half_width: Option<usize>,
    #[arg(long)]
    pub voxel_size: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub support_mask: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub backtrack: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,

    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    /// Base config (file or preset) with flag overrides applied, unvalidated.
    pub fn overlay(&self, base: ExperimentConfig) -> ExperimentConfig {
        let mut c = base;
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { c.$f = v.clone(); })*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { c.$f = Some(v.clone()); })*};
        }
        set!(
            k, kernel_sigma, n_images, delta, n_k, n_phi, n_t, t_max, recon_half_width, max_iters,
            step_size, backtrack, tolerance, restarts, threshold, seed, output_dir
        );
        set_opt!(
            min_separation, max_radius, half_width, cutoff, debias, voxel_size, bin_width,
            support_mask
        );
        if let Some(s) = self.snr {
            c.snr = (s != f64::INFINITY).then_some(s);
        }
        if let Some(l) = self.log10_snr {
            c.snr = Some(10f64.powf(l));
        }
        c
    }
}
