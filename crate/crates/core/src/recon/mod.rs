//! Voxel reconstruction from bin-integrated features.
//!
//! The density `phi` on a voxel grid is fit to the autocorrelation targets
//! `C_j = phi^T E_j phi` under the radial equalities `g_j^T phi = r_j` and
//! `phi >= 0`, then reduced to point centers.

mod extract;
mod grid;
mod projection;
mod solver;
mod targets;

use serde::{Deserialize, Serialize};

pub use extract::{extract_centers, EXTRACTION_THRESHOLD};
pub use grid::{DistanceOperators, VoxelGrid};
pub use projection::{project_constraints, project_simplex};
pub use solver::{
    gradient, objective, pgd_solve, random_feasible, solve, spectral_init, spectral_init_traced, RunResult,
    SolveResult, SolverOptions, TraceEntry, POWER_ITERATIONS,
};
pub use targets::{discretize_targets, Targets};

/// Nonnegative voxel values, indexed like [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    pub values: Vec<f64>,
}

impl DensityVector {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Indicator density with unit mass at the voxel nearest each center.
pub fn indicator(centers: &[[f64; 3]], grid: &VoxelGrid) -> crate::Result<DensityVector> {
    let mut values = vec![0.0; grid.len()];
    for c in centers {
        let i = grid
            .nearest(*c)
            .ok_or_else(|| crate::Error::param(format!("center {c:?} lies outside the voxel grid")))?;
        values[i] += 1.0;
    }
    Ok(DensityVector { values })
}
