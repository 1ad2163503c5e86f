//! Alignment of recovered centers to a reference and success scoring.

use itertools::Itertools;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Permutation search is exhaustive, so point sets are capped.
pub const MAX_ALIGN_POINTS: usize = 8;

/// Default RMSD threshold, in voxel units.
pub const DEFAULT_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Row-major orthogonal matrix taking estimated points onto the reference.
    pub orthogonal: [[f64; 3]; 3],
    /// `permutation[i]` is the estimated point matched to reference point `i`.
    pub permutation: Vec<usize>,
    pub rmsd: f64,
}

impl Alignment {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.orthogonal[r][c])
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q: nalgebra::Vector3<f64> = self.matrix() * nalgebra::Vector3::from(p);
        [q[0], q[1], q[2]]
    }
}

/// Best fit of `est` onto `truth` over orthogonal maps (reflections
/// included, no translation) and point permutations.
///
/// Ties between permutations go to the lexicographically smallest one.
pub fn align(est: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<Alignment> {
    if est.len() != truth.len() {
        return Err(Error::CountMismatch {
            est: est.len(),
            truth: truth.len(),
        });
    }
    let k = est.len();
    if k > MAX_ALIGN_POINTS {
        return Err(Error::TooManyPoints {
            k,
            max: MAX_ALIGN_POINTS,
        });
    }
    if k == 0 {
        return Ok(Alignment {
            orthogonal: identity(),
            permutation: Vec::new(),
            rmsd: 0.0,
        });
    }
    let mut best: Option<Alignment> = None;
    for perm in (0..k).permutations(k) {
        let (q, rmsd) = procrustes(&perm.iter().map(|&i| est[i]).collect::<Vec<_>>(), truth);
        if best.as_ref().map_or(true, |b| rmsd < b.rmsd) {
            best = Some(Alignment {
                orthogonal: [
                    [q[(0, 0)], q[(0, 1)], q[(0, 2)]],
                    [q[(1, 0)], q[(1, 1)], q[(1, 2)]],
                    [q[(2, 0)], q[(2, 1)], q[(2, 2)]],
                ],
                permutation: perm,
                rmsd,
            });
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Orthogonal `Q` minimizing `sum |Q x_i - y_i|^2`, and the resulting RMSD.
pub fn procrustes(x: &[[f64; 3]], y: &[[f64; 3]]) -> (Matrix3<f64>, f64) {
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in x.iter().zip(y) {
        for r in 0..3 {
            for c in 0..3 {
                h[(r, c)] += b[r] * a[c];
            }
        }
    }
    let svd = h.svd(true, true);
    let q: Matrix3<f64> = svd.u.expect("u requested") * svd.v_t.expect("v requested");
    let mut ss = 0.0;
    for (a, b) in x.iter().zip(y) {
        let qa: nalgebra::Vector3<f64> = q * nalgebra::Vector3::from(*a);
        ss += (0..3).map(|d| (qa[d] - b[d]).powi(2)).sum::<f64>();
    }
    (q, (ss / x.len() as f64).sqrt())
}

/// Success iff `rmsd < threshold`.
pub fn classify(alignment: &Alignment, threshold: f64) -> bool {
    alignment.rmsd < threshold
}

/// Points expressed in voxel units.
pub fn to_voxel_units(points: &[[f64; 3]], voxel_size: f64) -> Vec<[f64; 3]> {
    points.iter().map(|p| p.map(|v| v / voxel_size)).collect()
}

fn identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// Serialized outcome of one evaluation, distances in voxel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub estimated: Vec<[f64; 3]>,
    pub truth: Vec<[f64; 3]>,
    pub voxel_size: f64,
    pub permutation: Vec<usize>,
    pub orthogonal: [[f64; 3]; 3],
    pub rmsd: f64,
    pub threshold: f64,
    pub success: bool,
}

impl EvalReport {
    /// Align in voxel units and score against `threshold`.
    pub fn new(est: &[[f64; 3]], truth: &[[f64; 3]], voxel_size: f64, threshold: f64) -> Result<Self> {
        if !(voxel_size > 0.0) {
            return Err(Error::param("voxel size must be positive"));
        }
        let a = align(&to_voxel_units(est, voxel_size), &to_voxel_units(truth, voxel_size))?;
        Ok(EvalReport {
            estimated: est.to_vec(),
            truth: truth.to_vec(),
            voxel_size,
            success: classify(&a, threshold),
            permutation: a.permutation,
            orthogonal: a.orthogonal,
            rmsd: a.rmsd,
            threshold,
        })
    }
}
