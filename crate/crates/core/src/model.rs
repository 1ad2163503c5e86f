//! Point-source density models and rotations.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Half side of the reconstruction box `[-0.5, 0.5]^3`.
pub const BOX_HALF: f64 = 0.5;

/// Configurations tried by [`random_model`] before giving up.
pub const MAX_REJECTION_DRAWS: usize = 1_000_000;

/// A finite sum of isotropic unit-integral Gaussian blobs.
///
/// All lengths are in box units. The density is
/// `sum_n amplitudes[n] * N(x; centers[n], kernel_sigma^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSourceModel {
    pub centers: Vec<[f64; 3]>,
    pub kernel_sigma: f64,
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl PointSourceModel {
    /// Unit-amplitude model. Fails on an empty center list, a non-positive
    /// width or a center outside the box.
    pub fn new(centers: Vec<[f64; 3]>, kernel_sigma: f64) -> Result<Self> {
        let amplitudes = vec![1.0; centers.len()];
        Self::with_amplitudes(centers, kernel_sigma, amplitudes)
    }

    pub fn with_amplitudes(
        centers: Vec<[f64; 3]>,
        kernel_sigma: f64,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        let model = PointSourceModel {
            centers,
            kernel_sigma,
            amplitudes,
            seed: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::param("model needs at least one source"));
        }
        if !(self.kernel_sigma > 0.0 && self.kernel_sigma.is_finite()) {
            return Err(Error::param(format!(
                "kernel_sigma must be positive, got {}",
                self.kernel_sigma
            )));
        }
        if self.amplitudes.len() != self.centers.len() {
            return Err(Error::param(format!(
                "{} amplitudes for {} centers",
                self.amplitudes.len(),
                self.centers.len()
            )));
        }
        if let Some(a) = self.amplitudes.iter().find(|a| !(**a > 0.0)) {
            return Err(Error::param(format!("amplitude {a} is not positive")));
        }
        for c in &self.centers {
            if c.iter().any(|x| !x.is_finite() || x.abs() > BOX_HALF) {
                return Err(Error::param(format!("center {c:?} lies outside the box")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.amplitudes.iter().sum()
    }

    /// Copy with every center mapped through `rot`.
    pub fn rotated(&self, rot: &Rotation) -> Self {
        let mut out = self.clone();
        for c in out.centers.iter_mut() {
            *c = rot.apply(*c);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: PointSourceModel = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        model
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    matrix: Matrix3<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            matrix: Matrix3::identity(),
        }
    }

    /// Rotation for the quaternion `(w, x, y, z)`; the input is normalized first.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        #[rustfmt::skip]
        let matrix = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y),
        );
        Rotation { matrix }
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Rotation::from_quaternion([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
    }

    /// Wraps a matrix without checking it; see [`Rotation::orthogonality_error`].
    pub fn from_matrix_unchecked(matrix: Matrix3<f64>) -> Self {
        Rotation { matrix }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let v = self.matrix * Vector3::from(x);
        [v[0], v[1], v[2]]
    }

    pub fn transpose(&self) -> Rotation {
        Rotation {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation {
            matrix: self.matrix * other.matrix,
        }
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        ((self.matrix.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    /// Max entry of `R^T R - I`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.matrix.transpose() * self.matrix - Matrix3::identity()).amax()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }
}

/// Haar-distributed rotation from a normalized Gaussian quaternion.
pub fn sample_uniform_rotation(rng: &mut StreamRng) -> Rotation {
    loop {
        let q = [rng.normal(), rng.normal(), rng.normal(), rng.normal()];
        if q.iter().map(|v| v * v).sum::<f64>() > 1e-300 {
            return Rotation::from_quaternion(q);
        }
    }
}

/// `K` uniform centers in the box with all pairwise distances at least
/// `min_separation`, drawn by whole-configuration rejection.
pub fn random_model(
    k: usize,
    min_separation: f64,
    kernel_sigma: f64,
    rng: &mut StreamRng,
) -> Result<PointSourceModel> {
    random_model_within(k, min_separation, kernel_sigma, None, rng)
}

/// Like [`random_model`], optionally also rejecting centers farther than
/// `max_radius` from the origin (keeps projections inside a small field of view).
pub fn random_model_within(
    k: usize,
    min_separation: f64,
    kernel_sigma: f64,
    max_radius: Option<f64>,
    rng: &mut StreamRng,
) -> Result<PointSourceModel> {
    if k == 0 {
        return Err(Error::param("K must be at least 1"));
    }
    if !(min_separation >= 0.0) {
        return Err(Error::param("min_separation must be non-negative"));
    }
    let seed = rng.seed();
    let r2max = max_radius.map(|r| r * r);
    let sep2 = min_separation * min_separation;
    let mut centers = Vec::with_capacity(k);
    'draw: for _ in 0..MAX_REJECTION_DRAWS {
        centers.clear();
        for _ in 0..k {
            let c = [
                rng.uniform_in(-BOX_HALF, BOX_HALF),
                rng.uniform_in(-BOX_HALF, BOX_HALF),
                rng.uniform_in(-BOX_HALF, BOX_HALF),
            ];
            if let Some(r2) = r2max {
                if norm2(c) > r2 {
                    continue 'draw;
                }
            }
            if centers.iter().any(|p| dist2(*p, c) < sep2) {
                continue 'draw;
            }
            centers.push(c);
        }
        let mut model = PointSourceModel::new(centers, kernel_sigma)?;
        model.seed = Some(seed);
        return Ok(model);
    }
    Err(Error::Infeasible {
        k,
        min_separation,
        draws: MAX_REJECTION_DRAWS,
    })
}

/// Sorted radial distances and sorted pairwise distances (`n < m`).
pub fn radial_and_pairwise_distances(model: &PointSourceModel) -> (Vec<f64>, Vec<f64>) {
    let c = &model.centers;
    let mut radial: Vec<f64> = c.iter().map(|x| norm2(*x).sqrt()).collect();
    let mut pairwise = Vec::with_capacity(c.len() * c.len().saturating_sub(1) / 2);
    for n in 0..c.len() {
        for m in n + 1..c.len() {
            pairwise.push(dist2(c[n], c[m]).sqrt());
        }
    }
    radial.sort_by(f64::total_cmp);
    pairwise.sort_by(f64::total_cmp);
    (radial, pairwise)
}

pub(crate) fn norm2(a: [f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm2([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}
