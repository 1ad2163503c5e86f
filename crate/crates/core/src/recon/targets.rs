use serde::{Deserialize, Serialize};

use super::grid::DistanceOperators;
use crate::error::{Error, Result};
use crate::features::{FeatureCurve, FeatureKind};
use crate::quadrature::integrate_linear;

/// Bin-integrated feature masses: `radial[j]` for `g_j`, `pair[j]` for `E_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub k: usize,
    pub radial: Vec<f64>,
    pub pair: Vec<f64>,
}

impl Targets {
    /// Targets produced by a known density, so that it is an exact solution.
    pub fn from_density(phi: &[f64], ops: &DistanceOperators) -> Targets {
        let mut radial = vec![0.0; ops.n_bins()];
        for (i, v) in phi.iter().enumerate() {
            radial[ops.radial_bin(i)] += v;
        }
        Targets {
            k: phi.iter().sum::<f64>().round() as usize,
            radial,
            pair: ops.quadratic_forms(phi),
        }
    }

    /// Radial bins that carry mass and are therefore free in the solver.
    pub fn active_bins(&self) -> Vec<bool> {
        self.radial.iter().map(|r| *r > 0.0).collect()
    }

    /// Drop radial bins with less than `eps * K / T_b` mass and restore the
    /// total to `K`.
    pub fn masked(&self, eps: f64) -> Targets {
        let floor = eps * self.k as f64 / self.radial.len() as f64;
        let mut radial: Vec<f64> = self
            .radial
            .iter()
            .map(|&r| if r < floor { 0.0 } else { r })
            .collect();
        rescale(&mut radial, self.k as f64);
        Targets {
            k: self.k,
            radial,
            pair: self.pair.clone(),
        }
    }
}

/// Integrate `mu` and `C` over every distance bin `[(j-1/2) dt, (j+1/2) dt]`,
/// clamp negatives to zero and rescale so that `sum r = K` and `sum C = K^2`.
///
/// Radial bins that contain no voxel get no mass.
pub fn discretize_targets(
    mu: &FeatureCurve,
    c: &FeatureCurve,
    ops: &DistanceOperators,
    k: usize,
) -> Result<Targets> {
    if k == 0 {
        return Err(Error::param("number of sources must be positive"));
    }
    if mu.kind != FeatureKind::Mean || c.kind != FeatureKind::Autocorrelation {
        return Err(Error::param("expected a mean feature and an autocorrelation feature"));
    }
    let dt = ops.delta_t();
    let bin_mass = |curve: &FeatureCurve, j: usize| {
        let lo = ((j as f64 - 0.5) * dt).max(0.0);
        let hi = (j as f64 + 0.5) * dt;
        integrate_linear(&curve.t, &curve.values, lo, hi).max(0.0)
    };
    let n = ops.n_bins();
    let mut radial: Vec<f64> = (0..n)
        .map(|j| if ops.shell(j).is_empty() { 0.0 } else { bin_mass(mu, j) })
        .collect();
    let mut pair: Vec<f64> = (0..n).map(|j| bin_mass(c, j)).collect();
    if !rescale(&mut radial, k as f64) || !rescale(&mut pair, (k * k) as f64) {
        return Err(Error::ZeroDensity);
    }
    Ok(Targets { k, radial, pair })
}

fn rescale(v: &mut [f64], total: f64) -> bool {
    let s: f64 = v.iter().sum();
    if s <= 0.0 || !s.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x *= total / s);
    true
}
