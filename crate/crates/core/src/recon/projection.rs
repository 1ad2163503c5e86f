use super::grid::DistanceOperators;
use super::DensityVector;

/// Euclidean projection onto `{x >= 0, sum x = mass}` by the sorted-threshold
/// method. A nonpositive `mass` maps to zeros.
pub fn project_simplex(v: &[f64], mass: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    if !(mass > 0.0) {
        return vec![0.0; v.len()];
    }
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - mass) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projection onto the radial constraints `g_j^T phi = r_j`, `phi >= 0`.
///
/// Every voxel lies in exactly one radial bin, so the joint projection splits
/// into one scaled-simplex projection per bin.
pub fn project_constraints(phi: &[f64], radial: &[f64], ops: &DistanceOperators) -> DensityVector {
    assert_eq!(phi.len(), ops.n_voxels());
    let mut out = vec![0.0; phi.len()];
    let mut sub = Vec::new();
    for (j, shell) in ops.shells().iter().enumerate() {
        let r = radial.get(j).copied().unwrap_or(0.0);
        if shell.is_empty() || r <= 0.0 {
            continue;
        }
        sub.clear();
        sub.extend(shell.iter().map(|&i| phi[i as usize]));
        for (&i, x) in shell.iter().zip(project_simplex(&sub, r)) {
            out[i as usize] = x;
        }
    }
    DensityVector { values: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_checked_cases() {
        assert_eq!(project_simplex(&[-1.0, 2.0], 1.0), vec![0.0, 1.0]);
        assert_eq!(project_simplex(&[0.5, 0.5], 1.0), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[0.0, 0.0], 1.0), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[3.0], 2.0), vec![2.0]);
        assert_eq!(project_simplex(&[3.0, 1.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn feasible_point_is_fixed() {
        let v = [0.1, 0.0, 0.3, 0.6];
        let p = project_simplex(&v, 1.0);
        for (a, b) in v.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
