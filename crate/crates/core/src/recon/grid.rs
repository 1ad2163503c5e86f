use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cubic voxel grid of `(2M_r+1)^3` voxels centered on the origin.
///
/// Voxel `i` has integer coordinates `(x, y, z)` in `-M_r..=M_r` with `x`
/// fastest, and center `voxel_size * (x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub half_width: usize,
    pub voxel_size: f64,
}

impl VoxelGrid {
    pub fn new(half_width: usize, voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::param("voxel size must be positive"));
        }
        Ok(VoxelGrid {
            half_width,
            voxel_size,
        })
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest coordinate magnitude of a voxel center.
    pub fn extent(&self) -> f64 {
        self.half_width as f64 * self.voxel_size
    }

    pub fn coords(&self, i: usize) -> [i64; 3] {
        let s = self.side();
        let m = self.half_width as i64;
        [
            (i % s) as i64 - m,
            ((i / s) % s) as i64 - m,
            (i / (s * s)) as i64 - m,
        ]
    }

    pub fn index(&self, c: [i64; 3]) -> Option<usize> {
        let m = self.half_width as i64;
        if c.iter().any(|v| v.abs() > m) {
            return None;
        }
        let s = self.side();
        let [x, y, z] = c.map(|v| (v + m) as usize);
        Some(x + s * (y + s * z))
    }

    pub fn center(&self, i: usize) -> [f64; 3] {
        self.coords(i).map(|v| v as f64 * self.voxel_size)
    }

    /// Index of the voxel whose center is nearest to `p`, if inside the grid.
    pub fn nearest(&self, p: [f64; 3]) -> Option<usize> {
        self.index(p.map(|v| (v / self.voxel_size).round() as i64))
    }
}

/// Distance-binned selection operators on a voxel grid.
///
/// `g_j` selects the voxels whose radius rounds to bin `j`, and `E_j` the
/// ordered voxel pairs whose separation rounds to bin `j`, with bin width
/// `delta_t`. Pair bins depend only on the coordinate offset, so `E` is held
/// as one stencil over offsets rather than as explicit pair lists.
#[derive(Debug, Clone)]
pub struct DistanceOperators {
    grid: VoxelGrid,
    delta_t: f64,
    n_bins: usize,
    radial_bin: Vec<u32>,
    shells: Vec<Vec<u32>>,
    keys: Vec<i64>,
    stencil: Vec<u32>,
    origin: i64,
    pair_counts: Vec<u64>,
}

impl DistanceOperators {
    pub fn new(grid: VoxelGrid, delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(Error::param("distance bin width must be positive"));
        }
        let m = grid.half_width as i64;
        let n = grid.len();
        let bin_of = |c: [i64; 3]| -> u32 {
            let d2 = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) as f64;
            (d2.sqrt() * grid.voxel_size / delta_t).round() as u32
        };

        let radial_bin: Vec<u32> = (0..n).map(|i| bin_of(grid.coords(i))).collect();

        // offsets span -2M..=2M per axis
        let span = 4 * m + 1;
        let mut stencil = vec![0u32; (span * span * span) as usize];
        let mut pair_counts: Vec<u64> = Vec::new();
        let side = grid.side() as i64;
        for dz in -2 * m..=2 * m {
            for dy in -2 * m..=2 * m {
                for dx in -2 * m..=2 * m {
                    let b = bin_of([dx, dy, dz]);
                    let at = ((dz + 2 * m) * span + (dy + 2 * m)) * span + (dx + 2 * m);
                    stencil[at as usize] = b;
                    let mult = ((side - dx.abs()) * (side - dy.abs()) * (side - dz.abs())) as u64;
                    if pair_counts.len() <= b as usize {
                        pair_counts.resize(b as usize + 1, 0);
                    }
                    pair_counts[b as usize] += mult;
                }
            }
        }
        let n_bins = pair_counts.len();
        let mut shells = vec![Vec::new(); n_bins];
        for (i, &b) in radial_bin.iter().enumerate() {
            shells[b as usize].push(i as u32);
        }
        let keys = (0..n)
            .map(|i| {
                let [x, y, z] = grid.coords(i);
                (z * span + y) * span + x
            })
            .collect();
        let origin = ((2 * m) * span + 2 * m) * span + 2 * m;

        let ops = DistanceOperators {
            grid,
            delta_t,
            n_bins,
            radial_bin,
            shells,
            keys,
            stencil,
            origin,
            pair_counts,
        };
        assert_eq!(
            ops.pair_counts.iter().sum::<u64>(),
            (n as u64) * (n as u64),
            "pair bins must partition all ordered pairs"
        );
        assert_eq!(ops.shells.iter().map(Vec::len).sum::<usize>(), n, "radial bins must partition voxels");
        assert_eq!(ops.pair_counts[0], n as u64, "bin 0 must hold exactly the diagonal");
        Ok(ops)
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Number of distance bins; radial bins use a prefix of the same range.
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_voxels(&self) -> usize {
        self.radial_bin.len()
    }

    /// Bin centers `j * delta_t`.
    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|j| j as f64 * self.delta_t).collect()
    }

    pub fn radial_bin(&self, i: usize) -> usize {
        self.radial_bin[i] as usize
    }

    /// Voxels of radial bin `j` (the support of `g_j`).
    pub fn shell(&self, j: usize) -> &[u32] {
        &self.shells[j]
    }

    pub fn shells(&self) -> &[Vec<u32>] {
        &self.shells
    }

    pub fn pair_bin(&self, i: usize, l: usize) -> usize {
        self.stencil[(self.keys[i] - self.keys[l] + self.origin) as usize] as usize
    }

    /// Nonzero count of `E_j`.
    pub fn pair_count(&self, j: usize) -> u64 {
        self.pair_counts[j]
    }

    /// Explicit ordered pairs of `E_j`. Quadratic in the grid size.
    pub fn pairs(&self, j: usize) -> Vec<(u32, u32)> {
        let n = self.n_voxels();
        let mut out = Vec::with_capacity(self.pair_counts[j] as usize);
        for i in 0..n {
            for l in 0..n {
                if self.pair_bin(i, l) == j {
                    out.push((i as u32, l as u32));
                }
            }
        }
        out
    }

    /// `phi^T E_j phi` for every bin.
    pub fn quadratic_forms(&self, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.n_voxels());
        let support: Vec<(i64, f64)> = phi
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (self.keys[i], *v))
            .collect();
        let mut q = vec![0.0; self.n_bins];
        for (a, &(ki, vi)) in support.iter().enumerate() {
            q[0] += vi * vi;
            for &(kl, vl) in &support[..a] {
                let b = self.stencil[(ki - kl + self.origin) as usize] as usize;
                q[b] += 2.0 * vi * vl;
            }
        }
        q
    }

    /// `(sum_j w_j E_j) phi`, evaluated on `rows` only (others left zero).
    pub fn weighted_apply(&self, w: &[f64], phi: &[f64], rows: Option<&[u32]>) -> Vec<f64> {
        assert_eq!(w.len(), self.n_bins);
        assert_eq!(phi.len(), self.n_voxels());
        let support: Vec<(i64, f64)> = phi
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(l, v)| (self.origin - self.keys[l], *v))
            .collect();
        let row = |i: usize| -> f64 {
            let ki = self.keys[i];
            support
                .iter()
                .map(|&(kl, vl)| w[self.stencil[(ki + kl) as usize] as usize] * vl)
                .sum()
        };
        let mut out = vec![0.0; self.n_voxels()];
        match rows {
            Some(rows) => rows.iter().for_each(|&i| out[i as usize] = row(i as usize)),
            None => out.iter_mut().enumerate().for_each(|(i, o)| *o = row(i)),
        }
        out
    }

    /// `E_j phi`.
    pub fn apply_bin(&self, j: usize, phi: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_bins];
        w[j] = 1.0;
        self.weighted_apply(&w, phi, None)
    }
}
