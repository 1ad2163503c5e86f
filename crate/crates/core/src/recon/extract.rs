use std::collections::VecDeque;

use super::grid::VoxelGrid;
use super::DensityVector;
use crate::error::{Error, Result};

/// Fraction of the peak value below which voxels are ignored.
pub const EXTRACTION_THRESHOLD: f64 = 0.2;

const KMEANS_ITERS: usize = 100;

#[derive(Debug, Clone)]
struct Blob {
    voxels: Vec<usize>,
    mass: f64,
    min_index: usize,
}

impl Blob {
    fn new(voxels: Vec<usize>, phi: &[f64]) -> Blob {
        let mass = voxels.iter().map(|&i| phi[i]).sum();
        let min_index = voxels.iter().copied().min().unwrap_or(usize::MAX);
        Blob {
            voxels,
            mass,
            min_index,
        }
    }

    fn centroid(&self, phi: &[f64], grid: &VoxelGrid) -> [f64; 3] {
        let mut c = [0.0; 3];
        let mut m = 0.0;
        for &i in &self.voxels {
            let p = grid.center(i);
            for d in 0..3 {
                c[d] += phi[i] * p[d];
            }
            m += phi[i];
        }
        c.map(|v| v / m)
    }
}

/// Mass-weighted centroids of the `k` heaviest 26-connected blobs above
/// `0.2 * max(phi)`.
///
/// Blobs are ranked by mass, then by smallest voxel index. With fewer than
/// `k` blobs, the heaviest splittable blob is divided by weighted 2-means
/// until `k` exist; once only single voxels remain, the heaviest is counted
/// twice.
pub fn extract_centers(phi: &DensityVector, grid: &VoxelGrid, k: usize) -> Result<Vec<[f64; 3]>> {
    let v = &phi.values;
    if v.len() != grid.len() {
        return Err(Error::param(format!(
            "density has {} values for a grid of {} voxels",
            v.len(),
            grid.len()
        )));
    }
    if v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::param("density must be finite and nonnegative"));
    }
    let max = v.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::ZeroDensity);
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let cut = EXTRACTION_THRESHOLD * max;
    let mut blobs = components(v, grid, cut);
    let rank = |blobs: &mut Vec<Blob>| {
        blobs.sort_by(|a, b| b.mass.total_cmp(&a.mass).then(a.min_index.cmp(&b.min_index)))
    };
    rank(&mut blobs);
    while blobs.len() < k {
        match blobs.iter().position(|b| b.voxels.len() >= 2) {
            Some(at) => {
                let blob = blobs.remove(at);
                let (a, b) = split_two(&blob, v, grid);
                blobs.push(Blob::new(a, v));
                blobs.push(Blob::new(b, v));
            }
            None => {
                // only single voxels left: the heaviest one stands for
                // coincident sources and contributes its center twice
                let mut half = blobs.remove(0);
                half.mass *= 0.5;
                blobs.push(half.clone());
                blobs.push(half);
            }
        }
        rank(&mut blobs);
    }
    Ok(blobs[..k].iter().map(|b| b.centroid(v, grid)).collect())
}

fn components(v: &[f64], grid: &VoxelGrid, cut: f64) -> Vec<Blob> {
    let mut seen = vec![false; v.len()];
    let mut blobs = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..v.len() {
        if seen[start] || v[start] < cut {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        while let Some(i) = queue.pop_front() {
            voxels.push(i);
            let c = grid.coords(i);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if let Some(j) = grid.index([c[0] + dx, c[1] + dy, c[2] + dz]) {
                            if !seen[j] && v[j] >= cut {
                                seen[j] = true;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
        blobs.push(Blob::new(voxels, v));
    }
    blobs
}

/// Weighted 2-means seeded with the heaviest voxel and the voxel farthest
/// from it.
fn split_two(blob: &Blob, v: &[f64], grid: &VoxelGrid) -> (Vec<usize>, Vec<usize>) {
    let pts: Vec<[f64; 3]> = blob.voxels.iter().map(|&i| grid.center(i)).collect();
    let w: Vec<f64> = blob.voxels.iter().map(|&i| v[i]).collect();
    let heaviest = (0..pts.len())
        .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)))
        .unwrap();
    let farthest = (0..pts.len())
        .max_by(|&a, &b| {
            d2(pts[a], pts[heaviest])
                .total_cmp(&d2(pts[b], pts[heaviest]))
                .then(b.cmp(&a))
        })
        .unwrap();
    let mut centers = [pts[heaviest], pts[farthest]];
    let mut label = vec![0usize; pts.len()];
    for _ in 0..KMEANS_ITERS {
        let next: Vec<usize> = pts
            .iter()
            .map(|p| usize::from(d2(*p, centers[1]) < d2(*p, centers[0])))
            .collect();
        if next.iter().all(|&l| l == 0) || next.iter().all(|&l| l == 1) {
            // keep the seeds apart
            break;
        }
        let changed = next != label;
        label = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let (mut acc, mut m) = ([0.0; 3], 0.0);
            for ((p, w), l) in pts.iter().zip(&w).zip(&label) {
                if *l == c {
                    for d in 0..3 {
                        acc[d] += w * p[d];
                    }
                    m += w;
                }
            }
            if m > 0.0 {
                *center = acc.map(|a| a / m);
            }
        }
        if !changed {
            break;
        }
    }
    if label.iter().all(|&l| l == label[0]) {
        // degenerate weights: split off the farthest voxel
        label = (0..pts.len()).map(|i| usize::from(i == farthest)).collect();
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (&i, l) in blob.voxels.iter().zip(&label) {
        if *l == 0 {
            a.push(i)
        } else {
            b.push(i)
        }
    }
    (a, b)
}

fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]).powi(2)).sum()
}
