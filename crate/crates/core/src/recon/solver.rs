use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::DistanceOperators;
use super::projection::project_constraints;
use super::targets::Targets;
use super::DensityVector;
use crate::error::{Error, Result};
use crate::rng::{Stream, StreamRng};

pub const POWER_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Initial gradient step.
    pub step_size: f64,
    /// Step multiplier on rejection; its inverse is applied after acceptance.
    pub backtrack: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Stop when the relative objective decrease falls below this.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 2000,
            step_size: 1e-2,
            backtrack: 0.5,
            min_step: 1e-8,
            max_step: 1e4,
            tolerance: 1e-10,
            restarts: 10,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.step_size > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.min_step > 0.0
            && self.max_step >= self.step_size
            && self.tolerance >= 0.0
            && self.restarts > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid solver options {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub density: DensityVector,
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub density: DensityVector,
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
    pub best_restart: usize,
    /// Final objective per restart, `None` where the restart aborted.
    pub restart_objectives: Vec<Option<f64>>,
}

/// `f(phi) = sum_j (C_j - phi^T E_j phi)^2`.
pub fn objective(phi: &[f64], pair: &[f64], ops: &DistanceOperators) -> f64 {
    ops.quadratic_forms(phi)
        .iter()
        .zip(pair)
        .map(|(q, c)| (c - q) * (c - q))
        .sum()
}

/// `-4 sum_j (C_j - phi^T E_j phi) E_j phi`, on `rows` only when given.
pub fn gradient(phi: &[f64], pair: &[f64], ops: &DistanceOperators, rows: Option<&[u32]>) -> Vec<f64> {
    let res: Vec<f64> = ops
        .quadratic_forms(phi)
        .iter()
        .zip(pair)
        .map(|(q, c)| -4.0 * (c - q))
        .collect();
    ops.weighted_apply(&res, phi, rows)
}

/// Leading eigenvector of `A = sum_j C_j E_j` by power iteration, made
/// nonnegative, scaled to mass `K` and projected onto the radial constraints.
pub fn spectral_init(targets: &Targets, ops: &DistanceOperators, rng: &mut StreamRng) -> DensityVector {
    spectral_init_traced(targets, ops, rng).0
}

/// As [`spectral_init`], also returning the Rayleigh quotient of `A` after
/// every power step.
///
/// The iteration runs on `A + sI` with `s` the largest absolute row sum, which
/// makes the shifted matrix positive semidefinite and the quotient monotone.
pub fn spectral_init_traced(
    targets: &Targets,
    ops: &DistanceOperators,
    rng: &mut StreamRng,
) -> (DensityVector, Vec<f64>) {
    let n = ops.n_voxels();
    let abs_c: Vec<f64> = targets.pair.iter().map(|c| c.abs()).collect();
    let shift = ops
        .weighted_apply(&abs_c, &vec![1.0; n], None)
        .into_iter()
        .fold(0.0, f64::max);
    let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    normalize(&mut v);
    let mut rayleigh = Vec::with_capacity(POWER_ITERATIONS);
    for _ in 0..POWER_ITERATIONS {
        let av = ops.weighted_apply(&targets.pair, &v, None);
        rayleigh.push(dot(&v, &av));
        let mut w: Vec<f64> = av.iter().zip(&v).map(|(a, x)| a + shift * x).collect();
        if normalize(&mut w) == 0.0 {
            break;
        }
        v = w;
    }
    let mut v: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x *= targets.k as f64 / total);
    }
    (project_constraints(&v, &targets.radial, ops), rayleigh)
}

/// A random point of the constraint set: independent uniform weights
/// normalized to the target mass within every radial bin.
pub fn random_feasible(targets: &Targets, ops: &DistanceOperators, rng: &mut StreamRng) -> DensityVector {
    let mut values = vec![0.0; ops.n_voxels()];
    for (j, shell) in ops.shells().iter().enumerate() {
        let r = targets.radial.get(j).copied().unwrap_or(0.0);
        if shell.is_empty() || r <= 0.0 {
            continue;
        }
        let w: Vec<f64> = shell.iter().map(|_| rng.uniform()).collect();
        let s: f64 = w.iter().sum();
        for (&i, w) in shell.iter().zip(w) {
            values[i as usize] = r * w / s;
        }
    }
    DensityVector { values }
}

/// Projected gradient descent from `init` with backtracking.
///
/// A candidate `P(phi - eta grad)` is accepted only if it does not raise the
/// objective; otherwise `eta` shrinks by `backtrack` until `min_step`, where
/// the run stops. After acceptance the step grows back by `1/backtrack`.
pub fn pgd_solve(
    init: &DensityVector,
    targets: &Targets,
    ops: &DistanceOperators,
    opts: &SolverOptions,
    restart: usize,
) -> Result<RunResult> {
    opts.validate()?;
    let rows: Vec<u32> = ops
        .shells()
        .iter()
        .enumerate()
        .filter(|(j, _)| targets.radial.get(*j).is_some_and(|r| *r > 0.0))
        .flat_map(|(_, s)| s.iter().copied())
        .collect();
    let mut phi = project_constraints(&init.values, &targets.radial, ops).values;
    let mut f = objective(&phi, &targets.pair, ops);
    if !f.is_finite() {
        return Err(Error::NonFinite { restart, iteration: 0 });
    }
    let mut trace = vec![TraceEntry {
        iter: 0,
        objective: f,
        step: 0.0,
    }];
    let mut eta = opts.step_size;
    'outer: for iter in 1..=opts.max_iters {
        if f == 0.0 {
            break;
        }
        let grad = gradient(&phi, &targets.pair, ops, Some(&rows));
        let (cand, fc) = loop {
            let step: Vec<f64> = phi.iter().zip(&grad).map(|(p, g)| p - eta * g).collect();
            let cand = project_constraints(&step, &targets.radial, ops).values;
            let fc = objective(&cand, &targets.pair, ops);
            if !fc.is_finite() {
                return Err(Error::NonFinite { restart, iteration: iter });
            }
            if fc <= f {
                break (cand, fc);
            }
            eta *= opts.backtrack;
            if eta < opts.min_step {
                break 'outer;
            }
        };
        let decrease = (f - fc) / f;
        phi = cand;
        f = fc;
        trace.push(TraceEntry {
            iter,
            objective: f,
            step: eta,
        });
        if decrease < opts.tolerance {
            break;
        }
        eta = (eta / opts.backtrack).min(opts.max_step);
    }
    Ok(RunResult {
        density: DensityVector { values: phi },
        objective: f,
        trace,
    })
}

/// Multi-restart solve keeping the lowest final objective (earliest restart
/// on ties). Restart 0 starts from [`spectral_init`], the others from
/// [`random_feasible`]; each restart draws from its own stream.
pub fn solve(targets: &Targets, ops: &DistanceOperators, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    let runs: Vec<Result<RunResult>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::new(opts.seed, Stream::Solver(r as u64));
            let init = if r == 0 {
                spectral_init(targets, ops, &mut rng)
            } else {
                random_feasible(targets, ops, &mut rng)
            };
            pgd_solve(&init, targets, ops, opts, r)
        })
        .collect();
    let restart_objectives = runs.iter().map(|r| r.as_ref().ok().map(|r| r.objective)).collect();
    let mut best: Option<(usize, RunResult)> = None;
    let mut first_err = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                if best.as_ref().map_or(true, |(_, b)| run.objective < b.objective) {
                    best = Some((i, run));
                }
            }
            Err(e) => {
                log::warn!("restart {i} aborted: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((best_restart, run)) => Ok(SolveResult {
            density: run.density,
            objective: run.objective,
            trace: run.trace,
            best_restart,
            restart_objectives,
        }),
        None => Err(first_err.expect("at least one restart")),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::VoxelGrid;

    fn small() -> DistanceOperators {
        DistanceOperators::new(VoxelGrid::new(1, 0.1).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn exact_data_is_a_fixed_point() {
        let ops = small();
        let mut z = vec![0.0; 27];
        z[13] = 1.0;
        z[4] = 1.0;
        let t = Targets::from_density(&z, &ops);
        assert_eq!(objective(&z, &t.pair, &ops), 0.0);
        let run = pgd_solve(&DensityVector { values: z.clone() }, &t, &ops, &SolverOptions::default(), 0).unwrap();
        assert_eq!(run.density.values, z);
        assert_eq!(run.objective, 0.0);
    }

    #[test]
    fn rayleigh_quotient_is_monotone() {
        let ops = small();
        let mut z = vec![0.0; 27];
        z[0] = 1.0;
        z[14] = 1.0;
        let t = Targets::from_density(&z, &ops);
        let mut rng = StreamRng::new(1, Stream::Test(0));
        let (init, rq) = spectral_init_traced(&t, &ops, &mut rng);
        assert!(rq.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
        assert!((init.values.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trace_never_increases() {
        let ops = DistanceOperators::new(VoxelGrid::new(2, 0.1).unwrap(), 0.1).unwrap();
        let mut z = vec![0.0; 125];
        z[ops.grid().index([2, 0, 0]).unwrap()] = 1.0;
        z[ops.grid().index([0, -1, 1]).unwrap()] = 1.0;
        z[ops.grid().index([0, 0, 0]).unwrap()] = 1.0;
        let t = Targets::from_density(&z, &ops);
        let mut rng = StreamRng::new(2, Stream::Test(0));
        let init = random_feasible(&t, &ops, &mut rng);
        let run = pgd_solve(&init, &t, &ops, &SolverOptions::default(), 0).unwrap();
        assert!(run.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
        assert!(run.objective < run.trace[0].objective);
    }
}
