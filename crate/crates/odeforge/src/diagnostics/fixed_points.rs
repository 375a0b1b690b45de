//! Root finding for vector fields: Newton iteration from seed grids,
//! duplicate merging, linear stability, and attractor-proximity labels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::timeseries::StateTrajectory;

/// Whether a root sits on (within epsilon of) the reference attractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Embedded,
    Ghost,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPoint {
    pub location: Vec<f64>,
    /// ||f(x*)|| at the converged point.
    pub residual: f64,
    /// Jacobian eigenvalues as (re, im), sorted by re then im, descending.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Number of eigenvalues with positive real part.
    pub unstable_count: usize,
    pub classification: Classification,
    /// Minimum Euclidean distance to the reference trajectory.
    pub distance_to_attractor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// Distinct roots, sorted lexicographically by location.
    pub points: Vec<FixedPoint>,
    pub converged_seeds: usize,
    pub failed_seeds: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence: Newton update norm below this.
    pub tol: f64,
    /// Seeds wandering beyond this radius are abandoned.
    pub guard_radius: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-9,
            guard_radius: 1e6,
        }
    }
}

/// Regular grid of seed points, endpoints inclusive (midpoint if
/// `per_axis` is 1).
pub fn grid_seeds(lo: &[f64], hi: &[f64], per_axis: usize) -> Result<Vec<Vec<f64>>> {
    let dim = lo.len();
    if hi.len() != dim || dim == 0 {
        return Err(Error::DimensionMismatch {
            expected: dim.max(1),
            got: hi.len(),
        });
    }
    if per_axis == 0 {
        return Err(Error::InvalidParam("per_axis must be >= 1".into()));
    }
    let total = (per_axis as f64).powi(dim as i32);
    if total > 1e6 {
        return Err(Error::InvalidParam(format!(
            "seed grid of {per_axis}^{dim} points is too large"
        )));
    }
    let axis_value = |d: usize, i: usize| -> f64 {
        if per_axis == 1 {
            0.5 * (lo[d] + hi[d])
        } else {
            lo[d] + (hi[d] - lo[d]) * i as f64 / (per_axis - 1) as f64
        }
    };
    let total = total as usize;
    let mut seeds = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut seed = vec![0.0; dim];
        for d in (0..dim).rev() {
            seed[d] = axis_value(d, idx % per_axis);
            idx /= per_axis;
        }
        seeds.push(seed);
    }
    Ok(seeds)
}

/// `count` states evenly spaced along a trajectory, as seed points.
pub fn attractor_seeds(traj: &StateTrajectory, count: usize) -> Vec<Vec<f64>> {
    let n = traj.len();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|i| traj.state(i * n / count).to_vec())
        .collect()
}

fn min_distance_to(traj: &StateTrajectory, x: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for st in traj.states() {
        let d2: f64 = st.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best {
            best = d2;
        }
    }
    best.sqrt()
}

/// Newton solve f(x) = 0 from one seed. Returns the root and its residual.
fn newton_root<S: Dynamics + ?Sized>(
    sys: &S,
    seed: &[f64],
    opts: &NewtonOptions,
) -> Option<(Vec<f64>, f64)> {
    let d = sys.dim();
    let mut x = seed.to_vec();
    let mut fx = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    for _ in 0..opts.max_iter {
        sys.rhs_and_jacobian(&x, &mut fx, &mut jac);
        if fx.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let j = DMatrix::from_row_slice(d, d, &jac);
        let rhs = DVector::from_iterator(d, fx.iter().map(|v| -v));
        let dx = j.lu().solve(&rhs)?;
        for i in 0..d {
            x[i] += dx[i];
        }
        let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !r.is_finite() || r > opts.guard_radius {
            return None;
        }
        if dx.norm() < opts.tol {
            sys.rhs(&x, &mut fx);
            let residual = fx.iter().map(|v| v * v).sum::<f64>().sqrt();
            if residual.is_finite() {
                return Some((x, residual));
            }
            return None;
        }
    }
    None
}

fn eigen_summary<S: Dynamics + ?Sized>(sys: &S, x: &[f64]) -> (Vec<(f64, f64)>, usize) {
    let d = sys.dim();
    let mut jac = vec![0.0; d * d];
    sys.jacobian(x, &mut jac);
    let eig = DMatrix::from_row_slice(d, d, &jac).complex_eigenvalues();
    let mut pairs: Vec<(f64, f64)> = eig.iter().map(|c| (c.re, c.im)).collect();
    pairs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let unstable = pairs.iter().filter(|(re, _)| *re > 0.0).count();
    (pairs, unstable)
}

/// Find the distinct fixed points of `sys` reachable by Newton iteration
/// from `seeds`. Roots closer than 10 * tol are merged (keeping the smaller
/// residual) and each survivor is classified against `attractor`: within
/// `epsilon` it is embedded in the attractor, otherwise it is a ghost.
pub fn find_fixed_points<S: Dynamics + ?Sized>(
    sys: &S,
    seeds: &[Vec<f64>],
    opts: &NewtonOptions,
    attractor: &StateTrajectory,
    epsilon: f64,
) -> Result<FixedPointReport> {
    let d = sys.dim();
    if attractor.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: attractor.dim(),
        });
    }
    if attractor.len() == 0 {
        return Err(Error::EmptySelection(
            "attractor trajectory is empty".into(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParam(format!(
            "classification epsilon must be > 0, got {epsilon}"
        )));
    }
    let merge_radius = 10.0 * opts.tol;
    let mut roots: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut converged = 0usize;
    let mut failed = 0usize;
    for seed in seeds {
        if seed.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: seed.len(),
            });
        }
        let Some((x, residual)) = newton_root(sys, seed, opts) else {
            failed += 1;
            continue;
        };
        converged += 1;
        let dup = roots.iter_mut().find(|(loc, _)| {
            let d2: f64 = loc.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() < merge_radius
        });
        match dup {
            Some(entry) => {
                if residual < entry.1 {
                    *entry = (x, residual);
                }
            }
            None => roots.push((x, residual)),
        }
    }
    let mut points: Vec<FixedPoint> = roots
        .into_iter()
        .map(|(location, residual)| {
            let (eigenvalues, unstable_count) = eigen_summary(sys, &location);
            let distance = min_distance_to(attractor, &location);
            let classification = if distance <= epsilon {
                Classification::Embedded
            } else {
                Classification::Ghost
            };
            FixedPoint {
                location,
                residual,
                eigenvalues,
                unstable_count,
                classification,
                distance_to_attractor: distance,
            }
        })
        .collect();
    points.sort_by(|a, b| a.location.partial_cmp(&b.location).unwrap());
    Ok(FixedPointReport {
        points,
        converged_seeds: converged,
        failed_seeds: failed,
    })
}
