//! Model validation: invariant densities, delay-structure residuals,
//! short-term forecast horizon, Lyapunov spectra, fixed points, basin maps,
//! and the regularization sweep.

pub mod basin;
pub mod fixed_points;
pub mod lyapunov;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::StateTrajectory;

/// A normalized histogram: sum of probability * bin width = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    /// bins + 1 monotone edges.
    pub bin_edges: Vec<f64>,
    /// One probability density value per bin.
    pub probabilities: Vec<f64>,
}

impl Density {
    pub fn bins(&self) -> usize {
        self.probabilities.len()
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.bin_edges[i + 1] - self.bin_edges[i]
    }

    /// Total integral; 1 up to round-off by construction.
    pub fn integral(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.bin_width(i))
            .sum()
    }
}

/// Normalized histogram of `values` over `range` (defaults to the data
/// range). Non-finite values are skipped; out-of-range values are excluded
/// from the normalization.
pub fn density_histogram(
    values: &[f64],
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Density> {
    if bins == 0 {
        return Err(Error::InvalidParam("histogram needs at least 1 bin".into()));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo < hi) {
                return Err(Error::InvalidParam(format!(
                    "histogram range must satisfy lo < hi, got ({lo}, {hi})"
                )));
            }
            (lo, hi)
        }
        None => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in finite.clone() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo > hi {
                return Err(Error::EmptySelection(
                    "histogram input has no finite values".into(),
                ));
            }
            if lo == hi {
                // Degenerate data: one occupied bin of unit total width.
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for v in values.iter().copied().filter(|v| v.is_finite()) {
        if v < lo || v > hi {
            continue;
        }
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptySelection(
            "no histogram values fall inside the range".into(),
        ));
    }
    let norm = 1.0 / (total as f64 * width);
    let probabilities = counts.iter().map(|&c| c as f64 * norm).collect();
    let bin_edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    Ok(Density {
        bin_edges,
        probabilities,
    })
}

/// L1 area difference of two densities over identical bins; lies in [0, 2].
pub fn density_area_diff(a: &Density, b: &Density) -> Result<f64> {
    if a.bin_edges != b.bin_edges {
        return Err(Error::InvalidParam(
            "densities have different bin edges; histogram both over a shared range".into(),
        ));
    }
    Ok(a.probabilities
        .iter()
        .zip(&b.probabilities)
        .enumerate()
        .map(|(i, (pa, pb))| (pa - pb).abs() * a.bin_width(i))
        .sum())
}

/// Histogram two value sets over their shared (union) range and return the
/// densities with their area difference.
pub fn compare_densities(
    a: &[f64],
    b: &[f64],
    bins: usize,
) -> Result<(Density, Density, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in a.iter().chain(b).copied().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return Err(Error::EmptySelection(
            "density comparison inputs have no finite values".into(),
        ));
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let da = density_histogram(a, bins, Some((lo, hi)))?;
    let db = density_histogram(b, bins, Some((lo, hi)))?;
    let diff = density_area_diff(&da, &db)?;
    Ok((da, db, diff))
}

/// Residual of one adjacent delay pair: X_d(t) - X_{d+1}(t + tau).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayResidual {
    /// Zero-based component indices (d, d+1).
    pub pair: (usize, usize),
    pub mean: f64,
    pub std: f64,
    pub density: Density,
}

/// Measure how well a simulated trajectory honors the delay identity
/// X_d(t) = X_{d+1}(t + tau). Exactly-embedded trajectories give residuals
/// that are identically zero; model error shows up as spread.
pub fn delay_residuals(
    traj: &StateTrajectory,
    tau_steps: usize,
    bins: usize,
) -> Result<Vec<DelayResidual>> {
    let dim = traj.dim();
    if dim < 2 {
        return Err(Error::InvalidParam(
            "delay residuals need at least 2 components".into(),
        ));
    }
    if tau_steps == 0 {
        return Err(Error::InvalidParam("tau_steps must be >= 1".into()));
    }
    let n = traj.len();
    if n <= tau_steps {
        return Err(Error::SeriesTooShort {
            needed: tau_steps + 1,
            got: n,
        });
    }
    let count = n - tau_steps;
    let mut out = Vec::with_capacity(dim - 1);
    let mut residuals = vec![0.0; count];
    for d in 0..dim - 1 {
        for (i, r) in residuals.iter_mut().enumerate() {
            *r = traj.state(i)[d] - traj.state(i + tau_steps)[d + 1];
        }
        let mean = residuals.iter().sum::<f64>() / count as f64;
        let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / count as f64;
        let density = density_histogram(&residuals, bins, None)?;
        out.push(DelayResidual {
            pair: (d, d + 1),
            mean,
            std: var.sqrt(),
            density,
        });
    }
    Ok(out)
}

/// First time the leading components of two equally-sampled trajectories
/// separate by more than `threshold` times the reference spread
/// (sigma of the reference's first component). Returns the overlap length
/// if they never do.
pub fn short_term_valid_time(
    model_traj: &StateTrajectory,
    ref_traj: &StateTrajectory,
    threshold: f64,
) -> Result<f64> {
    if model_traj.dim() != ref_traj.dim() {
        return Err(Error::DimensionMismatch {
            expected: ref_traj.dim(),
            got: model_traj.dim(),
        });
    }
    let dt = ref_traj.dt;
    if !((model_traj.dt - dt).abs() <= 1e-12 * dt.max(1.0)) {
        return Err(Error::InvalidParam(format!(
            "trajectories have different sampling intervals: {} vs {dt}",
            model_traj.dt
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidParam(format!(
            "threshold must be > 0, got {threshold}"
        )));
    }
    let n = model_traj.len().min(ref_traj.len());
    if n == 0 {
        return Err(Error::EmptySelection("empty trajectories".into()));
    }
    let x1 = ref_traj.component(0);
    let mean = x1.iter().sum::<f64>() / x1.len() as f64;
    let var = x1.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x1.len() as f64;
    let sigma = var.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let limit = threshold * sigma;
    for i in 0..n {
        if (model_traj.state(i)[0] - ref_traj.state(i)[0]).abs() > limit {
            return Ok(i as f64 * dt);
        }
    }
    Ok(n as f64 * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{delay_embed, ScalarSeries};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn histogram_normalizes_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..5000).map(|_| rng.random_range(-3.0..7.0)).collect();
        let d = density_histogram(&values, 37, None).unwrap();
        assert_relative_eq!(d.integral(), 1.0, epsilon = 1e-10);
        assert!(d.probabilities.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn histogram_constant_data_single_bin() {
        let d = density_histogram(&[4.2; 100], 10, None).unwrap();
        assert_relative_eq!(d.integral(), 1.0, epsilon = 1e-12);
        let occupied = d.probabilities.iter().filter(|&&p| p > 0.0).count();
        assert_eq!(occupied, 1);
    }

    #[test]
    fn histogram_uniform_law_of_large_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let values: Vec<f64> = (0..1_000_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let d = density_histogram(&values, 10, Some((0.0, 1.0))).unwrap();
        for &p in &d.probabilities {
            assert!((p - 1.0).abs() <= 0.02, "bin density {p}");
        }
    }

    #[test]
    fn histogram_rejects_empty_and_bad_range() {
        assert!(density_histogram(&[], 10, None).is_err());
        assert!(density_histogram(&[f64::NAN], 10, None).is_err());
        assert!(density_histogram(&[1.0], 0, None).is_err());
        assert!(density_histogram(&[1.0], 10, Some((2.0, 2.0))).is_err());
    }

    #[test]
    fn area_diff_identity_symmetry_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..4000).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.random_range(0.5..1.5)).collect();
        let (da, db, diff) = compare_densities(&a, &b, 50).unwrap();
        assert_eq!(density_area_diff(&da, &da).unwrap(), 0.0);
        let back = density_area_diff(&db, &da).unwrap();
        assert_relative_eq!(diff, back, epsilon = 1e-12);
        assert!((0.0..=2.0).contains(&diff));
    }

    #[test]
    fn area_diff_disjoint_supports_is_two() {
        let a = vec![0.25; 500];
        let b = vec![0.75; 500];
        let (da, db, diff) = compare_densities(&a, &b, 2).unwrap();
        assert_relative_eq!(diff, 2.0, epsilon = 1e-12);
        assert_relative_eq!(da.integral(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(db.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn area_diff_rejects_mismatched_edges() {
        let a = density_histogram(&[0.0, 1.0], 4, Some((0.0, 1.0))).unwrap();
        let b = density_histogram(&[0.0, 1.0], 4, Some((0.0, 2.0))).unwrap();
        assert!(density_area_diff(&a, &b).is_err());
    }

    #[test]
    fn exact_embedding_has_zero_residuals() {
        let values: Vec<f64> = (0..400).map(|i| (i as f64 * 0.11).sin() * 2.0).collect();
        let series = ScalarSeries::new(values, 0.05, 0.0, "w").unwrap();
        let traj = delay_embed(&series, 3, 7).unwrap();
        let res = delay_residuals(&traj, 7, 20).unwrap();
        assert_eq!(res.len(), 2);
        for r in &res {
            assert_eq!(r.std, 0.0);
            assert_eq!(r.mean, 0.0);
        }
    }

    #[test]
    fn perturbed_embedding_residual_std_matches_noise() {
        // Add noise of known std to the second component only; the residual
        // X_1(t) - X_2(t+tau) then has exactly that std.
        let values: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.07).sin()).collect();
        let series = ScalarSeries::new(values, 0.05, 0.0, "w").unwrap();
        let traj = delay_embed(&series, 2, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise_std = 0.01;
        let mut data = Vec::with_capacity(traj.len() * 2);
        for st in traj.states() {
            data.push(st[0]);
            // Triangular-ish noise via sum of two uniforms, bounded and simple.
            let u: f64 = rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0);
            data.push(st[1] + noise_std * u * (6.0f64 / 4.0).sqrt());
        }
        let noisy = StateTrajectory::new(data, 2, traj.dt);
        let res = delay_residuals(&noisy, 9, 20).unwrap();
        assert!(
            (res[0].std - noise_std).abs() <= 0.002,
            "std {} vs injected {noise_std}",
            res[0].std
        );
    }

    #[test]
    fn residuals_reject_short_or_flat_input() {
        let traj = StateTrajectory::new(vec![0.0; 12], 2, 0.1);
        assert!(matches!(
            delay_residuals(&traj, 6, 10),
            Err(Error::SeriesTooShort { .. })
        ));
        let traj1 = StateTrajectory::new(vec![0.0; 12], 1, 0.1);
        assert!(delay_residuals(&traj1, 2, 10).is_err());
    }

    fn ramp_traj(slope: f64, n: usize, dt: f64) -> StateTrajectory {
        let mut data = Vec::with_capacity(n * 2);
        for i in 0..n {
            let t = i as f64 * dt;
            data.push((t * 1.3).sin() + slope * t);
            data.push(0.0);
        }
        StateTrajectory::new(data, 2, dt)
    }

    #[test]
    fn identical_trajectories_valid_for_full_length() {
        let a = ramp_traj(0.0, 200, 0.05);
        let t = short_term_valid_time(&a, &a, 0.4).unwrap();
        assert_relative_eq!(t, 200.0 * 0.05, epsilon = 1e-12);
    }

    #[test]
    fn linear_drift_crosses_threshold_at_predicted_time() {
        // Reference is sin(1.3 t) (sigma = 1/sqrt(2)); model drifts away at
        // rate 0.1 per time unit, so the 0.4 sigma threshold is crossed just
        // after t = 0.4 / (0.1 sqrt(2)) = 2.828.
        let reference = ramp_traj(0.0, 2000, 0.01);
        let drifted = ramp_traj(0.1, 2000, 0.01);
        let t = short_term_valid_time(&drifted, &reference, 0.4).unwrap();
        let sigma = {
            let x = reference.component(0);
            let m = x.iter().sum::<f64>() / x.len() as f64;
            (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
        };
        let predicted = 0.4 * sigma / 0.1;
        assert!(
            (t - predicted).abs() <= 0.05,
            "crossing at {t}, predicted {predicted}"
        );
    }

    #[test]
    fn valid_time_rejects_mismatched_sampling() {
        let a = ramp_traj(0.0, 50, 0.05);
        let b = ramp_traj(0.0, 50, 0.01);
        assert!(short_term_valid_time(&a, &b, 0.4).is_err());
    }
}
