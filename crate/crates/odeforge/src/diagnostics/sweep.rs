//! Regularization sweep: refit at a list of lambda values from one shared
//! Gram matrix, validate each model by simulation, and flag the best.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::diagnostics::{compare_densities, delay_residuals};
use crate::dynamics::{integrate, DEFAULT_GUARD_RADIUS};
use crate::error::{Error, Result};
use crate::regress::{assemble_model, FitOptions, RidgeWorkspace};
use crate::timeseries::RegressionDataset;

/// Validation metrics for one lambda.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMetrics {
    /// Delay-residual std per adjacent component pair.
    pub residual_stds: Vec<f64>,
    pub mean_residual_std: f64,
    /// Area difference between simulated and reference densities.
    pub density_area_diff: f64,
    /// Training RMS residual per component.
    pub fit_stats: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub lambda: f64,
    /// Present when the fit and validation both completed.
    pub metrics: Option<SweepMetrics>,
    /// Why this lambda failed, when it did.
    pub error: Option<String>,
    /// True for the lambda with the smallest mean residual std.
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub selected_lambda: Option<f64>,
    pub t_val: f64,
}

/// Fit one model per lambda (sharing a single Gram matrix across all of
/// them), simulate each for `t_val` from the dataset anchor state, and
/// score the run by delay-residual spread and invariant-density drift
/// against `reference` (the observable values of the source data). A
/// lambda whose fit or simulation fails gets its error recorded without
/// disturbing the other entries.
pub fn lambda_sweep(
    dataset: &RegressionDataset,
    spec: &BasisSpec,
    lambdas: &[f64],
    opts: &FitOptions,
    reference: &[f64],
    t_val: f64,
    bins: usize,
) -> Result<SweepReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParam("lambda sweep needs at least one lambda".into()));
    }
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidParam("sweep lambdas must be finite".into()));
    }
    if !(t_val > 0.0) {
        return Err(Error::InvalidParam(format!(
            "validation horizon must be > 0, got {t_val}"
        )));
    }
    let tau_steps = (opts.tau / opts.dt).round() as usize;
    if tau_steps == 0 {
        return Err(Error::InvalidParam(format!(
            "tau ({}) must be at least one sample interval ({})",
            opts.tau, opts.dt
        )));
    }
    let workspace = RidgeWorkspace::build(dataset, spec)?;
    let mut entries: Vec<SweepEntry> = lambdas
        .iter()
        .map(|&lambda| {
            let run = || -> Result<SweepMetrics> {
                let coeffs = workspace.solve(lambda)?;
                let fit_stats = coeffs.fit_stats.clone();
                let model = assemble_model(
                    dataset,
                    spec,
                    &coeffs,
                    &FitOptions {
                        lambda,
                        ..opts.clone()
                    },
                )?;
                let traj = integrate(
                    &model,
                    &model.meta.anchor_state,
                    t_val,
                    opts.dt,
                    DEFAULT_GUARD_RADIUS,
                )?;
                let residuals = delay_residuals(&traj, tau_steps, bins)?;
                let residual_stds: Vec<f64> = residuals.iter().map(|r| r.std).collect();
                let mean_residual_std =
                    residual_stds.iter().sum::<f64>() / residual_stds.len() as f64;
                let (_, _, density_area_diff) =
                    compare_densities(reference, &traj.component(0), bins)?;
                Ok(SweepMetrics {
                    residual_stds,
                    mean_residual_std,
                    density_area_diff,
                    fit_stats,
                })
            };
            match run() {
                Ok(metrics) => SweepEntry {
                    lambda,
                    metrics: Some(metrics),
                    error: None,
                    selected: false,
                },
                Err(e) => SweepEntry {
                    lambda,
                    metrics: None,
                    error: Some(e.to_string()),
                    selected: false,
                },
            }
        })
        .collect();

    let selected_lambda = entries
        .iter()
        .filter_map(|e| e.metrics.as_ref().map(|m| (e.lambda, m.mean_residual_std)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(lambda, _)| lambda);
    if let Some(best) = selected_lambda {
        for e in &mut entries {
            e.selected = e.lambda == best && e.metrics.is_some();
        }
    }
    Ok(SweepReport {
        entries,
        selected_lambda,
        t_val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_rbf_centers_from_points, BasisSpec};
    use crate::timeseries::{RegressionDataset, ScalingParams};

    /// Small 2-D dataset with targets f(X) = sign * X on a grid; an RBF fit
    /// reproduces the linear field well inside the sampled box.
    fn grid_dataset(sign: f64) -> (RegressionDataset, BasisSpec) {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                let x = -1.2 + 0.4 * i as f64;
                let y = -1.2 + 0.4 * j as f64;
                inputs.extend([x, y]);
                targets.extend([sign * x, sign * y]);
            }
        }
        let dataset =
            RegressionDataset::from_parts(inputs.clone(), targets, 2, ScalingParams::identity(2))
                .unwrap();
        let grid = build_rbf_centers_from_points(&inputs, 2, 0.6, 2, 0.01, 10_000).unwrap();
        (dataset, BasisSpec::LinearRbf(grid))
    }

    fn sweep_opts() -> FitOptions {
        FitOptions {
            lambda: 0.0,
            label: "sweep-test".into(),
            tau: 0.1,
            dt: 0.01,
            sample_seed: None,
            training_time: 0.0,
        }
    }

    /// Reference observable: the first component of the true contracting
    /// flow from the anchor, x(t) = x0 e^-t.
    fn reference_decay(x0: f64, t_val: f64, dt: f64) -> Vec<f64> {
        let n = (t_val / dt) as usize + 1;
        (0..n).map(|i| x0 * (-(i as f64) * dt).exp()).collect()
    }

    #[test]
    fn sweep_reports_one_entry_per_lambda() {
        let (dataset, spec) = grid_dataset(-1.0);
        let reference = reference_decay(-1.2, 20.0, 0.01);
        let report = lambda_sweep(
            &dataset,
            &spec,
            &[1e-8, 1e-6, 1e-2],
            &sweep_opts(),
            &reference,
            20.0,
            40,
        )
        .unwrap();
        assert_eq!(report.entries.len(), 3);
        for e in &report.entries {
            assert!(e.metrics.is_some(), "lambda {} failed: {:?}", e.lambda, e.error);
        }
        let selected = report.selected_lambda.unwrap();
        let best = report
            .entries
            .iter()
            .filter_map(|e| e.metrics.as_ref().map(|m| (e.lambda, m.mean_residual_std)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(selected, best.0);
        assert_eq!(
            report.entries.iter().filter(|e| e.selected).count(),
            1,
            "exactly one flagged entry"
        );
    }

    #[test]
    fn failing_lambda_is_isolated() {
        let (dataset, spec) = grid_dataset(-1.0);
        let reference = reference_decay(-1.2, 10.0, 0.01);
        let report = lambda_sweep(
            &dataset,
            &spec,
            &[-1.0, 1e-6],
            &sweep_opts(),
            &reference,
            10.0,
            40,
        )
        .unwrap();
        assert!(report.entries[0].metrics.is_none());
        assert!(report.entries[0].error.is_some());
        assert!(!report.entries[0].selected);
        assert!(report.entries[1].metrics.is_some());
        assert_eq!(report.selected_lambda, Some(1e-6));
        assert!(report.entries[1].selected);
    }

    #[test]
    fn escaping_models_fail_but_report_survives() {
        // Targets +X: every fitted model is expanding, so every validation
        // simulation escapes the guard radius before t_val.
        let (dataset, spec) = grid_dataset(1.0);
        let reference = reference_decay(-1.2, 40.0, 0.01);
        let report = lambda_sweep(
            &dataset,
            &spec,
            &[1e-8, 1e-6],
            &sweep_opts(),
            &reference,
            40.0,
            40,
        )
        .unwrap();
        for e in &report.entries {
            assert!(e.metrics.is_none());
            let msg = e.error.as_deref().unwrap();
            assert!(msg.contains("escaped"), "{msg}");
            assert!(!e.selected);
        }
        assert_eq!(report.selected_lambda, None);
    }

    #[test]
    fn rejects_empty_or_bad_input() {
        let (dataset, spec) = grid_dataset(-1.0);
        let reference = reference_decay(-1.2, 10.0, 0.01);
        assert!(lambda_sweep(&dataset, &spec, &[], &sweep_opts(), &reference, 10.0, 40).is_err());
        assert!(lambda_sweep(
            &dataset,
            &spec,
            &[f64::NAN],
            &sweep_opts(),
            &reference,
            10.0,
            40
        )
        .is_err());
        assert!(
            lambda_sweep(&dataset, &spec, &[1e-6], &sweep_opts(), &reference, -1.0, 40).is_err()
        );
    }
}
