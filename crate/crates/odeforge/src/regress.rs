//! Ridge regression over shared feature rows: the closed form
//! beta = (A^T A + n lambda I)^-1 A^T y, solved through a Cholesky
//! factorization (LU fallback) with iterative refinement checked against
//! the normal equations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::basis::{self, BasisSpec};
use crate::error::{Error, Result};
use crate::model::{ModelMeta, OdeModel};
use crate::timeseries::RegressionDataset;

/// Relative residual required of every solve, per the normal equations.
const RESIDUAL_TOL: f64 = 1e-8;
/// Extra refinement passes before declaring the system singular.
const MAX_REFINE: usize = 3;
/// Rows per block in the streaming Gram accumulation.
const GRAM_BLOCK: usize = 256;

/// One least-squares problem: minimize (1/2n)|y - A b|^2 + (lambda/2)|b|^2.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub lambda: f64,
}

/// Fitted coefficients for all D components over one shared feature matrix.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    /// beta[k][f]: weight of feature f in component k.
    pub beta: Vec<Vec<f64>>,
    pub lambda: f64,
    /// Per-component RMS residual |y_k - A beta_k| / sqrt(n), standardized
    /// units.
    pub fit_stats: Vec<f64>,
}

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Factor::Chol(c) => Some(c.solve(rhs)),
            Factor::Lu(lu) => lu.solve(rhs),
        }
    }
}

/// Solve (reg) b = rhs with iterative refinement; `reg` must equal the
/// matrix the factorization was built from.
fn solve_refined(reg: &DMatrix<f64>, factor: &Factor, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(DVector::zeros(rhs.len()));
    }
    let mut b = factor.solve(rhs).ok_or(Error::SingularSystem)?;
    for _ in 0..=MAX_REFINE {
        let r = rhs - reg * &b;
        if r.norm() <= RESIDUAL_TOL * rhs_norm {
            return Ok(b);
        }
        let db = factor.solve(&r).ok_or(Error::SingularSystem)?;
        b += db;
    }
    let r = rhs - reg * &b;
    if r.norm() <= RESIDUAL_TOL * rhs_norm {
        Ok(b)
    } else {
        Err(Error::SingularSystem)
    }
}

fn regularize(gram: &DMatrix<f64>, n: usize, lambda: f64) -> Result<(DMatrix<f64>, Factor)> {
    let mut reg = gram.clone();
    let shift = n as f64 * lambda;
    for i in 0..reg.nrows() {
        reg[(i, i)] += shift;
    }
    let factor = match Cholesky::new(reg.clone()) {
        Some(c) => Factor::Chol(c),
        // The Gram matrix is positive semidefinite, so a failed Cholesky at
        // lambda = 0 means a genuinely singular system; with lambda > 0 it
        // only signals conditioning at the edge of the factorization, which
        // LU plus refinement can still rescue.
        None if lambda == 0.0 => return Err(Error::SingularSystem),
        None => Factor::Lu(reg.clone().lu()),
    };
    Ok((reg, factor))
}

/// Fit one ridge problem; returns beta of length F.
pub fn ridge_fit(problem: &RidgeProblem) -> Result<Vec<f64>> {
    let n = problem.a.nrows();
    let f = problem.a.ncols();
    if n == 0 || f == 0 {
        return Err(Error::InvalidParam(
            "ridge problem needs n >= 1 rows and F >= 1 features".into(),
        ));
    }
    if problem.y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: problem.y.len(),
        });
    }
    if !(problem.lambda >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "lambda must be >= 0, got {}",
            problem.lambda
        )));
    }
    if problem.a.iter().any(|v| !v.is_finite()) || problem.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge problem entries".into()));
    }
    let gram = problem.a.tr_mul(&problem.a);
    let aty = problem.a.tr_mul(&problem.y);
    let (reg, factor) = regularize(&gram, n, problem.lambda)?;
    let beta = solve_refined(&reg, &factor, &aty)?;
    Ok(beta.data.into())
}

/// Accumulated normal-equation blocks for one dataset/basis pair. Feature
/// rows are streamed through in fixed-size blocks, so the full n x F matrix
/// never exists in memory, and the Gram matrix can be reused across many
/// lambda values (the regularization only touches the diagonal).
pub struct RidgeWorkspace {
    gram: DMatrix<f64>,
    aty: DMatrix<f64>,
    yty: Vec<f64>,
    n: usize,
    feature_count: usize,
    targets: usize,
}

impl RidgeWorkspace {
    pub fn build(dataset: &RegressionDataset, spec: &BasisSpec) -> Result<Self> {
        let dim = dataset.dim();
        if spec.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: dim,
            });
        }
        let n = dataset.n;
        if n == 0 {
            return Err(Error::EmptySelection("dataset has no samples".into()));
        }
        let f = spec.feature_count();
        let mut gram = DMatrix::zeros(f, f);
        let mut aty = DMatrix::zeros(f, dim);
        let mut yty = vec![0.0; dim];

        // bt holds one block of feature rows as columns (f x block), so each
        // row is written contiguously; b is its transpose for the gemm.
        let mut bt = DMatrix::zeros(f, GRAM_BLOCK);
        let mut b = DMatrix::zeros(GRAM_BLOCK, f);
        let mut yb = DMatrix::zeros(GRAM_BLOCK, dim);
        let mut row = vec![0.0; f];

        let mut start = 0;
        while start < n {
            let nb = GRAM_BLOCK.min(n - start);
            for i in 0..nb {
                basis::eval_features_into(dataset.input(start + i), spec, &mut row)?;
                bt.column_mut(i).copy_from_slice(&row);
                let y = dataset.target(start + i);
                for k in 0..dim {
                    yb[(i, k)] = y[k];
                    yty[k] += y[k] * y[k];
                }
            }
            let btv = bt.columns(0, nb);
            btv.transpose_to(&mut b.rows_mut(0, nb));
            let bv = b.rows(0, nb);
            let ybv = yb.rows(0, nb);
            gram.gemm(1.0, &btv, &bv, 1.0);
            aty.gemm(1.0, &btv, &ybv, 1.0);
            start += nb;
        }
        Ok(Self {
            gram,
            aty,
            yty,
            n,
            feature_count: f,
            targets: dim,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Solve the D per-component ridge problems for one lambda.
    pub fn solve(&self, lambda: f64) -> Result<CoefficientSet> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        let (reg, factor) = regularize(&self.gram, self.n, lambda)?;
        let mut beta = Vec::with_capacity(self.targets);
        let mut fit_stats = Vec::with_capacity(self.targets);
        for k in 0..self.targets {
            let rhs = self.aty.column(k).into_owned();
            let bk = solve_refined(&reg, &factor, &rhs).map_err(|e| match e {
                Error::SingularSystem => Error::InvalidParam(format!(
                    "component {k}: normal equations singular or too ill-conditioned; \
                     increase lambda (got {lambda})"
                )),
                other => other,
            })?;
            // |y - A b|^2 = y^T y - 2 b^T (A^T y) + b^T G b; mild cancellation
            // is acceptable at the residual scales encountered here.
            let quad = (&self.gram * &bk).dot(&bk);
            let res2 = (self.yty[k] - 2.0 * bk.dot(&rhs) + quad).max(0.0);
            fit_stats.push((res2 / self.n as f64).sqrt());
            beta.push(bk.data.into());
        }
        Ok(CoefficientSet {
            beta,
            lambda,
            fit_stats,
        })
    }
}

/// Everything fit_model needs to know beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub lambda: f64,
    pub label: String,
    /// Delay time of the embedding, carried into the model file.
    pub tau: f64,
    /// Sampling interval of the training series.
    pub dt: f64,
    pub sample_seed: Option<u64>,
    pub training_time: f64,
}

/// Fit the full model: one shared feature matrix, D ridge solves, packaged
/// with the dataset's scaling.
pub fn fit_model(
    dataset: &RegressionDataset,
    spec: &BasisSpec,
    opts: &FitOptions,
) -> Result<OdeModel> {
    let ws = RidgeWorkspace::build(dataset, spec)?;
    let coeffs = ws.solve(opts.lambda)?;
    assemble_model(dataset, spec, &coeffs, opts)
}

/// Package an already-solved coefficient set as an [`OdeModel`].
pub fn assemble_model(
    dataset: &RegressionDataset,
    spec: &BasisSpec,
    coeffs: &CoefficientSet,
    opts: &FitOptions,
) -> Result<OdeModel> {
    let meta = ModelMeta {
        label: opts.label.clone(),
        n_samples: dataset.n,
        lambda: coeffs.lambda,
        training_time: opts.training_time,
        sample_seed: opts.sample_seed,
        anchor_state: dataset.raw_input(0),
    };
    OdeModel::new(
        spec.clone(),
        dataset.scaling.clone(),
        coeffs.beta.clone(),
        opts.tau,
        opts.dt,
        meta,
    )
}

/// Relative per-sample errors of a model on a dataset, in standardized
/// coordinates: |F(X_i) - y_i| / |y_i|.
#[derive(Debug, Clone)]
pub struct RegressionErrors {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    /// Samples skipped because |y_i| < 1e-12.
    pub excluded: usize,
}

pub fn regression_error(model: &OdeModel, dataset: &RegressionDataset) -> Result<RegressionErrors> {
    if model.dim() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: dataset.dim(),
        });
    }
    if !model.scaling.approx_eq(&dataset.scaling, 1e-9) {
        return Err(Error::ScalingMismatch);
    }
    let dim = model.dim();
    let mut f = vec![0.0; dim];
    let mut per_sample = Vec::with_capacity(dataset.n);
    let mut excluded = 0usize;
    let mut sum = 0.0;
    for i in 0..dataset.n {
        model.rhs_std_into(dataset.input(i), &mut f);
        let y = dataset.target(i);
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ynorm < 1e-12 {
            excluded += 1;
            continue;
        }
        let enorm = f
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rel = enorm / ynorm;
        per_sample.push(rel);
        sum += rel;
    }
    if per_sample.is_empty() {
        return Err(Error::EmptySelection(
            "all samples had near-zero derivative targets".into(),
        ));
    }
    let mean = sum / per_sample.len() as f64;
    Ok(RegressionErrors {
        per_sample,
        mean,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_rbf_centers_from_points;
    use crate::timeseries::ScalingParams;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_matrix_interpolates_at_lambda_zero() {
        let p = RidgeProblem {
            a: DMatrix::identity(3, 3),
            y: DVector::from_vec(vec![1.0, 2.0, 3.0]),
            lambda: 0.0,
        };
        let beta = ridge_fit(&p).unwrap();
        for (b, y) in beta.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*b, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn hand_evaluated_closed_form() {
        // A = [[1],[1]], y = (1,1), n = 2, lambda = 0.5:
        // beta = (2 + 2*0.5)^-1 * 2 = 2/3.
        let p = RidgeProblem {
            a: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            y: DVector::from_vec(vec![1.0, 1.0]),
            lambda: 0.5,
        };
        let beta = ridge_fit(&p).unwrap();
        assert_relative_eq!(beta[0], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(20, 5, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let beta = ridge_fit(&RidgeProblem {
            a,
            y,
            lambda: 1e9,
        })
        .unwrap();
        let norm: f64 = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(norm <= 1e-6, "norm {norm}");
    }

    #[test]
    fn duplicate_columns_singular_at_lambda_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..6 {
            a[(i, 2)] = a[(i, 0)];
        }
        let y = DVector::from_fn(6, |i, _| i as f64);
        let err = ridge_fit(&RidgeProblem {
            a: a.clone(),
            y: y.clone(),
            lambda: 0.0,
        })
        .unwrap_err();
        assert!(matches!(err, Error::SingularSystem));
        // A positive lambda restores solvability.
        assert!(ridge_fit(&RidgeProblem {
            a,
            y,
            lambda: 1e-6
        })
        .is_ok());
    }

    #[test]
    fn matches_explicit_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for &lambda in &[0.0, 1e-6, 1e-2, 1.0] {
            let n = 50;
            let f = 20;
            let a = DMatrix::from_fn(n, f, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let beta = ridge_fit(&RidgeProblem {
                a: a.clone(),
                y: y.clone(),
                lambda,
            })
            .unwrap();
            let mut reg = a.tr_mul(&a);
            for i in 0..f {
                reg[(i, i)] += n as f64 * lambda;
            }
            let oracle = reg.try_inverse().unwrap() * a.tr_mul(&y);
            for i in 0..f {
                assert_relative_eq!(beta[i], oracle[i], max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = DMatrix::from_fn(40, 8, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for &lambda in &[1e-8, 1e-6, 1e-4, 1e-2, 1.0, 100.0] {
            let beta = ridge_fit(&RidgeProblem {
                a: a.clone(),
                y: y.clone(),
                lambda,
            })
            .unwrap();
            let norm: f64 = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(norm <= last + 1e-10, "lambda {lambda}: {norm} > {last}");
            last = norm;
        }
    }

    /// Dataset sampling dX/dt = -X on a grid, with a basis rich enough to
    /// overfit; the known generator is the oracle. Narrow Gaussians
    /// (m=2, p=0.01) keep the cheapest representation of a linear field on
    /// the linear features, so the fitted weights are interpretable.
    fn minus_x_dataset_and_spec() -> (RegressionDataset, BasisSpec) {
        let dim = 2;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                let x = -1.2 + 0.4 * i as f64;
                let y = -1.2 + 0.4 * j as f64;
                inputs.extend_from_slice(&[x, y]);
                targets.extend_from_slice(&[-x, -y]);
            }
        }
        let ds = RegressionDataset::from_parts(
            inputs.clone(),
            targets,
            dim,
            ScalingParams::identity(dim),
        )
        .unwrap();
        let grid = build_rbf_centers_from_points(&inputs, dim, 0.4, 2, 0.01, 1_000_000).unwrap();
        (ds, BasisSpec::LinearRbf(grid))
    }

    fn opts(lambda: f64) -> FitOptions {
        FitOptions {
            lambda,
            label: "oracle".into(),
            tau: 0.1,
            dt: 0.01,
            sample_seed: None,
            training_time: 1.0,
        }
    }

    #[test]
    fn linear_oracle_recovers_minus_identity() {
        let (ds, spec) = minus_x_dataset_and_spec();
        let model = fit_model(&ds, &spec, &opts(1e-8)).unwrap();
        // Weight should concentrate on the linear features...
        for k in 0..2 {
            for d in 0..2 {
                let expect = if k == d { -1.0 } else { 0.0 };
                assert!(
                    (model.coefficient(k, 1 + d) - expect).abs() <= 0.05,
                    "linear coef ({k},{d}) = {}",
                    model.coefficient(k, 1 + d)
                );
            }
            // ...with RBF weights near zero.
            for f in (1 + 2)..spec.feature_count() {
                assert!(
                    model.coefficient(k, f).abs() <= 0.05,
                    "rbf coef ({k},{f}) = {}",
                    model.coefficient(k, f)
                );
            }
        }
        // And the assembled field reproduces -X at the training points.
        for i in 0..ds.n {
            let x = ds.raw_input(i);
            let f = model.eval_rhs(&x).unwrap();
            for d in 0..2 {
                assert!((f[d] + x[d]).abs() <= 1e-4, "F({x:?}) = {f:?}");
            }
        }
    }

    #[test]
    fn regression_error_self_consistency_and_exclusion() {
        let (ds, spec) = minus_x_dataset_and_spec();
        let model = fit_model(&ds, &spec, &opts(1e-10)).unwrap();
        let errs = regression_error(&model, &ds).unwrap();
        assert!(errs.mean <= 1e-6, "mean {}", errs.mean);
        // The grid contains the origin, whose target is exactly zero.
        assert_eq!(errs.excluded, 1);
        assert_eq!(errs.per_sample.len() + errs.excluded, ds.n);
    }

    #[test]
    fn regression_error_detects_scaling_mismatch() {
        let (ds, spec) = minus_x_dataset_and_spec();
        let model = fit_model(&ds, &spec, &opts(1e-8)).unwrap();
        let other = RegressionDataset::from_parts(
            ds.inputs_flat().to_vec(),
            ds.targets_flat().to_vec(),
            2,
            ScalingParams::shared(0.5, 2.0, 2).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            regression_error(&model, &other),
            Err(Error::ScalingMismatch)
        ));
    }

    #[test]
    fn workspace_agrees_with_direct_ridge_fit() {
        let (ds, spec) = minus_x_dataset_and_spec();
        let f = spec.feature_count();
        let ws = RidgeWorkspace::build(&ds, &spec).unwrap();
        assert_eq!(ws.feature_count(), f);
        let coeffs = ws.solve(1e-4).unwrap();
        // Build the explicit feature matrix and compare per component.
        let mut a = DMatrix::zeros(ds.n, f);
        let mut row = vec![0.0; f];
        for i in 0..ds.n {
            basis::eval_features_into(ds.input(i), &spec, &mut row).unwrap();
            for j in 0..f {
                a[(i, j)] = row[j];
            }
        }
        for k in 0..2 {
            let y = DVector::from_fn(ds.n, |i, _| ds.target(i)[k]);
            let direct = ridge_fit(&RidgeProblem {
                a: a.clone(),
                y: y.clone(),
                lambda: 1e-4,
            })
            .unwrap();
            for j in 0..f {
                assert_relative_eq!(
                    coeffs.beta[k][j],
                    direct[j],
                    max_relative = 1e-9,
                    epsilon = 1e-11
                );
            }
            // fit_stats must match the residual computed the long way.
            let residual = (&y - &a * DVector::from_vec(direct)).norm();
            assert_relative_eq!(
                coeffs.fit_stats[k],
                residual / (ds.n as f64).sqrt(),
                max_relative = 1e-6,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn row_permutation_leaves_beta_unchanged() {
        let (ds, spec) = minus_x_dataset_and_spec();
        let ws = RidgeWorkspace::build(&ds, &spec).unwrap();
        let base = ws.solve(1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let mut order: Vec<usize> = (0..ds.n).collect();
            order.shuffle(&mut rng);
            let mut inputs = Vec::with_capacity(ds.n * 2);
            let mut targets = Vec::with_capacity(ds.n * 2);
            for &i in &order {
                inputs.extend_from_slice(ds.input(i));
                targets.extend_from_slice(ds.target(i));
            }
            let shuffled = RegressionDataset::from_parts(
                inputs,
                targets,
                2,
                ScalingParams::identity(2),
            )
            .unwrap();
            let coeffs = RidgeWorkspace::build(&shuffled, &spec)
                .unwrap()
                .solve(1e-6)
                .unwrap();
            for k in 0..2 {
                for j in 0..spec.feature_count() {
                    assert!(
                        (coeffs.beta[k][j] - base.beta[k][j]).abs() <= 1e-10,
                        "component {k}, feature {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (ds, _) = minus_x_dataset_and_spec();
        let wrong = BasisSpec::Polynomial(crate::basis::PolynomialBasis::new(3, 2).unwrap());
        assert!(matches!(
            fit_model(&ds, &wrong, &opts(1e-6)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
