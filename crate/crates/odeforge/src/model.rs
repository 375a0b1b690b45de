//! The learned ODE dX/dt = F(X): evaluation in raw coordinates through the
//! standardization chain rule, analytic Jacobians, and the versioned model
//! file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::timeseries::ScalingParams;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Gaussians with exponent below this are dropped from model evaluation;
/// exp(-50) ~ 2e-22, far below noise in O(1) standardized sums. Feature
/// evaluation in `basis` stays exact — the cutoff exists only here, in the
/// integration hot path.
const EXP_CUTOFF: f64 = -50.0;

/// Provenance carried inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Free-form run label (recipe or experiment name).
    pub label: String,
    /// Rows in the regression.
    pub n_samples: usize,
    /// Ridge regularization used for the fit.
    pub lambda: f64,
    /// Time span of the training series.
    pub training_time: f64,
    /// Seed of the sample-point selection, when randomized.
    pub sample_seed: Option<u64>,
    /// One raw training state; a natural initial condition for simulation.
    pub anchor_state: Vec<f64>,
}

/// A fitted vector field: linear-in-features coefficients over a basis, plus
/// the standardization that maps raw delay coordinates into fitting space.
///
/// Evaluation composes F_raw(X) = std * F_std((X - mean) / std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelWire", into = "ModelWire")]
pub struct OdeModel {
    dim: usize,
    pub tau: f64,
    pub dt: f64,
    pub basis: BasisSpec,
    pub scaling: ScalingParams,
    /// Feature-major flat coefficients: entry (f, k) at f * dim + k is the
    /// weight of feature f in component k. Feature-major keeps the D
    /// accumulators of the evaluation loop on one cache line.
    coeffs_fm: Vec<f64>,
    pub meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    version: u32,
    #[serde(rename = "D")]
    dim: usize,
    tau: f64,
    dt: f64,
    basis: BasisSpec,
    scaling: ScalingParams,
    /// Component-major on disk: coefficients[k][f].
    coefficients: Vec<Vec<f64>>,
    meta: ModelMeta,
}

impl From<OdeModel> for ModelWire {
    fn from(m: OdeModel) -> Self {
        Self {
            version: MODEL_SCHEMA_VERSION,
            dim: m.dim,
            tau: m.tau,
            dt: m.dt,
            coefficients: m.coefficient_rows(),
            basis: m.basis,
            scaling: m.scaling,
            meta: m.meta,
        }
    }
}

impl TryFrom<ModelWire> for OdeModel {
    type Error = Error;

    fn try_from(w: ModelWire) -> Result<Self> {
        if w.version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION,
                found: w.version.to_string(),
            });
        }
        OdeModel::new(w.basis, w.scaling, w.coefficients, w.tau, w.dt, w.meta)
    }
}

impl OdeModel {
    /// `coefficients[k][f]`: one row of feature weights per component k.
    pub fn new(
        basis: BasisSpec,
        scaling: ScalingParams,
        coefficients: Vec<Vec<f64>>,
        tau: f64,
        dt: f64,
        meta: ModelMeta,
    ) -> Result<Self> {
        let dim = basis.dim();
        let feature_count = basis.feature_count();
        if scaling.dim() != dim {
            return Err(Error::ScalingMismatch);
        }
        if coefficients.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coefficients.len(),
            });
        }
        for row in &coefficients {
            if row.len() != feature_count {
                return Err(Error::DimensionMismatch {
                    expected: feature_count,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model coefficient".into()));
            }
        }
        let mut coeffs_fm = vec![0.0; dim * feature_count];
        for (k, row) in coefficients.iter().enumerate() {
            for (f, &v) in row.iter().enumerate() {
                coeffs_fm[f * dim + k] = v;
            }
        }
        Ok(Self {
            dim,
            tau,
            dt,
            basis,
            scaling,
            coeffs_fm,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_count(&self) -> usize {
        self.basis.feature_count()
    }

    /// Weight of feature `f` in component `k`.
    pub fn coefficient(&self, k: usize, f: usize) -> f64 {
        self.coeffs_fm[f * self.dim + k]
    }

    /// Component-major copy of the coefficients (rows of length F).
    pub fn coefficient_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|k| {
                (0..self.feature_count())
                    .map(|f| self.coeffs_fm[f * self.dim + k])
                    .collect()
            })
            .collect()
    }

    /// F in standardized coordinates: out_k = sum_f beta_fk feature_f(xs).
    pub fn rhs_std_into(&self, xs: &[f64], out: &mut [f64]) {
        let dim = self.dim;
        let c = &self.coeffs_fm;
        out.copy_from_slice(&c[..dim]);
        match &self.basis {
            BasisSpec::LinearRbf(grid) => {
                for d in 0..dim {
                    let xd = xs[d];
                    let row = (1 + d) * dim;
                    for k in 0..dim {
                        out[k] += c[row + k] * xd;
                    }
                }
                let inv_s2 = 1.0 / grid.sigma2();
                let mut row = (1 + dim) * dim;
                for cj in grid.centers_flat().chunks_exact(dim) {
                    let mut d2 = 0.0;
                    for d in 0..dim {
                        let diff = xs[d] - cj[d];
                        d2 += diff * diff;
                    }
                    let t = -d2 * inv_s2;
                    if t >= EXP_CUTOFF {
                        let phi = t.exp();
                        for k in 0..dim {
                            out[k] += c[row + k] * phi;
                        }
                    }
                    row += dim;
                }
            }
            BasisSpec::Polynomial(poly) => {
                out.fill(0.0);
                for f in 0..poly.feature_count() {
                    let mut v = 1.0;
                    for (d, &e) in poly.exponent(f).iter().enumerate() {
                        if e > 0 {
                            v *= xs[d].powi(e as i32);
                        }
                    }
                    let row = f * dim;
                    for k in 0..dim {
                        out[k] += c[row + k] * v;
                    }
                }
            }
        }
    }

    /// Jacobian of F in standardized coordinates, flat row-major.
    pub fn jacobian_std_into(&self, xs: &[f64], out: &mut [f64]) {
        let mut rhs_scratch = vec![0.0; self.dim];
        self.rhs_and_jacobian_std_into(xs, &mut rhs_scratch, out);
    }

    /// Fused F and dF/dX in standardized coordinates; the Gaussian of each
    /// center is computed once and feeds both.
    pub fn rhs_and_jacobian_std_into(&self, xs: &[f64], rhs: &mut [f64], jac: &mut [f64]) {
        let dim = self.dim;
        let c = &self.coeffs_fm;
        rhs.copy_from_slice(&c[..dim]);
        jac.fill(0.0);
        match &self.basis {
            BasisSpec::LinearRbf(grid) => {
                for d in 0..dim {
                    let xd = xs[d];
                    let row = (1 + d) * dim;
                    for k in 0..dim {
                        rhs[k] += c[row + k] * xd;
                        jac[k * dim + d] += c[row + k];
                    }
                }
                let inv_s2 = 1.0 / grid.sigma2();
                let mut row = (1 + dim) * dim;
                let mut diff = vec![0.0; dim];
                for cj in grid.centers_flat().chunks_exact(dim) {
                    let mut d2 = 0.0;
                    for d in 0..dim {
                        diff[d] = xs[d] - cj[d];
                        d2 += diff[d] * diff[d];
                    }
                    let t = -d2 * inv_s2;
                    if t >= EXP_CUTOFF {
                        let phi = t.exp();
                        for k in 0..dim {
                            let ck = c[row + k];
                            rhs[k] += ck * phi;
                            let scale = -2.0 * inv_s2 * ck * phi;
                            for d in 0..dim {
                                jac[k * dim + d] += scale * diff[d];
                            }
                        }
                    }
                    row += dim;
                }
            }
            BasisSpec::Polynomial(poly) => {
                rhs.fill(0.0);
                for f in 0..poly.feature_count() {
                    let exps = poly.exponent(f);
                    let mut v = 1.0;
                    for (d, &e) in exps.iter().enumerate() {
                        if e > 0 {
                            v *= xs[d].powi(e as i32);
                        }
                    }
                    let row = f * dim;
                    for k in 0..dim {
                        rhs[k] += c[row + k] * v;
                    }
                    for d in 0..dim {
                        if exps[d] == 0 {
                            continue;
                        }
                        let mut g = exps[d] as f64;
                        for (i, &e) in exps.iter().enumerate() {
                            let e = if i == d { e - 1 } else { e };
                            if e > 0 {
                                g *= xs[i].powi(e as i32);
                            }
                        }
                        for k in 0..dim {
                            jac[k * dim + d] += c[row + k] * g;
                        }
                    }
                }
            }
        }
    }

    fn standardize_scratch<'a>(
        &self,
        x_raw: &[f64],
        stack: &'a mut [f64; 16],
        heap: &'a mut Vec<f64>,
    ) -> &'a mut [f64] {
        let dim = self.dim;
        let xs: &mut [f64] = if dim <= stack.len() {
            &mut stack[..dim]
        } else {
            heap.resize(dim, 0.0);
            heap
        };
        self.scaling.standardize_into(x_raw, xs);
        xs
    }

    /// F in raw coordinates (unchecked fast path; see [`OdeModel::eval_rhs`]
    /// for the validating wrapper).
    pub fn rhs_raw_into(&self, x_raw: &[f64], out: &mut [f64]) {
        let mut stack = [0.0; 16];
        let mut heap = Vec::new();
        let xs = self.standardize_scratch(x_raw, &mut stack, &mut heap);
        self.rhs_std_into(xs, out);
        for k in 0..self.dim {
            out[k] *= self.scaling.std[k];
        }
    }

    /// dF/dX in raw coordinates: J_raw[r][c] = (std_r / std_c) J_std[r][c].
    pub fn jacobian_raw_into(&self, x_raw: &[f64], out: &mut [f64]) {
        let mut stack = [0.0; 16];
        let mut heap = Vec::new();
        let xs = self.standardize_scratch(x_raw, &mut stack, &mut heap);
        self.jacobian_std_into(xs, out);
        self.unscale_jacobian(out);
    }

    fn unscale_jacobian(&self, jac: &mut [f64]) {
        let dim = self.dim;
        for r in 0..dim {
            for cidx in 0..dim {
                jac[r * dim + cidx] *= self.scaling.std[r] / self.scaling.std[cidx];
            }
        }
    }

    /// Validating raw-coordinate evaluation of dX/dt.
    pub fn eval_rhs(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x_raw)?;
        let mut out = vec![0.0; self.dim];
        self.rhs_raw_into(x_raw, &mut out);
        Ok(out)
    }

    /// Validating raw-coordinate evaluation of dF/dX (flat row-major).
    pub fn eval_jacobian(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x_raw)?;
        let mut out = vec![0.0; self.dim * self.dim];
        self.jacobian_raw_into(x_raw, &mut out);
        Ok(out)
    }

    /// F in standardized coordinates (validating); the regression-space view
    /// used by fit diagnostics.
    pub fn eval_rhs_std(&self, x_std: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x_std)?;
        let mut out = vec![0.0; self.dim];
        self.rhs_std_into(x_std, &mut out);
        Ok(out)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input state".into()));
        }
        Ok(())
    }
}

impl Dynamics for OdeModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        self.rhs_raw_into(x, out);
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        self.jacobian_raw_into(x, out);
    }

    fn rhs_and_jacobian(&self, x: &[f64], rhs_out: &mut [f64], jac_out: &mut [f64]) {
        let mut stack = [0.0; 16];
        let mut heap = Vec::new();
        let xs = self.standardize_scratch(x, &mut stack, &mut heap);
        self.rhs_and_jacobian_std_into(xs, rhs_out, jac_out);
        for k in 0..self.dim {
            rhs_out[k] *= self.scaling.std[k];
        }
        self.unscale_jacobian(jac_out);
    }
}

/// Write the model file (single-line JSON; f64 values round-trip exactly).
pub fn save_model(model: &OdeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string(model).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a model file, checking the schema version before anything else.
pub fn load_model(path: impl AsRef<Path>) -> Result<OdeModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    match value.get("version") {
        None => {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION,
                found: "none".into(),
            })
        }
        Some(v) if v.as_u64() != Some(MODEL_SCHEMA_VERSION as u64) => {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION,
                found: v.to_string(),
            })
        }
        Some(_) => {}
    }
    serde_json::from_value(value).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{self, build_rbf_centers_from_points, BasisSpec, PolynomialBasis};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta() -> ModelMeta {
        ModelMeta {
            label: "test".into(),
            n_samples: 0,
            lambda: 1e-7,
            training_time: 0.0,
            sample_seed: None,
            anchor_state: vec![0.0, 0.0],
        }
    }

    fn rbf_spec_2d() -> BasisSpec {
        let points = vec![0.0, 0.0, 0.8, -0.4, -0.6, 0.7];
        BasisSpec::LinearRbf(
            build_rbf_centers_from_points(&points, 2, 0.5, 3, 0.1, 1_000_000).unwrap(),
        )
    }

    fn random_model(spec: BasisSpec, scaling: ScalingParams, seed: u64) -> OdeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..spec.dim())
            .map(|_| {
                (0..spec.feature_count())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        OdeModel::new(spec, scaling, coefficients, 0.13, 0.005, meta()).unwrap()
    }

    #[test]
    fn zero_coefficients_zero_field() {
        let spec = rbf_spec_2d();
        let coefficients = vec![vec![0.0; spec.feature_count()]; 2];
        let m = OdeModel::new(
            spec,
            ScalingParams::shared(1.0, 2.0, 2).unwrap(),
            coefficients,
            0.13,
            0.005,
            meta(),
        )
        .unwrap();
        assert_eq!(m.eval_rhs(&[3.0, -4.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.eval_jacobian(&[3.0, -4.0]).unwrap(), vec![0.0; 4]);
    }

    /// A model holding exactly dX/dt = -X: linear features with weight -1,
    /// expressed through a non-trivial scaling to exercise the chain rule.
    fn minus_identity_model() -> OdeModel {
        let spec = rbf_spec_2d();
        let f = spec.feature_count();
        let scaling = ScalingParams::shared(0.7, 2.5, 2).unwrap();
        let mut coefficients = vec![vec![0.0; f]; 2];
        // F_std(Xs) = -(Xs + mean/std) makes F_raw(X) = -X.
        for k in 0..2 {
            coefficients[k][0] = -0.7 / 2.5;
            coefficients[k][1 + k] = -1.0;
        }
        OdeModel::new(spec, scaling, coefficients, 0.13, 0.005, meta()).unwrap()
    }

    #[test]
    fn scaling_chain_rule_reproduces_minus_x() {
        let m = minus_identity_model();
        let x = [1.9, -3.3];
        let f = m.eval_rhs(&x).unwrap();
        assert_relative_eq!(f[0], -x[0], max_relative = 1e-12);
        assert_relative_eq!(f[1], -x[1], max_relative = 1e-12);
        let jac = m.eval_jacobian(&x).unwrap();
        let expect = [-1.0, 0.0, 0.0, -1.0];
        for i in 0..4 {
            assert_relative_eq!(jac[i], expect[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn model_rhs_matches_explicit_feature_dot() {
        // The fused path must agree with eval_features + dot product.
        let spec = rbf_spec_2d();
        let m = random_model(spec.clone(), ScalingParams::shared(0.3, 1.7, 2).unwrap(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-4.0..4.0)).collect();
            let f = m.eval_rhs(&x).unwrap();
            let xs = m.scaling.standardize(&x);
            let feats = basis::eval_features(&xs, &spec).unwrap();
            for k in 0..2 {
                let dot: f64 = (0..spec.feature_count())
                    .map(|j| m.coefficient(k, j) * feats[j])
                    .sum();
                assert_relative_eq!(f[k], dot * m.scaling.std[k], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_rbf_and_poly() {
        let specs = [
            rbf_spec_2d(),
            BasisSpec::Polynomial(PolynomialBasis::new(2, 3).unwrap()),
        ];
        for (si, spec) in specs.into_iter().enumerate() {
            let m = random_model(spec, ScalingParams::shared(0.1, 1.3, 2).unwrap(), si as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + si as u64);
            let h = 1e-6;
            for _ in 0..100 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
                let jac = m.eval_jacobian(&x).unwrap();
                for c in 0..2 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[c] += h;
                    xm[c] -= h;
                    let fp = m.eval_rhs(&xp).unwrap();
                    let fm = m.eval_rhs(&xm).unwrap();
                    for r in 0..2 {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        assert!(
                            (jac[r * 2 + c] - fd).abs() <= 1e-5,
                            "spec {si} entry ({r},{c}): {} vs {fd}",
                            jac[r * 2 + c]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn fused_rhs_jacobian_agrees_with_separate_calls() {
        let m = random_model(rbf_spec_2d(), ScalingParams::shared(0.2, 2.1, 2).unwrap(), 9);
        let x = [1.1, -0.7];
        let mut rhs_f = vec![0.0; 2];
        let mut jac_f = vec![0.0; 4];
        m.rhs_and_jacobian(&x, &mut rhs_f, &mut jac_f);
        assert_eq!(rhs_f, m.eval_rhs(&x).unwrap());
        assert_eq!(jac_f, m.eval_jacobian(&x).unwrap());
    }

    #[test]
    fn rejects_non_finite_input() {
        let m = minus_identity_model();
        assert!(matches!(
            m.eval_rhs(&[f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            m.eval_jacobian(&[0.0, f64::INFINITY]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            m.eval_rhs(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = random_model(rbf_spec_2d(), ScalingParams::shared(0.9, 3.7, 2).unwrap(), 23);
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        // 0-ulp agreement of evaluations at random states.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(m.eval_rhs(&x).unwrap(), back.eval_rhs(&x).unwrap());
        }
        // Saving the reloaded model reproduces the file byte-for-byte.
        let path2 = dir.path().join("model2.json");
        save_model(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn load_rejects_missing_or_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = random_model(rbf_spec_2d(), ScalingParams::shared(0.0, 1.0, 2).unwrap(), 2);
        save_model(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let no_version = text.replacen("\"version\":1,", "", 1);
        std::fs::write(&path, &no_version).unwrap();
        match load_model(&path) {
            Err(Error::SchemaVersion { found, .. }) => assert_eq!(found, "none"),
            other => panic!("expected SchemaVersion error, got {other:?}"),
        }

        let wrong_version = text.replacen("\"version\":1,", "\"version\":999,", 1);
        std::fs::write(&path, &wrong_version).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::SchemaVersion { .. })
        ));

        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_model(&path), Err(Error::Csv { .. })));
    }

    #[test]
    fn model_integrates_like_plain_minus_x() {
        let m = minus_identity_model();
        let traj = crate::dynamics::integrate(&m, &[1.0, 2.0], 1.0, 1e-3, 1e6).unwrap();
        let end = traj.state(traj.len() - 1);
        assert!((end[0] - (-1.0f64).exp()).abs() <= 1e-8);
        assert!((end[1] - 2.0 * (-1.0f64).exp()).abs() <= 1e-8);
    }
}
