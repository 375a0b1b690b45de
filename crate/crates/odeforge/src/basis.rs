//! Feature dictionaries: constant + linear + Gaussian radial basis
//! functions on a pruned lattice, and polynomial features in graded
//! lexicographic order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::RegressionDataset;

/// Gaussian bandwidth from the grid geometry:
/// sigma^2 = ((m - 1) * delta_grid)^2 / (-ln p),
/// chosen so that phi drops to p at the pruning radius (m - 1) * delta_grid.
pub fn rbf_sigma2(delta_grid: f64, m: u32, p: f64) -> Result<f64> {
    if !(delta_grid > 0.0 && delta_grid.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "delta_grid must be positive and finite, got {delta_grid}"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidParam(format!("m must be >= 2, got {m}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParam(format!(
            "p must lie in (0, 1), got {p}"
        )));
    }
    let r = (m - 1) as f64 * delta_grid;
    Ok(r * r / (-p.ln()))
}

/// Gaussian RBF centers on a regular lattice of spacing `delta_grid`,
/// pruned to nodes with at least one data point within `(m - 1) * delta_grid`
/// (Euclidean, standardized coordinates).
///
/// Centers are stored flat (J x dim, row-major), sorted lexicographically by
/// lattice index, so construction is deterministic and independent of data
/// ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RbfGridWire", into = "RbfGridWire")]
pub struct RbfGrid {
    delta_grid: f64,
    m: u32,
    p: f64,
    sigma2: f64,
    dim: usize,
    centers: Vec<f64>,
}

impl RbfGrid {
    pub fn delta_grid(&self) -> f64 {
        self.delta_grid
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of retained centers J.
    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centers_flat(&self) -> &[f64] {
        &self.centers
    }
}

/// On-disk shape of [`RbfGrid`]: centers as explicit rows.
#[derive(Serialize, Deserialize)]
struct RbfGridWire {
    delta_grid: f64,
    m: u32,
    p: f64,
    sigma2: f64,
    centers: Vec<Vec<f64>>,
}

impl From<RbfGrid> for RbfGridWire {
    fn from(g: RbfGrid) -> Self {
        let centers = g
            .centers
            .chunks_exact(g.dim)
            .map(|c| c.to_vec())
            .collect();
        Self {
            delta_grid: g.delta_grid,
            m: g.m,
            p: g.p,
            sigma2: g.sigma2,
            centers,
        }
    }
}

impl TryFrom<RbfGridWire> for RbfGrid {
    type Error = Error;

    fn try_from(w: RbfGridWire) -> Result<Self> {
        let expected = rbf_sigma2(w.delta_grid, w.m, w.p)?;
        if !((w.sigma2 - expected).abs() <= 1e-9 * expected.max(1e-300)) {
            return Err(Error::InvalidParam(format!(
                "sigma2 = {} inconsistent with delta_grid/m/p (expected {})",
                w.sigma2, expected
            )));
        }
        let dim = match w.centers.first() {
            Some(row) => row.len(),
            None => {
                return Err(Error::InvalidParam(
                    "RBF grid must contain at least one center".into(),
                ))
            }
        };
        if dim == 0 || w.centers.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidParam(
                "RBF centers must be non-empty rows of equal length".into(),
            ));
        }
        let mut centers = Vec::with_capacity(w.centers.len() * dim);
        for row in &w.centers {
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite("RBF center coordinate".into()));
                }
                centers.push(v);
            }
        }
        Ok(Self {
            delta_grid: w.delta_grid,
            m: w.m,
            p: w.p,
            sigma2: w.sigma2,
            dim,
            centers,
        })
    }
}

/// Polynomial dictionary: all monomials in `dim` variables up to total
/// degree `degree`, graded lexicographic order (degree-major; within a
/// degree, higher powers of earlier variables first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyWire", into = "PolyWire")]
pub struct PolynomialBasis {
    dim: usize,
    degree: u32,
    /// Flat exponent table, feature_count x dim.
    exponents: Vec<u32>,
}

const MONOMIAL_ORDERING: &str = "graded-lex";

#[derive(Serialize, Deserialize)]
struct PolyWire {
    dim: usize,
    degree: u32,
    ordering: String,
}

impl From<PolynomialBasis> for PolyWire {
    fn from(p: PolynomialBasis) -> Self {
        Self {
            dim: p.dim,
            degree: p.degree,
            ordering: MONOMIAL_ORDERING.to_string(),
        }
    }
}

impl TryFrom<PolyWire> for PolynomialBasis {
    type Error = Error;

    fn try_from(w: PolyWire) -> Result<Self> {
        if w.ordering != MONOMIAL_ORDERING {
            return Err(Error::InvalidParam(format!(
                "unsupported monomial ordering '{}' (expected '{MONOMIAL_ORDERING}')",
                w.ordering
            )));
        }
        PolynomialBasis::new(w.dim, w.degree)
    }
}

impl PolynomialBasis {
    pub fn new(dim: usize, degree: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("polynomial dim must be >= 1".into()));
        }
        if degree < 1 {
            return Err(Error::InvalidParam(
                "polynomial degree must be >= 1".into(),
            ));
        }
        let mut exponents = Vec::new();
        let mut current = vec![0u32; dim];
        for total in 0..=degree {
            emit_monomials(&mut exponents, &mut current, 0, total);
        }
        Ok(Self {
            dim,
            degree,
            exponents,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn feature_count(&self) -> usize {
        self.exponents.len() / self.dim
    }

    pub fn exponent(&self, f: usize) -> &[u32] {
        &self.exponents[f * self.dim..(f + 1) * self.dim]
    }
}

/// Append, in lexicographic order (earlier variables take the highest
/// powers first), every exponent vector over dims `d..` summing to `total`.
fn emit_monomials(out: &mut Vec<u32>, current: &mut Vec<u32>, d: usize, total: u32) {
    if d + 1 == current.len() {
        current[d] = total;
        out.extend_from_slice(current);
        return;
    }
    for e in (0..=total).rev() {
        current[d] = e;
        emit_monomials(out, current, d + 1, total - e);
    }
}

/// A complete feature dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisSpec {
    /// [1, X_1 .. X_D, phi_1(X) .. phi_J(X)] with Gaussian phi_j.
    LinearRbf(RbfGrid),
    /// All monomials up to a total degree.
    Polynomial(PolynomialBasis),
}

impl BasisSpec {
    pub fn dim(&self) -> usize {
        match self {
            BasisSpec::LinearRbf(g) => g.dim(),
            BasisSpec::Polynomial(p) => p.dim(),
        }
    }

    pub fn feature_count(&self) -> usize {
        match self {
            BasisSpec::LinearRbf(g) => 1 + g.dim() + g.len(),
            BasisSpec::Polynomial(p) => p.feature_count(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BasisSpec::LinearRbf(_) => "linear-rbf",
            BasisSpec::Polynomial(_) => "polynomial",
        }
    }
}

/// Build the pruned RBF lattice for a dataset's standardized states.
///
/// A lattice node k*delta (k an integer vector) is retained iff some data
/// point lies within (m-1)*delta of it. Enumeration walks, per data point,
/// the integer ball of radius (m-1) around the point's fractional lattice
/// coordinates, so cost scales with the retained volume rather than the
/// bounding box.
pub fn build_rbf_centers(
    dataset: &RegressionDataset,
    delta_grid: f64,
    m: u32,
    p: f64,
    center_cap: usize,
) -> Result<RbfGrid> {
    build_rbf_centers_from_points(dataset.inputs_flat(), dataset.dim(), delta_grid, m, p, center_cap)
}

/// Core of [`build_rbf_centers`], on a flat (n x dim) point set.
pub fn build_rbf_centers_from_points(
    points: &[f64],
    dim: usize,
    delta_grid: f64,
    m: u32,
    p: f64,
    center_cap: usize,
) -> Result<RbfGrid> {
    let sigma2 = rbf_sigma2(delta_grid, m, p)?;
    if dim == 0 || points.is_empty() || points.len() % dim != 0 {
        return Err(Error::InvalidParam(
            "center construction needs a non-empty (n x dim) point set".into(),
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data point coordinate".into()));
    }
    let n_points = points.len() / dim;
    let radius = (m - 1) as f64;
    let r2 = radius * radius;

    let mut keys: BTreeSet<Vec<i64>> = BTreeSet::new();
    let mut key = vec![0i64; dim];
    let mut u = vec![0.0f64; dim];
    for (pt_idx, pt) in points.chunks_exact(dim).enumerate() {
        for d in 0..dim {
            u[d] = pt[d] / delta_grid;
        }
        collect_ball(&u, r2, 0, 0.0, &mut key, &mut keys);
        if keys.len() > center_cap {
            let processed = (pt_idx + 1) as f64 / n_points as f64;
            let estimated = keys.len() as f64 / processed;
            let suggested =
                delta_grid * (estimated / center_cap as f64).powf(1.0 / dim as f64);
            return Err(Error::CenterCapExceeded {
                count: keys.len(),
                cap: center_cap,
                suggested_delta: suggested,
            });
        }
    }
    if keys.is_empty() {
        return Err(Error::EmptySelection(
            "no lattice node lies within (m-1)*delta_grid of any data point; \
             decrease delta_grid or increase m"
                .into(),
        ));
    }

    let mut centers = Vec::with_capacity(keys.len() * dim);
    for k in &keys {
        for &ki in k {
            centers.push(ki as f64 * delta_grid);
        }
    }
    Ok(RbfGrid {
        delta_grid,
        m,
        p,
        sigma2,
        dim,
        centers,
    })
}

/// Recursively enumerate integer vectors k with ||k - u||^2 <= r2, pruning
/// whole subtrees once the partial squared distance exceeds the budget.
fn collect_ball(
    u: &[f64],
    r2: f64,
    d: usize,
    partial: f64,
    key: &mut Vec<i64>,
    out: &mut BTreeSet<Vec<i64>>,
) {
    let remaining = r2 - partial;
    if remaining < 0.0 {
        return;
    }
    let half_width = remaining.sqrt();
    let lo = (u[d] - half_width).ceil() as i64;
    let hi = (u[d] + half_width).floor() as i64;
    for k in lo..=hi {
        let diff = k as f64 - u[d];
        let next = partial + diff * diff;
        if next > r2 {
            continue;
        }
        key[d] = k;
        if d + 1 == u.len() {
            if !out.contains(key.as_slice()) {
                out.insert(key.clone());
            }
        } else {
            collect_ball(u, r2, d + 1, next, key, out);
        }
    }
}

/// Evaluate the dictionary at a standardized state.
pub fn eval_features(x: &[f64], spec: &BasisSpec) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.feature_count()];
    eval_features_into(x, spec, &mut out)?;
    Ok(out)
}

/// As [`eval_features`], writing into a caller-provided buffer.
pub fn eval_features_into(x: &[f64], spec: &BasisSpec, out: &mut [f64]) -> Result<()> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: x.len(),
        });
    }
    if out.len() != spec.feature_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_count(),
            got: out.len(),
        });
    }
    match spec {
        BasisSpec::LinearRbf(grid) => {
            out[0] = 1.0;
            out[1..=grid.dim()].copy_from_slice(x);
            let inv_s2 = 1.0 / grid.sigma2();
            for (j, c) in grid.centers_flat().chunks_exact(grid.dim()).enumerate() {
                let mut d2 = 0.0;
                for d in 0..grid.dim() {
                    let diff = x[d] - c[d];
                    d2 += diff * diff;
                }
                out[1 + grid.dim() + j] = (-d2 * inv_s2).exp();
            }
        }
        BasisSpec::Polynomial(poly) => {
            for f in 0..poly.feature_count() {
                out[f] = monomial_value(x, poly.exponent(f));
            }
        }
    }
    Ok(())
}

fn monomial_value(x: &[f64], exps: &[u32]) -> f64 {
    let mut v = 1.0;
    for (d, &e) in exps.iter().enumerate() {
        if e > 0 {
            v *= x[d].powi(e as i32);
        }
    }
    v
}

/// Analytic gradient of every feature: a flat (feature_count x dim) matrix,
/// row-major; entry (f, d) is d(feature_f)/dX_d.
pub fn eval_feature_jacobian(x: &[f64], spec: &BasisSpec) -> Result<Vec<f64>> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: x.len(),
        });
    }
    let dim = spec.dim();
    let count = spec.feature_count();
    let mut jac = vec![0.0; count * dim];
    match spec {
        BasisSpec::LinearRbf(grid) => {
            // Constant row stays zero; linear rows are the identity pattern.
            for d in 0..dim {
                jac[(1 + d) * dim + d] = 1.0;
            }
            let inv_s2 = 1.0 / grid.sigma2();
            for (j, c) in grid.centers_flat().chunks_exact(dim).enumerate() {
                let mut d2 = 0.0;
                for d in 0..dim {
                    let diff = x[d] - c[d];
                    d2 += diff * diff;
                }
                let phi = (-d2 * inv_s2).exp();
                let row = (1 + dim + j) * dim;
                for d in 0..dim {
                    jac[row + d] = -2.0 * (x[d] - c[d]) * inv_s2 * phi;
                }
            }
        }
        BasisSpec::Polynomial(poly) => {
            for f in 0..count {
                let exps = poly.exponent(f);
                let row = f * dim;
                for d in 0..dim {
                    if exps[d] == 0 {
                        continue;
                    }
                    // e_d * X_d^(e_d - 1) * prod_{i != d} X_i^{e_i},
                    // evaluated on the reduced exponent vector so X_d = 0
                    // is handled exactly.
                    let mut v = exps[d] as f64;
                    for (i, &e) in exps.iter().enumerate() {
                        let e = if i == d { e - 1 } else { e };
                        if e > 0 {
                            v *= x[i].powi(e as i32);
                        }
                    }
                    jac[row + d] = v;
                }
            }
        }
    }
    Ok(jac)
}
