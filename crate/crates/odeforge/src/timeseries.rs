//! Scalar series ingestion, delay-coordinate embedding, derivative
//! estimation and regression-sample assembly.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled scalar observable w(t).
#[derive(Debug, Clone)]
pub struct ScalarSeries {
    pub values: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
    pub label: String,
}

impl ScalarSeries {
    pub fn new(values: Vec<f64>, dt: f64, t0: f64, label: impl Into<String>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self {
            values,
            dt,
            t0,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total time span covered by the samples.
    pub fn time_length(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        let var = self
            .values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.values.len() as f64;
        var.sqrt()
    }
}

/// Per-component standardization (z-score) parameters.
///
/// For delay coordinates all components observe the same scalar, so the
/// pipeline fills every component with one shared (mean, std); the delay
/// identity X_d(t) = X_{d+1}(t + tau) then survives standardization exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalingParams {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn shared(mean: f64, std: f64, dim: usize) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidParam(format!(
                "standardization requires std > 0, got {std}"
            )));
        }
        Ok(Self {
            mean: vec![mean; dim],
            std: vec![std; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize_into(&self, raw: &[f64], out: &mut [f64]) {
        for d in 0..raw.len() {
            out[d] = (raw[d] - self.mean[d]) / self.std[d];
        }
    }

    pub fn unstandardize_into(&self, std_coords: &[f64], out: &mut [f64]) {
        for d in 0..std_coords.len() {
            out[d] = std_coords[d] * self.std[d] + self.mean[d];
        }
    }

    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; raw.len()];
        self.standardize_into(raw, &mut out);
        out
    }

    pub fn unstandardize(&self, std_coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; std_coords.len()];
        self.unstandardize_into(std_coords, &mut out);
        out
    }

    /// Scale a raw time derivative into standardized units. The mean shift
    /// drops out under d/dt, leaving division by the component std.
    pub fn standardize_derivative_into(&self, raw: &[f64], out: &mut [f64]) {
        for d in 0..raw.len() {
            out[d] = raw[d] / self.std[d];
        }
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.mean.len() == other.mean.len()
            && self
                .mean
                .iter()
                .zip(&other.mean)
                .all(|(a, b)| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())))
            && self
                .std
                .iter()
                .zip(&other.std)
                .all(|(a, b)| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())))
    }
}

/// A sequence of D-dimensional states sampled every `dt`, stored flat
/// (row-major, one state after another).
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    data: Vec<f64>,
    dim: usize,
    pub dt: f64,
    pub t0: f64,
    /// Delay lag in steps when this trajectory is in delay coordinates.
    pub tau_steps: Option<usize>,
    pub scaling: Option<ScalingParams>,
}

impl StateTrajectory {
    pub fn new(data: Vec<f64>, dim: usize, dt: f64) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Self {
            data,
            dim,
            dt,
            t0: 0.0,
            tau_steps: None,
            scaling: None,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// One coordinate of every state, as an owned series.
    pub fn component(&self, d: usize) -> Vec<f64> {
        assert!(d < self.dim);
        self.data.iter().skip(d).step_by(self.dim).copied().collect()
    }

    pub fn push(&mut self, state: &[f64]) {
        assert_eq!(state.len(), self.dim);
        self.data.extend_from_slice(state);
    }

    pub fn raw_data(&self) -> &[f64] {
        &self.data
    }
}

/// Time-derivative estimates at interior trajectory indices.
#[derive(Debug, Clone)]
pub struct DerivativeEstimates {
    /// Indices into the parent trajectory.
    pub indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
    /// Stencil stride l used for the estimate.
    pub stride: usize,
}

impl DerivativeEstimates {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// Paired (state, derivative) samples in standardized coordinates; the rows
/// of the regression problem.
#[derive(Debug, Clone)]
pub struct RegressionDataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    dim: usize,
    pub n: usize,
    pub scaling: ScalingParams,
    /// Indices of the selected samples in the parent trajectory.
    pub source_indices: Vec<usize>,
}

impl RegressionDataset {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Standardized state of sample `i`.
    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Standardized derivative of sample `i`.
    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.dim..(i + 1) * self.dim]
    }

    /// Raw (unstandardized) state of sample `i`.
    pub fn raw_input(&self, i: usize) -> Vec<f64> {
        self.scaling.unstandardize(self.input(i))
    }

    /// All standardized states, flat row-major (n × dim).
    pub fn inputs_flat(&self) -> &[f64] {
        &self.inputs
    }

    /// All standardized derivatives, flat row-major (n × dim).
    pub fn targets_flat(&self) -> &[f64] {
        &self.targets
    }

    /// Assemble a dataset directly from standardized pairs (mainly for
    /// synthetic-data tests and tooling).
    pub fn from_parts(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        dim: usize,
        scaling: ScalingParams,
    ) -> Result<Self> {
        if dim == 0 || inputs.len() % dim != 0 || inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: inputs.len(),
            });
        }
        if scaling.dim() != dim {
            return Err(Error::ScalingMismatch);
        }
        let n = inputs.len() / dim;
        Ok(Self {
            inputs,
            targets,
            dim,
            n,
            scaling,
            source_indices: (0..n).collect(),
        })
    }
}

/// Which column of a delimited text file to read.
#[derive(Debug, Clone)]
pub enum ColumnSel {
    /// Column header name (requires a header row).
    Name(String),
    /// 1-based column position.
    Index(usize),
}

impl ColumnSel {
    /// Parse a CLI-style selector: an integer is a 1-based position,
    /// anything else a header name.
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<usize>() {
            Ok(i) if i >= 1 => ColumnSel::Index(i),
            _ => ColumnSel::Name(s.trim().to_string()),
        }
    }

    fn describe(&self) -> String {
        match self {
            ColumnSel::Name(n) => n.clone(),
            ColumnSel::Index(i) => format!("#{i}"),
        }
    }
}

/// Options for [`load_series`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// When `None`, sniff: a first row that parses entirely as numbers is
    /// treated as data, otherwise as a header.
    pub has_header: Option<bool>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: None,
        }
    }
}

/// Read one numeric column of a delimited file as a [`ScalarSeries`].
pub fn load_series(
    path: impl AsRef<Path>,
    column: &ColumnSel,
    dt: f64,
    opts: &LoadOptions,
) -> Result<ScalarSeries> {
    let path = path.as_ref();
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
    }
    let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(raw.as_bytes());

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", i + 1),
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "file contains no rows".into(),
        });
    }

    let first_is_numeric = records[0]
        .iter()
        .all(|cell| cell.trim().parse::<f64>().is_ok());
    let has_header = opts.has_header.unwrap_or(!first_is_numeric);

    let col_idx = match column {
        ColumnSel::Index(i) => i - 1,
        ColumnSel::Name(name) => {
            if !has_header {
                return Err(Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.clone(),
                });
            }
            records[0]
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.clone(),
                })?
        }
    };

    let data_rows = if has_header { &records[1..] } else { &records[..] };
    let mut values = Vec::with_capacity(data_rows.len());
    for (i, rec) in data_rows.iter().enumerate() {
        let row_number = i + 1 + usize::from(has_header);
        let cell = rec.get(col_idx).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: column.describe(),
        })?;
        let trimmed = cell.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed.parse().map_err(|_| Error::NonNumeric {
            path: path.to_path_buf(),
            row: row_number,
            column: column.describe(),
            value: trimmed.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::NonNumeric {
                path: path.to_path_buf(),
                row: row_number,
                column: column.describe(),
                value: trimmed.to_string(),
            });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptyColumn {
            path: path.to_path_buf(),
            column: column.describe(),
        });
    }

    let label = match column {
        ColumnSel::Name(n) => n.clone(),
        ColumnSel::Index(i) => format!("col{i}"),
    };
    ScalarSeries::new(values, dt, 0.0, label)
}

/// Pearson correlation of (w(t), w(t - lag)).
pub fn autocorrelation(series: &ScalarSeries, lag_steps: usize) -> Result<f64> {
    let n = series.len();
    if n < lag_steps + 2 {
        return Err(Error::SeriesTooShort {
            needed: lag_steps + 2,
            got: n,
        });
    }
    let a = &series.values[lag_steps..];
    let b = &series.values[..n - lag_steps];
    let m = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / m;
    let mean_b = b.iter().sum::<f64>() / m;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Build the delay-coordinate trajectory
/// X(t_n) = (w(t_n), w(t_n - tau), ..., w(t_n - (D-1) tau)).
pub fn delay_embed(series: &ScalarSeries, dim: usize, tau_steps: usize) -> Result<StateTrajectory> {
    if dim == 0 {
        return Err(Error::InvalidParam("embedding dimension must be >= 1".into()));
    }
    if tau_steps == 0 {
        return Err(Error::InvalidParam("tau_steps must be >= 1".into()));
    }
    let offset = (dim - 1) * tau_steps;
    if series.len() <= offset {
        return Err(Error::SeriesTooShort {
            needed: offset + 1,
            got: series.len(),
        });
    }
    let n_out = series.len() - offset;
    let mut data = Vec::with_capacity(n_out * dim);
    for n in offset..series.len() {
        for d in 0..dim {
            data.push(series.values[n - d * tau_steps]);
        }
    }
    let mut traj = StateTrajectory::new(data, dim, series.dt);
    traj.t0 = series.t0 + offset as f64 * series.dt;
    traj.tau_steps = Some(tau_steps);
    Ok(traj)
}

/// Sixth-order central-difference stencil, applied componentwise with
/// stride `l`:
/// (X(n+3l) - 9 X(n+2l) + 45 X(n+l) - 45 X(n-l) + 9 X(n-2l) - X(n-3l)) / (60 l dt).
///
/// Indices within `3 l` of either end are excluded.
pub fn estimate_derivative(traj: &StateTrajectory, stride: usize) -> Result<DerivativeEstimates> {
    if stride == 0 {
        return Err(Error::InvalidParam("stride must be >= 1".into()));
    }
    let n = traj.len();
    if n < 6 * stride + 1 {
        return Err(Error::SeriesTooShort {
            needed: 6 * stride + 1,
            got: n,
        });
    }
    let dim = traj.dim();
    let l = stride;
    let denom = 60.0 * l as f64 * traj.dt;
    let count = n - 6 * l;
    let mut indices = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * dim);
    for i in 3 * l..n - 3 * l {
        indices.push(i);
        let p3 = traj.state(i + 3 * l);
        let p2 = traj.state(i + 2 * l);
        let p1 = traj.state(i + l);
        let m1 = traj.state(i - l);
        let m2 = traj.state(i - 2 * l);
        let m3 = traj.state(i - 3 * l);
        for d in 0..dim {
            values.push(
                (p3[d] - 9.0 * p2[d] + 45.0 * p1[d] - 45.0 * m1[d] + 9.0 * m2[d] - m3[d]) / denom,
            );
        }
    }
    Ok(DerivativeEstimates {
        indices,
        values,
        dim,
        stride,
    })
}

/// How regression sample points are selected from the valid interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplePolicy {
    UniformStride,
    SeededRandom,
}

/// Select a fraction of the derivative sample points and assemble the
/// standardized regression dataset.
///
/// All D delay components observe the same scalar, so one (mean, std) pair
/// pooled over the components of the selected states is shared by every
/// component.
pub fn sample_points(
    traj: &StateTrajectory,
    derivs: &DerivativeEstimates,
    fraction: f64,
    policy: SamplePolicy,
    seed: u64,
) -> Result<RegressionDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "sample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let count = derivs.len();
    let m = ((fraction * count as f64).floor() as usize).min(count);
    if m == 0 {
        return Err(Error::EmptySelection(format!(
            "fraction {fraction} of {count} valid points selects none"
        )));
    }

    let mut selected: Vec<usize> = match policy {
        SamplePolicy::UniformStride => (0..m).map(|i| i * count / m).collect(),
        SamplePolicy::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, count, m).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    selected.dedup();

    let dim = traj.dim();

    // Shared scaling from the pooled components of the selected states.
    let mut sum = 0.0;
    let mut count_vals = 0usize;
    for &k in &selected {
        for &v in traj.state(derivs.indices[k]) {
            sum += v;
            count_vals += 1;
        }
    }
    let mean = sum / count_vals as f64;
    let mut var = 0.0;
    for &k in &selected {
        for &v in traj.state(derivs.indices[k]) {
            var += (v - mean) * (v - mean);
        }
    }
    let std = (var / count_vals as f64).sqrt();
    if !(std > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let scaling = ScalingParams::shared(mean, std, dim)?;

    let n = selected.len();
    let mut inputs = Vec::with_capacity(n * dim);
    let mut targets = Vec::with_capacity(n * dim);
    let mut source_indices = Vec::with_capacity(n);
    for &k in &selected {
        let traj_idx = derivs.indices[k];
        source_indices.push(traj_idx);
        for &v in traj.state(traj_idx) {
            inputs.push((v - mean) / std);
        }
        for &v in derivs.value(k) {
            targets.push(v / std);
        }
    }

    Ok(RegressionDataset {
        inputs,
        targets,
        dim,
        n,
        scaling,
        source_indices,
    })
}
