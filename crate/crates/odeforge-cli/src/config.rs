//! Declarative run configuration: TOML files with one section per pipeline
//! stage, plus the named recipes shipped with the binary.

use std::path::{Path, PathBuf};

use odeforge::error::{Error, Result};
use serde::Deserialize;

/// A full pipeline description. Commands read the sections they need and
/// reject files with unknown keys.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Artifact file names derive from this.
    pub label: String,
    pub data: Option<DataConfig>,
    pub embedding: Option<EmbeddingConfig>,
    #[serde(default)]
    pub derivative: DerivativeConfig,
    pub sample: Option<SampleConfig>,
    pub basis: Option<BasisConfig>,
    pub regression: Option<RegressionConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    pub sweep: Option<SweepConfig>,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    GenerateLorenz,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// CSV input path (source = "csv").
    pub path: Option<PathBuf>,
    /// Column name or 1-based index.
    pub column: Option<String>,
    pub delimiter: Option<char>,
    pub has_header: Option<bool>,
    /// Lorenz generator settings (source = "generate-lorenz").
    pub x0: Option<[f64; 3]>,
    pub t_span: Option<f64>,
    pub dt: Option<f64>,
    pub transient: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Delay in time units; converted to steps with the series dt.
    pub tau: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeConfig {
    pub stride: usize,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplePolicyConfig {
    SeededRandom,
    UniformStride,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample_policy")]
    pub policy: SamplePolicyConfig,
}

fn default_sample_policy() -> SamplePolicyConfig {
    SamplePolicyConfig::SeededRandom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    LinearRbf,
    Polynomial,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKind,
    /// RBF lattice spacing in standardized units.
    pub delta_grid: Option<f64>,
    pub m: Option<u32>,
    pub p: Option<f64>,
    #[serde(default = "default_center_cap")]
    pub center_cap: usize,
    /// Polynomial total degree.
    pub degree: Option<u32>,
}

fn default_center_cap() -> usize {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    pub lambda: f64,
}

/// Initial state for simulations: the model's anchor or an explicit vector.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum X0Policy {
    Named(X0Named),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum X0Named {
    Anchor,
}

impl Default for X0Policy {
    fn default() -> Self {
        X0Policy::Named(X0Named::Anchor)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub t_span: f64,
    /// Defaults to the model's training dt when absent.
    pub dt: Option<f64>,
    pub x0: X0Policy,
    pub guard_radius: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_span: 10_000.0,
            dt: None,
            x0: X0Policy::default(),
            guard_radius: 1e6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub bins: usize,
    pub lyapunov_t: f64,
    pub lyapunov_transient: f64,
    pub renorm_interval: f64,
    pub valid_time_threshold: f64,
    pub valid_time_horizon: f64,
    pub valid_time_starts: usize,
    /// Fixed-point settings.
    pub epsilon: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub seeds_per_axis: usize,
    pub seed_range: (f64, f64),
    /// Attractor trajectory length used for classification.
    pub attractor_t: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            bins: 100,
            lyapunov_t: 5000.0,
            lyapunov_transient: 100.0,
            renorm_interval: 0.1,
            valid_time_threshold: 0.4,
            valid_time_horizon: 15.0,
            valid_time_starts: 10,
            epsilon: 0.5,
            newton_tol: 1e-9,
            newton_max_iter: 50,
            seeds_per_axis: 11,
            seed_range: (-20.0, 20.0),
            attractor_t: 2000.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    #[serde(default = "default_t_val")]
    pub t_val: f64,
}

fn default_t_val() -> f64 {
    2000.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Recipes shipped with the binary.
pub const RECIPES: &[(&str, &str)] = &[
    ("lorenz-main", include_str!("../recipes/lorenz-main.toml")),
    ("lorenz-poly8", include_str!("../recipes/lorenz-poly8.toml")),
    ("lorenz-d4", include_str!("../recipes/lorenz-d4.toml")),
    ("fluid-small", include_str!("../recipes/fluid-small.toml")),
];

pub fn recipe_names() -> Vec<&'static str> {
    RECIPES.iter().map(|(n, _)| *n).collect()
}

pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    toml::from_str(text)
        .map_err(|e| Error::InvalidParam(format!("config {origin}: {e}")))
}

pub fn load_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

pub fn load_recipe(name: &str) -> Result<RunConfig> {
    let Some((_, text)) = RECIPES.iter().find(|(n, _)| *n == name) else {
        return Err(Error::InvalidParam(format!(
            "unknown recipe '{name}'; available: {}",
            recipe_names().join(", ")
        )));
    };
    parse_config(text, &format!("recipe {name}"))
}

impl RunConfig {
    pub fn data(&self) -> Result<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("config is missing the [data] section".into()))
    }

    pub fn embedding(&self) -> Result<&EmbeddingConfig> {
        self.embedding.as_ref().ok_or_else(|| {
            Error::InvalidParam("config is missing the [embedding] section".into())
        })
    }

    pub fn sample(&self) -> Result<&SampleConfig> {
        self.sample
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("config is missing the [sample] section".into()))
    }

    pub fn basis(&self) -> Result<&BasisConfig> {
        self.basis
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("config is missing the [basis] section".into()))
    }

    pub fn regression(&self) -> Result<&RegressionConfig> {
        self.regression.as_ref().ok_or_else(|| {
            Error::InvalidParam("config is missing the [regression] section".into())
        })
    }

    pub fn sweep(&self) -> Result<&SweepConfig> {
        self.sweep
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("config is missing the [sweep] section".into()))
    }

    /// Output directory with precedence: CLI flag, then environment
    /// variable, then config, then "./runs/<label>".
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Ok(env) = std::env::var("ODEFORGE_OUTPUT_DIR") {
            if !env.is_empty() {
                return PathBuf::from(env);
            }
        }
        if let Some(out) = &self.output {
            return out.dir.clone();
        }
        PathBuf::from("runs").join(&self.label)
    }
}
