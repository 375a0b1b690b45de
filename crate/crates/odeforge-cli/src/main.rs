//! `odeforge` — reconstruct an ODE model from a scalar time series and
//! interrogate it: simulate, validate, sweep regularization, and map the
//! model's fixed points and escape basin.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use odeforge::{Error, ErrorCategory, Result};

use crate::config::{load_config_file, load_recipe, recipe_names, RunConfig};

#[derive(Parser)]
#[command(
    name = "odeforge",
    version,
    about = "Reconstruct ODE models from a single scalar time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where a run configuration comes from: a TOML file or a built-in recipe.
#[derive(Args)]
struct ConfigSource {
    /// Path to a run-config TOML file.
    #[arg(long, value_name = "PATH", conflicts_with = "recipe")]
    config: Option<PathBuf>,
    /// Built-in recipe name (see `--recipe help`).
    #[arg(long, value_name = "NAME")]
    recipe: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<RunConfig> {
        match (&self.config, &self.recipe) {
            (Some(path), None) => load_config_file(path),
            (None, Some(name)) => load_recipe(name),
            _ => Err(Error::InvalidParam(format!(
                "exactly one of --config or --recipe is required (recipes: {})",
                recipe_names().join(", ")
            ))),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Lorenz observable named by the config and write it as CSV.
    Generate {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory (overrides config and ODEFORGE_OUTPUT_DIR).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline (embed, differentiate, sample, fit) and save the model.
    Fit {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Integrate a fitted model forward and write the trajectory.
    Simulate {
        /// Model JSON file.
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Integration span in time units.
        #[arg(long, default_value_t = 10_000.0)]
        t_span: f64,
        /// Step size; defaults to the model's training dt.
        #[arg(long)]
        dt: Option<f64>,
        /// Initial state: "anchor" or comma-separated coordinates.
        #[arg(long, default_value = "anchor", allow_hyphen_values = true)]
        x0: String,
        /// Norm at which the trajectory counts as escaped.
        #[arg(long, default_value_t = 1e6)]
        guard_radius: f64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Validate a model against a reference series: delay residuals,
    /// densities, Lyapunov spectrum, and short-term forecast horizons.
    Diagnose {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Reference scalar series CSV.
        #[arg(long, value_name = "PATH")]
        series: PathBuf,
        /// Column of the series file: 1-based index or header name.
        #[arg(long, default_value = "w")]
        column: String,
        /// Field delimiter of the series file.
        #[arg(long)]
        delimiter: Option<char>,
        /// Force header presence on or off instead of sniffing.
        #[arg(long)]
        has_header: Option<bool>,
        /// Model simulation span for the long-run statistics.
        #[arg(long, default_value_t = 2000.0)]
        t_span: f64,
        /// Histogram bins for densities and residual distributions.
        #[arg(long, default_value_t = 100)]
        bins: usize,
        /// Averaging span for the Lyapunov spectrum.
        #[arg(long, default_value_t = 1000.0)]
        lyapunov_t: f64,
        #[arg(long, default_value_t = 100.0)]
        lyapunov_transient: f64,
        /// Time between tangent-bundle renormalizations.
        #[arg(long, default_value_t = 0.1)]
        renorm_interval: f64,
        /// Forecast divergence threshold as a multiple of the reference spread.
        #[arg(long, default_value_t = 0.4)]
        valid_time_threshold: f64,
        /// Forecast horizon per start, in time units.
        #[arg(long, default_value_t = 15.0)]
        valid_time_horizon: f64,
        /// Number of forecast starts spread along the reference series.
        #[arg(long, default_value_t = 10)]
        valid_time_starts: usize,
        #[arg(long, default_value_t = 1e6)]
        guard_radius: f64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Locate fixed points of a model by Newton iteration from a seed grid.
    FixedPoints {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Seed-grid range on every axis, as "lo,hi".
        #[arg(long, default_value = "-20,20", value_name = "LO,HI", allow_hyphen_values = true)]
        seed_range: String,
        /// Seeds per axis; default fills a budget of 5000 grid points.
        #[arg(long)]
        seeds_per_axis: Option<usize>,
        /// Span of the attractor sample used for classification.
        #[arg(long, default_value_t = 2000.0)]
        attractor_t: f64,
        /// Number of extra seeds taken from the attractor sample.
        #[arg(long, default_value_t = 100)]
        attractor_seeds: usize,
        /// Attractor distance below which a root counts as embedded.
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// Newton convergence tolerance on the step norm.
        #[arg(long, default_value_t = 1e-9)]
        newton_tol: f64,
        #[arg(long, default_value_t = 50)]
        newton_max_iter: usize,
        #[arg(long, default_value_t = 1e6)]
        guard_radius: f64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Scan a plane of initial states and record which escape, and when.
    Basin {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// First plane direction, comma-separated.
        #[arg(long, default_value = "1,1,1", allow_hyphen_values = true)]
        v1: String,
        /// Second plane direction, comma-separated.
        #[arg(long, default_value = "1,-1,0", allow_hyphen_values = true)]
        v2: String,
        /// Plane origin; defaults to zero.
        #[arg(long, allow_hyphen_values = true)]
        origin: Option<String>,
        #[arg(long, default_value = "-20,20", value_name = "LO,HI", allow_hyphen_values = true)]
        u_range: String,
        #[arg(long, default_value = "-20,20", value_name = "LO,HI", allow_hyphen_values = true)]
        v_range: String,
        /// Cells per side of the scan grid.
        #[arg(long, default_value_t = 400)]
        resolution: usize,
        /// Horizon after which a still-bounded state counts as retained.
        #[arg(long, default_value_t = 5.0)]
        escape_time: f64,
        /// Norm at which a state counts as escaped.
        #[arg(long, default_value_t = 100.0)]
        escape_radius: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Refit the config's pipeline across a ladder of ridge penalties and
    /// rank them by delay-residual spread.
    SweepLambda {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Fit the config's RBF basis and a polynomial basis on the same data
    /// and compare regression error and long-run densities.
    CompareBasis {
        #[command(flatten)]
        source: ConfigSource,
        /// Polynomial total degree.
        #[arg(long)]
        degree: Option<u32>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn parse_range(spec: &str, name: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidParam(format!(
            "{name} must be \"lo,hi\", got {spec:?}"
        )));
    }
    let lo = parts[0].trim().parse::<f64>();
    let hi = parts[1].trim().parse::<f64>();
    match (lo, hi) {
        (Ok(lo), Ok(hi)) => Ok((lo, hi)),
        _ => Err(Error::InvalidParam(format!(
            "{name} must be \"lo,hi\" with numeric bounds, got {spec:?}"
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { source, out } => {
            commands::cmd_generate(&source.load()?, out.as_deref())
        }
        Command::Fit { source, out } => commands::cmd_fit(&source.load()?, out.as_deref()),
        Command::Simulate {
            model,
            t_span,
            dt,
            x0,
            guard_radius,
            out,
        } => commands::cmd_simulate(
            &model,
            &commands::SimulateArgs {
                t_span,
                dt,
                x0,
                guard_radius,
            },
            out.as_deref(),
        ),
        Command::Diagnose {
            model,
            series,
            column,
            delimiter,
            has_header,
            t_span,
            bins,
            lyapunov_t,
            lyapunov_transient,
            renorm_interval,
            valid_time_threshold,
            valid_time_horizon,
            valid_time_starts,
            guard_radius,
            out,
        } => commands::cmd_diagnose(
            &model,
            &commands::DiagnoseArgs {
                series,
                column,
                delimiter,
                has_header,
                t_span,
                bins,
                lyapunov_t,
                lyapunov_transient,
                renorm_interval,
                valid_time_threshold,
                valid_time_horizon,
                valid_time_starts,
                guard_radius,
            },
            out.as_deref(),
        ),
        Command::FixedPoints {
            model,
            seed_range,
            seeds_per_axis,
            attractor_t,
            attractor_seeds,
            epsilon,
            newton_tol,
            newton_max_iter,
            guard_radius,
            out,
        } => commands::cmd_fixed_points(
            &model,
            &commands::FixedPointArgs {
                seed_range: parse_range(&seed_range, "--seed-range")?,
                seeds_per_axis,
                attractor_t,
                attractor_seeds,
                epsilon,
                newton_tol,
                newton_max_iter,
                guard_radius,
            },
            out.as_deref(),
        ),
        Command::Basin {
            model,
            v1,
            v2,
            origin,
            u_range,
            v_range,
            resolution,
            escape_time,
            escape_radius,
            dt,
            out,
        } => commands::cmd_basin(
            &model,
            &commands::BasinArgs {
                v1,
                v2,
                origin,
                u_range: parse_range(&u_range, "--u-range")?,
                v_range: parse_range(&v_range, "--v-range")?,
                resolution,
                escape_time,
                escape_radius,
                dt,
            },
            out.as_deref(),
        ),
        Command::SweepLambda { source, out } => {
            commands::cmd_sweep_lambda(&source.load()?, out.as_deref())
        }
        Command::CompareBasis {
            source,
            degree,
            out,
        } => commands::cmd_compare_basis(&source.load()?, degree, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            };
            ExitCode::from(code)
        }
    }
}
