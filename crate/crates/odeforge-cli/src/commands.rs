//! Implementations of the CLI subcommands. Config-driven commands
//! (`generate`, `fit`, `sweep-lambda`, `compare-basis`) consume a
//! [`RunConfig`]; model-driven commands (`simulate`, `diagnose`,
//! `fixed-points`, `basin`) load a model file and take flags.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use odeforge::basis::{build_rbf_centers, BasisSpec, PolynomialBasis};
use odeforge::diagnostics::basin::basin_scan;
use odeforge::diagnostics::fixed_points::{
    attractor_seeds, find_fixed_points, grid_seeds, NewtonOptions,
};
use odeforge::diagnostics::lyapunov::lyapunov_spectrum;
use odeforge::diagnostics::sweep::lambda_sweep;
use odeforge::diagnostics::{compare_densities, delay_residuals, short_term_valid_time};
use odeforge::dynamics::{integrate_truncating, lorenz_observable, Lorenz};
use odeforge::model::{load_model, save_model, OdeModel};
use odeforge::regress::{fit_model, regression_error, FitOptions};
use odeforge::timeseries::{
    delay_embed, estimate_derivative, load_series, sample_points, ColumnSel, LoadOptions,
    RegressionDataset, SamplePolicy, ScalarSeries, StateTrajectory,
};
use odeforge::{Error, Result};

use crate::artifacts::{
    artifact_path, ensure_dir, write_density_csv, write_json, write_series_csv, write_table_csv,
    write_trajectory_csv,
};
use crate::config::{BasisKind, DataSource, RunConfig, SamplePolicyConfig, X0Named, X0Policy};

// ---------------------------------------------------------------------------
// Shared pipeline stages
// ---------------------------------------------------------------------------

/// Training data plus everything derived from it up to the regression set.
pub struct Pipeline {
    pub series: ScalarSeries,
    pub dataset: RegressionDataset,
    pub tau: f64,
    pub tau_steps: usize,
}

/// Produce the scalar training series the config describes: integrate the
/// Lorenz observable, or read a CSV column.
pub fn resolve_series(cfg: &RunConfig) -> Result<ScalarSeries> {
    let data = cfg.data()?;
    match data.source {
        DataSource::GenerateLorenz => {
            let t_span = data.t_span.ok_or_else(|| {
                Error::InvalidParam("generate-lorenz requires data.t_span".into())
            })?;
            let dt = data
                .dt
                .ok_or_else(|| Error::InvalidParam("generate-lorenz requires data.dt".into()))?;
            let x0 = data.x0.unwrap_or([1.0, 1.0, 1.0]);
            let transient = data.transient.unwrap_or(0.0);
            let mut sys = Lorenz::default();
            if let Some(s) = data.sigma {
                sys.sigma = s;
            }
            if let Some(r) = data.rho {
                sys.rho = r;
            }
            if let Some(b) = data.beta {
                sys.beta = b;
            }
            let mut series = lorenz_observable(&sys, x0, t_span, dt, transient)?;
            series.label = cfg.label.clone();
            Ok(series)
        }
        DataSource::Csv => {
            let path = data
                .path
                .as_ref()
                .ok_or_else(|| Error::InvalidParam("csv source requires data.path".into()))?;
            let dt = data
                .dt
                .ok_or_else(|| Error::InvalidParam("csv source requires data.dt".into()))?;
            let column = ColumnSel::parse(data.column.as_deref().unwrap_or("w"));
            let mut opts = LoadOptions::default();
            if let Some(c) = data.delimiter {
                if !c.is_ascii() {
                    return Err(Error::InvalidParam(format!(
                        "delimiter must be an ASCII character, got {c:?}"
                    )));
                }
                opts.delimiter = c as u8;
            }
            opts.has_header = data.has_header;
            load_series(path, &column, dt, &opts)
        }
    }
}

/// Embed, differentiate, and sample the series per the config.
pub fn build_pipeline(cfg: &RunConfig, series: ScalarSeries) -> Result<Pipeline> {
    let emb = cfg.embedding()?;
    let tau_steps = (emb.tau / series.dt).round() as usize;
    if tau_steps == 0 {
        return Err(Error::InvalidParam(format!(
            "embedding.tau = {} is below one sampling step (dt = {})",
            emb.tau, series.dt
        )));
    }
    let traj = delay_embed(&series, emb.dim, tau_steps)?;
    let derivs = estimate_derivative(&traj, cfg.derivative.stride)?;
    let sample = cfg.sample()?;
    let policy = match sample.policy {
        SamplePolicyConfig::SeededRandom => SamplePolicy::SeededRandom,
        SamplePolicyConfig::UniformStride => SamplePolicy::UniformStride,
    };
    let dataset = sample_points(&traj, &derivs, sample.fraction, policy, sample.seed)?;
    Ok(Pipeline {
        series,
        dataset,
        tau: emb.tau,
        tau_steps,
    })
}

/// Build the basis the config names, sized against the sampled data.
pub fn build_basis(cfg: &RunConfig, dataset: &RegressionDataset) -> Result<BasisSpec> {
    let basis = cfg.basis()?;
    match basis.kind {
        BasisKind::LinearRbf => {
            let delta = basis.delta_grid.ok_or_else(|| {
                Error::InvalidParam("linear-rbf basis requires basis.delta_grid".into())
            })?;
            let m = basis
                .m
                .ok_or_else(|| Error::InvalidParam("linear-rbf basis requires basis.m".into()))?;
            let p = basis
                .p
                .ok_or_else(|| Error::InvalidParam("linear-rbf basis requires basis.p".into()))?;
            let grid = build_rbf_centers(dataset, delta, m, p, basis.center_cap)?;
            Ok(BasisSpec::LinearRbf(grid))
        }
        BasisKind::Polynomial => {
            let degree = basis.degree.ok_or_else(|| {
                Error::InvalidParam("polynomial basis requires basis.degree".into())
            })?;
            Ok(BasisSpec::Polynomial(PolynomialBasis::new(
                dataset.dim(),
                degree,
            )?))
        }
    }
}

fn fit_options(cfg: &RunConfig, pipe: &Pipeline, lambda: f64) -> Result<FitOptions> {
    let sample = cfg.sample()?;
    let seed = match sample.policy {
        SamplePolicyConfig::SeededRandom => Some(sample.seed),
        SamplePolicyConfig::UniformStride => None,
    };
    Ok(FitOptions {
        lambda,
        label: cfg.label.clone(),
        tau: pipe.tau,
        dt: pipe.series.dt,
        sample_seed: seed,
        training_time: pipe.series.values.len() as f64 * pipe.series.dt,
    })
}

/// Output directory for the model-driven commands: flag, then the
/// `ODEFORGE_OUTPUT_DIR` environment variable, then `runs/<label>`.
fn flag_output_dir(flag: Option<&Path>, label: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("ODEFORGE_OUTPUT_DIR") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("runs").join(label)
}

/// Parse an initial-state flag: `anchor` or a comma-separated vector.
pub fn parse_x0(spec: &str, model: &OdeModel) -> Result<Vec<f64>> {
    if spec.trim() == "anchor" {
        return Ok(model.meta.anchor_state.clone());
    }
    let parts: Vec<f64> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParam(format!("invalid initial state component {s:?}")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != model.dim() {
        return Err(Error::InvalidParam(format!(
            "initial state has {} components; the model is {}-dimensional",
            parts.len(),
            model.dim()
        )));
    }
    Ok(parts)
}

fn resolve_x0(policy: &X0Policy, model: &OdeModel) -> Result<Vec<f64>> {
    match policy {
        X0Policy::Named(X0Named::Anchor) => Ok(model.meta.anchor_state.clone()),
        X0Policy::Explicit(v) => {
            if v.len() != model.dim() {
                return Err(Error::InvalidParam(format!(
                    "initial state has {} components; the model is {}-dimensional",
                    v.len(),
                    model.dim()
                )));
            }
            Ok(v.clone())
        }
    }
}

fn parse_vector(spec: &str, name: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParam(format!("invalid {name} component {s:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GenerateReport {
    label: String,
    rows: usize,
    dt: f64,
    t_span: f64,
    transient: f64,
    x0: [f64; 3],
    sigma: f64,
    rho: f64,
    beta: f64,
    mean: f64,
    std: f64,
}

pub fn cmd_generate(cfg: &RunConfig, out_flag: Option<&Path>) -> Result<()> {
    let data = cfg.data()?;
    if data.source != DataSource::GenerateLorenz {
        return Err(Error::InvalidParam(
            "config data source is csv; nothing to generate".into(),
        ));
    }
    let series = resolve_series(cfg)?;
    let dir = cfg.output_dir(out_flag);
    ensure_dir(&dir)?;
    let csv_path = artifact_path(&dir, &cfg.label, "series.csv");
    write_series_csv(&csv_path, &series)?;
    let sys = Lorenz::default();
    let report = GenerateReport {
        label: cfg.label.clone(),
        rows: series.values.len(),
        dt: series.dt,
        t_span: data.t_span.unwrap_or_default(),
        transient: data.transient.unwrap_or(0.0),
        x0: data.x0.unwrap_or([1.0, 1.0, 1.0]),
        sigma: data.sigma.unwrap_or(sys.sigma),
        rho: data.rho.unwrap_or(sys.rho),
        beta: data.beta.unwrap_or(sys.beta),
        mean: series.mean(),
        std: series.std(),
    };
    write_json(&artifact_path(&dir, &cfg.label, "series.json"), &report)?;
    println!(
        "wrote {} rows (dt = {}) to {}",
        report.rows,
        report.dt,
        csv_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitReport {
    label: String,
    n_samples: usize,
    dim: usize,
    tau: f64,
    tau_steps: usize,
    dt: f64,
    basis: String,
    feature_count: usize,
    centers: Option<usize>,
    lambda: f64,
    mean_relative_error: f64,
    excluded_samples: usize,
    wall_seconds: f64,
}

pub fn cmd_fit(cfg: &RunConfig, out_flag: Option<&Path>) -> Result<()> {
    let series = resolve_series(cfg)?;
    let pipe = build_pipeline(cfg, series)?;
    let spec = build_basis(cfg, &pipe.dataset)?;
    let lambda = cfg.regression()?.lambda;
    let opts = fit_options(cfg, &pipe, lambda)?;

    let start = Instant::now();
    let model = fit_model(&pipe.dataset, &spec, &opts)?;
    let wall = start.elapsed().as_secs_f64();
    let errs = regression_error(&model, &pipe.dataset)?;

    let dir = cfg.output_dir(out_flag);
    ensure_dir(&dir)?;
    let model_path = artifact_path(&dir, &cfg.label, "model.json");
    save_model(&model, &model_path)?;

    let (basis_name, centers) = match &model.basis {
        BasisSpec::LinearRbf(grid) => ("linear-rbf", Some(grid.len())),
        BasisSpec::Polynomial(_) => ("polynomial", None),
    };
    let report = FitReport {
        label: cfg.label.clone(),
        n_samples: pipe.dataset.n,
        dim: model.dim(),
        tau: pipe.tau,
        tau_steps: pipe.tau_steps,
        dt: pipe.series.dt,
        basis: basis_name.into(),
        feature_count: model.feature_count(),
        centers,
        lambda,
        mean_relative_error: errs.mean,
        excluded_samples: errs.excluded,
        wall_seconds: wall,
    };
    write_json(&artifact_path(&dir, &cfg.label, "fit-report.json"), &report)?;
    println!(
        "fit {}: n = {}, features = {}{}, mean relative error = {:.4e} ({:.1}s)",
        cfg.label,
        report.n_samples,
        report.feature_count,
        centers.map_or(String::new(), |j| format!(" (J = {j} centers)")),
        report.mean_relative_error,
        wall
    );
    println!("model written to {}", model_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulationReport {
    label: String,
    t_span: f64,
    dt: f64,
    x0: Vec<f64>,
    rows: usize,
    escaped: bool,
    escape_time: Option<f64>,
}

pub struct SimulateArgs {
    pub t_span: f64,
    pub dt: Option<f64>,
    pub x0: String,
    pub guard_radius: f64,
}

pub fn cmd_simulate(model_path: &Path, args: &SimulateArgs, out_flag: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let x0 = parse_x0(&args.x0, &model)?;
    let dt = args.dt.unwrap_or(model.dt);
    let (traj, escape) = if args.t_span == 0.0 {
        // A zero span is just the initial state.
        let mut traj = StateTrajectory::new(Vec::new(), model.dim(), dt);
        traj.push(&x0);
        (traj, None)
    } else {
        integrate_truncating(&model, &x0, args.t_span, dt, args.guard_radius)?
    };

    let label = model.meta.label.clone();
    let dir = flag_output_dir(out_flag, &label);
    ensure_dir(&dir)?;
    let traj_path = artifact_path(&dir, &label, "trajectory.csv");
    write_trajectory_csv(&traj_path, &traj)?;
    let report = SimulationReport {
        label: label.clone(),
        t_span: args.t_span,
        dt,
        x0,
        rows: traj.len(),
        escaped: escape.is_some(),
        escape_time: escape,
    };
    write_json(&artifact_path(&dir, &label, "simulation.json"), &report)?;
    match escape {
        Some(t) => println!(
            "trajectory escaped at t = {t:.3}; wrote {} rows to {}",
            report.rows,
            traj_path.display()
        ),
        None => println!("wrote {} rows to {}", report.rows, traj_path.display()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ResidualSummary {
    pair: (usize, usize),
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct LyapunovSummary {
    exponents: Vec<f64>,
    sum: f64,
    t_used: f64,
}

#[derive(Serialize)]
struct DiagnoseReport {
    label: String,
    sim_t_span: f64,
    sim_rows: usize,
    escaped: bool,
    escape_time: Option<f64>,
    residuals: Vec<ResidualSummary>,
    mean_residual_std: Option<f64>,
    density_area_diff: Option<f64>,
    lyapunov: Option<LyapunovSummary>,
    lyapunov_error: Option<String>,
    valid_times: Vec<f64>,
    median_valid_time: Option<f64>,
    bins: usize,
}

pub struct DiagnoseArgs {
    pub series: PathBuf,
    pub column: String,
    pub delimiter: Option<char>,
    pub has_header: Option<bool>,
    pub t_span: f64,
    pub bins: usize,
    pub lyapunov_t: f64,
    pub lyapunov_transient: f64,
    pub renorm_interval: f64,
    pub valid_time_threshold: f64,
    pub valid_time_horizon: f64,
    pub valid_time_starts: usize,
    pub guard_radius: f64,
}

pub fn cmd_diagnose(model_path: &Path, args: &DiagnoseArgs, out_flag: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let mut opts = LoadOptions::default();
    if let Some(c) = args.delimiter {
        opts.delimiter = c as u8;
    }
    opts.has_header = args.has_header;
    let column = ColumnSel::parse(&args.column);
    let reference = load_series(&args.series, &column, model.dt, &opts)?;

    let tau_steps = (model.tau / model.dt).round() as usize;
    let anchor = model.meta.anchor_state.clone();
    let (sim, escape) =
        integrate_truncating(&model, &anchor, args.t_span, model.dt, args.guard_radius)?;

    let mut residuals = Vec::new();
    let mut mean_residual_std = None;
    if sim.len() > tau_steps + 1 {
        let res = delay_residuals(&sim, tau_steps, args.bins)?;
        mean_residual_std =
            Some(res.iter().map(|r| r.std).sum::<f64>() / res.len() as f64);
        residuals = res
            .iter()
            .map(|r| ResidualSummary {
                pair: r.pair,
                mean: r.mean,
                std: r.std,
            })
            .collect();
    }

    let dir = flag_output_dir(out_flag, &model.meta.label);
    ensure_dir(&dir)?;

    let mut density_area_diff = None;
    if sim.len() > 1 {
        let (dref, dsim, area) =
            compare_densities(&reference.values, &sim.component(0), args.bins)?;
        density_area_diff = Some(area);
        write_density_csv(
            &artifact_path(&dir, &model.meta.label, "density.csv"),
            &[("reference", &dref), ("model", &dsim)],
        )?;
    }

    let (lyapunov, lyapunov_error) = match lyapunov_spectrum(
        &model,
        &anchor,
        args.lyapunov_t,
        model.dt,
        args.renorm_interval,
        args.lyapunov_transient,
        args.guard_radius,
    ) {
        Ok(l) => (
            Some(LyapunovSummary {
                exponents: l.exponents.clone(),
                sum: l.sum(),
                t_used: l.t_used,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };

    // Short-term forecasts from states on the reference attractor.
    let ref_traj = delay_embed(&reference, model.dim(), tau_steps)?;
    let mut valid_times = Vec::new();
    let horizon_steps = (args.valid_time_horizon / model.dt) as usize + 1;
    let n_ref = ref_traj.len();
    if args.valid_time_starts > 0 && n_ref > horizon_steps + 1 {
        for k in 0..args.valid_time_starts {
            let start = k * (n_ref - horizon_steps - 1) / args.valid_time_starts;
            let x0 = ref_traj.state(start).to_vec();
            let mut seg = StateTrajectory::new(Vec::new(), model.dim(), model.dt);
            for i in start..start + horizon_steps {
                seg.push(ref_traj.state(i));
            }
            let (mtraj, _) = integrate_truncating(
                &model,
                &x0,
                args.valid_time_horizon,
                model.dt,
                args.guard_radius,
            )?;
            if mtraj.len() > 1 {
                valid_times.push(short_term_valid_time(
                    &mtraj,
                    &seg,
                    args.valid_time_threshold,
                )?);
            } else {
                valid_times.push(0.0);
            }
        }
    }
    let median_valid_time = if valid_times.is_empty() {
        None
    } else {
        let mut sorted = valid_times.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(sorted[sorted.len() / 2])
    };

    let report = DiagnoseReport {
        label: model.meta.label.clone(),
        sim_t_span: args.t_span,
        sim_rows: sim.len(),
        escaped: escape.is_some(),
        escape_time: escape,
        residuals,
        mean_residual_std,
        density_area_diff,
        lyapunov,
        lyapunov_error,
        valid_times,
        median_valid_time,
        bins: args.bins,
    };
    write_json(
        &artifact_path(&dir, &model.meta.label, "diagnostics.json"),
        &report,
    )?;

    if let Some(t) = escape {
        println!("simulation escaped at t = {t:.3} (diagnostics cover the prefix)");
    }
    for r in &report.residuals {
        println!(
            "delay residual {:?}: mean = {:+.4e}, std = {:.4e}",
            r.pair, r.mean, r.std
        );
    }
    if let Some(a) = density_area_diff {
        println!("density area difference = {a:.5}");
    }
    match (&report.lyapunov, &report.lyapunov_error) {
        (Some(l), _) => println!("lyapunov exponents = {:?} (sum {:.4})", l.exponents, l.sum),
        (None, Some(e)) => println!("lyapunov estimation failed: {e}"),
        _ => {}
    }
    if let Some(m) = median_valid_time {
        println!(
            "median valid time over {} starts = {m:.3}",
            report.valid_times.len()
        );
    }
    println!(
        "diagnostics written to {}",
        artifact_path(&dir, &model.meta.label, "diagnostics.json").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fixed-points
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FixedPointsReport {
    label: String,
    converged_seeds: usize,
    failed_seeds: usize,
    roots: usize,
    epsilon: f64,
    points: serde_json::Value,
}

pub struct FixedPointArgs {
    pub seed_range: (f64, f64),
    pub seeds_per_axis: Option<usize>,
    pub attractor_t: f64,
    pub attractor_seeds: usize,
    pub epsilon: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub guard_radius: f64,
}

/// Largest per-axis seed count whose full grid stays within budget.
fn default_seeds_per_axis(dim: usize, budget: usize) -> usize {
    let mut q = 2usize;
    loop {
        let next = q + 1;
        if next.checked_pow(dim as u32).is_none_or(|total| total > budget) {
            return q;
        }
        q = next;
    }
}

pub fn cmd_fixed_points(
    model_path: &Path,
    args: &FixedPointArgs,
    out_flag: Option<&Path>,
) -> Result<()> {
    let model = load_model(model_path)?;
    let d = model.dim();
    let anchor = model.meta.anchor_state.clone();

    // A strided attractor sample for the embedded/ghost classification.
    let (sim, escape) =
        integrate_truncating(&model, &anchor, args.attractor_t, model.dt, args.guard_radius)?;
    if sim.len() < 100 {
        return Err(Error::NonFinite(format!(
            "attractor sample collapsed: only {} states before escape at {:?}",
            sim.len(),
            escape
        )));
    }
    let stride = (sim.len() / 20_000).max(1);
    let mut att = StateTrajectory::new(Vec::new(), d, model.dt * stride as f64);
    for i in (0..sim.len()).step_by(stride) {
        att.push(sim.state(i));
    }

    let per_axis = args
        .seeds_per_axis
        .unwrap_or_else(|| default_seeds_per_axis(d, 5000));
    let (lo, hi) = args.seed_range;
    let mut seeds = grid_seeds(&vec![lo; d], &vec![hi; d], per_axis)?;
    seeds.extend(attractor_seeds(&att, args.attractor_seeds));

    let opts = NewtonOptions {
        max_iter: args.newton_max_iter,
        tol: args.newton_tol,
        guard_radius: args.guard_radius,
    };
    let report = find_fixed_points(&model, &seeds, &opts, &att, args.epsilon)?;

    let dir = flag_output_dir(out_flag, &model.meta.label);
    ensure_dir(&dir)?;

    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.extend([
        "residual".to_string(),
        "unstable".to_string(),
        "classification".to_string(),
        "distance_to_attractor".to_string(),
    ]);
    for k in 1..=d {
        header.push(format!("eig{k}_re"));
        header.push(format!("eig{k}_im"));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|p| {
            let mut row: Vec<String> = p.location.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{:e}", p.residual));
            row.push(format!("{}", p.unstable_count));
            row.push(format!("{:?}", p.classification).to_lowercase());
            row.push(format!("{}", p.distance_to_attractor));
            for (re, im) in &p.eigenvalues {
                row.push(format!("{re}"));
                row.push(format!("{im}"));
            }
            row
        })
        .collect();
    write_table_csv(
        &artifact_path(&dir, &model.meta.label, "fixed-points.csv"),
        &header_refs,
        &rows,
    )?;
    write_json(
        &artifact_path(&dir, &model.meta.label, "fixed-points.json"),
        &FixedPointsReport {
            label: model.meta.label.clone(),
            converged_seeds: report.converged_seeds,
            failed_seeds: report.failed_seeds,
            roots: report.points.len(),
            epsilon: args.epsilon,
            points: serde_json::to_value(&report.points)
                .map_err(|e| Error::InvalidParam(format!("serializing report: {e}")))?,
        },
    )?;

    println!(
        "{} roots from {} converged / {} failed seeds",
        report.points.len(),
        report.converged_seeds,
        report.failed_seeds
    );
    for p in &report.points {
        let loc: Vec<String> = p.location.iter().map(|v| format!("{v:+.4}")).collect();
        println!(
            "  ({}) residual {:.2e}, {} unstable, {:?}, attractor distance {:.3}",
            loc.join(", "),
            p.residual,
            p.unstable_count,
            p.classification,
            p.distance_to_attractor
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// basin
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BasinReport {
    label: String,
    v1: Vec<f64>,
    v2: Vec<f64>,
    origin: Vec<f64>,
    u_range: (f64, f64),
    v_range: (f64, f64),
    resolution: (usize, usize),
    escape_time_max: f64,
    escape_radius: f64,
    dt: f64,
    retained: usize,
    escaped: usize,
    boundary_cells: usize,
}

pub struct BasinArgs {
    pub v1: String,
    pub v2: String,
    pub origin: Option<String>,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    pub resolution: usize,
    pub escape_time: f64,
    pub escape_radius: f64,
    pub dt: f64,
}

pub fn cmd_basin(model_path: &Path, args: &BasinArgs, out_flag: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let d = model.dim();
    let v1 = parse_vector(&args.v1, "v1")?;
    let v2 = parse_vector(&args.v2, "v2")?;
    let origin = match &args.origin {
        Some(s) => parse_vector(s, "origin")?,
        None => vec![0.0; d],
    };
    for (name, v) in [("v1", &v1), ("v2", &v2), ("origin", &origin)] {
        if v.len() != d {
            return Err(Error::InvalidParam(format!(
                "{name} has {} components; the model is {d}-dimensional",
                v.len()
            )));
        }
    }

    let map = basin_scan(
        &model,
        &v1,
        &v2,
        &origin,
        args.u_range,
        args.v_range,
        (args.resolution, args.resolution),
        args.escape_time,
        args.escape_radius,
        args.dt,
    )?;

    let dir = flag_output_dir(out_flag, &model.meta.label);
    ensure_dir(&dir)?;
    let mut rows = Vec::with_capacity(map.nu * map.nv);
    for j in 0..map.nv {
        for i in 0..map.nu {
            let u = args.u_range.0 + (i as f64 + 0.5) * (args.u_range.1 - args.u_range.0) / map.nu as f64;
            let v = args.v_range.0 + (j as f64 + 0.5) * (args.v_range.1 - args.v_range.0) / map.nv as f64;
            match map.cell(i, j) {
                Some(t) => rows.push(vec![
                    format!("{u}"),
                    format!("{v}"),
                    "1".to_string(),
                    format!("{t}"),
                ]),
                None => rows.push(vec![
                    format!("{u}"),
                    format!("{v}"),
                    "0".to_string(),
                    String::new(),
                ]),
            }
        }
    }
    write_table_csv(
        &artifact_path(&dir, &model.meta.label, "basin.csv"),
        &["u", "v", "escaped", "escape_time"],
        &rows,
    )?;

    let mut boundary = 0;
    for j in 0..map.nv {
        for i in 0..map.nu {
            if map.is_boundary_cell(i, j) {
                boundary += 1;
            }
        }
    }
    let report = BasinReport {
        label: model.meta.label.clone(),
        v1,
        v2,
        origin,
        u_range: args.u_range,
        v_range: args.v_range,
        resolution: (map.nu, map.nv),
        escape_time_max: args.escape_time,
        escape_radius: args.escape_radius,
        dt: args.dt,
        retained: map.retained_count(),
        escaped: map.escaped_count(),
        boundary_cells: boundary,
    };
    write_json(&artifact_path(&dir, &model.meta.label, "basin.json"), &report)?;
    println!(
        "basin {}x{}: {} retained, {} escaped, {} boundary cells",
        map.nu, map.nv, report.retained, report.escaped, report.boundary_cells
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-lambda
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepEntryReport {
    lambda: f64,
    mean_residual_std: Option<f64>,
    residual_stds: Option<Vec<f64>>,
    density_area_diff: Option<f64>,
    error: Option<String>,
    selected: bool,
}

#[derive(Serialize)]
struct SweepJsonReport {
    label: String,
    t_val: f64,
    selected_lambda: Option<f64>,
    entries: Vec<SweepEntryReport>,
}

pub fn cmd_sweep_lambda(cfg: &RunConfig, out_flag: Option<&Path>) -> Result<()> {
    let sweep_cfg = cfg.sweep()?.clone();
    let series = resolve_series(cfg)?;
    let pipe = build_pipeline(cfg, series)?;
    let spec = build_basis(cfg, &pipe.dataset)?;
    let base_lambda = sweep_cfg.lambdas[0];
    let opts = fit_options(cfg, &pipe, base_lambda)?;

    let report = lambda_sweep(
        &pipe.dataset,
        &spec,
        &sweep_cfg.lambdas,
        &opts,
        &pipe.series.values,
        sweep_cfg.t_val,
        cfg.diagnostics.bins,
    )?;

    let dir = cfg.output_dir(out_flag);
    ensure_dir(&dir)?;
    let entries: Vec<SweepEntryReport> = report
        .entries
        .iter()
        .map(|e| SweepEntryReport {
            lambda: e.lambda,
            mean_residual_std: e.metrics.as_ref().map(|m| m.mean_residual_std),
            residual_stds: e.metrics.as_ref().map(|m| m.residual_stds.clone()),
            density_area_diff: e.metrics.as_ref().map(|m| m.density_area_diff),
            error: e.error.clone(),
            selected: e.selected,
        })
        .collect();
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                format!("{:e}", e.lambda),
                e.mean_residual_std.map_or(String::new(), |v| format!("{v}")),
                e.density_area_diff.map_or(String::new(), |v| format!("{v}")),
                if e.selected { "1" } else { "0" }.to_string(),
                e.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_table_csv(
        &artifact_path(&dir, &cfg.label, "sweep.csv"),
        &["lambda", "mean_residual_std", "density_area_diff", "selected", "error"],
        &rows,
    )?;
    write_json(
        &artifact_path(&dir, &cfg.label, "sweep.json"),
        &SweepJsonReport {
            label: cfg.label.clone(),
            t_val: sweep_cfg.t_val,
            selected_lambda: report.selected_lambda,
            entries,
        },
    )?;

    for e in &report.entries {
        match (&e.metrics, &e.error) {
            (Some(m), _) => println!(
                "lambda = {:10.3e}: mean residual std = {:.4e}, area diff = {:.4}{}",
                e.lambda,
                m.mean_residual_std,
                m.density_area_diff,
                if e.selected { "   <== selected" } else { "" }
            ),
            (None, Some(err)) => println!("lambda = {:10.3e}: failed: {err}", e.lambda),
            _ => {}
        }
    }
    match report.selected_lambda {
        Some(l) => println!("selected lambda = {l:e}"),
        None => println!("no lambda produced a valid long simulation"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// compare-basis
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BasisSideReport {
    basis: String,
    feature_count: usize,
    mean_relative_error: f64,
    sim_rows: usize,
    escaped: bool,
    escape_time: Option<f64>,
    density_area_diff: Option<f64>,
}

#[derive(Serialize)]
struct CompareReport {
    label: String,
    degree: u32,
    t_span: f64,
    rbf: BasisSideReport,
    polynomial: BasisSideReport,
    error_ratio: f64,
}

pub fn cmd_compare_basis(
    cfg: &RunConfig,
    degree_flag: Option<u32>,
    out_flag: Option<&Path>,
) -> Result<()> {
    let series = resolve_series(cfg)?;
    let pipe = build_pipeline(cfg, series)?;
    let rbf_spec = build_basis(cfg, &pipe.dataset)?;
    if !matches!(rbf_spec, BasisSpec::LinearRbf(_)) {
        return Err(Error::InvalidParam(
            "compare-basis requires a linear-rbf basis in the config".into(),
        ));
    }
    let degree = degree_flag
        .or(cfg.basis()?.degree)
        .unwrap_or(8);
    let poly_spec = BasisSpec::Polynomial(PolynomialBasis::new(pipe.dataset.dim(), degree)?);
    let lambda = cfg.regression()?.lambda;
    let opts = fit_options(cfg, &pipe, lambda)?;

    let t_span = cfg.simulation.t_span;
    let guard = cfg.simulation.guard_radius;
    let bins = cfg.diagnostics.bins;
    let mut sides = Vec::new();
    let mut densities = Vec::new();
    for (name, spec) in [("rbf", &rbf_spec), ("polynomial", &poly_spec)] {
        let fit_opts = FitOptions {
            label: format!("{}-{name}", cfg.label),
            ..opts.clone()
        };
        let model = fit_model(&pipe.dataset, spec, &fit_opts)?;
        let errs = regression_error(&model, &pipe.dataset)?;
        let x0 = resolve_x0(&cfg.simulation.x0, &model)?;
        let (sim, escape) = integrate_truncating(&model, &x0, t_span, pipe.series.dt, guard)?;
        let mut area = None;
        if sim.len() > 1 {
            let (_, dsim, a) = compare_densities(&pipe.series.values, &sim.component(0), bins)?;
            area = Some(a);
            densities.push((name.to_string(), dsim));
        }
        sides.push(BasisSideReport {
            basis: name.to_string(),
            feature_count: model.feature_count(),
            mean_relative_error: errs.mean,
            sim_rows: sim.len(),
            escaped: escape.is_some(),
            escape_time: escape,
            density_area_diff: area,
        });
    }
    let polynomial = sides.pop().expect("two sides");
    let rbf = sides.pop().expect("two sides");
    let ratio = polynomial.mean_relative_error / rbf.mean_relative_error;

    let dir = cfg.output_dir(out_flag);
    ensure_dir(&dir)?;
    if !densities.is_empty() {
        let labeled: Vec<(&str, &odeforge::diagnostics::Density)> = densities
            .iter()
            .map(|(n, d)| (n.as_str(), d))
            .collect();
        write_density_csv(
            &artifact_path(&dir, &cfg.label, "compare-density.csv"),
            &labeled,
        )?;
    }
    let report = CompareReport {
        label: cfg.label.clone(),
        degree,
        t_span,
        rbf,
        polynomial,
        error_ratio: ratio,
    };
    write_json(&artifact_path(&dir, &cfg.label, "compare.json"), &report)?;

    println!(
        "rbf: mean relative error = {:.4e}, area diff = {:?}",
        report.rbf.mean_relative_error, report.rbf.density_area_diff
    );
    println!(
        "polynomial (degree {degree}): mean relative error = {:.4e}, area diff = {:?}{}",
        report.polynomial.mean_relative_error,
        report.polynomial.density_area_diff,
        report
            .polynomial
            .escape_time
            .map_or(String::new(), |t| format!(" (escaped at t = {t:.3})")),
    );
    println!("error ratio polynomial / rbf = {ratio:.2}");
    Ok(())
}
