//! Artifact plumbing: writing series, trajectories, tables and reports
//! under the run's output directory.

use std::fs;
use std::path::{Path, PathBuf};

use odeforge::diagnostics::Density;
use odeforge::error::{Error, Result};
use odeforge::timeseries::{ScalarSeries, StateTrajectory};
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serialize as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_series_csv(path: &Path, series: &ScalarSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(["t", "w"]).map_err(fail)?;
    for (i, &v) in series.values.iter().enumerate() {
        let t = series.t0 + i as f64 * series.dt;
        w.write_record([format!("{t}"), format!("{v}")]).map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

/// Trajectory CSV: time column plus one column per state component.
pub fn write_trajectory_csv(path: &Path, traj: &StateTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|d| format!("x{d}")));
    w.write_record(&header).map_err(fail)?;
    for (i, state) in traj.states().enumerate() {
        let t = traj.t0 + i as f64 * traj.dt;
        let mut row = vec![format!("{t}")];
        row.extend(state.iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

/// Densities side by side over shared bins: bin_center plus one labeled
/// probability column per density.
pub fn write_density_csv(path: &Path, labeled: &[(&str, &Density)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut header = vec!["bin_center".to_string()];
    header.extend(labeled.iter().map(|(name, _)| name.to_string()));
    w.write_record(&header).map_err(fail)?;
    let first = labeled
        .first()
        .ok_or_else(|| Error::EmptySelection("no densities to write".into()))?
        .1;
    for i in 0..first.bins() {
        let center = 0.5 * (first.bin_edges[i] + first.bin_edges[i + 1]);
        let mut row = vec![format!("{center}")];
        for (_, d) in labeled {
            row.push(format!("{}", d.probabilities[i]));
        }
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

/// Generic small table writer: header plus preformatted rows.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn artifact_path(dir: &Path, label: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{label}-{suffix}"))
}
