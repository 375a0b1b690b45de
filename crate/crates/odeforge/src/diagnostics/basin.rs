//! Escape-time maps over a 2-D plane of initial conditions: which cells
//! stay bounded under the flow and which blow out, and where the border
//! between the two regimes runs.

use serde::{Deserialize, Serialize};

use crate::dynamics::{escape_time, Dynamics};
use crate::error::{Error, Result};

/// Escape-time map over a rectangular grid in a plane of initial states.
/// `cells[j * nu + i]` covers column i (along e1) and row j (along e2);
/// `None` means the trajectory stayed bounded for the whole horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasinMap {
    /// Orthonormal in-plane directions, dim-length each.
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    /// Plane base point.
    pub origin: Vec<f64>,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    pub nu: usize,
    pub nv: usize,
    pub escape_time_max: f64,
    pub escape_radius: f64,
    pub dt: f64,
    pub cells: Vec<Option<f64>>,
}

impl BasinMap {
    pub fn cell(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[j * self.nu + i]
    }

    fn du(&self) -> f64 {
        (self.u_range.1 - self.u_range.0) / self.nu as f64
    }

    fn dv(&self) -> f64 {
        (self.v_range.1 - self.v_range.0) / self.nv as f64
    }

    /// Raw-state coordinates of the center of cell (i, j).
    pub fn point(&self, i: usize, j: usize) -> Vec<f64> {
        let u = self.u_range.0 + (i as f64 + 0.5) * self.du();
        let v = self.v_range.0 + (j as f64 + 0.5) * self.dv();
        self.origin
            .iter()
            .zip(self.e1.iter().zip(&self.e2))
            .map(|(o, (a, b))| o + u * a + v * b)
            .collect()
    }

    /// Cell containing the in-plane projection of `x`, if inside the region.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, usize)> {
        let rel: Vec<f64> = x.iter().zip(&self.origin).map(|(a, o)| a - o).collect();
        let u: f64 = rel.iter().zip(&self.e1).map(|(a, b)| a * b).sum();
        let v: f64 = rel.iter().zip(&self.e2).map(|(a, b)| a * b).sum();
        if u < self.u_range.0 || u >= self.u_range.1 || v < self.v_range.0 || v >= self.v_range.1 {
            return None;
        }
        let i = ((u - self.u_range.0) / self.du()) as usize;
        let j = ((v - self.v_range.0) / self.dv()) as usize;
        Some((i.min(self.nu - 1), j.min(self.nv - 1)))
    }

    pub fn retained_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn escaped_count(&self) -> usize {
        self.cells.len() - self.retained_count()
    }

    /// A cell is on the boundary if any 4-neighbor has the opposite fate.
    pub fn is_boundary_cell(&self, i: usize, j: usize) -> bool {
        let here = self.cell(i, j).is_none();
        let mut neighbors = Vec::with_capacity(4);
        if i > 0 {
            neighbors.push((i - 1, j));
        }
        if i + 1 < self.nu {
            neighbors.push((i + 1, j));
        }
        if j > 0 {
            neighbors.push((i, j - 1));
        }
        if j + 1 < self.nv {
            neighbors.push((i, j + 1));
        }
        neighbors
            .into_iter()
            .any(|(a, b)| self.cell(a, b).is_none() != here)
    }

    /// Chebyshev distance, in cells, from the cell containing `x` to the
    /// nearest boundary cell. `None` if `x` projects outside the region or
    /// the map has no boundary at all.
    pub fn cell_distance_to_boundary(&self, x: &[f64]) -> Option<usize> {
        let (i, j) = self.locate(x)?;
        let mut best: Option<usize> = None;
        for bj in 0..self.nv {
            for bi in 0..self.nu {
                if self.is_boundary_cell(bi, bj) {
                    let d = bi.abs_diff(i).max(bj.abs_diff(j));
                    best = Some(best.map_or(d, |b: usize| b.min(d)));
                }
            }
        }
        best
    }
}

/// Gram-Schmidt the spanning pair into an orthonormal basis.
fn orthonormal_pair(v1: &[f64], v2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n1: f64 = v1.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n1 == 0.0 {
        return Err(Error::InvalidParam("plane vector v1 is zero".into()));
    }
    let e1: Vec<f64> = v1.iter().map(|a| a / n1).collect();
    let dot: f64 = v2.iter().zip(&e1).map(|(a, b)| a * b).sum();
    let mut e2: Vec<f64> = v2.iter().zip(&e1).map(|(a, b)| a - dot * b).collect();
    let n2: f64 = e2.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale: f64 = v2.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n2 <= 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidParam(
            "plane vectors are parallel; pick two independent directions".into(),
        ));
    }
    for a in &mut e2 {
        *a /= n2;
    }
    Ok((e1, e2))
}

/// Integrate every grid cell of the plane spanned by `v1`, `v2` (through
/// `origin`) and record when each trajectory leaves `escape_radius`, up to
/// a horizon of `escape_time_max`.
#[allow(clippy::too_many_arguments)]
pub fn basin_scan<S: Dynamics + ?Sized>(
    sys: &S,
    v1: &[f64],
    v2: &[f64],
    origin: &[f64],
    u_range: (f64, f64),
    v_range: (f64, f64),
    resolution: (usize, usize),
    escape_time_max: f64,
    escape_radius: f64,
    dt: f64,
) -> Result<BasinMap> {
    let d = sys.dim();
    for v in [v1, v2, origin] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    let (nu, nv) = resolution;
    if nu == 0 || nv == 0 {
        return Err(Error::InvalidParam("basin resolution must be >= 1".into()));
    }
    if !(u_range.0 < u_range.1) || !(v_range.0 < v_range.1) {
        return Err(Error::InvalidParam(
            "basin ranges must satisfy lo < hi".into(),
        ));
    }
    if !(escape_time_max > 0.0) || !(escape_radius > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParam(
            "basin scan needs positive horizon, radius and dt".into(),
        ));
    }
    let (e1, e2) = orthonormal_pair(v1, v2)?;
    let mut map = BasinMap {
        e1,
        e2,
        origin: origin.to_vec(),
        u_range,
        v_range,
        nu,
        nv,
        escape_time_max,
        escape_radius,
        dt,
        cells: vec![None; nu * nv],
    };
    for j in 0..nv {
        for i in 0..nu {
            let x0 = map.point(i, j);
            map.cells[j * nu + i] = escape_time(sys, &x0, escape_time_max, dt, escape_radius);
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearSystem;

    #[test]
    fn plane_basis_is_orthonormalized() {
        let (e1, e2) = orthonormal_pair(&[1.0, 1.0, 1.0], &[1.0, -1.0, 0.0]).unwrap();
        let n1: f64 = e1.iter().map(|a| a * a).sum();
        let n2: f64 = e2.iter().map(|a| a * a).sum();
        let dot: f64 = e1.iter().zip(&e2).map(|(a, b)| a * b).sum();
        assert!((n1 - 1.0).abs() < 1e-12);
        assert!((n2 - 1.0).abs() < 1e-12);
        assert!(dot.abs() < 1e-12);

        let (_, e2) = orthonormal_pair(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((e2[0]).abs() < 1e-12 && (e2[1] - 1.0).abs() < 1e-12);

        assert!(orthonormal_pair(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(orthonormal_pair(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn contracting_flow_retains_every_cell() {
        let sys = LinearSystem::diagonal(&[-1.0, -1.0]);
        let map = basin_scan(
            &sys,
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            (-2.0, 2.0),
            (-2.0, 2.0),
            (9, 9),
            5.0,
            100.0,
            0.01,
        )
        .unwrap();
        assert_eq!(map.retained_count(), 81);
        assert_eq!(map.escaped_count(), 0);
        assert!(map.cell_distance_to_boundary(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn expanding_flow_escapes_away_from_origin() {
        let sys = LinearSystem::diagonal(&[1.0, 1.0]);
        let map = basin_scan(
            &sys,
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            (1.0, 3.0),
            (1.0, 3.0),
            (8, 8),
            6.0,
            100.0,
            0.01,
        )
        .unwrap();
        assert_eq!(map.escaped_count(), 64);
        // |X(t)| = |X0| e^t: the farthest corner escapes soonest.
        let near = map.cell(0, 0).unwrap();
        let far = map.cell(7, 7).unwrap();
        assert!(far < near, "far corner {far} vs near corner {near}");
        let expected = (100.0 / (1.125f64 * 1.125 + 1.125 * 1.125).sqrt()).ln();
        assert!((near - expected).abs() < 0.02, "{near} vs {expected}");
    }

    #[test]
    fn saddle_flow_has_a_retained_band_with_boundary() {
        // x grows at rate 1, y decays: trajectories escape radius 10 within
        // horizon 5 only when |x0| > 10 e^-5 = 0.0674.
        let sys = LinearSystem::diagonal(&[1.0, -1.0]);
        let map = basin_scan(
            &sys,
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            (-2.0, 2.0),
            (-2.0, 2.0),
            (41, 5),
            5.0,
            10.0,
            0.01,
        )
        .unwrap();
        assert!(map.retained_count() > 0);
        assert!(map.escaped_count() > 0);
        // The band is symmetric and centered on u = 0.
        let (ci, _) = map.locate(&[0.0, 0.0]).unwrap();
        assert!(map.cell(ci, 2).is_none());
        assert!(map.cell(0, 2).is_some());
        assert!(map.cell(40, 2).is_some());
        // A state just inside the escape side sits a cell from the border.
        let d = map.cell_distance_to_boundary(&[0.12, 0.0]).unwrap();
        assert!(d <= 1, "distance {d}");
        // Far corner is many cells away from the border.
        let d = map.cell_distance_to_boundary(&[1.9, 1.9]).unwrap();
        assert!(d > 5, "distance {d}");
    }

    #[test]
    fn longer_horizon_only_grows_the_escaped_set() {
        let sys = LinearSystem::diagonal(&[1.0, -1.0]);
        let scan = |horizon: f64| {
            basin_scan(
                &sys,
                &[1.0, 0.0],
                &[0.0, 1.0],
                &[0.0, 0.0],
                (-2.0, 2.0),
                (-2.0, 2.0),
                (21, 3),
                horizon,
                10.0,
                0.01,
            )
            .unwrap()
        };
        let short = scan(2.0);
        let long = scan(5.0);
        for (s, l) in short.cells.iter().zip(&long.cells) {
            if let Some(ts) = s {
                let tl = l.expect("escaped cell must stay escaped");
                assert_eq!(*ts, tl, "escape time must not change");
            }
        }
        assert!(long.escaped_count() > short.escaped_count());
    }

    #[test]
    fn locate_maps_points_to_cells() {
        let sys = LinearSystem::diagonal(&[-1.0, -1.0]);
        let map = basin_scan(
            &sys,
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            (-1.0, 1.0),
            (-1.0, 1.0),
            (4, 4),
            1.0,
            100.0,
            0.05,
        )
        .unwrap();
        assert_eq!(map.locate(&[-0.99, -0.99]), Some((0, 0)));
        assert_eq!(map.locate(&[0.99, 0.99]), Some((3, 3)));
        assert_eq!(map.locate(&[0.1, -0.6]), Some((2, 0)));
        assert_eq!(map.locate(&[1.01, 0.0]), None);
        // Cell centers round-trip through point() -> locate().
        for j in 0..4 {
            for i in 0..4 {
                let p = map.point(i, j);
                assert_eq!(map.locate(&p), Some((i, j)));
            }
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let sys = LinearSystem::diagonal(&[-1.0, -1.0]);
        let bad = basin_scan(
            &sys,
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            (2.0, -2.0),
            (-2.0, 2.0),
            (4, 4),
            1.0,
            100.0,
            0.05,
        );
        assert!(bad.is_err());
        let bad = basin_scan(
            &sys,
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            (-2.0, 2.0),
            (-2.0, 2.0),
            (4, 4),
            1.0,
            100.0,
            0.05,
        );
        assert!(bad.is_err());
    }
}
