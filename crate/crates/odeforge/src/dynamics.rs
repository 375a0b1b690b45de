//! Vector fields, analytic Jacobians, and fixed-step Runge-Kutta
//! integration with a divergence guard.

use crate::error::{Error, Result};
use crate::timeseries::{ScalarSeries, StateTrajectory};

/// An autonomous vector field dX/dt = f(X) with an analytic Jacobian.
pub trait Dynamics {
    fn dim(&self) -> usize;

    /// Writes f(X) into `out`.
    fn rhs(&self, x: &[f64], out: &mut [f64]);

    /// Writes df/dX into `out`, flat row-major (dim x dim).
    fn jacobian(&self, x: &[f64], out: &mut [f64]);

    /// Evaluate f and df/dX together; overridden where the two share work.
    fn rhs_and_jacobian(&self, x: &[f64], rhs_out: &mut [f64], jac_out: &mut [f64]) {
        self.rhs(x, rhs_out);
        self.jacobian(x, jac_out);
    }
}

/// The Lorenz system, the reference generator for all experiments:
/// dx/dt = sigma (y - x), dy/dt = rho x - y - x z, dz/dt = x y - beta z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl Lorenz {
    /// The nonzero fixed points (+/- sqrt(beta (rho - 1)), same, rho - 1).
    pub fn wing_fixed_point(&self, positive: bool) -> [f64; 3] {
        let s = (self.beta * (self.rho - 1.0)).sqrt();
        let s = if positive { s } else { -s };
        [s, s, self.rho - 1.0]
    }
}

impl Dynamics for Lorenz {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * (x[1] - x[0]);
        out[1] = self.rho * x[0] - x[1] - x[0] * x[2];
        out[2] = x[0] * x[1] - self.beta * x[2];
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.sigma;
        out[1] = self.sigma;
        out[2] = 0.0;
        out[3] = self.rho - x[2];
        out[4] = -1.0;
        out[5] = -x[0];
        out[6] = x[1];
        out[7] = x[0];
        out[8] = -self.beta;
    }
}

/// dX/dt = A X, the workhorse oracle: flows, spectra and fixed points are
/// all known in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    matrix: Vec<f64>,
    dim: usize,
}

impl LinearSystem {
    /// `matrix` is flat row-major (dim x dim).
    pub fn new(matrix: Vec<f64>, dim: usize) -> Self {
        assert_eq!(matrix.len(), dim * dim);
        Self { matrix, dim }
    }

    pub fn diagonal(rates: &[f64]) -> Self {
        let dim = rates.len();
        let mut matrix = vec![0.0; dim * dim];
        for (d, &r) in rates.iter().enumerate() {
            matrix[d * dim + d] = r;
        }
        Self { matrix, dim }
    }
}

impl Dynamics for LinearSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.dim {
            let row = &self.matrix[r * self.dim..(r + 1) * self.dim];
            out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.matrix);
    }
}

/// Scratch buffers for one RK4 step; reuse across steps to keep the
/// integration loop allocation-free.
#[derive(Debug, Clone)]
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    xt: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            xt: vec![0.0; dim],
        }
    }
}

/// Advance `x` in place by one classical RK4 step of size `dt`.
pub fn rk4_step<S: Dynamics + ?Sized>(sys: &S, x: &mut [f64], dt: f64, s: &mut Rk4Scratch) {
    let dim = x.len();
    sys.rhs(x, &mut s.k1);
    for d in 0..dim {
        s.xt[d] = x[d] + 0.5 * dt * s.k1[d];
    }
    sys.rhs(&s.xt, &mut s.k2);
    for d in 0..dim {
        s.xt[d] = x[d] + 0.5 * dt * s.k2[d];
    }
    sys.rhs(&s.xt, &mut s.k3);
    for d in 0..dim {
        s.xt[d] = x[d] + dt * s.k3[d];
    }
    sys.rhs(&s.xt, &mut s.k4);
    for d in 0..dim {
        x[d] += dt / 6.0 * (s.k1[d] + 2.0 * s.k2[d] + 2.0 * s.k3[d] + s.k4[d]);
    }
}

pub const DEFAULT_GUARD_RADIUS: f64 = 1e6;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_state(x: &[f64], t: f64, guard_radius: f64) -> Result<()> {
    let r = norm(x);
    if !r.is_finite() || r > guard_radius {
        return Err(Error::TrajectoryEscaped {
            time: t,
            radius: r,
        });
    }
    Ok(())
}

/// Integrate from `x0` over `t_span` with fixed step `dt`; returns
/// ceil(t_span/dt) + 1 states including the initial one. Fails with the
/// escape time if the state norm exceeds `guard_radius` or turns non-finite.
pub fn integrate<S: Dynamics + ?Sized>(
    sys: &S,
    x0: &[f64],
    t_span: f64,
    dt: f64,
    guard_radius: f64,
) -> Result<StateTrajectory> {
    if !(dt > 0.0) || !(t_span > 0.0) || dt > t_span {
        return Err(Error::InvalidParam(format!(
            "integration needs 0 < dt <= t_span, got dt={dt}, t_span={t_span}"
        )));
    }
    let dim = sys.dim();
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    let steps = (t_span / dt).ceil() as usize;
    let mut traj = StateTrajectory::new(Vec::with_capacity((steps + 1) * dim), dim, dt);
    let mut x = x0.to_vec();
    let mut scratch = Rk4Scratch::new(dim);
    check_state(&x, 0.0, guard_radius)?;
    traj.push(&x);
    for step in 0..steps {
        rk4_step(sys, &mut x, dt, &mut scratch);
        check_state(&x, (step + 1) as f64 * dt, guard_radius)?;
        traj.push(&x);
    }
    Ok(traj)
}

/// Like [`integrate`], but an escape truncates the trajectory instead of
/// discarding it: returns every in-bounds state together with the escape
/// time, if any. Errors only on invalid arguments.
pub fn integrate_truncating<S: Dynamics + ?Sized>(
    sys: &S,
    x0: &[f64],
    t_span: f64,
    dt: f64,
    guard_radius: f64,
) -> Result<(StateTrajectory, Option<f64>)> {
    if !(dt > 0.0) || !(t_span > 0.0) || dt > t_span {
        return Err(Error::InvalidParam(format!(
            "integration needs 0 < dt <= t_span, got dt={dt}, t_span={t_span}"
        )));
    }
    let dim = sys.dim();
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    let steps = (t_span / dt).ceil() as usize;
    let mut traj = StateTrajectory::new(Vec::with_capacity((steps + 1) * dim), dim, dt);
    let mut x = x0.to_vec();
    let mut scratch = Rk4Scratch::new(dim);
    if check_state(&x, 0.0, guard_radius).is_err() {
        return Ok((traj, Some(0.0)));
    }
    traj.push(&x);
    for step in 0..steps {
        rk4_step(sys, &mut x, dt, &mut scratch);
        let t = (step + 1) as f64 * dt;
        if check_state(&x, t, guard_radius).is_err() {
            return Ok((traj, Some(t)));
        }
        traj.push(&x);
    }
    Ok((traj, None))
}

/// Advance `x` in place for `t_span` without storing the path (transient
/// removal); same guard semantics as [`integrate`].
pub fn advance<S: Dynamics + ?Sized>(
    sys: &S,
    x: &mut [f64],
    t_span: f64,
    dt: f64,
    guard_radius: f64,
) -> Result<()> {
    let steps = (t_span / dt).ceil() as usize;
    let mut scratch = Rk4Scratch::new(x.len());
    for step in 0..steps {
        rk4_step(sys, x, dt, &mut scratch);
        check_state(x, (step + 1) as f64 * dt, guard_radius)?;
    }
    Ok(())
}

/// First time at which the orbit from `x0` leaves the ball of radius
/// `escape_radius` (treating a non-finite state as escaped), or `None` if it
/// stays inside through `max_time`.
pub fn escape_time<S: Dynamics + ?Sized>(
    sys: &S,
    x0: &[f64],
    max_time: f64,
    dt: f64,
    escape_radius: f64,
) -> Option<f64> {
    let mut x = x0.to_vec();
    let mut scratch = Rk4Scratch::new(x.len());
    let steps = (max_time / dt).ceil() as usize;
    let r = norm(&x);
    if !r.is_finite() || r > escape_radius {
        return Some(0.0);
    }
    for step in 0..steps {
        rk4_step(sys, &mut x, dt, &mut scratch);
        let r = norm(&x);
        if !r.is_finite() || r > escape_radius {
            return Some((step + 1) as f64 * dt);
        }
    }
    None
}

/// Generate the scalar training observable w(t) = x(t) of a Lorenz run:
/// integrate from `x0`, discard `transient`, record the x component.
pub fn lorenz_observable(
    system: &Lorenz,
    x0: [f64; 3],
    t_span: f64,
    dt: f64,
    transient: f64,
) -> Result<ScalarSeries> {
    let mut x = x0.to_vec();
    if transient > 0.0 {
        advance(system, &mut x, transient, dt, DEFAULT_GUARD_RADIUS)?;
    }
    let steps = (t_span / dt).ceil() as usize;
    let mut values = Vec::with_capacity(steps + 1);
    let mut scratch = Rk4Scratch::new(3);
    values.push(x[0]);
    for step in 0..steps {
        rk4_step(system, &mut x, dt, &mut scratch);
        check_state(&x, transient + (step + 1) as f64 * dt, DEFAULT_GUARD_RADIUS)?;
        values.push(x[0]);
    }
    ScalarSeries::new(values, dt, transient, "x")
}
