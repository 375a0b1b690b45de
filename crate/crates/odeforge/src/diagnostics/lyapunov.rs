//! Lyapunov spectrum by tangent-space integration with periodic
//! Gram-Schmidt renormalization.

use serde::{Deserialize, Serialize};

use crate::dynamics::{advance, Dynamics};
use crate::error::{Error, Result};

/// Full spectrum estimate, exponents sorted descending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovResult {
    pub exponents: Vec<f64>,
    /// Averaging time actually used (after the transient).
    pub t_used: f64,
    pub renorm_interval: f64,
    pub renorm_count: usize,
}

impl LyapunovResult {
    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// Scratch for one joint RK4 step of state + tangent bundle.
struct TangentScratch {
    jac: Vec<f64>,
    /// Stage state.
    xs: Vec<f64>,
    /// Stage tangent bundle (vector-major: vector j occupies [j*d, (j+1)*d)).
    vs: Vec<f64>,
    kx: [Vec<f64>; 4],
    kv: [Vec<f64>; 4],
}

impl TangentScratch {
    fn new(d: usize) -> Self {
        Self {
            jac: vec![0.0; d * d],
            xs: vec![0.0; d],
            vs: vec![0.0; d * d],
            kx: std::array::from_fn(|_| vec![0.0; d]),
            kv: std::array::from_fn(|_| vec![0.0; d * d]),
        }
    }
}

/// One RK4 stage: kx = f(x) and kv_j = J(x) v_j for every tangent vector.
fn tangent_stage<S: Dynamics + ?Sized>(
    sys: &S,
    d: usize,
    x: &[f64],
    v: &[f64],
    jac: &mut [f64],
    kx: &mut [f64],
    kv: &mut [f64],
) {
    sys.rhs_and_jacobian(x, kx, jac);
    for j in 0..d {
        let vj = &v[j * d..(j + 1) * d];
        for r in 0..d {
            let row = &jac[r * d..(r + 1) * d];
            kv[j * d + r] = row.iter().zip(vj).map(|(a, b)| a * b).sum();
        }
    }
}

/// Advance state and tangent bundle together by one RK4 step.
fn tangent_step<S: Dynamics + ?Sized>(
    sys: &S,
    d: usize,
    x: &mut [f64],
    v: &mut [f64],
    dt: f64,
    s: &mut TangentScratch,
) {
    let n = d * d;
    tangent_stage(sys, d, x, v, &mut s.jac, &mut s.kx[0], &mut s.kv[0]);
    for (stage, weight) in [(1, 0.5 * dt), (2, 0.5 * dt), (3, dt)] {
        let prev = stage - 1;
        for i in 0..d {
            s.xs[i] = x[i] + weight * s.kx[prev][i];
        }
        for i in 0..n {
            s.vs[i] = v[i] + weight * s.kv[prev][i];
        }
        let (_, kx_tail) = s.kx.split_at_mut(stage);
        let (_, kv_tail) = s.kv.split_at_mut(stage);
        tangent_stage(sys, d, &s.xs, &s.vs, &mut s.jac, &mut kx_tail[0], &mut kv_tail[0]);
    }
    for i in 0..d {
        x[i] += dt / 6.0 * (s.kx[0][i] + 2.0 * s.kx[1][i] + 2.0 * s.kx[2][i] + s.kx[3][i]);
    }
    for i in 0..n {
        v[i] += dt / 6.0 * (s.kv[0][i] + 2.0 * s.kv[1][i] + 2.0 * s.kv[2][i] + s.kv[3][i]);
    }
}

/// Modified Gram-Schmidt sweep over the bundle; accumulates log norms.
fn renormalize(d: usize, v: &mut [f64], log_sums: &mut [f64]) -> Result<()> {
    for j in 0..d {
        let norm = {
            let vj = &v[j * d..(j + 1) * d];
            vj.iter().map(|a| a * a).sum::<f64>().sqrt()
        };
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite(
                "tangent vector collapsed during Lyapunov renormalization".into(),
            ));
        }
        log_sums[j] += norm.ln();
        let inv = 1.0 / norm;
        for i in 0..d {
            v[j * d + i] *= inv;
        }
        for k in j + 1..d {
            let dot: f64 = (0..d).map(|i| v[k * d + i] * v[j * d + i]).sum();
            for i in 0..d {
                v[k * d + i] -= dot * v[j * d + i];
            }
        }
    }
    Ok(())
}

/// Estimate the full Lyapunov spectrum of `sys` from `x0`.
///
/// The trajectory first runs for `transient` to settle onto the attractor,
/// then for `t_total` while an orthonormal tangent frame is evolved through
/// the linearized flow and renormalized every `renorm_interval`.
pub fn lyapunov_spectrum<S: Dynamics + ?Sized>(
    sys: &S,
    x0: &[f64],
    t_total: f64,
    dt: f64,
    renorm_interval: f64,
    transient: f64,
    guard_radius: f64,
) -> Result<LyapunovResult> {
    let d = sys.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    if !(dt > 0.0) || !(t_total > 0.0) {
        return Err(Error::InvalidParam(format!(
            "lyapunov needs dt > 0 and t_total > 0, got dt={dt}, t_total={t_total}"
        )));
    }
    if !(renorm_interval >= dt) {
        return Err(Error::InvalidParam(format!(
            "renorm_interval ({renorm_interval}) must be >= dt ({dt})"
        )));
    }

    let mut x = x0.to_vec();
    if transient > 0.0 {
        advance(sys, &mut x, transient, dt, guard_radius)?;
    }

    let mut v = vec![0.0; d * d];
    for j in 0..d {
        v[j * d + j] = 1.0;
    }
    let steps_per_renorm = (renorm_interval / dt).round().max(1.0) as usize;
    let total_steps = (t_total / dt).round().max(1.0) as usize;
    let mut scratch = TangentScratch::new(d);
    let mut log_sums = vec![0.0; d];
    let mut renorm_count = 0usize;

    for step in 1..=total_steps {
        tangent_step(sys, d, &mut x, &mut v, dt, &mut scratch);
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !r.is_finite() || r > guard_radius {
            return Err(Error::TrajectoryEscaped {
                time: transient + step as f64 * dt,
                radius: r,
            });
        }
        if step % steps_per_renorm == 0 || step == total_steps {
            renormalize(d, &mut v, &mut log_sums)?;
            renorm_count += 1;
        }
    }

    let t_used = total_steps as f64 * dt;
    let mut exponents: Vec<f64> = log_sums.iter().map(|s| s / t_used).collect();
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(LyapunovResult {
        exponents,
        t_used,
        renorm_interval: steps_per_renorm as f64 * dt,
        renorm_count,
    })
}
