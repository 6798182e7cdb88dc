//! Horizontal lifts and parallel transport.
//!
//! A lift over `γ` lives on the pullback bundle `γ*TM ≅ [0,1] × ℝⁿ`: the
//! state is the fiber value `c(t)` alone, and base coordinates are always
//! read back from the path. The fiber solves `Dc = −Γ(γ(t), c)·γ̇(t)`.

mod integrator;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::connections::ConnectionField;
use crate::geometry::{path_reverse, ChartPoint, PathCurve, TangentVector};

pub use integrator::{
    integrate_adaptive, integrate_span, replay_mesh, CollapseReason, IntegratorOptions,
    IntegratorStats, LiftStatus, OdeSolution, ESCAPE_BRACKET,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("initial state is not finite")]
    NonFiniteInitial,
    #[error("lift escaped to infinity at t = {t_escape}")]
    TransportEscaped { t_escape: f64 },
    #[error("step size collapsed at t = {t} ({reason:?})")]
    StepCollapse { t: f64, reason: CollapseReason },
    #[error("finite-difference probe {probe} escaped")]
    ProbeEscaped { probe: usize },
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("path is not closed: gap {0:e}")]
    NotClosed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftSample {
    pub t: f64,
    pub base: Vec<f64>,
    pub fiber: Vec<f64>,
}

/// A sampled horizontal lift with its completion status.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftTrajectory {
    pub samples: Vec<LiftSample>,
    pub status: LiftStatus,
    pub stats: IntegratorStats,
    pub(crate) mesh: Vec<f64>,
}

impl LiftTrajectory {
    pub fn dim(&self) -> usize {
        self.samples[0].fiber.len()
    }

    pub fn final_fiber(&self) -> &[f64] {
        &self.samples.last().expect("initial sample").fiber
    }

    /// Endpoints of the accepted integrator steps.
    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }
}

fn check_dims(conn: &ConnectionField, path: &PathCurve, v0: &[f64]) -> Result<(), LiftError> {
    let n = conn.dim();
    for got in [path.dim(), v0.len()] {
        if got != n {
            return Err(LiftError::DimensionMismatch { expected: n, got });
        }
    }
    Ok(())
}

/// `Dc = −Γ(γ(t), c)·γ̇(t)` as an integrator right-hand side.
pub fn lift_rhs<'a>(
    conn: &'a ConnectionField,
    path: &'a PathCurve,
) -> impl Fn(f64, &[f64], &mut [f64]) + Copy + 'a {
    move |t, c, dc| {
        let g = conn.eval(&path.position(t), c);
        let u = path.velocity(t);
        for (k, out) in dc.iter_mut().enumerate() {
            *out = -(0..u.len()).map(|i| g[(k, i)] * u[i]).sum::<f64>();
        }
    }
}

fn to_trajectory(path: &PathCurve, sol: OdeSolution) -> LiftTrajectory {
    let samples = sol
        .samples
        .into_iter()
        .map(|(t, fiber)| LiftSample {
            t,
            base: path.position(t),
            fiber,
        })
        .collect();
    LiftTrajectory {
        samples,
        status: sol.status,
        stats: sol.stats,
        mesh: sol.mesh,
    }
}

/// Integrates the horizontal lift of `path` starting at `c(0) = v0`.
pub fn horizontal_lift(
    conn: &ConnectionField,
    path: &PathCurve,
    v0: &[f64],
    opts: &IntegratorOptions,
) -> Result<LiftTrajectory, LiftError> {
    check_dims(conn, path, v0)?;
    let sol = integrate_adaptive(lift_rhs(conn, path), v0, opts)?;
    Ok(to_trajectory(path, sol))
}

/// Lift through the seed `c(t0) = c0`, integrated towards `t1`. Samples land
/// on the options' dense grid.
pub fn horizontal_lift_from(
    conn: &ConnectionField,
    path: &PathCurve,
    t0: f64,
    c0: &[f64],
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<LiftTrajectory, LiftError> {
    check_dims(conn, path, c0)?;
    let sol = integrate_span(lift_rhs(conn, path), t0, t1, c0, &opts.dense_grid(), opts)?;
    Ok(to_trajectory(path, sol))
}

/// Lifts from many initial fibers in parallel; results keep input order.
pub fn lift_sweep(
    conn: &ConnectionField,
    path: &PathCurve,
    initial: &[Vec<f64>],
    opts: &IntegratorOptions,
) -> Vec<Result<LiftTrajectory, LiftError>> {
    initial
        .par_iter()
        .map(|v0| horizontal_lift(conn, path, v0, opts))
        .collect()
}

fn status_to_result(status: LiftStatus) -> Result<(), LiftError> {
    match status {
        LiftStatus::Complete => Ok(()),
        LiftStatus::Escaped { t_escape, .. } => Err(LiftError::TransportEscaped { t_escape }),
        LiftStatus::StepCollapse { t, reason } => Err(LiftError::StepCollapse { t, reason }),
    }
}

/// Parallel transport `T_γ(0)M → T_γ(1)M`.
pub fn parallel_transport(
    conn: &ConnectionField,
    path: &PathCurve,
    v0: &[f64],
    opts: &IntegratorOptions,
) -> Result<TangentVector, LiftError> {
    let traj = horizontal_lift(conn, path, v0, opts)?;
    status_to_result(traj.status)?;
    Ok(TangentVector {
        base: path.end(),
        vec: traj.final_fiber().to_vec(),
    })
}

/// Largest normalized residual of the lift equation over the trajectory's
/// interior samples, with `Dc` from three-point differences.
///
/// Escaped trajectories are measured only before the escape sample.
pub fn horizontality_defect(
    conn: &ConnectionField,
    traj: &LiftTrajectory,
    path: &PathCurve,
) -> Result<f64, LiftError> {
    let mut samples = traj.samples.as_slice();
    if traj.status.is_escaped() {
        samples = &samples[..samples.len().saturating_sub(1)];
    }
    if samples.len() < 3 {
        return Err(LiftError::TooFewSamples(samples.len()));
    }
    let n = traj.dim();
    let mut worst: f64 = 0.0;
    for w in samples.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        let h1 = b.t - a.t;
        let h2 = c.t - b.t;
        let wa = -h2 / (h1 * (h1 + h2));
        let wb = (h2 - h1) / (h1 * h2);
        let wc = h1 / (h2 * (h1 + h2));
        let g = conn.eval(&b.base, &b.fiber);
        let u = path.velocity(b.t);
        let speed = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let residual: f64 = (0..n)
            .map(|k| {
                let dc = wa * a.fiber[k] + wb * b.fiber[k] + wc * c.fiber[k];
                let gu: f64 = (0..n).map(|i| g[(k, i)] * u[i]).sum();
                (dc + gu).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        let scale = 1.0 + speed * spectral_norm(&g);
        worst = worst.max(residual / scale);
    }
    Ok(worst)
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// `‖P_γ⁻¹(P_γ(v0)) − v0‖`: transport along the path, then back along its
/// reversal.
pub fn round_trip_defect(
    conn: &ConnectionField,
    path: &PathCurve,
    v0: &[f64],
    opts: &IntegratorOptions,
) -> Result<f64, LiftError> {
    let there = parallel_transport(conn, path, v0, opts)?;
    let back = parallel_transport(conn, &path_reverse(path), &there.vec, opts)?;
    Ok(back
        .vec
        .iter()
        .zip(v0)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Default finite-difference step for [`transport_jacobian`].
pub fn default_jacobian_step(v0: &[f64]) -> f64 {
    1e-5 * (1.0 + v0.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Centered finite-difference Jacobian of `v ↦ P_γ(v)` at `v0`.
///
/// Every probe is first lifted adaptively to make sure it reaches `t = 1`;
/// all probes are then replayed on the union of those step meshes and the
/// central one, so the difference quotients see a single smooth discrete flow
/// rather than step-selection noise.
pub fn transport_jacobian(
    conn: &ConnectionField,
    path: &PathCurve,
    v0: &[f64],
    h: Option<f64>,
    opts: &IntegratorOptions,
) -> Result<DMatrix<f64>, LiftError> {
    let traj = horizontal_lift(conn, path, v0, opts)?;
    status_to_result(traj.status)?;
    let h = h.unwrap_or_else(|| default_jacobian_step(v0));
    let n = v0.len();
    let probes: Vec<Vec<f64>> = (0..2 * n)
        .map(|idx| {
            let mut v = v0.to_vec();
            v[idx / 2] += if idx % 2 == 0 { h } else { -h };
            v
        })
        .collect();

    let mut mesh = traj.mesh;
    for (idx, v) in probes.iter().enumerate() {
        let probe = horizontal_lift(conn, path, v, opts)?;
        if !probe.status.is_complete() {
            return Err(LiftError::ProbeEscaped { probe: idx });
        }
        mesh.extend(probe.mesh);
    }
    mesh.sort_by(f64::total_cmp);
    mesh.dedup();

    let rhs = lift_rhs(conn, path);
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let replay = |idx: usize| {
            replay_mesh(rhs, &probes[idx], &mesh, opts.escape_norm)
                .ok_or(LiftError::ProbeEscaped { probe: idx })
        };
        let fp = replay(2 * j)?;
        let fm = replay(2 * j + 1)?;
        for k in 0..n {
            jac[(k, j)] = (fp[k] - fm[k]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Transport around a closed loop, returned at the loop's base point.
pub fn holonomy(
    conn: &ConnectionField,
    path: &PathCurve,
    v0: &[f64],
    opts: &IntegratorOptions,
) -> Result<TangentVector, LiftError> {
    let gap = path.closure_gap();
    if gap > 1e-10 {
        return Err(LiftError::NotClosed(gap));
    }
    let out = parallel_transport(conn, path, v0, opts)?;
    Ok(TangentVector {
        base: ChartPoint::new(path.position(0.0)).map_err(|_| LiftError::NonFiniteInitial)?,
        vec: out.vec,
    })
}
