//! Dormand-Prince 5(4) with PI step control and blow-up detection.
//!
//! The integrator runs over an arbitrary span `[t_start, t_end]` (either
//! direction) and stops in one of three ways: the span is finished, the
//! state norm reaches `escape_norm`, or the step size collapses.

use serde::{Deserialize, Serialize};

use super::LiftError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order weights minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense output coefficients
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Width below which a threshold-crossing step is accepted as the escape step.
pub const ESCAPE_BRACKET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub escape_norm: f64,
    pub min_step: f64,
    pub max_steps: usize,
    pub dense_samples: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            escape_norm: 1e8,
            min_step: 1e-12,
            max_steps: 1_000_000,
            dense_samples: 201,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LiftError> {
        let positive = [self.rtol, self.atol, self.escape_norm, self.min_step]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0);
        if !positive || self.max_steps == 0 || self.dense_samples < 2 {
            return Err(LiftError::InvalidOptions(
                "tolerances, escape norm and min step must be positive; at least 2 dense samples"
                    .into(),
            ));
        }
        if self.rtol < 1e-14 {
            return Err(LiftError::InvalidOptions("rtol must be ≥ 1e-14".into()));
        }
        Ok(())
    }

    /// Uniform output grid on `[0, 1]`.
    pub fn dense_grid(&self) -> Vec<f64> {
        let m = self.dense_samples - 1;
        (0..=m).map(|k| k as f64 / m as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapseReason {
    MinStep,
    MaxSteps,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LiftStatus {
    Complete,
    Escaped { t_escape: f64, norm_at_escape: f64 },
    StepCollapse { t: f64, reason: CollapseReason },
}

impl LiftStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, Self::Complete)
    }

    pub fn is_escaped(&self) -> bool {
        matches!(self, Self::Escaped { .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest `‖ẏ‖` seen at an accepted step endpoint.
    pub max_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    /// `(t, y)` pairs: the start, every grid point reached, and the final state.
    pub samples: Vec<(f64, Vec<f64>)>,
    pub status: LiftStatus,
    pub stats: IntegratorStats,
    /// Endpoints of the accepted steps, starting at `t_start`.
    pub mesh: Vec<f64>,
}

impl OdeSolution {
    pub fn final_state(&self) -> &[f64] {
        &self.samples.last().expect("at least the initial sample").1
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Stepper {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    /// One Dormand-Prince step from `(t, y)` with `k[0] = f(t, y)` already
    /// filled in. Leaves the 5th-order result in `y_new`, the embedded error
    /// in `err`, and `f(t + h, y_new)` in `k[6]`.
    fn step<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, tmp, k6);
        for i in 0..n {
            self.y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, &self.y_new, k7);
        for i in 0..n {
            self.err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
    }

    /// Fourth-order continuous extension across the last step `[t0, t1]`.
    fn dense(&self, t0: f64, y0: &[f64], t1: f64, t: f64) -> Vec<f64> {
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s1 = 1.0 - s;
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        (0..y0.len())
            .map(|i| {
                let ydiff = self.y_new[i] - y0[i];
                let bspl = h * k1[i] - ydiff;
                let r4 = ydiff - h * k7[i] - bspl;
                let r5 = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                y0[i] + s * (ydiff + s1 * (bspl + s * (r4 + s1 * r5)))
            })
            .collect()
    }

    fn error_norm(&self, y: &[f64], opts: &IntegratorOptions) -> f64 {
        let n = y.len();
        let sum: f64 = (0..n)
            .map(|i| {
                let scale = opts.atol + opts.rtol * y[i].abs().max(self.y_new[i].abs());
                (self.err[i] / scale).powi(2)
            })
            .sum();
        let e = (sum / n as f64).sqrt();
        if e.is_finite() && self.y_new.iter().all(|x| x.is_finite()) {
            e
        } else {
            f64::INFINITY
        }
    }
}

fn initial_step<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    span: f64,
    opts: &IntegratorOptions,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let scale: Vec<f64> = y.iter().map(|x| opts.atol + opts.rtol * x.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + dir * h0 * b).collect();
    let mut f1 = vec![0.0; n];
    rhs(t + dir * h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if !d2.is_finite() {
        h0
    } else if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `ẏ = rhs(t, y)` on `[0, 1]` from `y0`, sampling on the
/// options' uniform dense grid.
pub fn integrate_adaptive<F>(
    rhs: F,
    y0: &[f64],
    opts: &IntegratorOptions,
) -> Result<OdeSolution, LiftError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate_span(rhs, 0.0, 1.0, y0, &opts.dense_grid(), opts)
}

/// Integrates from `t_start` to `t_end` (either direction). Grid points
/// lying strictly past `t_start` in the direction of integration are
/// filled in by the method's fourth-order continuous extension.
pub fn integrate_span<F>(
    mut rhs: F,
    t_start: f64,
    t_end: f64,
    y0: &[f64],
    grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<OdeSolution, LiftError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    opts.validate()?;
    if y0.is_empty() {
        return Err(LiftError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    if y0.iter().any(|x| !x.is_finite()) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(LiftError::NonFiniteInitial);
    }

    let n = y0.len();
    let span = (t_end - t_start).abs();
    let dir = if t_end >= t_start { 1.0 } else { -1.0 };
    let ahead = |a: f64, b: f64| dir * (b - a) > 0.0;

    let mut pending: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&g| ahead(t_start, g) && !ahead(t_end, g))
        .collect();
    pending.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
    pending.dedup();
    let mut pending = pending.into_iter().peekable();

    let mut stats = IntegratorStats::default();
    let mut samples = vec![(t_start, y0.to_vec())];
    let mut mesh = vec![t_start];
    let mut y = y0.to_vec();
    let mut t = t_start;

    let finish = |samples, status, stats, mesh| {
        Ok(OdeSolution {
            samples,
            status,
            stats,
            mesh,
        })
    };

    let y_norm = norm(&y);
    if y_norm >= opts.escape_norm {
        let status = LiftStatus::Escaped {
            t_escape: t,
            norm_at_escape: y_norm,
        };
        return finish(samples, status, stats, mesh);
    }
    if span == 0.0 {
        return finish(samples, LiftStatus::Complete, stats, mesh);
    }

    let mut stepper = Stepper::new(n);
    let mut f = vec![0.0; n];
    rhs(t, &y, &mut f);
    stats.rhs_evals += 1;
    if f.iter().any(|x| !x.is_finite()) {
        let status = LiftStatus::StepCollapse {
            t,
            reason: CollapseReason::NonFinite,
        };
        return finish(samples, status, stats, mesh);
    }
    stats.max_rate = norm(&f);

    let mut h = initial_step(&mut rhs, t, &y, &f, dir, span, opts);
    stats.rhs_evals += 1;
    let mut err_prev: f64 = 1e-4;
    let mut rejected_last = false;

    loop {
        if stats.steps + stats.rejected >= opts.max_steps {
            let status = LiftStatus::StepCollapse {
                t,
                reason: CollapseReason::MaxSteps,
            };
            return finish(samples, status, stats, mesh);
        }
        let remaining = (t_end - t).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        if !last && h < opts.min_step {
            let reason = if stepper.err.iter().all(|e| e.is_finite()) {
                CollapseReason::MinStep
            } else {
                CollapseReason::NonFinite
            };
            return finish(samples, LiftStatus::StepCollapse { t, reason }, stats, mesh);
        }
        let h_step = if last { remaining } else { h };
        let t_new = if last { t_end } else { t + dir * h_step };

        stepper.k[0].copy_from_slice(&f);
        // step by the representable mesh difference so replays are exact
        stepper.step(&mut rhs, t, &y, t_new - t);
        stats.rhs_evals += 6;
        let err = stepper.error_norm(&y, opts);

        if err > 1.0 {
            stats.rejected += 1;
            rejected_last = true;
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-ALPHA)).max(MIN_FACTOR)
            } else {
                MIN_FACTOR
            };
            h = h_step * factor;
            continue;
        }

        let new_norm = norm(&stepper.y_new);
        if new_norm >= opts.escape_norm && h_step > ESCAPE_BRACKET {
            // bisect the crossing down to the escape bracket
            stats.rejected += 1;
            rejected_last = true;
            h = 0.5 * h_step;
            continue;
        }

        let f_new = stepper.k[6].clone();
        stats.steps += 1;
        mesh.push(t_new);

        if new_norm >= opts.escape_norm {
            samples.push((t_new, stepper.y_new.clone()));
            let status = LiftStatus::Escaped {
                t_escape: t_new,
                norm_at_escape: new_norm,
            };
            return finish(samples, status, stats, mesh);
        }

        while let Some(&g) = pending.peek() {
            if ahead(t_new, g) {
                break;
            }
            let value = if g == t_new {
                stepper.y_new.clone()
            } else {
                stepper.dense(t, &y, t_new, g)
            };
            samples.push((g, value));
            pending.next();
        }

        stats.max_rate = stats.max_rate.max(norm(&f_new));
        t = t_new;
        y.copy_from_slice(&stepper.y_new);
        f = f_new;

        if last {
            if samples.last().map(|s| s.0) != Some(t_end) {
                samples.push((t_end, y.clone()));
            }
            return finish(samples, LiftStatus::Complete, stats, mesh);
        }

        let err_c = err.max(1e-10);
        let mut factor = SAFETY * err_c.powf(-ALPHA) * err_prev.powf(BETA);
        factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
        if rejected_last {
            factor = factor.min(1.0);
        }
        h = h_step * factor;
        err_prev = err_c;
        rejected_last = false;
    }
}

/// Replays Dormand-Prince steps over a fixed mesh (no error control).
///
/// Returns `None` if the state becomes non-finite or reaches `escape_norm`.
/// Used to differentiate the discrete flow map with respect to the initial
/// state without step-selection noise.
pub fn replay_mesh<F>(mut rhs: F, y0: &[f64], mesh: &[f64], escape_norm: f64) -> Option<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut stepper = Stepper::new(n);
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    if let Some(&t0) = mesh.first() {
        rhs(t0, &y, &mut f);
    }
    for w in mesh.windows(2) {
        stepper.k[0].copy_from_slice(&f);
        stepper.step(&mut rhs, w[0], &y, w[1] - w[0]);
        y.copy_from_slice(&stepper.y_new);
        f.copy_from_slice(&stepper.k[6]);
        if y.iter().any(|x| !x.is_finite()) || norm(&y) >= escape_norm {
            return None;
        }
    }
    Some(y)
}
