//! Single-chart primitives: points, tangent vectors and C¹ paths on `[0, 1]`.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension must be at least 1")]
    EmptyDimension,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline has {points} points but {times} times")]
    TimesLength { points: usize, times: usize },
    #[error("knot times must be strictly increasing from 0 to 1")]
    BadTimes,
    #[error("circle radius must be positive and finite")]
    BadRadius,
    #[error("circle plane axes ({0}, {1}) invalid for dimension {2}")]
    BadPlane(usize, usize, usize),
    #[error("path velocity disagrees with position derivative at t = {t}")]
    InconsistentVelocity { t: f64 },
    #[error("cannot parse path `{0}`")]
    Parse(String),
}

/// A point of the chart domain `ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChartPoint(Vec<f64>);

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.is_empty() {
            return Err(GeometryError::EmptyDimension);
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A fiber element `v ∈ T_pM`, stored as chart components over its base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub vec: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: ChartPoint, vec: Vec<f64>) -> Result<Self, GeometryError> {
        if vec.len() != base.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: base.dim(),
                got: vec.len(),
            });
        }
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { base, vec })
    }
}

type CurveFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Segment {
        from: Vec<f64>,
        delta: Vec<f64>,
    },
    Hermite {
        times: Vec<f64>,
        points: Vec<Vec<f64>>,
        tangents: Vec<Vec<f64>>,
    },
    Circle {
        center: Vec<f64>,
        radius: f64,
        plane: (usize, usize),
    },
    Custom {
        position: CurveFn,
        velocity: CurveFn,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Segment,
    PolylineHermite,
    CircleLoop,
    Custom,
}

/// A C¹ curve `γ: [0, 1] → ℝⁿ` with analytic velocity.
///
/// Reversal is a flag on the curve rather than a new closure, so
/// reversing twice gives back bit-identical evaluations.
#[derive(Clone)]
pub struct PathCurve {
    dim: usize,
    shape: Shape,
    reversed: bool,
}

impl fmt::Debug for PathCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathCurve")
            .field("dim", &self.dim)
            .field("kind", &self.kind())
            .field("reversed", &self.reversed)
            .finish()
    }
}

impl PathCurve {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> PathKind {
        match self.shape {
            Shape::Segment { .. } => PathKind::Segment,
            Shape::Hermite { .. } => PathKind::PolylineHermite,
            Shape::Circle { .. } => PathKind::CircleLoop,
            Shape::Custom { .. } => PathKind::Custom,
        }
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        let s = if self.reversed { 1.0 - t } else { t };
        self.shape_position(s)
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        if self.reversed {
            self.shape_velocity(1.0 - t)
                .into_iter()
                .map(|x| -x)
                .collect()
        } else {
            self.shape_velocity(t)
        }
    }

    pub fn start(&self) -> ChartPoint {
        ChartPoint(self.position(0.0))
    }

    pub fn end(&self) -> ChartPoint {
        ChartPoint(self.position(1.0))
    }

    /// Largest coordinate gap between `γ(0)` and `γ(1)`.
    pub fn closure_gap(&self) -> f64 {
        let a = self.position(0.0);
        let b = self.position(1.0);
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn shape_position(&self, s: f64) -> Vec<f64> {
        match &self.shape {
            Shape::Segment { from, delta } => {
                from.iter().zip(delta).map(|(a, d)| a + s * d).collect()
            }
            Shape::Hermite {
                times,
                points,
                tangents,
            } => {
                let (k, h, u) = locate(times, s);
                let (h00, h10, h01, h11) = hermite_basis(u);
                (0..self.dim)
                    .map(|i| {
                        h00 * points[k][i]
                            + h10 * h * tangents[k][i]
                            + h01 * points[k + 1][i]
                            + h11 * h * tangents[k + 1][i]
                    })
                    .collect()
            }
            Shape::Circle {
                center,
                radius,
                plane,
            } => {
                let mut p = center.clone();
                let angle = TAU * s;
                p[plane.0] += radius * angle.cos();
                p[plane.1] += radius * angle.sin();
                p
            }
            Shape::Custom { position, .. } => position(s),
        }
    }

    fn shape_velocity(&self, s: f64) -> Vec<f64> {
        match &self.shape {
            Shape::Segment { delta, .. } => delta.clone(),
            Shape::Hermite {
                times,
                points,
                tangents,
            } => {
                let (k, h, u) = locate(times, s);
                let (d00, d10, d01, d11) = hermite_basis_derivative(u);
                (0..self.dim)
                    .map(|i| {
                        (d00 * points[k][i] + d01 * points[k + 1][i]) / h
                            + d10 * tangents[k][i]
                            + d11 * tangents[k + 1][i]
                    })
                    .collect()
            }
            Shape::Circle { radius, plane, .. } => {
                let mut v = vec![0.0; self.dim];
                let angle = TAU * s;
                v[plane.0] = -TAU * radius * angle.sin();
                v[plane.1] = TAU * radius * angle.cos();
                v
            }
            Shape::Custom { velocity, .. } => velocity(s),
        }
    }

    /// Builds a path from user-supplied position and velocity closures.
    ///
    /// The pair is sampled on a 101-point grid; any non-finite value or a
    /// velocity that disagrees with the centered difference of the position
    /// is rejected.
    pub fn custom<P, V>(dim: usize, position: P, velocity: V) -> Result<Self, GeometryError>
    where
        P: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        V: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(GeometryError::EmptyDimension);
        }
        let path = Self {
            dim,
            shape: Shape::Custom {
                position: Arc::new(position),
                velocity: Arc::new(velocity),
            },
            reversed: false,
        };
        path.check_consistency(101, 1e-6)?;
        Ok(path)
    }

    /// Compares the declared velocity against a finite-difference derivative
    /// of the position on a uniform grid of `samples` points.
    pub fn check_consistency(&self, samples: usize, h: f64) -> Result<(), GeometryError> {
        for k in 0..samples {
            let t = k as f64 / (samples - 1) as f64;
            let x = self.position(t);
            let v = self.velocity(t);
            if x.len() != self.dim || v.len() != self.dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: self.dim,
                    got: x.len().min(v.len()),
                });
            }
            if x.iter().chain(&v).any(|c| !c.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            // one-sided at the ends of the domain
            let (lo, hi) = ((t - h).max(0.0), (t + h).min(1.0));
            let xl = self.position(lo);
            let xh = self.position(hi);
            let speed = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            for i in 0..self.dim {
                let fd = (xh[i] - xl[i]) / (hi - lo);
                if (fd - v[i]).abs() > 1e-4 * (1.0 + speed) {
                    return Err(GeometryError::InconsistentVelocity { t });
                }
            }
        }
        Ok(())
    }
}

fn locate(times: &[f64], s: f64) -> (usize, f64, f64) {
    let last = times.len() - 2;
    let k = match times.binary_search_by(|x| x.total_cmp(&s)) {
        Ok(i) => i.min(last),
        Err(i) => i.saturating_sub(1).min(last),
    };
    let h = times[k + 1] - times[k];
    (k, h, (s - times[k]) / h)
}

fn hermite_basis(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    (
        2.0 * u3 - 3.0 * u2 + 1.0,
        u3 - 2.0 * u2 + u,
        -2.0 * u3 + 3.0 * u2,
        u3 - u2,
    )
}

fn hermite_basis_derivative(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    (
        6.0 * u2 - 6.0 * u,
        3.0 * u2 - 4.0 * u + 1.0,
        -6.0 * u2 + 6.0 * u,
        3.0 * u2 - 2.0 * u,
    )
}

/// The straight path `γ(t) = (1 − t)·a + t·b`.
pub fn path_segment(a: &ChartPoint, b: &ChartPoint) -> Result<PathCurve, GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let delta = b.0.iter().zip(&a.0).map(|(y, x)| y - x).collect();
    Ok(PathCurve {
        dim: a.dim(),
        shape: Shape::Segment {
            from: a.0.clone(),
            delta,
        },
        reversed: false,
    })
}

/// Cubic Hermite interpolant through `points` at knot `times`.
///
/// Knot tangents are centered differences at interior knots and one-sided
/// differences at the two ends, so the curve is C¹ everywhere.
pub fn path_polyline(points: &[ChartPoint], times: &[f64]) -> Result<PathCurve, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::TooFewPoints(points.len()));
    }
    if times.len() != points.len() {
        return Err(GeometryError::TimesLength {
            points: points.len(),
            times: times.len(),
        });
    }
    let dim = points[0].dim();
    for p in points {
        if p.dim() != dim {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
    }
    let increasing = times.windows(2).all(|w| w[1] > w[0]);
    if !increasing || times[0] != 0.0 || times[times.len() - 1] != 1.0 {
        return Err(GeometryError::BadTimes);
    }

    let pts: Vec<Vec<f64>> = points.iter().map(|p| p.0.clone()).collect();
    let m = pts.len();
    let slope = |a: usize, b: usize| -> Vec<f64> {
        let dt = times[b] - times[a];
        (0..dim).map(|i| (pts[b][i] - pts[a][i]) / dt).collect()
    };
    let tangents = (0..m)
        .map(|k| match k {
            0 => slope(0, 1),
            k if k == m - 1 => slope(m - 2, m - 1),
            k => slope(k - 1, k + 1),
        })
        .collect();

    Ok(PathCurve {
        dim,
        shape: Shape::Hermite {
            times: times.to_vec(),
            points: pts,
            tangents,
        },
        reversed: false,
    })
}

/// A circle of the given radius about `center`, in the coordinate plane
/// spanned by axes `plane.0` and `plane.1`, traversed once counterclockwise.
pub fn path_circle(
    center: &ChartPoint,
    radius: f64,
    plane: (usize, usize),
) -> Result<PathCurve, GeometryError> {
    let dim = center.dim();
    if !(radius.is_finite() && radius > 0.0) {
        return Err(GeometryError::BadRadius);
    }
    if plane.0 >= dim || plane.1 >= dim || plane.0 == plane.1 {
        return Err(GeometryError::BadPlane(plane.0, plane.1, dim));
    }
    Ok(PathCurve {
        dim,
        shape: Shape::Circle {
            center: center.0.clone(),
            radius,
            plane,
        },
        reversed: false,
    })
}

/// `γʳ(t) = γ(1 − t)`.
pub fn path_reverse(path: &PathCurve) -> PathCurve {
    PathCurve {
        reversed: !path.reversed,
        ..path.clone()
    }
}

/// JSON description of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathSpec {
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    Polyline {
        points: Vec<Vec<f64>>,
        times: Vec<f64>,
    },
    Circle {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "default_plane")]
        plane: [usize; 2],
    },
}

fn default_plane() -> [usize; 2] {
    [0, 1]
}

impl PathSpec {
    /// Parses either a JSON document or the inline forms
    /// `segment:<from>:<to>` and `circle:<center>:<radius>[:<i>,<j>]`,
    /// where vectors are comma separated.
    pub fn parse_inline(text: &str) -> Result<Self, GeometryError> {
        let text = text.trim();
        if text.starts_with('{') {
            return serde_json::from_str(text).map_err(|e| GeometryError::Parse(e.to_string()));
        }
        let err = || GeometryError::Parse(text.to_string());
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["segment", from, to] => Ok(Self::Segment {
                from: parse_floats(from).ok_or_else(err)?,
                to: parse_floats(to).ok_or_else(err)?,
            }),
            ["circle", center, radius, rest @ ..] if rest.len() <= 1 => {
                let plane = match rest.first() {
                    Some(p) => {
                        let ij: Vec<usize> = p
                            .split(',')
                            .map(|s| s.trim().parse().ok())
                            .collect::<Option<_>>()
                            .ok_or_else(err)?;
                        <[usize; 2]>::try_from(ij).map_err(|_| err())?
                    }
                    None => default_plane(),
                };
                Ok(Self::Circle {
                    center: parse_floats(center).ok_or_else(err)?,
                    radius: radius.trim().parse().map_err(|_| err())?,
                    plane,
                })
            }
            _ => Err(err()),
        }
    }

    /// Builds the curve. Polyline knot times on any increasing interval are
    /// affinely rescaled onto `[0, 1]`.
    pub fn build(&self) -> Result<PathCurve, GeometryError> {
        match self {
            Self::Segment { from, to } => path_segment(
                &ChartPoint::new(from.clone())?,
                &ChartPoint::new(to.clone())?,
            ),
            Self::Polyline { points, times } => {
                let pts = points
                    .iter()
                    .map(|p| ChartPoint::new(p.clone()))
                    .collect::<Result<Vec<_>, _>>()?;
                let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
                    return Err(GeometryError::TooFewPoints(times.len()));
                };
                if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater)
                    || times.iter().any(|t| !t.is_finite())
                {
                    return Err(GeometryError::BadTimes);
                }
                let mut scaled: Vec<f64> = times.iter().map(|t| (t - t0) / (t1 - t0)).collect();
                let last = scaled.len() - 1;
                scaled[0] = 0.0;
                scaled[last] = 1.0;
                path_polyline(&pts, &scaled)
            }
            Self::Circle {
                center,
                radius,
                plane,
            } => path_circle(
                &ChartPoint::new(center.clone())?,
                *radius,
                (plane[0], plane[1]),
            ),
        }
    }
}

/// Parses a comma separated list of floats.
pub fn parse_floats(text: &str) -> Option<Vec<f64>> {
    let values: Option<Vec<f64>> = text.split(',').map(|s| s.trim().parse().ok()).collect();
    values.filter(|v| !v.is_empty() && v.iter().all(|x| x.is_finite()))
}
