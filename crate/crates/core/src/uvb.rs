//! Principal angles between horizontal and vertical spaces, and fiber scans
//! that classify a connection as uniformly vertically bounded (UVB) or not.
//!
//! Angles are measured under the auxiliary metric
//! `⟨(u, w₁), (u', w₁')⟩ = u·u' + w(v)²·w₁·w₁'` on `ℝⁿ_B ⊕ ℝⁿ_V`, where the
//! fiber weight `w` is chosen per scan.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::connections::{vertical_basis, ConnectionError, ConnectionField};
use crate::geometry::ChartPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UvbError {
    #[error(transparent)]
    Connection(#[from] ConnectionError),
    #[error("subspace basis is rank deficient")]
    RankDeficient,
    #[error("subspaces have different shapes: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("fiber weight must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("direction {0} is not a unit vector")]
    DirectionNotUnit(usize),
    #[error("radii must be positive and strictly increasing")]
    BadRadii,
    #[error("angle computation failed at direction {direction}, radius {radius}: {source}")]
    Sample {
        direction: usize,
        radius: f64,
        source: Box<UvbError>,
    },
}

type WeightFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Scalar rescaling of vertical directions in the auxiliary metric.
#[derive(Clone, Default)]
pub enum FiberWeight {
    Euclidean,
    /// `w(v) = (1 + ‖v‖²)^(−1/2)`
    #[default]
    Normalized,
    Custom(String, WeightFn),
}

impl fmt::Debug for FiberWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FiberWeight {
    pub fn custom<F>(label: impl Into<String>, w: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::Custom(label.into(), Arc::new(w))
    }

    pub fn label(&self) -> &str {
        match self {
            Self::Euclidean => "euclidean",
            Self::Normalized => "normalized",
            Self::Custom(label, _) => label,
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "euclidean" => Some(Self::Euclidean),
            "normalized" => Some(Self::Normalized),
            _ => None,
        }
    }

    pub fn at(&self, v: &[f64]) -> Result<f64, UvbError> {
        let w = match self {
            Self::Euclidean => 1.0,
            Self::Normalized => (1.0 + v.iter().map(|x| x * x).sum::<f64>()).sqrt().recip(),
            Self::Custom(_, f) => f(v),
        };
        if w.is_finite() && w > 0.0 {
            Ok(w)
        } else {
            Err(UvbError::BadWeight(w))
        }
    }
}

impl Serialize for FiberWeight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

/// Principal angles `θ₁ ≤ … ≤ θₙ` in radians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleSpectrum {
    pub angles: Vec<f64>,
}

impl AngleSpectrum {
    pub fn theta_min(&self) -> f64 {
        self.angles[0]
    }
}

/// Gram-Schmidt with one reorthogonalization pass. Exact zeros stay exact,
/// so orthogonal coordinate frames give exactly vanishing cross terms.
fn orthonormalize(a: &DMatrix<f64>) -> Result<DMatrix<f64>, UvbError> {
    let mut q = a.clone();
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(UvbError::RankDeficient);
    }
    for j in 0..q.ncols() {
        let mut col = q.column(j).clone_owned();
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let proj = qi.dot(&col);
                col.axpy(-proj, &qi, 1.0);
            }
        }
        let norm = col.norm();
        if norm <= 1e-13 * scale {
            return Err(UvbError::RankDeficient);
        }
        q.set_column(j, &(col / norm));
    }
    Ok(q)
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Principal angles between the column spans of two equal-shape frames in
/// Euclidean space.
///
/// Cosines come from the cross-Gram matrix `Q_aᵀ Q_b`; sines from the part
/// of `Q_b` orthogonal to `Q_a`. Each angle is read from whichever of the
/// two is better conditioned, after clamping into `[0, 1]`.
pub fn subspace_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>, UvbError> {
    if a.shape() != b.shape() {
        return Err(UvbError::ShapeMismatch(
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
        ));
    }
    let qa = orthonormalize(a)?;
    let qb = orthonormalize(b)?;
    let cross = qa.transpose() * &qb;
    let residual = &qb - &qa * &cross;
    let cosines = sorted_singular_values(&cross);
    let mut sines = sorted_singular_values(&residual);
    sines.reverse();
    let mut angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            let c = c.clamp(0.0, 1.0);
            if c * c < 0.5 {
                c.acos()
            } else {
                s.clamp(0.0, 1.0).asin()
            }
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Angles between `H_(p,v)` and the vertical space under `weight`.
pub fn principal_angles(
    conn: &ConnectionField,
    p: &ChartPoint,
    v: &[f64],
    weight: &FiberWeight,
) -> Result<AngleSpectrum, UvbError> {
    let n = conn.dim();
    let mut h = conn.horizontal_basis(p, v)?;
    let w = weight.at(v)?;
    // pass to coordinates where the weighted metric is Euclidean
    h.rows_mut(n, n).scale_mut(w);
    let mut vert = vertical_basis(n);
    vert.rows_mut(n, n).scale_mut(w);
    Ok(AngleSpectrum {
        angles: subspace_angles(&h, &vert)?,
    })
}

/// Graph-form route: `θᵢ = arccot(sᵢ)` with `sᵢ` the singular values of
/// `w(v)·Γ(p, v)`.
pub fn principal_angles_graph(
    conn: &ConnectionField,
    p: &ChartPoint,
    v: &[f64],
    weight: &FiberWeight,
) -> Result<AngleSpectrum, UvbError> {
    let g = conn.coeff(p, v)? * weight.at(v)?;
    let mut angles: Vec<f64> = sorted_singular_values(&g)
        .into_iter()
        .map(|s| 1f64.atan2(s))
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(AngleSpectrum { angles })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "UVB")]
    Uvb,
    #[serde(rename = "NotUVB")]
    NotUvb,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uvb => "UVB",
            Self::NotUvb => "NotUVB",
            Self::Inconclusive => "Inconclusive",
        })
    }
}

/// Cutoffs used to turn a finite fiber scan into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UvbThresholds {
    /// Angle floor in radians.
    pub epsilon: f64,
    /// A direction whose fitted decay exponent is at or below this counts
    /// as decaying.
    pub decay_beta: f64,
    /// Every direction must have a fitted exponent at or above this for UVB.
    pub flat_beta: f64,
    /// The exponent fit uses radii in `[r_max / fit_span, r_max]`.
    pub fit_span: f64,
    /// Monotone decay is checked over `[r_max / trend_span, r_max]`.
    pub trend_span: f64,
}

impl Default for UvbThresholds {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            decay_beta: -0.4,
            flat_beta: -0.1,
            fit_span: 10.0,
            trend_span: 100.0,
        }
    }
}

/// Geometric radii `1, 2, 4, …, 2^24`.
pub fn default_radii() -> Vec<f64> {
    (0..=24).map(|k| f64::powi(2.0, k)).collect()
}

/// `±e_i` for every coordinate axis.
pub fn axis_directions(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .flat_map(|i| {
            [1.0, -1.0].map(|s| {
                let mut d = vec![0.0; n];
                d[i] = s;
                d
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    /// Defaults to [`axis_directions`].
    pub directions: Option<Vec<Vec<f64>>>,
    pub radii: Vec<f64>,
    pub weight: FiberWeight,
    pub thresholds: UvbThresholds,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            directions: None,
            radii: default_radii(),
            weight: FiberWeight::Normalized,
            thresholds: UvbThresholds::default(),
        }
    }
}

/// `θ_m` along fiber rays `v = r·d` at one base point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberScanReport {
    pub point: Vec<f64>,
    pub weight: String,
    pub directions: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// Indexed `[direction][radius]`.
    pub theta_min: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub verdict: Verdict,
    pub epsilon: f64,
    #[serde(skip)]
    pub thresholds: UvbThresholds,
}

/// Least-squares slope of `ln θ` against `ln r`.
pub fn log_log_slope(radii: &[f64], thetas: &[f64]) -> f64 {
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = thetas.iter().map(|t| t.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn fit_window(radii: &[f64], span: f64) -> usize {
    let r_max = radii[radii.len() - 1];
    radii.iter().position(|&r| r >= r_max / span).unwrap_or(0)
}

pub fn fiber_scan(
    conn: &ConnectionField,
    p: &ChartPoint,
    config: &ScanConfig,
) -> Result<FiberScanReport, UvbError> {
    let n = conn.dim();
    let directions = config
        .directions
        .clone()
        .unwrap_or_else(|| axis_directions(n));
    for (i, d) in directions.iter().enumerate() {
        let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if d.len() != n || (len - 1.0).abs() > 1e-12 {
            return Err(UvbError::DirectionNotUnit(i));
        }
    }
    let radii = &config.radii;
    if radii.is_empty()
        || radii.iter().any(|r| !(r.is_finite() && *r > 0.0))
        || radii.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(UvbError::BadRadii);
    }

    let pairs: Vec<(usize, usize)> = (0..directions.len())
        .flat_map(|d| (0..radii.len()).map(move |r| (d, r)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(di, ri)| {
            let v: Vec<f64> = directions[di].iter().map(|x| x * radii[ri]).collect();
            principal_angles(conn, p, &v, &config.weight)
                .map(|s| s.theta_min())
                .map_err(|e| UvbError::Sample {
                    direction: di,
                    radius: radii[ri],
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let theta_min: Vec<Vec<f64>> = values.chunks(radii.len()).map(<[f64]>::to_vec).collect();

    let start = fit_window(radii, config.thresholds.fit_span);
    let beta = theta_min
        .iter()
        .map(|row| log_log_slope(&radii[start..], &row[start..]))
        .collect();

    let mut report = FiberScanReport {
        point: p.coords().to_vec(),
        weight: config.weight.label().to_string(),
        directions,
        radii: radii.clone(),
        theta_min,
        beta,
        verdict: Verdict::Inconclusive,
        epsilon: config.thresholds.epsilon,
        thresholds: config.thresholds,
    };
    report.verdict = uvb_classify(&report, &config.thresholds);
    Ok(report)
}

/// Turns a scan into a verdict:
/// - `NotUvb` when some direction decays strictly over the top two decades,
///   ends below `epsilon`, and has a decay exponent at or below `decay_beta`;
/// - `Uvb` when every sample is at least `epsilon` and every exponent is at
///   least `flat_beta`;
/// - `Inconclusive` otherwise, including scans with fewer than 4 radii.
pub fn uvb_classify(report: &FiberScanReport, thresholds: &UvbThresholds) -> Verdict {
    let radii = &report.radii;
    if radii.len() < 4 {
        return Verdict::Inconclusive;
    }
    let trend_start = fit_window(radii, thresholds.trend_span);
    let decaying = report.theta_min.iter().zip(&report.beta).any(|(row, &b)| {
        let tail = &row[trend_start..];
        let monotone = tail.windows(2).all(|w| w[1] < w[0]);
        monotone && row[row.len() - 1] < thresholds.epsilon && b <= thresholds.decay_beta
    });
    if decaying {
        return Verdict::NotUvb;
    }
    let floor = report
        .theta_min
        .iter()
        .flatten()
        .copied()
        .fold(FRAC_PI_2, f64::min);
    if floor >= thresholds.epsilon && report.beta.iter().all(|&b| b >= thresholds.flat_beta) {
        Verdict::Uvb
    } else {
        Verdict::Inconclusive
    }
}
