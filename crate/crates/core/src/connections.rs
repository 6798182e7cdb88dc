//! General connections in graph form.
//!
//! Over a chart, `T(TM)` at a fiber point `(p, v)` splits as `ℝⁿ_B ⊕ ℝⁿ_V`
//! (basal ⊕ vertical). A connection is stored as the coefficient map
//! `Γ(p, v)`, and its horizontal space is the graph
//! `H_(p,v) = {(u, −Γ(p, v)·u) : u ∈ ℝⁿ_B}`. Any subspace complementary to
//! the vertical factor has exactly one such representation.
//!
//! With this sign, a horizontal lift `c` over a path `γ` solves
//! `Dc = −Γ(γ, c)·γ̇`, which for a linear connection is the classical
//! parallel-transport equation `Dcᵏ = −Γᵏᵢⱼ γ̇ⁱ cʲ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ChartPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConnectionError {
    #[error("dimension mismatch: connection has dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input to coefficient map")]
    NonFiniteInput,
    #[error("coefficient map returned a non-finite value at p = {p:?}, v = {v:?}")]
    NonFiniteCoefficient { p: Vec<f64>, v: Vec<f64> },
    #[error("christoffel array has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("unknown gallery connection `{0}`")]
    UnknownName(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("connection `{0}` needs an explicit dimension")]
    MissingDimension(String),
    #[error("cannot parse connection spec: {0}")]
    Parse(String),
}

type CoeffFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

/// A fiber-dependent coefficient field whose graph is the horizontal bundle.
#[derive(Clone)]
pub struct ConnectionField {
    dim: usize,
    name: String,
    params: Vec<(String, f64)>,
    linear_in_fiber: bool,
    growth_hint: Option<f64>,
    coeff: CoeffFn,
}

impl fmt::Debug for ConnectionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .field("linear_in_fiber", &self.linear_in_fiber)
            .field("growth_hint", &self.growth_hint)
            .finish()
    }
}

impl ConnectionField {
    /// Wraps an arbitrary coefficient map. `coeff(p, v)` must return an
    /// `n × n` matrix.
    pub fn new<F>(
        name: impl Into<String>,
        dim: usize,
        linear_in_fiber: bool,
        growth_hint: Option<f64>,
        coeff: F,
    ) -> Self
    where
        F: Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            name: name.into(),
            params: Vec::new(),
            linear_in_fiber,
            growth_hint,
            coeff: Arc::new(coeff),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: f64) -> Self {
        self.params.push((key.into(), value));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn is_linear_in_fiber(&self) -> bool {
        self.linear_in_fiber
    }

    pub fn growth_hint(&self) -> Option<f64> {
        self.growth_hint
    }

    /// Evaluates `Γ(p, v)` without validation. Used on integrator hot paths,
    /// where non-finite output is caught by step rejection instead.
    pub fn eval(&self, p: &[f64], v: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(p.len(), self.dim);
        debug_assert_eq!(v.len(), self.dim);
        (self.coeff)(p, v)
    }

    /// Validated `Γ(p, v)`.
    pub fn coeff(&self, p: &ChartPoint, v: &[f64]) -> Result<DMatrix<f64>, ConnectionError> {
        self.check_dims(p.coords(), v)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ConnectionError::NonFiniteInput);
        }
        let m = self.eval(p.coords(), v);
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(ConnectionError::ShapeMismatch {
                expected: self.dim * self.dim,
                got: m.len(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(ConnectionError::NonFiniteCoefficient {
                p: p.coords().to_vec(),
                v: v.to_vec(),
            });
        }
        Ok(m)
    }

    /// Raw `2n × n` frame of `H_(p,v)`: column `j` is `(e_j, −Γ(p,v)·e_j)`.
    pub fn horizontal_basis(
        &self,
        p: &ChartPoint,
        v: &[f64],
    ) -> Result<DMatrix<f64>, ConnectionError> {
        let g = self.coeff(p, v)?;
        let n = self.dim;
        let mut basis = DMatrix::zeros(2 * n, n);
        basis.view_mut((0, 0), (n, n)).fill_with_identity();
        basis.view_mut((n, 0), (n, n)).copy_from(&(-g));
        Ok(basis)
    }

    fn check_dims(&self, p: &[f64], v: &[f64]) -> Result<(), ConnectionError> {
        for len in [p.len(), v.len()] {
            if len != self.dim {
                return Err(ConnectionError::DimensionMismatch {
                    expected: self.dim,
                    got: len,
                });
            }
        }
        Ok(())
    }
}

/// `2n × n` frame `(0, e_j)` of the vertical space.
pub fn vertical_basis(n: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(2 * n, n);
    basis.view_mut((n, 0), (n, n)).fill_with_identity();
    basis
}

/// Christoffel symbols `Γᵏᵢⱼ` at one point, indexed `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self, ConnectionError> {
        let expected = dim * dim * dim;
        if data.len() != expected {
            return Err(ConnectionError::ShapeMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let n = self.dim;
        self.data[(k * n + i) * n + j] = value;
    }

    pub fn add(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let n = self.dim;
        self.data[(k * n + i) * n + j] += value;
    }

    /// The matrix `M[k][i] = Σⱼ Γᵏᵢⱼ vʲ`, so that `(M·u)ᵏ = Γᵏᵢⱼ uⁱ vʲ`.
    pub fn contract_fiber(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |k, i| (0..n).map(|j| self.get(k, i, j) * v[j]).sum())
    }
}

/// A linear connection from Christoffel symbols `p ↦ Γᵏᵢⱼ(p)`.
///
/// The map is probed once at the origin to validate its shape.
pub fn make_linear_connection<F>(
    name: impl Into<String>,
    dim: usize,
    christoffel: F,
) -> Result<ConnectionField, ConnectionError>
where
    F: Fn(&[f64]) -> Christoffel + Send + Sync + 'static,
{
    if dim == 0 {
        return Err(ConnectionError::BadParameter(
            "dimension must be ≥ 1".into(),
        ));
    }
    let probe = christoffel(&vec![0.0; dim]);
    if probe.dim() != dim || probe.data.len() != dim * dim * dim {
        return Err(ConnectionError::ShapeMismatch {
            expected: dim * dim * dim,
            got: probe.data.len(),
        });
    }
    Ok(ConnectionField::new(
        name,
        dim,
        true,
        Some(1.0),
        move |p, v| christoffel(p).contract_fiber(v),
    ))
}

/// Christoffel symbols of the round unit-sphere metric `4δᵢⱼ/(1+‖p‖²)²`
/// in stereographic coordinates.
pub fn sphere_stereographic_christoffel(p: &[f64]) -> Christoffel {
    let n = p.len();
    let r2: f64 = p.iter().map(|x| x * x).sum();
    // conformal factor e^{2φ} with ∂ᵢφ = −2pᵢ/(1+‖p‖²)
    let dphi: Vec<f64> = p.iter().map(|x| -2.0 * x / (1.0 + r2)).collect();
    let mut g = Christoffel::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut val = 0.0;
                if k == i {
                    val += dphi[j];
                }
                if k == j {
                    val += dphi[i];
                }
                if i == j {
                    val -= dphi[k];
                }
                g.set(k, i, j, val);
            }
        }
    }
    g
}

/// One polynomial contribution `coeff · Π pₘ^monomial[m]` to `Γᵏᵢⱼ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChristoffelTerm {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub coeff: f64,
    #[serde(default)]
    pub monomial: Vec<u32>,
}

/// Description of a connection: a gallery member with parameters, or
/// explicit polynomial Christoffel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ConnectionSpec {
    Flat {
        #[serde(default)]
        dimension: Option<usize>,
    },
    Fig1,
    ScalarLinear {
        lambda: f64,
    },
    PowerGrowth {
        alpha: f64,
    },
    SphereStereographic,
    Christoffel {
        dimension: usize,
        terms: Vec<ChristoffelTerm>,
    },
}

impl ConnectionSpec {
    /// Parses JSON or inline forms: `flat`, `flat:3`, `fig1`,
    /// `scalar-linear:<λ>`, `power-growth:<α>`, `sphere-stereographic`.
    pub fn parse_inline(text: &str) -> Result<Self, ConnectionError> {
        let text = text.trim();
        if text.starts_with('{') {
            return serde_json::from_str(text).map_err(|e| ConnectionError::Parse(e.to_string()));
        }
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (text, None),
        };
        let num = |a: Option<&str>, key: &str| -> Result<f64, ConnectionError> {
            a.ok_or_else(|| ConnectionError::BadParameter(format!("{name} needs {key}")))?
                .trim()
                .parse()
                .map_err(|_| ConnectionError::Parse(text.to_string()))
        };
        match name {
            "flat" => Ok(Self::Flat {
                dimension: arg
                    .map(|a| a.trim().parse())
                    .transpose()
                    .map_err(|_| ConnectionError::Parse(text.to_string()))?,
            }),
            "fig1" if arg.is_none() => Ok(Self::Fig1),
            "scalar-linear" => Ok(Self::ScalarLinear {
                lambda: num(arg, "lambda")?,
            }),
            "power-growth" => Ok(Self::PowerGrowth {
                alpha: num(arg, "alpha")?,
            }),
            "sphere-stereographic" if arg.is_none() => Ok(Self::SphereStereographic),
            _ => Err(ConnectionError::UnknownName(text.to_string())),
        }
    }

    /// Dimension fixed by the spec itself, if any.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Self::Flat { dimension } => *dimension,
            Self::Fig1 | Self::ScalarLinear { .. } | Self::PowerGrowth { .. } => Some(1),
            Self::SphereStereographic => Some(2),
            Self::Christoffel { dimension, .. } => Some(*dimension),
        }
    }

    /// Fills in the dimension of a dimension-agnostic spec.
    pub fn with_default_dimension(self, dim: usize) -> Self {
        match self {
            Self::Flat { dimension: None } => Self::Flat {
                dimension: Some(dim),
            },
            other => other,
        }
    }
}

pub fn flat(dim: usize) -> ConnectionField {
    ConnectionField::new("flat", dim, true, Some(0.0), move |_, _| {
        DMatrix::zeros(dim, dim)
    })
}

/// The Figure-1 witness: `Γ(p, v) = −(1 + v²)`, so lifts over `γ(t) = t`
/// are `c(t) = tan(t + arctan c₀)`.
pub fn fig1() -> ConnectionField {
    ConnectionField::new("fig1", 1, false, Some(2.0), |_, v| {
        DMatrix::from_element(1, 1, -(1.0 + v[0] * v[0]))
    })
}

/// `Γ(p, v)·u = λ·v·u` on ℝ.
pub fn scalar_linear(lambda: f64) -> ConnectionField {
    ConnectionField::new("scalar-linear", 1, true, Some(1.0), move |_, v| {
        DMatrix::from_element(1, 1, lambda * v[0])
    })
    .with_param("lambda", lambda)
}

/// `Γ(p, v) = −(1 + v²)^{α/2}` on ℝ.
pub fn power_growth(alpha: f64) -> Result<ConnectionField, ConnectionError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(ConnectionError::BadParameter(format!(
            "power-growth alpha must be ≥ 0, got {alpha}"
        )));
    }
    Ok(
        ConnectionField::new("power-growth", 1, false, Some(alpha), move |_, v| {
            DMatrix::from_element(1, 1, -(1.0 + v[0] * v[0]).powf(0.5 * alpha))
        })
        .with_param("alpha", alpha),
    )
}

pub fn sphere_stereographic() -> ConnectionField {
    make_linear_connection("sphere-stereographic", 2, sphere_stereographic_christoffel)
        .expect("stereographic symbols have the right shape")
}

fn polynomial_christoffel(
    dim: usize,
    terms: &[ChristoffelTerm],
) -> Result<ConnectionField, ConnectionError> {
    for t in terms {
        if t.k >= dim || t.i >= dim || t.j >= dim {
            return Err(ConnectionError::BadParameter(format!(
                "index ({}, {}, {}) out of range for dimension {dim}",
                t.k, t.i, t.j
            )));
        }
        if !t.monomial.is_empty() && t.monomial.len() != dim {
            return Err(ConnectionError::ShapeMismatch {
                expected: dim,
                got: t.monomial.len(),
            });
        }
        if !t.coeff.is_finite() {
            return Err(ConnectionError::BadParameter(
                "non-finite coefficient".into(),
            ));
        }
    }
    let terms = terms.to_vec();
    make_linear_connection("christoffel", dim, move |p| {
        let mut g = Christoffel::zeros(dim);
        for t in &terms {
            let mono: f64 = t
                .monomial
                .iter()
                .zip(p)
                .map(|(&e, &x)| x.powi(e as i32))
                .product();
            g.add(t.k, t.i, t.j, t.coeff * mono);
        }
        g
    })
}

/// Resolves a spec to a connection.
pub fn gallery(spec: &ConnectionSpec) -> Result<ConnectionField, ConnectionError> {
    match spec {
        ConnectionSpec::Flat { dimension: None } => {
            Err(ConnectionError::MissingDimension("flat".into()))
        }
        ConnectionSpec::Flat { dimension: Some(0) } => Err(ConnectionError::BadParameter(
            "dimension must be ≥ 1".into(),
        )),
        ConnectionSpec::Flat { dimension: Some(n) } => Ok(flat(*n)),
        ConnectionSpec::Fig1 => Ok(fig1()),
        ConnectionSpec::ScalarLinear { lambda } => {
            if !lambda.is_finite() {
                return Err(ConnectionError::BadParameter(
                    "lambda must be finite".into(),
                ));
            }
            Ok(scalar_linear(*lambda))
        }
        ConnectionSpec::PowerGrowth { alpha } => power_growth(*alpha),
        ConnectionSpec::SphereStereographic => Ok(sphere_stereographic()),
        ConnectionSpec::Christoffel { dimension, terms } => {
            polynomial_christoffel(*dimension, terms)
        }
    }
}

/// Registry row for `gallery list`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub dimension: Option<usize>,
    pub parameters: &'static str,
    pub linear_in_fiber: bool,
    pub growth_hint: &'static str,
}

pub fn gallery_entries() -> Vec<GalleryEntry> {
    vec![
        GalleryEntry {
            name: "flat",
            dimension: None,
            parameters: "dimension",
            linear_in_fiber: true,
            growth_hint: "0",
        },
        GalleryEntry {
            name: "fig1",
            dimension: Some(1),
            parameters: "",
            linear_in_fiber: false,
            growth_hint: "2",
        },
        GalleryEntry {
            name: "scalar-linear",
            dimension: Some(1),
            parameters: "lambda",
            linear_in_fiber: true,
            growth_hint: "1",
        },
        GalleryEntry {
            name: "power-growth",
            dimension: Some(1),
            parameters: "alpha >= 0",
            linear_in_fiber: false,
            growth_hint: "alpha",
        },
        GalleryEntry {
            name: "sphere-stereographic",
            dimension: Some(2),
            parameters: "",
            linear_in_fiber: true,
            growth_hint: "1",
        },
        GalleryEntry {
            name: "christoffel",
            dimension: None,
            parameters: "dimension, terms",
            linear_in_fiber: true,
            growth_hint: "1",
        },
    ]
}
