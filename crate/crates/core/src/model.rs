//! Equation data for `−|∇u|^α F(D²u) + b(x)|∇u|^β = f(x)`: exponents,
//! coefficient fields, box domains and the derived blow-up quantities.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::operators::{OperatorSpec, SymMatrix};

/// Which blow-up regime an exponent pair falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupCase {
    /// `β < α + 2`, power blow-up `u ~ C d^{−χ}`.
    #[serde(rename = "chi>0")]
    Power,
    /// `β = α + 2`, logarithmic blow-up `u ~ C |log d|`.
    #[serde(rename = "chi=0")]
    Logarithmic,
}

/// Validated `(α, β)` with `α > −1` and `α + 1 < β ≤ α + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExponents", into = "RawExponents")]
pub struct ExponentPair {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawExponents {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawExponents> for ExponentPair {
    type Error = Error;
    fn try_from(r: RawExponents) -> Result<Self> {
        validate_exponents(r.alpha, r.beta)
    }
}

impl From<ExponentPair> for RawExponents {
    fn from(e: ExponentPair) -> Self {
        RawExponents {
            alpha: e.alpha,
            beta: e.beta,
        }
    }
}

// tolerance for recognizing the borderline β = α + 2 given in decimal
const BORDER_TOL: f64 = 1e-12;

pub fn validate_exponents(alpha: f64, beta: f64) -> Result<ExponentPair> {
    if !alpha.is_finite() || alpha <= -1.0 {
        return Err(Error::OutOfRange {
            what: "alpha",
            detail: format!("need α > −1, got {alpha}"),
        });
    }
    if !beta.is_finite() || beta <= alpha + 1.0 || beta > alpha + 2.0 + BORDER_TOL {
        return Err(Error::OutOfRange {
            what: "beta",
            detail: format!("need α+1 < β ≤ α+2, got α = {alpha}, β = {beta}"),
        });
    }
    Ok(ExponentPair { alpha, beta })
}

impl ExponentPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        validate_exponents(alpha, beta)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn case(&self) -> BlowupCase {
        if (self.beta - self.alpha - 2.0).abs() <= BORDER_TOL {
            BlowupCase::Logarithmic
        } else {
            BlowupCase::Power
        }
    }

    /// `χ = (2+α−β)/(β−1−α)`.
    pub fn chi(&self) -> f64 {
        match self.case() {
            BlowupCase::Logarithmic => 0.0,
            BlowupCase::Power => (2.0 + self.alpha - self.beta) / (self.beta - 1.0 - self.alpha),
        }
    }

    /// `β/(β−α−1)`, the power of the zoom factor picked up by the right-hand side.
    pub fn rescale_exponent(&self) -> f64 {
        self.beta / (self.beta - self.alpha - 1.0)
    }

    /// Upper bound `1/(1+α⁺)` on the interior Hölder exponent of the gradient.
    pub fn holder_exponent_bound(&self) -> f64 {
        1.0 / (1.0 + self.alpha.max(0.0))
    }
}

pub fn chi(exponents: &ExponentPair) -> f64 {
    exponents.chi()
}

/// Blow-up amplitude at a boundary point with unit inward normal `n`:
/// `((χ+1)F(n⊗n))^{1/(β−α−1)}/χ` for `χ > 0`, `F(n⊗n)` for `χ = 0`.
pub fn amplitude_c(operator: &OperatorSpec, boundary_normal: &[f64], exponents: &ExponentPair) -> Result<f64> {
    let norm = boundary_normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::OutOfRange {
            what: "boundary normal",
            detail: format!("|n| = {norm}, expected 1"),
        });
    }
    let nn = SymMatrix::outer(boundary_normal)?;
    let f_nn = operator.eval(&nn)?;
    if !(f_nn > 0.0) {
        return Err(Error::DegenerateOperator { value: f_nn });
    }
    Ok(match exponents.case() {
        BlowupCase::Logarithmic => f_nn,
        BlowupCase::Power => {
            let chi = exponents.chi();
            let k = exponents.beta - exponents.alpha - 1.0;
            ((chi + 1.0) * f_nn).powf(1.0 / k) / chi
        }
    })
}

/// `δ^{β/(β−α−1)}`: factor multiplying `f + c` after the zoom `u_δ(ζ) = δ^χ u(x₀ + δζ)`.
pub fn rescale_residual_factor(exponents: &ExponentPair, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::OutOfRange {
            what: "delta",
            detail: format!("need δ > 0, got {delta}"),
        });
    }
    Ok(delta.powf(exponents.rescale_exponent()))
}

type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FieldRule {
    Constant(f64),
    Expression(Expr),
    Custom { label: String, rule: FieldFn },
}

/// A coefficient `b(x)` / `f(x)` / boundary datum as a closed-form rule that
/// can be evaluated at any point (so it can be resampled on any grid).
#[derive(Clone)]
pub struct ScalarField {
    rule: FieldRule,
    lipschitz: Option<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            FieldRule::Constant(v) => write!(f, "ScalarField({v})"),
            FieldRule::Expression(e) => write!(f, "ScalarField({:?})", e.source()),
            FieldRule::Custom { label, .. } => write!(f, "ScalarField(<{label}>)"),
        }
    }
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        match (&self.rule, &other.rule) {
            (FieldRule::Constant(a), FieldRule::Constant(b)) => a == b,
            (FieldRule::Expression(a), FieldRule::Expression(b)) => a.source() == b.source(),
            _ => false,
        }
    }
}

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        Self {
            rule: FieldRule::Constant(v),
            lipschitz: Some(0.0),
        }
    }

    /// Parses an arithmetic expression over `x`, `y` (see [`crate::expr`]).
    pub fn parse(source: &str) -> Result<Self> {
        let e = Expr::parse(source)?;
        if e.is_constant() {
            return Ok(Self::constant(e.eval(0.0, 0.0)));
        }
        Ok(Self {
            rule: FieldRule::Expression(e),
            lipschitz: None,
        })
    }

    pub fn from_fn(label: &str, rule: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rule: FieldRule::Custom {
                label: label.into(),
                rule: Arc::new(rule),
            },
            lipschitz: None,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        match &self.rule {
            FieldRule::Constant(v) => *v,
            FieldRule::Expression(e) => e.eval(point[0], point.get(1).copied().unwrap_or(0.0)),
            FieldRule::Custom { rule, .. } => rule(point),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.rule {
            FieldRule::Constant(v) => Some(v),
            _ => None,
        }
    }

    /// Source text for serialization; custom closures have none.
    pub fn source(&self) -> Result<String> {
        match &self.rule {
            FieldRule::Constant(v) => Ok(format!("{v:?}")),
            FieldRule::Expression(e) => Ok(e.source().to_string()),
            FieldRule::Custom { label, .. } => Err(Error::Config(format!(
                "field <{label}> is a closure and has no textual form"
            ))),
        }
    }

    /// `self + s` for a constant shift `s`.
    pub fn shifted(&self, s: f64) -> Self {
        match &self.rule {
            FieldRule::Constant(v) => Self::constant(v + s),
            _ => {
                let base = self.clone();
                let mut out = Self::from_fn("shifted", move |p| base.eval(p) + s);
                out.lipschitz = self.lipschitz;
                out
            }
        }
    }

    /// `scale·self(x₀ + δζ)`, the field seen through the zoom `x = x₀ + δζ`.
    pub fn zoomed(&self, origin: &[f64], delta: f64, scale: f64) -> Self {
        let base = self.clone();
        let origin = origin.to_vec();
        Self::from_fn("zoomed", move |z| {
            let x: Vec<f64> = origin.iter().zip(z).map(|(o, zi)| o + delta * zi).collect();
            scale * base.eval(&x)
        })
    }
}

/// Axis-aligned box: an interval (dimension 1) or a rectangle (dimension 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || !(1..=2).contains(&lower.len()) {
            return Err(Error::OutOfRange {
                what: "domain",
                detail: format!("need matching 1D or 2D bounds, got {lower:?} / {upper:?}"),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::OutOfRange {
                what: "domain",
                detail: format!("non-positive extent {lower:?} / {upper:?}"),
            });
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a], vec![b])
    }

    pub fn rectangle(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        Self::new(lower.to_vec(), upper.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Distance to the boundary (min over faces); negative outside.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(x)
            .map(|((l, u), xi)| (xi - l).min(u - xi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Unit inward normal of the nearest face, and the gap to the second
    /// nearest face (small gaps mean the point is close to the medial axis).
    pub fn nearest_face(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut faces: Vec<(f64, usize, f64)> = Vec::with_capacity(2 * self.dim());
        for k in 0..self.dim() {
            faces.push((x[k] - self.lower[k], k, 1.0));
            faces.push((self.upper[k] - x[k], k, -1.0));
        }
        faces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut n = vec![0.0; self.dim()];
        n[faces[0].1] = faces[0].2;
        (n, faces[1].0 - faces[0].0)
    }

    pub fn half_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Full problem data for `−|∇u|^α F(D²u) + b|∇u|^β = f` on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationInstance {
    pub operator: OperatorSpec,
    pub exponents: ExponentPair,
    pub b: ScalarField,
    pub f: ScalarField,
    pub domain: BoxDomain,
}

impl EquationInstance {
    pub fn new(
        operator: OperatorSpec,
        exponents: ExponentPair,
        b: ScalarField,
        f: ScalarField,
        domain: BoxDomain,
    ) -> Result<Self> {
        if let Some(d) = operator.fixed_dim() {
            if d != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: d,
                });
            }
        }
        Ok(Self {
            operator,
            exponents,
            b,
            f,
            domain,
        })
    }

    /// Same instance with `f` replaced by `f + c`.
    pub fn with_shifted_f(&self, c: f64) -> Self {
        Self {
            f: self.f.shifted(c),
            ..self.clone()
        }
    }
}

/// Blow-up data for the ergodic problem; one type for both regimes, tagged by `case`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicData {
    pub chi: f64,
    pub case: BlowupCase,
    /// `(boundary point, C(x))` pairs.
    pub c_of_x: Vec<(Vec<f64>, f64)>,
    pub c_omega: Option<f64>,
}

impl ErgodicData {
    /// Amplitudes at the face midpoints of the instance's box.
    pub fn for_instance(instance: &EquationInstance, c_omega: Option<f64>) -> Result<Self> {
        let d = &instance.domain;
        let mut c_of_x = Vec::new();
        for k in 0..d.dim() {
            for (side, normal_sign) in [(d.lower[k], 1.0), (d.upper[k], -1.0)] {
                let mut point: Vec<f64> = (0..d.dim()).map(|j| 0.5 * (d.lower[j] + d.upper[j])).collect();
                point[k] = side;
                let mut n = vec![0.0; d.dim()];
                n[k] = normal_sign;
                c_of_x.push((point, amplitude_c(&instance.operator, &n, &instance.exponents)?));
            }
        }
        Ok(Self {
            chi: instance.exponents.chi(),
            case: instance.exponents.case(),
            c_of_x,
            c_omega,
        })
    }
}
