//! Text configuration (TOML) for equation instances and experiment runs.
//!
//! ```toml
//! experiment = "ergodic"
//! seed = 42
//! grid_sizes = [400]   # cells per unit length, h = 1/size
//!
//! [instance]
//! operator = "trace"   # trace | pucci+ | pucci- | bellman-max
//! a = 1.0
//! alpha = 0.0
//! beta = 2.0
//! b = 1.0              # number or expression in x, y
//! f = "0"
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [solver]
//! theta = 0.5
//! truncation = "auto"
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ergodic::{ErgodicExperiment, FitLayer};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::model::{BoxDomain, EquationInstance, ExponentPair, ScalarField};
use crate::operators::{EllipticityBounds, OperatorSpec, SymMatrix};
use crate::solver::SolverConfig;

/// A coefficient given as a number or as an expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Number(f64),
    Expr(String),
}

impl FieldSource {
    pub fn to_field(&self) -> Result<ScalarField> {
        match self {
            FieldSource::Number(v) => Ok(ScalarField::constant(*v)),
            FieldSource::Expr(s) => ScalarField::parse(s),
        }
    }
}

impl From<f64> for FieldSource {
    fn from(v: f64) -> Self {
        FieldSource::Number(v)
    }
}

impl From<&str> for FieldSource {
    fn from(s: &str) -> Self {
        FieldSource::Expr(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub operator: String,
    /// Lower ellipticity bound (the trace scale for `trace`).
    #[serde(default = "one")]
    pub a: f64,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub big_a: Option<f64>,
    /// Control matrices for `bellman-max`, as rows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub alpha: f64,
    pub beta: f64,
    pub b: FieldSource,
    pub f: FieldSource,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl InstanceConfig {
    pub fn operator_spec(&self) -> Result<OperatorSpec> {
        let big_a = || {
            self.big_a
                .ok_or_else(|| Error::Config(format!("operator {} needs A", self.operator)))
        };
        match self.operator.as_str() {
            "trace" => OperatorSpec::trace(self.a),
            "pucci+" => OperatorSpec::pucci_plus(self.a, big_a()?),
            "pucci-" => OperatorSpec::pucci_minus(self.a, big_a()?),
            "bellman-max" => {
                let ms = self
                    .matrices
                    .iter()
                    .map(|rows| SymMatrix::from_rows(rows))
                    .collect::<Result<Vec<_>>>()?;
                OperatorSpec::bellman_max(self.a, big_a()?, ms)
            }
            other => Err(Error::Config(format!(
                "unknown operator {other:?}, expected trace, pucci+, pucci- or bellman-max"
            ))),
        }
    }

    pub fn to_instance(&self) -> Result<EquationInstance> {
        EquationInstance::new(
            self.operator_spec()?,
            ExponentPair::new(self.alpha, self.beta)?,
            self.b.to_field()?,
            self.f.to_field()?,
            BoxDomain::new(self.lower.clone(), self.upper.clone())?,
        )
    }

    /// Fails for fields built from closures.
    pub fn from_instance(inst: &EquationInstance) -> Result<Self> {
        let source = |f: &ScalarField| -> Result<FieldSource> {
            Ok(match f.as_constant() {
                Some(v) => FieldSource::Number(v),
                None => FieldSource::Expr(f.source()?),
            })
        };
        let (operator, a, big_a, matrices) = match &inst.operator {
            OperatorSpec::ScaledTrace { a } => ("trace", *a, None, Vec::new()),
            OperatorSpec::PucciPlus(EllipticityBounds { a, big_a }) => ("pucci+", *a, Some(*big_a), Vec::new()),
            OperatorSpec::PucciMinus(EllipticityBounds { a, big_a }) => ("pucci-", *a, Some(*big_a), Vec::new()),
            OperatorSpec::BellmanMax { bounds, matrices } => (
                "bellman-max",
                bounds.a,
                Some(bounds.big_a),
                matrices
                    .iter()
                    .map(|m| (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect())
                    .collect(),
            ),
        };
        Ok(Self {
            operator: operator.to_string(),
            a,
            big_a,
            matrices,
            alpha: inst.exponents.alpha(),
            beta: inst.exponents.beta(),
            b: source(&inst.b)?,
            f: source(&inst.f)?,
            lower: inst.domain.lower.clone(),
            upper: inst.domain.upper.clone(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Ergodic,
    Asymptotics,
    Convergence,
    PropertySuite,
    Oracle,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Asymptotics => "asymptotics",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::PropertySuite => "property-suite",
            ExperimentKind::Oracle => "oracle",
        }
    }
}

/// Dirichlet problem data for `solve` and `convergence`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletConfig {
    /// Boundary datum; defaults to `exact` when that is given, else 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<FieldSource>,
    /// Exact solution to compare against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<FieldSource>,
    /// Points where the solution is reported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Vec<f64>>,
}

impl DirichletConfig {
    pub fn boundary_field(&self) -> Result<ScalarField> {
        match (&self.boundary, &self.exact) {
            (Some(b), _) => b.to_field(),
            (None, Some(e)) => e.to_field(),
            (None, None) => Ok(ScalarField::constant(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicConfig {
    pub ladder: Vec<f64>,
    /// Bisection tolerance on `c`.
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<f64>>,
    pub layer: FitLayer,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_tol: Option<f64>,
    /// Second boundary level for the uniqueness check; `None` skips it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniqueness_level: Option<f64>,
    /// Values of `δ` for the rescaling check.
    pub rescaling: Vec<f64>,
    /// Relative tolerance on `χ̂`, `Ĉ` and the gradient trend.
    pub fit_tol: f64,
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        Self {
            ladder: vec![10.0, 15.0, 20.0],
            tol: 1e-4,
            probe: None,
            layer: FitLayer::default(),
            drift_tol: None,
            uniqueness_level: None,
            rescaling: vec![0.25, 0.125],
            fit_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyConfig {
    pub trials: usize,
    pub a: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
    pub dim: usize,
    /// Number of random control matrices for the Bellman operator.
    pub bellman_matrices: usize,
}

impl Default for PropertyConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            a: 1.0,
            big_a: 2.0,
            dim: 2,
            bellman_matrices: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Shoot at these values of `c` besides computing the ergodic constant.
    pub shots: Vec<f64>,
    pub refine: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            shots: Vec::new(),
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    /// Cells per unit length, strictly increasing.
    #[serde(default)]
    pub grid_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet: Option<DirichletConfig>,
    #[serde(default)]
    pub ergodic: ErgodicConfig,
    #[serde(default)]
    pub property: PropertyConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment
            .ok_or_else(|| Error::Config("no experiment kind given".into()))
    }

    pub fn instance(&self) -> Result<EquationInstance> {
        self.instance
            .as_ref()
            .ok_or_else(|| Error::Config("missing [instance] section".into()))?
            .to_instance()
    }

    /// Grid spacings `1/size`.
    pub fn spacings(&self) -> Vec<f64> {
        self.grid_sizes.iter().map(|&n| 1.0 / n as f64).collect()
    }

    pub fn grids(&self, domain: &BoxDomain) -> Result<Vec<UniformGrid>> {
        self.spacings()
            .into_iter()
            .map(|h| UniformGrid::with_spacing(domain, h))
            .collect()
    }

    pub fn ergodic_experiment(&self, grid: UniformGrid) -> Result<ErgodicExperiment> {
        let mut exp = ErgodicExperiment::new(self.instance()?, grid, self.ergodic.ladder.clone())?;
        if let Some(p) = &self.ergodic.probe {
            exp.probe = p.clone();
        }
        exp.layer = self.ergodic.layer;
        exp.drift_tol = self.ergodic.drift_tol;
        exp.solver = self.solver.clone();
        exp.validate()?;
        Ok(exp)
    }

    /// Checks every section the experiment kind uses.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.grid_sizes.windows(2).any(|w| w[1] <= w[0]) || self.grid_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "grid_sizes must be positive and strictly increasing, got {:?}",
                self.grid_sizes
            )));
        }
        let needs_grid = matches!(
            kind,
            ExperimentKind::Solve | ExperimentKind::Ergodic | ExperimentKind::Asymptotics | ExperimentKind::Convergence
        );
        if needs_grid && self.grid_sizes.is_empty() {
            return Err(Error::Config(format!("{} needs grid_sizes", kind.name())));
        }
        if kind == ExperimentKind::Convergence && self.grid_sizes.len() < 2 {
            return Err(Error::Config("convergence needs at least two grid sizes".into()));
        }
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if kind != ExperimentKind::PropertySuite {
            let inst = self.instance().map_err(cfg_err)?;
            if let Some(d) = &self.dirichlet {
                d.boundary_field().map_err(cfg_err)?;
                if let Some(e) = &d.exact {
                    e.to_field().map_err(cfg_err)?;
                }
            }
            match kind {
                ExperimentKind::Convergence if self.dirichlet.as_ref().and_then(|d| d.exact.as_ref()).is_none() => {
                    return Err(Error::Config("convergence needs [dirichlet] exact".into()));
                }
                ExperimentKind::Ergodic | ExperimentKind::Asymptotics => {
                    for g in self.grids(&inst.domain).map_err(cfg_err)? {
                        self.ergodic_experiment(g).map_err(cfg_err)?;
                    }
                    if !(self.ergodic.tol > 0.0) {
                        return Err(Error::Config(format!("ergodic tol must be positive, got {}", self.ergodic.tol)));
                    }
                }
                ExperimentKind::Oracle if inst.domain.dim() != 1 => {
                    return Err(Error::Config("oracle runs are one-dimensional".into()));
                }
                _ => {}
            }
        } else {
            let p = &self.property;
            if p.trials == 0 || !(1..=3).contains(&p.dim) {
                return Err(Error::Config(format!("property suite needs trials ≥ 1 and dim in 1..=3, got {p:?}")));
            }
            EllipticityBounds::new(p.a, p.big_a).map_err(cfg_err)?;
        }
        Ok(())
    }
}
