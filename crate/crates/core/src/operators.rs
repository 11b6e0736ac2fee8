//! Uniformly elliptic, positively 1-homogeneous operators `F(M)` on symmetric
//! matrices of dimension at most three, plus the randomized harness that checks
//! the ellipticity sandwich and homogeneity on seeded samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric `N×N` matrix with `N ∈ {1,2,3}`; only the upper triangle is stored
/// (row by row), so symmetry holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    upper: [f64; 6],
}

fn upper_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows of the upper triangle have lengths dim, dim-1, ...
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::OutOfRange {
                what: "matrix dimension",
                detail: format!("{dim} not in 1..=3"),
            });
        }
        Ok(Self { dim, upper: [0.0; 6] })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        Ok(m)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(values.len())?;
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        Ok(m)
    }

    /// Builds from a full row-major matrix, symmetrizing `(M + Mᵀ)/2`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for j in i..dim {
                m.set(i, j, 0.5 * (row[j] + rows[j][i]));
            }
        }
        Ok(m)
    }

    /// `n ⊗ n`.
    pub fn outer(n: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(n.len())?;
        for i in 0..n.len() {
            for j in i..n.len() {
                m.set(i, j, n[i] * n[j]);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[upper_index(self.dim, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = upper_index(self.dim, i, j);
        self.upper[k] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, t: f64) -> Self {
        let mut out = *self;
        out.upper.iter_mut().for_each(|v| *v *= t);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = *self;
        for (o, v) in out.upper.iter_mut().zip(other.upper.iter()) {
            *o += v;
        }
        Ok(out)
    }

    /// Frobenius inner product `tr(self · other)`.
    pub fn frobenius(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j) * other.get(i, j);
            }
        }
        Ok(s)
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    /// Eigenvalues in ascending order, by closed form.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.get(0, 0)],
            2 => {
                let (a, b, c) = (self.get(0, 0), self.get(0, 1), self.get(1, 1));
                let mean = 0.5 * (a + c);
                let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                vec![mean - rad, mean + rad]
            }
            _ => self.eigenvalues_3(),
        }
    }

    // trigonometric form of Cardano's formula for a real symmetric 3x3
    fn eigenvalues_3(&self) -> Vec<f64> {
        let a = |i, j| self.get(i, j);
        let p1 = a(0, 1).powi(2) + a(0, 2).powi(2) + a(1, 2).powi(2);
        let mut eig = if p1 == 0.0 {
            vec![a(0, 0), a(1, 1), a(2, 2)]
        } else {
            let q = self.trace() / 3.0;
            let p2 = (a(0, 0) - q).powi(2) + (a(1, 1) - q).powi(2) + (a(2, 2) - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let b = |i: usize, j: usize| (a(i, j) - if i == j { q } else { 0.0 }) / p;
            let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(1, 2))
                - b(0, 1) * (b(0, 1) * b(2, 2) - b(1, 2) * b(0, 2))
                + b(0, 2) * (b(0, 1) * b(1, 2) - b(1, 1) * b(0, 2));
            let r = (0.5 * det).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let hi = q + 2.0 * p * phi.cos();
            let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
            vec![hi, 3.0 * q - hi - lo, lo]
        };
        eig.sort_by(|x, y| x.total_cmp(y));
        eig
    }

    /// Eigenpairs for `N ≤ 2` (unit eigenvectors), ascending eigenvalues.
    pub fn eigen_2(&self) -> Result<Vec<(f64, [f64; 2])>> {
        match self.dim {
            1 => Ok(vec![(self.get(0, 0), [1.0, 0.0])]),
            2 => {
                let (a, b, c) = (self.get(0, 0), self.get(0, 1), self.get(1, 1));
                let ev = self.eigenvalues();
                // rotation angle diagonalizing the 2x2 block
                let theta = 0.5 * (2.0 * b).atan2(a - c);
                let (s, co) = theta.sin_cos();
                let v_hi = [co, s];
                let v_lo = [-s, co];
                Ok(vec![(ev[0], v_lo), (ev[1], v_hi)])
            }
            d => Err(Error::UnsupportedCase(format!(
                "eigenvectors implemented for dimension ≤ 2, got {d}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub a: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
}

impl EllipticityBounds {
    pub fn new(a: f64, big_a: f64) -> Result<Self> {
        if !(a > 0.0 && big_a >= a && big_a.is_finite()) {
            return Err(Error::OutOfRange {
                what: "ellipticity bounds",
                detail: format!("need 0 < a ≤ A, got a = {a}, A = {big_a}"),
            });
        }
        Ok(Self { a, big_a })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OperatorSpec {
    #[serde(rename = "trace")]
    ScaledTrace { a: f64 },
    #[serde(rename = "pucci+")]
    PucciPlus(EllipticityBounds),
    #[serde(rename = "pucci-")]
    PucciMinus(EllipticityBounds),
    #[serde(rename = "bellman-max")]
    BellmanMax {
        bounds: EllipticityBounds,
        matrices: Vec<SymMatrix>,
    },
}

impl OperatorSpec {
    pub fn trace(a: f64) -> Result<Self> {
        EllipticityBounds::new(a, a)?;
        Ok(OperatorSpec::ScaledTrace { a })
    }

    pub fn pucci_plus(a: f64, big_a: f64) -> Result<Self> {
        Ok(OperatorSpec::PucciPlus(EllipticityBounds::new(a, big_a)?))
    }

    pub fn pucci_minus(a: f64, big_a: f64) -> Result<Self> {
        Ok(OperatorSpec::PucciMinus(EllipticityBounds::new(a, big_a)?))
    }

    /// Max of `tr(Q M)` over the given diffusion matrices; each spectrum must
    /// lie in `[a, A]`.
    pub fn bellman_max(a: f64, big_a: f64, matrices: Vec<SymMatrix>) -> Result<Self> {
        let bounds = EllipticityBounds::new(a, big_a)?;
        let Some(first) = matrices.first() else {
            return Err(Error::InvalidOperator("empty Bellman family".into()));
        };
        let dim = first.dim();
        for q in &matrices {
            if q.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: q.dim(),
                });
            }
            let ev = q.eigenvalues();
            let tol = 1e-12 * big_a;
            if ev[0] < a - tol || ev[ev.len() - 1] > big_a + tol {
                return Err(Error::InvalidOperator(format!(
                    "spectrum {ev:?} outside [{a}, {big_a}]"
                )));
            }
        }
        Ok(OperatorSpec::BellmanMax { bounds, matrices })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatorSpec::ScaledTrace { .. } => "trace",
            OperatorSpec::PucciPlus(_) => "pucci+",
            OperatorSpec::PucciMinus(_) => "pucci-",
            OperatorSpec::BellmanMax { .. } => "bellman-max",
        }
    }

    pub fn bounds(&self) -> EllipticityBounds {
        match self {
            OperatorSpec::ScaledTrace { a } => EllipticityBounds { a: *a, big_a: *a },
            OperatorSpec::PucciPlus(b) | OperatorSpec::PucciMinus(b) => *b,
            OperatorSpec::BellmanMax { bounds, .. } => *bounds,
        }
    }

    /// Fixed dimension, if the operator carries one (Bellman families do).
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            OperatorSpec::BellmanMax { matrices, .. } => matrices.first().map(|q| q.dim()),
            _ => None,
        }
    }

    fn check_dim(&self, m: &SymMatrix) -> Result<()> {
        match self.fixed_dim() {
            Some(d) if d != m.dim() => Err(Error::DimensionMismatch {
                expected: d,
                got: m.dim(),
            }),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, m: &SymMatrix) -> Result<f64> {
        self.check_dim(m)?;
        Ok(match self {
            OperatorSpec::ScaledTrace { a } => a * m.trace(),
            OperatorSpec::PucciPlus(b) => {
                let (pos, neg) = split_spectrum(m);
                b.big_a * pos - b.a * neg
            }
            OperatorSpec::PucciMinus(b) => {
                let (pos, neg) = split_spectrum(m);
                b.a * pos - b.big_a * neg
            }
            OperatorSpec::BellmanMax { matrices, .. } => {
                let mut best = f64::NEG_INFINITY;
                for q in matrices {
                    best = best.max(q.frobenius(m)?);
                }
                best
            }
        })
    }

    /// A (generalized) derivative `Q = ∂F/∂M` at `m`, so that
    /// `F(m) = tr(Q m)` for every variant here. Used to linearize the discrete
    /// operator; for nonsmooth points any element of the subdifferential works.
    pub fn linearization(&self, m: &SymMatrix) -> Result<SymMatrix> {
        self.check_dim(m)?;
        match self {
            OperatorSpec::ScaledTrace { a } => Ok(SymMatrix::identity(m.dim())?.scale(*a)),
            OperatorSpec::PucciPlus(b) => pucci_policy(m, b.big_a, b.a),
            OperatorSpec::PucciMinus(b) => pucci_policy(m, b.a, b.big_a),
            OperatorSpec::BellmanMax { matrices, .. } => {
                let mut best = (f64::NEG_INFINITY, 0);
                for (k, q) in matrices.iter().enumerate() {
                    let v = q.frobenius(m)?;
                    if v > best.0 {
                        best = (v, k);
                    }
                }
                Ok(matrices[best.1])
            }
        }
    }
}

fn split_spectrum(m: &SymMatrix) -> (f64, f64) {
    m.eigenvalues().iter().fold((0.0, 0.0), |(p, n), &l| {
        if l > 0.0 {
            (p + l, n)
        } else {
            (p, n - l)
        }
    })
}

// Q = Σ w(λ_i) v_i v_iᵀ with weight `on_pos` for λ > 0 and `on_neg` otherwise
fn pucci_policy(m: &SymMatrix, on_pos: f64, on_neg: f64) -> Result<SymMatrix> {
    let dim = m.dim();
    let mut q = SymMatrix::zeros(dim)?;
    for (lambda, v) in m.eigen_2()? {
        let w = if lambda > 0.0 { on_pos } else { on_neg };
        for i in 0..dim {
            for j in i..dim {
                let cur = q.get(i, j);
                q.set(i, j, cur + w * v[i] * v[j]);
            }
        }
    }
    Ok(q)
}

/// `F(M)` for a given spec; convenience wrapper.
pub fn eval_operator(spec: &OperatorSpec, m: &SymMatrix) -> Result<f64> {
    spec.eval(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub check: String,
    pub operator: String,
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    /// Smallest slack observed; negative means a violation.
    pub worst_margin: f64,
}

impl PropertyReport {
    fn new(check: &str, operator: &str) -> Self {
        Self {
            check: check.into(),
            operator: operator.into(),
            trials: 0,
            passed: 0,
            failed: 0,
            worst_margin: f64::INFINITY,
        }
    }

    fn record(&mut self, margin: f64) {
        self.trials += 1;
        if margin >= 0.0 {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        self.worst_margin = self.worst_margin.min(margin);
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.trials > 0
    }
}

/// Seeded sampler for the randomized operator checks.
pub struct MatrixSampler {
    rng: ChaCha8Rng,
}

impl MatrixSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dim_for(&mut self, spec: &OperatorSpec) -> usize {
        spec.fixed_dim().unwrap_or_else(|| self.rng.gen_range(1..=3))
    }

    /// Symmetric matrix with entries uniform in `[-s, s]`, `s` log-uniform in `[1e-2, 1e2]`.
    pub fn symmetric(&mut self, dim: usize) -> SymMatrix {
        let s = 10f64.powf(self.rng.gen_range(-2.0..2.0));
        let mut m = SymMatrix::zeros(dim).expect("dimension checked by caller");
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, s * self.rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    /// `GᵀG` with `G` entries uniform in `[-1, 1]`.
    pub fn gram(&mut self, dim: usize) -> SymMatrix {
        let g: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| self.rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut m = SymMatrix::zeros(dim).expect("dimension checked by caller");
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, (0..dim).map(|k| g[k][i] * g[k][j]).sum());
            }
        }
        m
    }

    pub fn positive_scale(&mut self) -> f64 {
        10f64.powf(self.rng.gen_range(-2.0..2.0))
    }
}

fn ellipticity_margin(spec: &OperatorSpec, m: &SymMatrix, n: &SymMatrix) -> Result<f64> {
    let b = spec.bounds();
    let diff = spec.eval(&m.add(n)?)? - spec.eval(m)?;
    let tr = n.trace();
    let tol = 1e-9 * (1.0 + tr.abs()) * (1.0 + m_scale(m));
    Ok((diff - b.a * tr + tol).min(b.big_a * tr + tol - diff))
}

// eigenvalue round-off grows with the size of M
fn m_scale(m: &SymMatrix) -> f64 {
    m.frobenius(m).map(f64::sqrt).unwrap_or(0.0) * 1e-3
}

fn homogeneity_margin(spec: &OperatorSpec, m: &SymMatrix, t: f64) -> Result<f64> {
    let lhs = spec.eval(&m.scale(t))?;
    let rhs = t * spec.eval(m)?;
    Ok(1e-9 * (1.0 + rhs.abs()) - (lhs - rhs).abs())
}

pub fn check_uniform_ellipticity(spec: &OperatorSpec, trials: usize, rng_seed: u64) -> Result<PropertyReport> {
    let mut sampler = MatrixSampler::new(rng_seed);
    let mut report = PropertyReport::new("uniform-ellipticity", spec.name());
    for _ in 0..trials {
        let dim = sampler.dim_for(spec);
        let m = sampler.symmetric(dim);
        let n = sampler.gram(dim);
        report.record(ellipticity_margin(spec, &m, &n)?);
    }
    Ok(report)
}

pub fn check_homogeneity(spec: &OperatorSpec, trials: usize, rng_seed: u64) -> Result<PropertyReport> {
    let mut sampler = MatrixSampler::new(rng_seed);
    let mut report = PropertyReport::new("homogeneity", spec.name());
    for _ in 0..trials {
        let dim = sampler.dim_for(spec);
        let m = sampler.symmetric(dim);
        let t = sampler.positive_scale();
        report.record(homogeneity_margin(spec, &m, t)?);
    }
    Ok(report)
}

/// `M⁻(M) = −M⁺(−M)` on random samples.
pub fn check_pucci_duality(bounds: EllipticityBounds, trials: usize, rng_seed: u64) -> Result<PropertyReport> {
    let plus = OperatorSpec::PucciPlus(bounds);
    let minus = OperatorSpec::PucciMinus(bounds);
    let mut sampler = MatrixSampler::new(rng_seed);
    let mut report = PropertyReport::new("pucci-duality", "pucci±");
    for _ in 0..trials {
        let dim = sampler.dim_for(&plus);
        let m = sampler.symmetric(dim);
        let lhs = minus.eval(&m)?;
        let rhs = -plus.eval(&m.scale(-1.0))?;
        report.record(1e-12 * (1.0 + lhs.abs()) - (lhs - rhs).abs());
    }
    Ok(report)
}

/// `M⁻ ≤ F ≤ M⁺` pointwise for an operator whose declared bounds are `(a, A)`.
pub fn check_pucci_sandwich(spec: &OperatorSpec, trials: usize, rng_seed: u64) -> Result<PropertyReport> {
    let b = spec.bounds();
    let plus = OperatorSpec::PucciPlus(b);
    let minus = OperatorSpec::PucciMinus(b);
    let mut sampler = MatrixSampler::new(rng_seed);
    let mut report = PropertyReport::new("pucci-sandwich", spec.name());
    for _ in 0..trials {
        let dim = sampler.dim_for(spec);
        let m = sampler.symmetric(dim);
        let v = spec.eval(&m)?;
        let tol = 1e-9 * (1.0 + v.abs());
        let margin = (v - minus.eval(&m)? + tol).min(plus.eval(&m)? - v + tol);
        report.record(margin);
    }
    Ok(report)
}
