//! Dirichlet solver: δ-continuation over the regularized problem
//!
//! ```text
//! −F(D²w) = (f + ε σ(u) − ε σ(w) − b T_M(|∇w|)^β) (δ² + |∇w|²)^{−α/2},   σ(w) = |w|^α w,
//! ```
//!
//! solved at each δ by a damped, linearized fixed-point iteration
//! `u ← u + θ (w − u)`, where `w` is one semismooth Newton step of the frozen
//! stage problem. `T_M` clamps the gradient at level `M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_raw, hessian_raw, GridFunction, GridVector, UniformGrid};
use crate::linalg::BandedMatrix;
use crate::model::{EquationInstance, ScalarField};
use crate::operators::SymMatrix;

/// Floor used in place of `|∇u|` when `α < 0` and the gradient vanishes.
pub const DELTA_FLOOR: f64 = 1e-8;

const MAX_HALVINGS: usize = 4;
const GROWTH_GUARD: f64 = 10.0;
const MAX_TRUNCATION_RAISES: usize = 40;
const DIVERGENCE_BOUND: f64 = 1e14;

/// Gradient clamp level: raised automatically or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Truncation {
    #[default]
    Auto,
    Level(f64),
}

impl Serialize for Truncation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Truncation::Auto => s.serialize_str("auto"),
            Truncation::Level(m) => s.serialize_f64(*m),
        }
    }
}

impl<'de> Deserialize<'de> for Truncation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "auto" => Ok(Truncation::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("truncation must be \"auto\" or a number, got {w:?}"))),
            Raw::Number(m) if m > 0.0 => Ok(Truncation::Level(m)),
            Raw::Number(m) => Err(serde::de::Error::custom(format!("truncation level must be positive, got {m}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub delta_schedule: Vec<f64>,
    /// `None` means `1e−9·(1 + |f|∞)`.
    pub epsilon_stab: Option<f64>,
    pub truncation: Truncation,
    pub theta: f64,
    pub inner_tol: f64,
    #[serde(rename = "max_iters")]
    pub max_inner_iters: usize,
    pub fallback: bool,
    /// Pseudo-time step; `None` picks `0.2 h² / (A·N)`.
    pub fallback_dt: Option<f64>,
    pub fallback_max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta_schedule: (0..=10).map(|k| 0.5f64.powi(k)).collect(),
            epsilon_stab: None,
            truncation: Truncation::Auto,
            theta: 0.5,
            inner_tol: 1e-8,
            max_inner_iters: 400,
            fallback: false,
            fallback_dt: None,
            fallback_max_steps: 200_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::OutOfRange { what: "solver config", detail });
        if self.delta_schedule.is_empty() {
            return bad("empty delta_schedule".into());
        }
        if self.delta_schedule.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return bad(format!("delta_schedule must be positive, got {:?}", self.delta_schedule));
        }
        if self.delta_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return bad(format!("delta_schedule must be strictly decreasing, got {:?}", self.delta_schedule));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if !(self.inner_tol > 0.0) {
            return bad(format!("inner_tol must be positive, got {}", self.inner_tol));
        }
        if self.max_inner_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if let Some(e) = self.epsilon_stab {
            if !(e > 0.0) {
                return bad(format!("epsilon_stab must be positive, got {e}"));
            }
        }
        if let Truncation::Level(m) = self.truncation {
            if !(m > 0.0) {
                return bad(format!("truncation level must be positive, got {m}"));
            }
        }
        if let Some(dt) = self.fallback_dt {
            if !(dt > 0.0) {
                return bad(format!("fallback_dt must be positive, got {dt}"));
            }
        }
        Ok(())
    }
}

/// Stage-level parameters entering the regularized right-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageParams {
    pub delta: f64,
    pub epsilon: f64,
    pub truncation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub delta: f64,
    pub iterations: usize,
    pub truncation_level: f64,
    pub truncation_raises: usize,
    pub damping_halvings: usize,
    pub final_update: f64,
    /// Max-norm change of the solution over this stage.
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Last accepted update, max norm.
    pub final_update: f64,
    /// Convergence threshold actually applied to the update: `inner_tol·max(1, |u|∞)`.
    pub update_tol: f64,
    /// Max interior residual of the unregularized equation.
    pub residual_max: f64,
    pub stages: Vec<StageReport>,
    pub epsilon_stab: f64,
    pub truncation_level: f64,
    /// Fraction of interior nodes with `|∇u| ≥ M` at the end.
    pub truncation_activity: f64,
    /// Change between the last two δ stages, max norm.
    pub delta_stability: f64,
    pub used_fallback: bool,
}

impl SolveReport {
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

/// `|w|^α w`, continuous at 0.
pub fn signed_power(w: f64, alpha: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w.abs().powf(alpha) * w
    }
}

fn grad_power(pnorm: f64, alpha: f64) -> f64 {
    if alpha < 0.0 && pnorm < 1e-14 {
        (DELTA_FLOOR * DELTA_FLOOR + pnorm * pnorm).powf(0.5 * alpha)
    } else {
        pnorm.powf(alpha)
    }
}

fn check_node(u: &GridFunction, node: usize) -> Result<()> {
    if node >= u.grid.len() || !u.grid.is_interior(node) {
        return Err(Error::BoundaryNode(node));
    }
    Ok(())
}

/// Residual of `−|∇u|^α F(D²u) + b|∇u|^β − f` at an interior node.
pub fn residual(instance: &EquationInstance, u: &GridFunction, node: usize) -> Result<f64> {
    check_node(u, node)?;
    let x = u.grid.coords(node);
    residual_raw(instance, &u.grid, &u.values, node, instance.f.eval(&x), instance.b.eval(&x))
}

fn residual_raw(
    instance: &EquationInstance,
    grid: &UniformGrid,
    values: &[f64],
    node: usize,
    f: f64,
    b: f64,
) -> Result<f64> {
    let e = &instance.exponents;
    let p = gradient_raw(grid, values, node).norm();
    let fh = instance.operator.eval(&hessian_raw(grid, values, node))?;
    Ok(-grad_power(p, e.alpha()) * fh + b * p.powf(e.beta()) - f)
}

/// Max of `|residual|` over interior nodes.
pub fn residual_max(instance: &EquationInstance, u: &GridFunction) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in u.grid.interior_nodes() {
        worst = worst.max(residual(instance, u, n)?.abs());
    }
    Ok(worst)
}

/// `(f + ε σ(u_prev) − b·min(|∇v|, M)^β)·(δ² + |∇v|²)^{−α/2}` at an interior node.
pub fn regularized_rhs(
    instance: &EquationInstance,
    u_prev: &GridFunction,
    v: &GridFunction,
    params: &StageParams,
    node: usize,
) -> Result<f64> {
    check_node(v, node)?;
    check_node(u_prev, node)?;
    let x = v.grid.coords(node);
    let e = &instance.exponents;
    let p = gradient_raw(&v.grid, &v.values, node).norm();
    let pw = weight_gradient(&v.grid, &v.values, node, e.alpha()).0.norm();
    let source = instance.f.eval(&x) + params.epsilon * signed_power(u_prev.values[node], e.alpha())
        - instance.b.eval(&x) * p.min(params.truncation).powf(e.beta());
    Ok(source * (params.delta * params.delta + pw * pw).powf(-0.5 * e.alpha()))
}

/// Interior unknowns and per-node coefficient samples.
struct Discretization<'a> {
    instance: &'a EquationInstance,
    grid: &'a UniformGrid,
    interior: Vec<usize>,
    unknown: Vec<usize>,
    f: Vec<f64>,
    b: Vec<f64>,
    band: usize,
}

const NOT_UNKNOWN: usize = usize::MAX;

impl<'a> Discretization<'a> {
    fn new(instance: &'a EquationInstance, grid: &'a UniformGrid) -> Self {
        let interior = grid.interior_nodes();
        let mut unknown = vec![NOT_UNKNOWN; grid.len()];
        for (k, &n) in interior.iter().enumerate() {
            unknown[n] = k;
        }
        let (mut f, mut b) = (Vec::with_capacity(interior.len()), Vec::with_capacity(interior.len()));
        for &n in &interior {
            let x = grid.coords(n);
            f.push(instance.f.eval(&x));
            b.push(instance.b.eval(&x));
        }
        let band = if grid.dim() == 1 { 1 } else { grid.counts()[0] - 1 };
        Self {
            instance,
            grid,
            interior,
            unknown,
            f,
            b,
            band,
        }
    }

    fn alpha(&self) -> f64 {
        self.instance.exponents.alpha()
    }

    fn beta(&self) -> f64 {
        self.instance.exponents.beta()
    }

    fn max_gradient(&self, values: &[f64]) -> f64 {
        self.interior
            .iter()
            .map(|&n| gradient_raw(self.grid, values, n).norm())
            .fold(0.0, f64::max)
    }

    /// Largest difference quotient along grid edges, scaled by `√N`.
    fn edge_lipschitz(&self, values: &[f64]) -> f64 {
        let g = self.grid;
        let mut best: f64 = 0.0;
        for n in 0..g.len() {
            let idx = g.multi_index(n);
            for k in 0..g.dim() {
                if idx[k] + 1 < g.counts()[k] {
                    let s = g.stride(k);
                    best = best.max((values[n + s] - values[n]).abs() / g.spacing()[k]);
                }
            }
        }
        best * (g.dim() as f64).sqrt()
    }

    /// Stage residual `−F(D²u) − (f − b T_M^β)(δ² + |∇u|²)^{−α/2}` per unknown.
    fn stage_residual(&self, values: &[f64], delta: f64, m: f64, out: &mut [f64]) -> Result<()> {
        let (alpha, beta) = (self.alpha(), self.beta());
        for (k, &n) in self.interior.iter().enumerate() {
            let p = gradient_raw(self.grid, values, n).norm();
            let pw = weight_gradient(self.grid, values, n, alpha).0.norm();
            let fh = self.instance.operator.eval(&hessian_raw(self.grid, values, n))?;
            let g = (delta * delta + pw * pw).powf(-0.5 * alpha);
            out[k] = -fh - g * (self.f[k] - self.b[k] * p.min(m).powf(beta));
        }
        Ok(())
    }

    /// Jacobian of the stage residual, plus the stabilizer `g·ε·σ'(u)` and a
    /// pseudo-time shift `λ` on the diagonal.
    fn jacobian(&self, values: &[f64], params: &StageParams, lambda: f64) -> Result<BandedMatrix> {
        let (alpha, beta) = (self.alpha(), self.beta());
        let delta2 = params.delta * params.delta;
        let grid = self.grid;
        let dim = grid.dim();
        let mut jac = BandedMatrix::zeros(self.interior.len(), self.band, self.band);
        for (k, &n) in self.interior.iter().enumerate() {
            let gc: GridVector = gradient_raw(grid, values, n);
            let p = gc.norm();
            let (gw, partials) = weight_gradient(grid, values, n, alpha);
            let hess = hessian_raw(grid, values, n);
            let q: SymMatrix = self.instance.operator.linearization(&hess)?;
            let reg = delta2 + gw.norm().powi(2);
            let g = reg.powf(-0.5 * alpha);
            let source = self.f[k] - self.b[k] * p.min(params.truncation).powf(beta);
            let mut add = |node: usize, v: f64| {
                let col = self.unknown[node];
                if col != NOT_UNKNOWN {
                    jac.add(k, col, v);
                }
            };
            let stab = g * params.epsilon * (1.0 + alpha) * (delta2 + values[n] * values[n]).powf(0.5 * alpha);
            let mut diag = stab + lambda;
            for axis in 0..dim {
                let s = grid.stride(axis);
                let h = grid.spacing()[axis];
                let second = q.get(axis, axis) / (h * h);
                // Hamiltonian part, centered gradient
                let mut ham = 0.0;
                if p > 0.0 && p < params.truncation {
                    ham = g * self.b[k] * beta * p.powf(beta - 2.0) * gc.comps[axis] / (2.0 * h);
                }
                // weight part
                let w = alpha * gw.comps[axis] * reg.powf(-0.5 * alpha - 1.0) * source;
                let [wp, w0, wm] = partials[axis].map(|d| w * d);
                diag += 2.0 * second + w0;
                add(n + s, -second + ham + wp);
                add(n - s, -second - ham + wm);
            }
            if dim == 2 {
                let (sx, sy) = (grid.stride(0), grid.stride(1));
                let w = 2.0 * q.get(0, 1) / (4.0 * grid.spacing()[0] * grid.spacing()[1]);
                add(n + sx + sy, -w);
                add(n - sx - sy, -w);
                add(n + sx - sy, w);
                add(n - sx + sy, w);
            }
            add(n, diag);
        }
        Ok(jac)
    }
}

/// Per-axis magnitudes `q_k` inside the degeneracy weight `(δ² + |q|²)^{−α/2}`,
/// with the partial derivatives of each `q_k` with respect to the node values
/// at `+s`, `0`, `−s` along that axis.
///
/// `q_k^α` is the secant slope of `φ(t) = |t|^α t / (1+α)` between the two
/// one-sided differences, so that in one dimension `q^α D²u` is exactly the
/// flux difference `(φ(D⁺u) − φ(D⁻u))/h`. Where the one-sided differences
/// agree this is the centered difference.
fn weight_gradient(grid: &UniformGrid, values: &[f64], node: usize, alpha: f64) -> (GridVector, [[f64; 3]; 2]) {
    let mut q = GridVector {
        dim: grid.dim(),
        comps: [0.0; 2],
    };
    let mut partials = [[0.0; 3]; 2];
    for k in 0..grid.dim() {
        let s = grid.stride(k);
        let h = grid.spacing()[k];
        let bwd = (values[node] - values[node - s]) / h;
        let fwd = (values[node + s] - values[node]) / h;
        let gap = fwd - bwd;
        if alpha == 0.0 || gap.abs() <= 1e-6 * (fwd.abs() + bwd.abs()) {
            let c = 0.5 * (fwd + bwd);
            let sign = if c < 0.0 { -1.0 } else { 1.0 };
            q.comps[k] = c.abs();
            partials[k] = [0.5 * sign / h, 0.0, -0.5 * sign / h];
            continue;
        }
        let phi = |t: f64| t.abs().powf(alpha) * t / (1.0 + alpha);
        let dphi = |t: f64| t.abs().powf(alpha);
        let m = (phi(fwd) - phi(bwd)) / gap;
        let qk = m.powf(1.0 / alpha);
        let dq_dm = qk / (alpha * m);
        let dm_dfwd = (dphi(fwd) - m) / gap;
        let dm_dbwd = (m - dphi(bwd)) / gap;
        q.comps[k] = qk;
        // fwd = (u₊ − u₀)/h, bwd = (u₀ − u₋)/h
        partials[k] = [
            dq_dm * dm_dfwd / h,
            dq_dm * (dm_dbwd - dm_dfwd) / h,
            -dq_dm * dm_dbwd / h,
        ];
    }
    (q, partials)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Boundary values from `boundary`, interior filled by linear (1D) or
/// transfinite (2D) interpolation of those values.
pub fn initial_guess(grid: &UniformGrid, boundary: &ScalarField) -> Result<GridFunction> {
    let mut values = vec![0.0; grid.len()];
    for n in grid.boundary_nodes() {
        let v = boundary.eval(&grid.coords(n));
        if !v.is_finite() {
            return Err(Error::InvalidBoundary(n));
        }
        values[n] = v;
    }
    let c = grid.counts();
    if grid.dim() == 1 {
        let (a, b) = (values[0], values[c[0] - 1]);
        for (i, v) in values.iter_mut().enumerate().take(c[0] - 1).skip(1) {
            let s = i as f64 / (c[0] - 1) as f64;
            *v = (1.0 - s) * a + s * b;
        }
    } else {
        let (nx, ny) = (c[0], c[1]);
        let at = |i: usize, j: usize| values[i + nx * j];
        let mut fill = Vec::new();
        for j in 1..ny - 1 {
            let t = j as f64 / (ny - 1) as f64;
            for i in 1..nx - 1 {
                let s = i as f64 / (nx - 1) as f64;
                let edges = (1.0 - s) * at(0, j) + s * at(nx - 1, j) + (1.0 - t) * at(i, 0) + t * at(i, ny - 1);
                let corners = (1.0 - s) * (1.0 - t) * at(0, 0)
                    + s * (1.0 - t) * at(nx - 1, 0)
                    + (1.0 - s) * t * at(0, ny - 1)
                    + s * t * at(nx - 1, ny - 1);
                fill.push((i + nx * j, edges - corners));
            }
        }
        for (n, v) in fill {
            values[n] = v;
        }
    }
    GridFunction::new(grid.clone(), values)
}

fn default_epsilon(disc: &Discretization) -> f64 {
    1e-9 * (1.0 + sup(&disc.f))
}

/// Solves the Dirichlet problem on `grid` with datum `boundary`, starting
/// from the interpolated boundary data.
pub fn solve_dirichlet(
    instance: &EquationInstance,
    grid: &UniformGrid,
    boundary: &ScalarField,
    config: &SolverConfig,
) -> Result<(GridFunction, SolveReport)> {
    let start = initial_guess(grid, boundary)?;
    solve_from(instance, start, config)
}

/// Like [`solve_dirichlet`], but from a given start; its boundary values are the datum.
pub fn solve_from(
    instance: &EquationInstance,
    start: GridFunction,
    config: &SolverConfig,
) -> Result<(GridFunction, SolveReport)> {
    config.validate()?;
    if start.grid.dim() != instance.domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: instance.domain.dim(),
            got: start.grid.dim(),
        });
    }
    if let Some(d) = instance.operator.fixed_dim() {
        if d != start.grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: start.grid.dim(),
            });
        }
    }
    for n in start.grid.boundary_nodes() {
        if !start.values[n].is_finite() {
            return Err(Error::InvalidBoundary(n));
        }
    }
    let grid = start.grid.clone();
    let disc = Discretization::new(instance, &grid);
    match continuation(&disc, start.values.clone(), config) {
        Ok(out) => finish(&disc, out, config, false),
        Err(err) if config.fallback => {
            let out = pseudo_time(&disc, start.values, config).map_err(|_| err)?;
            finish(&disc, out, config, true)
        }
        Err(err) => Err(err),
    }
}

struct Outcome {
    values: Vec<f64>,
    stages: Vec<StageReport>,
    epsilon: f64,
    truncation: f64,
    final_update: f64,
    update_tol: f64,
}

fn finish(disc: &Discretization, out: Outcome, _config: &SolverConfig, used_fallback: bool) -> Result<(GridFunction, SolveReport)> {
    let u = GridFunction::new(disc.grid.clone(), out.values)?;
    let residual_max = residual_max(disc.instance, &u)?;
    let active = disc
        .interior
        .iter()
        .filter(|&&n| gradient_raw(disc.grid, &u.values, n).norm() >= out.truncation)
        .count();
    let delta_stability = out.stages.last().map(|s| s.change).unwrap_or(0.0);
    let report = SolveReport {
        converged: true,
        final_update: out.final_update,
        update_tol: out.update_tol,
        residual_max,
        delta_stability: if out.stages.len() >= 2 { delta_stability } else { 0.0 },
        stages: out.stages,
        epsilon_stab: out.epsilon,
        truncation_level: out.truncation,
        truncation_activity: active as f64 / disc.interior.len().max(1) as f64,
        used_fallback,
    };
    Ok((u, report))
}

fn continuation(disc: &Discretization, mut values: Vec<f64>, config: &SolverConfig) -> Result<Outcome> {
    let epsilon = config.epsilon_stab.unwrap_or_else(|| default_epsilon(disc));
    let n = disc.interior.len();
    let mut m = match config.truncation {
        Truncation::Level(m) => m,
        Truncation::Auto => 0.0,
    };
    let mut stages = Vec::new();
    let (mut final_update, mut update_tol) = (0.0, config.inner_tol);
    let mut res = vec![0.0; n];
    let mut trial = values.clone();
    let h2 = disc.grid.spacing().iter().fold(f64::INFINITY, |a, &b| a.min(b)).powi(2);
    // diagonal scale of the discrete operator; the pseudo-time shift is measured against it
    let diag_scale = 2.0 * disc.instance.operator.bounds().big_a * disc.grid.dim() as f64 / h2;

    for (stage, &delta) in config.delta_schedule.iter().enumerate() {
        let stage_start = values.clone();
        if config.truncation == Truncation::Auto {
            m = m.max(2.0 * disc.edge_lipschitz(&values)).max(1.0);
        }
        let mut params = StageParams { delta, epsilon, truncation: m };
        let (mut raises, mut halvings_total) = (0, 0);
        disc.stage_residual(&values, delta, m, &mut res)?;
        let mut r_old = l2(&res);
        let mut converged_at = None;
        let mut last_update = f64::INFINITY;
        let mut lambda = 0.0;

        for it in 1..=config.max_inner_iters {
            let fail = |reason: String| Error::NonConvergence { stage, iterations: it, reason };
            let step_lambda = lambda;
            let mut step: Vec<f64> = res.iter().map(|r| -r).collect();
            if disc.jacobian(&values, &params, lambda)?.solve(&mut step).is_err() {
                lambda = (10.0 * lambda).max(1e-3 * diag_scale);
                disc.stage_residual(&values, delta, m, &mut res)?;
                continue;
            }
            let u_scale = 1.0f64.max(sup(&values));
            let tol = config.inner_tol * u_scale;
            let full = sup(&step);
            let mut theta = config.theta;
            // roundoff level of the residual: nothing below it is meaningful
            let floor = 64.0 * f64::EPSILON * (4.0 * u_scale / h2 + sup(&disc.f)) * (n as f64).sqrt();
            let mut halvings = 0;
            let accepted = loop {
                for (k, &node) in disc.interior.iter().enumerate() {
                    trial[node] = values[node] + theta * step[k];
                }
                disc.stage_residual(&trial, delta, m, &mut res)?;
                let r = l2(&res);
                if theta * full <= tol || (r.is_finite() && (r <= GROWTH_GUARD * r_old || r <= floor)) {
                    break Some(r);
                }
                if halvings == MAX_HALVINGS {
                    break None;
                }
                theta *= 0.5;
                halvings += 1;
            };
            halvings_total += halvings;
            let Some(r_new) = accepted else {
                // stiffen toward pseudo-time stepping and retry from the same point
                lambda = (10.0 * lambda).max(1e-3 * diag_scale);
                if lambda > 1e12 * diag_scale {
                    return Err(fail(format!("residual kept increasing at δ = {delta}")));
                }
                disc.stage_residual(&values, delta, m, &mut res)?;
                continue;
            };
            std::mem::swap(&mut values, &mut trial);
            trial.copy_from_slice(&values);
            r_old = r_new;
            last_update = theta * full;
            // steps that needed heavy damping stiffen the shift, clean ones relax it
            match halvings {
                0 => {
                    lambda *= 0.25;
                    if lambda < 1e-9 * diag_scale {
                        lambda = 0.0;
                    }
                }
                1 => {}
                _ => lambda = (4.0 * lambda).max(1e-3 * diag_scale),
            }
            if !values.iter().all(|v| v.is_finite() && v.abs() < DIVERGENCE_BOUND) {
                return Err(fail("iterates diverged".into()));
            }
            if config.truncation == Truncation::Auto {
                let gmax = disc.max_gradient(&values);
                if gmax >= m {
                    raises += 1;
                    if raises > MAX_TRUNCATION_RAISES {
                        return Err(fail(format!("gradient kept exceeding the truncation level (M = {m:.3e})")));
                    }
                    m = 2.0 * gmax;
                    params.truncation = m;
                    disc.stage_residual(&values, delta, m, &mut res)?;
                    r_old = l2(&res);
                    continue;
                }
            }
            // only an unshifted step certifies a fixed point
            if last_update <= tol && step_lambda == 0.0 {
                converged_at = Some(it);
                update_tol = tol;
                break;
            }
        }
        let Some(iterations) = converged_at else {
            return Err(Error::NonConvergence {
                stage,
                iterations: config.max_inner_iters,
                reason: format!("update {last_update:.3e} above tolerance at δ = {delta}"),
            });
        };
        final_update = last_update;
        let change = values.iter().zip(&stage_start).fold(0.0, |a: f64, (x, y)| a.max((x - y).abs()));
        stages.push(StageReport {
            delta,
            iterations,
            truncation_level: m,
            truncation_raises: raises,
            damping_halvings: halvings_total,
            final_update: last_update,
            change,
        });
    }
    Ok(Outcome {
        values,
        stages,
        epsilon,
        truncation: m,
        final_update,
        update_tol,
    })
}

/// Explicit Euler on `u_t + R_δ(u) = 0` at the last δ of the schedule.
fn pseudo_time(disc: &Discretization, mut values: Vec<f64>, config: &SolverConfig) -> Result<Outcome> {
    let delta = *config.delta_schedule.last().expect("validated schedule");
    let epsilon = config.epsilon_stab.unwrap_or_else(|| default_epsilon(disc));
    let big_a = disc.instance.operator.bounds().big_a;
    let dim = disc.grid.dim() as f64;
    let h = disc.grid.spacing().iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let dt = config.fallback_dt.unwrap_or(0.2 * h * h / (big_a * dim));
    let jacobi = h * h / (2.0 * big_a * dim);
    let mut res = vec![0.0; disc.interior.len()];
    let m = match config.truncation {
        Truncation::Level(m) => m,
        Truncation::Auto => f64::INFINITY,
    };
    for step in 1..=config.fallback_max_steps {
        disc.stage_residual(&values, delta, m, &mut res)?;
        for (k, &n) in disc.interior.iter().enumerate() {
            values[n] -= dt * res[k];
        }
        if !values.iter().all(|v| v.is_finite() && v.abs() < DIVERGENCE_BOUND) {
            break;
        }
        let tol = config.inner_tol * 1.0f64.max(sup(&values));
        let implied = jacobi * sup(&res);
        if implied <= tol {
            let truncation = if m.is_finite() { m } else { 2.0 * disc.max_gradient(&values) };
            return Ok(Outcome {
                values,
                stages: vec![StageReport {
                    delta,
                    iterations: step,
                    truncation_level: truncation,
                    truncation_raises: 0,
                    damping_halvings: 0,
                    final_update: implied,
                    change: 0.0,
                }],
                epsilon,
                truncation,
                final_update: implied,
                update_tol: tol,
            });
        }
    }
    Err(Error::NonConvergence {
        stage: config.delta_schedule.len() - 1,
        iterations: config.fallback_max_steps,
        reason: "pseudo-time fallback did not settle".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub holds: bool,
    /// `max (u_sub − u_super)⁺` over all nodes.
    pub max_violation: f64,
    pub violating_nodes: Vec<usize>,
    pub tol: f64,
}

/// Checks `u_sub ≤ u_super + tol` after verifying the sub/supersolution
/// preconditions (interior residuals within `residual_tol`, boundary ordering).
pub fn comparison_probe(
    instance: &EquationInstance,
    u_sub: &GridFunction,
    u_super: &GridFunction,
    residual_tol: f64,
    tol: f64,
) -> Result<ComparisonReport> {
    if u_sub.grid != u_super.grid {
        return Err(Error::DimensionMismatch {
            expected: u_sub.grid.len(),
            got: u_super.grid.len(),
        });
    }
    let grid = &u_sub.grid;
    let mut bad = Vec::new();
    for n in grid.interior_nodes() {
        if residual(instance, u_sub, n)? > residual_tol || residual(instance, u_super, n)? < -residual_tol {
            bad.push(n);
        }
    }
    for n in grid.boundary_nodes() {
        if u_sub.values[n] > u_super.values[n] + tol {
            bad.push(n);
        }
    }
    if !bad.is_empty() {
        bad.sort_unstable();
        return Err(Error::PreconditionViolated { nodes: bad });
    }
    let mut violating = Vec::new();
    let mut worst: f64 = 0.0;
    for (n, (a, b)) in u_sub.values.iter().zip(&u_super.values).enumerate() {
        let gap = a - b;
        worst = worst.max(gap);
        if gap > tol {
            violating.push(n);
        }
    }
    Ok(ComparisonReport {
        holds: violating.is_empty(),
        max_violation: worst,
        violating_nodes: violating,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoxDomain, ExponentPair};
    use crate::operators::OperatorSpec;
    use std::f64::consts::PI;

    fn instance(alpha: f64, beta: f64, b: f64, f: f64, domain: BoxDomain) -> EquationInstance {
        EquationInstance::new(
            OperatorSpec::trace(1.0).unwrap(),
            ExponentPair::new(alpha, beta).unwrap(),
            ScalarField::constant(b),
            ScalarField::constant(f),
            domain,
        )
        .unwrap()
    }

    #[test]
    fn regularized_rhs_examples() {
        let grid = UniformGrid::new(&[11], &[0.0], &[1.0]).unwrap();
        let zero = grid.sample(|_| 0.0);
        let params = StageParams { delta: 1.0, epsilon: 1e-3, truncation: 10.0 };
        let inst = instance(0.0, 1.5, 0.0, 3.0, BoxDomain::interval(0.0, 1.0).unwrap());
        assert_eq!(regularized_rhs(&inst, &zero, &zero, &params, 5).unwrap(), 3.0);
        let inst = instance(-0.5, 0.8, 0.0, 3.0, BoxDomain::interval(0.0, 1.0).unwrap());
        assert_eq!(regularized_rhs(&inst, &zero, &zero, &params, 5).unwrap(), 3.0);

        let inst = instance(1.0, 2.5, 1.0, 2.0, BoxDomain::interval(0.0, 1.0).unwrap());
        let slope = grid.sample(|x| x[0]);
        let params = StageParams { delta: 0.1, ..params };
        let v = regularized_rhs(&inst, &zero, &slope, &params, 5).unwrap();
        assert!((v - 1.0 / 1.01f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.99504).abs() < 1e-5);
        assert!(matches!(regularized_rhs(&inst, &zero, &slope, &params, 0), Err(Error::BoundaryNode(0))));
    }

    #[test]
    fn residual_of_affine_function_is_zero() {
        let inst = instance(0.5, 2.0, 2.0, 2.0 * 3.0f64.powf(2.0), BoxDomain::interval(0.0, 1.0).unwrap());
        let grid = UniformGrid::new(&[17], &[0.0], &[1.0]).unwrap();
        let u = grid.sample(|x| 3.0 * x[0] - 1.0);
        assert!(residual_max(&inst, &u).unwrap() < 1e-10);
    }

    #[test]
    fn cosine_residual_is_small() {
        // fourth derivatives grow like sec⁴ toward ±1; [−0.8, 0.8] keeps the O(h²) term small
        let inst = instance(0.0, 2.0, 1.0, -PI * PI / 4.0, BoxDomain::interval(-0.8, 0.8).unwrap());
        let grid = UniformGrid::with_spacing(&inst.domain, 1.0 / 512.0).unwrap();
        let u = grid.sample(|x| -(PI * x[0] / 2.0).cos().ln());
        assert!(residual_max(&inst, &u).unwrap() < 5e-3);
    }

    #[test]
    fn affine_data_is_a_fixed_point() {
        let inst = instance(0.7, 2.2, 0.0, 0.0, BoxDomain::rectangle([0.0, 0.0], [1.0, 2.0]).unwrap());
        let grid = UniformGrid::new(&[9, 13], &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let ell = ScalarField::parse("1 + 2*x - 0.5*y").unwrap();
        let (u, report) = solve_dirichlet(&inst, &grid, &ell, &SolverConfig::default()).unwrap();
        let exact = grid.sample(|x| ell.eval(x));
        assert!(u.max_abs_diff(&exact) < 1e-12);
        assert!(report.converged);
        assert!(report.stages.iter().all(|s| s.change < 1e-12));
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate().is_ok());
        c.delta_schedule = vec![1.0, 1.0];
        assert!(c.validate().is_err());
        c = SolverConfig { theta: 0.0, ..SolverConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn truncation_serde() {
        let t: Truncation = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(t, Truncation::Auto);
        let t: Truncation = serde_json::from_str("12.5").unwrap();
        assert_eq!(t, Truncation::Level(12.5));
        assert!(serde_json::from_str::<Truncation>("-1").is_err());
        assert!(serde_json::from_str::<Truncation>("\"never\"").is_err());
    }
}
