//! Ergodic-problem experiments on the grid solver.
//!
//! `−|∇u|^α F(D²u) + |∇u|^β = f + c` with `u = +∞` on the boundary is
//! approximated by Dirichlet problems with large finite data `L`. The
//! equation only sees differences of `u`, so for fixed `c` the Dirichlet
//! solutions for two data differ by exactly the gap in `L`; what separates
//! `c` above the ergodic constant from `c` below it is whether the Dirichlet
//! problem has a solution at all. The estimator bisects on that, and records
//! the ladder drift as a consistency check.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_raw, GridFunction, Region, UniformGrid};
use crate::model::{amplitude_c, rescale_residual_factor, BlowupCase, EquationInstance, ScalarField};
use crate::operators::OperatorSpec;
use crate::oracle1d::{blowup_profile_fit_shifted, ProfileFit};
use crate::solver::{residual, solve_from, SolveReport, SolverConfig};

/// Distance window `[min_cells·h, max_cells·h]` used for the asymptotic fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitLayer {
    pub min_cells: f64,
    pub max_cells: f64,
}

impl Default for FitLayer {
    fn default() -> Self {
        Self {
            min_cells: 4.0,
            max_cells: 64.0,
        }
    }
}

/// Shells a fit needs at minimum.
pub const MIN_SHELLS: usize = 8;

#[derive(Debug, Clone)]
pub struct ErgodicExperiment {
    /// `b` must be the constant 1; `f` excludes `c`.
    pub instance: EquationInstance,
    pub grid: UniformGrid,
    pub ladder: Vec<f64>,
    pub probe: Vec<f64>,
    pub layer: FitLayer,
    pub solver: SolverConfig,
    /// `None` means `1e−3 ×` the smallest ladder gap.
    pub drift_tol: Option<f64>,
}

fn is_linear(op: &OperatorSpec) -> bool {
    matches!(op, OperatorSpec::ScaledTrace { .. })
}

impl ErgodicExperiment {
    /// Probe at the domain center, default layer and solver settings.
    pub fn new(instance: EquationInstance, grid: UniformGrid, ladder: Vec<f64>) -> Result<Self> {
        let d = &instance.domain;
        let probe = (0..d.dim()).map(|k| 0.5 * (d.lower[k] + d.upper[k])).collect();
        let exp = Self {
            instance,
            grid,
            ladder,
            probe,
            layer: FitLayer::default(),
            solver: SolverConfig::default(),
            drift_tol: None,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instance.b.as_constant() != Some(1.0) {
            return Err(Error::OutOfRange {
                what: "b",
                detail: "ergodic experiments need b ≡ 1".into(),
            });
        }
        if self.instance.exponents.case() == BlowupCase::Logarithmic && !is_linear(&self.instance.operator) {
            return Err(Error::UnsupportedCase(format!(
                "β = α + 2 with nonlinear operator {}",
                self.instance.operator.name()
            )));
        }
        if self.grid.domain() != self.instance.domain {
            return Err(Error::InvalidGrid("grid does not cover the instance domain".into()));
        }
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::OutOfRange {
                what: "ladder",
                detail: format!("need a strictly increasing list, got {:?}", self.ladder),
            });
        }
        if self.probe.len() != self.grid.dim() || self.instance.domain.distance(&self.probe) <= 0.0 {
            return Err(Error::OutOfRange {
                what: "probe",
                detail: format!("{:?} is not interior", self.probe),
            });
        }
        if !(self.layer.min_cells > 0.0 && self.layer.max_cells > self.layer.min_cells) {
            return Err(Error::OutOfRange {
                what: "fit layer",
                detail: format!("{:?}", self.layer),
            });
        }
        self.solver.validate()
    }

    pub fn drift_tol(&self) -> f64 {
        self.drift_tol.unwrap_or_else(|| {
            let gap = self
                .ladder
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            1e-3 * if gap.is_finite() { gap } else { 1.0 }
        })
    }

    fn layer_range(&self) -> (f64, f64) {
        let h = self.grid.h();
        (self.layer.min_cells * h, self.layer.max_cells * h)
    }

    /// Dirichlet solve of the shifted problem with datum `level`, warm-started
    /// from `warm` (shifted so its boundary sits at `level`) if given.
    pub fn solve_at(&self, c: f64, level: f64, warm: Option<&GridFunction>, config: &SolverConfig) -> Result<(GridFunction, SolveReport)> {
        let start = match warm {
            Some(w) => shifted_to_level(w, level),
            None => GridFunction::new(self.grid.clone(), vec![level; self.grid.len()])?,
        };
        solve_from(&self.instance.with_shifted_f(c), start, config)
    }
}

fn shifted_to_level(u: &GridFunction, level: f64) -> GridFunction {
    let b = u.grid.boundary_nodes();
    let shift = level - u.values[b[0]];
    let mut out = u.clone();
    for v in &mut out.values {
        *v += shift;
    }
    for n in b {
        out.values[n] = level;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub c: f64,
    pub solvable: bool,
    pub iterations: usize,
    /// `u(x₀)` per ladder rung.
    pub probe_values: Vec<f64>,
    /// `Δu(x₀) − ΔL` between consecutive rungs.
    pub excess_drift: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicEstimate {
    pub c_est: f64,
    /// `[c_lo, c_hi]`: no solution at `c_lo`, solution at `c_hi`.
    pub bracket: [f64; 2],
    pub tol: f64,
    pub drift_tol: f64,
    /// Largest `|excess drift|` over the solvable candidates.
    pub max_excess_drift: f64,
    pub ladder_consistent: bool,
    pub candidates: Vec<CandidateRecord>,
    pub h: f64,
    pub ladder: Vec<f64>,
    pub probe: Vec<f64>,
    /// Solution at `c_hi` on the first rung.
    #[serde(skip)]
    pub solution: Option<GridFunction>,
}

const C_FLOOR: f64 = -1e6;

/// Bisection on `c` between an unsolvable and a solvable Dirichlet problem,
/// warm-starting each candidate from the solution at the current `c_hi`.
pub fn estimate_ergodic_constant(exp: &ErgodicExperiment, tol: f64) -> Result<(f64, ErgodicEstimate)> {
    exp.validate()?;
    if !(tol > 0.0) {
        return Err(Error::OutOfRange {
            what: "tol",
            detail: format!("need tol > 0, got {tol}"),
        });
    }
    let inf_f = exp
        .grid
        .interior_nodes()
        .iter()
        .map(|&n| exp.instance.f.eval(&exp.grid.coords(n)))
        .fold(f64::INFINITY, f64::min);
    let mut candidates = Vec::new();
    // f + c ≥ 0 everywhere: u ≡ L is a subsolution and the problem is solvable
    let mut hi = -inf_f;
    let mut hi_sol = match try_candidate(exp, hi, None)? {
        (rec, Some(u)) => {
            candidates.push(rec);
            u
        }
        (rec, None) => {
            let why = rec.failure.clone().unwrap_or_default();
            candidates.push(rec);
            return Err(Error::BracketFailure(format!("no solution at c = {hi}: {why}")));
        }
    };
    let mut step = 1f64.max(hi.abs());
    let mut lo;
    loop {
        let c = (hi - step).max(C_FLOOR);
        let (rec, sol) = try_candidate(exp, c, Some(&hi_sol))?;
        candidates.push(rec);
        match sol {
            Some(u) => {
                if c <= C_FLOOR {
                    return Err(Error::BracketFailure(format!(
                        "Dirichlet problem still solvable at c = {C_FLOOR}"
                    )));
                }
                hi = c;
                hi_sol = u;
                step *= 2.0;
            }
            None => {
                lo = c;
                break;
            }
        }
    }
    while hi - lo > tol {
        let c = 0.5 * (lo + hi);
        let (rec, sol) = try_candidate(exp, c, Some(&hi_sol))?;
        candidates.push(rec);
        match sol {
            Some(u) => {
                hi = c;
                hi_sol = u;
            }
            None => lo = c,
        }
    }
    let drift_tol = exp.drift_tol();
    let max_excess_drift = candidates
        .iter()
        .flat_map(|r| r.excess_drift.iter())
        .fold(0.0f64, |m, d| m.max(d.abs()));
    let c_est = 0.5 * (lo + hi);
    let est = ErgodicEstimate {
        c_est,
        bracket: [lo, hi],
        tol,
        drift_tol,
        max_excess_drift,
        ladder_consistent: max_excess_drift <= drift_tol,
        candidates,
        h: exp.grid.h(),
        ladder: exp.ladder.clone(),
        probe: exp.probe.clone(),
        solution: Some(hi_sol),
    };
    Ok((c_est, est))
}

/// Classifies `c`: `Some(solution on the first rung)` when every rung solves,
/// `None` when the first rung has no solution. A later rung failing after the
/// first converged is an error.
fn try_candidate(exp: &ErgodicExperiment, c: f64, warm: Option<&GridFunction>) -> Result<(CandidateRecord, Option<GridFunction>)> {
    let l0 = exp.ladder[0];
    let first = match exp.solve_at(c, l0, warm, &exp.solver) {
        Ok(r) => Ok(r),
        // a far warm start can fail where a cold one succeeds
        Err(Error::NonConvergence { .. }) if warm.is_some() => exp.solve_at(c, l0, None, &exp.solver),
        Err(e) => Err(e),
    };
    let (u0, rep0) = match first {
        Ok(r) => r,
        Err(Error::NonConvergence { stage, iterations, reason }) => {
            let rec = CandidateRecord {
                c,
                solvable: false,
                iterations,
                probe_values: Vec::new(),
                excess_drift: Vec::new(),
                failure: Some(format!("stage {stage}: {reason}")),
            };
            return Ok((rec, None));
        }
        Err(e) => return Err(e),
    };
    let probe_of = |u: &GridFunction| -> Result<f64> {
        u.value_at(&exp.probe).ok_or_else(|| Error::OutOfRange {
            what: "probe",
            detail: format!("{:?} is not a grid node", exp.probe),
        })
    };
    let mut iterations = rep0.total_iterations();
    let mut probe_values = vec![probe_of(&u0)?];
    let mut prev = u0.clone();
    for &level in &exp.ladder[1..] {
        let (u, rep) = exp
            .solve_at(c, level, Some(&prev), &exp.solver)
            .map_err(|e| Error::LadderNonConvergence {
                rung: level,
                reason: e.to_string(),
            })?;
        iterations += rep.total_iterations();
        probe_values.push(probe_of(&u)?);
        prev = u;
    }
    let excess_drift = probe_values
        .windows(2)
        .zip(exp.ladder.windows(2))
        .map(|(p, l)| (p[1] - p[0]) - (l[1] - l[0]))
        .collect();
    let rec = CandidateRecord {
        c,
        solvable: true,
        iterations,
        probe_values,
        excess_drift,
        failure: None,
    };
    Ok((rec, Some(u0)))
}

/// Nodes on the inward normal through a face midpoint, with their distance to
/// that face, restricted to `d ∈ [d_min, d_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceLine {
    pub face_point: Vec<f64>,
    pub normal: Vec<f64>,
    pub nodes: Vec<usize>,
    pub distances: Vec<f64>,
}

pub fn face_lines(grid: &UniformGrid, d_min: f64, d_max: f64) -> Vec<FaceLine> {
    let dom = grid.domain();
    let tol = 1e-9 * grid.h();
    let mut out = Vec::new();
    for k in 0..grid.dim() {
        for (side, sign) in [(dom.lower[k], 1.0), (dom.upper[k], -1.0)] {
            let mut face_point: Vec<f64> = (0..grid.dim()).map(|j| 0.5 * (dom.lower[j] + dom.upper[j])).collect();
            face_point[k] = side;
            let mut normal = vec![0.0; grid.dim()];
            normal[k] = sign;
            // node line closest to the midpoint in the tangential direction
            let mut idx = [0usize; 2];
            for j in 0..grid.dim() {
                if j != k {
                    let t = (face_point[j] - grid.lower()[j]) / grid.spacing()[j];
                    idx[j] = t.round() as usize;
                }
            }
            let (mut nodes, mut distances) = (Vec::new(), Vec::new());
            for i in 1..grid.counts()[k] - 1 {
                idx[k] = i;
                let n = grid.flat_index(idx);
                if !grid.is_interior(n) {
                    continue;
                }
                let x = grid.coords(n);
                let d = (x[k] - side).abs();
                if d >= d_min - tol && d <= d_max + tol && dom.distance(&x) >= d - tol {
                    nodes.push(n);
                    distances.push(d);
                }
            }
            out.push(FaceLine {
                face_point,
                normal,
                nodes,
                distances,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceFit {
    pub face_point: Vec<f64>,
    pub normal: Vec<f64>,
    /// `C(x)` at the face point.
    pub amplitude: f64,
    pub fit: ProfileFit,
    /// `|χ̂ − χ|/χ` (absolute error when `χ = 0`).
    pub chi_rel_err: f64,
    pub c_rel_err: f64,
    /// `(d, u)`
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub chi: f64,
    pub case: BlowupCase,
    pub layer: [f64; 2],
    pub h: f64,
    pub faces: Vec<FaceFit>,
    pub chi_rel_err: f64,
    pub c_rel_err: f64,
}

impl ProfileReport {
    /// Rows `face,d,u,normalized` with `normalized = d^χ u / C` (or `u / (C |log d|)`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "face,d,u,normalized")?;
        for (i, face) in self.faces.iter().enumerate() {
            for &(d, u) in &face.samples {
                let norm = match self.case {
                    BlowupCase::Power => d.powf(self.chi) * u / face.amplitude,
                    BlowupCase::Logarithmic => u / (face.amplitude * d.ln().abs()),
                };
                writeln!(w, "{i},{d:?},{u:?},{norm:?}")?;
            }
        }
        Ok(())
    }
}

/// Solves at `c` (warm-started from `warm` if given) and fits the blow-up
/// profile on the solution.
pub fn verify_blowup_profile(exp: &ErgodicExperiment, c: f64, warm: Option<&GridFunction>) -> Result<ProfileReport> {
    let (u, _) = exp
        .solve_at(c, exp.ladder[0], warm, &exp.solver)
        .map_err(|e| Error::LadderNonConvergence {
            rung: exp.ladder[0],
            reason: e.to_string(),
        })?;
    blowup_profile_of(exp, &u)
}

/// Profile fit on a given solution of the experiment's problem.
pub fn blowup_profile_of(exp: &ErgodicExperiment, u: &GridFunction) -> Result<ProfileReport> {
    let e = &exp.instance.exponents;
    let chi = e.chi();
    let (d_min, d_max) = exp.layer_range();
    let mut faces = Vec::new();
    for line in face_lines(&u.grid, d_min, d_max) {
        if line.nodes.len() < MIN_SHELLS {
            return Err(Error::UnresolvedLayer {
                usable: line.nodes.len(),
                needed: MIN_SHELLS,
            });
        }
        let amplitude = amplitude_c(&exp.instance.operator, &line.normal, e)?;
        let samples: Vec<(f64, f64)> = line
            .nodes
            .iter()
            .zip(&line.distances)
            .map(|(&n, &d)| (d, u.values[n]))
            .collect();
        let fit = blowup_profile_fit_shifted(&samples, e.case(), (-0.5 * d_min, 2.0 * d_min))?;
        let chi_rel_err = if chi > 0.0 {
            (fit.chi_hat - chi).abs() / chi
        } else {
            fit.chi_hat.abs()
        };
        let c_rel_err = (fit.c_hat - amplitude).abs() / amplitude;
        faces.push(FaceFit {
            face_point: line.face_point,
            normal: line.normal,
            amplitude,
            fit,
            chi_rel_err,
            c_rel_err,
            samples,
        });
    }
    Ok(ProfileReport {
        chi,
        case: e.case(),
        layer: [d_min, d_max],
        h: u.grid.h(),
        chi_rel_err: faces.iter().map(|f| f.chi_rel_err).fold(0.0, f64::max),
        c_rel_err: faces.iter().map(|f| f.c_rel_err).fold(0.0, f64::max),
        faces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTrend {
    pub face_point: Vec<f64>,
    pub normal: Vec<f64>,
    pub amplitude: f64,
    /// `(d, (d + d₀)^{χ+1} ∇u·∇d / C)`
    pub values: Vec<(f64, f64)>,
    /// Fitted distance shift `d₀`.
    pub shift: f64,
    /// Limit of the values at the boundary.
    pub trend: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientRateReport {
    pub chi: f64,
    pub target: f64,
    pub layer: [f64; 2],
    pub h: f64,
    pub faces: Vec<FaceTrend>,
    pub rel_err: f64,
}

/// `d^{χ+1} ∇u·∇d / C` on the fit layer, extrapolated to the boundary.
///
/// If `∇u·∇d ≈ −A (d + d₀)^{−χ−1}` then `|∇u·∇d|^{−1/(χ+1)}` is linear in `d`
/// with slope `A^{−1/(χ+1)}`; a least-squares fit in `(1, d, h²/d)` gives the
/// slope, the shift `d₀` and absorbs the centered difference error. The trend
/// is `−A/C`, and `−χ` (or `−1` in the log case) is expected.
pub fn verify_gradient_rate(exp: &ErgodicExperiment, u: &GridFunction) -> Result<GradientRateReport> {
    let e = &exp.instance.exponents;
    if e.case() == BlowupCase::Logarithmic && !is_linear(&exp.instance.operator) {
        return Err(Error::UnsupportedCase(format!(
            "gradient rate for β = α + 2 needs a linear operator, got {}",
            exp.instance.operator.name()
        )));
    }
    let chi = e.chi();
    let target = if chi > 0.0 { -chi } else { -1.0 };
    let (d_min, d_max) = exp.layer_range();
    let h = u.grid.h();
    let mut faces = Vec::new();
    for line in face_lines(&u.grid, d_min, d_max) {
        if line.nodes.len() < MIN_SHELLS {
            return Err(Error::UnresolvedLayer {
                usable: line.nodes.len(),
                needed: MIN_SHELLS,
            });
        }
        let amplitude = amplitude_c(&exp.instance.operator, &line.normal, e)?;
        let slopes: Vec<(f64, f64)> = line
            .nodes
            .iter()
            .zip(&line.distances)
            .map(|(&n, &d)| (d, gradient_raw(&u.grid, &u.values, n).dot(&line.normal)))
            .collect();
        let (trend, shift) = if slopes.iter().all(|s| s.1 < 0.0) {
            let y: Vec<(f64, f64)> = slopes.iter().map(|&(d, g)| (d, (-g).powf(-1.0 / (chi + 1.0)))).collect();
            let [a, s, _] = line_fit(&y, h);
            (-s.powf(-(chi + 1.0)) / amplitude, a / s)
        } else {
            (f64::NAN, 0.0)
        };
        let values = slopes
            .iter()
            .map(|&(d, g)| (d, (d + shift).powf(chi + 1.0) * g / amplitude))
            .collect();
        faces.push(FaceTrend {
            face_point: line.face_point,
            normal: line.normal,
            amplitude,
            shift,
            trend,
            rel_err: (trend - target).abs() / target.abs(),
            values,
        });
    }
    Ok(GradientRateReport {
        chi,
        target,
        layer: [d_min, d_max],
        h,
        rel_err: faces.iter().map(|f| f.rel_err).fold(0.0, |m, r| if r.is_nan() { f64::INFINITY } else { m.max(r) }),
        faces,
    })
}

/// `[a, b, e]` in `y ≈ a + b d + e h²/d`.
fn line_fit(values: &[(f64, f64)], h: f64) -> [f64; 3] {
    let rows: Vec<[f64; 3]> = values.iter().map(|&(d, _)| [1.0, d, h * h / d]).collect();
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (r, &(_, v)) in rows.iter().zip(values) {
        for i in 0..3 {
            atb[i] += r[i] * v;
            for j in 0..3 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    solve3(ata, atb)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for k in 0..3 {
        let piv = (k..3).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap_or(k);
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..3 {
            let l = a[i][k] / a[k][k];
            for j in k..3 {
                a[i][j] -= l * a[k][j];
            }
            b[i] -= l * b[k];
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let s: f64 = (k + 1..3).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// One way of reaching a solution: boundary level and damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvePath {
    pub boundary_level: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub c: f64,
    pub paths: [SolvePath; 2],
    /// Mean of `u − v` over the core.
    pub mean_shift: f64,
    /// `max |u − v − m|` over the core.
    pub deviation: f64,
    pub core: Region,
    pub threshold: f64,
    pub passed: bool,
}

/// Checks the hypotheses under which solutions are unique up to constants:
/// `sup f < −c`, and `β < α + 2` unless the operator is linear. One- and
/// two-dimensional boxes qualify otherwise (the interval by its ODE reduction,
/// the rectangle by its connected boundary).
pub fn check_uniqueness_hypotheses(exp: &ErgodicExperiment, c: f64) -> Result<()> {
    let sup_f = exp
        .grid
        .interior_nodes()
        .iter()
        .map(|&n| exp.instance.f.eval(&exp.grid.coords(n)))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(sup_f < -c) {
        return Err(Error::HypothesisViolated(format!("sup f = {sup_f} is not below −c = {}", -c)));
    }
    if exp.instance.exponents.case() == BlowupCase::Logarithmic && !is_linear(&exp.instance.operator) {
        return Err(Error::HypothesisViolated("β = α + 2 with a nonlinear operator".into()));
    }
    Ok(())
}

/// `(m, max |u − v − m|)` over nodes of `core`, `m` the mean difference there.
pub fn constant_shift_deviation(u: &GridFunction, v: &GridFunction, core: &Region) -> Result<(f64, f64)> {
    if u.grid != v.grid {
        return Err(Error::InvalidGrid("solutions live on different grids".into()));
    }
    let tol = 1e-9 * u.grid.h();
    let diffs: Vec<f64> = (0..u.grid.len())
        .filter(|&n| core.contains(&u.grid.coords(n), tol))
        .map(|n| u.values[n] - v.values[n])
        .collect();
    if diffs.is_empty() {
        return Err(Error::EmptyRegion(0));
    }
    let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let dev = diffs.iter().fold(0.0f64, |a, d| a.max((d - m).abs()));
    Ok((m, dev))
}

/// Solves at `c` along two paths and compares the solutions up to a constant
/// on the inner half of the domain. `threshold = None` uses
/// `5·inner_tol·max(1, |u|∞) + h²`.
pub fn verify_uniqueness(
    exp: &ErgodicExperiment,
    c: f64,
    paths: [SolvePath; 2],
    warm: Option<&GridFunction>,
    threshold: Option<f64>,
) -> Result<UniquenessReport> {
    check_uniqueness_hypotheses(exp, c)?;
    let mut sols = Vec::new();
    for path in paths {
        let config = SolverConfig {
            theta: path.theta,
            ..exp.solver.clone()
        };
        let (u, _) = exp
            .solve_at(c, path.boundary_level, warm, &config)
            .map_err(|e| Error::LadderNonConvergence {
                rung: path.boundary_level,
                reason: e.to_string(),
            })?;
        sols.push(u);
    }
    let core = Region::inner(&exp.grid, 0.5);
    let (mean_shift, deviation) = constant_shift_deviation(&sols[0], &sols[1], &core)?;
    let threshold = threshold.unwrap_or_else(|| {
        let umax = sols[0].values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        5.0 * exp.solver.inner_tol * umax + exp.grid.h().powi(2)
    });
    Ok(UniquenessReport {
        c,
        paths,
        mean_shift,
        deviation,
        core,
        threshold,
        passed: deviation <= threshold,
    })
}

/// `u_δ(ζ) = δ^χ u(x₀ + δζ)` sampled on the image of `u`'s grid.
pub fn zoom(u: &GridFunction, origin: &[f64], delta: f64, chi: f64) -> Result<GridFunction> {
    let g = &u.grid;
    let lower: Vec<f64> = (0..g.dim()).map(|k| (g.lower()[k] - origin[k]) / delta).collect();
    let upper: Vec<f64> = (0..g.dim()).map(|k| (g.upper()[k] - origin[k]) / delta).collect();
    let grid = UniformGrid::new(g.counts(), &lower, &upper)?;
    let scale = delta.powf(chi);
    GridFunction::new(grid, u.values.iter().map(|v| scale * v).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescalingReport {
    pub delta: f64,
    pub origin: Vec<f64>,
    /// `δ^{β/(β−α−1)}`
    pub factor: f64,
    pub nodes_checked: usize,
    /// `max |R_δ(ζ) − factor·R(x)| / tol(x)` over matching nodes.
    pub worst_ratio: f64,
    pub max_violation: f64,
    pub passed: bool,
}

/// Checks node-wise that the residual of the zoomed field against the zoomed
/// problem (`f_δ = δ^{β/(β−α−1)}(f + c)(x₀ + δζ)`) is the scaled residual of
/// `u`. Tolerance per node: `h² + 1e−8·max(1, s)` with `s` the scaled size of
/// the terms entering the residual.
pub fn verify_rescaling(instance: &EquationInstance, c: f64, u: &GridFunction, origin: &[f64], delta: f64) -> Result<RescalingReport> {
    let e = &instance.exponents;
    let factor = rescale_residual_factor(e, delta)?;
    let shifted = instance.with_shifted_f(c);
    let zoomed_domain = {
        let d = &instance.domain;
        let lower = (0..d.dim()).map(|k| (d.lower[k] - origin[k]) / delta).collect();
        let upper = (0..d.dim()).map(|k| (d.upper[k] - origin[k]) / delta).collect();
        crate::model::BoxDomain::new(lower, upper)?
    };
    let zoomed = EquationInstance::new(
        instance.operator.clone(),
        *e,
        instance.b.zoomed(origin, delta, 1.0),
        shifted.f.zoomed(origin, delta, factor),
        zoomed_domain,
    )?;
    let ud = zoom(u, origin, delta, e.chi())?;
    let h = u.grid.h();
    let (mut worst_ratio, mut max_violation, mut checked) = (0.0f64, 0.0f64, 0);
    for n in u.grid.interior_nodes() {
        let x = u.grid.coords(n);
        let r = residual(&shifted, u, n)?;
        let rd = residual(&zoomed, &ud, n)?;
        let rhs = shifted.f.eval(&x);
        // r = lhs − rhs, so the size of the left-hand side is |r + rhs|
        let s = factor * ((r + rhs).abs() + rhs.abs());
        let tol = h * h + 1e-8 * s.max(1.0);
        let v = (rd - factor * r).abs();
        max_violation = max_violation.max(v);
        worst_ratio = worst_ratio.max(v / tol);
        checked += 1;
    }
    Ok(RescalingReport {
        delta,
        origin: origin.to_vec(),
        factor,
        nodes_checked: checked,
        worst_ratio,
        max_violation,
        passed: worst_ratio <= 1.0,
    })
}

/// `C d^{−χ}` (or `C |log d|`) with `d` the distance to the box boundary.
pub fn synthetic_profile(instance: &EquationInstance, amplitude: f64) -> ScalarField {
    let dom = instance.domain.clone();
    let chi = instance.exponents.chi();
    let log = instance.exponents.case() == BlowupCase::Logarithmic;
    ScalarField::from_fn("synthetic profile", move |x| {
        let d = dom.distance(x).max(1e-300);
        if log {
            amplitude * d.ln().abs()
        } else {
            amplitude * d.powf(-chi)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoxDomain, ExponentPair};

    fn experiment(beta: f64, h: f64) -> ErgodicExperiment {
        let inst = EquationInstance::new(
            OperatorSpec::trace(1.0).unwrap(),
            ExponentPair::new(0.0, beta).unwrap(),
            ScalarField::constant(1.0),
            ScalarField::constant(0.0),
            BoxDomain::interval(-1.0, 1.0).unwrap(),
        )
        .unwrap();
        let grid = UniformGrid::with_spacing(&inst.domain, h).unwrap();
        ErgodicExperiment::new(inst, grid, vec![10.0, 15.0, 20.0]).unwrap()
    }

    fn sampled(exp: &ErgodicExperiment, amplitude: f64) -> GridFunction {
        let field = synthetic_profile(&exp.instance, amplitude);
        let mut u = exp.grid.sample(|x| field.eval(x));
        for n in exp.grid.boundary_nodes() {
            u.values[n] = 0.0;
        }
        u
    }

    #[test]
    fn synthetic_power_profile_fits_exactly() {
        let exp = experiment(1.5, 1.0 / 400.0);
        let rep = blowup_profile_of(&exp, &sampled(&exp, 4.0)).unwrap();
        assert!(rep.chi_rel_err < 1e-8 && rep.c_rel_err < 1e-8, "{rep:?}");
        assert_eq!(rep.faces.len(), 2);
    }

    #[test]
    fn synthetic_log_profile_fits_exactly() {
        let exp = experiment(2.0, 1.0 / 400.0);
        let rep = blowup_profile_of(&exp, &sampled(&exp, 1.0)).unwrap();
        assert!(rep.c_rel_err < 1e-10, "{rep:?}");
    }

    #[test]
    fn synthetic_gradient_rate() {
        let exp = experiment(1.5, 1.0 / 400.0);
        let rep = verify_gradient_rate(&exp, &sampled(&exp, 4.0)).unwrap();
        // what is left is the (h/d)⁴ part of the stencil error
        assert!(rep.rel_err < 1e-4, "{rep:?}");
    }

    #[test]
    fn shifted_profile_is_recovered() {
        let exp = experiment(1.5, 1.0 / 400.0);
        let d0 = 1.3 / 400.0;
        let mut u = exp.grid.sample(|x| 4.0 / (1.0 - x[0].abs() + d0));
        for n in exp.grid.boundary_nodes() {
            u.values[n] = 0.0;
        }
        let rate = verify_gradient_rate(&exp, &u).unwrap();
        assert!(rate.rel_err < 1e-3, "{rate:?}");
        assert!((rate.faces[0].shift - d0).abs() < 0.05 * d0, "{rate:?}");
        let prof = blowup_profile_of(&exp, &u).unwrap();
        assert!(prof.chi_rel_err < 1e-6 && prof.c_rel_err < 1e-6, "{prof:?}");
    }

    #[test]
    fn coarse_grid_is_unresolved() {
        let exp = experiment(1.5, 1.0 / 8.0);
        let r = blowup_profile_of(&exp, &sampled(&exp, 4.0));
        assert!(matches!(r, Err(Error::UnresolvedLayer { .. })), "{r:?}");
    }

    #[test]
    fn constant_shift_has_zero_deviation() {
        let exp = experiment(2.0, 1.0 / 100.0);
        let u = sampled(&exp, 1.0);
        let mut v = u.clone();
        for x in &mut v.values {
            *x += 7.0;
        }
        let (m, dev) = constant_shift_deviation(&u, &v, &Region::inner(&exp.grid, 0.5)).unwrap();
        assert!((m + 7.0).abs() < 1e-12 && dev < 1e-12);
    }

    #[test]
    fn hypotheses_are_checked() {
        let exp = experiment(2.0, 1.0 / 100.0);
        assert!(check_uniqueness_hypotheses(&exp, -2.0).is_ok());
        assert!(matches!(check_uniqueness_hypotheses(&exp, 0.5), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn nonlinear_log_case_is_unsupported() {
        let inst = EquationInstance::new(
            OperatorSpec::pucci_plus(1.0, 2.0).unwrap(),
            ExponentPair::new(0.0, 2.0).unwrap(),
            ScalarField::constant(1.0),
            ScalarField::constant(0.0),
            BoxDomain::interval(-1.0, 1.0).unwrap(),
        )
        .unwrap();
        let grid = UniformGrid::with_spacing(&inst.domain, 0.01).unwrap();
        let r = ErgodicExperiment::new(inst, grid, vec![10.0]);
        assert!(matches!(r, Err(Error::UnsupportedCase(_))));
    }

    #[test]
    fn line_fit_recovers_coefficients() {
        let h = 0.01;
        let v: Vec<(f64, f64)> = (4..40).map(|k| k as f64 * h).map(|d| (d, -1.0 + 0.3 * d + 0.05 * h * h / d)).collect();
        let [a, b, e] = line_fit(&v, h);
        assert!((a + 1.0).abs() < 1e-12 && (b - 0.3).abs() < 1e-10 && (e - 0.05).abs() < 1e-8);
    }
}
