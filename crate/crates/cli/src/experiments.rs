//! One function per experiment kind. Each returns the report body, whether
//! all its checks passed, and the artifacts to write (relative path, bytes).

use serde::Serialize;
use serde_json::{json, Value};

use ergolab::config::{ExperimentKind, RunConfig};
use ergolab::ergodic::{
    self, check_uniqueness_hypotheses, estimate_ergodic_constant, verify_gradient_rate, verify_rescaling,
    verify_uniqueness, ErgodicEstimate, SolvePath,
};
use ergolab::operators::{
    check_homogeneity, check_pucci_duality, check_pucci_sandwich, check_uniform_ellipticity, MatrixSampler,
    PropertyReport,
};
use ergolab::oracle1d::{ergodic_constant_1d_with, shoot_blowup_with, ShootOptions};
use ergolab::solver::{solve_dirichlet, SolveReport};
use ergolab::{EllipticityBounds, EquationInstance, Error, ErgodicData, GridFunction, OperatorSpec, Result, SymMatrix};

#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub passed: bool,
    pub files: Vec<(String, Vec<u8>)>,
}

pub fn run_experiment(kind: ExperimentKind, cfg: &RunConfig) -> Result<Outcome> {
    match kind {
        ExperimentKind::Solve => solve(cfg),
        ExperimentKind::Convergence => convergence(cfg),
        ExperimentKind::Ergodic => ergodic_run(cfg),
        ExperimentKind::Asymptotics => asymptotics(cfg),
        ExperimentKind::PropertySuite => property_suite(cfg),
        ExperimentKind::Oracle => oracle(cfg),
    }
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn solution_files(dir: &str, u: &GridFunction) -> Result<Vec<(String, Vec<u8>)>> {
    let mut csv = Vec::new();
    u.write_csv(&mut csv)?;
    let mut bin = Vec::new();
    u.write_snapshot(&mut bin)?;
    Ok(vec![(format!("{dir}/solution.csv"), csv), (format!("{dir}/solution.bin"), bin)])
}

fn center(inst: &EquationInstance) -> Vec<f64> {
    let d = &inst.domain;
    (0..d.dim()).map(|k| 0.5 * (d.lower[k] + d.upper[k])).collect()
}

#[derive(Debug, Serialize)]
struct ProbeValue {
    point: Vec<f64>,
    value: Option<f64>,
    exact: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SolveRun {
    cells: usize,
    h: f64,
    error: Option<String>,
    report: Option<SolveReport>,
    probes: Vec<ProbeValue>,
    /// Max-norm error against the exact solution, when one is given.
    max_error: Option<f64>,
}

fn solve_all(cfg: &RunConfig) -> Result<(Vec<SolveRun>, Vec<(String, Vec<u8>)>)> {
    let inst = cfg.instance()?;
    let dir = cfg.dirichlet.clone().unwrap_or_default();
    let boundary = dir.boundary_field()?;
    let exact = dir.exact.as_ref().map(|e| e.to_field()).transpose()?;
    let probes = if dir.probes.is_empty() { vec![center(&inst)] } else { dir.probes.clone() };
    let mut runs = Vec::new();
    let mut files = Vec::new();
    for (&cells, grid) in cfg.grid_sizes.iter().zip(cfg.grids(&inst.domain)?) {
        let h = grid.h();
        match solve_dirichlet(&inst, &grid, &boundary, &cfg.solver) {
            Ok((u, report)) => {
                let max_error = exact.as_ref().map(|ex| {
                    (0..u.grid.len())
                        .map(|n| (u.values[n] - ex.eval(&u.grid.coords(n))).abs())
                        .fold(0.0, f64::max)
                });
                let probes = probes
                    .iter()
                    .map(|p| ProbeValue {
                        point: p.clone(),
                        value: u.value_at(p),
                        exact: exact.as_ref().map(|ex| ex.eval(p)),
                    })
                    .collect();
                files.extend(solution_files(&format!("n{cells}"), &u)?);
                runs.push(SolveRun {
                    cells,
                    h,
                    error: None,
                    report: Some(report),
                    probes,
                    max_error,
                });
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => runs.push(SolveRun {
                cells,
                h,
                error: Some(e.to_string()),
                report: None,
                probes: Vec::new(),
                max_error: None,
            }),
        }
    }
    Ok((runs, files))
}

fn solve(cfg: &RunConfig) -> Result<Outcome> {
    let (runs, files) = solve_all(cfg)?;
    let passed = runs.iter().all(|r| r.report.as_ref().is_some_and(|s| s.converged));
    Ok(Outcome {
        results: json!({ "runs": value(&runs) }),
        passed,
        files,
    })
}

#[derive(Debug, Serialize)]
struct ConvergenceRow {
    cells: usize,
    h: f64,
    max_error: Option<f64>,
    /// Observed order against the previous row.
    order: Option<f64>,
}

/// Observed orders `log(e₁/e₂)/log(h₁/h₂)` between consecutive rows.
pub fn observed_orders(hs: &[f64], errors: &[f64]) -> Vec<f64> {
    hs.windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

fn convergence(cfg: &RunConfig) -> Result<Outcome> {
    let (runs, files) = solve_all(cfg)?;
    let errors: Vec<Option<f64>> = runs.iter().map(|r| r.max_error).collect();
    let complete: Option<Vec<f64>> = errors.iter().copied().collect();
    let orders = complete
        .as_ref()
        .map(|e| observed_orders(&runs.iter().map(|r| r.h).collect::<Vec<_>>(), e));
    let rows: Vec<ConvergenceRow> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| ConvergenceRow {
            cells: r.cells,
            h: r.h,
            max_error: r.max_error,
            order: orders.as_ref().and_then(|o| i.checked_sub(1).map(|j| o[j])),
        })
        .collect();
    let decreasing = complete.as_ref().is_some_and(|e| e.windows(2).all(|w| w[1] < w[0]));
    let min_order = orders.as_ref().map(|o| o.iter().copied().fold(f64::INFINITY, f64::min));
    let passed = decreasing && min_order.is_some_and(|o| o >= 1.0);
    Ok(Outcome {
        results: json!({
            "rows": value(&rows),
            "decreasing": decreasing,
            "min_order": min_order,
            "runs": value(&runs),
        }),
        passed,
        files,
    })
}

/// Oracle constant when the instance is the 1D problem the shooting covers.
fn oracle_constant(inst: &EquationInstance) -> Option<Result<f64>> {
    oracle_applicable(inst).ok()?;
    Some(ergodic_constant_1d_with(&inst.exponents, &inst.f, &ShootOptions::default()).map(|r| r.c))
}

/// The shooting reduction needs `(−1, 1)`, `F = trace(1)`, `b ≡ 1` and even `f`.
pub fn oracle_applicable(inst: &EquationInstance) -> Result<()> {
    let d = &inst.domain;
    if d.dim() != 1 || d.lower[0] != -1.0 || d.upper[0] != 1.0 {
        return Err(Error::UnsupportedCase("oracle needs the interval (−1, 1)".into()));
    }
    if inst.operator != (OperatorSpec::ScaledTrace { a: 1.0 }) || inst.b.as_constant() != Some(1.0) {
        return Err(Error::UnsupportedCase("oracle needs F = trace(1) and b ≡ 1".into()));
    }
    let even = (0..=100).map(|k| k as f64 / 100.0).all(|x| {
        let (p, m) = (inst.f.eval(&[x]), inst.f.eval(&[-x]));
        (p - m).abs() <= 1e-12 * (1.0 + p.abs())
    });
    if !even {
        return Err(Error::UnsupportedCase("oracle needs an even f".into()));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ErgodicRun {
    cells: usize,
    h: f64,
    error: Option<String>,
    c_est: Option<f64>,
    estimate: Option<ErgodicEstimate>,
    oracle_c: Option<f64>,
    oracle_error: Option<String>,
    uniqueness: Option<Value>,
}

fn ergodic_run(cfg: &RunConfig) -> Result<Outcome> {
    let inst = cfg.instance()?;
    let oracle = oracle_constant(&inst);
    let mut runs = Vec::new();
    let mut files = Vec::new();
    let mut passed = true;
    for (&cells, grid) in cfg.grid_sizes.iter().zip(cfg.grids(&inst.domain)?) {
        let h = grid.h();
        let exp = cfg.ergodic_experiment(grid)?;
        let mut run = ErgodicRun {
            cells,
            h,
            error: None,
            c_est: None,
            estimate: None,
            oracle_c: oracle.as_ref().and_then(|o| o.as_ref().ok().copied()),
            oracle_error: oracle.as_ref().and_then(|o| o.as_ref().err().map(|e| e.to_string())),
            uniqueness: None,
        };
        match estimate_ergodic_constant(&exp, cfg.ergodic.tol) {
            Ok((c, est)) => {
                run.c_est = Some(c);
                passed &= est.ladder_consistent;
                if let Some(u) = &est.solution {
                    files.extend(solution_files(&format!("n{cells}"), u)?);
                }
                if let Some(level) = cfg.ergodic.uniqueness_level {
                    let c_hi = est.bracket[1];
                    let paths = [
                        SolvePath {
                            boundary_level: exp.ladder[0],
                            theta: cfg.solver.theta,
                        },
                        // a level shift alone is an exact symmetry of the scheme
                        SolvePath {
                            boundary_level: level,
                            theta: 0.5 * cfg.solver.theta,
                        },
                    ];
                    run.uniqueness = Some(match verify_uniqueness(&exp, c_hi, paths, None, None) {
                        Ok(r) => {
                            passed &= r.passed;
                            value(&r)
                        }
                        Err(Error::HypothesisViolated(m)) => json!({ "inapplicable": m }),
                        Err(e) => {
                            passed = false;
                            json!({ "error": e.to_string() })
                        }
                    });
                }
                run.estimate = Some(est);
            }
            Err(e) => {
                passed = false;
                run.error = Some(e.to_string());
            }
        }
        runs.push(run);
    }
    Ok(Outcome {
        results: json!({ "runs": value(&runs) }),
        passed,
        files,
    })
}

#[derive(Debug, Serialize)]
struct AsymptoticsRun {
    cells: usize,
    h: f64,
    error: Option<String>,
    c_est: Option<f64>,
    bracket: Option<[f64; 2]>,
    chi_hat: Vec<f64>,
    c_hat: Vec<f64>,
    gradient_trend: Vec<f64>,
    profile: Option<Value>,
    gradient: Option<Value>,
    rescaling: Vec<Value>,
    uniqueness_deviation: Option<f64>,
    passed: bool,
}

fn asymptotics(cfg: &RunConfig) -> Result<Outcome> {
    let inst = cfg.instance()?;
    let tol = cfg.ergodic.fit_tol;
    let faces = ErgodicData::for_instance(&inst, None)?;
    let mut runs = Vec::new();
    let mut files = Vec::new();
    for (&cells, grid) in cfg.grid_sizes.iter().zip(cfg.grids(&inst.domain)?) {
        let h = grid.h();
        let exp = cfg.ergodic_experiment(grid)?;
        let mut run = AsymptoticsRun {
            cells,
            h,
            error: None,
            c_est: None,
            bracket: None,
            chi_hat: Vec::new(),
            c_hat: Vec::new(),
            gradient_trend: Vec::new(),
            profile: None,
            gradient: None,
            rescaling: Vec::new(),
            uniqueness_deviation: None,
            passed: true,
        };
        let (c, est) = match estimate_ergodic_constant(&exp, cfg.ergodic.tol) {
            Ok(v) => v,
            Err(e) => {
                run.error = Some(e.to_string());
                run.passed = false;
                runs.push(run);
                continue;
            }
        };
        run.c_est = Some(c);
        run.bracket = Some(est.bracket);
        let Some(u) = est.solution.as_ref() else {
            run.error = Some("no solution at the solvable end of the bracket".into());
            run.passed = false;
            runs.push(run);
            continue;
        };
        files.extend(solution_files(&format!("n{cells}"), u)?);
        match ergodic::blowup_profile_of(&exp, u) {
            Ok(p) => {
                run.chi_hat = p.faces.iter().map(|f| f.fit.chi_hat).collect();
                run.c_hat = p.faces.iter().map(|f| f.fit.c_hat).collect();
                let chi_ok = inst.exponents.chi() == 0.0 || p.chi_rel_err <= tol;
                run.passed &= chi_ok && p.c_rel_err <= tol;
                let mut csv = Vec::new();
                p.write_csv(&mut csv)?;
                files.push((format!("n{cells}/profile.csv"), csv));
                run.profile = Some(value(&p));
            }
            Err(e) => {
                run.passed = false;
                run.profile = Some(json!({ "error": e.to_string() }));
            }
        }
        match verify_gradient_rate(&exp, u) {
            Ok(g) => {
                run.gradient_trend = g.faces.iter().map(|f| f.trend).collect();
                run.passed &= g.rel_err <= tol;
                run.gradient = Some(value(&g));
            }
            Err(Error::UnsupportedCase(m)) => run.gradient = Some(json!({ "unsupported": m })),
            Err(e) => {
                run.passed = false;
                run.gradient = Some(json!({ "error": e.to_string() }));
            }
        }
        for (origin, _) in &faces.c_of_x {
            for &delta in &cfg.ergodic.rescaling {
                match verify_rescaling(&inst, est.bracket[1], u, origin, delta) {
                    Ok(r) => {
                        run.passed &= r.passed;
                        run.rescaling.push(value(&r));
                    }
                    Err(e) => {
                        run.passed = false;
                        run.rescaling.push(json!({ "delta": delta, "error": e.to_string() }));
                    }
                }
            }
        }
        if let Some(level) = cfg.ergodic.uniqueness_level {
            if check_uniqueness_hypotheses(&exp, est.bracket[1]).is_ok() {
                let paths = [
                    SolvePath {
                        boundary_level: exp.ladder[0],
                        theta: cfg.solver.theta,
                    },
                    SolvePath {
                        boundary_level: level,
                        theta: 0.5 * cfg.solver.theta,
                    },
                ];
                match verify_uniqueness(&exp, est.bracket[1], paths, None, None) {
                    Ok(r) => {
                        run.passed &= r.passed;
                        run.uniqueness_deviation = Some(r.deviation);
                    }
                    Err(e) => {
                        run.passed = false;
                        run.error = Some(e.to_string());
                    }
                }
            }
        }
        runs.push(run);
    }
    let passed = runs.iter().all(|r| r.passed);
    Ok(Outcome {
        results: json!({ "runs": value(&runs), "fit_tol": tol }),
        passed,
        files,
    })
}

/// Control matrices with spectra spread over `[a, A]`.
pub fn bellman_family(bounds: EllipticityBounds, dim: usize, count: usize, seed: u64) -> Result<Vec<SymMatrix>> {
    let mut sampler = MatrixSampler::new(seed);
    let mut out = Vec::new();
    for _ in 0..count {
        let g = sampler.gram(dim);
        let ev = g.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        let id = SymMatrix::identity(dim)?;
        let q = if hi - lo > 1e-12 {
            id.scale(bounds.a - lo * (bounds.big_a - bounds.a) / (hi - lo))
                .add(&g.scale((bounds.big_a - bounds.a) / (hi - lo)))?
        } else {
            id.scale(bounds.a)
        };
        out.push(q);
    }
    Ok(out)
}

fn property_suite(cfg: &RunConfig) -> Result<Outcome> {
    let p = &cfg.property;
    let seed = cfg.seed;
    let bounds = EllipticityBounds::new(p.a, p.big_a)?;
    let bellman = bellman_family(bounds, p.dim, p.bellman_matrices, seed.wrapping_add(1))?;
    let operators = [
        OperatorSpec::trace(p.a)?,
        OperatorSpec::PucciPlus(bounds),
        OperatorSpec::PucciMinus(bounds),
        OperatorSpec::bellman_max(p.a, p.big_a, bellman)?,
    ];
    let mut checks: Vec<PropertyReport> = Vec::new();
    for op in &operators {
        checks.push(check_uniform_ellipticity(op, p.trials, seed)?);
        checks.push(check_homogeneity(op, p.trials, seed)?);
        checks.push(check_pucci_sandwich(op, p.trials, seed)?);
    }
    checks.push(check_pucci_duality(bounds, p.trials, seed)?);
    let passed = checks.iter().all(|c| c.all_passed());
    Ok(Outcome {
        results: json!({
            "operators": value(&operators),
            "checks": value(&checks),
        }),
        passed,
        files: Vec::new(),
    })
}

fn oracle(cfg: &RunConfig) -> Result<Outcome> {
    let inst = cfg.instance()?;
    oracle_applicable(&inst)?;
    let opts = ShootOptions::default();
    let base = ergodic_constant_1d_with(&inst.exponents, &inst.f, &opts)?;
    let refined = if cfg.oracle.refine {
        Some(ergodic_constant_1d_with(&inst.exponents, &inst.f, &opts.refined())?)
    } else {
        None
    };
    let shots = cfg
        .oracle
        .shots
        .iter()
        .map(|&c| shoot_blowup_with(&inst.exponents, c, &inst.f, &opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome {
        results: json!({
            "c": base.c,
            "ergodic": value(&base),
            "refined": value(&refined),
            "refinement_change": refined.as_ref().map(|r| (r.c - base.c).abs()),
            "shots": value(&shots),
        }),
        passed: true,
        files: Vec::new(),
    })
}
