//! One-dimensional reference solutions: the closed-form Dirichlet profile,
//! blow-up shooting for the ergodic ODE `|p|^α p' = |p|^β − (f + c)`, the
//! ergodic constant by bisection, and blow-up profile fits.
//!
//! Shooting integrates `w = |p|^α p` instead of `p`: `w' = (1+α)(|p|^β − f − c)`
//! is smooth through `p = 0`, so the launch from `p(0) = 0` needs no special
//! first step (one RK4 step from `w = 0` reproduces the local balance
//! `p ≈ ((1+α)|f + c| x)^{1/(1+α)}` exactly when `f` is constant).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlowupCase, ExponentPair, ScalarField};

/// Even solution of `−|u'|^α u'' = c₀` on `[−1, 1]` with `u(±1) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactDirichlet {
    pub alpha: f64,
    pub c0: f64,
}

pub fn exact_dirichlet_1d(alpha: f64, c0: f64) -> Result<ExactDirichlet> {
    if !(alpha > -1.0) || !alpha.is_finite() {
        return Err(Error::OutOfRange {
            what: "alpha",
            detail: format!("need α > −1, got {alpha}"),
        });
    }
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::OutOfRange {
            what: "c0",
            detail: format!("need c₀ > 0, got {c0}"),
        });
    }
    Ok(ExactDirichlet { alpha, c0 })
}

impl ExactDirichlet {
    /// `((1+α)c₀)^{1/(1+α)}·(1+α)/(2+α)·(1 − |x|^{(2+α)/(1+α)})`.
    pub fn eval(&self, x: f64) -> f64 {
        let a = self.alpha;
        ((1.0 + a) * self.c0).powf(1.0 / (1.0 + a)) * (1.0 + a) / (2.0 + a)
            * (1.0 - x.abs().powf((2.0 + a) / (1.0 + a)))
    }

    /// `u'(x)`, from `|u'|^α u' = −(1+α)c₀x`.
    pub fn derivative(&self, x: f64) -> f64 {
        let w = -(1.0 + self.alpha) * self.c0 * x;
        w.signum() * w.abs().powf(1.0 / (1.0 + self.alpha))
    }

    pub fn as_field(&self) -> ScalarField {
        let me = *self;
        ScalarField::from_fn("exact dirichlet", move |p| me.eval(p[0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootState {
    pub x: f64,
    /// `u'(x)`
    pub p: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootOptions {
    /// Bound on the relative change of `w` per step.
    pub rel_step: f64,
    pub h_max: f64,
    /// Switch to the closed-form tail once `p` exceeds this.
    pub p_tail: f64,
    /// Past this `x` with `p` still bounded the shot counts as not blowing up.
    pub x_limit: f64,
    pub max_steps: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            rel_step: 2e-3,
            h_max: 1e-3,
            p_tail: 1e6,
            x_limit: 10.0,
            max_steps: 10_000_000,
        }
    }
}

impl ShootOptions {
    /// Same options with every step bound halved.
    pub fn refined(&self) -> Self {
        Self {
            rel_step: 0.5 * self.rel_step,
            h_max: 0.5 * self.h_max,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_step > 0.0 && self.h_max > 0.0 && self.p_tail > 1.0 && self.x_limit > 0.0) {
            return Err(Error::OutOfRange {
                what: "shoot options",
                detail: format!("{self:?}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    /// Blow-up location; `None` when `p` stays bounded up to `x_limit`.
    pub x_star: Option<f64>,
    pub steps: usize,
    pub tolerances: ShootOptions,
}

impl ShootResult {
    pub fn x_star_or_inf(&self) -> f64 {
        self.x_star.unwrap_or(f64::INFINITY)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

struct Shooter<'a> {
    alpha: f64,
    beta: f64,
    c: f64,
    f: &'a ScalarField,
}

impl Shooter<'_> {
    fn p_of(&self, w: f64) -> f64 {
        w.signum() * w.abs().powf(1.0 / (1.0 + self.alpha))
    }

    /// `(w', u')` at `(x, w)`.
    fn rhs(&self, x: f64, w: f64) -> (f64, f64) {
        let p = self.p_of(w);
        let dw = (1.0 + self.alpha) * (p.abs().powf(self.beta) - self.f.eval(&[x]) - self.c);
        (dw, p)
    }

    fn rk4(&self, x: f64, w: f64, u: f64, h: f64) -> (f64, f64) {
        let (k1, l1) = self.rhs(x, w);
        let (k2, l2) = self.rhs(x + 0.5 * h, w + 0.5 * h * k1);
        let (k3, l3) = self.rhs(x + 0.5 * h, w + 0.5 * h * k2);
        let (k4, l4) = self.rhs(x + h, w + h * k3);
        (
            w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
            u + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4),
        )
    }

    /// `∫_p^∞ q^α / (q^β − s) dq` for large `p`, two terms of the expansion in `s q^{−β}`.
    fn tail(&self, p: f64, s: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        p.powf(1.0 + a - b) / (b - a - 1.0) + s * p.powf(1.0 + a - 2.0 * b) / (2.0 * b - a - 1.0)
    }

    fn run(&self, opts: &ShootOptions, mut trace: Option<&mut Vec<ShootState>>) -> Result<ShootResult> {
        opts.validate()?;
        let s0 = self.f.eval(&[0.0]) + self.c;
        if !(s0 < 0.0) {
            return Err(Error::InvalidRegime(format!(
                "f(0) + c = {s0} ≥ 0, p cannot leave 0 upward"
            )));
        }
        // natural scale of w near the launch
        let w_scale = (1.0 + self.alpha) * s0.abs() * opts.h_max;
        let (mut x, mut w, mut u) = (0.0, 0.0, 0.0);
        let mut steps = 0;
        let result = |x_star, steps| ShootResult {
            alpha: self.alpha,
            beta: self.beta,
            c: self.c,
            x_star,
            steps,
            tolerances: *opts,
        };
        loop {
            if let Some(t) = trace.as_deref_mut() {
                t.push(ShootState { x, p: self.p_of(w), u });
            }
            let p = self.p_of(w);
            if p > opts.p_tail {
                let s = self.f.eval(&[x]) + self.c;
                return Ok(result(Some(x + self.tail(p, s)), steps));
            }
            if x > opts.x_limit {
                return Ok(result(None, steps));
            }
            if steps >= opts.max_steps {
                return Err(Error::NonConvergence {
                    stage: 0,
                    iterations: steps,
                    reason: format!("shooting reached {steps} steps at x = {x}, p = {p}"),
                });
            }
            let (dw, _) = self.rhs(x, w);
            let h = opts.h_max.min(opts.rel_step * (w.abs() + w_scale) / dw.abs().max(1e-300));
            (w, u) = self.rk4(x, w, u, h);
            x += h;
            steps += 1;
            if !w.is_finite() {
                return Err(Error::NonConvergence {
                    stage: 0,
                    iterations: steps,
                    reason: format!("non-finite state at x = {x}"),
                });
            }
        }
    }
}

/// Blow-up location of `p' |p|^α = |p|^β − (f + c)` launched from `p(0) = 0`.
pub fn shoot_blowup(exponents: &ExponentPair, c: f64, f: &ScalarField) -> Result<ShootResult> {
    shoot_blowup_with(exponents, c, f, &ShootOptions::default())
}

pub fn shoot_blowup_with(exponents: &ExponentPair, c: f64, f: &ScalarField, opts: &ShootOptions) -> Result<ShootResult> {
    shooter(exponents, c, f).run(opts, None)
}

/// Accepted states of a shot, from `x = 0` to the last step before the tail.
pub fn shoot_profile(exponents: &ExponentPair, c: f64, f: &ScalarField, opts: &ShootOptions) -> Result<(ShootResult, Vec<ShootState>)> {
    let mut trace = Vec::new();
    let r = shooter(exponents, c, f).run(opts, Some(&mut trace))?;
    Ok((r, trace))
}

fn shooter<'a>(exponents: &ExponentPair, c: f64, f: &'a ScalarField) -> Shooter<'a> {
    Shooter {
        alpha: exponents.alpha(),
        beta: exponents.beta(),
        c,
        f,
    }
}

/// `x*` for constant `f + c = −s < 0`:
/// `s^{(1+α−β)/β}·(π/β)/sin(π(1+α)/β)`.
pub fn blowup_location_constant(exponents: &ExponentPair, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidRegime(format!("need f + c < 0, got {}", -s)));
    }
    let (a, b) = (exponents.alpha(), exponents.beta());
    let pi = std::f64::consts::PI;
    Ok(s.powf((1.0 + a - b) / b) * (pi / b) / (pi * (1.0 + a) / b).sin())
}

const C_FLOOR: f64 = -1e6;

fn sup_on_unit(f: &ScalarField) -> f64 {
    if let Some(v) = f.as_constant() {
        return v;
    }
    (0..=2000).map(|k| f.eval(&[k as f64 / 2000.0])).fold(f64::NEG_INFINITY, f64::max)
}

/// Ergodic constant on `(−1, 1)` for even `f`: the `c` with `x*(c) = 1`.
pub fn ergodic_constant_1d(exponents: &ExponentPair, f: &ScalarField) -> Result<f64> {
    Ok(ergodic_constant_1d_with(exponents, f, &ShootOptions::default())?.c)
}

/// As [`ergodic_constant_1d`], returning the final shot.
pub fn ergodic_constant_1d_with(exponents: &ExponentPair, f: &ScalarField, opts: &ShootOptions) -> Result<ShootResult> {
    let top = -sup_on_unit(f) - 1e-9;
    let x_at = |c: f64| -> Result<ShootResult> { shoot_blowup_with(exponents, c, f, opts) };
    let mut hi = top;
    let hi_shot = x_at(hi)?;
    if hi_shot.x_star_or_inf() <= 1.0 {
        return Err(Error::BracketFailure(format!(
            "x*(c) = {} ≤ 1 already at c = {hi}",
            hi_shot.x_star_or_inf()
        )));
    }
    // walk down until the blow-up comes before 1
    let mut gap: f64 = 1.0;
    let mut lo = top - gap;
    let mut best = loop {
        if lo < C_FLOOR {
            lo = C_FLOOR;
        }
        let shot = x_at(lo)?;
        if shot.x_star_or_inf() <= 1.0 {
            break shot;
        }
        if lo == C_FLOOR {
            return Err(Error::BracketFailure(format!(
                "no sign change of x*(c) − 1 in [{C_FLOOR}, {top}]"
            )));
        }
        hi = lo;
        gap *= 2.0;
        lo = top - gap;
    };
    let mut best_gap = (best.x_star_or_inf() - 1.0).abs();
    for _ in 0..200 {
        if best_gap <= 1e-8 || hi - lo <= 1e-14 * lo.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let shot = x_at(mid)?;
        let xs = shot.x_star_or_inf();
        if (xs - 1.0).abs() < best_gap {
            best_gap = (xs - 1.0).abs();
            best = shot.clone();
        }
        // x* grows with c
        if xs > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if best_gap > 1e-8 {
        return Err(Error::BracketFailure(format!(
            "bisection stalled with |x* − 1| = {best_gap:e} on [{lo}, {hi}]"
        )));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub chi_hat: f64,
    pub c_hat: f64,
    /// Additive constant, when fitted.
    pub offset: f64,
    /// Distance shift `d₀` in `d + d₀`, when fitted.
    pub shift: f64,
    pub samples: usize,
    /// `max d / min d`
    pub span: f64,
    /// Root mean square of the relative fit residual.
    pub rms_residual: f64,
}

fn check_samples(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 8 {
        return Err(Error::InsufficientSpan(format!("{} samples, need at least 8", samples.len())));
    }
    if samples.iter().any(|(d, u)| !(*d > 0.0) || !u.is_finite()) {
        return Err(Error::InsufficientSpan("distances must be positive and values finite".into()));
    }
    let dmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let dmax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let span = dmax / dmin;
    if span < 10.0 - 1e-9 {
        return Err(Error::InsufficientSpan(format!("d spans a factor {span:.3}, need a decade")));
    }
    Ok(span)
}

/// Weighted least squares for `y ≈ a + b t`; returns `(a, b)`.
fn line_fit(t: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mt = t.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut stt, mut sty) = (0.0, 0.0);
    for ((ti, yi), wi) in t.iter().zip(y).zip(w) {
        stt += wi * (ti - mt) * (ti - mt);
        sty += wi * (ti - mt) * (yi - my);
    }
    let b = sty / stt;
    (my - b * mt, b)
}

/// Fits `u = C d^{−χ}` (log-log line) or `u = C |log d| + K`.
pub fn blowup_profile_fit(samples: &[(f64, f64)], case: BlowupCase) -> Result<ProfileFit> {
    let span = check_samples(samples)?;
    let ones = vec![1.0; samples.len()];
    match case {
        BlowupCase::Power => {
            if samples.iter().any(|s| !(s.1 > 0.0)) {
                return Err(Error::InsufficientSpan("power fit needs positive values".into()));
            }
            let t: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
            let y: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
            let (a, b) = line_fit(&t, &y, &ones);
            let (chi_hat, c_hat) = (-b, a.exp());
            let rms = rms(samples, |d| c_hat * d.powf(-chi_hat));
            Ok(ProfileFit {
                chi_hat,
                c_hat,
                offset: 0.0,
                shift: 0.0,
                samples: samples.len(),
                span,
                rms_residual: rms,
            })
        }
        BlowupCase::Logarithmic => log_fit(samples, span),
    }
}

fn log_fit(samples: &[(f64, f64)], span: f64) -> Result<ProfileFit> {
    let t: Vec<f64> = samples.iter().map(|s| s.0.ln().abs()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (k, c_hat) = line_fit(&t, &y, &vec![1.0; samples.len()]);
    Ok(ProfileFit {
        chi_hat: 0.0,
        c_hat,
        offset: k,
        shift: 0.0,
        samples: samples.len(),
        span,
        rms_residual: rms(samples, |d| c_hat * d.ln().abs() + k),
    })
}

fn rms(samples: &[(f64, f64)], model: impl Fn(f64) -> f64) -> f64 {
    let s: f64 = samples
        .iter()
        .map(|(d, u)| {
            let r = (model(*d) - u) / u.abs().max(1e-300);
            r * r
        })
        .sum();
    (s / samples.len() as f64).sqrt()
}

/// Like [`blowup_profile_fit`] but with a free additive constant in the power
/// case, `u = C d^{−χ} + K`: solutions of the ergodic problem are only defined
/// up to constants, and the constant bends a log-log line.
pub fn blowup_profile_fit_offset(samples: &[(f64, f64)], case: BlowupCase) -> Result<ProfileFit> {
    let span = check_samples(samples)?;
    if case == BlowupCase::Logarithmic {
        return log_fit(samples, span);
    }
    // relative residual weights
    let w: Vec<f64> = samples.iter().map(|s| 1.0 / s.1.abs().max(1e-300).powi(2)).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let fit_at = |chi: f64| -> (f64, f64, f64) {
        let t: Vec<f64> = samples.iter().map(|s| s.0.powf(-chi)).collect();
        let (k, c) = line_fit(&t, &y, &w);
        let err: f64 = t.iter().zip(&y).zip(&w).map(|((ti, yi), wi)| wi * (k + c * ti - yi).powi(2)).sum();
        (err, c, k)
    };
    // coarse scan in log χ, then golden section around the best cell
    let grid: Vec<f64> = (0..=240).map(|k| 10f64.powf(-2.0 + 3.0 * k as f64 / 240.0)).collect();
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, chi) in grid.iter().enumerate() {
        let e = fit_at(*chi).0;
        if e < best_err {
            best_err = e;
            best = i;
        }
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (fit_at(x1).0, fit_at(x2).0);
    for _ in 0..200 {
        if b - a <= 1e-13 * b {
            break;
        }
        if f1 < f2 {
            b = x2;
            (x2, f2) = (x1, f1);
            x1 = b - g * (b - a);
            f1 = fit_at(x1).0;
        } else {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = a + g * (b - a);
            f2 = fit_at(x2).0;
        }
    }
    let chi_hat = 0.5 * (a + b);
    let (_, c_hat, k) = fit_at(chi_hat);
    Ok(ProfileFit {
        chi_hat,
        c_hat,
        offset: k,
        shift: 0.0,
        samples: samples.len(),
        span,
        rms_residual: rms(samples, |d| c_hat * d.powf(-chi_hat) + k),
    })
}

/// Minimizes `f` on `[a, b]`: scan on `cells` points, then golden section
/// around the best one.
fn scan_golden(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let pts: Vec<f64> = (0..=cells).map(|k| a + (b - a) * k as f64 / cells as f64).collect();
    let best = (0..pts.len())
        .min_by(|&i, &j| f(pts[i]).total_cmp(&f(pts[j])))
        .unwrap_or(0);
    let (mut lo, mut hi) = (pts[best.saturating_sub(1)], pts[(best + 1).min(cells)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (b - a) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Like [`blowup_profile_fit_offset`] with `d` replaced by `d + d₀`, the shift
/// `d₀` searched in `shift_range`. A solution whose singular set sits slightly
/// outside the sampled boundary follows the profile in `d + d₀`, and in a
/// window of a few cells that shift dominates the fit.
pub fn blowup_profile_fit_shifted(samples: &[(f64, f64)], case: BlowupCase, shift_range: (f64, f64)) -> Result<ProfileFit> {
    check_samples(samples)?;
    let dmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let (a, b) = shift_range;
    if !(a < b) || a <= -dmin {
        return Err(Error::OutOfRange {
            what: "shift range",
            detail: format!("need −min d < a < b, got ({a}, {b}) with min d = {dmin}"),
        });
    }
    let moved = |d0: f64| -> Vec<(f64, f64)> { samples.iter().map(|&(d, u)| (d + d0, u)).collect() };
    let score = |d0: f64| -> f64 {
        let fit = match case {
            BlowupCase::Power => blowup_profile_fit_offset(&moved(d0), case),
            BlowupCase::Logarithmic => log_fit(&moved(d0), 10.0),
        };
        fit.map(|f| f.rms_residual).unwrap_or(f64::INFINITY)
    };
    let d0 = scan_golden(score, a, b, 40);
    let mut fit = match case {
        BlowupCase::Power => blowup_profile_fit_offset(&moved(d0), case)?,
        BlowupCase::Logarithmic => log_fit(&moved(d0), 10.0)?,
    };
    fit.shift = d0;
    fit.span = check_samples(samples)?;
    Ok(fit)
}
