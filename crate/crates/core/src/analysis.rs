//! Quadrature and deterministic functionals of intensity families.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::intensity::{IntensityModel, Side, TrueIntensity};
use crate::windows::Window;

/// Composite quadrature scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CompositeSimpson,
    MidpointOnBreakpoints,
}

/// Fixed (non-adaptive) composite rule. `panels` is the panel count over a
/// reference length (the horizon); sub-intervals receive a proportional share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureRule {
    panels: usize,
    scheme: Scheme,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            panels: 4096,
            scheme: Scheme::CompositeSimpson,
        }
    }
}

impl QuadratureRule {
    pub fn new(panels: usize, scheme: Scheme) -> Result<Self> {
        if panels < 16 || panels % 2 != 0 {
            return Err(Error::Config(format!(
                "quadrature needs an even panel count >= 16, got {panels}"
            )));
        }
        Ok(Self { panels, scheme })
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// The same scheme with twice the panels.
    pub fn refined(&self) -> Self {
        Self {
            panels: self.panels * 2,
            scheme: self.scheme,
        }
    }

    fn panels_for(&self, length: f64, reference: f64) -> usize {
        let share = (self.panels as f64 * length / reference).ceil() as usize;
        let m = share.max(2);
        m + m % 2
    }

    /// ∫_lo^hi f, split at every cut inside (lo, hi). Piece endpoints are
    /// evaluated a relative 1e-13 inside the piece, so one-sided limits are
    /// used at discontinuities.
    pub fn integrate<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        lo: f64,
        hi: f64,
        cuts: &[f64],
        reference: f64,
    ) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut points = Vec::with_capacity(cuts.len() + 2);
        points.push(lo);
        points.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
        points.push(hi);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut total = 0.0;
        for w in points.windows(2) {
            total += self.piece(&mut f, w[0], w[1], reference);
        }
        total
    }

    /// Integral over a window, each interval handled by [`Self::integrate`].
    pub fn integrate_window<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        window: &Window,
        cuts: &[f64],
        reference: f64,
    ) -> f64 {
        window
            .intervals()
            .iter()
            .map(|&(lo, hi)| self.integrate(&mut f, lo, hi, cuts, reference))
            .sum()
    }

    fn piece<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64, reference: f64) -> f64 {
        let len = b - a;
        let m = self.panels_for(len, reference);
        let h = len / m as f64;
        match self.scheme {
            Scheme::CompositeSimpson => {
                let (lo, hi) = inward(a, b);
                let mut odd = 0.0;
                let mut even = 0.0;
                for k in 1..m {
                    let v = f(a + k as f64 * h);
                    if k % 2 == 1 {
                        odd += v;
                    } else {
                        even += v;
                    }
                }
                h / 3.0 * (f(lo) + f(hi) + 4.0 * odd + 2.0 * even)
            }
            Scheme::MidpointOnBreakpoints => {
                (0..m).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
            }
        }
    }
}

/// Endpoints of [a, b] moved a relative 1e-13 (at least one ulp) inside.
pub(crate) fn inward(a: f64, b: f64) -> (f64, f64) {
    let nudge = (b - a) * 1e-13;
    ((a + nudge).max(a.next_up()), (b - nudge).min(b.next_down()))
}

/// Expected count Λ(t) = ∫₀ᵗ λ(ϑ, s) ds.
pub fn cumulative(model: &IntensityModel, theta: f64, t: f64, rule: &QuadratureRule) -> Result<f64> {
    model.evaluate(theta, t)?;
    let cuts = model.time_breakpoints(theta);
    Ok(rule.integrate(|s| model.value(theta, s, None), 0.0, t, &cuts, model.horizon()))
}

fn full_window(model: &IntensityModel) -> Window {
    Window::full(model.horizon())
}

fn check_window(model: &IntensityModel, window: &Window) -> Result<()> {
    if let Some(&(_, hi)) = window.intervals().last() {
        if hi > model.horizon() {
            return Err(domain(format!(
                "window reaches {hi}, beyond the horizon {}",
                model.horizon()
            )));
        }
    }
    Ok(())
}

fn singular(model: &IntensityModel, theta: f64, t: f64) -> Error {
    Error::Singularity(format!("{} vanishes at theta = {theta}, t = {t}", model.id()))
}

/// Integral of `num(t)² / λ(ϑ, t)` where `num` is a θ-derivative.
fn score_integral(
    model: &IntensityModel,
    theta: f64,
    window: &Window,
    rule: &QuadratureRule,
    mut num: impl FnMut(f64) -> f64,
) -> Result<f64> {
    let cuts = model.time_breakpoints(theta);
    let mut bad = None;
    let v = rule.integrate_window(
        |t| {
            let lam = model.value(theta, t, None);
            if lam <= 0.0 {
                bad.get_or_insert(t);
                return 0.0;
            }
            let d = num(t);
            d * d / lam
        },
        window,
        &cuts,
        model.horizon(),
    );
    match bad {
        Some(t) => Err(singular(model, theta, t)),
        None => Ok(v),
    }
}

/// Fisher information ∫_B λ̇(ϑ,t)²/λ(ϑ,t) dt over `window` (default [0, τ]).
/// At a kink a `side` selects the one-sided derivative.
pub fn fisher_information(
    model: &IntensityModel,
    theta: f64,
    window: Option<&Window>,
    side: Option<Side>,
    rule: &QuadratureRule,
) -> Result<f64> {
    let full = full_window(model);
    let window = window.unwrap_or(&full);
    check_window(model, window)?;
    // validates order, domain and the side requirement
    model.theta_derivative(theta, 0.0, 1, side)?;
    score_integral(model, theta, window, rule, |t| model.derivative(theta, t, 1, side))
}

/// I₃(ϑ) = ∫ λ⃛(ϑ,t)² / ((3!)² λ(ϑ,t)) dt.
pub fn higher_order_information(model: &IntensityModel, theta: f64, rule: &QuadratureRule) -> Result<f64> {
    model.theta_derivative(theta, 0.0, 3, Some(Side::Right))?;
    let full = full_window(model);
    let v = score_integral(model, theta, &full, rule, |t| model.derivative(theta, t, 3, None))?;
    Ok(v / 36.0)
}

/// ∫ (√λ(ϑ₂,t) − √λ(ϑ₁,t))² dt.
pub fn hellinger_sq(model: &IntensityModel, theta1: f64, theta2: f64, rule: &QuadratureRule) -> Result<f64> {
    model.evaluate(theta1, 0.0)?;
    model.evaluate(theta2, 0.0)?;
    if theta1 == theta2 {
        return Ok(0.0);
    }
    let mut cuts = model.time_breakpoints(theta1);
    cuts.extend(model.time_breakpoints(theta2));
    Ok(rule.integrate(
        |t| {
            let d = model.value(theta2, t, None).sqrt() - model.value(theta1, t, None).sqrt();
            d * d
        },
        0.0,
        model.horizon(),
        &cuts,
        model.horizon(),
    ))
}

/// Pointwise Kullback–Leibler integrand [λ/λ* − 1 − ln(λ/λ*)]·λ*.
fn kl_density(lam: f64, star: f64) -> Option<f64> {
    if star <= 0.0 {
        return Some(lam);
    }
    if lam <= 0.0 {
        return None;
    }
    let r = lam / star;
    // r − 1 − ln r, accurate near r = 1
    let x = r - 1.0;
    Some((x - x.ln_1p()) * star)
}

/// ∫[λ(ϑ,t)/λ*(t) − 1 − ln(λ(ϑ,t)/λ*(t))] λ*(t) dt.
pub fn kl_objective(truth: &TrueIntensity, model: &IntensityModel, theta: f64, rule: &QuadratureRule) -> Result<f64> {
    model.evaluate(theta, 0.0)?;
    let mut cuts = truth.time_breakpoints();
    cuts.extend(model.time_breakpoints(theta));
    let mut bad = None;
    let v = rule.integrate(
        |t| {
            kl_density(model.value(theta, t, None), truth.value(t)).unwrap_or_else(|| {
                bad.get_or_insert(t);
                0.0
            })
        },
        0.0,
        model.horizon(),
        &cuts,
        model.horizon(),
    );
    match bad {
        Some(t) => Err(Error::Singularity(format!(
            "model intensity vanishes at t = {t} where the true intensity is positive (theta = {theta})"
        ))),
        None => Ok(v.max(0.0)),
    }
}

const STAR_GRID_SMOOTH: usize = 2001;
const STAR_GRID_ROUGH: usize = 20001;

/// Pseudo-true value ϑ* = argmin over Θ's closure of the KL objective.
///
/// Smooth models: 2001-point grid plus golden-section on the bracketing
/// cells. Other models: a 20001-point grid. Ties go to the smaller ϑ.
pub fn theta_star(truth: &TrueIntensity, model: &IntensityModel, rule: &QuadratureRule) -> Result<f64> {
    if truth.horizon() != model.horizon() {
        return Err(domain("true intensity and model have different horizons"));
    }
    let ti = model.theta_interval();
    let smooth = model.is_theta_continuous() && model.smoothness_order() >= 1;
    let (grid, values) = if smooth {
        let grid = ti.grid(STAR_GRID_SMOOTH);
        let values = crate::par::map(grid.len(), |k| {
            kl_objective(truth, model, grid[k], rule).unwrap_or(f64::INFINITY)
        });
        (grid, values)
    } else {
        let grid = ti.grid(STAR_GRID_ROUGH);
        let values = match split_kl_profile(truth, model, &grid) {
            Some(v) => v,
            None => crate::par::map(grid.len(), |k| {
                kl_objective(truth, model, grid[k], rule).unwrap_or(f64::INFINITY)
            }),
        };
        (grid, values)
    };
    let best = argmin_first(&values);
    if !values[best].is_finite() {
        return Err(Error::Singularity(
            "KL objective is infinite on the whole parameter grid".into(),
        ));
    }
    if !smooth {
        return Ok(grid[best]);
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let objective = |th: f64| kl_objective(truth, model, th, rule).unwrap_or(f64::INFINITY);
    let (x, fx) = golden_min(objective, lo, hi, 1e-12);
    Ok(if fx < values[best] { x } else { grid[best] })
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Golden-section minimization on [lo, hi]; returns the best point seen.
pub(crate) fn golden_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let scale = tol * (1.0 + lo.abs().max(hi.abs()));
    for _ in 0..200 {
        if b - a <= scale {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// KL objective on a grid for models of the form g₁(t)·1{t < ϑ} + g₂(t)·1{t ≥ ϑ},
/// using running integrals between consecutive grid points.
fn split_kl_profile(truth: &TrueIntensity, model: &IntensityModel, grid: &[f64]) -> Option<Vec<f64>> {
    model.split_profile(true, 0.0)?;
    let tau = model.horizon();
    let cuts = truth.time_breakpoints();
    let below = |t: f64| kl_density(model.split_profile(true, t).unwrap(), truth.value(t)).unwrap_or(f64::INFINITY);
    let above = |t: f64| kl_density(model.split_profile(false, t).unwrap(), truth.value(t)).unwrap_or(f64::INFINITY);
    // 2 Simpson panels per grid cell, split further at the truth's breakpoints
    let cell_rule = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| -> f64 {
        let mut pts = vec![a];
        pts.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
        pts.push(b);
        pts.windows(2)
            .map(|w| {
                let (x, y) = (w[0], w[1]);
                let (lo, hi) = inward(x, y);
                (y - x) / 6.0 * (f(lo) + 4.0 * f(0.5 * (x + y)) + f(hi))
            })
            .sum()
    };
    let rule = QuadratureRule::default();
    let head = grid[0].clamp(0.0, tau);
    let tail = grid[grid.len() - 1].clamp(0.0, tau);
    let below_head = rule.integrate(below, 0.0, head, &cuts, tau);
    let above_tail = rule.integrate(above, tail, tau, &cuts, tau);
    let k = grid.len();
    let mut cum_below = vec![below_head; k];
    let mut cum_above = vec![0.0; k];
    for j in 1..k {
        let (a, b) = (grid[j - 1].clamp(0.0, tau), grid[j].clamp(0.0, tau));
        cum_below[j] = cum_below[j - 1] + cell_rule(&below, a, b);
        cum_above[j] = cum_above[j - 1] + cell_rule(&above, a, b);
    }
    let total_above = cum_above[k - 1];
    Some(
        (0..k)
            .map(|j| cum_below[j] + (total_above - cum_above[j]) + above_tail)
            .collect(),
    )
}

/// Misspecified-model asymptotics at the pseudo-true value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisspecAsymptotics {
    pub theta_star: f64,
    pub d_star_sq: f64,
    pub i_star: f64,
    pub d_big_sq: f64,
}

/// ϑ*, d*² = ∫λ̇²λ*/λ², I* = d*² + ∫λ̈(1 − λ*/λ) and D*² = d*²/I*².
pub fn misspec_asymptotics(
    truth: &TrueIntensity,
    model: &IntensityModel,
    rule: &QuadratureRule,
) -> Result<MisspecAsymptotics> {
    if model.smoothness_order() < 2 {
        return Err(Error::Capability(format!(
            "{} lacks the second θ-derivative needed for the misspecified limit",
            model.id()
        )));
    }
    let theta_star = theta_star(truth, model, rule)?;
    let ti = model.theta_interval();
    let edge = 1e-9 * ti.width();
    if theta_star <= ti.alpha() + edge || theta_star >= ti.beta() - edge {
        return Err(Error::Precondition(format!(
            "pseudo-true value {theta_star} lies on the boundary of the parameter set"
        )));
    }
    asymptotics_at(truth, model, theta_star, rule)
}

/// The misspecified-limit quantities at a given ϑ* (no minimization).
pub fn asymptotics_at(
    truth: &TrueIntensity,
    model: &IntensityModel,
    theta_star: f64,
    rule: &QuadratureRule,
) -> Result<MisspecAsymptotics> {
    let mut cuts = truth.time_breakpoints();
    cuts.extend(model.time_breakpoints(theta_star));
    let tau = model.horizon();
    let mut bad = None;
    let d_star_sq = rule.integrate(
        |t| {
            let lam = model.value(theta_star, t, None);
            if lam <= 0.0 {
                bad.get_or_insert(t);
                return 0.0;
            }
            let d = model.derivative(theta_star, t, 1, None);
            d * d * truth.value(t) / (lam * lam)
        },
        0.0,
        tau,
        &cuts,
        tau,
    );
    if let Some(t) = bad {
        return Err(singular(model, theta_star, t));
    }
    let correction = rule.integrate(
        |t| {
            let lam = model.value(theta_star, t, None);
            model.derivative(theta_star, t, 2, None) * (1.0 - truth.value(t) / lam)
        },
        0.0,
        tau,
        &cuts,
        tau,
    );
    let i_star = d_star_sq + correction;
    // relative guard: rounding leaves ~1e-16 residue where the curvature is zero
    if !(i_star > 1e-12 * (1.0 + d_star_sq.abs() + correction.abs())) {
        return Err(Error::Degenerate(format!(
            "curvature I* = {i_star} is not positive at theta* = {theta_star}"
        )));
    }
    Ok(MisspecAsymptotics {
        theta_star,
        d_star_sq,
        i_star,
        d_big_sq: d_star_sq / (i_star * i_star),
    })
}

/// Boundary of the change-point consistency region for g₂/g₁ = x:
/// returns (h₁ max, h₂ min) = ((x−1)/ln x − 1, (x−1)/ln x − x).
pub fn consistency_region(x: f64) -> Result<(f64, f64)> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(domain(format!("consistency region needs x > 1, got {x}")));
    }
    let d = x - 1.0;
    let ratio = if d < 1e-9 { 1.0 + d / 2.0 } else { d / d.ln_1p() };
    Ok((ratio - 1.0, ratio - x))
}

/// Correlation structure of the score processes at coincident parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonIdentCovariance {
    pub roots: Vec<f64>,
    pub informations: Vec<f64>,
    /// Row-major k×k correlation matrix.
    pub rho: Vec<Vec<f64>>,
}

/// ρ_{li} = (I(ϑ_l)I(ϑ_i))^{−1/2} ∫ λ̇(ϑ_l,t)λ̇(ϑ_i,t)/λ(ϑ_i,t) dt.
pub fn nonident_covariance(
    model: &IntensityModel,
    roots: &[f64],
    rule: &QuadratureRule,
) -> Result<NonIdentCovariance> {
    if roots.is_empty() {
        return Err(domain("at least one root is required"));
    }
    let tau = model.horizon();
    for &r in roots {
        model.evaluate(r, 0.0)?;
    }
    let checks = 1001;
    for k in 0..checks {
        let t = tau * k as f64 / (checks - 1) as f64;
        let base = model.value(roots[0], t, None);
        for &r in &roots[1..] {
            let v = model.value(r, t, None);
            if (v - base).abs() > 1e-9 * (1.0 + base.abs()) {
                return Err(Error::Precondition(format!(
                    "intensities at {} and {r} differ at t = {t}",
                    roots[0]
                )));
            }
        }
    }
    let informations: Vec<f64> = roots
        .iter()
        .map(|&r| fisher_information(model, r, None, None, rule))
        .collect::<Result<_>>()?;
    if let Some(pos) = informations.iter().position(|&i| !(i > 0.0)) {
        return Err(Error::Singularity(format!(
            "zero Fisher information at root {}",
            roots[pos]
        )));
    }
    let k = roots.len();
    let mut rho = vec![vec![0.0; k]; k];
    let mut cuts = Vec::new();
    for &r in roots {
        cuts.extend(model.time_breakpoints(r));
    }
    for l in 0..k {
        rho[l][l] = 1.0;
        for i in (l + 1)..k {
            let cross = rule.integrate(
                |t| {
                    model.derivative(roots[l], t, 1, None) * model.derivative(roots[i], t, 1, None)
                        / model.value(roots[i], t, None)
                },
                0.0,
                tau,
                &cuts,
                tau,
            );
            let v = cross / (informations[l] * informations[i]).sqrt();
            rho[l][i] = v;
            rho[i][l] = v;
        }
    }
    let m = DMatrix::from_fn(k, k, |a, b| rho[a][b]);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&e| e < -1e-10) {
        return Err(Error::Numerical("correlation matrix is not positive semidefinite".into()));
    }
    Ok(NonIdentCovariance {
        roots: roots.to_vec(),
        informations,
        rho,
    })
}

/// Bisection on the derivative of ∫(λ(ϑ,t) − λ(ϑ₀,t))² dt, which reaches full
/// precision where the distance itself is flat to rounding.
fn polish_root(model: &IntensityModel, theta0: f64, lo: f64, hi: f64) -> Option<f64> {
    if model.smoothness_order() < 1 {
        return None;
    }
    let tau = model.horizon();
    let ts: Vec<f64> = (0..=200).map(|k| tau * k as f64 / 200.0).collect();
    let slope = |th: f64| -> f64 {
        ts.iter()
            .map(|&t| (model.value(th, t, None) - model.value(theta0, t, None)) * model.derivative(th, t, 1, None))
            .sum()
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (slope(a), slope(b));
    if !(fa < 0.0 && fb > 0.0) {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = slope(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Parameters in Θ's closure whose intensity coincides with λ(ϑ₀, ·), found
/// as zeros of the Hellinger distance on a 2001-point grid.
pub fn coincident_parameters(model: &IntensityModel, theta0: f64, rule: &QuadratureRule) -> Result<Vec<f64>> {
    model.evaluate(theta0, 0.0)?;
    let grid = model.theta_interval().grid(2001);
    let h: Vec<f64> = crate::par::map(grid.len(), |k| {
        hellinger_sq(model, theta0, grid[k], rule).unwrap_or(f64::INFINITY)
    });
    let mut roots = vec![theta0];
    for k in 0..grid.len() {
        let left = if k == 0 { f64::INFINITY } else { h[k - 1] };
        let right = if k + 1 == grid.len() { f64::INFINITY } else { h[k + 1] };
        if h[k] <= left && h[k] < right {
            let lo = grid[k.saturating_sub(1)];
            let hi = grid[(k + 1).min(grid.len() - 1)];
            let (x, fx) = golden_min(|th| hellinger_sq(model, theta0, th, rule).unwrap_or(f64::INFINITY), lo, hi, 1e-13);
            let (x, fx) = if fx < h[k] { (x, fx) } else { (grid[k], h[k]) };
            if fx < 1e-12 && (x - theta0).abs() > 1e-6 * model.theta_interval().width() {
                roots.push(polish_root(model, theta0, lo, hi).unwrap_or(x));
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    Ok(roots)
}
