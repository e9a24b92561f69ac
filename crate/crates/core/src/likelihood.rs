//! Log-likelihood ln L(ϑ, Xⁿ) = Σⱼ Σᵢ ln λ(ϑ, tᵢ) − n ∫_B (λ(ϑ, t) − 1) dt and
//! the normalized likelihood ratio Zₙ(u).
//!
//! Everything is computed in log space. Events whose intensity does not move
//! with ϑ over the whole parameter set are summed once per sample.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::analysis::QuadratureRule;
use crate::error::{domain, Error, Result};
use crate::intensity::{BreakKind, IntensityModel, Side, ThetaBreak};
use crate::simulate::Sample;
use crate::windows::Window;

/// Events of a sample inside a window, split by sensitivity to ϑ.
#[derive(Debug, Clone)]
pub struct Events {
    n: usize,
    count: usize,
    fixed: f64,
    sensitive: Vec<f64>,
}

impl Events {
    pub fn new(model: &IntensityModel, sample: &Sample, window: &Window) -> Result<Self> {
        if (sample.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
            return Err(domain(format!(
                "sample horizon {} differs from the model horizon {}",
                sample.horizon(),
                model.horizon()
            )));
        }
        let full = window.is_full(model.horizon());
        let zones = model.theta_sensitive_times();
        let probe = model.theta_interval().alpha();
        let mut fixed = Vec::new();
        let mut sensitive = Vec::new();
        let mut count = 0;
        for tr in sample.trajectories() {
            for &t in tr.events() {
                if !full && !window.contains(t) {
                    continue;
                }
                count += 1;
                let moves = match &zones {
                    None => true,
                    Some(z) => z.iter().any(|&(a, b)| t >= a && t <= b),
                };
                if moves {
                    sensitive.push(t);
                } else {
                    fixed.push(model.log_value(probe, t, None));
                }
            }
        }
        sensitive.sort_by(f64::total_cmp);
        Ok(Self {
            n: sample.n(),
            count,
            fixed: crate::stats::pairwise_sum(&fixed),
            sensitive,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Events inside the window.
    pub fn count(&self) -> usize {
        self.count
    }

    pub(crate) fn sensitive(&self) -> &[f64] {
        &self.sensitive
    }

    /// Σ ln λ(ϑ, tᵢ) over the retained events; −∞ if some intensity is zero.
    pub fn log_term(&self, model: &IntensityModel, theta: f64, side: Option<Side>) -> f64 {
        let mut s = self.fixed;
        for &t in &self.sensitive {
            s += model.log_value(theta, t, side);
        }
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s
        }
    }

    /// Parameter breakpoints contributed by the events, sorted.
    pub fn theta_breaks(&self, model: &IntensityModel) -> Vec<ThetaBreak> {
        let mut out = Vec::new();
        for &t in &self.sensitive {
            model.event_theta_breaks(t, &mut out);
        }
        out.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        out.dedup_by(|a, b| a.theta == b.theta);
        out
    }
}

/// ∫_B (λ(ϑ, t) − 1) dt.
pub fn compensator(model: &IntensityModel, theta: f64, window: &Window, rule: &QuadratureRule) -> f64 {
    let cuts = model.time_breakpoints(theta);
    rule.integrate_window(|t| model.value(theta, t, None), window, &cuts, model.horizon()) - window.measure()
}

/// A parameter lattice with lazily cached compensator values, shared by all
/// samples that use the same model and window.
///
/// The coarse grid is the uniform grid plus declared parameter breakpoints;
/// the fine lattice splits every coarse cell into an even number of equal
/// sub-cells. Off-lattice compensator values are interpolated with a
/// four-point Lagrange stencil that never straddles a breakpoint.
#[derive(Debug)]
pub struct Surface {
    model: IntensityModel,
    window: Window,
    rule: QuadratureRule,
    coarse: Vec<f64>,
    fine: Vec<f64>,
    sub: usize,
    /// Fine indices delimiting smooth pieces (breakpoints and both ends).
    piece_edges: Vec<usize>,
    comp: Vec<OnceLock<f64>>,
}

impl Surface {
    pub fn new(
        model: &IntensityModel,
        window: Option<&Window>,
        grid_size: usize,
        fine_panels: usize,
        rule: QuadratureRule,
    ) -> Result<Self> {
        if grid_size < 3 {
            return Err(Error::Config(format!("grid_size must be >= 3, got {grid_size}")));
        }
        let tau = model.horizon();
        let window = match window {
            Some(w) => {
                if w.intervals().last().is_some_and(|&(_, hi)| hi > tau) {
                    return Err(domain("window extends beyond the horizon"));
                }
                w.clone()
            }
            None => Window::full(tau),
        };
        let ti = model.theta_interval();
        let mut coarse = ti.grid(grid_size);
        let mut breaks: Vec<f64> = model.static_theta_breaks().iter().map(|b| b.theta).collect();
        if !window.is_full(tau) {
            for &(lo, hi) in window.intervals() {
                breaks.extend(model.window_edge_breaks(lo));
                breaks.extend(model.window_edge_breaks(hi));
            }
        }
        breaks.retain(|&b| b > ti.alpha() && b < ti.beta());
        coarse.extend(&breaks);
        coarse.sort_by(f64::total_cmp);
        coarse.dedup();
        let cells = coarse.len() - 1;
        let sub = {
            let m = fine_panels.div_ceil(cells).max(2);
            m + m % 2
        };
        let mut fine = Vec::with_capacity(cells * sub + 1);
        for w in coarse.windows(2) {
            let h = (w[1] - w[0]) / sub as f64;
            for k in 0..sub {
                fine.push(w[0] + k as f64 * h);
            }
        }
        fine.push(*coarse.last().unwrap());
        let mut piece_edges = vec![0];
        for b in &breaks {
            let k = coarse.partition_point(|c| c < b);
            piece_edges.push(k * sub);
        }
        piece_edges.push(fine.len() - 1);
        piece_edges.sort_unstable();
        piece_edges.dedup();
        let comp = (0..fine.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            model: model.clone(),
            window,
            rule,
            coarse,
            fine,
            sub,
            piece_edges,
            comp,
        })
    }

    pub fn model(&self) -> &IntensityModel {
        &self.model
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn coarse(&self) -> &[f64] {
        &self.coarse
    }

    pub fn fine(&self) -> &[f64] {
        &self.fine
    }

    /// Fine sub-cells per coarse cell.
    pub fn sub(&self) -> usize {
        self.sub
    }

    pub fn events(&self, sample: &Sample) -> Result<Events> {
        Events::new(&self.model, sample, &self.window)
    }

    /// Compensator at fine node `k`.
    pub fn comp_node(&self, k: usize) -> f64 {
        *self.comp[k].get_or_init(|| compensator(&self.model, self.fine[k], &self.window, &self.rule))
    }

    /// Compensator at any ϑ in Θ's closure.
    pub fn comp_at(&self, theta: f64) -> f64 {
        let fine = &self.fine;
        let k = fine.partition_point(|&x| x < theta);
        if k < fine.len() && fine[k] == theta {
            return self.comp_node(k);
        }
        // theta lies in (fine[k-1], fine[k])
        let left = k.saturating_sub(1);
        let p = self.piece_edges.partition_point(|&e| e <= left);
        let (lo, hi) = (self.piece_edges[p - 1], self.piece_edges[p.min(self.piece_edges.len() - 1)]);
        let width = (hi - lo + 1).min(4);
        let start = left.saturating_sub(1).clamp(lo, hi + 1 - width);
        let xs: Vec<f64> = (start..start + width).map(|i| fine[i]).collect();
        let ys: Vec<f64> = (start..start + width).map(|i| self.comp_node(i)).collect();
        lagrange(&xs, &ys, theta)
    }

    /// Exact compensator by quadrature (no cache).
    pub fn comp_exact(&self, theta: f64) -> f64 {
        compensator(&self.model, theta, &self.window, &self.rule)
    }

    /// ln L at ϑ from cached/interpolated compensator values.
    pub fn log_likelihood(&self, events: &Events, theta: f64, side: Option<Side>) -> f64 {
        events.log_term(&self.model, theta, side) - events.n as f64 * self.comp_at(theta)
    }

    /// ln L at fine node `k`.
    pub fn log_likelihood_node(&self, events: &Events, k: usize, side: Option<Side>) -> f64 {
        events.log_term(&self.model, self.fine[k], side) - events.n as f64 * self.comp_node(k)
    }

    /// Score Σ λ̇/λ − n ∫_B λ̇ dt, for models with a first θ-derivative.
    pub fn score(&self, events: &Events, theta: f64) -> f64 {
        let m = &self.model;
        let cuts = m.time_breakpoints(theta);
        let integral = self
            .rule
            .integrate_window(|t| m.derivative(theta, t, 1, None), &self.window, &cuts, m.horizon());
        let mut s = 0.0;
        // θ-insensitive events have zero derivative
        for &t in events.sensitive() {
            s += m.derivative(theta, t, 1, None) / m.value(theta, t, None);
        }
        s - events.n as f64 * integral
    }
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..xs.len() {
        let mut w = 1.0;
        for j in 0..xs.len() {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        total += w * ys[i];
    }
    total
}

fn check_theta(model: &IntensityModel, theta: f64) -> Result<()> {
    let ti = model.theta_interval();
    if !ti.contains(theta) {
        return Err(domain(format!(
            "theta = {theta} outside [{}, {}]",
            ti.alpha(),
            ti.beta()
        )));
    }
    Ok(())
}

/// ln L(ϑ, Xⁿ) restricted to `window` (default [0, τ]). An event with zero
/// intensity yields −∞.
pub fn log_likelihood(model: &IntensityModel, theta: f64, sample: &Sample, window: Option<&Window>) -> Result<f64> {
    log_likelihood_impl(model, theta, sample, window, None)
}

/// One-sided limit of ln L at a parameter discontinuity.
pub fn log_likelihood_sided(
    model: &IntensityModel,
    theta: f64,
    sample: &Sample,
    window: Option<&Window>,
    side: Side,
) -> Result<f64> {
    log_likelihood_impl(model, theta, sample, window, Some(side))
}

fn log_likelihood_impl(
    model: &IntensityModel,
    theta: f64,
    sample: &Sample,
    window: Option<&Window>,
    side: Option<Side>,
) -> Result<f64> {
    check_theta(model, theta)?;
    let full = Window::full(model.horizon());
    let window = window.unwrap_or(&full);
    let events = Events::new(model, sample, window)?;
    let comp = compensator(model, theta, window, &QuadratureRule::default());
    Ok(events.log_term(model, theta, side) - sample.n() as f64 * comp)
}

/// ln Zₙ(u) = ln L(ϑ₀ + n^{−r}u) − ln L(ϑ₀).
pub fn log_normalized_lr(
    model: &IntensityModel,
    theta0: f64,
    u: f64,
    rate_exponent: f64,
    sample: &Sample,
) -> Result<f64> {
    check_theta(model, theta0)?;
    let scale = (sample.n() as f64).powf(rate_exponent);
    let theta = theta0 + u / scale;
    let ti = model.theta_interval();
    if !ti.contains(theta) {
        return Err(domain(format!(
            "u = {u} outside U_n = [{}, {}]",
            (ti.alpha() - theta0) * scale,
            (ti.beta() - theta0) * scale
        )));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let full = Window::full(model.horizon());
    let events = Events::new(model, sample, &full)?;
    let rule = QuadratureRule::default();
    let n = sample.n() as f64;
    let a = events.log_term(model, theta, None) - n * compensator(model, theta, &full, &rule);
    let b = events.log_term(model, theta0, None) - n * compensator(model, theta0, &full, &rule);
    if b == f64::NEG_INFINITY {
        return Err(Error::Singularity(format!(
            "likelihood vanishes at theta0 = {theta0}"
        )));
    }
    Ok(a - b)
}

/// Zₙ(u) = exp(ln Zₙ(u)); exactly 1 at u = 0.
pub fn normalized_lr(model: &IntensityModel, theta0: f64, u: f64, rate_exponent: f64, sample: &Sample) -> Result<f64> {
    Ok(log_normalized_lr(model, theta0, u, rate_exponent, sample)?.exp())
}

/// Left and right limits at a parameter discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideValue {
    pub theta: f64,
    pub left: f64,
    pub right: f64,
}

/// ln L on a parameter grid with breakpoints inserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihoodCurve {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    pub side_values: Vec<SideValue>,
}

impl LogLikelihoodCurve {
    /// Largest value including one-sided limits; ties go to the smallest ϑ.
    pub fn argmax(&self) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |th: f64, v: f64| {
            if v.is_nan() {
                return;
            }
            match best {
                Some((bt, bv)) if v < bv || (v == bv && th >= bt) => {}
                _ => best = Some((th, v)),
            }
        };
        for (&th, &v) in self.thetas.iter().zip(&self.values) {
            consider(th, v);
        }
        for s in &self.side_values {
            consider(s.theta, s.left);
            consider(s.theta, s.right);
        }
        best
    }

    /// CSV with columns theta, log_likelihood, left, right.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta,log_likelihood,left,right")?;
        let mut sides = self.side_values.iter().peekable();
        for (&th, &v) in self.thetas.iter().zip(&self.values) {
            match sides.peek() {
                Some(s) if s.theta == th => {
                    writeln!(out, "{th:.16e},{v:.16e},{:.16e},{:.16e}", s.left, s.right)?;
                    sides.next();
                }
                _ => writeln!(out, "{th:.16e},{v:.16e},,")?,
            }
        }
        Ok(())
    }
}

/// ln L on `grid_size` uniform points of Θ's closure plus every declared
/// parameter breakpoint; both one-sided values are stored at jumps.
pub fn likelihood_curve(
    model: &IntensityModel,
    sample: &Sample,
    grid_size: usize,
    window: Option<&Window>,
) -> Result<LogLikelihoodCurve> {
    let surface = Surface::new(model, window, grid_size, 2 * grid_size, QuadratureRule::default())?;
    let events = surface.events(sample)?;
    Ok(curve_on(&surface, &events))
}

pub(crate) fn curve_on(surface: &Surface, events: &Events) -> LogLikelihoodCurve {
    let model = surface.model();
    let mut points: Vec<(f64, bool)> = surface.coarse().iter().map(|&t| (t, false)).collect();
    for b in events.theta_breaks(model) {
        points.push((b.theta, b.kind == BreakKind::Jump));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    points.dedup_by(|a, b| a.0 == b.0);
    let mut thetas = Vec::with_capacity(points.len());
    let mut values = Vec::with_capacity(points.len());
    let mut side_values = Vec::new();
    for (theta, jump) in points {
        let comp = events.n() as f64 * surface.comp_exact(theta);
        let v = events.log_term(model, theta, None) - comp;
        thetas.push(theta);
        values.push(v);
        if jump {
            side_values.push(SideValue {
                theta,
                left: events.log_term(model, theta, Some(Side::Left)) - comp,
                right: events.log_term(model, theta, Some(Side::Right)) - comp,
            });
        }
    }
    LogLikelihoodCurve {
        thetas,
        values,
        side_values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::CatalogId;
    use crate::simulate::{simulate_sample, ModelAt, Trajectory};
    use crate::RngStream;

    fn constant() -> IntensityModel {
        IntensityModel::with_params(CatalogId::Constant, &[], Some((0.1, 10.0))).unwrap()
    }

    #[test]
    fn unit_intensity_has_zero_log_likelihood() {
        let m = IntensityModel::with_params(CatalogId::Flat, &[("level", 1.0)], None).unwrap();
        let s = simulate_sample(&ModelAt { model: &m, theta: 0.5 }, 5, RngStream::new(3, 0)).unwrap();
        assert_eq!(log_likelihood(&m, 0.2, &s, None).unwrap(), 0.0);
    }

    #[test]
    fn constant_model_single_event() {
        let m = constant();
        let s = Sample::new(vec![Trajectory::new(vec![0.5], 1.0).unwrap()], 1.0).unwrap();
        for theta in [0.5_f64, 1.0, 2.5] {
            let want = theta.ln() - (theta - 1.0);
            assert!((log_likelihood(&m, theta, &s, None).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_intensity_event_gives_negative_infinity() {
        let m = IntensityModel::with_params(CatalogId::Flat, &[("level", 0.0)], None).unwrap();
        let s = Sample::new(vec![Trajectory::new(vec![0.5], 1.0).unwrap()], 1.0).unwrap();
        assert_eq!(log_likelihood(&m, 0.5, &s, None).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn normalized_lr_is_one_at_zero_and_checks_domain() {
        let m = IntensityModel::default_for(CatalogId::RegularExp).unwrap();
        let s = simulate_sample(&ModelAt { model: &m, theta: 0.5 }, 20, RngStream::new(3, 0)).unwrap();
        assert_eq!(normalized_lr(&m, 0.5, 0.0, 0.5, &s).unwrap(), 1.0);
        let err = normalized_lr(&m, 0.5, 10.0, 0.5, &s).unwrap_err();
        assert!(matches!(err, Error::Domain(ref msg) if msg.contains("U_n")));
    }

    #[test]
    fn curve_matches_pointwise_and_constant_argmax() {
        let m = constant();
        let s = simulate_sample(&ModelAt { model: &m, theta: 3.0 }, 40, RngStream::new(11, 0)).unwrap();
        let curve = likelihood_curve(&m, &s, 201, None).unwrap();
        for (&th, &v) in curve.thetas.iter().zip(&curve.values).step_by(17) {
            let direct = log_likelihood(&m, th, &s, None).unwrap();
            assert!((v - direct).abs() < 1e-9 * (1.0 + direct.abs()));
        }
        let (best, _) = curve.argmax().unwrap();
        let mle = s.total_events() as f64 / s.n() as f64;
        assert!((best - mle).abs() <= (10.0 - 0.1) / 200.0);
    }

    #[test]
    fn flat_curve_is_constant() {
        let m = IntensityModel::with_params(CatalogId::Flat, &[("level", 2.0)], None).unwrap();
        let s = simulate_sample(&ModelAt { model: &m, theta: 0.5 }, 5, RngStream::new(3, 0)).unwrap();
        let curve = likelihood_curve(&m, &s, 11, None).unwrap();
        assert!(curve.values.iter().all(|&v| v == curve.values[0]));
    }

    #[test]
    fn changepoint_curve_stores_sides() {
        let m = IntensityModel::default_for(CatalogId::Changepoint).unwrap();
        let s = Sample::new(vec![Trajectory::new(vec![0.25, 0.75], 1.0).unwrap()], 1.0).unwrap();
        let curve = likelihood_curve(&m, &s, 5, None).unwrap();
        assert_eq!(curve.side_values.len(), 2);
        let sv = curve.side_values[0];
        assert_eq!(sv.theta, 0.25);
        // left of 0.25 the event sees g2 = 2, right of it g1 = 1
        assert!((sv.left - sv.right - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn interpolated_compensator_is_accurate() {
        let m = IntensityModel::default_for(CatalogId::DiscfiKink).unwrap();
        let surf = Surface::new(&m, None, 21, 100, QuadratureRule::default()).unwrap();
        for theta in [0.013, 0.5, 0.9991, 1.0007, 1.77] {
            let a = surf.comp_at(theta);
            let b = surf.comp_exact(theta);
            assert!((a - b).abs() < 1e-12, "{theta}: {a} vs {b}");
        }
    }
}
