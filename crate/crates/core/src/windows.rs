//! Observation windows: finite unions of intervals inside [0, τ], the optimal
//! window built from level sets of the Fisher integrand, and the sufficient
//! windows around a preliminary estimate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimators::Estimate;
use crate::intensity::{IntensityModel, ParameterInterval};

/// Disjoint, sorted, closed intervals. Serialized as a JSON list of
/// `[lo, hi]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Window {
    intervals: Vec<(f64, f64)>,
}

impl Window {
    /// Sorts and merges overlapping intervals; degenerate ones are dropped.
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &intervals {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 {
                return Err(domain(format!("invalid window interval [{lo}, {hi}]")));
            }
        }
        intervals.retain(|&(lo, hi)| hi > lo);
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (lo, hi) in intervals {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(Self { intervals: merged })
    }

    pub fn full(horizon: f64) -> Self {
        Self {
            intervals: vec![(0.0, horizon)],
        }
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        // intervals are sorted: binary search on the left endpoints
        let k = self.intervals.partition_point(|&(lo, _)| lo <= t);
        k > 0 && t <= self.intervals[k - 1].1
    }

    /// Whether the window is all of [0, horizon].
    pub fn is_full(&self, horizon: f64) -> bool {
        self.intervals.len() == 1 && self.intervals[0] == (0.0, horizon)
    }

    pub fn intersect(&self, other: &Window) -> Window {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a0, a1) = self.intervals[i];
            let (b0, b1) = other.intervals[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Window { intervals: out }
    }

    /// [0, horizon] minus the window.
    pub fn complement(&self, horizon: f64) -> Window {
        let mut out = Vec::new();
        let mut cursor = 0.0;
        for &(lo, hi) in &self.intervals {
            if lo > cursor {
                out.push((cursor, lo.min(horizon)));
            }
            cursor = cursor.max(hi);
        }
        if cursor < horizon {
            out.push((cursor, horizon));
        }
        Window { intervals: out }
    }

    /// Whether every interval of `self` lies in `other`, up to `tol`.
    pub fn is_subset_of(&self, other: &Window, tol: f64) -> bool {
        self.intervals.iter().all(|&(lo, hi)| {
            other
                .intervals
                .iter()
                .any(|&(a, b)| lo >= a - tol && hi <= b + tol)
        })
    }
}

impl TryFrom<Vec<[f64; 2]>> for Window {
    type Error = Error;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<Window> for Vec<[f64; 2]> {
    fn from(w: Window) -> Self {
        w.intervals.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

const LEVEL_GRID: usize = 100_000;

/// Fisher integrand λ̇²/λ on a uniform node grid over [0, τ].
fn integrand_nodes(model: &IntensityModel, theta: f64) -> Result<(Vec<f64>, f64)> {
    if model.smoothness_order() < 1 {
        return Err(Error::Capability(format!(
            "{} has no θ-derivative; level sets are undefined",
            model.id()
        )));
    }
    model.evaluate(theta, 0.0)?;
    let tau = model.horizon();
    let h = tau / LEVEL_GRID as f64;
    let g: Vec<f64> = (0..=LEVEL_GRID)
        .map(|k| integrand(model, theta, (k as f64 * h).min(tau)))
        .collect();
    if g.iter().all(|&v| v <= 0.0) {
        return Err(Error::Degenerate("Fisher integrand vanishes identically".into()));
    }
    Ok((g, h))
}

fn integrand(model: &IntensityModel, theta: f64, t: f64) -> f64 {
    let lam = model.value(theta, t, None);
    if lam <= 0.0 {
        return 0.0;
    }
    let d = model.derivative(theta, t, 1, None);
    d * d / lam
}

/// Length of {g ≥ r} under linear interpolation of the node values.
fn level_measure(g: &[f64], h: f64, r: f64) -> f64 {
    let mut total = 0.0;
    for w in g.windows(2) {
        let (a, b) = (w[0], w[1]);
        let frac = if a >= r && b >= r {
            1.0
        } else if a < r && b < r {
            0.0
        } else if a >= r {
            (a - r) / (a - b)
        } else {
            (b - r) / (b - a)
        };
        total += frac;
    }
    total * h
}

/// The level r* whose super-level set {t : λ̇²/λ ≥ r*} has measure μ*.
pub fn level_threshold(model: &IntensityModel, theta: f64, mu_star: f64) -> Result<f64> {
    let tau = model.horizon();
    if !(mu_star > 0.0 && mu_star < tau) {
        return Err(domain(format!("mu_star must lie in (0, {tau}), got {mu_star}")));
    }
    let (g, h) = integrand_nodes(model, theta)?;
    Ok(threshold_from_nodes(&g, h, mu_star))
}

fn threshold_from_nodes(g: &[f64], h: f64, mu_star: f64) -> f64 {
    let top = g.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, top);
    // measure is nonincreasing in r
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if level_measure(g, h, mid) >= mu_star {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The optimal window B* = {t : λ̇²/λ ≥ r*} of measure μ*.
pub fn optimal_window(model: &IntensityModel, theta: f64, mu_star: f64) -> Result<Window> {
    let tau = model.horizon();
    if !(mu_star > 0.0 && mu_star < tau) {
        return Err(domain(format!("mu_star must lie in (0, {tau}), got {mu_star}")));
    }
    let (g, h) = integrand_nodes(model, theta)?;
    let r = threshold_from_nodes(&g, h, mu_star);
    let above = |t: f64| integrand(model, theta, t) >= r;
    let refine = |mut a: f64, mut b: f64, a_in: bool| -> f64 {
        // a and b straddle the boundary; a_in tells which side is inside
        while b - a > 1e-12 * tau.max(1.0) {
            let m = 0.5 * (a + b);
            if above(m) == a_in {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut intervals = Vec::new();
    let mut start = if g[0] >= r { Some(0.0) } else { None };
    for k in 0..LEVEL_GRID {
        let (ta, tb) = (k as f64 * h, ((k + 1) as f64 * h).min(tau));
        let (ia, ib) = (g[k] >= r, g[k + 1] >= r);
        if ia == ib {
            continue;
        }
        let edge = refine(ta, tb, ia);
        if ib {
            start = Some(edge);
        } else if let Some(s) = start.take() {
            intervals.push((s, edge));
        }
    }
    if let Some(s) = start {
        intervals.push((s, tau));
    }
    let mut window = Window::new(intervals)?;
    // plateau at the threshold: keep the leftmost part that restores μ*
    let excess = window.measure() - mu_star;
    if excess > 1e-6 {
        window = trim_right(&window, excess);
    }
    Ok(window)
}

fn trim_right(window: &Window, mut excess: f64) -> Window {
    let mut intervals = window.intervals.clone();
    while excess > 0.0 {
        let Some(last) = intervals.last_mut() else { break };
        let len = last.1 - last.0;
        if len <= excess {
            excess -= len;
            intervals.pop();
        } else {
            last.1 -= excess;
            excess = 0.0;
        }
    }
    Window { intervals }
}

/// B_n = [ϑ̄ − n^{−1/8}, ϑ̄ + n^{−1/8}] ∩ [0, τ].
pub fn sufficient_window(preliminary: &Estimate, n: usize, horizon: f64) -> Result<Window> {
    if n < 2 {
        return Err(domain(format!("sufficient window needs n >= 2, got {n}")));
    }
    let half = (n as f64).powf(-0.125);
    let lo = (preliminary.value - half).max(0.0);
    let hi = (preliminary.value + half).min(horizon);
    if !(hi > lo) {
        return Err(Error::Estimation(format!(
            "window around the preliminary value {} misses [0, {horizon}]",
            preliminary.value
        )));
    }
    Window::new(vec![(lo, hi)])
}

/// [α + s*, β + s*], the interval that carries all the information about a
/// delayed jump.
pub fn jump_sufficient_window(theta_interval: ParameterInterval, jump_location: f64, horizon: f64) -> Result<Window> {
    let lo = theta_interval.alpha() + jump_location;
    let hi = theta_interval.beta() + jump_location;
    if lo < 0.0 || hi > horizon {
        return Err(domain(format!(
            "window [{lo}, {hi}] leaves the horizon [0, {horizon}]"
        )));
    }
    Window::new(vec![(lo, hi)])
}
