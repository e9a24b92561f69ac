//! Parametric intensity families λ(ϑ, t) on a horizon [0, τ].
//!
//! Every family in the catalog carries an analytic upper bound `lambda_max`
//! (used by the thinning simulator), its analytic θ-derivatives where they
//! exist, and the locations where it stops being smooth, both in time (for
//! quadrature) and in the parameter (for likelihood maximization).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Relative headroom added on top of each analytic intensity bound.
pub const LAMBDA_MAX_MARGIN: f64 = 1e-9;

const SCAN_THETA: usize = 101;
const SCAN_T: usize = 201;

/// Open parameter set Θ = (alpha, beta). Estimators search its closure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct ParameterInterval {
    alpha: f64,
    beta: f64,
}

impl ParameterInterval {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || alpha >= beta {
            return Err(domain(format!(
                "parameter interval requires finite alpha < beta, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn width(&self) -> f64 {
        self.beta - self.alpha
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.alpha + self.beta)
    }

    /// Membership in the closure [alpha, beta].
    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.alpha && theta <= self.beta
    }

    pub fn clamp(&self, theta: f64) -> f64 {
        theta.clamp(self.alpha, self.beta)
    }

    /// `count` equally spaced points covering the closure, endpoints included.
    pub fn grid(&self, count: usize) -> Vec<f64> {
        assert!(count >= 2);
        let step = self.width() / (count - 1) as f64;
        (0..count)
            .map(|k| {
                if k + 1 == count {
                    self.beta
                } else {
                    self.alpha + k as f64 * step
                }
            })
            .collect()
    }
}

impl TryFrom<[f64; 2]> for ParameterInterval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Self::new(v[0], v[1])
    }
}

impl From<ParameterInterval> for [f64; 2] {
    fn from(p: ParameterInterval) -> Self {
        [p.alpha, p.beta]
    }
}

/// One-sided limit selector for kinks and jumps in ϑ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// How the likelihood behaves across a parameter breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakKind {
    /// Continuous, but not differentiable.
    Kink,
    /// Left and right limits differ.
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaBreak {
    pub theta: f64,
    pub kind: BreakKind,
}

/// Catalog identifiers, addressable by their upper-case string id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CatalogId {
    RegularExp,
    NonidentCubic,
    NonidentFixed,
    NullfiSine,
    DiscfiKink,
    Cusp,
    JumpShift,
    Changepoint,
    WindowSine,
    SuffwinLinear,
    PhaseMod,
    FreqMod,
    Constant,
    Flat,
}

impl CatalogId {
    pub const ALL: [CatalogId; 14] = [
        CatalogId::RegularExp,
        CatalogId::NonidentCubic,
        CatalogId::NonidentFixed,
        CatalogId::NullfiSine,
        CatalogId::DiscfiKink,
        CatalogId::Cusp,
        CatalogId::JumpShift,
        CatalogId::Changepoint,
        CatalogId::WindowSine,
        CatalogId::SuffwinLinear,
        CatalogId::PhaseMod,
        CatalogId::FreqMod,
        CatalogId::Constant,
        CatalogId::Flat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CatalogId::RegularExp => "REGULAR_EXP",
            CatalogId::NonidentCubic => "NONIDENT_CUBIC",
            CatalogId::NonidentFixed => "NONIDENT_FIXED",
            CatalogId::NullfiSine => "NULLFI_SINE",
            CatalogId::DiscfiKink => "DISCFI_KINK",
            CatalogId::Cusp => "CUSP",
            CatalogId::JumpShift => "JUMP_SHIFT",
            CatalogId::Changepoint => "CHANGEPOINT",
            CatalogId::WindowSine => "WINDOW_SINE",
            CatalogId::SuffwinLinear => "SUFFWIN_LINEAR",
            CatalogId::PhaseMod => "PHASE_MOD",
            CatalogId::FreqMod => "FREQ_MOD",
            CatalogId::Constant => "CONSTANT",
            CatalogId::Flat => "FLAT",
        }
    }

    /// Parameter names accepted by the family, with defaults.
    pub fn param_defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            CatalogId::RegularExp | CatalogId::Constant => &[("horizon", 1.0)],
            CatalogId::NonidentCubic
            | CatalogId::NonidentFixed
            | CatalogId::NullfiSine
            | CatalogId::DiscfiKink => &[],
            CatalogId::Cusp => &[("a", 1.0), ("kappa", 0.25), ("lambda0", 1.0), ("horizon", 1.0)],
            CatalogId::JumpShift => &[
                ("level", 1.0),
                ("jump", 2.0),
                ("ripple", 0.0),
                ("jump_at", 0.5),
                ("horizon", 1.0),
            ],
            CatalogId::Changepoint => &[
                ("g1", 1.0),
                ("g1_slope", 0.0),
                ("g2", 2.0),
                ("g2_slope", 0.0),
                ("horizon", 1.0),
            ],
            CatalogId::WindowSine => &[("b", 2.0), ("omega", 2.0 * PI)],
            CatalogId::SuffwinLinear => &[("a", 1.0), ("b", 2.0), ("horizon", 1.0)],
            CatalogId::PhaseMod | CatalogId::FreqMod => &[
                ("square", 0.0),
                ("mean", 2.0),
                ("amplitude", 1.0),
                ("low", 1.0),
                ("high", 3.0),
                ("duty", 0.5),
                ("period", 1.0),
                ("horizon", 1.0),
            ],
            CatalogId::Flat => &[("level", 1.0), ("horizon", 1.0)],
        }
    }
}

impl fmt::Display for CatalogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CatalogId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CatalogId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown catalog model id `{s}`")))
    }
}

/// Periodic profile used by the phase and frequency modulation families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Periodic {
    /// mean + amplitude·cos(2πy/period)
    Smooth { mean: f64, amplitude: f64, period: f64 },
    /// `low` on the first `duty` fraction of each period, `high` afterwards.
    Square { low: f64, high: f64, duty: f64, period: f64 },
}

impl Periodic {
    fn period(&self) -> f64 {
        match *self {
            Periodic::Smooth { period, .. } | Periodic::Square { period, .. } => period,
        }
    }

    fn value(&self, y: f64, side: Option<Side>) -> f64 {
        match *self {
            Periodic::Smooth {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (2.0 * PI * y / period).cos(),
            Periodic::Square {
                low,
                high,
                duty,
                period,
            } => {
                // right-continuous in y; the left limit differs only on the edges
                let phase = y / period - (y / period).floor();
                let is_high = match side {
                    Some(Side::Left) => phase == 0.0 || phase > duty,
                    _ => phase >= duty,
                };
                if is_high {
                    high
                } else {
                    low
                }
            }
        }
    }

    fn derivative(&self, y: f64, order: u8) -> f64 {
        match *self {
            Periodic::Smooth {
                amplitude, period, ..
            } => {
                let w = 2.0 * PI / period;
                let arg = w * y;
                let w_k = w.powi(order as i32);
                let base = match order % 4 {
                    0 => arg.cos(),
                    1 => -arg.sin(),
                    2 => -arg.cos(),
                    _ => arg.sin(),
                };
                amplitude * w_k * base
            }
            Periodic::Square { .. } => 0.0,
        }
    }

    fn max(&self) -> f64 {
        match *self {
            Periodic::Smooth {
                mean, amplitude, ..
            } => mean + amplitude.abs(),
            Periodic::Square { low, high, .. } => low.max(high),
        }
    }

    /// Jump locations of the profile inside [lo, hi].
    fn jumps_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let Periodic::Square { duty, period, .. } = *self else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut k = (lo / period).floor() - 1.0;
        while k * period <= hi {
            for y in [k * period, (k + duty) * period] {
                if y >= lo && y <= hi {
                    out.push(y);
                }
            }
            k += 1.0;
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Concrete family with its structural constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    RegularExp,
    NonidentCubic,
    NonidentFixed,
    NullfiSine,
    DiscfiKink,
    Cusp { a: f64, kappa: f64, lambda0: f64 },
    JumpShift { level: f64, jump: f64, ripple: f64, jump_at: f64 },
    Changepoint { g1: [f64; 2], g2: [f64; 2] },
    WindowSine { b: f64, omega: f64 },
    SuffwinLinear { a: f64, b: f64 },
    PhaseMod(Periodic),
    FreqMod(Periodic),
    Constant,
    Flat { level: f64 },
}

fn poly1(c: [f64; 2], t: f64) -> f64 {
    c[0] + c[1] * t
}

/// Strict "x > c" where x increases with ϑ; the side picks a one-sided limit.
fn gt_increasing(x: f64, c: f64, side: Option<Side>) -> bool {
    match side {
        None | Some(Side::Left) => x > c,
        Some(Side::Right) => x >= c,
    }
}

/// "x ≥ c" where x increases with ϑ.
fn ge_increasing(x: f64, c: f64, side: Option<Side>) -> bool {
    match side {
        None | Some(Side::Right) => x >= c,
        Some(Side::Left) => x > c,
    }
}

/// A validated catalog intensity model.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    id: CatalogId,
    family: Family,
    params: BTreeMap<String, f64>,
    theta_interval: ParameterInterval,
    horizon: f64,
    lambda_max: f64,
    smoothness_order: u8,
}

impl IntensityModel {
    /// Builds a catalog model. Unknown parameter names are rejected and
    /// missing ones take the family defaults; `theta_interval` defaults to the
    /// family's documented parameter set.
    pub fn from_catalog(
        id: CatalogId,
        params: &BTreeMap<String, f64>,
        theta_interval: Option<ParameterInterval>,
    ) -> Result<Self> {
        let defaults = id.param_defaults();
        for key in params.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                return Err(Error::Config(format!(
                    "model {id} does not accept parameter `{key}`"
                )));
            }
        }
        let resolved: BTreeMap<String, f64> = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), params.get(*k).copied().unwrap_or(*v)))
            .collect();
        for (k, v) in &resolved {
            if !v.is_finite() {
                return Err(Error::Config(format!("parameter `{k}` must be finite")));
            }
        }
        let p = |k: &str| resolved[k];
        let horizon = match id {
            CatalogId::NonidentCubic
            | CatalogId::NonidentFixed
            | CatalogId::NullfiSine
            | CatalogId::DiscfiKink => 1.0,
            CatalogId::WindowSine => 2.0 * PI / p("omega"),
            _ => p("horizon"),
        };
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let periodic = |square: bool| -> Result<Periodic> {
            let period = p("period");
            if period <= 0.0 {
                return Err(Error::Config("period must be positive".into()));
            }
            if square {
                let duty = p("duty");
                if !(duty > 0.0 && duty < 1.0) {
                    return Err(Error::Config("duty must lie in (0, 1)".into()));
                }
                Ok(Periodic::Square {
                    low: p("low"),
                    high: p("high"),
                    duty,
                    period,
                })
            } else {
                Ok(Periodic::Smooth {
                    mean: p("mean"),
                    amplitude: p("amplitude"),
                    period,
                })
            }
        };
        let family = match id {
            CatalogId::RegularExp => Family::RegularExp,
            CatalogId::NonidentCubic => Family::NonidentCubic,
            CatalogId::NonidentFixed => Family::NonidentFixed,
            CatalogId::NullfiSine => Family::NullfiSine,
            CatalogId::DiscfiKink => Family::DiscfiKink,
            CatalogId::Cusp => {
                let kappa = p("kappa");
                if !(kappa > 0.0 && kappa < 0.5) {
                    return Err(Error::Config(format!("cusp kappa must lie in (0, 1/2), got {kappa}")));
                }
                if p("a") <= 0.0 || p("lambda0") <= 0.0 {
                    return Err(Error::Config("cusp requires a > 0 and lambda0 > 0".into()));
                }
                Family::Cusp {
                    a: p("a"),
                    kappa,
                    lambda0: p("lambda0"),
                }
            }
            CatalogId::JumpShift => {
                if p("jump") == 0.0 {
                    return Err(Error::Config("jump size must be nonzero".into()));
                }
                Family::JumpShift {
                    level: p("level"),
                    jump: p("jump"),
                    ripple: p("ripple"),
                    jump_at: p("jump_at"),
                }
            }
            CatalogId::Changepoint => Family::Changepoint {
                g1: [p("g1"), p("g1_slope")],
                g2: [p("g2"), p("g2_slope")],
            },
            CatalogId::WindowSine => {
                if p("omega") <= 0.0 {
                    return Err(Error::Config("omega must be positive".into()));
                }
                Family::WindowSine {
                    b: p("b"),
                    omega: p("omega"),
                }
            }
            CatalogId::SuffwinLinear => {
                if p("a") < 0.0 || p("b") <= 0.0 {
                    return Err(Error::Config("SUFFWIN_LINEAR requires a >= 0 and b > 0".into()));
                }
                Family::SuffwinLinear { a: p("a"), b: p("b") }
            }
            CatalogId::PhaseMod => Family::PhaseMod(periodic(p("square") != 0.0)?),
            CatalogId::FreqMod => Family::FreqMod(periodic(p("square") != 0.0)?),
            CatalogId::Constant => Family::Constant,
            CatalogId::Flat => Family::Flat { level: p("level") },
        };
        let theta_interval = match theta_interval {
            Some(ti) => ti,
            None => default_interval(&family, horizon)?,
        };
        if let Family::JumpShift { jump_at, .. } = family {
            // the jump must stay inside the observed range for every ϑ
            if !(theta_interval.alpha() > jump_at - horizon && theta_interval.beta() < jump_at) {
                return Err(Error::Config(format!(
                    "JUMP_SHIFT needs Θ ⊂ (jump_at − τ, jump_at) = ({}, {})",
                    jump_at - horizon,
                    jump_at
                )));
            }
        }
        if let Family::FreqMod(_) = family {
            if theta_interval.alpha() <= 0.0 {
                return Err(Error::Config("FREQ_MOD needs a positive parameter set".into()));
            }
        }
        let smoothness_order = match &family {
            Family::Cusp { .. }
            | Family::JumpShift { .. }
            | Family::Changepoint { .. }
            | Family::SuffwinLinear { .. } => 0,
            Family::PhaseMod(Periodic::Square { .. }) | Family::FreqMod(Periodic::Square { .. }) => 0,
            _ => 3,
        };
        let mut model = Self {
            id,
            family,
            params: resolved,
            theta_interval,
            horizon,
            lambda_max: 0.0,
            smoothness_order,
        };
        model.lambda_max = model.analytic_bound() * (1.0 + LAMBDA_MAX_MARGIN);
        model.scan_check()?;
        Ok(model)
    }

    /// Catalog model with default parameters and parameter set.
    pub fn default_for(id: CatalogId) -> Result<Self> {
        Self::from_catalog(id, &BTreeMap::new(), None)
    }

    /// Convenience constructor from `(name, value)` pairs.
    pub fn with_params(
        id: CatalogId,
        params: &[(&str, f64)],
        theta_interval: Option<(f64, f64)>,
    ) -> Result<Self> {
        let map = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let ti = theta_interval
            .map(|(a, b)| ParameterInterval::new(a, b))
            .transpose()?;
        Self::from_catalog(id, &map, ti)
    }

    /// The same family on a different parameter set.
    pub fn with_theta_interval(&self, theta_interval: ParameterInterval) -> Result<Self> {
        let explicit: BTreeMap<String, f64> = self.params.clone();
        Self::from_catalog(self.id, &explicit, Some(theta_interval))
    }

    pub fn id(&self) -> CatalogId {
        self.id
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn theta_interval(&self) -> ParameterInterval {
        self.theta_interval
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn smoothness_order(&self) -> u8 {
        self.smoothness_order
    }

    /// Whether ϑ ↦ λ(ϑ, t) is continuous for every t.
    pub fn is_theta_continuous(&self) -> bool {
        !matches!(
            self.family,
            Family::JumpShift { .. }
                | Family::Changepoint { .. }
                | Family::SuffwinLinear { .. }
                | Family::PhaseMod(Periodic::Square { .. })
                | Family::FreqMod(Periodic::Square { .. })
        )
    }

    fn check_args(&self, theta: f64, t: f64) -> Result<()> {
        if !self.theta_interval.contains(theta) {
            return Err(domain(format!(
                "theta = {theta} outside [{}, {}]",
                self.theta_interval.alpha(),
                self.theta_interval.beta()
            )));
        }
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// λ(ϑ, t) with domain checks.
    pub fn evaluate(&self, theta: f64, t: f64) -> Result<f64> {
        self.check_args(theta, t)?;
        Ok(self.value(theta, t, None))
    }

    /// One-sided limit in ϑ of λ(ϑ, t), with domain checks.
    pub fn evaluate_sided(&self, theta: f64, t: f64, side: Side) -> Result<f64> {
        self.check_args(theta, t)?;
        Ok(self.value(theta, t, Some(side)))
    }

    /// Unchecked evaluation; `side` selects a one-sided limit in ϑ.
    pub(crate) fn value(&self, theta: f64, t: f64, side: Option<Side>) -> f64 {
        match self.family {
            Family::RegularExp => (theta * t).exp(),
            Family::NonidentCubic => {
                let c = theta * (theta - 1.0) * (theta - 2.0);
                c * t + (2.0 * theta - 3.0) * t * t + 1.0
            }
            Family::NonidentFixed => {
                let c = theta * (theta - 1.0) * (theta - 2.0);
                c * t + (theta * theta - 3.0 * theta + 3.0) * t * t + 1.0
            }
            Family::NullfiSine => {
                let s = (theta * t).sin();
                theta * s * s + 2.0
            }
            Family::DiscfiKink => {
                let d = theta - 1.0;
                if theta < 1.0 {
                    d * 3.0 * t + 15.0
                } else {
                    d * 5.0 * t * t + 15.0
                }
            }
            Family::Cusp { a, kappa, lambda0 } => a * (t - theta).abs().powf(kappa) + lambda0,
            Family::JumpShift {
                level,
                jump,
                ripple,
                jump_at,
            } => {
                let y = t + theta;
                let mut v = level + ripple * (2.0 * PI * y).sin();
                if ge_increasing(y, jump_at, side) {
                    v += jump;
                }
                v
            }
            Family::Changepoint { g1, g2 } => {
                // t < ϑ  ⇔  ϑ > t
                if gt_increasing(theta, t, side) {
                    poly1(g1, t)
                } else {
                    poly1(g2, t)
                }
            }
            Family::WindowSine { b, omega } => {
                let v = b + theta * (omega * t).sin();
                v * v
            }
            Family::SuffwinLinear { a, b } => {
                // t > ϑ  ⇔  −ϑ > −t, decreasing in ϑ: the sides swap
                let flipped = side.map(|s| match s {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                });
                let on = gt_increasing(-theta, -t, flipped);
                2.0 * a * t + if on { b } else { 0.0 }
            }
            Family::PhaseMod(profile) => profile.value(t + theta, side),
            Family::FreqMod(profile) => profile.value(theta * t, side),
            Family::Constant => theta,
            Family::Flat { level } => level,
        }
    }

    /// For indicator families λ = g₁(t)·1{t < ϑ} + g₂(t)·1{t ≥ ϑ}: the profile
    /// in force below (`below = true`) or above the parameter.
    pub(crate) fn split_profile(&self, below: bool, t: f64) -> Option<f64> {
        match self.family {
            Family::Changepoint { g1, g2 } => Some(poly1(if below { g1 } else { g2 }, t)),
            Family::SuffwinLinear { a, b } => Some(2.0 * a * t + if below { 0.0 } else { b }),
            _ => None,
        }
    }

    /// ln λ(ϑ, t); exact for the exponential family.
    pub(crate) fn log_value(&self, theta: f64, t: f64, side: Option<Side>) -> f64 {
        match self.family {
            Family::RegularExp => theta * t,
            _ => self.value(theta, t, side).ln(),
        }
    }

    /// Analytic θ-derivative of the given order (1..=3).
    ///
    /// At the kink of DISCFI_KINK a side must be supplied; elsewhere `side` is
    /// ignored.
    pub fn theta_derivative(&self, theta: f64, t: f64, order: u8, side: Option<Side>) -> Result<f64> {
        if !(1..=3).contains(&order) {
            return Err(domain(format!("derivative order must be 1..=3, got {order}")));
        }
        if order > self.smoothness_order {
            return Err(Error::Capability(format!(
                "{} provides θ-derivatives up to order {}, requested {order}",
                self.id, self.smoothness_order
            )));
        }
        self.check_args(theta, t)?;
        if matches!(self.family, Family::DiscfiKink) && theta == 1.0 && side.is_none() {
            return Err(domain(
                "DISCFI_KINK is not differentiable at theta = 1; supply a side".to_string(),
            ));
        }
        Ok(self.derivative(theta, t, order, side))
    }

    pub(crate) fn derivative(&self, theta: f64, t: f64, order: u8, side: Option<Side>) -> f64 {
        match self.family {
            Family::RegularExp => t.powi(order as i32) * (theta * t).exp(),
            Family::NonidentCubic | Family::NonidentFixed => {
                let dc = match order {
                    1 => 3.0 * theta * theta - 6.0 * theta + 2.0,
                    2 => 6.0 * theta - 6.0,
                    _ => 6.0,
                };
                let dq = if matches!(self.family, Family::NonidentCubic) {
                    if order == 1 {
                        2.0
                    } else {
                        0.0
                    }
                } else {
                    match order {
                        1 => 2.0 * theta - 3.0,
                        2 => 2.0,
                        _ => 0.0,
                    }
                };
                dc * t + dq * t * t
            }
            Family::NullfiSine => {
                let x = 2.0 * theta * t;
                match order {
                    1 => {
                        let s = (theta * t).sin();
                        s * s + theta * t * x.sin()
                    }
                    2 => 2.0 * t * x.sin() + 2.0 * theta * t * t * x.cos(),
                    _ => 6.0 * t * t * x.cos() - 4.0 * theta * t * t * t * x.sin(),
                }
            }
            Family::DiscfiKink => {
                let left = match side {
                    Some(Side::Left) => true,
                    Some(Side::Right) => false,
                    None => theta < 1.0,
                };
                match (order, left) {
                    (1, true) => 3.0 * t,
                    (1, false) => 5.0 * t * t,
                    _ => 0.0,
                }
            }
            Family::WindowSine { b, omega } => {
                let s = (omega * t).sin();
                match order {
                    1 => 2.0 * s * (b + theta * s),
                    2 => 2.0 * s * s,
                    _ => 0.0,
                }
            }
            Family::PhaseMod(profile) => profile.derivative(t + theta, order),
            Family::FreqMod(profile) => t.powi(order as i32) * profile.derivative(theta * t, order),
            Family::Constant => {
                if order == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Flat { .. } => 0.0,
            Family::Cusp { .. }
            | Family::JumpShift { .. }
            | Family::Changepoint { .. }
            | Family::SuffwinLinear { .. } => f64::NAN,
        }
    }

    /// Points in (0, τ) where t ↦ λ(ϑ, t) is not smooth.
    pub fn time_breakpoints(&self, theta: f64) -> Vec<f64> {
        let tau = self.horizon;
        let mut out = match self.family {
            Family::Cusp { .. } | Family::Changepoint { .. } | Family::SuffwinLinear { .. } => vec![theta],
            Family::JumpShift { jump_at, .. } => vec![jump_at - theta],
            Family::PhaseMod(profile) => profile
                .jumps_in(theta, theta + tau)
                .into_iter()
                .map(|y| y - theta)
                .collect(),
            Family::FreqMod(profile) if theta > 0.0 => profile
                .jumps_in(0.0, theta * tau)
                .into_iter()
                .map(|y| y / theta)
                .collect(),
            _ => Vec::new(),
        };
        out.retain(|&t| t > 0.0 && t < tau);
        out
    }

    /// Parameter breakpoints that do not depend on the data.
    pub fn static_theta_breaks(&self) -> Vec<ThetaBreak> {
        match self.family {
            Family::DiscfiKink if self.theta_interval.contains(1.0) => vec![ThetaBreak {
                theta: 1.0,
                kind: BreakKind::Kink,
            }],
            _ => Vec::new(),
        }
    }

    /// Parameter values at which the contribution of an event at `t` is not
    /// smooth (cusps) or jumps. Only values inside Θ's closure are returned.
    pub fn event_theta_breaks(&self, t: f64, out: &mut Vec<ThetaBreak>) {
        let ti = self.theta_interval;
        let mut push = |theta: f64, kind| {
            if ti.contains(theta) {
                out.push(ThetaBreak { theta, kind });
            }
        };
        match self.family {
            Family::Cusp { .. } => push(t, BreakKind::Kink),
            Family::Changepoint { .. } | Family::SuffwinLinear { .. } => push(t, BreakKind::Jump),
            Family::JumpShift { jump_at, .. } => push(jump_at - t, BreakKind::Jump),
            Family::PhaseMod(profile @ Periodic::Square { .. }) => {
                for y in profile.jumps_in(t + ti.alpha(), t + ti.beta()) {
                    push(y - t, BreakKind::Jump);
                }
            }
            Family::FreqMod(profile @ Periodic::Square { .. }) if t > 0.0 => {
                for y in profile.jumps_in(t * ti.alpha(), t * ti.beta()) {
                    push(y / t, BreakKind::Jump);
                }
            }
            _ => {}
        }
    }

    /// Parameter values at which a time breakpoint crosses the window edge
    /// `edge`; the windowed compensator has a kink there.
    pub fn window_edge_breaks(&self, edge: f64) -> Vec<f64> {
        match self.family {
            Family::Cusp { .. } | Family::Changepoint { .. } | Family::SuffwinLinear { .. } => vec![edge],
            Family::JumpShift { jump_at, .. } => vec![jump_at - edge],
            _ => Vec::new(),
        }
    }

    /// Whether the model declares data-dependent parameter breakpoints.
    pub fn has_event_breaks(&self) -> bool {
        matches!(
            self.family,
            Family::Cusp { .. }
                | Family::Changepoint { .. }
                | Family::SuffwinLinear { .. }
                | Family::JumpShift { .. }
                | Family::PhaseMod(Periodic::Square { .. })
                | Family::FreqMod(Periodic::Square { .. })
        )
    }

    /// Times whose intensity can change while ϑ ranges over Θ's closure.
    /// `None` means every time is affected. Events outside the returned
    /// intervals contribute a ϑ-free constant to the log-likelihood.
    pub fn theta_sensitive_times(&self) -> Option<Vec<(f64, f64)>> {
        let (a, b) = (self.theta_interval.alpha(), self.theta_interval.beta());
        match self.family {
            Family::Changepoint { .. } | Family::SuffwinLinear { .. } => Some(vec![(a, b)]),
            Family::JumpShift {
                ripple, jump_at, ..
            } if ripple == 0.0 => Some(vec![(jump_at - b, jump_at - a)]),
            Family::Flat { .. } => Some(Vec::new()),
            _ => None,
        }
    }

    /// Jump of t ↦ λ(t + ϑ) at the discontinuity: (λ(s*−), λ(s*+)).
    pub fn jump_levels(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::JumpShift {
                level,
                jump,
                ripple,
                jump_at,
            } => {
                let base = level + ripple * (2.0 * PI * jump_at).sin();
                Some((base, base + jump))
            }
            _ => None,
        }
    }

    fn analytic_bound(&self) -> f64 {
        let (a, b) = (self.theta_interval.alpha(), self.theta_interval.beta());
        let tau = self.horizon;
        let abs_max = a.abs().max(b.abs());
        let sup_abs = |f: &dyn Fn(f64) -> f64, crit: &[f64]| -> f64 {
            let mut m = f(a).abs().max(f(b).abs());
            for &c in crit {
                if c > a && c < b {
                    m = m.max(f(c).abs());
                }
            }
            m
        };
        let cubic = |x: f64| x * (x - 1.0) * (x - 2.0);
        let cubic_crit = [1.0 - 1.0 / 3f64.sqrt(), 1.0 + 1.0 / 3f64.sqrt()];
        match self.family {
            Family::RegularExp => (b * tau).exp().max(1.0),
            Family::NonidentCubic => {
                1.0 + sup_abs(&cubic, &cubic_crit) + sup_abs(&|x| 2.0 * x - 3.0, &[])
            }
            Family::NonidentFixed => {
                1.0 + sup_abs(&cubic, &cubic_crit) + sup_abs(&|x| x * x - 3.0 * x + 3.0, &[1.5])
            }
            Family::NullfiSine => abs_max + 2.0,
            Family::DiscfiKink => 15.0 + 5.0 * (b - 1.0).max(0.0),
            Family::Cusp { a: amp, kappa, lambda0 } => {
                let reach = (tau - a).abs().max(b.abs()).max(a.abs()).max((tau - b).abs());
                amp * reach.powf(kappa) + lambda0
            }
            Family::JumpShift {
                level,
                jump,
                ripple,
                ..
            } => level.max(level + jump) + ripple.abs(),
            Family::Changepoint { g1, g2 } => [g1, g2]
                .iter()
                .flat_map(|g| [poly1(*g, 0.0), poly1(*g, tau)])
                .fold(0.0, f64::max),
            Family::WindowSine { b: base, .. } => (base.abs() + abs_max).powi(2),
            Family::SuffwinLinear { a: slope, b: step } => 2.0 * slope * tau + step,
            Family::PhaseMod(profile) | Family::FreqMod(profile) => profile.max(),
            Family::Constant => b.max(0.0),
            Family::Flat { level } => level.max(0.0),
        }
    }

    fn scan_check(&self) -> Result<()> {
        let thetas = self.theta_interval.grid(SCAN_THETA);
        let step = self.horizon / (SCAN_T - 1) as f64;
        for &theta in &thetas {
            for k in 0..SCAN_T {
                let t = (k as f64 * step).min(self.horizon);
                let v = self.value(theta, t, None);
                if !(v >= -1e-12) {
                    return Err(Error::Config(format!(
                        "{} is negative (λ({theta}, {t}) = {v}) on the parameter set [{}, {}]",
                        self.id,
                        self.theta_interval.alpha(),
                        self.theta_interval.beta()
                    )));
                }
                if v > self.lambda_max {
                    return Err(Error::Numerical(format!(
                        "{}: analytic bound {} exceeded at ({theta}, {t}): {v}",
                        self.id, self.lambda_max
                    )));
                }
            }
        }
        Ok(())
    }
}

fn default_interval(family: &Family, horizon: f64) -> Result<ParameterInterval> {
    let (a, b) = match *family {
        Family::RegularExp => (0.0, 1.0),
        // the printed (0, 3) makes the intensity negative below ϑ = 1
        Family::NonidentCubic => (1.0, 3.0),
        Family::NonidentFixed => (0.0, 3.0),
        Family::NullfiSine => (-1.0, 1.0),
        Family::DiscfiKink => (0.0, 2.0),
        Family::Cusp { .. } => (0.25 * horizon, 0.75 * horizon),
        Family::JumpShift { jump_at, .. } => (jump_at - 0.6 * horizon, jump_at - 0.4 * horizon),
        Family::Changepoint { .. } => (0.0, horizon),
        Family::WindowSine { b, .. } => (0.25 * b.abs(), 0.75 * b.abs()),
        Family::SuffwinLinear { .. } => (0.2 * horizon, 0.8 * horizon),
        Family::PhaseMod(p) => (0.0, p.period()),
        Family::FreqMod(_) => (0.5, 1.5),
        Family::Constant => (0.1, 10.0),
        Family::Flat { .. } => (0.0, 1.0),
    };
    ParameterInterval::new(a, b)
}

/// Additive perturbation h(t) given piecewise by polynomials on [lo, hi).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationPiece {
    pub lo: f64,
    pub hi: f64,
    /// h(t) = Σ_k coefficients[k]·t^k on the piece.
    pub coefficients: Vec<f64>,
}

impl ContaminationPiece {
    fn covers(&self, t: f64, horizon: f64) -> bool {
        (t >= self.lo && t < self.hi) || (t == horizon && self.hi == horizon)
    }

    fn value(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn bound(&self) -> f64 {
        let r = self.lo.abs().max(self.hi.abs());
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * r.powi(k as i32))
            .sum()
    }
}

/// The intensity that actually generates the data: a catalog model at ϑ₀,
/// optionally plus a contamination.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueIntensity {
    model: IntensityModel,
    theta0: f64,
    contamination: Vec<ContaminationPiece>,
    lambda_max: f64,
}

impl TrueIntensity {
    pub fn well_specified(model: IntensityModel, theta0: f64) -> Result<Self> {
        Self::contaminated(model, theta0, Vec::new())
    }

    pub fn contaminated(
        model: IntensityModel,
        theta0: f64,
        contamination: Vec<ContaminationPiece>,
    ) -> Result<Self> {
        if !model.theta_interval().contains(theta0) {
            return Err(domain(format!("theta0 = {theta0} outside the parameter set")));
        }
        let tau = model.horizon();
        for piece in &contamination {
            if !(piece.lo >= 0.0 && piece.hi <= tau && piece.lo < piece.hi) {
                return Err(Error::Config(format!(
                    "contamination piece [{}, {}) must lie inside [0, {tau}]",
                    piece.lo, piece.hi
                )));
            }
        }
        let extra: f64 = contamination.iter().map(ContaminationPiece::bound).sum();
        let lambda_max = model.lambda_max() + extra * (1.0 + LAMBDA_MAX_MARGIN);
        let out = Self {
            model,
            theta0,
            contamination,
            lambda_max,
        };
        let n = 4001;
        for k in 0..n {
            let t = tau * k as f64 / (n - 1) as f64;
            let v = out.value(t);
            if !(v >= -1e-12) {
                return Err(Error::Config(format!(
                    "true intensity is negative at t = {t}: {v}"
                )));
            }
        }
        Ok(out)
    }

    pub fn model(&self) -> &IntensityModel {
        &self.model
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn contamination(&self) -> &[ContaminationPiece] {
        &self.contamination
    }

    pub fn is_well_specified(&self) -> bool {
        self.contamination.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.model.horizon()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// λ*(t); no domain check.
    pub fn value(&self, t: f64) -> f64 {
        let tau = self.horizon();
        let h: f64 = self
            .contamination
            .iter()
            .filter(|p| p.covers(t, tau))
            .map(|p| p.value(t))
            .sum();
        self.model.value(self.theta0, t, None) + h
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon()) {
            return Err(domain(format!("t = {t} outside [0, {}]", self.horizon())));
        }
        Ok(self.value(t))
    }

    pub fn time_breakpoints(&self) -> Vec<f64> {
        let tau = self.horizon();
        let mut out = self.model.time_breakpoints(self.theta0);
        for p in &self.contamination {
            out.extend([p.lo, p.hi].into_iter().filter(|&x| x > 0.0 && x < tau));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(id: CatalogId) -> IntensityModel {
        IntensityModel::default_for(id).unwrap()
    }

    #[test]
    fn evaluate_catalog_examples() {
        let m = model(CatalogId::NullfiSine);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(m.evaluate(0.0, t).unwrap(), 2.0);
        }
        let m = model(CatalogId::DiscfiKink);
        for t in [0.0, 0.4, 1.0] {
            assert_eq!(m.evaluate(1.0, t).unwrap(), 15.0);
        }
        let m = model(CatalogId::RegularExp);
        assert!((m.evaluate(0.5, 1.0).unwrap() - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn evaluate_rejects_out_of_domain() {
        let m = model(CatalogId::RegularExp);
        let err = m.evaluate(1.5, 0.5).unwrap_err();
        assert!(matches!(err, Error::Domain(ref s) if s.contains("theta")));
        let err = m.evaluate(0.5, 1.5).unwrap_err();
        assert!(matches!(err, Error::Domain(ref s) if s.contains("t =")));
    }

    #[test]
    fn nullfi_derivatives_at_zero() {
        let m = model(CatalogId::NullfiSine);
        for t in [0.1, 0.5, 0.9] {
            assert_eq!(m.theta_derivative(0.0, t, 1, None).unwrap(), 0.0);
            assert_eq!(m.theta_derivative(0.0, t, 2, None).unwrap(), 0.0);
            assert!((m.theta_derivative(0.0, t, 3, None).unwrap() - 6.0 * t * t).abs() < 1e-14);
        }
    }

    #[test]
    fn discfi_one_sided_derivatives() {
        let m = model(CatalogId::DiscfiKink);
        let t = 0.7;
        assert_eq!(m.theta_derivative(1.0, t, 1, Some(Side::Left)).unwrap(), 3.0 * t);
        assert_eq!(m.theta_derivative(1.0, t, 1, Some(Side::Right)).unwrap(), 5.0 * t * t);
        assert!(matches!(m.theta_derivative(1.0, t, 1, None), Err(Error::Domain(_))));
    }

    #[test]
    fn derivative_capability_error() {
        let m = model(CatalogId::Cusp);
        assert!(matches!(m.theta_derivative(0.5, 0.2, 1, None), Err(Error::Capability(_))));
    }

    #[test]
    fn printed_nonident_interval_is_rejected() {
        // λ(0.5, 1) = 0.375 − 2 + 1 < 0 under the printed formula
        let err = IntensityModel::with_params(CatalogId::NonidentCubic, &[], Some((0.0, 3.0))).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let m = model(CatalogId::NonidentCubic);
        // at ϑ = 1 the printed family gives 1 − t², not t² + 1
        assert!((m.evaluate(1.0, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((m.evaluate(2.0, 0.5).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn nonident_fixed_coincides_at_two_roots() {
        let m = model(CatalogId::NonidentFixed);
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let a = m.evaluate(1.0, t).unwrap();
            let b = m.evaluate(2.0, t).unwrap();
            assert!((a - b).abs() < 1e-14);
            assert!((a - (t * t + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn jump_shift_sides() {
        let m = model(CatalogId::JumpShift);
        // jump_at = 0.5: at ϑ = 0 the jump sits at t = 0.5
        assert_eq!(m.value(0.0, 0.5, None), 3.0);
        assert_eq!(m.value(0.0, 0.5, Some(Side::Right)), 3.0);
        assert_eq!(m.value(0.0, 0.5, Some(Side::Left)), 1.0);
        assert_eq!(m.jump_levels(), Some((1.0, 3.0)));
    }

    #[test]
    fn changepoint_sides() {
        let m = model(CatalogId::Changepoint);
        // λ(ϑ, t) = g1 if t < ϑ else g2
        assert_eq!(m.value(0.4, 0.4, None), 2.0);
        assert_eq!(m.value(0.4, 0.4, Some(Side::Left)), 2.0);
        assert_eq!(m.value(0.4, 0.4, Some(Side::Right)), 1.0);
        assert_eq!(m.value(0.4, 0.3, None), 1.0);
    }

    #[test]
    fn suffwin_sides() {
        let m = model(CatalogId::SuffwinLinear);
        // 2at + b·1{t > ϑ}
        assert_eq!(m.value(0.4, 0.4, None), 0.8);
        assert_eq!(m.value(0.4, 0.4, Some(Side::Left)), 2.8);
        assert_eq!(m.value(0.4, 0.4, Some(Side::Right)), 0.8);
    }

    #[test]
    fn unknown_ids_and_params() {
        assert!("nope".parse::<CatalogId>().is_err());
        assert_eq!("cusp".parse::<CatalogId>().unwrap(), CatalogId::Cusp);
        let err = IntensityModel::with_params(CatalogId::Cusp, &[("b", 1.0)], None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn contamination_adds_piecewise() {
        let m = model(CatalogId::Changepoint);
        let pieces = vec![
            ContaminationPiece { lo: 0.0, hi: 0.5, coefficients: vec![0.25] },
            ContaminationPiece { lo: 0.5, hi: 1.0, coefficients: vec![-0.5] },
        ];
        let truth = TrueIntensity::contaminated(m, 0.5, pieces).unwrap();
        assert_eq!(truth.value(0.2), 1.25);
        assert_eq!(truth.value(0.7), 1.5);
        assert_eq!(truth.value(1.0), 1.5);
        assert_eq!(truth.time_breakpoints(), vec![0.5]);
    }
}
