//! Maximum likelihood, Bayes (posterior mean), moment and two-stage windowed
//! estimators of the scalar parameter.
//!
//! All optimization is grid-first. The likelihood is evaluated on a coarse
//! grid that contains the model's declared parameter breakpoints; the best
//! local maxima are then refined according to the model's structure:
//!
//! - models that jump in ϑ: both one-sided values at every data breakpoint;
//! - cusp-type models: a finer local grid around each candidate;
//! - smooth models: golden-section search on the bracketing cells, followed by
//!   bisection on the sign of the score.
//!
//! Ties are always resolved toward the smaller ϑ.

use serde::{Deserialize, Serialize};

use crate::analysis::QuadratureRule;
use crate::error::{Error, Result};
use crate::intensity::{BreakKind, CatalogId, Family, IntensityModel, Side};
use crate::likelihood::{Events, Surface};
use crate::simulate::Sample;
use crate::windows::{optimal_window, sufficient_window, Window};

/// Prior density on Θ.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub enum Prior {
    #[default]
    Uniform,
    /// Density given on a grid covering Θ, linearly interpolated.
    Grid { thetas: Vec<f64>, density: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PriorRepr {
    Name(String),
    Grid { thetas: Vec<f64>, density: Vec<f64> },
}

impl TryFrom<PriorRepr> for Prior {
    type Error = Error;

    fn try_from(r: PriorRepr) -> Result<Self> {
        match r {
            PriorRepr::Name(s) if s == "uniform" => Ok(Prior::Uniform),
            PriorRepr::Name(s) => Err(Error::Config(format!("unknown prior `{s}`"))),
            PriorRepr::Grid { thetas, density } => Ok(Prior::Grid { thetas, density }),
        }
    }
}

impl From<Prior> for PriorRepr {
    fn from(p: Prior) -> Self {
        match p {
            Prior::Uniform => PriorRepr::Name("uniform".into()),
            Prior::Grid { thetas, density } => PriorRepr::Grid { thetas, density },
        }
    }
}

/// Prior normalized by its maximum and quantized to multiples of 2⁻⁴⁰, so
/// that rescaling the user density leaves the posterior bit-identical.
impl Prior {
    /// Prior weight at ϑ relative to the density's maximum.
    pub fn relative_weight(&self, model: &IntensityModel, theta: f64) -> Result<f64> {
        Ok(PriorEval::new(self, model)?.at(theta))
    }
}

#[derive(Debug, Clone)]
struct PriorEval {
    grid: Option<(Vec<f64>, Vec<f64>)>,
}

impl PriorEval {
    fn new(prior: &Prior, model: &IntensityModel) -> Result<Self> {
        match prior {
            Prior::Uniform => Ok(Self { grid: None }),
            Prior::Grid { thetas, density } => {
                let ti = model.theta_interval();
                if thetas.len() < 2 || thetas.len() != density.len() {
                    return Err(Error::Config(
                        "prior grid needs matching thetas and density with at least two points".into(),
                    ));
                }
                if thetas.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Config("prior thetas must be strictly increasing".into()));
                }
                if thetas[0] > ti.alpha() || thetas[thetas.len() - 1] < ti.beta() {
                    return Err(Error::Config("prior grid must cover the parameter set".into()));
                }
                if density.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
                    return Err(Error::Config("prior density must be positive and finite".into()));
                }
                let top = density.iter().copied().fold(0.0, f64::max);
                let scale = (1u64 << 40) as f64;
                let q = density
                    .iter()
                    .map(|d| ((d / top) * scale).round().max(1.0) / scale)
                    .collect();
                Ok(Self {
                    grid: Some((thetas.clone(), q)),
                })
            }
        }
    }

    fn at(&self, theta: f64) -> f64 {
        match &self.grid {
            None => 1.0,
            Some((xs, ys)) => {
                let k = xs.partition_point(|&x| x < theta).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let w = ((theta - x0) / (x1 - x0)).clamp(0.0, 1.0);
                ys[k - 1] + w * (ys[k] - ys[k - 1])
            }
        }
    }
}

fn default_grid_size() -> usize {
    4001
}

fn default_bayes_panels() -> usize {
    4096
}

fn yes() -> bool {
    true
}

/// Estimator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub prior: Prior,
    #[serde(default = "default_bayes_panels")]
    pub bayes_panels: usize,
    /// Whether the harness computes the Bayes estimator at all.
    #[serde(default = "yes")]
    pub bayes: bool,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            grid_size: default_grid_size(),
            refine: true,
            prior: Prior::Uniform,
            bayes_panels: default_bayes_panels(),
            bayes: true,
        }
    }
}

impl EstimatorSettings {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 3 {
            return Err(Error::Config(format!("grid_size must be >= 3, got {}", self.grid_size)));
        }
        if self.bayes_panels < 2 {
            return Err(Error::Config("bayes_panels must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mle,
    Bayes,
    Moments,
    TwoStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// ln L at the value for likelihood-based methods; the empirical mean
    /// terminal count for the moment estimator.
    pub objective_at_value: f64,
    pub method: Method,
}

/// Log-likelihood drop below the maximum beyond which posterior mass is
/// treated as zero.
const SUPPORT_DROP: f64 = 40.0;
const TOP_CANDIDATES: usize = 3;
const ZOOM_CELLS: usize = 3;
const ZOOM_POINTS: usize = 121;

/// A reusable estimator for one model, window and settings; the compensator
/// cache is shared across all samples it is applied to.
#[derive(Debug)]
pub struct Estimator {
    surface: Surface,
    settings: EstimatorSettings,
    prior: PriorEval,
}

impl Estimator {
    pub fn new(model: &IntensityModel, settings: &EstimatorSettings, window: Option<&Window>) -> Result<Self> {
        settings.validate()?;
        let surface = Surface::new(
            model,
            window,
            settings.grid_size,
            settings.bayes_panels,
            QuadratureRule::default(),
        )?;
        Ok(Self {
            surface,
            settings: settings.clone(),
            prior: PriorEval::new(&settings.prior, model)?,
        })
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    pub fn events(&self, sample: &Sample) -> Result<Events> {
        self.surface.events(sample)
    }

    pub fn mle(&self, sample: &Sample) -> Result<Estimate> {
        self.mle_events(&self.events(sample)?)
    }

    pub fn bayes(&self, sample: &Sample) -> Result<Estimate> {
        self.bayes_events(&self.events(sample)?)
    }

    fn model(&self) -> &IntensityModel {
        self.surface.model()
    }

    fn degenerate_interval(&self) -> bool {
        let ti = self.model().theta_interval();
        ti.width() <= 1e-9 * (1.0 + ti.alpha().abs().max(ti.beta().abs()))
    }

    fn coarse_values(&self, ev: &Events) -> Vec<f64> {
        let sub = self.surface.sub();
        (0..self.surface.coarse().len())
            .map(|k| self.surface.log_likelihood_node(ev, k * sub, None))
            .collect()
    }

    pub fn mle_events(&self, ev: &Events) -> Result<Estimate> {
        let model = self.model().clone();
        let ti = model.theta_interval();
        let surf = &self.surface;
        if self.degenerate_interval() {
            let mid = ti.midpoint();
            return Ok(Estimate {
                value: mid,
                objective_at_value: surf.log_likelihood(ev, mid, None),
                method: Method::Mle,
            });
        }
        let coarse = surf.coarse();
        let vals = self.coarse_values(ev);
        let mut best = Best::new();
        for (&th, &v) in coarse.iter().zip(&vals) {
            best.offer(th, v);
        }
        if best.value == f64::NEG_INFINITY {
            return Err(Error::Estimation("log-likelihood is -inf on the whole grid".into()));
        }
        let ll = |th: f64, side: Option<Side>| surf.log_likelihood(ev, th, side);
        if !model.is_theta_continuous() {
            let breaks = ev.theta_breaks(&model);
            for b in &breaks {
                if b.kind == BreakKind::Jump {
                    best.offer(b.theta, ll(b.theta, Some(Side::Left)));
                    best.offer(b.theta, ll(b.theta, Some(Side::Right)));
                } else {
                    best.offer(b.theta, ll(b.theta, None));
                }
            }
            if self.settings.refine && !jumps_only_between_breaks(&model) {
                // smooth pieces may still peak between breakpoints
                let mut pts: Vec<f64> = coarse.to_vec();
                pts.extend(breaks.iter().map(|b| b.theta));
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                let k = pts.partition_point(|&x| x < best.theta);
                for (a, b) in [(k.saturating_sub(1), k), (k, (k + 1).min(pts.len() - 1))] {
                    if pts[b] > pts[a] {
                        let (x, fx) = golden_max(|th| ll(th, None), pts[a], pts[b]);
                        best.offer_strict(x, fx);
                    }
                }
            }
        } else {
            let candidates = top_local_maxima(&vals, TOP_CANDIDATES);
            let smooth = model.smoothness_order() >= 1;
            let mut winner_cell = None;
            for &c in &candidates {
                let lo = c.saturating_sub(1);
                let hi = (c + 1).min(coarse.len() - 1);
                if model.has_event_breaks() {
                    let zlo = coarse[c.saturating_sub(ZOOM_CELLS)];
                    let zhi = coarse[(c + ZOOM_CELLS).min(coarse.len() - 1)];
                    let step = (zhi - zlo) / (ZOOM_POINTS - 1) as f64;
                    for j in 0..ZOOM_POINTS {
                        let th = if j + 1 == ZOOM_POINTS { zhi } else { zlo + j as f64 * step };
                        best.offer(th, ll(th, None));
                    }
                    for b in ev.theta_breaks(&model) {
                        if b.theta >= zlo && b.theta <= zhi {
                            best.offer(b.theta, ll(b.theta, None));
                        }
                    }
                } else if self.settings.refine && smooth {
                    let before = best.theta;
                    let (x, fx) = golden_max(|th| ll(th, None), coarse[lo], coarse[hi]);
                    best.offer_strict(x, fx);
                    if best.theta != before || coarse[c] == best.theta {
                        winner_cell = Some((coarse[lo], coarse[hi]));
                    }
                }
            }
            if let Some((a, b)) = winner_cell {
                if let Some(root) = self.score_root(ev, a, b) {
                    let v = ll(root, None);
                    let tol = 1e-10 * (1.0 + best.value.abs());
                    if v >= best.value - tol {
                        best.theta = root;
                        best.value = v.max(best.value);
                    }
                }
            }
        }
        Ok(Estimate {
            value: ti.clamp(best.theta),
            objective_at_value: best.value,
            method: Method::Mle,
        })
    }

    /// Bisection on the score inside [a, b] when it changes sign from + to −.
    fn score_root(&self, ev: &Events, a: f64, b: f64) -> Option<f64> {
        let surf = &self.surface;
        let (mut lo, mut hi) = (a, b);
        let (fa, fb) = (surf.score(ev, lo), surf.score(ev, hi));
        if !(fa > 0.0 && fb < 0.0) {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let s = surf.score(ev, mid);
            if s > 0.0 {
                lo = mid;
            } else if s < 0.0 {
                hi = mid;
            } else {
                return Some(mid);
            }
        }
        Some(0.5 * (lo + hi))
    }

    pub fn bayes_events(&self, ev: &Events) -> Result<Estimate> {
        let model = self.model().clone();
        let ti = model.theta_interval();
        let surf = &self.surface;
        if self.degenerate_interval() {
            let mid = ti.midpoint();
            return Ok(Estimate {
                value: mid,
                objective_at_value: surf.log_likelihood(ev, mid, None),
                method: Method::Bayes,
            });
        }
        let coarse = surf.coarse();
        let sub = surf.sub();
        let fine = surf.fine();
        let vals = self.coarse_values(ev);
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(Error::Estimation("log-likelihood is -inf on the whole grid".into()));
        }
        let cells = coarse.len() - 1;
        let mut keep = vec![false; cells];
        for k in 0..cells {
            if vals[k].max(vals[k + 1]) > top - SUPPORT_DROP {
                keep[k.saturating_sub(1)] = true;
                keep[k] = true;
                if k + 1 < cells {
                    keep[k + 1] = true;
                }
            }
        }
        // contiguous runs of kept cells
        let mut runs = Vec::new();
        let mut k = 0;
        while k < cells {
            if keep[k] {
                let start = k;
                while k < cells && keep[k] {
                    k += 1;
                }
                runs.push((start * sub, k * sub));
            } else {
                k += 1;
            }
        }
        // (theta, log-likelihood, quadrature weight) for each term
        let mut terms: Vec<(f64, f64, f64)> = Vec::new();
        if model.is_theta_continuous() {
            // composite Simpson per coarse cell; shared end nodes appear twice
            for &(a, b) in &runs {
                for c in (a..b).step_by(sub) {
                    let h = (fine[c + sub] - fine[c]) / sub as f64;
                    for j in 0..=sub {
                        let w = if j == 0 || j == sub {
                            1.0
                        } else if j % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        let i = c + j;
                        terms.push((fine[i], surf.log_likelihood_node(ev, i, None), w * h / 3.0));
                    }
                }
            }
        } else {
            let breaks: Vec<f64> = ev
                .theta_breaks(&model)
                .into_iter()
                .filter(|b| b.kind == BreakKind::Jump)
                .map(|b| b.theta)
                .collect();
            for &(a, b) in &runs {
                let (lo, hi) = (fine[a], fine[b]);
                let mut nodes: Vec<(f64, bool)> = (a..=b).map(|i| (fine[i], false)).collect();
                let j0 = breaks.partition_point(|&x| x < lo);
                for &x in breaks[j0..].iter().take_while(|&&x| x <= hi) {
                    nodes.push((x, true));
                }
                nodes.sort_by(|p, q| p.0.total_cmp(&q.0).then(q.1.cmp(&p.1)));
                nodes.dedup_by(|p, q| p.0 == q.0);
                let sided: Vec<(f64, f64, f64)> = nodes
                    .iter()
                    .map(|&(x, jump)| {
                        if jump {
                            (x, surf.log_likelihood(ev, x, Some(Side::Left)), surf.log_likelihood(ev, x, Some(Side::Right)))
                        } else {
                            let v = surf.log_likelihood(ev, x, None);
                            (x, v, v)
                        }
                    })
                    .collect();
                for w in sided.windows(2) {
                    let (x0, _, r0) = w[0];
                    let (x1, l1, _) = w[1];
                    let h = x1 - x0;
                    let xm = 0.5 * (x0 + x1);
                    let vm = surf.log_likelihood(ev, xm, None);
                    terms.push((x0, r0, h / 6.0));
                    terms.push((xm, vm, 4.0 * h / 6.0));
                    terms.push((x1, l1, h / 6.0));
                }
            }
        }
        let peak = terms
            .iter()
            .map(|t| t.1)
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return Err(Error::Estimation("posterior support is empty".into()));
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &(th, lv, w) in &terms {
            let p = w * self.prior.at(th) * (lv - peak).exp();
            num += th * p;
            den += p;
        }
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::Estimation(format!(
                "posterior normalizer underflowed (max log-likelihood {peak})"
            )));
        }
        let value = ti.clamp(num / den);
        Ok(Estimate {
            value,
            objective_at_value: surf.log_likelihood(ev, value, None),
            method: Method::Bayes,
        })
    }
}

/// Between data breakpoints the event term is constant and the compensator
/// is monotone, so the supremum sits at a breakpoint or an end.
fn jumps_only_between_breaks(model: &IntensityModel) -> bool {
    match model.family() {
        Family::JumpShift { ripple, .. } => *ripple == 0.0,
        Family::Changepoint { .. } | Family::SuffwinLinear { .. } => true,
        Family::PhaseMod(_) | Family::FreqMod(_) => false,
        _ => false,
    }
}

/// Running maximum with smallest-ϑ tie-breaking.
struct Best {
    theta: f64,
    value: f64,
}

impl Best {
    fn new() -> Self {
        Self {
            theta: f64::INFINITY,
            value: f64::NEG_INFINITY,
        }
    }

    fn offer(&mut self, theta: f64, value: f64) {
        if value.is_nan() {
            return;
        }
        if value > self.value || (value == self.value && theta < self.theta) {
            self.theta = theta;
            self.value = value;
        }
    }

    /// Accepts only an improvement above rounding noise.
    fn offer_strict(&mut self, theta: f64, value: f64) {
        if value > self.value + 1e-12 * (1.0 + self.value.abs()) {
            self.theta = theta;
            self.value = value;
        }
    }
}

/// Indices of local maxima (plateau-aware, endpoints included) ordered by
/// value, descending; ties by index.
fn top_local_maxima(vals: &[f64], count: usize) -> Vec<usize> {
    let n = vals.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&k| {
            let v = vals[k];
            v.is_finite() && (k == 0 || v >= vals[k - 1]) && (k + 1 == n || v >= vals[k + 1])
        })
        .collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

/// Golden-section maximization; returns the best point evaluated.
fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (x, fx) = crate::analysis::golden_min(|th| -f(th), lo, hi, 1e-13);
    (x, -fx)
}

/// Maximum likelihood estimate (one-off; see [`Estimator`] for reuse).
pub fn mle(model: &IntensityModel, sample: &Sample, settings: &EstimatorSettings, window: Option<&Window>) -> Result<Estimate> {
    Estimator::new(model, settings, window)?.mle(sample)
}

/// Posterior mean under the configured prior (one-off).
pub fn bayes(model: &IntensityModel, sample: &Sample, settings: &EstimatorSettings, window: Option<&Window>) -> Result<Estimate> {
    Estimator::new(model, settings, window)?.bayes(sample)
}

/// ϑ̄ = τ − (Λ̂(τ) − aτ²)/b from the mean terminal count Λ̂(τ), clamped to Θ.
pub fn moments_from_count(model: &IntensityModel, mean_count: f64) -> Result<Estimate> {
    let Family::SuffwinLinear { a, b } = *model.family() else {
        return Err(Error::Precondition(format!(
            "the moment estimator is defined for {} only, got {}",
            CatalogId::SuffwinLinear,
            model.id()
        )));
    };
    let tau = model.horizon();
    let raw = tau - (mean_count - a * tau * tau) / b;
    Ok(Estimate {
        value: model.theta_interval().clamp(raw),
        objective_at_value: mean_count,
        method: Method::Moments,
    })
}

/// Moment estimator from the empirical mean terminal count.
pub fn moments_preliminary(model: &IntensityModel, sample: &Sample) -> Result<Estimate> {
    let mean_count = sample.total_events() as f64 / sample.n() as f64;
    moments_from_count(model, mean_count)
}

/// Which window the second stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "stage")]
pub enum Stage {
    /// B* at the preliminary value with the given measure.
    OptimalWindow { mu_star: f64 },
    /// [ϑ̄ − n^{−1/8}, ϑ̄ + n^{−1/8}] ∩ [0, τ].
    SufficientWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageEstimate {
    pub preliminary: Estimate,
    pub window: Window,
    pub estimate: Estimate,
}

/// Size of the preliminary sub-sample, ⌊√n⌋.
pub fn preliminary_size(n: usize) -> usize {
    n.isqrt()
}

/// First-stage estimate from the preliminary trajectories.
pub fn preliminary_estimate(model: &IntensityModel, first: &Sample, settings: &EstimatorSettings) -> Result<Estimate> {
    if model.id() == CatalogId::SuffwinLinear {
        moments_preliminary(model, first)
    } else {
        mle(model, first, settings, None)
    }
}

/// The second-stage window for a preliminary value; `n` is the full sample size.
pub fn stage_window(model: &IntensityModel, preliminary: &Estimate, stage: Stage, n: usize) -> Result<Window> {
    let window = match stage {
        Stage::OptimalWindow { mu_star } => optimal_window(model, preliminary.value, mu_star)?,
        Stage::SufficientWindow => sufficient_window(preliminary, n, model.horizon())?,
    };
    if window.is_empty() {
        return Err(Error::Estimation("second-stage window is empty".into()));
    }
    Ok(window)
}

/// Two-stage procedure: a preliminary estimate from the first ⌊√n⌋
/// trajectories selects a window, and the final estimate (`final_method`:
/// MLE or Bayes) uses the remaining trajectories restricted to it.
pub fn two_stage_with(
    model: &IntensityModel,
    sample: &Sample,
    settings: &EstimatorSettings,
    stage: Stage,
    final_method: Method,
) -> Result<TwoStageEstimate> {
    let n = sample.n();
    if n < 9 {
        return Err(Error::Precondition(format!("two-stage estimation needs n >= 9, got {n}")));
    }
    let k = preliminary_size(n);
    let preliminary = preliminary_estimate(model, &sample.subsample(0..k), settings)?;
    let window = stage_window(model, &preliminary, stage, n)?;
    let rest = sample.subsample(k..n);
    let mut estimate = match final_method {
        Method::Bayes => bayes(model, &rest, settings, Some(&window))?,
        _ => mle(model, &rest, settings, Some(&window))?,
    };
    estimate.method = Method::TwoStage;
    Ok(TwoStageEstimate {
        preliminary,
        window,
        estimate,
    })
}

/// Two-stage procedure with a final MLE.
pub fn two_stage(model: &IntensityModel, sample: &Sample, settings: &EstimatorSettings, stage: Stage) -> Result<TwoStageEstimate> {
    two_stage_with(model, sample, settings, stage, Method::Mle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_sample, ModelAt, Trajectory};
    use crate::RngStream;

    fn constant() -> IntensityModel {
        IntensityModel::with_params(CatalogId::Constant, &[], Some((0.1, 10.0))).unwrap()
    }

    fn settings(grid: usize) -> EstimatorSettings {
        EstimatorSettings {
            grid_size: grid,
            bayes_panels: 800,
            ..Default::default()
        }
    }

    #[test]
    fn constant_mle_is_mean_count() {
        let m = constant();
        let est = Estimator::new(&m, &settings(401), None).unwrap();
        for seed in 0..10 {
            let s = simulate_sample(&ModelAt { model: &m, theta: 2.0 }, 15, RngStream::new(seed, 0)).unwrap();
            let want = s.total_events() as f64 / s.n() as f64;
            let got = est.mle(&s).unwrap().value;
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn flat_model_ties_and_posterior() {
        let m = IntensityModel::with_params(CatalogId::Flat, &[("level", 2.0)], Some((0.2, 0.8))).unwrap();
        let s = simulate_sample(&ModelAt { model: &m, theta: 0.5 }, 4, RngStream::new(1, 0)).unwrap();
        let e = mle(&m, &s, &settings(101), None).unwrap();
        assert_eq!(e.value, 0.2);
        let b = bayes(&m, &s, &settings(101), None).unwrap();
        assert!((b.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_interval_returns_midpoint() {
        let m = IntensityModel::with_params(CatalogId::Constant, &[], Some((1.0, 1.0 + 1e-12))).unwrap();
        let s = Sample::new(vec![Trajectory::new(vec![0.3], 1.0).unwrap()], 1.0).unwrap();
        let e = mle(&m, &s, &settings(11), None).unwrap();
        assert_eq!(e.value, m.theta_interval().midpoint());
    }

    #[test]
    fn prior_rescaling_is_bit_exact() {
        let m = constant();
        let s = simulate_sample(&ModelAt { model: &m, theta: 2.0 }, 3, RngStream::new(4, 0)).unwrap();
        let thetas: Vec<f64> = (0..=10).map(|k| 0.1 + 0.99 * k as f64).collect();
        let density: Vec<f64> = thetas.iter().map(|t| 1.0 + 0.1 * t).collect();
        let mut a = settings(201);
        a.prior = Prior::Grid { thetas: thetas.clone(), density: density.clone() };
        let mut b = a.clone();
        b.prior = Prior::Grid { thetas, density: density.iter().map(|d| d * 37.5).collect() };
        let va = bayes(&m, &s, &a, None).unwrap().value;
        let vb = bayes(&m, &s, &b, None).unwrap().value;
        assert_eq!(va.to_bits(), vb.to_bits());
    }

    #[test]
    fn moments_examples() {
        let m = IntensityModel::default_for(CatalogId::SuffwinLinear).unwrap();
        // Λ(τ) = aτ² + b(τ − ϑ₀) with a = 1, b = 2, ϑ₀ = 0.5
        let e = moments_from_count(&m, 1.0 + 2.0 * 0.5).unwrap();
        assert_eq!(e.value, 0.5);
        let e = moments_from_count(&m, 100.0).unwrap();
        assert_eq!(e.value, m.theta_interval().alpha());
        assert!(moments_from_count(&constant(), 1.0).is_err());
    }

    #[test]
    fn changepoint_mle_uses_one_sided_values() {
        let m = IntensityModel::default_for(CatalogId::Changepoint).unwrap();
        let s = simulate_sample(&ModelAt { model: &m, theta: 0.5 }, 200, RngStream::new(8, 0)).unwrap();
        let e = mle(&m, &s, &settings(101), None).unwrap();
        let curve = crate::likelihood::likelihood_curve(&m, &s, 101, None).unwrap();
        let (th, v) = curve.argmax().unwrap();
        assert_eq!(e.value, th);
        assert!((e.objective_at_value - v).abs() < 1e-8 * (1.0 + v.abs()));
    }

    #[test]
    fn prior_spec_parses_from_toml_shapes() {
        let s: EstimatorSettings = toml::from_str("prior = \"uniform\"").unwrap_or_default();
        assert_eq!(s.prior, Prior::Uniform);
    }
}
